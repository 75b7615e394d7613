"""Target gates: identity, Pauli Z/X, Fourier and Haar-random unitaries.

Matrices use row = output logical mode, column = input logical mode.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigurationError, DimensionError
from .linalg import as_unitary, dft_matrix, sample_haar_unitary

KINDS = ("identity", "z", "x", "fourier", "random")


@dataclass(frozen=True)
class GateKind:
    name: str
    seed: Optional[int] = None

    def __post_init__(self):
        if self.name not in KINDS:
            raise ConfigurationError(f"unknown gate kind {self.name!r}")
        if self.name == "random" and self.seed is None:
            raise ConfigurationError("random gate requires a seed")
        if self.name != "random" and self.seed is not None:
            raise ConfigurationError(f"gate {self.name!r} takes no seed")

    @classmethod
    def parse(cls, text):
        """Parse ``identity``, ``z``, ``x``, ``fourier`` or ``random:<seed>``."""
        text = text.strip().lower()
        if text.startswith("random:"):
            try:
                seed = int(text.split(":", 1)[1])
            except ValueError:
                raise ConfigurationError(f"bad random gate seed in {text!r}") from None
            if seed < 0:
                raise ConfigurationError("gate seed must be non-negative")
            return cls("random", seed)
        return cls(text)

    def __str__(self):
        return f"random:{self.seed}" if self.name == "random" else self.name


def build_gate(kind, d):
    if isinstance(kind, str):
        kind = GateKind.parse(kind)
    if int(d) != d or d < 1:
        raise DimensionError(f"gate dimension must be a positive integer, got {d!r}")
    d = int(d)
    a = np.arange(d)
    if kind.name == "identity":
        return as_unitary(np.eye(d))
    if kind.name == "z":
        return as_unitary(np.diag(np.exp(2j * np.pi * a / d)))
    if kind.name == "x":
        m = np.zeros((d, d), dtype=complex)
        m[(a + 1) % d, a] = 1.0
        return as_unitary(m)
    if kind.name == "fourier":
        return dft_matrix(d)
    return sample_haar_unitary(d, kind.seed)
