"""Layered device model: mode mixers interleaved with phase planes.

The total transfer matrix is ``U[L] P[L-1] U[L-1] ... P[0] U[0]`` (0-based),
i.e. the first mixer acts first on the input field and the last mixer is the
trailing one after the final phase plane. A ``d``-dimensional logical circuit
is read out through a pair of port embeddings.
"""
import json
import struct
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import ConfigurationError, DimensionError
from .linalg import (as_matrix, as_unitary, dft_matrix, phase_plane,
                     rng_from_seed, sample_haar_unitary)

MIXER_KINDS = ("haar", "haar-shared", "haar-per-layer", "dft", "identity")
MAGIC = b"CMPLXMAT"


@dataclass(frozen=True)
class PortEmbedding:
    """``d`` orthonormal mode shapes living in an ``n``-mode ambient space.

    By default mode ``a`` is the canonical basis vector at ``indices[a]``.
    Arbitrary orthonormal ``modes`` (an ``n x d`` matrix) may be supplied
    instead, e.g. to represent a rotated logical basis.
    """
    n: int
    indices: tuple
    modes: np.ndarray = field(repr=False, compare=False, default=None)

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        object.__setattr__(self, "indices", idx)
        if len(idx) < 1 or len(idx) > self.n:
            raise ConfigurationError(f"need 1 <= d <= n ports, got d={len(idx)}, n={self.n}")
        if len(set(idx)) != len(idx):
            raise ConfigurationError(f"port indices must be distinct: {idx}")
        if min(idx) < 0 or max(idx) >= self.n:
            raise ConfigurationError(f"port indices out of range 0..{self.n - 1}: {idx}")
        if self.modes is None:
            m = np.zeros((self.n, len(idx)), dtype=complex)
            m[list(idx), np.arange(len(idx))] = 1.0
        else:
            m = np.array(self.modes, dtype=complex)
            if m.shape != (self.n, len(idx)):
                raise DimensionError(f"mode matrix must be {(self.n, len(idx))}, got {m.shape}")
            if np.max(np.abs(m.conj().T @ m - np.eye(len(idx)))) > 1e-10:
                raise ConfigurationError("mode shapes are not orthonormal")
        m.setflags(write=False)
        object.__setattr__(self, "modes", m)

    @property
    def d(self):
        return len(self.indices)

    @classmethod
    def first(cls, n, d):
        return cls(n, tuple(range(d)))


def random_ports(n, d, seed):
    """``d`` distinct port indices drawn uniformly without replacement."""
    if d > n or d < 1:
        raise ConfigurationError(f"cannot choose d={d} ports out of n={n}")
    rng = rng_from_seed(seed)
    return PortEmbedding(n, tuple(rng.choice(n, size=d, replace=False).tolist()))


@dataclass(frozen=True)
class LayeredCircuit:
    mixers: tuple
    planes: tuple
    inputs: PortEmbedding
    outputs: PortEmbedding
    # provenance, used for serialisation only
    mixer_kind: Optional[str] = None
    mixer_seed: Optional[int] = None
    trailing_mixer: bool = True

    def __post_init__(self):
        mixers = tuple(as_unitary(u) for u in self.mixers)
        planes = tuple(phase_plane(p) for p in self.planes)
        if len(mixers) != len(planes) + 1:
            raise ConfigurationError(
                f"need len(mixers) == len(planes) + 1, got {len(mixers)} and {len(planes)}")
        n = mixers[0].shape[0]
        if any(u.shape != (n, n) for u in mixers) or any(p.shape != (n,) for p in planes):
            raise DimensionError("all mixers and planes must share the ambient dimension")
        if self.inputs.n != n or self.outputs.n != n:
            raise DimensionError("port embeddings do not match the ambient dimension")
        if self.inputs.d != self.outputs.d:
            raise ConfigurationError("input and output port lists differ in length")
        object.__setattr__(self, "mixers", mixers)
        object.__setattr__(self, "planes", planes)

    @property
    def n(self):
        return self.mixers[0].shape[0]

    @property
    def L(self):
        return len(self.planes)

    @property
    def d(self):
        return self.inputs.d

    @property
    def input_ports(self):
        return list(self.inputs.indices)

    @property
    def output_ports(self):
        return list(self.outputs.indices)

    def with_planes(self, planes):
        return replace(self, planes=tuple(planes))

    def phases(self):
        return np.array(self.planes).reshape(self.L, self.n)


def make_mixers(n, L, kind, seed=None, trailing_mixer=True, matrix=None):
    """The ``L + 1`` mixers for a given mixer policy.

    ``haar``/``haar-shared`` reuse one Haar unitary for every layer,
    ``haar-per-layer`` draws an independent one per layer from seeds spawned
    off ``seed``. With ``trailing_mixer=False`` the last mixer is the identity.
    """
    if kind not in MIXER_KINDS and kind != "matrix":
        raise ConfigurationError(f"unknown mixer kind {kind!r}")
    if kind in ("haar", "haar-shared"):
        if seed is None:
            raise ConfigurationError("haar mixers need a seed")
        mixers = [sample_haar_unitary(n, seed)] * (L + 1)
    elif kind == "haar-per-layer":
        if seed is None:
            raise ConfigurationError("haar mixers need a seed")
        seeds = np.random.SeedSequence(int(seed)).generate_state(L + 1, dtype=np.uint64)
        mixers = [sample_haar_unitary(n, int(s)) for s in seeds]
    elif kind == "dft":
        mixers = [dft_matrix(n)] * (L + 1)
    elif kind == "identity":
        mixers = [as_unitary(np.eye(n))] * (L + 1)
    else:
        mixers = [as_unitary(matrix)] * (L + 1)
    if not trailing_mixer:
        mixers[-1] = as_unitary(np.eye(n))
    return mixers


def build_circuit(n, L, inputs, outputs, mixer_kind="haar", mixer_seed=None,
                  trailing_mixer=True, phases=None, matrix=None):
    if L < 1:
        raise ConfigurationError(f"circuit depth must be >= 1, got {L}")
    if not isinstance(inputs, PortEmbedding):
        inputs = PortEmbedding(n, tuple(inputs))
    if not isinstance(outputs, PortEmbedding):
        outputs = PortEmbedding(n, tuple(outputs))
    mixers = make_mixers(n, L, mixer_kind, mixer_seed, trailing_mixer, matrix)
    if phases is None:
        phases = np.zeros((L, n))
    return LayeredCircuit(tuple(mixers), tuple(phases), inputs, outputs,
                          mixer_kind=mixer_kind, mixer_seed=mixer_seed,
                          trailing_mixer=trailing_mixer)


def total_transfer(c):
    t = c.mixers[0]
    for plane, u in zip(c.planes, c.mixers[1:]):
        t = u @ (np.exp(1j * plane)[:, None] * t)
    return as_unitary(t, tol=1e-9)


def effective_transform(c):
    """``d x d`` matrix with entry ``(b, a) = <out_b| T |in_a>``; not unitary in general."""
    return c.outputs.modes.conj().T @ propagate(c, c.inputs.modes)


def propagate(c, fields):
    """Send the columns of ``fields`` through the whole device."""
    psi = c.mixers[0] @ fields
    for plane, u in zip(c.planes, c.mixers[1:]):
        psi = u @ (np.exp(1j * plane)[:, None] * psi)
    return psi


# -- binary matrix files ---------------------------------------------------

def write_matrix(path, m):
    """Write ``CMPLXMAT`` + u64 rows + u64 cols + row-major complex128 (LE)."""
    m = as_matrix(m)
    rows, cols = m.shape
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<QQ", rows, cols))
        fh.write(np.ascontiguousarray(m, dtype="<c16").tobytes())


def matrix_bytes(m):
    m = as_matrix(m)
    return MAGIC + struct.pack("<QQ", *m.shape) + np.ascontiguousarray(m, dtype="<c16").tobytes()


def read_matrix(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:8] != MAGIC:
        raise ConfigurationError(f"{path}: not a CMPLXMAT file")
    rows, cols = struct.unpack("<QQ", raw[8:24])
    body = raw[24:]
    if len(body) != rows * cols * 16:
        raise ConfigurationError(f"{path}: expected {rows * cols * 16} payload bytes, got {len(body)}")
    return np.frombuffer(body, dtype="<c16").reshape(rows, cols).astype(complex)


# -- JSON -----------------------------------------------------------------

def circuit_to_dict(c):
    if c.mixer_kind is None:
        raise ConfigurationError("circuit has no mixer provenance and cannot be serialised")
    return {
        "n": c.n,
        "L": c.L,
        "mixer_kind": c.mixer_kind,
        "mixer_seed": c.mixer_seed,
        "trailing_mixer": c.trailing_mixer,
        "input_ports": c.input_ports,
        "output_ports": c.output_ports,
        "phases": [[float(x) for x in p] for p in c.planes],
    }


def circuit_from_dict(obj):
    expected = {"n", "L", "mixer_kind", "mixer_seed", "trailing_mixer",
                "input_ports", "output_ports", "phases"}
    unknown = set(obj) - expected - {"header"}
    if unknown:
        raise ConfigurationError(f"unknown circuit keys: {sorted(unknown)}")
    kind = obj["mixer_kind"]
    matrix = None
    if kind.startswith("file:"):
        matrix = read_matrix(kind[5:])
        build_kind = "matrix"
    else:
        build_kind = kind
    c = build_circuit(obj["n"], obj["L"], obj["input_ports"], obj["output_ports"],
                      mixer_kind=build_kind, mixer_seed=obj.get("mixer_seed"),
                      trailing_mixer=obj.get("trailing_mixer", True),
                      phases=obj.get("phases"), matrix=matrix)
    return replace(c, mixer_kind=kind)


def circuit_to_json(c, header=None):
    obj = circuit_to_dict(c)
    if header is not None:
        obj = {"header": header, **obj}
    return json.dumps(obj, indent=2, sort_keys=False) + "\n"


def circuit_from_json(text):
    return circuit_from_dict(json.loads(text))
