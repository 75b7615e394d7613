"""Dense complex linear algebra used throughout the package.

Matrices are plain ``numpy`` arrays of dtype ``complex128``. Functions that
return a unitary validate it and hand back a read-only array, so a value that
has been admitted as unitary cannot be mutated afterwards.
"""
import numpy as np

from .errors import DimensionError, NotUnitaryError

UNITARY_TOL = 1e-10


def rng_from_seed(seed):
    """PCG64 generator for a 64-bit seed (``None`` is not accepted)."""
    if seed is None:
        raise ValueError("an explicit seed is required")
    return np.random.Generator(np.random.PCG64(int(seed) & 0xFFFFFFFFFFFFFFFF))


def _check_dim(n):
    if int(n) != n or n < 1:
        raise DimensionError(f"dimension must be a positive integer, got {n!r}")
    return int(n)


def _frozen(m):
    m = np.array(m, dtype=complex)
    m.setflags(write=False)
    return m


def unitarity_error(m):
    """Max-norm of ``M^dagger M - I``."""
    m = np.asarray(m)
    return float(np.max(np.abs(m.conj().T @ m - np.eye(m.shape[1]))))


def is_unitary(m, tol=UNITARY_TOL):
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        return False
    if not np.all(np.isfinite(m)):
        return False
    return unitarity_error(m) <= tol


def as_unitary(m, tol=UNITARY_TOL):
    """Admit ``m`` as a unitary matrix or raise :class:`NotUnitaryError`."""
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
        raise DimensionError(f"unitary must be square and non-empty, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NotUnitaryError("matrix has non-finite entries")
    err = unitarity_error(m)
    if err > tol:
        raise NotUnitaryError(f"||U^dag U - I||_max = {err:.3e} exceeds {tol:.0e}")
    return _frozen(m)


def as_matrix(m):
    """Validate a finite, non-empty 2-D complex matrix."""
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise DimensionError(f"expected a non-empty 2-D matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise DimensionError("matrix has non-finite entries")
    return m


def sample_haar_unitary(n, seed):
    """Draw an ``n x n`` unitary from the Haar measure.

    QR of a complex Ginibre matrix, with each column of Q rescaled by the
    phase of the matching diagonal entry of R so the factorisation is unique.
    """
    n = _check_dim(n)
    rng = rng_from_seed(seed)
    z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    diag = np.diag(r)
    ph = diag / np.abs(diag)
    return as_unitary(q * ph)


def dft_matrix(n):
    """Unitary DFT with entry ``(a, b) = exp(2 pi i a b / n) / sqrt(n)``."""
    n = _check_dim(n)
    k = np.arange(n)
    # reduce a*b mod n before exponentiating for accuracy at large n
    m = np.exp(2j * np.pi * (np.outer(k, k) % n) / n) / np.sqrt(n)
    return as_unitary(m)


def phase_plane(theta):
    """Validated, read-only real phase vector; angles are wrapped to (-pi, pi]."""
    theta = np.asarray(theta, dtype=float)
    if theta.ndim != 1 or theta.size < 1:
        raise DimensionError(f"phase plane must be a non-empty vector, got shape {theta.shape}")
    if not np.all(np.isfinite(theta)):
        raise DimensionError("phase plane has non-finite entries")
    wrapped = np.angle(np.exp(1j * theta))
    # np.angle maps onto [-pi, pi]; fold -pi onto +pi
    wrapped = np.where(wrapped <= -np.pi, np.pi, wrapped)
    # values already in range pass through bit-exactly (stable JSON round trips)
    wrapped = np.where((theta > -np.pi) & (theta <= np.pi), theta, wrapped)
    wrapped.setflags(write=False)
    return wrapped


def apply_phase_plane(theta, field):
    theta = np.asarray(theta, dtype=float)
    field = np.asarray(field, dtype=complex)
    if theta.shape[0] != field.shape[0]:
        raise DimensionError(f"plane has {theta.shape[0]} elements, field has {field.shape[0]}")
    ph = np.exp(1j * theta)
    if field.ndim == 2:
        return ph[:, None] * field
    return ph * field


def matrix_product_chain(ms):
    """Product ``ms[0] @ ms[1] @ ...`` in the written order."""
    ms = [as_matrix(m) for m in ms]
    if not ms:
        raise DimensionError("empty matrix chain")
    for a, b in zip(ms, ms[1:]):
        if a.shape[1] != b.shape[0]:
            raise DimensionError(f"cannot multiply {a.shape} by {b.shape}")
    out = ms[0]
    for m in ms[1:]:
        out = out @ m
    return out


def hermitian_sqrt(m, clip=1e-10):
    """Square root of a Hermitian PSD matrix via eigendecomposition.

    Eigenvalues in ``[-clip, 0)`` are set to zero; anything more negative is
    reported as a ``ValueError``. Eigenvalues at rounding level relative to
    the largest are zeroed too, otherwise their square roots (~1e-8) leak into
    fidelities of pure states.
    """
    m = np.asarray(m, dtype=complex)
    m = 0.5 * (m + m.conj().T)
    w, v = np.linalg.eigh(m)
    if w.min() < -clip:
        raise ValueError(f"matrix is not positive semidefinite (min eigenvalue {w.min():.3e})")
    w = np.where(w <= 1e-14 * max(w.max(), 0.0), 0.0, w)
    return (v * np.sqrt(w)) @ v.conj().T
