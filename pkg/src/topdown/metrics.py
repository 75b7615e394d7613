"""Figures of merit: state fidelity, channel fidelity, success probability."""
import numpy as np

from .errors import DimensionError, InvalidStateError, UndefinedFidelityError
from .linalg import hermitian_sqrt

STATE_TOL = 1e-10


def as_density(rho, tol=STATE_TOL):
    """Validate a density matrix (Hermitian, PSD, unit trace) and return it."""
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1] or rho.shape[0] < 1:
        raise InvalidStateError(f"density matrix must be square, got shape {rho.shape}")
    if np.max(np.abs(rho - rho.conj().T)) > tol:
        raise InvalidStateError("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1) > tol:
        raise InvalidStateError(f"density matrix trace is {np.trace(rho).real:.12g}, expected 1")
    w = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))
    if w.min() < -tol:
        raise InvalidStateError(f"density matrix has negative eigenvalue {w.min():.3e}")
    return rho


def uhlmann_fidelity(rho, sigma):
    """``(Tr sqrt(sqrt(rho) sigma sqrt(rho)))**2``."""
    rho = as_density(rho)
    sigma = as_density(sigma)
    if rho.shape != sigma.shape:
        raise DimensionError(f"state dimensions differ: {rho.shape} vs {sigma.shape}")
    # Tr sqrt(sqrt(rho) sigma sqrt(rho)) is the nuclear norm of sqrt(rho) sqrt(sigma)
    sv = np.linalg.svd(hermitian_sqrt(rho) @ hermitian_sqrt(sigma), compute_uv=False)
    return float(np.sum(sv) ** 2)


def _pair(t_eff, target):
    t_eff = np.asarray(t_eff, dtype=complex)
    target = np.asarray(target, dtype=complex)
    if t_eff.shape != target.shape or t_eff.ndim != 2 or t_eff.shape[0] != t_eff.shape[1]:
        raise DimensionError(f"expected two d x d matrices, got {t_eff.shape} and {target.shape}")
    return t_eff, target


def pure_fidelity(t_eff, target):
    """Normalised overlap ``|Tr(Te^dag T)|^2 / (Tr(Te^dag Te) Tr(T^dag T))``."""
    t_eff, target = _pair(t_eff, target)
    norm_eff = np.vdot(t_eff, t_eff).real
    if norm_eff == 0:
        raise UndefinedFidelityError("implemented transform is zero")
    norm_target = np.vdot(target, target).real
    if norm_target == 0:
        raise UndefinedFidelityError("target transform is zero")
    overlap = np.vdot(t_eff, target)
    return float(min(abs(overlap) ** 2 / (norm_eff * norm_target), 1.0))


def success_probability(t_eff, target):
    t_eff, target = _pair(t_eff, target)
    return float(np.vdot(t_eff, t_eff).real / np.vdot(target, target).real)


def trace_distance_bound(fidelity):
    if not -1e-9 <= fidelity <= 1 + 1e-9:
        raise ValueError(f"fidelity {fidelity} outside [0, 1]")
    return float(np.sqrt(min(max(1.0 - fidelity, 0.0), 1.0)))
