"""Wavefront matching: phase-plane programming of a layered circuit.

At plane ``p`` the device splits as ``T = B_p P_p F_p``. Input modes pushed
forward through ``F_p`` and target output fields pulled back through
``B_p^dagger`` are compared pixel by pixel; the phase that best aligns them
is the argument of their summed overlap

    c_p(q) = sum_a phi_{a,p}(q) * conj(psi_{a,p}(q)),    theta_p(q) = arg c_p(q).

Planes are indexed from 0. A sweep visits planes ``0 .. L-1`` and then
``L-1 .. 0``, always using the most recent phases of every other plane.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .circuit import effective_transform
from .errors import ConfigurationError, DimensionError
from .linalg import rng_from_seed
from .metrics import pure_fidelity, success_probability

log = logging.getLogger(__name__)

# overlaps below this fraction of the largest one count as zero
_ZERO_OVERLAP = 1e-14


@dataclass(frozen=True)
class WfmConfig:
    max_sweeps: int = 100
    convergence_tol: float = 1e-6
    fidelity_target: Optional[float] = None
    init: str = "zero"  # "zero", "random" or "keep"
    init_seed: Optional[int] = None

    def __post_init__(self):
        if self.max_sweeps < 1:
            raise ConfigurationError("max_sweeps must be >= 1")
        if self.convergence_tol < 0:
            raise ConfigurationError("convergence_tol must be >= 0")
        if self.fidelity_target is not None and not 0 <= self.fidelity_target <= 1:
            raise ConfigurationError("fidelity_target must lie in [0, 1]")
        if self.init not in ("zero", "random", "keep"):
            raise ConfigurationError(f"unknown init {self.init!r}")
        if self.init == "random" and self.init_seed is None:
            raise ConfigurationError("random init requires init_seed")


@dataclass
class WfmReport:
    sweeps_used: int
    fidelity_history: List[float] = field(default_factory=list)
    # Re Tr(target^dag T_eff) / d after each half-sweep, the quantity each update maximises
    overlap_history: List[float] = field(default_factory=list)
    final_fidelity: float = 0.0
    final_success_probability: float = 0.0
    stop_reason: str = ""


def _check_plane(c, p):
    if not 0 <= p < c.L:
        raise IndexError(f"plane index {p} out of range 0..{c.L - 1}")


def _check_mode(c, a):
    if not 0 <= a < c.d:
        raise IndexError(f"mode index {a} out of range 0..{c.d - 1}")


def forward_fields(c, p, inputs=None):
    """All input modes (columns) propagated up to, not through, plane ``p``."""
    _check_plane(c, p)
    psi = c.inputs.modes if inputs is None else inputs
    psi = c.mixers[0] @ psi
    for j in range(p):
        psi = c.mixers[j + 1] @ (np.exp(1j * c.planes[j])[:, None] * psi)
    return psi


def backward_fields(c, p, outputs):
    """Output fields (columns of ``outputs``) pulled back to just after plane ``p``."""
    _check_plane(c, p)
    phi = c.mixers[c.L].conj().T @ outputs
    for j in range(c.L - 1, p, -1):
        phi = np.exp(-1j * c.planes[j])[:, None] * phi
        phi = c.mixers[j].conj().T @ phi
    return phi


def target_fields(c, target):
    """Output-port embedding of the target's columns: ``|a_out> = T |a_in>``."""
    target = np.asarray(target, dtype=complex)
    if target.shape != (c.d, c.d):
        raise ConfigurationError(f"target is {target.shape}, circuit has d={c.d} ports")
    return c.outputs.modes @ target


def forward_field(c, a, p):
    _check_mode(c, a)
    return forward_fields(c, p)[:, a]


def backward_field(c, a, p, target=None):
    """Backward-propagated output mode ``a``.

    Without ``target`` the raw output mode shape is propagated; with a target
    the matching target field ``sum_b target[b, a] |out_b>`` is used.
    """
    _check_mode(c, a)
    outs = c.outputs.modes if target is None else target_fields(c, target)
    return backward_fields(c, p, outs)[:, a]


def matching_phase(psi, phi, previous=None):
    """Phase-only plane maximising ``Re sum_a <phi_a| P |psi_a>``.

    ``psi`` and ``phi`` are ``n x d`` (or length-``n``) field arrays at the
    plane. Elements with vanishing overlap keep ``previous`` (default 0).
    """
    psi = np.asarray(psi, dtype=complex)
    phi = np.asarray(phi, dtype=complex)
    if psi.shape != phi.shape:
        raise DimensionError(f"field shapes differ: {psi.shape} vs {phi.shape}")
    overlap = phi * psi.conj()
    if overlap.ndim == 2:
        overlap = overlap.sum(axis=1)
    theta = np.angle(overlap)
    mag = np.abs(overlap)
    dead = mag <= _ZERO_OVERLAP * max(mag.max(), 1e-300)
    if dead.any():
        prev = np.zeros_like(theta) if previous is None else np.asarray(previous, dtype=float)
        theta = np.where(dead, prev, theta)
    return theta


def plane_objective(theta, psi, phi):
    """``Re sum_a <phi_a| diag(exp(i theta)) |psi_a>``."""
    return float(np.real(np.sum(phi.conj() * (np.exp(1j * np.asarray(theta))[:, None] * psi))))


def update_plane(c, p, target):
    """Optimal replacement for plane ``p`` given every other plane of ``c``."""
    psi = forward_fields(c, p)
    phi = backward_fields(c, p, target_fields(c, target))
    return matching_phase(psi, phi, previous=c.planes[p])


class _Engine:
    """Array-level WFM state; avoids rebuilding circuit objects per update.

    Forward fields at plane ``p`` depend only on planes ``< p`` and backward
    fields only on planes ``> p``, so the fields produced during one half-sweep
    are exactly the ones the next half-sweep in the opposite direction needs.
    """

    def __init__(self, c, target, theta):
        self.U = [np.asarray(u) for u in c.mixers]
        # shared mixers are common; conjugate each distinct one once
        cache = {}
        self.Uh = []
        for u in c.mixers:
            if id(u) not in cache:
                cache[id(u)] = np.ascontiguousarray(u.conj().T)
            self.Uh.append(cache[id(u)])
        self.theta = theta
        self.L = len(theta)
        self.target = target
        phi_out = target_fields(c, target)
        self.psi = [None] * self.L
        self.phi = [None] * self.L
        self.psi[0] = self.U[0] @ np.asarray(c.inputs.modes)
        self.phi[-1] = self.Uh[self.L] @ phi_out
        for j in range(self.L - 1):
            self.psi[j + 1] = self.U[j + 1] @ (np.exp(1j * self.theta[j])[:, None] * self.psi[j])
        for j in range(self.L - 1, 0, -1):
            self.phi[j - 1] = self.Uh[j] @ (np.exp(-1j * self.theta[j])[:, None] * self.phi[j])
        self.updates = []  # (before, after) objective pairs, for diagnostics

    def _update(self, p, record):
        psi, phi = self.psi[p], self.phi[p]
        new = matching_phase(psi, phi, previous=self.theta[p])
        if record:
            self.updates.append((plane_objective(self.theta[p], psi, phi),
                                 plane_objective(new, psi, phi)))
        self.theta[p] = new

    def half_sweep_forward(self, record=False):
        for p in range(self.L):
            self._update(p, record)
            if p + 1 < self.L:
                self.psi[p + 1] = self.U[p + 1] @ (np.exp(1j * self.theta[p])[:, None] * self.psi[p])

    def half_sweep_backward(self, record=False):
        for p in range(self.L - 1, -1, -1):
            self._update(p, record)
            if p > 0:
                self.phi[p - 1] = self.Uh[p] @ (np.exp(-1j * self.theta[p])[:, None] * self.phi[p])

    def matching_matrix(self, p=0):
        """``M[a', a] = <phi_a'| P_p |psi_a>`` at plane ``p`` with current fields."""
        return self.phi[p].conj().T @ (np.exp(1j * self.theta[p])[:, None] * self.psi[p])

    def t_eff(self, p=0):
        """Effective transform read off at plane ``p``.

        Valid only where both field sets are current: plane ``L-1`` after a
        forward half-sweep, plane 0 after a backward one. The target fields
        are ``E_out @ target`` with ``target`` unitary, so the readout through
        ``E_out`` is ``target @ M_p``.
        """
        return self.target @ self.matching_matrix(p)


def _initial_phases(c, cfg):
    if cfg.init == "keep":
        return [np.array(p, dtype=float) for p in c.planes]
    if cfg.init == "random":
        rng = rng_from_seed(cfg.init_seed)
        return [rng.uniform(-np.pi, np.pi, c.n) for _ in range(c.L)]
    return [np.zeros(c.n) for _ in range(c.L)]


def run_wfm(c, target, cfg=None, record_updates=False):
    """Program the phase planes of ``c`` to implement ``target``.

    Returns the updated circuit (mixers untouched) and a :class:`WfmReport`.
    With ``record_updates`` the report also carries ``updates``, the list of
    per-plane objective values before and after every update.
    """
    cfg = WfmConfig() if cfg is None else cfg
    target = np.asarray(target, dtype=complex)
    if target.shape != (c.d, c.d):
        raise ConfigurationError(f"target is {target.shape}, circuit has d={c.d} ports")

    eng = _Engine(c, target, _initial_phases(c, cfg))
    d = c.d
    report = WfmReport(sweeps_used=0)

    def overlap(t):
        return float(np.real(np.vdot(target, t))) / d

    def record(p):
        t = eng.t_eff(p)
        f = pure_fidelity(t, target) if np.any(t) else 0.0
        report.fidelity_history.append(f)
        report.overlap_history.append(overlap(t))
        return f

    # the fidelity itself can dip between sweeps; the matched overlap cannot,
    # so convergence is judged on the overlap
    prev = overlap(eng.t_eff(0))
    reason = "max_sweeps"
    for sweep in range(cfg.max_sweeps):
        eng.half_sweep_forward(record_updates)
        record(c.L - 1)
        eng.half_sweep_backward(record_updates)
        f = record(0)
        report.sweeps_used = sweep + 1
        if cfg.fidelity_target is not None and f >= cfg.fidelity_target:
            reason = "fidelity_target"
            break
        if report.overlap_history[-1] - prev < cfg.convergence_tol:
            reason = "converged"
            break
        prev = report.overlap_history[-1]

    out = c.with_planes(eng.theta)
    t = effective_transform(out)
    report.final_fidelity = pure_fidelity(t, target)
    report.final_success_probability = success_probability(t, target)
    report.stop_reason = reason
    if record_updates:
        report.updates = eng.updates
    log.debug("wfm n=%d d=%d L=%d: F=%.6f S=%.6f after %d sweeps (%s)", c.n, d, c.L,
              report.final_fidelity, report.final_success_probability, report.sweeps_used, reason)
    return out, report
