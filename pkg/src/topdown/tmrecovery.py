"""Referenceless recovery of a hidden mode mixer from speckle intensities.

The apparatus is ``T = U2 P2 U1 P1``: a probe field ``v`` (the field leaving
the first modulator) passes the unknown mixer ``U1``, a second phase plane
``P2`` and a known mixer ``U2`` (a 2f lens, modelled as a DFT). Only output
intensities ``I = |U2 P2 U1 v|**2`` are recorded. ``U1`` is fitted by full-batch
gradient descent on the summed squared intensity residual, using the
Wirtinger gradient

    dL/dRe(U1) + i dL/dIm(U1) = 2 sum_r P2_r^* U2^dag (2 e_r * y_r) v_r^dag,

with ``y_r`` the predicted output field and ``e_r = |y_r|**2 - I_r``.
"""
import json
import logging
import os
from dataclasses import asdict, dataclass, field
from typing import List, Optional

import numpy as np

from .circuit import read_matrix, write_matrix
from .errors import ConfigurationError, DimensionError, OptimizationError
from .linalg import as_unitary, rng_from_seed, unitarity_error

log = logging.getLogger(__name__)


@dataclass
class SpeckleDataset:
    """One record per row: probe, two phase planes and the measured intensity."""
    theta1: np.ndarray       # (m, n) phases on the first modulator
    theta2: np.ndarray       # (m, n) phases on the second modulator
    probes: np.ndarray       # (m, n) complex field entering U1
    intensities: np.ndarray  # (m, n) output intensities
    part: np.ndarray         # (m,) 1, 2 or 3: which acquisition stage produced the record
    u2: np.ndarray
    input_field: np.ndarray
    ground_truth: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        m, n = self.intensities.shape
        for name in ("theta1", "theta2", "probes"):
            if getattr(self, name).shape != (m, n):
                raise DimensionError(f"{name} has shape {getattr(self, name).shape}, expected {(m, n)}")
        if np.any(self.intensities < 0):
            raise ConfigurationError("intensities must be non-negative")

    @property
    def n(self):
        return self.intensities.shape[1]

    def __len__(self):
        return self.intensities.shape[0]

    def shuffled(self, seed):
        """Copy with intensity rows permuted: a negative control with no signal."""
        perm = rng_from_seed(seed).permutation(len(self))
        return SpeckleDataset(self.theta1, self.theta2, self.probes, self.intensities[perm],
                              self.part, self.u2, self.input_field, self.ground_truth,
                              dict(self.meta, shuffled=True))


def default_counts(n):
    """``4 n^2`` records split 1/4 basis probes, 1/4 random P1, 1/2 random P1 and P2."""
    total = 4 * n * n
    return (total // 4, total // 4, total - 2 * (total // 4))


def forward_intensities(u1, u2, probes, theta2):
    """``|U2 P2 U1 v|**2`` for every record (rows of ``probes``/``theta2``)."""
    y = np.asarray(u2) @ (np.exp(1j * theta2.T) * (np.asarray(u1) @ probes.T))
    return (np.abs(y) ** 2).T


def generate_dataset(u1, u2, counts=None, seed=0, noise=None, input_field=None, u2_kind="dft"):
    """Synthetic three-part acquisition.

    Part 1 sends each canonical input mode in turn with ``P2 = 1``; part 2
    sends the input field through random ``P1`` with ``P2 = 1``; part 3 draws
    both planes at random. ``noise`` is a relative Gaussian intensity noise.
    """
    u1 = as_unitary(u1)
    u2 = as_unitary(u2)
    n = u1.shape[0]
    if u2.shape != (n, n):
        raise DimensionError("u1 and u2 must have the same size")
    counts = default_counts(n) if counts is None else tuple(int(c) for c in counts)
    if len(counts) != 3 or min(counts) < 0:
        raise ConfigurationError(f"counts must be three non-negative integers, got {counts}")
    n_basis, n_rand1, n_rand12 = counts
    m = sum(counts)
    if input_field is None:
        input_field = np.full(n, 1 / np.sqrt(n), dtype=complex)
    input_field = np.asarray(input_field, dtype=complex)
    rng = rng_from_seed(seed)

    theta1 = np.zeros((m, n))
    theta2 = np.zeros((m, n))
    probes = np.zeros((m, n), dtype=complex)
    part = np.zeros(m, dtype=int)

    probes[np.arange(n_basis), np.arange(n_basis) % n] = 1.0
    part[:n_basis] = 1
    s2 = slice(n_basis, n_basis + n_rand1)
    theta1[s2] = rng.uniform(-np.pi, np.pi, (n_rand1, n))
    part[s2] = 2
    s3 = slice(n_basis + n_rand1, m)
    theta1[s3] = rng.uniform(-np.pi, np.pi, (n_rand12, n))
    theta2[s3] = rng.uniform(-np.pi, np.pi, (n_rand12, n))
    part[s3] = 3
    probes[n_basis:] = np.exp(1j * theta1[n_basis:]) * input_field

    intensities = forward_intensities(u1, u2, probes, theta2)
    if noise:
        intensities = intensities * (1 + noise * rng.standard_normal(intensities.shape))
        intensities = np.clip(intensities, 0.0, None)
    meta = {"n": n, "counts": list(counts), "seed": int(seed),
            "noise": float(noise) if noise else 0.0, "u2_kind": u2_kind}
    return SpeckleDataset(theta1, theta2, probes, intensities, part, np.array(u2),
                          input_field, np.array(u1), meta)


# -- fitting ----------------------------------------------------------------

@dataclass(frozen=True)
class RecoveryConfig:
    lr: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-12
    max_epochs: int = 5000
    rel_tol: float = 1e-9        # relative loss change over `window` epochs
    window: int = 20
    holdout: float = 0.1
    split_seed: int = 0
    init_seed: int = 1
    backtracking: bool = True
    max_backtracks: int = 30
    patience: int = 10           # consecutive failed/increasing epochs before giving up


@dataclass
class RecoveryReport:
    iterations: int
    train_loss: float
    holdout_intensity_r2: float
    unitary_fidelity: Optional[float] = None
    unitarity_deviation: float = 0.0
    converged: bool = False
    loss_history: List[float] = field(default_factory=list, repr=False)

    def to_dict(self, with_history=False):
        out = asdict(self)
        if not with_history:
            out.pop("loss_history")
        return out


class _Problem:
    def __init__(self, u2, probes, theta2, intensities):
        self.u2 = np.asarray(u2)
        self.u2h = self.u2.conj().T
        self.v = probes.T                    # (n, m)
        self.vh = probes.conj()              # (m, n)
        self.e2 = np.exp(1j * theta2.T)      # (n, m)
        self.target = intensities.T          # (n, m)

    def loss(self, u):
        y = self.u2 @ (self.e2 * (u @ self.v))
        return float(np.sum((np.abs(y) ** 2 - self.target) ** 2))

    def loss_grad(self, u):
        y = self.u2 @ (self.e2 * (u @ self.v))
        e = np.abs(y) ** 2 - self.target
        w = self.e2.conj() * (self.u2h @ (2 * e * y))
        return float(np.sum(e ** 2)), 2 * (w @ self.vh)


def unitary_recovery_fidelity(estimate, truth):
    """``|Tr(E^dag U)|^2 / (Tr(E^dag E) n)``; 1 iff ``E`` is a scaled, phased ``U``."""
    estimate = np.asarray(estimate, dtype=complex)
    truth = np.asarray(truth, dtype=complex)
    if estimate.shape != truth.shape:
        raise DimensionError(f"shapes differ: {estimate.shape} vs {truth.shape}")
    norm = np.vdot(estimate, estimate).real
    if norm == 0:
        raise ConfigurationError("estimate is zero; fidelity undefined")
    return float(min(abs(np.vdot(estimate, truth)) ** 2 / (norm * np.vdot(truth, truth).real), 1.0))


def intensity_r2(pred, measured):
    resid = np.sum((pred - measured) ** 2)
    total = np.sum((measured - measured.mean()) ** 2)
    return float(1 - resid / total) if total > 0 else 0.0


def split_indices(m, holdout, seed):
    perm = rng_from_seed(seed).permutation(m)
    k = int(round(holdout * m))
    return np.sort(perm[k:]), np.sort(perm[:k])


def recover_u1(data, cfg=None, init=None):
    """Fit ``U1`` to a :class:`SpeckleDataset`; returns ``(estimate, report)``.

    Raises :class:`OptimizationError` (carrying the best iterate) if no
    non-increasing step can be found for ``cfg.patience`` consecutive epochs.
    """
    cfg = RecoveryConfig() if cfg is None else cfg
    n = data.n
    if len(data) < 2 * n * n:
        raise ConfigurationError(f"need at least 2 n^2 = {2 * n * n} records, got {len(data)}")
    train, hold = split_indices(len(data), cfg.holdout, cfg.split_seed)
    prob = _Problem(data.u2, data.probes[train], data.theta2[train], data.intensities[train])

    if init is None:
        rng = rng_from_seed(cfg.init_seed)
        init = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2 * n)
    u = np.array(init, dtype=complex)
    m1 = np.zeros_like(u)
    m2 = np.zeros(u.shape)
    loss, grad = prob.loss_grad(u)
    history = [loss]
    best_u, best_loss = u.copy(), loss
    bad = 0
    converged = False
    epoch = 0

    for epoch in range(1, cfg.max_epochs + 1):
        m1 = cfg.beta1 * m1 + (1 - cfg.beta1) * grad
        m2 = cfg.beta2 * m2 + (1 - cfg.beta2) * np.abs(grad) ** 2
        step = (m1 / (1 - cfg.beta1 ** epoch)) / (np.sqrt(m2 / (1 - cfg.beta2 ** epoch)) + cfg.eps)
        scale = cfg.lr
        trial = u - scale * step
        trial_loss = prob.loss(trial)
        if cfg.backtracking:
            tries = 0
            while trial_loss > loss and tries < cfg.max_backtracks:
                scale *= 0.5
                trial = u - scale * step
                trial_loss = prob.loss(trial)
                tries += 1
            if trial_loss > loss:
                # Adam direction is not a descent direction here; fall back to the gradient
                g_step = grad / max(np.max(np.abs(grad)), 1e-300)
                scale = cfg.lr
                tries = 0
                while tries < cfg.max_backtracks:
                    trial = u - scale * g_step
                    trial_loss = prob.loss(trial)
                    if trial_loss <= loss:
                        break
                    scale *= 0.5
                    tries += 1
        if trial_loss > loss:
            bad += 1
            if not cfg.backtracking:
                u = trial
                loss, grad = prob.loss_grad(u)
                history.append(loss)
            if bad >= cfg.patience:
                report = _report(data, best_u, hold, epoch, best_loss, history, False)
                raise OptimizationError(f"loss failed to decrease for {bad} consecutive epochs",
                                        best=best_u, report=report)
            continue
        bad = 0
        u = trial
        loss, grad = prob.loss_grad(u)
        history.append(loss)
        if loss < best_loss:
            best_u, best_loss = u.copy(), loss
        if loss <= 1e-28 * max(history[0], 1.0):
            converged = True
            break
        if len(history) > cfg.window:
            ref = history[-1 - cfg.window]
            if ref > 0 and (ref - loss) / ref < cfg.rel_tol:
                converged = True
                break

    log.debug("tm recovery: %d epochs, loss %.3e, converged=%s", epoch, best_loss, converged)
    return best_u, _report(data, best_u, hold, epoch, best_loss, history, converged)


def _report(data, u, hold, epoch, loss, history, converged):
    if len(hold):
        pred = forward_intensities(u, data.u2, data.probes[hold], data.theta2[hold])
        r2 = intensity_r2(pred, data.intensities[hold])
    else:
        r2 = float("nan")
    fid = None
    if data.ground_truth is not None:
        fid = unitary_recovery_fidelity(u, data.ground_truth)
    return RecoveryReport(iterations=epoch, train_loss=float(loss), holdout_intensity_r2=r2,
                          unitary_fidelity=fid, unitarity_deviation=unitarity_error(u),
                          converged=converged, loss_history=list(history))


# -- persistence --------------------------------------------------------------

_ARRAYS = ("theta1", "theta2", "probes", "intensities", "u2")


def save_dataset(data, directory):
    """Write every array as a CMPLXMAT file plus a ``manifest.json``."""
    os.makedirs(directory, exist_ok=True)
    for name in _ARRAYS:
        write_matrix(os.path.join(directory, f"{name}.cmat"), getattr(data, name))
    write_matrix(os.path.join(directory, "input_field.cmat"), data.input_field[None, :])
    write_matrix(os.path.join(directory, "part.cmat"), data.part[None, :].astype(complex))
    files = [f"{k}.cmat" for k in _ARRAYS] + ["input_field.cmat", "part.cmat"]
    if data.ground_truth is not None:
        write_matrix(os.path.join(directory, "ground_truth.cmat"), data.ground_truth)
        files.append("ground_truth.cmat")
    manifest = {k: data.meta.get(k) for k in ("n", "counts", "seed", "noise", "u2_kind")}
    manifest["files"] = files
    with open(os.path.join(directory, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return manifest


def load_dataset(directory):
    with open(os.path.join(directory, "manifest.json")) as fh:
        manifest = json.load(fh)

    def get(name):
        return read_matrix(os.path.join(directory, f"{name}.cmat"))

    gt_path = os.path.join(directory, "ground_truth.cmat")
    return SpeckleDataset(
        theta1=get("theta1").real, theta2=get("theta2").real, probes=get("probes"),
        intensities=get("intensities").real, part=get("part").real[0].astype(int),
        u2=get("u2"), input_field=get("input_field")[0],
        ground_truth=read_matrix(gt_path) if os.path.exists(gt_path) else None,
        meta={k: manifest.get(k) for k in ("n", "counts", "seed", "noise", "u2_kind")})
