"""Two-photon simulation: MUB measurements, tomography and dimension witnessing.

Alice measures ``|M^mu_a>``, Bob measures the complex-conjugate basis
``|M^nu_b*>``, so the maximally entangled state ``|Phi+>`` is perfectly
correlated (``a == b``) whenever ``mu == nu``. Bipartite states are ``d^2 x d^2``
density matrices ordered ``|alice> (x) |bob>``.
"""
import csv
import io
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .errors import (AnnihilatedStateError, DimensionError, UnderdeterminedError,
                     UnsupportedDimensionError)
from .linalg import rng_from_seed


def _is_prime(k):
    return k >= 2 and all(k % p for p in range(2, int(k ** 0.5) + 1))


def mub_basis(d, mu):
    """Basis ``mu`` of a complete MUB set; the columns of the returned matrix.

    ``mu = 0`` is the computational basis. For odd prime ``d``, ``mu = k >= 1``
    has entries ``omega^(a m + (k-1) m^2) / sqrt(d)`` (so ``mu = 1`` is the
    Fourier basis). For ``d = 2`` the bases are the Z, X and Y eigenbases.
    """
    if d == 2:
        s = 1 / np.sqrt(2)
        bases = [np.eye(2, dtype=complex),
                 s * np.array([[1, 1], [1, -1]], dtype=complex),
                 s * np.array([[1, 1], [1j, -1j]], dtype=complex)]
        if not 0 <= mu <= 2:
            raise ValueError(f"basis index {mu} out of range 0..2")
        return bases[mu]
    if d < 2 or not _is_prime(d):
        raise UnsupportedDimensionError(f"complete MUB construction needs d = 2 or an odd prime, got {d}")
    if not 0 <= mu <= d:
        raise ValueError(f"basis index {mu} out of range 0..{d}")
    if mu == 0:
        return np.eye(d, dtype=complex)
    m = np.arange(d)
    a = np.arange(d)
    expo = (np.outer(m, a) + (mu - 1) * (m ** 2)[:, None]) % d
    return np.exp(2j * np.pi * expo / d) / np.sqrt(d)


def all_mubs(d):
    return [mub_basis(d, mu) for mu in range(d + 1)]


def maximally_entangled(d):
    if d < 2:
        raise DimensionError("need d >= 2")
    psi = np.eye(d, dtype=complex).reshape(d * d) / np.sqrt(d)
    return np.outer(psi, psi.conj())


def maximally_mixed(d):
    return np.eye(d * d, dtype=complex) / (d * d)


def pure_state(psi):
    psi = np.asarray(psi, dtype=complex)
    psi = psi / np.linalg.norm(psi)
    return np.outer(psi, psi.conj())


def partial_trace_bob(rho, d):
    return np.trace(np.asarray(rho).reshape(d, d, d, d), axis1=1, axis2=3)


def partial_trace_alice(rho, d):
    return np.trace(np.asarray(rho).reshape(d, d, d, d), axis1=0, axis2=2)


def apply_local_gate(rho, t_eff):
    """``(1 (x) T) rho (1 (x) T^dag)`` renormalised, with the pre-normalisation trace."""
    t_eff = np.asarray(t_eff, dtype=complex)
    d = t_eff.shape[0]
    rho = np.asarray(rho, dtype=complex)
    if t_eff.shape != (d, d) or rho.shape != (d * d, d * d):
        raise DimensionError(f"gate {t_eff.shape} does not act on a {rho.shape} bipartite state")
    op = np.kron(np.eye(d), t_eff)
    out = op @ rho @ op.conj().T
    norm = float(np.trace(out).real)
    if norm <= 1e-300:
        raise AnnihilatedStateError("local gate annihilates the state")
    return out / norm, norm


def output_state(rho_in, target):
    """Ideal output state for a unitary target on Bob's side."""
    return apply_local_gate(rho_in, target)[0]


# -- coincidences -------------------------------------------------------------

@dataclass
class CoincidenceTable:
    """Counts indexed by ``(mu, nu, a, b)``; ``counts[i, j]`` is a ``d x d`` block."""
    d: int
    alice_bases: Tuple[int, ...]
    bob_bases: Tuple[int, ...]
    counts: np.ndarray  # (len(alice_bases), len(bob_bases), d, d)

    def __post_init__(self):
        shape = (len(self.alice_bases), len(self.bob_bases), self.d, self.d)
        if self.counts.shape != shape:
            raise DimensionError(f"counts have shape {self.counts.shape}, expected {shape}")
        if np.any(self.counts < 0):
            raise ValueError("counts must be non-negative")

    def block(self, mu, nu):
        return self.counts[self.alice_bases.index(mu), self.bob_bases.index(nu)]

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["mu", "nu", "a", "b", "count"])
        for i, mu in enumerate(self.alice_bases):
            for j, nu in enumerate(self.bob_bases):
                for a in range(self.d):
                    for b in range(self.d):
                        w.writerow([mu, nu, a, b, repr(float(self.counts[i, j, a, b]))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text, d):
        rows = list(csv.DictReader(io.StringIO(text)))
        alice = tuple(sorted({int(r["mu"]) for r in rows}))
        bob = tuple(sorted({int(r["nu"]) for r in rows}))
        counts = np.full((len(alice), len(bob), d, d), np.nan)
        for r in rows:
            counts[alice.index(int(r["mu"])), bob.index(int(r["nu"])), int(r["a"]), int(r["b"])] = float(r["count"])
        if np.isnan(counts).any():
            raise UnderdeterminedError("CSV does not contain the complete (mu, nu, a, b) grid")
        return cls(d, alice, bob, counts)


def projector_stack(d, alice_bases, bob_bases, efficiency=None):
    """Rows are ``vec(Pi^mu_a (x) Pi^nu_b*)`` in (mu, nu, a, b) order.

    Returns an array ``A`` with ``A @ rho.ravel()`` equal to the probabilities.
    ``efficiency`` maps ``(mu, a)`` to a detection efficiency (default 1).
    """
    vecs = []
    for mu in alice_bases:
        ma = mub_basis(d, mu)
        for nu in bob_bases:
            mb = mub_basis(d, nu).conj()
            for a in range(d):
                for b in range(d):
                    v = np.kron(ma[:, a], mb[:, b])
                    eta = 1.0
                    if efficiency is not None:
                        eta = efficiency.get((mu, a), 1.0) * efficiency.get((nu, b), 1.0)
                    # Tr(|v><v| rho) = v^dag rho v = sum_ij conj(v_i) rho_ij v_j
                    vecs.append(eta * np.outer(v.conj(), v).ravel())
    return np.array(vecs)


def simulate_coincidences(rho, d, alice_bases=None, bob_bases=None, rate=1.0,
                          poisson_seed=None, efficiency=None):
    """Expected (or Poisson-sampled) counts ``rate * Tr((Pi^mu_a (x) Pi^nu_b*) rho)``."""
    if rate <= 0:
        raise ValueError("rate must be positive")
    alice_bases = tuple(range(d + 1)) if alice_bases is None else tuple(alice_bases)
    bob_bases = alice_bases if bob_bases is None else tuple(bob_bases)
    rho = np.asarray(rho, dtype=complex)
    probs = (projector_stack(d, alice_bases, bob_bases, efficiency) @ rho.ravel()).real
    expected = rate * np.clip(probs, 0.0, None)
    if poisson_seed is not None:
        counts = rng_from_seed(poisson_seed).poisson(expected).astype(float)
    else:
        counts = expected
    return CoincidenceTable(d, alice_bases, bob_bases,
                            counts.reshape(len(alice_bases), len(bob_bases), d, d))


# -- tomography ---------------------------------------------------------------

def project_to_density(h):
    """Closest (Frobenius) unit-trace PSD matrix to Hermitian ``h``.

    Eigenvalues are projected onto the probability simplex.
    """
    h = 0.5 * (h + h.conj().T)
    w, v = np.linalg.eigh(h)
    u = np.sort(w)[::-1]
    css = np.cumsum(u) - 1
    k = np.arange(1, len(u) + 1)
    rho_idx = np.nonzero(u - css / k > 0)[0][-1]
    tau = css[rho_idx] / (rho_idx + 1)
    lam = np.clip(w - tau, 0.0, None)
    return (v * lam) @ v.conj().T


def tomography(table, efficiency=None, max_iter=5000, tol=1e-8):
    """Constrained least-squares state estimate from a full MUB coincidence table.

    Minimises ``sum |C - R Tr(Pi rho)|^2`` over density matrices ``rho`` and a
    free rate ``R``: linear inversion, projection onto the density matrices,
    then alternating closed-form ``R`` updates and projected gradient steps
    on ``rho`` until the relative change drops below ``tol``.
    """
    d = table.d
    full = tuple(range(d + 1))
    if tuple(sorted(table.alice_bases)) != full or tuple(sorted(table.bob_bases)) != full:
        raise UnderdeterminedError("tomography needs all d + 1 MUBs on both sides")
    A = projector_stack(d, table.alice_bases, table.bob_bases, efficiency)
    c = table.counts.ravel().astype(float)
    if c.sum() <= 0:
        raise UnderdeterminedError("no counts")

    x, *_ = np.linalg.lstsq(A, c.astype(complex), rcond=None)
    x = x.reshape(d * d, d * d)
    rho = project_to_density(x / max(np.trace(x).real, 1e-300))

    # Lipschitz constant of the quadratic part in rho, per unit R^2
    lip = np.linalg.norm(A, 2) ** 2
    for _ in range(max_iter):
        p = (A @ rho.ravel()).real
        pp = p @ p
        R = (c @ p) / pp if pp > 0 else 0.0
        resid = R * p - c
        grad = R * (A.conj().T @ resid).reshape(d * d, d * d)
        grad = 0.5 * (grad + grad.conj().T)
        step = 1.0 / (R * R * lip) if R > 0 else 1.0
        new = project_to_density(rho - step * grad)
        change = np.linalg.norm(new - rho) / max(np.linalg.norm(rho), 1e-300)
        rho = new
        if change < tol:
            break
    return rho


def fitted_rate(table, rho, efficiency=None):
    A = projector_stack(table.d, table.alice_bases, table.bob_bases, efficiency)
    p = (A @ np.asarray(rho).ravel()).real
    return float(table.counts.ravel() @ p / (p @ p))


# -- entanglement dimensionality ----------------------------------------------

def witness_dimension(fidelity, d):
    """Largest ``k <= d`` with ``fidelity > (k - 1) / d``.

    States of Schmidt number at most ``k - 1`` have fidelity at most
    ``(k - 1) / d`` with a maximally entangled state, so exceeding that bound
    certifies ``k``-dimensional entanglement.
    """
    if not 0 <= fidelity <= 1 + 1e-9:
        raise ValueError(f"fidelity {fidelity} outside [0, 1]")
    k = 1
    while k < d and fidelity * d > k:
        k += 1
    return k


def basis_correlation(table, mu, nu=None):
    """Fraction of counts on the diagonal ``a == b`` for the basis pair ``(mu, nu)``."""
    block = table.block(mu, mu if nu is None else nu)
    total = block.sum()
    return float(np.trace(block) / total) if total > 0 else 0.0


def mub_fidelity(table):
    """Fidelity to ``|Phi+>`` from matched-basis correlations of all ``d + 1`` MUBs.

    Uses the identity ``sum_mu Pi_mu = 1 + d |Phi+><Phi+|`` for the
    correlation projectors ``Pi_mu = sum_a |M_a M_a*><M_a M_a*|``.
    """
    d = table.d
    total = sum(basis_correlation(table, mu) for mu in range(d + 1))
    return (total - 1) / d


def two_basis_fidelity_bound(table, bases=(0, 1)):
    """Lower bound ``P_0 + P_1 - 1`` on the fidelity to ``|Phi+>`` from two MUBs.

    Within the correlated subspace of one basis, the states orthogonal to
    ``|Phi+>`` are uncorrelated in any basis unbiased to it, hence
    ``Pi_0 + Pi_1 - 1 <= |Phi+><Phi+|``.
    """
    mu, nu = bases
    return max(basis_correlation(table, mu) + basis_correlation(table, nu) - 1.0, 0.0)
