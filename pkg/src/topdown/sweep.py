"""Grid experiments over (n, d, L), gate kinds and mixer policies.

Every row is an independent task whose randomness comes from a single 64-bit
seed, ``splitmix64(base_seed ^ blake2b(grid point, gate, mixer, r))``. From
that seed a ``SeedSequence`` spawns the mixer, port and random-gate seeds, so
any row can be recomputed on its own and results do not depend on how rows
are scheduled across workers.
"""
import hashlib
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from itertools import product
from typing import List, Sequence, Tuple

import numpy as np
from scipy.stats import spearmanr

from .circuit import PortEmbedding, build_circuit, random_ports
from .errors import ConfigurationError
from .gates import KINDS, GateKind, build_gate
from .wfm import WfmConfig, run_wfm

log = logging.getLogger(__name__)

SWEEP_MIXERS = ("haar-shared", "haar-per-layer", "dft")
PORT_POLICIES = ("random", "first-d")
ROW_FIELDS = ("n", "d", "L", "gate", "mixer_kind", "realization", "seed",
              "fidelity", "success_prob", "sweeps_used", "wall_time_ms")
SUMMARY_FIELDS = ("n", "d", "L", "gate", "mixer_kind", "count", "f_mean", "f_std",
                  "s_mean", "s_std", "nl_over_d2", "l_over_d")
_MASK = 0xFFFFFFFFFFFFFFFF


def splitmix64(x):
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


def point_hash(n, d, L, gate, mixer_kind, r):
    key = f"n={n}|d={d}|L={L}|gate={gate}|mixer={mixer_kind}|r={r}".encode()
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "little")


def row_seed(base_seed, n, d, L, gate, mixer_kind, r):
    return splitmix64((int(base_seed) & _MASK) ^ point_hash(n, d, L, gate, mixer_kind, r))


@dataclass(frozen=True)
class SweepSpec:
    ns: Tuple[int, ...]
    ds: Tuple[int, ...]
    Ls: Tuple[int, ...]
    gates: Tuple[str, ...] = KINDS
    mixer_kind: str = "haar-shared"
    realizations: int = 100
    port_policy: str = "random"
    base_seed: int = 0
    wfm: WfmConfig = field(default_factory=WfmConfig)

    def __post_init__(self):
        for name in ("ns", "ds", "Ls", "gates"):
            vals = tuple(getattr(self, name))
            if not vals:
                raise ConfigurationError(f"{name} must be non-empty")
            object.__setattr__(self, name, vals)
        for v in self.ns + self.ds + self.Ls:
            if int(v) != v or v < 1:
                raise ConfigurationError(f"grid values must be positive integers, got {v!r}")
        for g in self.gates:
            if g not in KINDS:
                raise ConfigurationError(f"unknown gate kind {g!r}")
        if self.mixer_kind not in SWEEP_MIXERS:
            raise ConfigurationError(f"mixer_kind must be one of {SWEEP_MIXERS}")
        if self.port_policy not in PORT_POLICIES:
            raise ConfigurationError(f"port_policy must be one of {PORT_POLICIES}")
        if self.realizations < 1:
            raise ConfigurationError("realizations must be >= 1")
        if not 0 <= self.base_seed <= _MASK:
            raise ConfigurationError("base_seed must be a 64-bit unsigned integer")

    def to_dict(self):
        out = asdict(self)
        out["ns"], out["ds"], out["Ls"], out["gates"] = (
            list(self.ns), list(self.ds), list(self.Ls), list(self.gates))
        return out


@dataclass(frozen=True)
class SweepResultRow:
    n: int
    d: int
    L: int
    gate: str
    mixer_kind: str
    realization: int
    seed: int
    fidelity: float
    success_prob: float
    sweeps_used: int
    wall_time_ms: float


@dataclass(frozen=True)
class _Task:
    n: int
    d: int
    L: int
    gate: str
    mixer_kind: str
    realization: int
    seed: int
    port_policy: str
    wfm: WfmConfig


def tasks(spec):
    """Feasible row tasks in output order; infeasible points (d > n) are logged and dropped."""
    out = []
    for n, d, L in product(spec.ns, spec.ds, spec.Ls):
        if d > n:
            log.warning("skipping infeasible grid point n=%d d=%d L=%d (d > n)", n, d, L)
            continue
        for gate in spec.gates:
            for r in range(spec.realizations):
                s = row_seed(spec.base_seed, n, d, L, gate, spec.mixer_kind, r)
                out.append(_Task(n, d, L, gate, spec.mixer_kind, r, s, spec.port_policy, spec.wfm))
    return out


def run_task(t):
    t0 = time.perf_counter()
    mixer_seed, in_seed, out_seed, gate_seed = (
        int(s) for s in np.random.SeedSequence(t.seed).generate_state(4, dtype=np.uint64))
    if t.port_policy == "first-d":
        inputs = outputs = PortEmbedding.first(t.n, t.d)
    else:
        inputs = random_ports(t.n, t.d, in_seed)
        outputs = random_ports(t.n, t.d, out_seed)
    gate = GateKind("random", gate_seed) if t.gate == "random" else GateKind(t.gate)
    target = build_gate(gate, t.d)
    c = build_circuit(t.n, t.L, inputs, outputs, mixer_kind=t.mixer_kind, mixer_seed=mixer_seed)
    _, rep = run_wfm(c, target, t.wfm)
    wall = (time.perf_counter() - t0) * 1e3
    return SweepResultRow(t.n, t.d, t.L, t.gate, t.mixer_kind, t.realization, t.seed,
                          rep.final_fidelity, rep.final_success_probability,
                          rep.sweeps_used, wall)


def run_sweep(spec, workers=1, on_row=None):
    """All rows of ``spec`` in deterministic order.

    ``workers > 1`` farms rows out to a process pool; ``on_row`` is called
    with each row in output order as soon as it and all earlier rows exist.
    """
    todo = tasks(spec)
    rows: List[SweepResultRow] = []
    if workers <= 1 or len(todo) < 2:
        for t in todo:
            rows.append(run_task(t))
            if on_row:
                on_row(rows[-1])
        return rows
    with ProcessPoolExecutor(max_workers=workers) as pool:
        # map() yields in submission order
        for row in pool.map(run_task, todo, chunksize=max(1, len(todo) // (8 * workers))):
            rows.append(row)
            if on_row:
                on_row(row)
    return rows


def aggregate(rows: Sequence[SweepResultRow]):
    """Per (n, d, L, gate, mixer_kind) means and sample standard deviations.

    Groups appear in order of first occurrence. A group with one row has std 0.
    """
    if not rows:
        raise ConfigurationError("cannot aggregate an empty set of rows")
    groups = {}
    for r in rows:
        groups.setdefault((r.n, r.d, r.L, r.gate, r.mixer_kind), []).append(r)
    out = []
    for (n, d, L, gate, mixer), rs in groups.items():
        f = np.array([r.fidelity for r in rs])
        s = np.array([r.success_prob for r in rs])
        ddof = 1 if len(rs) > 1 else 0
        out.append({"n": n, "d": d, "L": L, "gate": gate, "mixer_kind": mixer,
                    "count": len(rs),
                    "f_mean": float(f.mean()), "f_std": float(f.std(ddof=ddof)),
                    "s_mean": float(s.mean()), "s_std": float(s.std(ddof=ddof)),
                    "nl_over_d2": n * L / d ** 2, "l_over_d": L / d})
    return out


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def row_line(row, wall_time=True):
    vals = [getattr(row, k) for k in ROW_FIELDS]
    if not wall_time:
        vals[-1] = 0.0
    return ",".join(_fmt(v) for v in vals)


def summary_line(rec):
    return ",".join(_fmt(rec[k]) for k in SUMMARY_FIELDS)


def spearman(x, y):
    """Spearman rank correlation with average ranks for ties."""
    return float(spearmanr(x, y).statistic)
