"""Command-line front end: ``topdown {synthesize,sweep,quantum-demo,tm-recover}``.

Each subcommand reads a JSON config (unknown keys are rejected), writes its
artifacts atomically under ``--out`` and prints a one-line JSON summary on
stdout. Diagnostics go to stderr. Exit codes: 0 ok, 2 bad config,
3 target not met, 4 optimization failure.
"""
import argparse
import io
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from ._io import LineWriter, artifact_header, atomic_write, canonical_json
from .circuit import PortEmbedding, build_circuit, circuit_to_json, effective_transform, \
    matrix_bytes, random_ports
from .errors import ConfigurationError, OptimizationError, TopDownError
from .gates import GateKind, build_gate
from .linalg import dft_matrix, rng_from_seed, sample_haar_unitary
from .metrics import uhlmann_fidelity
from .quantum import (CoincidenceTable, maximally_entangled, maximally_mixed, mub_basis,
                      output_state, simulate_coincidences, tomography,
                      two_basis_fidelity_bound, witness_dimension)
from .sweep import (ROW_FIELDS, SUMMARY_FIELDS, SweepSpec, aggregate, row_line, run_sweep,
                    spearman, summary_line)
from .tmrecovery import (RecoveryConfig, generate_dataset, load_dataset, recover_u1,
                         save_dataset)
from .wfm import WfmConfig, run_wfm

log = logging.getLogger("topdown")

EXIT_OK, EXIT_CONFIG, EXIT_TARGET, EXIT_OPTIM = 0, 2, 3, 4
_REQUIRED = object()


# -- strict config parsing ------------------------------------------------------

def _int(v, key):
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigurationError(f"{key}: expected an integer, got {v!r}")
    return v


def _uint(v, key):
    v = _int(v, key)
    if v < 0:
        raise ConfigurationError(f"{key}: must be non-negative")
    return v


def _float(v, key):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigurationError(f"{key}: expected a number, got {v!r}")
    return float(v)


def _str(v, key):
    if not isinstance(v, str):
        raise ConfigurationError(f"{key}: expected a string, got {v!r}")
    return v


def _bool(v, key):
    if not isinstance(v, bool):
        raise ConfigurationError(f"{key}: expected true/false, got {v!r}")
    return v


def _opt(check):
    def f(v, key):
        return None if v is None else check(v, key)
    return f


def _list_of(check):
    def f(v, key):
        if not isinstance(v, list) or not v:
            raise ConfigurationError(f"{key}: expected a non-empty list")
        return [check(x, key) for x in v]
    return f


def _any(v, key):
    return v


def parse_section(raw, schema, where):
    """Validate ``raw`` against ``{key: (check, default)}``; unknown keys are errors."""
    if not isinstance(raw, dict):
        raise ConfigurationError(f"{where}: expected a JSON object")
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise ConfigurationError(f"{where}: unknown keys {unknown}")
    out = {}
    for key, (check, default) in schema.items():
        if key in raw:
            out[key] = check(raw[key], f"{where}.{key}")
        elif default is _REQUIRED:
            raise ConfigurationError(f"{where}: missing required key {key!r}")
        else:
            out[key] = default
    return out


WFM_SCHEMA = {
    "max_sweeps": (_int, 100),
    "convergence_tol": (_float, 1e-6),
    "fidelity_target": (_opt(_float), None),
    "init": (_str, "zero"),
    "init_seed": (_opt(_uint), None),
}

RECOVERY_SCHEMA = {
    "lr": (_float, 1e-2), "beta1": (_float, 0.9), "beta2": (_float, 0.999),
    "eps": (_float, 1e-12), "max_epochs": (_int, 5000), "rel_tol": (_float, 1e-9),
    "window": (_int, 20), "holdout": (_float, 0.1), "split_seed": (_uint, 0),
    "init_seed": (_uint, 1), "backtracking": (_bool, True), "max_backtracks": (_int, 30),
    "patience": (_int, 10),
}

_CIRCUIT_KEYS = {
    "description": (_opt(_str), None),
    "seed": (_uint, 0),
    "n": (_int, _REQUIRED),
    "d": (_int, _REQUIRED),
    "L": (_int, _REQUIRED),
    "mixer_kind": (_str, "haar-shared"),
    "ports": (_any, "random"),
    "trailing_mixer": (_bool, True),
    "wfm": (_any, {}),
}

SCHEMAS = {
    "synthesize": dict(_CIRCUIT_KEYS, gate=(_str, _REQUIRED)),
    "quantum-demo": dict(_CIRCUIT_KEYS, gate=(_str, "fourier"),
                         input=(_str, "phi+"), mode=(_str, "full"),
                         bases=(_list_of(_uint), [0, 1]),
                         counts_per_pair=(_opt(_float), None)),
    "sweep": {
        "description": (_opt(_str), None),
        "seed": (_uint, 0),
        "ns": (_list_of(_int), _REQUIRED),
        "ds": (_list_of(_int), _REQUIRED),
        "Ls": (_list_of(_int), _REQUIRED),
        "gates": (_list_of(_str), ["identity", "z", "x", "fourier", "random"]),
        "mixer_kind": (_str, "haar-shared"),
        "realizations": (_int, 100),
        "port_policy": (_str, "random"),
        "wfm": (_any, {}),
        # fidelity check: mean fidelity >= min_fidelity wherever nL/d^2 >= nl_over_d2
        "collapse": (_opt(_any), None),
    },
    "tm-recover": {
        "description": (_opt(_str), None),
        "seed": (_uint, 0),
        "n": (_opt(_int), None),
        "counts": (_opt(_list_of(_uint)), None),
        "noise": (_float, 0.0),
        "u2_kind": (_str, "dft"),
        "dataset": (_opt(_str), None),
        "save_dataset": (_bool, False),
        "recovery": (_any, {}),
    },
}

COLLAPSE_SCHEMA = {"nl_over_d2": (_float, _REQUIRED), "min_fidelity": (_float, 0.99)}


def resolve_config(command, raw, seed_override=None):
    """Fill defaults and validate; returns the fully resolved config dict."""
    cfg = parse_section(raw, SCHEMAS[command], command)
    if seed_override is not None:
        cfg["seed"] = seed_override
    if "wfm" in cfg:
        cfg["wfm"] = parse_section(cfg["wfm"], WFM_SCHEMA, f"{command}.wfm")
    if "recovery" in cfg:
        cfg["recovery"] = parse_section(cfg["recovery"], RECOVERY_SCHEMA, f"{command}.recovery")
    if cfg.get("collapse") is not None:
        cfg["collapse"] = parse_section(cfg["collapse"], COLLAPSE_SCHEMA, f"{command}.collapse")
    if "ports" in cfg:
        p = cfg["ports"]
        if isinstance(p, dict):
            p = parse_section(p, {"inputs": (_list_of(_uint), _REQUIRED),
                                  "outputs": (_list_of(_uint), _REQUIRED)}, f"{command}.ports")
            cfg["ports"] = p
        elif p not in ("random", "first-d"):
            raise ConfigurationError(f"{command}.ports: expected 'random', 'first-d' or an object")
    return cfg


# -- shared helpers -------------------------------------------------------------

def derived_seeds(seed, k):
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(k, dtype=np.uint64)]


def _wfm_config(cfg):
    return WfmConfig(**cfg["wfm"])


def _gate(text, seed):
    """``random`` takes its seed from the run seed; ``random:<s>`` pins it."""
    if text.strip().lower() == "random":
        return GateKind("random", seed)
    return GateKind.parse(text)


def _circuit_from_config(cfg):
    n, d, L = cfg["n"], cfg["d"], cfg["L"]
    if d < 1 or n < 1:
        raise ConfigurationError("n and d must be positive")
    if d > n:
        raise ConfigurationError(f"d = {d} ports do not fit into n = {n} modes")
    mixer_seed, in_seed, out_seed, gate_seed = derived_seeds(cfg["seed"], 4)
    ports = cfg["ports"]
    if ports == "random":
        inputs, outputs = random_ports(n, d, in_seed), random_ports(n, d, out_seed)
    elif ports == "first-d":
        inputs = outputs = PortEmbedding.first(n, d)
    else:
        if len(ports["inputs"]) != d or len(ports["outputs"]) != d:
            raise ConfigurationError(f"ports must list exactly d = {d} indices")
        inputs, outputs = tuple(ports["inputs"]), tuple(ports["outputs"])
    c = build_circuit(n, L, inputs, outputs, mixer_kind=cfg["mixer_kind"], mixer_seed=mixer_seed,
                      trailing_mixer=cfg["trailing_mixer"])
    return c, gate_seed


def _json(obj):
    return json.dumps(obj, indent=2) + "\n"


def _emit(summary):
    sys.stdout.write(canonical_json(summary) + "\n")
    sys.stdout.flush()


# -- subcommands ------------------------------------------------------------------

def cmd_synthesize(cfg, out, workers=None):
    header = artifact_header(cfg, cfg["seed"])
    c, gate_seed = _circuit_from_config(cfg)
    gate = _gate(cfg["gate"], gate_seed)
    target = build_gate(gate, cfg["d"])
    wcfg = _wfm_config(cfg)
    programmed, rep = run_wfm(c, target, wcfg)
    header = dict(header, config=cfg)
    atomic_write(os.path.join(out, "circuit.json"), circuit_to_json(programmed, header))
    report = {"header": header, "gate": str(gate), "fidelity": rep.final_fidelity,
              "success_probability": rep.final_success_probability,
              "sweeps_used": rep.sweeps_used, "stop_reason": rep.stop_reason,
              "fidelity_history": rep.fidelity_history}
    atomic_write(os.path.join(out, "report.json"), _json(report))
    print(f"synthesize: gate={gate} n={c.n} d={c.d} L={c.L}  F={rep.final_fidelity:.6f}  "
          f"S={rep.final_success_probability:.6f}  sweeps={rep.sweeps_used}", file=sys.stderr)
    _emit({"fidelity": rep.final_fidelity, "success_probability": rep.final_success_probability})
    target_f = wcfg.fidelity_target
    if target_f is not None and rep.final_fidelity < target_f:
        print(f"fidelity {rep.final_fidelity:.6f} below target {target_f}", file=sys.stderr)
        return EXIT_TARGET
    return EXIT_OK


def sweep_spec(cfg):
    """SweepSpec for a resolved ``sweep`` config."""
    return SweepSpec(ns=cfg["ns"], ds=cfg["ds"], Ls=cfg["Ls"], gates=cfg["gates"],
                     mixer_kind=cfg["mixer_kind"], realizations=cfg["realizations"],
                     port_policy=cfg["port_policy"], base_seed=cfg["seed"], wfm=_wfm_config(cfg))


def load_config(command, path, seed_override=None):
    with open(path) as fh:
        return resolve_config(command, json.load(fh), seed_override)


def cmd_sweep(cfg, out, workers=None):
    spec = sweep_spec(cfg)
    header = dict(artifact_header(cfg, cfg["seed"]), config=cfg)
    head = "# " + canonical_json(header)
    writer = LineWriter(os.path.join(out, "rows.csv"))
    writer.write_line(head)
    writer.write_line(",".join(ROW_FIELDS))
    done = [0]

    def on_row(row):
        writer.write_line(row_line(row))
        done[0] += 1
        if done[0] % 100 == 0:
            print(f"sweep: {done[0]} rows", file=sys.stderr)

    try:
        rows = run_sweep(spec, workers=workers or os.cpu_count() or 1, on_row=on_row)
    except BaseException:
        writer.abort()
        raise
    writer.close()
    if not rows:
        raise ConfigurationError("sweep produced no feasible grid points")
    summary = aggregate(rows)
    buf = io.StringIO()
    buf.write(head + "\n" + ",".join(SUMMARY_FIELDS) + "\n")
    for rec in summary:
        buf.write(summary_line(rec) + "\n")
    atomic_write(os.path.join(out, "summary.csv"), buf.getvalue())

    x = [r.n * r.L / r.d ** 2 for r in rows]
    # undefined when the grid has a single nL/d^2 value
    rho = spearman(x, [r.fidelity for r in rows]) if len(set(x)) > 1 else None
    result = {"rows": len(rows), "groups": len(summary), "spearman_nl_over_d2": rho}
    status = EXIT_OK
    if cfg["collapse"] is not None:
        thr = cfg["collapse"]["nl_over_d2"]
        fmin = cfg["collapse"]["min_fidelity"]
        above = [s for s in summary if s["nl_over_d2"] >= thr]
        failing = [s for s in above if s["f_mean"] < fmin]
        result["collapse"] = {"groups_above_threshold": len(above), "groups_failing": len(failing),
                              "min_f_mean_above": min((s["f_mean"] for s in above), default=None)}
        if failing:
            status = EXIT_TARGET
            print(f"sweep: {len(failing)} groups with nL/d^2 >= {thr} have mean fidelity < {fmin}",
                  file=sys.stderr)
    atomic_write(os.path.join(out, "report.json"), _json(dict({"header": header}, **result)))
    for rec in summary:
        print(f"  n={rec['n']:4d} d={rec['d']:3d} L={rec['L']:3d} {rec['gate']:9s} "
              f"F={rec['f_mean']:.4f}+-{rec['f_std']:.4f}  S={rec['s_mean']:.4f}+-{rec['s_std']:.4f}",
              file=sys.stderr)
    _emit(result)
    return status


def _two_basis_table(rho_in, d, bases, circuits, rate, poisson_seed):
    """Coincidences where Bob's basis ``nu`` is realised by a synthesized gate.

    Measuring ``|M^nu_b*>`` equals applying ``(M^nu)^T`` and detecting in the
    computational basis, so the circuit for ``nu`` targets ``mub_basis(d, nu).T``.
    """
    k = len(bases)
    probs = np.zeros((k, k, d, d))
    for j, nu in enumerate(bases):
        t = circuits[nu]
        op = np.kron(np.eye(d), t)
        rho = op @ rho_in @ op.conj().T
        rho = rho / np.trace(rho).real
        for i, mu in enumerate(bases):
            ma = mub_basis(d, mu)
            for a in range(d):
                for b in range(d):
                    v = np.kron(ma[:, a], np.eye(d)[:, b])
                    probs[i, j, a, b] = np.real(v.conj() @ rho @ v)
    expected = rate * np.clip(probs, 0.0, None)
    if poisson_seed is not None:
        counts = rng_from_seed(poisson_seed).poisson(expected).astype(float)
    else:
        counts = expected
    return CoincidenceTable(d, tuple(bases), tuple(bases), counts)


def cmd_quantum_demo(cfg, out, workers=None):
    d = cfg["d"]
    header = dict(artifact_header(cfg, cfg["seed"]), config=cfg)
    if cfg["input"] not in ("phi+", "mixed"):
        raise ConfigurationError("input must be 'phi+' or 'mixed'")
    if cfg["mode"] not in ("full", "two-bases"):
        raise ConfigurationError("mode must be 'full' or 'two-bases'")
    rho_in = maximally_entangled(d) if cfg["input"] == "phi+" else maximally_mixed(d)
    c, gate_seed = _circuit_from_config(cfg)
    wcfg = _wfm_config(cfg)
    poisson_seed = derived_seeds(cfg["seed"], 5)[4] if cfg["counts_per_pair"] else None
    rate = cfg["counts_per_pair"] or 1.0
    report = {"header": header, "d": d, "mode": cfg["mode"], "input": cfg["input"]}

    if cfg["mode"] == "two-bases":
        bases = cfg["bases"]
        if len(bases) != 2 or bases[0] == bases[1]:
            raise ConfigurationError("two-bases mode needs two distinct basis indices")
        circuits, gates = {}, {}
        for nu in bases:
            target = mub_basis(d, nu).T
            programmed, rep = run_wfm(c, target, wcfg)
            circuits[nu] = effective_transform(programmed)
            gates[str(nu)] = {"fidelity": rep.final_fidelity,
                              "success_probability": rep.final_success_probability}
        table = _two_basis_table(rho_in, d, bases, circuits, rate, poisson_seed)
        bound = two_basis_fidelity_bound(table, tuple(bases))
        report.update(measurement_circuits=gates, bases=bases, fidelity_lower_bound=bound,
                      witnessed_dimension=witness_dimension(min(bound, 1.0), d))
    else:
        gate = _gate(cfg["gate"], gate_seed)
        target = build_gate(gate, d)
        programmed, rep = run_wfm(c, target, wcfg)
        t_eff = effective_transform(programmed)
        # post-selected on coincidences, so the output state is renormalised
        rho_out = output_state(rho_in, t_eff)
        table = simulate_coincidences(rho_out, d, rate=rate, poisson_seed=poisson_seed)
        rho_rec = tomography(table)
        ideal = output_state(rho_in, target)
        phi = np.kron(np.eye(d), target) @ (np.eye(d).reshape(d * d) / np.sqrt(d))
        f_ent = float(np.real(phi.conj() @ rho_rec @ phi))
        report.update(gate=str(gate), circuit_fidelity=rep.final_fidelity,
                      success_probability=rep.final_success_probability,
                      reconstruction_fidelity=uhlmann_fidelity(rho_rec, ideal),
                      entangled_fidelity=f_ent,
                      witnessed_dimension=witness_dimension(min(max(f_ent, 0.0), 1.0), d))
        atomic_write(os.path.join(out, "rho_reconstructed.cmat"), matrix_bytes(rho_rec))
    atomic_write(os.path.join(out, "coincidences.csv"),
                 "# " + canonical_json(header) + "\n" + table.to_csv())
    atomic_write(os.path.join(out, "report.json"), _json(report))
    print("quantum-demo: " + ", ".join(f"{k}={v}" for k, v in report.items()
                                      if k not in ("header", "measurement_circuits")),
          file=sys.stderr)
    _emit({k: v for k, v in report.items() if k != "header"})
    return EXIT_OK


def cmd_tm_recover(cfg, out, workers=None):
    header = dict(artifact_header(cfg, cfg["seed"]), config=cfg)
    rcfg = RecoveryConfig(**cfg["recovery"])
    if cfg["dataset"] is not None:
        if not os.path.isdir(cfg["dataset"]):
            raise ConfigurationError(f"dataset directory {cfg['dataset']!r} not found")
        data = load_dataset(cfg["dataset"])
    elif cfg["n"] is not None:
        n = cfg["n"]
        if n < 1:
            raise ConfigurationError("n must be positive")
        u1_seed, u2_seed, data_seed = derived_seeds(cfg["seed"], 3)
        u1 = sample_haar_unitary(n, u1_seed)
        if cfg["u2_kind"] == "dft":
            u2 = dft_matrix(n)
        elif cfg["u2_kind"] == "haar":
            u2 = sample_haar_unitary(n, u2_seed)
        else:
            raise ConfigurationError("u2_kind must be 'dft' or 'haar'")
        counts = cfg["counts"]
        if counts is not None and len(counts) != 3:
            raise ConfigurationError("counts must list three record counts")
        data = generate_dataset(u1, u2, counts, seed=data_seed, noise=cfg["noise"] or None,
                                u2_kind=cfg["u2_kind"])
        if cfg["save_dataset"]:
            save_dataset(data, os.path.join(out, "dataset"))
    else:
        raise ConfigurationError("tm-recover needs either a dataset path or generator parameters (n)")

    status = EXIT_OK
    try:
        u, rep = recover_u1(data, rcfg)
        result = "ok"
    except OptimizationError as err:
        u, rep = err.best, err.report
        result = f"optimization failure: {err}"
        status = EXIT_OPTIM
    doc = {"header": header, "status": result, "n": data.n, "records": len(data)}
    doc.update(rep.to_dict())
    atomic_write(os.path.join(out, "u1_recovered.cmat"), matrix_bytes(u))
    atomic_write(os.path.join(out, "report.json"), _json(doc))
    print(f"tm-recover: n={data.n} records={len(data)} epochs={rep.iterations} "
          f"loss={rep.train_loss:.3e} R2={rep.holdout_intensity_r2:.6f} "
          f"fidelity={rep.unitary_fidelity}", file=sys.stderr)
    _emit({k: v for k, v in doc.items() if k != "header"})
    return status


COMMANDS = {"synthesize": cmd_synthesize, "sweep": cmd_sweep,
            "quantum-demo": cmd_quantum_demo, "tm-recover": cmd_tm_recover}


def build_parser():
    p = argparse.ArgumentParser(prog="topdown", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"topdown {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="JSON config file")
        s.add_argument("--out", default=".", help="output directory (default: cwd)")
        s.add_argument("--seed", type=int, default=None, help="64-bit seed, overrides the config")
        s.add_argument("--workers", type=int, default=None,
                       help="max parallel workers for sweeps (default: all cores)")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse uses 2 for usage errors, which matches the config-error code
        return int(e.code or 0)
    logging.basicConfig(stream=sys.stderr, level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with open(args.config) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        print(f"error: cannot read config: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.seed is not None and not 0 <= args.seed < 2 ** 64:
            raise ConfigurationError("--seed must be a 64-bit unsigned integer")
        if args.workers is not None and args.workers < 1:
            raise ConfigurationError("--workers must be >= 1")
        cfg = resolve_config(args.command, raw, args.seed)
        return COMMANDS[args.command](cfg, args.out, args.workers)
    except (TopDownError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
