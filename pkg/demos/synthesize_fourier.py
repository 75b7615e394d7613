"""Synthesize a 3-mode Fourier gate inside a 64-mode layered circuit.

Run with ``python3 demos/synthesize_fourier.py``.
"""
from topdown.circuit import build_circuit, effective_transform, random_ports
from topdown.gates import build_gate
from topdown.metrics import pure_fidelity, success_probability
from topdown.wfm import WfmConfig, run_wfm

n, d, L = 64, 3, 4
circuit = build_circuit(n, L, random_ports(n, d, 1), random_ports(n, d, 2),
                        mixer_kind="haar-shared", mixer_seed=0)
target = build_gate("fourier", d)
trained, report = run_wfm(circuit, target, WfmConfig(max_sweeps=50))
t = effective_transform(trained)
print(f"sweeps={report.sweeps_used} stop={report.stop_reason}")
print(f"fidelity={pure_fidelity(t, target):.6f} success={success_probability(t, target):.6f}")
