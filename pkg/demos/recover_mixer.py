"""Recover an unknown 8-mode mixer from simulated intensity measurements.

Run with ``python3 demos/recover_mixer.py``.
"""
from topdown.linalg import dft_matrix, sample_haar_unitary
from topdown.tmrecovery import generate_dataset, recover_u1

n = 8
data = generate_dataset(sample_haar_unitary(n, 42), dft_matrix(n), seed=0, noise=0.01)
_, report = recover_u1(data)
print(f"records={len(data)} epochs={report.iterations}")
print(f"holdout R2={report.holdout_intensity_r2:.5f} fidelity={report.unitary_fidelity:.5f}")
