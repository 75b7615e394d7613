"""Inverse design of linear optical circuits embedded in large random mode mixers."""

__version__ = "0.1.0"

from .linalg import (apply_phase_plane, dft_matrix, matrix_product_chain,  # noqa: E402
                     sample_haar_unitary)
from .gates import GateKind, build_gate  # noqa: E402
from .circuit import (LayeredCircuit, PortEmbedding, build_circuit,  # noqa: E402
                      effective_transform, random_ports, total_transfer)
from .metrics import (pure_fidelity, success_probability,  # noqa: E402
                      trace_distance_bound, uhlmann_fidelity)
from .wfm import WfmConfig, WfmReport, run_wfm  # noqa: E402

__all__ = [
    "apply_phase_plane", "dft_matrix", "matrix_product_chain", "sample_haar_unitary",
    "GateKind", "build_gate",
    "LayeredCircuit", "PortEmbedding", "build_circuit", "effective_transform", "random_ports",
    "total_transfer",
    "pure_fidelity", "success_probability", "trace_distance_bound", "uhlmann_fidelity",
    "WfmConfig", "WfmReport", "run_wfm",
]
