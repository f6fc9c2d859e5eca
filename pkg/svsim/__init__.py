"""
Cycle-level simulator of a short-vector backend: element-group
scoreboarding, decoupled load/store, banked register file and a
functional reference model to check it against.
"""

from svsim.config import SimConfig, load_config
from svsim.engine import Simulator, SimMetrics, apply_features, latency_bound, run
from svsim.oracle import ArchState, exec_program
from svsim.program import Program, gen_kernel, parse

__all__ = [
    "ArchState", "Program", "SimConfig", "SimMetrics", "Simulator", "apply_features",
    "exec_program", "gen_kernel", "latency_bound", "load_config", "parse", "run",
]
