# Memory latency tolerance of the decoupled load path
# Sweeps injected latency for a streaming load and reports the 95% knee

import numpy as np
import pandas as pd

from svsim.cli import find_knee
from svsim.config import SimConfig, apply_overrides
from svsim.engine import Simulator, latency_bound, with_features
from svsim.isa import VType
from svsim.program import gen_kernel


def steady_throughput(machine, size=4096):
    '''
    Load rows per cycle between the first and last load micro-op
    '''
    p = gen_kernel("stream_load", size, VType(32, 8, 0), machine)
    sim = Simulator(p, machine, record_trace=False)
    _, metrics, _ = sim.run()
    loads = sorted(sim.first_issue)
    span = sim.last_issue[loads[-1]] - sim.first_issue[loads[0]] + 1
    return metrics.uops_issued / span, metrics.cycles


if __name__ == "__main__":
    base = SimConfig()
    benchstats = {"mem.inject_latency": [],
                  "utilization": [],
                  "cycles": [],
                  "base utilization": []
                 }
    for latency in np.arange(0, 257, 16):
        machine = apply_overrides(base, {"mem.inject_latency": str(latency)})
        util, cycles = steady_throughput(machine)
        base_util, _ = steady_throughput(with_features(machine, dae=False, ooo=False))
        benchstats["mem.inject_latency"].append(int(latency))
        benchstats["utilization"].append(util)
        benchstats["cycles"].append(cycles)
        benchstats["base utilization"].append(base_util)
    frame = pd.DataFrame(benchstats)
    print(frame.to_string(index=False))
    print("Check: ")
    print(f"knee {find_knee(frame)} vs analytic bound {latency_bound(base)}")
