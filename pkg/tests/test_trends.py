import pandas as pd
import pytest

from svsim.cli import find_knee
from svsim.engine import Simulator, latency_bound, run, with_features
from svsim.isa import VType
from svsim.oracle import exec_program
from svsim.program import gen_kernel, random_program

pytestmark = pytest.mark.slow


def load_throughput(machine, size=4096):
    '''
    Rows per cycle between the first and last load micro-op, which
    leaves out pipeline fill and drain.
    '''
    p = gen_kernel("stream_load", size, VType(32, 8, 0), machine)
    sim = Simulator(p, machine, record_trace=False)
    sim.run()
    loads = sorted(sim.first_issue)
    span = sim.last_issue[loads[-1]] - sim.first_issue[loads[0]] + 1
    rows = sim.metrics.uops_issued
    return rows / span


def test_latency_knee_sits_near_the_queue_capacity(configure):
    points = []
    for latency in range(0, 257, 16):
        machine = configure(mem__inject_latency=latency)
        points.append({"mem.inject_latency": latency, "utilization": load_throughput(machine)})
    frame = pd.DataFrame(points)
    assert frame["utilization"].iloc[0] > 0.9
    knee = find_knee(frame)
    bound = latency_bound(configure())
    assert 0.75 * bound <= knee <= 1.25 * bound
    assert frame["utilization"].iloc[-1] < frame["utilization"].iloc[0]


@pytest.mark.parametrize("kernel,size", [("axpy", 1024), ("memcpy", 1024)])
def test_feature_ablation_ordering(configure, kernel, size):
    machine = configure(mem__inject_latency=40)
    p = gen_kernel(kernel, size, VType(32, 4, 0), machine)
    cycles = {}
    for name, dae, ooo in [("full", True, True), ("dae", True, False), ("base", False, False)]:
        _, metrics, _ = run(p, with_features(machine, dae, ooo), record_trace=False)
        cycles[name] = metrics.cycles
    assert cycles["full"] <= cycles["dae"] < cycles["base"]



def simulate(machine, kernel, size, lmul):
    p = gen_kernel(kernel, size, VType(32, lmul, 0), machine, seed=3)
    _, metrics, _ = run(p, machine, record_trace=False)
    return metrics


def mean_gain(slow, fast):
    return sum(slow[k].cycles / fast[k].cycles - 1 for k in slow) / len(slow)


CHIME_SUITE = [("axpy", 4096), ("memcpy", 4096), ("stream_load", 4096), ("gemm_tile", (8, 64, 32))]


def test_longer_chimes_pay_off_until_memory_binds(configure):
    runs = {}
    for vlen in (256, 512, 1024, 2048):
        machine = configure(vlen=vlen, dlen=256)
        runs[vlen] = {kernel: simulate(machine, kernel, size, 1) for kernel, size in CHIME_SUITE}
    assert mean_gain(runs[256], runs[512]) >= 0.05
    assert abs(mean_gain(runs[1024], runs[2048])) < 0.05


IQ_SUITE = [("stream_load", 4096, 1), ("axpy", 2048, 4), ("memcpy", 2048, 4),
            ("gemm_tile", (8, 64, 8), 4), ("transpose", (64, 4), 4), ("gather", 512, 4)]


def test_issue_queue_depth_saturates(configure):
    runs = {}
    for depth in (0, 1, 2, 4):
        machine = configure(iq_depth=depth, mem__inject_latency=6)
        runs[depth] = {kernel: simulate(machine, kernel, size, lmul) for kernel, size, lmul in IQ_SUITE}
    gains = [runs[0][k].cycles / runs[1][k].cycles - 1 for k in runs[0]]
    assert max(gains) >= 0.10
    assert mean_gain(runs[0], runs[1]) >= 0
    assert abs(mean_gain(runs[2], runs[4])) < 0.05


def test_decoupled_tile_reaches_its_asymptote_at_shorter_vectors(configure):
    utilization = {}
    for preset, dae, ooo in [("full", True, True), ("base", False, False)]:
        machine = with_features(configure(), dae, ooo)
        utilization[preset] = {n: simulate(machine, "gemm_tile", (n, n, n), 4).compute_util
                               for n in (8, 16, 32, 48, 64)}
    full, base = utilization["full"], utilization["base"]
    assert full[32] >= 0.9 * max(full.values())
    assert all(base[n] < 0.9 * max(base.values()) for n in (8, 16, 32))
    assert full[32] > base[32]


ABLATION_SUITE = [("axpy", 2048), ("memcpy", 2048), ("stream_load", 2048), ("gemm_tile", (16, 64, 16)),
                  ("jacobi2d", (10, 66))]


def test_feature_ablation_suite(configure):
    machine = configure(mem__inject_latency=40)
    util = {}
    for name, dae, ooo in [("full", True, True), ("dae", True, False), ("ooo", False, True),
                           ("base", False, False)]:
        variant = with_features(machine, dae, ooo)
        util[name] = {k: simulate(variant, k, size, 4).utilization for k, size in ABLATION_SUITE}
    for kernel, _ in ABLATION_SUITE:
        # oldest-first priority can still lose a write-port slot to a younger micro-op
        assert util["full"][kernel] >= 0.99 * util["dae"][kernel], kernel
        assert util["ooo"][kernel] >= util["base"][kernel] - 0.01, kernel
    ahead = [k for k, _ in ABLATION_SUITE if util["full"][k] >= util["base"][k] + 0.10]
    assert len(ahead) >= 3, util


BULK_CONFIGS = [
    {},
    {"iq_depth": 0},
    {"dispatch_q_depth": 0, "iq_depth": 0},
    {"features__dae": False, "features__ooo": False},
    {"features__dae": True, "features__ooo": False},
    {"features__dae": False, "features__ooo": True},
    {"vlen": 256, "dlen": 128, "num_arith_seqs": 1, "no_bypass": True},
    {"mem__inject_latency": 17, "lsu__store_buffer_rows": 1, "vrf__read_ports_per_bank": 1},
    {"frontend__fault_pages": "4", "frontend__dispatch_ipc": 2},
    {"vlen": 1024},
    {"vrf__dedicated_load_wport": True, "mem__rw_turnaround": True},
    {"arith_issue_width": 2, "num_arith_seqs": 3, "iq_depth": 1},
]


@pytest.mark.parametrize("which", range(len(BULK_CONFIGS)))
def test_bulk_random_programs_match_reference(configure, which):
    machine = configure(**BULK_CONFIGS[which])
    for seed in range(which * 1000, which * 1000 + 834):
        p = random_program(seed, machine)
        state, _, _ = run(p, machine, record_trace=False)
        assert state == exec_program(p, machine), seed
