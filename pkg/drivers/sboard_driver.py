# Scoreboard walk-through of a grouped dot-product loop
# Prints the pending read/write scoreboards of every live instruction each cycle

from svsim.config import SimConfig, apply_overrides
from svsim.engine import Simulator
from svsim.program import parse

DOT_LOOP = """
vsetvli 4, e32, m2
vadd v0, v0, v2
vle32 v2, 0x1000
vadd v0, v0, v2
vle32 v2, 0x1010
vadd v0, v0, v2
"""


def small_machine():
    # 4 registers of 2 element groups: 8-bit scoreboards
    return apply_overrides(SimConfig(), {
        "vlen": "64", "dlen": "32", "num_arch_regs": "4", "num_arith_seqs": "1",
        "fu_latency.VADD": "4", "vrf.dedicated_load_wport": "true",
    })


if __name__ == "__main__":
    sim = Simulator(parse(DOT_LOOP), small_machine())
    for c in range(40):
        sim.watch(c)
    state, metrics, _ = sim.run()
    for cycle, rows in sorted(sim.snapshots.items()):
        if not rows:
            continue
        print(f"cycle {cycle}:")
        for row in rows:
            print("    " + row)
    print("Check: ")
    print(f"{metrics.cycles} cycles, {metrics.uops_issued} micro-ops, writebacks {sim.writebacks}")
