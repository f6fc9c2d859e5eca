import pytest

from svsim.config import SimConfig, apply_overrides
from svsim.program import parse


@pytest.fixture
def machine():
    return SimConfig()


@pytest.fixture
def table_machine():
    # 4 registers of 2 element groups each
    return apply_overrides(SimConfig(), {
        "vlen": "64", "dlen": "32", "num_arch_regs": "4", "num_arith_seqs": "1",
        "fu_latency.VADD": "4", "vrf.dedicated_load_wport": "true",
    })


TABLE_PROGRAM = """
vsetvli 4, e32, m2
vadd v0, v0, v2
vle32 v2, 0x1000
vadd v0, v0, v2
vle32 v2, 0x1010
vadd v0, v0, v2
"""


@pytest.fixture
def table_program():
    return parse(TABLE_PROGRAM)


def _configure(base=None, **overrides):
    '''
    SimConfig with overrides; a double underscore stands for the dot of
    a nested key (mem__inject_latency=100)
    '''
    text = {k.replace("__", "."): str(v).lower() if isinstance(v, bool) else str(v)
            for k, v in overrides.items()}
    return apply_overrides(base or SimConfig(), text)


@pytest.fixture
def configure():
    return _configure
