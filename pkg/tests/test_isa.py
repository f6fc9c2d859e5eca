import numpy as np
import pytest

from svsim.errors import ConfigError
from svsim.isa import (
    Opcode, Operand, VectorInstruction, VType, apply_vsetvli, bind_vtype, compute,
    element_addresses, element_groups_of, groups_per_register_group, native_chime,
    render_instruction, vlmax,
)


def test_vlmax_and_vsetvli_clamp(machine):
    vt = VType(32, 8, 0)
    assert vlmax(vt, machine) == 128
    inst = VectorInstruction(Opcode.VSETVLI, vtype=vt, scalar=1000)
    assert apply_vsetvli(inst, machine) == VType(32, 8, 128)
    inst = VectorInstruction(Opcode.VSETVLI, vtype=vt, scalar=17)
    assert apply_vsetvli(inst, machine).vl == 17


def test_native_chime(machine):
    assert native_chime(machine) == 2


def test_grouped_vadd_covers_two_registers(table_machine):
    inst = VectorInstruction(Opcode.VADD, vd=0, vs1=0, vs2=2, vtype=VType(32, 2, 4))
    assert element_groups_of(inst, Operand.VD, table_machine) == frozenset({0, 1, 2, 3})
    assert element_groups_of(inst, Operand.VS2, table_machine) == frozenset({4, 5, 6, 7})


def test_partial_vl_touches_fewer_groups(machine):
    inst = VectorInstruction(Opcode.VADD, vd=8, vs1=0, vs2=4, vtype=VType(32, 4, 5))
    assert groups_per_register_group(inst, machine) == 1
    assert element_groups_of(inst, Operand.VD, machine) == frozenset({16})


def test_segmented_destination_spans_fields(machine):
    inst = VectorInstruction(Opcode.VLSEG, vd=4, nf=3, scalar_base=0, vtype=VType(32, 2, 32))
    egs = element_groups_of(inst, Operand.VD, machine)
    assert egs == frozenset({8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19})


def test_group_past_last_register(table_machine):
    with pytest.raises(ConfigError):
        VectorInstruction(Opcode.VADD, vd=2, vs1=0, vs2=0, vtype=VType(32, 4, 1))
    inst = VectorInstruction(Opcode.VADD, vd=2, vs1=0, vs2=0, vtype=VType(32, 2, 1))
    assert element_groups_of(inst, Operand.VD, table_machine) == frozenset({4})
    inst = VectorInstruction(Opcode.VLSEG, vd=2, nf=2, scalar_base=0, vtype=VType(32, 2, 1))
    with pytest.raises(ConfigError):
        element_groups_of(inst, Operand.VD, table_machine)


@pytest.mark.parametrize("kwargs", [
    dict(opcode=Opcode.VADD, vd=32, vs1=0, vs2=0),
    dict(opcode=Opcode.VLE, vd=0),
    dict(opcode=Opcode.VLSE, vd=0, scalar_base=0),
    dict(opcode=Opcode.VLSEG, vd=0, scalar_base=0, nf=1),
    dict(opcode=Opcode.VADD, vd=0, vs1=0, vs2=0, scalar_base=0x10),
    dict(opcode=Opcode.VADD, vd=1, vs1=0, vs2=0, vtype=VType(8, 2, 1)),
])
def test_malformed_instructions(kwargs):
    with pytest.raises(ConfigError):
        VectorInstruction(**kwargs)


def test_bind_before_vsetvli():
    with pytest.raises(ConfigError):
        bind_vtype(VectorInstruction(Opcode.VADD, vd=0, vs1=0, vs2=0), None)


def test_stride_equal_to_element_size_is_unit_stride():
    inst = VectorInstruction(Opcode.VLSE, vd=0, scalar_base=0, stride=4, vtype=VType(32, 1, 4))
    assert inst.unit_stride
    inst = VectorInstruction(Opcode.VLSE, vd=0, scalar_base=0, stride=8, vtype=VType(32, 1, 4))
    assert not inst.unit_stride


def test_addresses_in_memory_order():
    seg = VectorInstruction(Opcode.VLSEG, vd=0, nf=3, scalar_base=0x100, vtype=VType(8, 1, 2))
    assert element_addresses(seg).tolist() == [0x100, 0x101, 0x102, 0x103, 0x104, 0x105]
    neg = VectorInstruction(Opcode.VLSE, vd=0, scalar_base=0x100, stride=-4, vtype=VType(32, 1, 3))
    assert element_addresses(neg).tolist() == [0x100, 0xfc, 0xf8]
    idx = VectorInstruction(Opcode.VLXE, vd=0, vs2=1, scalar_base=0x40, vtype=VType(32, 1, 3))
    assert element_addresses(idx, np.array([8, 0, 4])).tolist() == [0x48, 0x40, 0x44]


def test_compute_wraps_at_element_width():
    a = np.array([250, 1], dtype=np.uint8)
    b = np.array([10, 2], dtype=np.uint8)
    out = compute(Opcode.VADD, 8, np.zeros(2, np.uint8), a, b)
    assert out.tolist() == [4, 3]
    out = compute(Opcode.VADD, 8, np.zeros(2, np.uint8), None, b, scalar=-1)
    assert out.tolist() == [9, 1]


def test_compute_multiply_accumulate():
    vd = np.array([1, 2], dtype=np.uint32).view(np.uint8)
    vs2 = np.array([3, 4], dtype=np.uint32).view(np.uint8)
    out = compute(Opcode.VMACC, 32, vd, None, vs2, scalar=5)
    assert out.view(np.uint32).tolist() == [16, 22]
    out = compute(Opcode.VMUL, 32, vd, vs2, vs2)
    assert out.view(np.uint32).tolist() == [9, 16]


def test_render_matches_scoreboard_table_text():
    vadd = VectorInstruction(Opcode.VADD, vd=0, vs1=0, vs2=2, vtype=VType(32, 2, 4))
    vle = VectorInstruction(Opcode.VLE, vd=2, scalar_base=0x1000, vtype=VType(32, 2, 4))
    assert render_instruction(vadd, with_lmul=True) == "vadd.2 v0, v0, v2"
    assert render_instruction(vle, with_lmul=True) == "vle.2 v2"
