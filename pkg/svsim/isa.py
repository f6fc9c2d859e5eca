"""
Mini vector ISA: opcodes, vtype state, instructions, and element-group
arithmetic shared by every other module.
"""

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from svsim.config import SimConfig, VALID_LMULS, VALID_SEWS
from svsim.errors import ConfigError

MASK64 = (1 << 64) - 1


class Opcode(enum.Enum):
    VADD = "vadd"
    VMUL = "vmul"
    VMACC = "vmacc"
    VFMA_OPAQUE = "vfma"
    VLE = "vle"
    VSE = "vse"
    VLSE = "vlse"
    VSSE = "vsse"
    VLXE = "vlxe"
    VSXE = "vsxe"
    VLSEG = "vlseg"
    VSSEG = "vsseg"
    VSETVLI = "vsetvli"
    SCALAR = "scalar"


ARITH_OPS = frozenset({Opcode.VADD, Opcode.VMUL, Opcode.VMACC, Opcode.VFMA_OPAQUE})
LOAD_OPS = frozenset({Opcode.VLE, Opcode.VLSE, Opcode.VLXE, Opcode.VLSEG})
STORE_OPS = frozenset({Opcode.VSE, Opcode.VSSE, Opcode.VSXE, Opcode.VSSEG})
MEM_OPS = LOAD_OPS | STORE_OPS
STRIDED_OPS = frozenset({Opcode.VLSE, Opcode.VSSE})
INDEXED_OPS = frozenset({Opcode.VLXE, Opcode.VSXE})
SEGMENTED_OPS = frozenset({Opcode.VLSEG, Opcode.VSSEG})
# ops that read their destination as an accumulator
ACCUMULATE_OPS = frozenset({Opcode.VMACC, Opcode.VFMA_OPAQUE})


class Operand(enum.Enum):
    VD = "vd"
    VS1 = "vs1"
    VS2 = "vs2"


@dataclass(frozen=True)
class VType:
    sew: int
    lmul: int
    vl: int

    def __post_init__(self):
        if self.sew not in VALID_SEWS:
            raise ConfigError(f"sew must be one of {VALID_SEWS}, got {self.sew}")
        if self.lmul not in VALID_LMULS:
            raise ConfigError(f"lmul must be one of {VALID_LMULS}, got {self.lmul}")
        if self.vl < 0:
            raise ConfigError(f"vl cannot be negative, got {self.vl}")

    @property
    def esize(self) -> int:
        return self.sew // 8


@dataclass(frozen=True)
class TrapReport:
    seq_id: int
    element_index: int
    address: int
    page: int

    def __str__(self):
        return (f"trap: seq_id={self.seq_id} element={self.element_index} "
                f"address={self.address:#x} page={self.page:#x}")


@dataclass(frozen=True)
class VectorInstruction:
    opcode: Opcode
    vd: Optional[int] = None
    vs1: Optional[int] = None
    vs2: Optional[int] = None
    scalar_base: Optional[int] = None
    stride: Optional[int] = None
    nf: int = 1
    vtype: Optional[VType] = None
    seq_id: int = 0
    # vx-form scalar operand; for VSETVLI the requested AVL, for SCALAR the cycle count
    scalar: Optional[int] = None
    line: Optional[int] = field(default=None, compare=False)

    def __post_init__(self):
        for name in ("vd", "vs1", "vs2"):
            reg = getattr(self, name)
            if reg is not None and not 0 <= reg < 32:
                raise ConfigError(f"{name}=v{reg} is outside the architectural registers")
        if self.opcode in MEM_OPS and self.scalar_base is None:
            raise ConfigError(f"{self.opcode.value} needs a base address")
        if self.opcode in ARITH_OPS and self.scalar_base is not None:
            raise ConfigError(f"{self.opcode.value} takes no base address")
        if self.opcode in STRIDED_OPS and self.stride is None:
            raise ConfigError(f"{self.opcode.value} needs a stride")
        if not 1 <= self.nf <= 8:
            raise ConfigError(f"nf must be in 1..8, got {self.nf}")
        if self.opcode in SEGMENTED_OPS and self.nf < 2:
            raise ConfigError("segmented accesses need nf >= 2")
        if self.vtype is not None:
            _check_alignment(self, self.vtype.lmul)

    @property
    def is_arith(self) -> bool:
        return self.opcode in ARITH_OPS

    @property
    def is_load(self) -> bool:
        return self.opcode in LOAD_OPS

    @property
    def is_store(self) -> bool:
        return self.opcode in STORE_OPS

    @property
    def is_mem(self) -> bool:
        return self.opcode in MEM_OPS

    @property
    def is_indexed(self) -> bool:
        return self.opcode in INDEXED_OPS

    @property
    def is_segmented(self) -> bool:
        return self.opcode in SEGMENTED_OPS

    @property
    def is_vector(self) -> bool:
        return self.opcode not in (Opcode.VSETVLI, Opcode.SCALAR)

    @property
    def unit_stride(self) -> bool:
        '''
        Contiguous access. A strided op whose stride equals the element
        size is canonicalized to unit-stride.
        '''
        if self.opcode in (Opcode.VLE, Opcode.VSE) or self.is_segmented:
            return True
        if self.opcode in STRIDED_OPS and self.vtype is not None:
            return self.stride == self.vtype.esize
        return False

    @property
    def vl(self) -> int:
        return 0 if self.vtype is None else self.vtype.vl


def _check_alignment(inst: VectorInstruction, lmul: int):
    for name in ("vd", "vs1", "vs2"):
        reg = getattr(inst, name)
        if reg is not None and reg % lmul != 0:
            raise ConfigError(f"{name}=v{reg} is not aligned to lmul={lmul}")


def vlmax(vtype: VType, machine: SimConfig) -> int:
    return machine.vlen // vtype.sew * vtype.lmul


def native_chime(machine: SimConfig) -> int:
    if machine.vlen % machine.dlen != 0:
        raise ConfigError(f"VLEN ({machine.vlen}) is not divisible by DLEN ({machine.dlen})")
    return machine.vlen // machine.dlen


def apply_vsetvli(inst: VectorInstruction, machine: SimConfig) -> VType:
    '''
    New vtype after a vsetvli; vl is clamped to VLMAX
    '''
    vt = inst.vtype
    return VType(vt.sew, vt.lmul, min(inst.scalar or 0, vlmax(vt, machine)))


def bind_vtype(inst: VectorInstruction, vtype: Optional[VType]) -> VectorInstruction:
    if vtype is None:
        raise ConfigError(f"{inst.opcode.value} executed before any vsetvli")
    return replace(inst, vtype=vtype)


def operand_registers(inst: VectorInstruction, operand: Operand) -> list:
    '''
    Base registers of each register group the operand names. Segmented
    ops name nf consecutive groups through vd.
    '''
    reg = getattr(inst, operand.value)
    if reg is None:
        return []
    if operand is Operand.VD and inst.is_segmented:
        return [reg + f * inst.vtype.lmul for f in range(inst.nf)]
    return [reg]


def groups_per_register_group(inst: VectorInstruction, machine: SimConfig) -> int:
    vt = inst.vtype
    return math.ceil(vt.vl * vt.sew / machine.dlen)


def register_eg_base(reg: int, machine: SimConfig) -> int:
    return reg * (machine.vlen // machine.dlen)


def element_groups_of(inst: VectorInstruction, operand: Operand, machine: SimConfig) -> frozenset:
    vt = inst.vtype
    egs = set()
    count = groups_per_register_group(inst, machine)
    for reg in operand_registers(inst, operand):
        if reg + vt.lmul > machine.num_arch_regs:
            raise ConfigError(
                f"v{reg} with lmul={vt.lmul} exceeds the {machine.num_arch_regs} architectural registers")
        base = register_eg_base(reg, machine)
        egs.update(range(base, base + count))
    return frozenset(egs)


def source_operands(inst: VectorInstruction) -> list:
    if inst.is_arith:
        ops = [Operand.VS2]
        if inst.vs1 is not None:
            ops.insert(0, Operand.VS1)
        if inst.opcode in ACCUMULATE_OPS:
            ops.append(Operand.VD)
        return ops
    if inst.is_store:
        return [Operand.VD, Operand.VS2] if inst.is_indexed else [Operand.VD]
    if inst.is_load and inst.is_indexed:
        return [Operand.VS2]
    return []


def dest_operands(inst: VectorInstruction) -> list:
    if inst.is_arith or inst.is_load:
        return [Operand.VD]
    return []


def element_addresses(inst: VectorInstruction, indices=None) -> np.ndarray:
    '''
    Byte address of every accessed element in memory order, as uint64
    wrapping modulo 2**64. Segmented ops list field f of element e at
    position e*nf + f. Indexed ops add the byte offsets in indices.
    '''
    vt = inst.vtype
    base = np.uint64(inst.scalar_base & MASK64)
    if inst.is_indexed:
        offsets = np.asarray(indices, dtype=np.uint64)[:vt.vl]
        return base + offsets
    count = vt.vl * inst.nf
    if inst.opcode in STRIDED_OPS:
        step = np.uint64(inst.stride & MASK64)
    else:
        step = np.uint64(vt.esize)
    return base + np.arange(count, dtype=np.uint64) * step


ELEMENT_DTYPES = {8: np.dtype("<u1"), 16: np.dtype("<u2"), 32: np.dtype("<u4"), 64: np.dtype("<u8")}


def compute(opcode: Opcode, sew: int, vd: np.ndarray, vs1: Optional[np.ndarray],
            vs2: np.ndarray, scalar: Optional[int] = None) -> np.ndarray:
    '''
    Element-wise integer arithmetic over little-endian byte arrays, with
    modular wrap-around at sew bits. Returns the result bytes.
    '''
    dt = ELEMENT_DTYPES[sew]
    b = vs2.view(dt)
    if vs1 is None:
        a = np.array((scalar or 0) & ((1 << sew) - 1), dtype=dt)
    else:
        a = vs1.view(dt)
    with np.errstate(over="ignore"):
        if opcode is Opcode.VADD:
            out = b + a
        elif opcode is Opcode.VMUL:
            out = b * a
        elif opcode in ACCUMULATE_OPS:
            out = vd.view(dt) + a * b
        else:
            raise ValueError(f"{opcode.value} is not an arithmetic opcode")
    return np.ascontiguousarray(out, dtype=dt).view(np.uint8)


def render_instruction(inst: VectorInstruction, with_lmul: bool = False) -> str:
    '''
    Short register-level text of an instruction, e.g. "vadd.2 v0, v0, v2"
    '''
    name = inst.opcode.value
    if with_lmul and inst.vtype is not None:
        name = f"{name}.{inst.vtype.lmul}"
    regs = []
    if inst.vd is not None:
        regs.append(f"v{inst.vd}")
    if inst.is_arith:
        regs.append(f"v{inst.vs1}" if inst.vs1 is not None else str(inst.scalar))
        regs.append(f"v{inst.vs2}")
    elif inst.vs2 is not None:
        regs.append(f"v{inst.vs2}")
    return f"{name} {', '.join(regs)}"
