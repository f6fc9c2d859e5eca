"""
Timing-free, in-order functional reference model. Its final register
file and memory define architectural correctness for the timing model.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from svsim.config import SimConfig
from svsim.isa import (
    ELEMENT_DTYPES, Opcode, Operand, TrapReport, VectorInstruction, VType,
    apply_vsetvli, bind_vtype, compute, element_addresses, element_groups_of,
)
from svsim.memsys import SparseMemory
from svsim.program import Program

logger = logging.getLogger(__name__)


@dataclass
class ArchState:
    vrf: np.ndarray
    mem: SparseMemory
    vtype: Optional[VType] = None
    trap: Optional[TrapReport] = None

    @classmethod
    def initial(cls, machine: SimConfig, data_init=None) -> "ArchState":
        vrf = np.zeros((machine.num_arch_regs, machine.vlen // 8), dtype=np.uint8)
        return cls(vrf, SparseMemory(data_init))

    def copy(self) -> "ArchState":
        return ArchState(self.vrf.copy(), self.mem.copy(), self.vtype, self.trap)

    def group(self, reg: int, lmul: int) -> np.ndarray:
        '''
        Writable flat byte view of an lmul-register group
        '''
        return self.vrf[reg:reg + lmul].reshape(-1)

    def __eq__(self, other):
        if not isinstance(other, ArchState):
            return NotImplemented
        return (np.array_equal(self.vrf, other.vrf) and self.mem == other.mem
                and self.vtype == other.vtype and self.trap == other.trap)


def first_fault(inst: VectorInstruction, addrs: np.ndarray, machine: SimConfig):
    '''
    (memory-order element position, address, page) of the first element
    touching a fault page, or None
    '''
    faults = machine.frontend.fault_pages
    if not faults or addrs.size == 0:
        return None
    page_bytes = machine.frontend.page_bytes
    esize = inst.vtype.esize
    for j, a in enumerate(addrs.tolist()):
        lo = a // page_bytes
        hi = ((a + esize - 1) & ((1 << 64) - 1)) // page_bytes
        if lo in faults:
            return j, a, lo
        if hi in faults:
            return j, a, hi
    return None


def _gather_elements(mem: SparseMemory, addrs: np.ndarray, esize: int, contiguous: bool) -> np.ndarray:
    if addrs.size == 0:
        return np.zeros(0, dtype=np.uint8)
    if contiguous:
        return mem.read(int(addrs[0]), addrs.size * esize)
    return np.concatenate([mem.read(a, esize) for a in addrs.tolist()])


def _execute(state: ArchState, inst: VectorInstruction, machine: SimConfig):
    if inst.opcode is Opcode.VSETVLI:
        state.vtype = apply_vsetvli(inst, machine)
        return
    if inst.opcode is Opcode.SCALAR:
        return
    inst = bind_vtype(inst, state.vtype)
    for op in Operand:
        element_groups_of(inst, op, machine)  # range check
    vt = inst.vtype
    if vt.vl == 0:
        return
    lmul, esize = vt.lmul, vt.esize
    nbytes = vt.vl * esize

    if inst.is_arith:
        vd = state.group(inst.vd, lmul)
        vs2 = state.group(inst.vs2, lmul)[:nbytes].copy()
        vs1 = None if inst.vs1 is None else state.group(inst.vs1, lmul)[:nbytes].copy()
        vd[:nbytes] = compute(inst.opcode, vt.sew, vd[:nbytes].copy(), vs1, vs2, inst.scalar)
        return

    indices = None
    if inst.is_indexed:
        raw = state.group(inst.vs2, lmul)[:nbytes].copy()
        indices = raw.view(ELEMENT_DTYPES[vt.sew]).astype(np.uint64)
    addrs = element_addresses(inst, indices)
    count = addrs.size
    fault = first_fault(inst, addrs, machine)
    if fault is not None:
        # elements before the faulting one complete; segmented ops keep whole records
        j, address, page = fault
        element = j // inst.nf
        state.trap = TrapReport(inst.seq_id, element, address, page)
        if element == 0:
            return
        vt = VType(vt.sew, lmul, element)
        inst = bind_vtype(inst, vt)
        nbytes = element * esize
        count = element * inst.nf
        addrs = addrs[:count]

    contiguous = inst.unit_stride
    if inst.is_load:
        data = _gather_elements(state.mem, addrs, esize, contiguous)
        if inst.is_segmented:
            fields = data.reshape(vt.vl, inst.nf, esize)
            for f in range(inst.nf):
                state.group(inst.vd + f * lmul, lmul)[:nbytes] = fields[:, f, :].reshape(-1)
        else:
            state.group(inst.vd, lmul)[:count * esize] = data
        return

    if inst.is_segmented:
        fields = np.stack([state.group(inst.vd + f * lmul, lmul)[:nbytes].reshape(vt.vl, esize)
                           for f in range(inst.nf)], axis=1)
        data = fields.reshape(-1)
    else:
        data = state.group(inst.vd, lmul)[:count * esize].copy()
    if contiguous:
        state.mem.write(int(addrs[0]), data)
    else:
        for j, a in enumerate(addrs.tolist()):
            state.mem.write(a, data[j * esize:(j + 1) * esize])


def exec_one(state: ArchState, inst: VectorInstruction, machine: SimConfig) -> ArchState:
    new = state.copy()
    if new.trap is None:
        _execute(new, inst, machine)
    return new


def exec_program(p: Program, machine: SimConfig) -> ArchState:
    state = ArchState.initial(machine, p.data_init)
    for inst in p.insts:
        _execute(state, inst, machine)
        if state.trap is not None:
            logger.info("reference model trapped: %s", state.trap)
            break
    return state


def dump_arch(state: ArchState, line_bytes: int = 32) -> str:
    '''
    Deterministic golden-state text: non-zero registers, then non-zero
    memory ranges, then the trap if any.
    '''
    lines = []
    if state.vtype is not None:
        vt = state.vtype
        lines.append(f"vtype: e{vt.sew} m{vt.lmul} vl={vt.vl}")
    for r in range(state.vrf.shape[0]):
        if state.vrf[r].any():
            lines.append(f"v{r}: {state.vrf[r].tobytes().hex()}")
    for start, end in state.mem.nonzero_ranges():
        data = state.mem.read(start, end - start)
        for off in range(0, end - start, line_bytes):
            lines.append(f"mem {start + off:#x}: {data[off:off + line_bytes].tobytes().hex()}")
    if state.trap is not None:
        lines.append(str(state.trap))
    return "\n".join(lines) + "\n"
