"""
Pre-commit fault-check frontend: pipelined page checks for contiguous
accesses, element-wise iterative mode for strided and indexed accesses,
and in-order dispatch into the backend.
"""

import logging
from dataclasses import dataclass, replace
from typing import Optional, Protocol

import numpy as np

from svsim.config import FrontendConfig, SimConfig
from svsim.isa import (
    MASK64, Opcode, Operand, TrapReport, VectorInstruction, VType,
    apply_vsetvli, bind_vtype, element_addresses, element_groups_of,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DispatchOp:
    inst: VectorInstruction
    phys_slice: tuple
    crack_index: int


@dataclass(frozen=True)
class CheckResult:
    ops: tuple
    cycles: int
    tlb_checks: int
    trap: Optional[TrapReport] = None

    @property
    def stall_cycles(self) -> int:
        return max(0, self.cycles - 1)


def bound_of(inst: VectorInstruction) -> Optional[tuple]:
    '''
    Conservative [lo, hi) byte extent of a unit-stride or strided access.
    None for indexed accesses, which have no static bound.
    '''
    if inst.is_indexed:
        return None
    vt = inst.vtype
    base = inst.scalar_base
    if vt.vl == 0:
        return base, base
    if inst.opcode in (Opcode.VLSE, Opcode.VSSE):
        last = base + (vt.vl - 1) * inst.stride
        return min(base, last), max(base, last) + vt.esize
    return base, base + vt.vl * inst.nf * vt.esize


def _first_element_on_page(inst: VectorInstruction, page: int, page_bytes: int):
    esize = inst.vtype.esize
    addrs = element_addresses(inst)
    for j, a in enumerate(addrs.tolist()):
        if a // page_bytes <= page <= ((a + esize - 1) & MASK64) // page_bytes:
            return j, a
    raise AssertionError(f"no element of seq {inst.seq_id} touches page {page:#x}")


def check_and_dispatch(inst: VectorInstruction, fe: FrontendConfig) -> CheckResult:
    '''
    Pipelined mode: one TLB check per page the access touches, one cycle
    each on the single TLB port. A fault page traps before its piece.
    '''
    lo, hi = bound_of(inst)
    if lo == hi:
        return CheckResult((DispatchOp(inst, (lo, lo), 0),), 1, 0)
    page_bytes = fe.page_bytes
    ops = []
    checks = 0
    start = lo
    while start < hi:
        page = start // page_bytes
        end = min(hi, (page + 1) * page_bytes)
        checks += 1
        if page in fe.fault_pages:
            j, addr = _first_element_on_page(inst, page, page_bytes)
            trap = TrapReport(inst.seq_id, j // inst.nf, addr, page)
            return CheckResult(tuple(ops), checks, checks, trap)
        ops.append(DispatchOp(inst, (start, end), len(ops)))
        start = end
    return CheckResult(tuple(ops), checks, checks)


def iterative_expand(inst: VectorInstruction, indices, fe: FrontendConfig) -> CheckResult:
    '''
    Iterative mode: one cycle per element plus one TLB-port cycle for
    each page not yet checked by this instruction.
    '''
    vt = inst.vtype
    if vt.vl == 0:
        return CheckResult((), 1, 0)
    addrs = element_addresses(inst, indices)
    esize = vt.esize
    page_bytes = fe.page_bytes
    checked = set()
    ops = []
    cycles = 0
    for j, a in enumerate(addrs.tolist()):
        cycles += 1
        last = ((a + esize - 1) & MASK64) // page_bytes
        for page in dict.fromkeys((a // page_bytes, last)):
            if page in checked:
                continue
            checked.add(page)
            cycles += 1
            if page in fe.fault_pages:
                trap = TrapReport(inst.seq_id, j, a, page)
                return CheckResult(tuple(ops), cycles, len(checked), trap)
        ops.append(DispatchOp(inst, (a, a + esize), j))
    return CheckResult(tuple(ops), cycles, len(checked))


class DispatchSink(Protocol):

    def can_dispatch(self, inst: VectorInstruction) -> bool: ...

    def dispatch(self, inst: VectorInstruction, indices: Optional[np.ndarray]) -> None: ...

    def index_ready(self, inst: VectorInstruction) -> bool: ...

    def read_indices(self, inst: VectorInstruction) -> np.ndarray: ...


@dataclass
class _Pending:
    inst: VectorInstruction
    result: Optional[CheckResult]
    indices: Optional[np.ndarray]
    ready: int


class Frontend:
    '''
    Walks the program in order: executes vsetvli for free, spends the
    cycles of scalar work, checks memory accesses, and dispatches vector
    instructions to the backend at most dispatch_ipc per cycle.
    '''

    def __init__(self, insts, machine: SimConfig):
        self.insts = list(insts)
        self.machine = machine
        self.fe = machine.frontend
        self.pc = 0
        self.vtype = None
        self.trap = None
        self.stall_cycles = 0
        self.scalar_cycles = 0
        self.tlb_checks = 0
        self.dispatched = 0
        self._busy_until = 0
        self._pending = None

    @property
    def done(self) -> bool:
        return self.trap is not None or (self.pc >= len(self.insts) and self._pending is None)

    def busy_at(self, cycle: int) -> bool:
        '''
        True while scalar work or an access check occupies the frontend
        '''
        if self.done:
            return False
        if cycle < self._busy_until:
            return True
        return self._pending is not None and cycle < self._pending.ready

    def _begin(self, inst: VectorInstruction, cycle: int, sink: DispatchSink) -> bool:
        bound = bind_vtype(inst, self.vtype)
        for op in Operand:
            element_groups_of(bound, op, self.machine)
        if not bound.is_mem or bound.vl == 0:
            self._pending = _Pending(bound, None, None, cycle)
            return True
        indices = None
        if bound.unit_stride:
            result = check_and_dispatch(bound, self.fe)
        else:
            if bound.is_indexed:
                if not sink.index_ready(bound):
                    return False
                indices = sink.read_indices(bound)
            result = iterative_expand(bound, indices, self.fe)
        self.tlb_checks += result.tlb_checks
        self._pending = _Pending(bound, result, indices, cycle + result.cycles - 1)
        return True

    def tick(self, cycle: int, sink: DispatchSink) -> int:
        sent = 0
        while sent < self.fe.dispatch_ipc and not self.done:
            if cycle < self._busy_until:
                self.scalar_cycles += 1
                break
            if self._pending is None:
                inst = self.insts[self.pc]
                if inst.opcode is Opcode.VSETVLI:
                    self.vtype = apply_vsetvli(inst, self.machine)
                    self.pc += 1
                    continue
                if inst.opcode is Opcode.SCALAR:
                    self.pc += 1
                    if inst.scalar:
                        self._busy_until = cycle + inst.scalar
                        self.scalar_cycles += 1
                        break
                    continue
                if not self._begin(inst, cycle, sink):
                    self.stall_cycles += 1
                    break
            pending = self._pending
            if cycle < pending.ready:
                self.stall_cycles += 1
                break
            trap = pending.result.trap if pending.result else None
            if trap is not None:
                if trap.element_index > 0:
                    vt = pending.inst.vtype
                    head = replace(pending.inst, vtype=VType(vt.sew, vt.lmul, trap.element_index))
                    if not sink.can_dispatch(head):
                        self.stall_cycles += 1
                        break
                    sink.dispatch(head, pending.indices)
                    self.dispatched += 1
                self.trap = trap
                self._pending = None
                logger.info("frontend trap at cycle %d: %s", cycle, trap)
                break
            if not sink.can_dispatch(pending.inst):
                self.stall_cycles += 1
                break
            sink.dispatch(pending.inst, pending.indices)
            self.dispatched += 1
            self._pending = None
            self.pc += 1
            sent += 1
        return sent
