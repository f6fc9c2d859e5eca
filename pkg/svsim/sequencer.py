"""
Per-path issue queues and sequencers. A sequencer cracks its resident
instruction into one micro-op per cycle, gates each on hazards and port
grants, and clears its precise scoreboard bits as element groups are
finished.
"""

import enum
import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

from svsim.config import SimConfig
from svsim.errors import SchedulingViolation
from svsim.isa import (
    ACCUMULATE_OPS, VectorInstruction, groups_per_register_group, operand_registers,
    register_eg_base, Operand,
)
from svsim.scoreboard import (
    AgeTag, EgScoreboard, Hazard, WindowEntry, WindowKind, brute_force_hazard, compose_older, hazard,
)
from svsim.vrf import ARITH_PORT, LOAD_PORT, VectorRegisterFile

logger = logging.getLogger(__name__)


class Policy(enum.Enum):
    CLEAR_ON_ISSUE = "clear_on_issue"
    HOLD_UNTIL_DONE = "hold_until_done"


def irregular_policy(inst: VectorInstruction) -> Policy:
    '''
    Indexed accesses have no static element order, so their scoreboard
    bits are held until the instruction finishes sequencing.
    '''
    if inst.is_indexed:
        return Policy.HOLD_UNTIL_DONE
    return Policy.CLEAR_ON_ISSUE


@dataclass(frozen=True)
class QueuedInst:
    inst: VectorInstruction
    age: AgeTag
    prsb: EgScoreboard
    pwsb: EgScoreboard


class IssueQueue:
    '''
    In-order instruction FIFO in front of one sequencer. Capacity 0 is a
    pass-through wire.
    '''

    def __init__(self, capacity: int):
        self.capacity = capacity
        self.entries = deque()

    @property
    def full(self) -> bool:
        return len(self.entries) >= self.capacity

    def push(self, entry: QueuedInst):
        if self.full:
            raise OverflowError("issue queue is full")
        self.entries.append(entry)

    def pop(self) -> QueuedInst:
        return self.entries.popleft()

    def head(self) -> Optional[QueuedInst]:
        return self.entries[0] if self.entries else None

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


@dataclass(frozen=True)
class MicroOp:
    index: int
    reads: tuple
    write: Optional[int]
    fu: str
    wb_delay: int
    age: AgeTag
    seq_id: int
    last: bool

    @property
    def writes(self) -> tuple:
        return () if self.write is None else (self.write,)


def _eg(reg: int, k: int, machine: SimConfig) -> int:
    return register_eg_base(reg, machine) + k


def build_schedule(inst: VectorInstruction, machine: SimConfig) -> list:
    '''
    (reads, write) per micro-op. Regular ops walk element group k of
    every operand together; segmented ops walk k then field f, so field
    f of group k lives in register vd + f*lmul.
    '''
    n = groups_per_register_group(inst, machine)
    steps = []
    if inst.is_arith:
        for k in range(n):
            reads = []
            if inst.vs1 is not None:
                reads.append(_eg(inst.vs1, k, machine))
            reads.append(_eg(inst.vs2, k, machine))
            if inst.opcode in ACCUMULATE_OPS:
                reads.append(_eg(inst.vd, k, machine))
            steps.append((tuple(dict.fromkeys(reads)), _eg(inst.vd, k, machine)))
        return steps
    fields = operand_registers(inst, Operand.VD)
    for k in range(n):
        for reg in fields:
            eg = _eg(reg, k, machine)
            index_read = (_eg(inst.vs2, k, machine),) if inst.is_indexed else ()
            if inst.is_load:
                steps.append((index_read, eg))
            else:
                steps.append(((eg,) + index_read, None))
    return steps


def path_fu(inst: VectorInstruction) -> str:
    if inst.is_load:
        return "load"
    if inst.is_store:
        return "store"
    return inst.opcode.name


@dataclass
class SequencerState:
    path: str
    size: int
    inst: Optional[VectorInstruction] = None
    age: Optional[AgeTag] = None
    prsb: EgScoreboard = None
    pwsb: EgScoreboard = None
    next_index: int = 0
    ready_cycle: int = 0
    schedule: list = field(default_factory=list)
    last_read: dict = field(default_factory=dict)
    last_write: dict = field(default_factory=dict)
    # operands of the next micro-op already read on earlier cycles
    gathered: frozenset = frozenset()

    def __post_init__(self):
        if self.prsb is None:
            self.prsb = EgScoreboard(self.size)
            self.pwsb = EgScoreboard(self.size)

    @property
    def busy(self) -> bool:
        return self.inst is not None

    @property
    def remaining(self) -> int:
        return len(self.schedule) - self.next_index if self.busy else 0

    def load(self, inst: VectorInstruction, age: AgeTag, machine: SimConfig, ready_cycle: int):
        self.inst = inst
        self.age = age
        self.next_index = 0
        self.ready_cycle = ready_cycle
        self.gathered = frozenset()
        self.schedule = build_schedule(inst, machine)
        reads, writes = set(), set()
        self.last_read, self.last_write = {}, {}
        hold = irregular_policy(inst) is Policy.HOLD_UNTIL_DONE
        final = len(self.schedule) - 1
        for i, (rs, w) in enumerate(self.schedule):
            for g in rs:
                reads.add(g)
                self.last_read[g] = final if hold else i
            if w is not None:
                writes.add(w)
                self.last_write[w] = final if hold else i
        self.prsb = EgScoreboard.of(self.size, reads)
        self.pwsb = EgScoreboard.of(self.size, writes)

    def clear(self):
        self.inst = None
        self.age = None
        self.next_index = 0
        self.schedule = []
        self.gathered = frozenset()
        self.last_read, self.last_write = {}, {}
        self.prsb = EgScoreboard(self.size)
        self.pwsb = EgScoreboard(self.size)

    def window_entry(self) -> WindowEntry:
        return WindowEntry(self.age, self.prsb, self.pwsb, WindowKind.SEQUENCER_PRECISE, self.inst)


def next_microop(seq: SequencerState, machine: SimConfig) -> Optional[MicroOp]:
    if not seq.busy or seq.next_index >= len(seq.schedule):
        return None
    i = seq.next_index
    reads, write = seq.schedule[i]
    fu = path_fu(seq.inst)
    wb_delay = machine.fu_latency[fu] if seq.inst.is_arith else 0
    return MicroOp(i, reads, write, fu, wb_delay, seq.age, seq.inst.seq_id,
                   i == len(seq.schedule) - 1)


class IssuePorts:
    '''
    One cycle's structural resources: VRF read ports, write-port
    reservations and the shared arithmetic pipelines.
    '''

    def __init__(self, vrf: VectorRegisterFile, cycle: int, arith_slots: int):
        self.vrf = vrf
        self.cycle = cycle
        self.arith_slots = arith_slots

    def _write_port(self, mop: MicroOp) -> str:
        return LOAD_PORT if mop.fu == "load" else ARITH_PORT

    def check(self, mop: MicroOp, reads: Optional[Iterable[int]] = None) -> Optional[str]:
        reads = mop.reads if reads is None else reads
        if not self.vrf.arbiter.fits(reads):
            return "read_port"
        if mop.write is not None:
            if not self.vrf.reservations.available(mop.write, self.cycle + mop.wb_delay, self._write_port(mop)):
                return "write_port"
        if mop.fu not in ("load", "store") and self.arith_slots <= 0:
            return "fu"
        return None

    def gather(self, reads: Iterable[int]) -> frozenset:
        '''
        Reads that can never share one cycle's ports are collected a bank
        port at a time; returns what was read this cycle.
        '''
        if not self.vrf.arbiter.oversubscribed(reads):
            return frozenset()
        return self.vrf.arbiter.gather(reads)

    def commit(self, mop: MicroOp, reads: Optional[Iterable[int]] = None):
        self.vrf.arbiter.claim(mop.reads if reads is None else reads)
        if mop.write is not None:
            self.vrf.reserve_write(mop.write, self.cycle + mop.wb_delay, self._write_port(mop))
        if mop.fu not in ("load", "store"):
            self.arith_slots -= 1


@dataclass(frozen=True)
class SequenceResult:
    issued: Optional[MicroOp] = None
    stall: Optional[str] = None
    verdict: Hazard = Hazard.CLEAR


def _advance(seq: SequencerState, mop: MicroOp):
    done_reads = [g for g in mop.reads if seq.last_read.get(g) == mop.index]
    done_writes = [g for g in mop.writes if seq.last_write.get(g) == mop.index]
    if mop.last:
        seq.prsb = EgScoreboard(seq.size)
        seq.pwsb = EgScoreboard(seq.size)
    else:
        seq.prsb = seq.prsb.without(*done_reads)
        seq.pwsb = seq.pwsb.without(*done_writes)
    seq.next_index += 1
    seq.gathered = frozenset()


def try_sequence(seq: SequencerState, window: Iterable[WindowEntry], ports: IssuePorts,
                 machine: SimConfig,
                 ready: Optional[Callable[[MicroOp], Optional[str]]] = None) -> SequenceResult:
    '''
    Issues the next micro-op if it is hazard-free against every older
    window entry, its data is ready, and its ports are granted. Data
    hazards are reported before structural stalls.
    '''
    if not seq.busy:
        return SequenceResult(stall="empty")
    mop = next_microop(seq, machine)
    if mop is None:
        return SequenceResult(stall="empty")
    older_prsb, older_pwsb = compose_older(window, seq.age)
    verdict = hazard(mop.reads, mop.writes, older_prsb, older_pwsb)
    if verdict is not Hazard.CLEAR:
        return SequenceResult(stall=verdict.value, verdict=verdict)
    if ready is not None:
        cause = ready(mop)
        if cause:
            return SequenceResult(stall=cause)
    pending = tuple(g for g in mop.reads if g not in seq.gathered)
    cause = ports.check(mop, pending)
    if cause == "read_port":
        seq.gathered |= ports.gather(pending)
    if cause:
        return SequenceResult(stall=cause)
    ports.commit(mop, pending)
    _advance(seq, mop)
    return SequenceResult(issued=mop)


class HazardMonitor:
    '''
    Online safety checks: composed verdicts must match a per-entry check,
    issued micro-ops must be hazard-free against every older entry, and
    an issued write must be the oldest write to its element group.
    '''

    def __init__(self):
        self.checked = 0

    def check_verdict(self, mop: MicroOp, window, verdict: Hazard):
        brute = brute_force_hazard(mop.reads, mop.writes, window, mop.age)
        if brute is not verdict:
            raise SchedulingViolation(
                f"seq {mop.seq_id} uop {mop.index}: composed verdict {verdict.value} != per-entry {brute.value}")

    def check_issue(self, mop: MicroOp, window, inflight_writes: Iterable[int]):
        self.checked += 1
        self.check_verdict(mop, window, Hazard.CLEAR)
        if mop.write is not None and mop.write in set(inflight_writes):
            raise SchedulingViolation(
                f"seq {mop.seq_id} uop {mop.index} writes eg{mop.write} behind an in-flight write")
