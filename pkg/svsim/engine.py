"""
Cycle loop of the vector backend. One simulated cycle runs these phases
in a fixed order:

    1. memory responses are merged into the load path
    2. functional-unit writebacks due this cycle update the register file
    3. the dispatch queue head is accepted into issue queues / sequencers
    4. sequencers issue micro-ops, oldest instruction first
    5. the frontend dispatches into the dispatch queue and the LSU
    6. the LSU offers its next load and store requests to memory

A write made in phase 2 is visible to reads issued in phase 4 of the
same cycle.
"""

import logging
from collections import Counter, deque
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import pandas as pd

from svsim.config import SimConfig
from svsim.errors import DeadlockError
from svsim.frontend import Frontend
from svsim.isa import (
    ELEMENT_DTYPES, Operand, VectorInstruction, compute, element_addresses, element_groups_of,
    register_eg_base, render_instruction,
)
from svsim.lsu import LoadStoreUnit
from svsim.memsys import MemorySystem, SparseMemory
from svsim.oracle import ArchState
from svsim.program import Program
from svsim.scoreboard import (
    AgeTagAllocator, EgScoreboard, Hazard, WindowEntry, WindowKind, coarse_from_inst,
)
from svsim.sequencer import (
    HazardMonitor, IssuePorts, IssueQueue, QueuedInst, SequencerState, next_microop, try_sequence,
)
from svsim.vrf import ARITH_PORT, LOAD_PORT, VectorRegisterFile

logger = logging.getLogger(__name__)

STALL_CAUSES = ("raw", "waw", "war", "read_port", "write_port", "fu", "mem_data",
                "store_buffer", "ordered", "empty")

TRACE_COLUMNS = ["cycle", "path", "seq_id", "eg_reads", "eg_write", "stall_cause"]

MAX_LMUL = 8


@dataclass(frozen=True)
class Wiring:
    '''
    How the feature toggles connect the backend: load run-ahead depth,
    whether load address generation waits for the load sequencer, and
    whether sequencing is serialized to the oldest instruction.
    '''
    load_dq_depth: int
    coupled_loads: bool
    ordered: bool


def apply_features(config: SimConfig) -> Wiring:
    dae = config.features.dae
    return Wiring(
        load_dq_depth=config.lsu.load_dq_depth if dae else 0,
        coupled_loads=not dae,
        ordered=not config.features.ooo,
    )


def latency_bound(config: SimConfig, max_lmul: int = MAX_LMUL) -> int:
    '''
    Analytic maximum tolerable load latency: every dispatch- and
    issue-queue slot holds a load grouped max_lmul registers deep, each
    register taking chime cycles.
    '''
    return (config.dispatch_q_depth + config.iq_depth) * max_lmul * config.chime


@dataclass
class SimMetrics:
    dlen: int
    arith_issue_width: int = 1
    cycles: int = 0
    element_ops: int = 0
    active_bits: int = 0
    bytes_moved: int = 0
    uops_issued: int = 0
    fu_busy_cycles: int = 0
    mem_busy_cycles: int = 0
    frontend_stall_cycles: int = 0
    tlb_checks: int = 0
    dispatched: int = 0
    traps: int = 0
    stall_cycles: Counter = field(default_factory=Counter)

    @property
    def compute_util(self) -> float:
        if not self.cycles:
            return 0.0
        return self.active_bits / (self.dlen * self.arith_issue_width * self.cycles)

    @property
    def mem_util(self) -> float:
        if not self.cycles:
            return 0.0
        return self.bytes_moved * 8 / (self.dlen * self.cycles)

    @property
    def utilization(self) -> float:
        return max(self.compute_util, self.mem_util)

    def as_row(self, num_paths: int = 1) -> dict:
        row = {
            "cycles": self.cycles,
            "element_ops": self.element_ops,
            "bytes_moved": self.bytes_moved,
            "compute_util": round(self.compute_util, 6),
            "mem_util": round(self.mem_util, 6),
            "utilization": round(self.utilization, 6),
            "fu_busy_cycles": self.fu_busy_cycles,
            "mem_busy_cycles": self.mem_busy_cycles,
            "frontend_stall_cycles": self.frontend_stall_cycles,
            "tlb_checks": self.tlb_checks,
            "dispatched": self.dispatched,
            "traps": self.traps,
        }
        slots = max(1, self.cycles * num_paths)
        for cause in STALL_CAUSES:
            row[f"stall_{cause}_pct"] = round(100.0 * self.stall_cycles[cause] / slots, 4)
        return row


@dataclass(frozen=True)
class TraceRecord:
    cycle: int
    path: str
    seq_id: int
    eg_reads: tuple
    eg_write: int
    stall_cause: str


def trace_frame(trace) -> pd.DataFrame:
    rows = [(r.cycle, r.path, r.seq_id, " ".join(str(g) for g in r.eg_reads), r.eg_write, r.stall_cause)
            for r in trace]
    return pd.DataFrame(rows, columns=TRACE_COLUMNS)


@dataclass
class _DqEntry:
    inst: VectorInstruction
    prsb: EgScoreboard
    pwsb: EgScoreboard


@dataclass
class _FuWrite:
    at_cycle: int
    age: object
    eg: int
    data: np.ndarray
    mask: np.ndarray
    inst: VectorInstruction


class Simulator:
    '''
    One backend instance executing one program. Instances share no
    state, so sweeps may run many of them in parallel.
    '''

    def __init__(self, program: Program, config: SimConfig, record_trace: bool = True):
        self.program = program
        self.config = config
        self.wiring = apply_features(config)
        self.size = config.total_egs
        self.memsys = MemorySystem(config, SparseMemory(program.data_init))
        self.vrf = VectorRegisterFile(config)
        self.lsu = LoadStoreUnit(config, self.memsys, load_dq_depth=self.wiring.load_dq_depth,
                                 coupled_loads=self.wiring.coupled_loads)
        self.frontend = Frontend(program.insts, config)
        self.ages = AgeTagAllocator()
        self.dq = deque()
        self.iqs = {p: IssueQueue(config.iq_depth) for p in config.paths}
        self.seqs = {p: SequencerState(p, self.size) for p in config.paths}
        self.fu_writes = []
        self.monitor = HazardMonitor() if config.check_hazards else None
        self.metrics = SimMetrics(config.dlen, config.arith_issue_width)
        self.record_trace = record_trace
        self.trace = []
        self.cycle = 0
        self.dispatch_cycle = {}
        self.first_issue = {}
        self.last_issue = {}
        self.writebacks = []
        self.snapshots = {}
        self._watch = set()
        self._rr = 0
        self._progress = False
        self._idle_cycles = 0
        self._watchdog = config.watchdog_factor * max(latency_bound(config), 16)

    # frontend sink

    def can_dispatch(self, inst: VectorInstruction) -> bool:
        if self.config.dispatch_q_depth == 0:
            # pass-through: the backend must take the instruction this cycle
            if self.dq or not self._acceptable(inst):
                return False
        elif len(self.dq) >= self.config.dispatch_q_depth:
            return False
        if inst.is_mem and inst.vl > 0:
            return self.lsu.can_accept(inst)
        return True

    def dispatch(self, inst: VectorInstruction, indices: Optional[np.ndarray]):
        prsb, pwsb = coarse_from_inst(inst, self.config)
        self.dq.append(_DqEntry(inst, prsb, pwsb))
        if inst.is_mem and inst.vl > 0:
            self.lsu.enqueue(inst, element_addresses(inst, indices))
        self.dispatch_cycle[inst.seq_id] = self.cycle
        self._progress = True
        if self.config.dispatch_q_depth == 0:
            self._accept()

    def index_ready(self, inst: VectorInstruction) -> bool:
        index_egs = EgScoreboard.of(self.size, element_groups_of(inst, Operand.VS2, self.config))
        pending = EgScoreboard(self.size)
        for entry in self.dq:
            pending = pending | entry.pwsb
        for entry in self.window():
            pending = pending | entry.pwsb
        return not (pending & index_egs)

    def read_indices(self, inst: VectorInstruction) -> np.ndarray:
        vt = inst.vtype
        base = register_eg_base(inst.vs2, self.config)
        raw = self.vrf.data[base:base + vt.lmul * self.config.chime].reshape(-1)
        return raw[:vt.vl * vt.esize].view(ELEMENT_DTYPES[vt.sew]).astype(np.uint64)

    # window

    def window(self) -> list:
        entries = []
        for path in self.config.paths:
            for q in self.iqs[path]:
                entries.append(WindowEntry(q.age, q.prsb, q.pwsb, WindowKind.ISSUE_QUEUE_COARSE, q.inst))
            seq = self.seqs[path]
            if seq.busy:
                entries.append(seq.window_entry())
        for w in self.fu_writes:
            entries.append(WindowEntry(w.age, EgScoreboard(self.size), EgScoreboard.of(self.size, [w.eg]),
                                       WindowKind.FU_INFLIGHT, w.inst))
        return entries

    def snapshot_rows(self) -> list:
        '''
        One line per live instruction, oldest first, with the union of its
        issue-queue, sequencer and in-flight writeback scoreboards.
        '''
        merged = {}
        for entry in self.window():
            if entry.age in merged:
                inst, prsb, pwsb = merged[entry.age]
                merged[entry.age] = (inst, prsb | entry.prsb, pwsb | entry.pwsb)
            else:
                merged[entry.age] = (entry.inst, entry.prsb, entry.pwsb)
        rows = []
        for age in sorted(merged):
            inst, prsb, pwsb = merged[age]
            rows.append(f"{render_instruction(inst, with_lmul=True)}, {age.tag}, PRSb={prsb}, PWSb={pwsb}")
        return rows

    def watch(self, cycle: int):
        self._watch.add(cycle)

    # phases

    def _writeback(self):
        due = [w for w in self.fu_writes if w.at_cycle <= self.cycle]
        if not due:
            return
        self.fu_writes = [w for w in self.fu_writes if w.at_cycle > self.cycle]
        for w in due:
            self.vrf.write(w.eg, w.data, w.mask, port=ARITH_PORT)
            self.writebacks.append((self.cycle, w.inst.seq_id, w.eg))
        self._progress = True

    def _steer(self, inst: VectorInstruction) -> str:
        # arithmetic goes to the least occupied path, ties broken round-robin
        if inst.is_load:
            return "load"
        if inst.is_store:
            return "store"
        arith = self.config.arith_paths
        order = arith[self._rr:] + arith[:self._rr]
        return min(order, key=lambda p: len(self.iqs[p]) + self.seqs[p].busy)

    def _acceptable(self, inst: VectorInstruction) -> bool:
        if inst.vl == 0:
            return True
        path = self._steer(inst)
        seq, iq = self.seqs[path], self.iqs[path]
        return (not seq.busy and len(iq) == 0) or not iq.full

    def _bypass_delay(self) -> int:
        return 1 if self.config.no_bypass else 0

    def _accept(self):
        accepted = 0
        while self.dq and accepted < self.config.frontend.dispatch_ipc:
            entry = self.dq[0]
            inst = entry.inst
            if inst.vl == 0:
                self.dq.popleft()
                accepted += 1
                self._progress = True
                continue
            if not self._acceptable(inst):
                break
            path = self._steer(inst)
            seq, iq = self.seqs[path], self.iqs[path]
            direct = not seq.busy and len(iq) == 0
            if inst.is_arith:
                arith = self.config.arith_paths
                self._rr = (arith.index(path) + 1) % len(arith)
            self.dq.popleft()
            age = self.ages.alloc()
            if inst.is_mem:
                self.lsu.bind_age(inst.seq_id, age)
            if direct:
                seq.load(inst, age, self.config, self.cycle + self._bypass_delay())
            else:
                iq.push(QueuedInst(inst, age, entry.prsb, entry.pwsb))
            accepted += 1
            self._progress = True

    def _oldest_live(self):
        '''
        Oldest instruction still sequencing or with a writeback in flight
        '''
        ages = [s.age for s in self.seqs.values() if s.busy]
        ages.extend(w.age for w in self.fu_writes)
        return min(ages) if ages else None

    def _load_ready(self, mop) -> Optional[str]:
        return None if self.lsu.row_ready(mop.seq_id, mop.index) else "mem_data"

    def _store_ready(self, mop) -> Optional[str]:
        return None if self.lsu.store_row_space(mop.seq_id) else "store_buffer"

    def _execute_arith(self, seq: SequencerState, mop):
        inst = seq.inst
        vt = inst.vtype
        k = mop.index
        cfg = self.config
        line = cfg.line_bytes

        def eg(reg):
            return register_eg_base(reg, cfg) + k

        vs2 = self.vrf.read(eg(inst.vs2))
        vs1 = None if inst.vs1 is None else self.vrf.read(eg(inst.vs1))
        vd = self.vrf.read(eg(inst.vd))
        result = compute(inst.opcode, vt.sew, vd, vs1, vs2, inst.scalar)
        active_bytes = min(line, vt.vl * vt.esize - k * line)
        mask = np.zeros(line, dtype=bool)
        mask[:active_bytes] = True
        self.fu_writes.append(_FuWrite(self.cycle + mop.wb_delay, seq.age, mop.write, result, mask, inst))
        active = active_bytes // vt.esize
        self.metrics.element_ops += active
        self.metrics.active_bits += active * vt.sew

    def _execute(self, seq: SequencerState, mop):
        inst = seq.inst
        if inst.is_arith:
            self._execute_arith(seq, mop)
        elif inst.is_load:
            data, mask = self.lsu.take_row(mop.seq_id, mop.index)
            self.vrf.write(mop.write, data, mask, port=LOAD_PORT)
            self.writebacks.append((self.cycle, mop.seq_id, mop.write))
        else:
            self.lsu.deliver_row(mop.seq_id, mop.index, self.vrf.read(mop.reads[0]))

    def _finish(self, path: str):
        seq = self.seqs[path]
        self.ages.free(seq.age)
        seq.clear()
        iq = self.iqs[path]
        if len(iq):
            q = iq.pop()
            seq.load(q.inst, q.age, self.config, self.cycle + 1 + self._bypass_delay())

    def _record(self, path: str, seq_id: int, reads, write, cause: str):
        if cause:
            self.metrics.stall_cycles[cause] += 1
        if self.record_trace:
            self.trace.append(TraceRecord(self.cycle, path, seq_id, tuple(reads),
                                          -1 if write is None else write, cause))

    def _issue(self):
        window = self.window()
        if self.cycle in self._watch:
            self.snapshots[self.cycle] = self.snapshot_rows()
        ports = IssuePorts(self.vrf, self.cycle, self.config.arith_issue_width)
        oldest = self._oldest_live()
        busy = sorted((s for s in self.seqs.values() if s.busy), key=lambda s: s.age)
        arith_issued = False
        for seq in busy:
            mop = next_microop(seq, self.config)
            if self.cycle < seq.ready_cycle:
                self._record(seq.path, mop.seq_id, (), None, "empty")
                continue
            if self.wiring.ordered and seq.age != oldest:
                self._record(seq.path, mop.seq_id, mop.reads, mop.write, "ordered")
                continue
            ready = None
            if seq.inst.is_load:
                ready = self._load_ready
            elif seq.inst.is_store:
                ready = self._store_ready
            result = try_sequence(seq, window, ports, self.config, ready)
            if result.issued is None:
                if self.monitor is not None and result.verdict is not Hazard.CLEAR:
                    self.monitor.check_verdict(mop, window, result.verdict)
                self._record(seq.path, mop.seq_id, mop.reads, mop.write, result.stall)
                continue
            if self.monitor is not None:
                self.monitor.check_issue(mop, window, [w.eg for w in self.fu_writes])
            self._execute(seq, mop)
            self._record(seq.path, mop.seq_id, mop.reads, mop.write, "")
            self.first_issue.setdefault(mop.seq_id, self.cycle)
            self.last_issue[mop.seq_id] = self.cycle
            self.metrics.uops_issued += 1
            arith_issued = arith_issued or mop.fu not in ("load", "store")
            self._progress = True
            if logger.isEnabledFor(logging.DEBUG):
                logger.debug("cycle %d %s issue seq %d uop %d", self.cycle, seq.path, mop.seq_id, mop.index)
            if mop.last:
                self._finish(seq.path)
        if arith_issued:
            self.metrics.fu_busy_cycles += 1

    def _request(self):
        load_seq = self.seqs["load"]
        allowed = load_seq.inst.seq_id if load_seq.busy else None
        accepted = self.lsu.issue_requests(self.cycle, allowed)
        if accepted:
            self.metrics.mem_busy_cycles += 1
            self._progress = True

    # driver

    @property
    def done(self) -> bool:
        return (self.frontend.done and not self.dq and not self.fu_writes
                and all(len(q) == 0 for q in self.iqs.values())
                and not any(s.busy for s in self.seqs.values())
                and self.lsu.idle and self.memsys.idle)

    def step(self):
        '''
        Advances one cycle. Raises DeadlockError when nothing has moved
        for the watchdog horizon.
        '''
        self._progress = False
        self.vrf.new_cycle(self.cycle)
        responses = self.memsys.tick(self.cycle)
        if responses:
            self.lsu.on_responses(responses)
            self._progress = True
        self._writeback()
        self._accept()
        self._issue()
        if self.frontend.tick(self.cycle, self):
            self._progress = True
        self._request()
        if self._progress or not self.memsys.idle or self.frontend.busy_at(self.cycle):
            self._idle_cycles = 0
        else:
            self._idle_cycles += 1
            if self._idle_cycles > self._watchdog:
                raise DeadlockError(f"no progress for {self._idle_cycles} cycles at cycle {self.cycle}",
                                    self.dump())
        self.cycle += 1

    def run(self, max_cycles: Optional[int] = None):
        # an empty program still spends its drain cycle
        while self.cycle == 0 or not self.done:
            if max_cycles is not None and self.cycle >= max_cycles:
                break
            self.step()
        self._finalize()
        return self.arch_state(), self.metrics, self.trace

    def _finalize(self):
        m = self.metrics
        m.cycles = self.cycle
        m.bytes_moved = self.lsu.bytes_moved
        m.frontend_stall_cycles = self.frontend.stall_cycles
        m.tlb_checks = self.frontend.tlb_checks
        m.dispatched = self.frontend.dispatched
        m.traps = int(self.frontend.trap is not None)
        logger.info("simulated %d cycles, utilization %.3f%s", m.cycles, m.utilization,
                    f", {self.frontend.trap}" if self.frontend.trap else "")

    def arch_state(self) -> ArchState:
        return ArchState(self.vrf.register_bytes(), self.memsys.backing.copy(),
                         self.frontend.vtype, self.frontend.trap)

    def dump(self) -> str:
        lines = [f"cycle {self.cycle}: dq={len(self.dq)} fu_writes={len(self.fu_writes)}"]
        for path in self.config.paths:
            seq = self.seqs[path]
            head = f"seq {seq.inst.seq_id} uop {seq.next_index}" if seq.busy else "idle"
            lines.append(f"  {path}: iq={len(self.iqs[path])} {head}")
        lines.extend(self.snapshot_rows())
        lsu = self.lsu.dump()
        if lsu:
            lines.append(lsu)
        return "\n".join(lines)


def run(program: Program, config: SimConfig, record_trace: bool = True):
    '''
    Simulates program to completion or trap. Returns
    (ArchState, SimMetrics, trace).
    '''
    return Simulator(program, config, record_trace=record_trace).run()


def with_features(config: SimConfig, dae: bool, ooo: bool) -> SimConfig:
    return replace(config, features=replace(config.features, dae=dae, ooo=ooo))
