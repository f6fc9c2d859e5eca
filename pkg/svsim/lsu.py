"""
Decoupled load/store unit. Every vector memory instruction occupies one
in-flight entry tracked by base and extent. The load path generates
addresses ahead of the backend; the store path drains behind it. Merge
logic turns memory packets into register rows and back, through the
segment buffer for segmented accesses.
"""

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from svsim.config import SimConfig
from svsim.isa import ELEMENT_DTYPES, VectorInstruction, groups_per_register_group
from svsim.memsys import MemorySystem
from svsim.scoreboard import AgeTag

logger = logging.getLogger(__name__)


def seg_transpose(direction: str, nf: int, sew: int, stream) -> np.ndarray:
    '''
    load: memory-order records (f0, f1, ..., f_nf-1)* -> array of nf
    planar field rows. store: the inverse. uint8 streams are treated as
    raw bytes of sew-bit elements.
    '''
    if not 1 <= nf <= 8:
        raise ValueError(f"nf must be in 1..8, got {nf}")
    stream = np.asarray(stream)
    raw = stream.dtype == np.uint8 and sew > 8
    dt = ELEMENT_DTYPES[sew]
    if direction == "load":
        elems = stream.view(dt) if raw else stream
        out = np.ascontiguousarray(elems.reshape(-1, nf).T)
        return out.view(np.uint8) if raw else out
    if direction == "store":
        elems = np.ascontiguousarray(stream).view(dt) if raw else stream
        out = np.ascontiguousarray(elems.reshape(nf, -1).T).reshape(-1)
        return out.view(np.uint8) if raw else out
    raise ValueError(f"direction must be 'load' or 'store', got {direction!r}")


@dataclass
class MemAccessPlan:
    '''
    Static request schedule and row mapping of one memory instruction.
    Elements are numbered in memory order; row i of the register side is
    micro-op i of the instruction.
    '''
    requests: list
    elem_offset: np.ndarray
    elem_req: np.ndarray
    row_elems: list
    row_last_req: np.ndarray
    req_last_row: np.ndarray
    staging_bytes: int
    extent: tuple
    esize: int
    useful_bytes: int
    contiguous: bool = False

    @property
    def num_rows(self) -> int:
        return len(self.row_elems)


def build_plan(inst: VectorInstruction, addrs: np.ndarray, machine: SimConfig, kind: str) -> MemAccessPlan:
    vt = inst.vtype
    esize = vt.esize
    line = machine.line_bytes
    per_row = machine.dlen // vt.sew
    nf = inst.nf
    addrs = [int(a) for a in addrs.tolist()]
    n = len(addrs)

    fields = seg_transpose("load", nf, vt.sew, np.arange(n))
    row_elems = []
    for k in range(groups_per_register_group(inst, machine)):
        for f in range(nf):
            row_elems.append(fields[f, k * per_row:(k + 1) * per_row])
    elem_row = np.zeros(n, dtype=np.int64)
    for i, elems in enumerate(row_elems):
        elem_row[elems] = i

    if inst.unit_stride:
        lo, hi = addrs[0], addrs[0] + n * esize
        line0 = lo // line * line
        nreq = math.ceil((hi - line0) / line)
        first = np.array([(a - line0) // line for a in addrs], dtype=np.int64)
        last = np.array([(a + esize - 1 - line0) // line for a in addrs], dtype=np.int64)
        if kind == "load":
            requests = [(line0 + r * line, line) for r in range(nreq)]
            elem_offset = np.array([a - line0 for a in addrs], dtype=np.int64)
            staging = nreq * line
        else:
            requests = []
            for r in range(nreq):
                start = max(lo, line0 + r * line)
                end = min(hi, line0 + (r + 1) * line)
                requests.append((start, end - start))
            elem_offset = np.array([a - lo for a in addrs], dtype=np.int64)
            staging = hi - lo
        extent = (lo, hi)
    else:
        requests = [(a, esize) for a in addrs]
        first = last = np.arange(n, dtype=np.int64)
        elem_offset = np.arange(n, dtype=np.int64) * esize
        staging = n * esize
        extent = (min(addrs), max(addrs) + esize)

    row_last_req = np.array([int(last[e].max()) for e in row_elems], dtype=np.int64)
    req_last_row = np.full(len(requests), -1, dtype=np.int64)
    for j in range(n):
        for r in range(int(first[j]), int(last[j]) + 1):
            req_last_row[r] = max(req_last_row[r], elem_row[j])
    return MemAccessPlan(requests, elem_offset, last, row_elems, row_last_req, req_last_row,
                         staging, extent, esize, n * esize, bool(inst.unit_stride))


@dataclass
class InFlightEntry:
    seq_id: int
    kind: str
    base: int
    extent: int
    plan: MemAccessPlan
    nf: int = 1
    age: Optional[AgeTag] = None
    progress: int = 0
    issued: int = 0
    responded: int = 0
    staging: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.staging is None:
            self.staging = np.zeros(self.plan.staging_bytes, dtype=np.uint8)

    def overlaps(self, other: "InFlightEntry") -> bool:
        return self.base < other.base + other.extent and other.base < self.base + self.extent

    @property
    def all_issued(self) -> bool:
        return self.issued >= len(self.plan.requests)

    @property
    def drained_rows(self) -> int:
        return int(np.count_nonzero(self.plan.row_last_req < self.issued))


class _Path:

    def __init__(self, kind: str, dq_depth: int, inflight_depth: int):
        self.kind = kind
        self.dq_depth = dq_depth
        self.inflight_depth = inflight_depth
        self.dq = deque()
        self.inflight = deque()

    def entries(self):
        yield from self.inflight
        yield from self.dq

    def promote(self):
        while self.dq and len(self.inflight) < self.inflight_depth:
            self.inflight.append(self.dq.popleft())

    def can_accept(self) -> bool:
        if len(self.dq) < self.dq_depth:
            return True
        return not self.dq and len(self.inflight) < self.inflight_depth


class LoadStoreUnit:
    '''
    In-flight queues with range CAMs between the frontend, memory and
    the backend sequencers. At most one memory request per path per cycle.
    '''

    def __init__(self, machine: SimConfig, memsys: MemorySystem, load_dq_depth: Optional[int] = None,
                 coupled_loads: bool = False):
        cfg = machine.lsu
        self.machine = machine
        self.memsys = memsys
        self.line = machine.line_bytes
        depth = cfg.load_dq_depth if load_dq_depth is None else load_dq_depth
        self.load = _Path("load", depth, cfg.inflight_loads)
        self.store = _Path("store", cfg.store_dq_depth, cfg.inflight_stores)
        self.coupled_loads = coupled_loads
        self.store_buffer_rows = cfg.store_buffer_rows
        self._by_seq = {}
        self.bytes_moved = 0
        self.requests_accepted = 0
        self.cam_stalls = 0
        self.max_segment_rows_ahead = 0

    def _path(self, inst: VectorInstruction) -> _Path:
        return self.load if inst.is_load else self.store

    def can_accept(self, inst: VectorInstruction) -> bool:
        return self._path(inst).can_accept()

    def enqueue(self, inst: VectorInstruction, addrs: np.ndarray) -> InFlightEntry:
        kind = "load" if inst.is_load else "store"
        plan = build_plan(inst, addrs, self.machine, kind)
        lo, hi = plan.extent
        entry = InFlightEntry(inst.seq_id, kind, lo, hi - lo, plan, nf=inst.nf)
        path = self._path(inst)
        if not path.can_accept():
            raise OverflowError(f"{kind} decoupling queue is full")
        path.dq.append(entry)
        path.promote()
        self._by_seq[inst.seq_id] = entry
        return entry

    def bind_age(self, seq_id: int, age: AgeTag):
        entry = self._by_seq.get(seq_id)
        if entry is not None:
            entry.age = age

    def entry(self, seq_id: int) -> InFlightEntry:
        return self._by_seq[seq_id]

    def cam_check(self, entry: InFlightEntry) -> bool:
        '''
        True when no older access of the other kind overlaps entry's range
        and still has memory requests left to issue.
        '''
        other = self.store if entry.kind == "load" else self.load
        for e in other.entries():
            if e.seq_id < entry.seq_id and not e.all_issued and entry.overlaps(e):
                return False
        return True

    # load path

    def on_responses(self, responses):
        for resp in responses:
            kind, seq_id, r = resp.tag
            entry = self._by_seq.get(seq_id)
            if entry is None:
                continue
            if kind == "load":
                if r != entry.responded:
                    raise AssertionError(f"out-of-order response {r} for seq {seq_id}")
                plan = entry.plan
                if plan.contiguous:
                    entry.staging[r * self.line:(r + 1) * self.line] = resp.data
                else:
                    off = int(plan.elem_offset[r])
                    entry.staging[off:off + len(resp.data)] = resp.data
            entry.responded += 1
            if kind == "store":
                self._retire_stores()

    def row_ready(self, seq_id: int, row: int) -> bool:
        entry = self._by_seq[seq_id]
        return entry.responded > entry.plan.row_last_req[row]

    def _row_layout(self, entry: InFlightEntry, row: int):
        plan = entry.plan
        elems = plan.row_elems[row]
        esize = plan.esize
        span = np.arange(esize)
        src = (plan.elem_offset[elems][:, None] + span).reshape(-1)
        dst = (np.arange(len(elems))[:, None] * esize + span).reshape(-1)
        return src, dst

    def take_row(self, seq_id: int, row: int):
        '''
        Merged register row for load micro-op `row` and its byte mask
        '''
        entry = self._by_seq[seq_id]
        if not self.row_ready(seq_id, row):
            raise AssertionError(f"row {row} of seq {seq_id} consumed before its data arrived")
        src, dst = self._row_layout(entry, row)
        data = np.zeros(self.line, dtype=np.uint8)
        mask = np.zeros(self.line, dtype=bool)
        data[dst] = entry.staging[src]
        mask[dst] = True
        entry.progress += 1
        if entry.progress == entry.plan.num_rows:
            head = self.load.inflight[0] if self.load.inflight else None
            if head is not entry:
                raise AssertionError(f"load seq {seq_id} retired out of order")
            self.load.inflight.popleft()
            del self._by_seq[seq_id]
            self.load.promote()
        return data, mask

    # store path

    def store_row_space(self, seq_id: int) -> bool:
        entry = self._by_seq[seq_id]
        capacity = max(self.store_buffer_rows, 2 * entry.nf)
        return entry.progress - entry.drained_rows < capacity

    def deliver_row(self, seq_id: int, row: int, data: np.ndarray):
        entry = self._by_seq[seq_id]
        if row != entry.progress:
            raise AssertionError(f"store row {row} of seq {seq_id} delivered out of order")
        src, dst = self._row_layout(entry, row)
        entry.staging[src] = data[dst]
        entry.progress += 1
        self._retire_stores()

    def _retire_stores(self):
        path = self.store
        while path.inflight:
            head = path.inflight[0]
            if not (head.all_issued and head.progress == head.plan.num_rows
                    and head.responded == len(head.plan.requests)):
                break
            path.inflight.popleft()
            del self._by_seq[head.seq_id]
            path.promote()

    # request generation

    def _next_load_request(self, allowed_seq: Optional[int]):
        for entry in self.load.inflight:
            if entry.all_issued:
                continue
            if self.coupled_loads and entry.seq_id != allowed_seq:
                return None
            if entry.nf > 1:
                plan = entry.plan
                horizon = min(entry.progress + 2 * entry.nf, plan.num_rows) - 1
                if entry.issued > plan.row_last_req[horizon]:
                    return None
            if not self.cam_check(entry):
                self.cam_stalls += 1
                return None
            return entry
        return None

    def _next_store_request(self):
        for entry in self.store.inflight:
            if entry.all_issued:
                continue
            if entry.progress <= entry.plan.req_last_row[entry.issued]:
                return None
            if not self.cam_check(entry):
                self.cam_stalls += 1
                return None
            return entry
        return None

    def issue_requests(self, cycle: int, allowed_load_seq: Optional[int] = None) -> int:
        '''
        Offers at most one load and one store request to memory, load
        path first. Returns the number accepted.
        '''
        self.load.promote()
        self.store.promote()
        accepted = 0
        entry = self._next_load_request(allowed_load_seq)
        if entry is not None:
            addr, nbytes = entry.plan.requests[entry.issued]
            if self.memsys.request(addr, nbytes, ("load", entry.seq_id, entry.issued), "load", cycle):
                self._accepted(entry)
                if entry.nf > 1:
                    self._track_segment(entry)
                accepted += 1
        entry = self._next_store_request()
        if entry is not None:
            r = entry.issued
            addr, nbytes = entry.plan.requests[r]
            off = addr - entry.base if entry.plan.contiguous else int(entry.plan.elem_offset[r])
            data = entry.staging[off:off + nbytes].copy()
            if self.memsys.request(addr, nbytes, ("store", entry.seq_id, r), "store", cycle, write_data=data):
                self._accepted(entry)
                accepted += 1
        return accepted

    def _track_segment(self, entry: InFlightEntry):
        # rows of the segment buffer the issued requests reach past the consumer
        plan = entry.plan
        reached = plan.row_last_req[entry.progress:] >= entry.issued - 1
        ahead = int(np.argmax(reached)) + 1
        if ahead > 2 * entry.nf:
            raise AssertionError(f"segment load seq {entry.seq_id} ran {ahead} rows ahead of its buffer")
        self.max_segment_rows_ahead = max(self.max_segment_rows_ahead, ahead)

    def _accepted(self, entry: InFlightEntry):
        entry.issued += 1
        self.requests_accepted += 1
        if entry.all_issued:
            self.bytes_moved += entry.plan.useful_bytes

    @property
    def idle(self) -> bool:
        return not self._by_seq

    def dump(self) -> str:
        lines = []
        for path in (self.load, self.store):
            for e in path.entries():
                lines.append(
                    f"  {path.kind} seq={e.seq_id} [{e.base:#x},+{e.extent}) rows={e.progress}/"
                    f"{e.plan.num_rows} issued={e.issued}/{len(e.plan.requests)} responded={e.responded}")
        return "\n".join(lines)
