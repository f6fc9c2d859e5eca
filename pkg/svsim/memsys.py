"""
Banked last-level-cache timing model with a latency-injection buffer,
plus the functional backing store shared with the reference model.
"""

import heapq
import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Hashable, Mapping, Optional

import numpy as np

from svsim.config import SimConfig

logger = logging.getLogger(__name__)

PAGE = 4096
MASK64 = (1 << 64) - 1


class SparseMemory:
    '''
    Byte-addressed memory stored as lazily allocated numpy pages.
    Unwritten bytes read as zero.
    '''

    def __init__(self, init: Optional[Mapping[int, bytes]] = None):
        self.pages = {}
        for addr, data in (init or {}).items():
            self.write(addr, np.frombuffer(bytes(data), dtype=np.uint8))

    def _chunks(self, addr: int, nbytes: int):
        addr &= MASK64
        done = 0
        while done < nbytes:
            a = (addr + done) & MASK64
            page, offset = divmod(a, PAGE)
            take = min(PAGE - offset, nbytes - done)
            yield page, offset, done, take
            done += take

    def read(self, addr: int, nbytes: int) -> np.ndarray:
        out = np.zeros(nbytes, dtype=np.uint8)
        for page, offset, pos, take in self._chunks(addr, nbytes):
            data = self.pages.get(page)
            if data is not None:
                out[pos:pos + take] = data[offset:offset + take]
        return out

    def write(self, addr: int, data):
        data = np.asarray(data, dtype=np.uint8)
        for page, offset, pos, take in self._chunks(addr, len(data)):
            buf = self.pages.get(page)
            if buf is None:
                buf = self.pages[page] = np.zeros(PAGE, dtype=np.uint8)
            buf[offset:offset + take] = data[pos:pos + take]

    def copy(self) -> "SparseMemory":
        other = SparseMemory()
        other.pages = {p: buf.copy() for p, buf in self.pages.items()}
        return other

    def nonzero_ranges(self):
        '''
        Maximal [start, end) ranges of non-zero bytes, sorted by address
        '''
        ranges = []
        for page in sorted(self.pages):
            buf = self.pages[page]
            idx = np.flatnonzero(buf)
            if idx.size == 0:
                continue
            # split into runs of consecutive indices
            breaks = np.flatnonzero(np.diff(idx) != 1)
            starts = np.concatenate(([idx[0]], idx[breaks + 1]))
            ends = np.concatenate((idx[breaks], [idx[-1]])) + 1
            base = page * PAGE
            for s, e in zip(starts, ends):
                s, e = base + int(s), base + int(e)
                if ranges and ranges[-1][1] == s:
                    ranges[-1] = (ranges[-1][0], e)
                else:
                    ranges.append((s, e))
        return ranges

    def __eq__(self, other):
        if not isinstance(other, SparseMemory):
            return NotImplemented
        for page in set(self.pages) | set(other.pages):
            a = self.pages.get(page)
            b = other.pages.get(page)
            if a is None:
                a = np.zeros(PAGE, dtype=np.uint8)
            if b is None:
                b = np.zeros(PAGE, dtype=np.uint8)
            if not np.array_equal(a, b):
                return False
        return True


@dataclass(order=True)
class Response:
    time: int
    order: int
    tag: Hashable = field(compare=False)
    requester: str = field(compare=False)
    data: Optional[np.ndarray] = field(default=None, compare=False)


@dataclass
class _Bank:
    free_at: int = 0
    starts: list = field(default_factory=list)
    last_kind: Optional[str] = None
    streak: int = 0


class MemorySystem:
    '''
    Line-interleaved banks with FIFO service. A request occupies its bank
    for ceil(bytes / bytes_per_bank_per_cycle) cycles and responds after
    base_latency + inject_latency plus the time it waited for the bank.
    Data moves functionally at acceptance.
    '''

    def __init__(self, machine: SimConfig, backing: Optional[SparseMemory] = None):
        self.machine = machine
        self.cfg = machine.mem
        self.line_bytes = machine.line_bytes
        self.bpb = machine.mem_bytes_per_bank_per_cycle
        self.backing = backing if backing is not None else SparseMemory()
        self.banks = [_Bank() for _ in range(self.cfg.banks)]
        self._pending = []
        self._order = itertools.count()
        self._last_response = {}
        self._tags = set()
        self.accepted = 0
        self.responded = 0
        self.bytes_accepted = 0
        self.backpressure = 0

    def bank_of(self, addr: int) -> int:
        return (addr // self.line_bytes) % self.cfg.banks

    def request(self, addr: int, nbytes: int, tag: Hashable, requester: str, cycle: int,
                write_data: Optional[np.ndarray] = None) -> bool:
        '''
        Offers one request; returns False on backpressure (bank queue
        full), in which case the requester retries later.
        '''
        if nbytes > self.line_bytes:
            raise ValueError(f"request of {nbytes} bytes exceeds the {self.line_bytes}-byte line")
        if tag in self._tags:
            raise ValueError(f"duplicate memory tag {tag!r}")
        bank = self.banks[self.bank_of(addr)]
        bank.starts = [s for s in bank.starts if s > cycle]
        if len(bank.starts) >= self.cfg.bank_queue_depth:
            self.backpressure += 1
            return False

        kind = "store" if write_data is not None else "load"
        service = math.ceil(nbytes / self.bpb) if nbytes else 1
        if self.cfg.rw_turnaround and bank.last_kind is not None and kind != bank.last_kind:
            if bank.streak >= self.cfg.turnaround_streak:
                service += 1
        if kind == bank.last_kind:
            bank.streak += 1
        else:
            bank.last_kind = kind
            bank.streak = 1

        start = max(cycle, bank.free_at)
        bank.free_at = start + service
        if start > cycle:
            bank.starts.append(start)
        ready = max(start + self.cfg.base_latency + self.cfg.inject_latency, start + service)
        ready = max(ready, self._last_response.get(requester, 0))
        self._last_response[requester] = ready

        if write_data is None:
            data = self.backing.read(addr, nbytes)
        else:
            self.backing.write(addr, write_data)
            data = None
        self._tags.add(tag)
        heapq.heappush(self._pending, Response(ready, next(self._order), tag, requester, data))
        self.accepted += 1
        self.bytes_accepted += nbytes
        return True

    def tick(self, cycle: int) -> list:
        '''
        Responses due at this cycle, in acceptance order per requester
        '''
        out = []
        while self._pending and self._pending[0].time <= cycle:
            resp = heapq.heappop(self._pending)
            self._tags.discard(resp.tag)
            self.responded += 1
            out.append(resp)
        return out

    @property
    def idle(self) -> bool:
        return not self._pending

    @property
    def outstanding(self) -> int:
        return len(self._pending)


def parse_memory_image(text: str, source: str = "<image>") -> dict:
    '''
    Reads `0x<addr> <hex bytes>` lines into an {address: bytes} map.
    `#` starts a comment.
    '''
    image = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"{source}:{lineno}: expected '<addr> <hex bytes>', got {line!r}")
        try:
            addr = int(parts[0], 0)
            data = bytes.fromhex(parts[1])
        except ValueError as e:
            raise ValueError(f"{source}:{lineno}: {e}") from None
        image[addr] = data
    return image


def dump_memory_image(mem: SparseMemory, line_bytes: int = 32) -> str:
    lines = []
    for start, end in mem.nonzero_ranges():
        data = mem.read(start, end - start)
        for off in range(0, end - start, line_bytes):
            lines.append(f"{start + off:#x} {data[off:off + line_bytes].tobytes().hex()}")
    return "\n".join(lines) + ("\n" if lines else "")
