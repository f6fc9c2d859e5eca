"""
Banked vector register file: element-group striping, read-port
arbitration and write-port reservation.
"""

import logging
from collections import Counter
from typing import Iterable, Optional

import numpy as np

from svsim.config import SimConfig
from svsim.errors import SchedulingViolation

logger = logging.getLogger(__name__)

ARITH_PORT = "arith"
LOAD_PORT = "load"


class BankMap:
    '''
    Element group g lives in bank g mod banks, row g div banks
    '''

    def __init__(self, banks: int):
        self.banks = banks

    def bank(self, eg: int) -> int:
        return eg % self.banks

    def row(self, eg: int) -> int:
        return eg // self.banks

    def __call__(self, eg: int):
        return self.bank(eg), self.row(eg)


class ReadArbiter:
    '''
    Per-cycle read-port bookkeeping. Requests are all-or-nothing; callers
    present them oldest first so the older requester wins a conflict.
    A request names each element group once however many operands read it.
    '''

    def __init__(self, bank_map: BankMap, ports_per_bank: int):
        self.bank_map = bank_map
        self.ports = ports_per_bank
        self.used = Counter()

    def demand(self, egs: Iterable[int]) -> Counter:
        return Counter(self.bank_map.bank(g) for g in set(egs))

    def oversubscribed(self, egs: Iterable[int]) -> bool:
        '''
        True when egs need more ports on some bank than exist, so they can
        only be read over several cycles.
        '''
        return any(n > self.ports for n in self.demand(egs).values())

    def fits(self, egs: Iterable[int]) -> bool:
        return all(self.used[b] + n <= self.ports for b, n in self.demand(egs).items())

    def claim(self, egs: Iterable[int]) -> bool:
        egs = set(egs)
        if not self.fits(egs):
            return False
        for g in egs:
            self.used[self.bank_map.bank(g)] += 1
        return True

    def gather(self, egs: Iterable[int]) -> frozenset:
        '''
        Claims whichever of egs still have a free port this cycle and
        returns them.
        '''
        got = []
        for g in sorted(set(egs)):
            b = self.bank_map.bank(g)
            if self.used[b] < self.ports:
                self.used[b] += 1
                got.append(g)
        return frozenset(got)


class WriteReservations:
    '''
    Future write-port slots per (cycle, bank, port class)
    '''

    def __init__(self, bank_map: BankMap, ports_per_bank: int, dedicated_load_port: bool):
        self.bank_map = bank_map
        self.ports = ports_per_bank
        self.dedicated_load_port = dedicated_load_port
        self.table = Counter()
        self.used = Counter()

    def _key(self, eg: int, at_cycle: int, port: str):
        if port == LOAD_PORT and not self.dedicated_load_port:
            port = ARITH_PORT
        return at_cycle, self.bank_map.bank(eg), port

    def available(self, eg: int, at_cycle: int, port: str = ARITH_PORT) -> bool:
        return self.table[self._key(eg, at_cycle, port)] < self.ports

    def reserve(self, eg: int, at_cycle: int, port: str = ARITH_PORT) -> bool:
        key = self._key(eg, at_cycle, port)
        if self.table[key] >= self.ports:
            return False
        self.table[key] += 1
        return True

    def consume(self, eg: int, at_cycle: int, port: str = ARITH_PORT):
        key = self._key(eg, at_cycle, port)
        if self.used[key] >= self.table[key]:
            raise SchedulingViolation(f"write to eg{eg} at cycle {at_cycle} without a reservation")
        self.used[key] += 1

    def expire(self, before_cycle: int):
        for key in [k for k in self.table if k[0] < before_cycle]:
            if self.used[key] != self.table[key]:
                raise SchedulingViolation(f"unused write reservation {key}")
            del self.table[key]
            self.used.pop(key, None)


class VectorRegisterFile:
    '''
    Register storage as one DLEN-byte row per element group.
    Unwritten element groups read as zeros.
    '''

    def __init__(self, machine: SimConfig):
        self.machine = machine
        self.bank_map = BankMap(machine.vrf.banks)
        self.data = np.zeros((machine.total_egs, machine.line_bytes), dtype=np.uint8)
        self.reservations = WriteReservations(
            self.bank_map, machine.vrf.write_ports_per_bank, machine.vrf.dedicated_load_wport)
        self.arbiter = None
        self.cycle = -1
        self.new_cycle(0)

    def new_cycle(self, cycle: int):
        self.cycle = cycle
        self.arbiter = ReadArbiter(self.bank_map, self.machine.vrf.read_ports_per_bank)
        self.reservations.expire(cycle)

    def arbitrate_reads(self, requests) -> dict:
        '''
        requests: iterable of (key, egs, age). Grants oldest first, each
        request all-or-nothing. Returns {key: granted}.
        '''
        grants = {}
        for key, egs, _age in sorted(requests, key=lambda r: r[2]):
            grants[key] = self.arbiter.claim(egs)
        return grants

    def reserve_write(self, eg: int, at_cycle: int, port: str = ARITH_PORT) -> bool:
        if at_cycle < self.cycle:
            raise ValueError(f"cannot reserve cycle {at_cycle} in the past (now {self.cycle})")
        return self.reservations.reserve(eg, at_cycle, port)

    def read(self, eg: int) -> np.ndarray:
        return self.data[eg].copy()

    def write(self, eg: int, data: np.ndarray, mask: Optional[np.ndarray] = None,
              port: str = ARITH_PORT):
        self.reservations.consume(eg, self.cycle, port)
        if mask is None:
            self.data[eg] = data
        else:
            self.data[eg] = np.where(mask, data, self.data[eg])

    def register_bytes(self) -> np.ndarray:
        '''
        Architectural view, shape (num_arch_regs, VLEN/8)
        '''
        return self.data.reshape(self.machine.num_arch_regs, self.machine.vlen // 8).copy()

    def load_registers(self, regs: np.ndarray):
        self.data[:] = regs.reshape(self.data.shape)
