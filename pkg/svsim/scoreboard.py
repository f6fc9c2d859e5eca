"""
Pending-read / pending-write scoreboards over VRF element groups, age
tags, and the window-composition and hazard queries used by the
sequencers.
"""

import enum
import itertools
from dataclasses import dataclass
from typing import Iterable, Optional

from svsim.config import SimConfig
from svsim.errors import UnknownTagError
from svsim.isa import VectorInstruction, dest_operands, element_groups_of, source_operands


@dataclass(frozen=True)
class EgScoreboard:
    '''
    Bit-vector over all element groups; bit g is element group g
    '''
    size: int
    bits: int = 0

    @classmethod
    def of(cls, size: int, groups: Iterable[int]) -> "EgScoreboard":
        bits = 0
        for g in groups:
            if not 0 <= g < size:
                raise ValueError(f"element group {g} outside scoreboard of {size}")
            bits |= 1 << g
        return cls(size, bits)

    def __or__(self, other: "EgScoreboard") -> "EgScoreboard":
        return EgScoreboard(self.size, self.bits | other.bits)

    def __and__(self, other: "EgScoreboard") -> "EgScoreboard":
        return EgScoreboard(self.size, self.bits & other.bits)

    def __bool__(self):
        return self.bits != 0

    def __contains__(self, eg: int) -> bool:
        return bool(self.bits >> eg & 1)

    def without(self, *groups: int) -> "EgScoreboard":
        bits = self.bits
        for g in groups:
            bits &= ~(1 << g)
        return EgScoreboard(self.size, bits)

    def groups(self) -> list:
        return [g for g in range(self.size) if self.bits >> g & 1]

    def render(self) -> str:
        # most significant element group first, like 8'b00001100
        return f"{self.size}'b{self.bits:0{self.size}b}"

    def __str__(self):
        return self.render()


@dataclass(frozen=True, order=True)
class AgeTag:
    tag: int


class AgeTagAllocator:
    '''
    Hands out monotonically increasing tags; a tag is live from alloc
    until the instruction completes sequencing.
    '''

    def __init__(self):
        self._counter = itertools.count()
        self._live = set()

    def alloc(self) -> AgeTag:
        tag = AgeTag(next(self._counter))
        self._live.add(tag)
        return tag

    def free(self, tag: AgeTag):
        if tag not in self._live:
            raise UnknownTagError(f"freeing dead age tag {tag.tag}")
        self._live.remove(tag)

    def is_live(self, tag: AgeTag) -> bool:
        return tag in self._live

    def __len__(self):
        return len(self._live)


class WindowKind(enum.Enum):
    ISSUE_QUEUE_COARSE = "issue_queue_coarse"
    SEQUENCER_PRECISE = "sequencer_precise"
    FU_INFLIGHT = "fu_inflight"


@dataclass(frozen=True)
class WindowEntry:
    age: AgeTag
    prsb: EgScoreboard
    pwsb: EgScoreboard
    kind: WindowKind
    inst: Optional[VectorInstruction] = None


class Hazard(enum.Enum):
    CLEAR = "clear"
    RAW = "raw"
    WAW = "waw"
    WAR = "war"


def empty_scoreboard(machine: SimConfig) -> EgScoreboard:
    return EgScoreboard(machine.total_egs)


def coarse_from_inst(inst: VectorInstruction, machine: SimConfig):
    '''
    (prsb, pwsb) derived from the operand specifiers alone
    '''
    size = machine.total_egs
    reads = set()
    for op in source_operands(inst):
        reads |= element_groups_of(inst, op, machine)
    writes = set()
    for op in dest_operands(inst):
        writes |= element_groups_of(inst, op, machine)
    return EgScoreboard.of(size, reads), EgScoreboard.of(size, writes)


def compose_older(window: Iterable[WindowEntry], me: AgeTag):
    prsb = 0
    pwsb = 0
    size = None
    for entry in window:
        if entry.age == me:
            size = entry.prsb.size
        elif entry.age < me:
            prsb |= entry.prsb.bits
            pwsb |= entry.pwsb.bits
    if size is None:
        raise UnknownTagError(f"age tag {me.tag} has no entry in the window")
    return EgScoreboard(size, prsb), EgScoreboard(size, pwsb)


def hazard(reads: Iterable[int], writes: Iterable[int],
           older_prsb: EgScoreboard, older_pwsb: EgScoreboard) -> Hazard:
    reads = list(reads)
    writes = list(writes)
    if any(g in older_pwsb for g in reads):
        return Hazard.RAW
    if any(g in older_pwsb for g in writes):
        return Hazard.WAW
    if any(g in older_prsb for g in writes):
        return Hazard.WAR
    return Hazard.CLEAR


def brute_force_hazard(reads, writes, window: Iterable[WindowEntry], me: AgeTag) -> Hazard:
    '''
    Same verdict as hazard(compose_older(...)) but checked against every
    older entry individually.
    '''
    found = set()
    for entry in window:
        if not entry.age < me:
            continue
        for g in reads:
            if g in entry.pwsb:
                found.add(Hazard.RAW)
        for g in writes:
            if g in entry.pwsb:
                found.add(Hazard.WAW)
            if g in entry.prsb:
                found.add(Hazard.WAR)
    for h in (Hazard.RAW, Hazard.WAW, Hazard.WAR):
        if h in found:
            return h
    return Hazard.CLEAR
