import pytest

from svsim.errors import SchedulingViolation
from svsim.isa import Opcode, VectorInstruction, VType
from svsim.scoreboard import AgeTag, EgScoreboard, Hazard, WindowEntry, WindowKind
from svsim.sequencer import (
    HazardMonitor, IssuePorts, IssueQueue, MicroOp, Policy, QueuedInst, SequencerState,
    build_schedule, irregular_policy, next_microop, try_sequence,
)
from svsim.vrf import VectorRegisterFile

TABLE_VT = VType(32, 2, 4)


def table_vadd(seq_id=0):
    return VectorInstruction(Opcode.VADD, vd=0, vs1=0, vs2=2, vtype=TABLE_VT, seq_id=seq_id)


def loaded(inst, machine, age=0, path="arith0"):
    seq = SequencerState(path, machine.total_egs)
    seq.load(inst, AgeTag(age), machine, ready_cycle=0)
    return seq


def test_arith_schedule_walks_groups_together(table_machine):
    assert build_schedule(table_vadd(), table_machine) == [
        ((0, 4), 0), ((1, 5), 1), ((2, 6), 2), ((3, 7), 3),
    ]


def test_accumulate_reads_destination(machine):
    inst = VectorInstruction(Opcode.VMACC, vd=4, vs2=8, scalar=3, vtype=VType(32, 1, 16))
    assert build_schedule(inst, machine) == [((16, 8), 8), ((17, 9), 9)]


def test_segmented_schedule_walks_fields_inside_groups(machine):
    inst = VectorInstruction(Opcode.VLSEG, vd=0, nf=2, scalar_base=0, vtype=VType(32, 1, 16))
    assert [w for _, w in build_schedule(inst, machine)] == [0, 2, 1, 3]
    store = VectorInstruction(Opcode.VSE, vd=1, scalar_base=0, vtype=VType(32, 1, 16))
    assert build_schedule(store, machine) == [((2,), None), ((3,), None)]


def test_indexed_load_reads_its_index_group(machine):
    inst = VectorInstruction(Opcode.VLXE, vd=2, vs2=6, scalar_base=0, vtype=VType(32, 1, 16))
    assert build_schedule(inst, machine) == [((12,), 4), ((13,), 5)]
    assert irregular_policy(inst) is Policy.HOLD_UNTIL_DONE
    assert irregular_policy(table_vadd()) is Policy.CLEAR_ON_ISSUE


def test_issue_queue():
    q = IssueQueue(0)
    assert q.full
    q = IssueQueue(1)
    entry = QueuedInst(table_vadd(), AgeTag(0), EgScoreboard(8), EgScoreboard(8))
    q.push(entry)
    assert q.full and q.head() is entry
    with pytest.raises(OverflowError):
        q.push(entry)
    assert q.pop() is entry and len(q) == 0


def test_precise_bits_clear_as_groups_finish(table_machine):
    seq = loaded(table_vadd(), table_machine, age=2)
    assert seq.prsb.render() == "8'b11111111"
    assert seq.pwsb.render() == "8'b00001111"
    vrf = VectorRegisterFile(table_machine)
    result = try_sequence(seq, [seq.window_entry()], IssuePorts(vrf, 0, 1), table_machine)
    assert result.issued.index == 0 and result.issued.write == 0
    assert result.issued.wb_delay == 4
    assert seq.prsb.render() == "8'b11101110"
    assert seq.pwsb.render() == "8'b00001110"
    assert seq.remaining == 3


def test_older_pending_write_blocks_read(table_machine):
    seq = loaded(table_vadd(1), table_machine, age=1)
    older = WindowEntry(AgeTag(0), EgScoreboard(8), EgScoreboard.of(8, [4]), WindowKind.SEQUENCER_PRECISE)
    vrf = VectorRegisterFile(table_machine)
    result = try_sequence(seq, [older, seq.window_entry()], IssuePorts(vrf, 0, 1), table_machine)
    assert result.issued is None
    assert result.verdict is Hazard.RAW and result.stall == "raw"
    assert seq.remaining == 4


def test_younger_entries_never_block(table_machine):
    seq = loaded(table_vadd(), table_machine, age=0)
    younger = WindowEntry(AgeTag(3), EgScoreboard.of(8, range(8)), EgScoreboard.of(8, range(8)),
                          WindowKind.ISSUE_QUEUE_COARSE)
    vrf = VectorRegisterFile(table_machine)
    result = try_sequence(seq, [seq.window_entry(), younger], IssuePorts(vrf, 0, 1), table_machine)
    assert result.issued is not None


def test_structural_stalls(table_machine):
    vrf = VectorRegisterFile(table_machine)
    ports = IssuePorts(vrf, 0, 0)
    seq = loaded(table_vadd(), table_machine)
    assert try_sequence(seq, [seq.window_entry()], ports, table_machine).stall == "fu"
    ports = IssuePorts(vrf, 0, 1)
    vrf.reserve_write(0, 4)
    assert try_sequence(seq, [seq.window_entry()], ports, table_machine).stall == "write_port"
    ports = IssuePorts(vrf, 0, 1)
    stall = try_sequence(seq, [seq.window_entry()], ports, table_machine,
                         ready=lambda mop: "mem_data").stall
    assert stall == "mem_data"


def test_last_microop_clears_everything(table_machine):
    inst = VectorInstruction(Opcode.VLE, vd=2, scalar_base=0, vtype=VType(32, 2, 1))
    seq = loaded(inst, table_machine, path="load")
    vrf = VectorRegisterFile(table_machine)
    mop = next_microop(seq, table_machine)
    assert mop.last and mop.fu == "load" and mop.wb_delay == 0
    result = try_sequence(seq, [seq.window_entry()], IssuePorts(vrf, 0, 1), table_machine)
    assert result.issued.last
    assert not seq.pwsb and not seq.prsb
    assert try_sequence(seq, [seq.window_entry()], IssuePorts(vrf, 0, 1), table_machine).stall == "empty"


def test_idle_sequencer_reports_empty(table_machine):
    seq = SequencerState("arith0", 8)
    vrf = VectorRegisterFile(table_machine)
    assert try_sequence(seq, [], IssuePorts(vrf, 0, 1), table_machine).stall == "empty"


def test_monitor_flags_unsafe_issue():
    monitor = HazardMonitor()
    me = AgeTag(1)
    mop = MicroOp(0, (0,), 1, "VADD", 2, me, 1, False)
    older = WindowEntry(AgeTag(0), EgScoreboard(8), EgScoreboard.of(8, [0]), WindowKind.FU_INFLIGHT)
    mine = WindowEntry(me, EgScoreboard(8), EgScoreboard(8), WindowKind.SEQUENCER_PRECISE)
    with pytest.raises(SchedulingViolation):
        monitor.check_issue(mop, [older, mine], [])
    clean = WindowEntry(AgeTag(0), EgScoreboard(8), EgScoreboard(8), WindowKind.FU_INFLIGHT)
    monitor.check_issue(mop, [clean, mine], [])
    with pytest.raises(SchedulingViolation):
        monitor.check_issue(mop, [clean, mine], [1])


def test_repeated_source_is_read_once(machine):
    inst = VectorInstruction(Opcode.VADD, vd=1, vs1=2, vs2=2, vtype=VType(32, 1, 8))
    assert build_schedule(inst, machine) == [((4,), 2)]


def test_same_bank_operands_are_read_over_two_cycles(configure):
    machine = configure(vrf__read_ports_per_bank=1)
    inst = VectorInstruction(Opcode.VADD, vd=1, vs1=2, vs2=6, vtype=VType(32, 1, 8))
    seq = loaded(inst, machine)
    vrf = VectorRegisterFile(machine)
    first = try_sequence(seq, [seq.window_entry()], IssuePorts(vrf, 0, 1), machine)
    assert first.stall == "read_port"
    assert seq.gathered == {4}
    vrf.new_cycle(1)
    second = try_sequence(seq, [seq.window_entry()], IssuePorts(vrf, 1, 1), machine)
    assert second.issued.reads == (4, 12)
    assert seq.gathered == frozenset() and seq.remaining == 0


def test_contended_reads_wait_instead_of_gathering(configure):
    machine = configure(vrf__read_ports_per_bank=1)
    seq = loaded(VectorInstruction(Opcode.VADD, vd=1, vs1=2, vs2=3, vtype=VType(32, 1, 8)), machine)
    vrf = VectorRegisterFile(machine)
    vrf.arbiter.claim([0])
    assert try_sequence(seq, [seq.window_entry()], IssuePorts(vrf, 0, 1), machine).stall == "read_port"
    assert seq.gathered == frozenset()
