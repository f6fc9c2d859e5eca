import numpy as np
import pytest

from svsim.memsys import (
    PAGE, MemorySystem, SparseMemory, dump_memory_image, parse_memory_image,
)


def due(mem, cycle):
    return [r.tag for r in mem.tick(cycle)]


def test_idle_latency(machine):
    mem = MemorySystem(machine)
    assert mem.request(0x0, 32, "a", "load", cycle=10)
    assert due(mem, 13) == []
    assert due(mem, 14) == ["a"]
    assert mem.idle


def test_injected_latency_adds_on_top(configure):
    mem = MemorySystem(configure(mem__inject_latency=100))
    mem.request(0x40, 32, "a", "load", cycle=0)
    assert due(mem, 103) == []
    assert due(mem, 104) == ["a"]


def test_bank_mapping_and_conflicts(machine):
    mem = MemorySystem(machine)
    assert [mem.bank_of(a) for a in (0x00, 0x20, 0x40, 0x60, 0x80)] == [0, 1, 2, 3, 0]
    mem.request(0x00, 32, "a", "load", cycle=0)
    mem.request(0x80, 32, "b", "load", cycle=0)   # same bank, waits for "a"
    mem.request(0x20, 32, "c", "store", cycle=0, write_data=np.zeros(32, np.uint8))
    assert mem.outstanding == 3
    assert due(mem, 4) == ["a", "c"]
    assert due(mem, 8) == ["b"]


def test_responses_stay_in_order_per_requester(machine):
    mem = MemorySystem(machine)
    mem.request(0x00, 32, "a", "load", cycle=0)
    mem.request(0x80, 32, "b", "load", cycle=0)
    mem.request(0x20, 32, "c", "load", cycle=0)   # free bank, still behind "b"
    assert due(mem, 4) == ["a"]
    assert due(mem, 8) == ["b", "c"]


def test_small_requests_occupy_the_bank_briefly(machine):
    mem = MemorySystem(machine)
    mem.request(0x00, 4, "a", "load", cycle=0)
    mem.request(0x80, 4, "b", "store", cycle=0, write_data=np.ones(4, np.uint8))
    assert due(mem, 4) == ["a"]
    assert due(mem, 5) == ["b"]


def test_backpressure_when_bank_queue_is_full(configure):
    mem = MemorySystem(configure(mem__bank_queue_depth=1))
    assert mem.request(0x00, 32, "a", "load", cycle=0)
    assert mem.request(0x80, 32, "b", "load", cycle=0)
    assert not mem.request(0x100, 32, "c", "load", cycle=0)
    assert mem.backpressure == 1
    assert mem.request(0x100, 32, "c", "load", cycle=4)


def test_read_write_turnaround_penalty(configure):
    def store_then_load(turnaround):
        mem = MemorySystem(configure(mem__rw_turnaround=turnaround, mem__turnaround_streak=2))
        mem.request(0x00, 32, "l0", "load", cycle=0)
        mem.request(0x80, 32, "l1", "load", cycle=0)
        mem.request(0x100, 32, "s0", "store", cycle=0, write_data=np.zeros(32, np.uint8))
        mem.request(0x180, 32, "l2", "other", cycle=0)
        return next(c for c in range(64) if "l2" in due(mem, c))

    assert store_then_load(False) == 16
    assert store_then_load(True) == 17


def test_request_validation(machine):
    mem = MemorySystem(machine)
    with pytest.raises(ValueError):
        mem.request(0, 64, "big", "load", cycle=0)
    mem.request(0, 8, "t", "load", cycle=0)
    with pytest.raises(ValueError):
        mem.request(8, 8, "t", "load", cycle=0)


def test_data_moves_at_acceptance(machine):
    backing = SparseMemory({0x100: bytes(range(1, 9))})
    mem = MemorySystem(machine, backing)
    mem.request(0x104, 4, "st", "store", cycle=0, write_data=np.array([9, 9, 9, 9], np.uint8))
    mem.request(0x100, 8, "ld", "load", cycle=0)
    assert backing.read(0x100, 8).tolist() == [1, 2, 3, 4, 9, 9, 9, 9]
    (resp,) = [r for r in mem.tick(100) if r.tag == "ld"]
    assert resp.data.tolist() == [1, 2, 3, 4, 9, 9, 9, 9]


def test_sparse_memory_spans_pages():
    mem = SparseMemory()
    assert mem.read(0x5000, 4).tolist() == [0, 0, 0, 0]
    mem.write(PAGE - 2, np.array([1, 2, 3, 4], np.uint8))
    assert sorted(mem.pages) == [0, 1]
    assert mem.read(PAGE - 3, 6).tolist() == [0, 1, 2, 3, 4, 0]
    assert mem.nonzero_ranges() == [(PAGE - 2, PAGE + 2)]


def test_sparse_memory_equality_ignores_zero_pages():
    a = SparseMemory({0x10: b"\x01"})
    b = a.copy()
    b.write(0x9000, np.zeros(8, np.uint8))
    assert a == b
    b.write(0x10, np.array([2], np.uint8))
    assert a != b
    assert a.read(0x10, 1).tolist() == [1]


def test_memory_image_text():
    image = parse_memory_image("# initial data\n0x10 0102  # pair\n\n0x40 ff\n")
    assert image == {0x10: b"\x01\x02", 0x40: b"\xff"}
    assert dump_memory_image(SparseMemory(image)) == "0x10 0102\n0x40 ff\n"
    assert dump_memory_image(SparseMemory()) == ""


def test_memory_image_wraps_long_runs():
    text = dump_memory_image(SparseMemory({0x0: bytes([7]) * 40}), line_bytes=32)
    assert text.splitlines() == ["0x0 " + "07" * 32, "0x20 " + "07" * 8]


@pytest.mark.parametrize("text", ["0x10\n", "0x10 zz\n", "ten 00\n"])
def test_memory_image_errors_carry_line(text):
    with pytest.raises(ValueError, match="img:1"):
        parse_memory_image(text, source="img")
