import numpy as np

from svsim.isa import VType
from svsim.oracle import ArchState, dump_arch, exec_one, exec_program
from svsim.program import gen_kernel, parse


def u32(values):
    return np.asarray(values, dtype=np.uint32)


def words(state, addr, n):
    return state.mem.read(addr, 4 * n).view(np.uint32)


def test_axpy_result(machine):
    p = gen_kernel("axpy", 40, VType(32, 1, 0), machine, seed=3)
    x, y = int(p.meta["x"], 16), int(p.meta["y"], 16)
    xs = np.frombuffer(p.data_init[x], dtype=np.uint32)
    ys = np.frombuffer(p.data_init[y], dtype=np.uint32)
    state = exec_program(p, machine)
    assert np.array_equal(words(state, y, 40), ys + np.uint32(3) * xs)
    assert np.array_equal(words(state, x, 40), xs)
    assert state.trap is None


def test_memcpy_and_gather(machine):
    p = gen_kernel("memcpy", 37, VType(32, 2, 0), machine, seed=1)
    state = exec_program(p, machine)
    src, dst = int(p.meta["src"], 16), int(p.meta["dst"], 16)
    assert np.array_equal(words(state, dst, 37), words(state, src, 37))

    p = gen_kernel("gather", 24, VType(32, 1, 0), machine, seed=2)
    state = exec_program(p, machine)
    src, idx, dst = (int(p.meta[k], 16) for k in ("src", "idx", "dst"))
    picks = words(state, idx, 24) // 4
    assert np.array_equal(words(state, dst, 24), words(state, src, 24)[picks])


def test_vector_arithmetic_wraps(machine):
    p = parse("""
.data 0x100 ffffffff01000000
vsetvli 2, e32, m1
vle32 v1, 0x100
vadd v2, v1, v1
vmacc v2, -1, v1
vse32 v2, 0x200
""")
    state = exec_program(p, machine)
    # 2a + (-1)a == a
    assert words(state, 0x200, 2).tolist() == [0xffffffff, 1]


def test_segmented_load_and_negative_stride_store(machine):
    p = parse("""
.data 0x100 0a0b0c0d0e0f
vsetvli 3, e8, m1
vlseg2e8 v4, 0x100
vsse8 v4, 0x302, -1
""")
    state = exec_program(p, machine)
    assert state.vrf[4, :3].tolist() == [0x0a, 0x0c, 0x0e]
    assert state.vrf[5, :3].tolist() == [0x0b, 0x0d, 0x0f]
    assert state.mem.read(0x300, 3).tolist() == [0x0e, 0x0c, 0x0a]


def test_tail_beyond_vl_is_untouched(machine):
    p = parse("""
.data 0x100 01010101010101010101010101010101
vsetvli 16, e8, m1
vle8 v1, 0x100
vsetvli 4, e8, m1
vadd v1, v1, v1
""")
    state = exec_program(p, machine)
    assert state.vrf[1, :6].tolist() == [2, 2, 2, 2, 1, 1]


def test_zero_length_is_a_no_op(machine):
    p = parse(".data 0x100 05\nvsetvli 0, e8, m1\nvle8 v1, 0x100\nvse8 v1, 0x100")
    state = exec_program(p, machine)
    assert not state.vrf.any()
    assert state.mem.read(0x100, 1).tolist() == [5]


def test_trap_keeps_completed_elements(configure):
    machine = configure(frontend__fault_pages="1")
    p = parse("""
.data 0xff8 0102030405060708
vsetvli 4, e32, m1
vle32 v1, 0xff8
vadd v2, v1, v1
""")
    state = exec_program(p, machine)
    assert state.trap.seq_id == 1
    assert (state.trap.element_index, state.trap.address, state.trap.page) == (2, 0x1000, 1)
    assert state.vrf[1, :8].tolist() == [1, 2, 3, 4, 5, 6, 7, 8]
    assert not state.vrf[1, 8:].any()
    assert not state.vrf[2].any()


def test_segmented_trap_keeps_whole_records(configure):
    machine = configure(frontend__fault_pages="1")
    # record 1 straddles the page boundary
    p = parse("vsetvli 4, e8, m1\nvlseg2e8 v2, 0xffd")
    state = exec_program(p, machine)
    assert state.trap.element_index == 1
    assert state.trap.address == 0x1000


def test_exec_one_leaves_input_alone(machine):
    p = parse(".data 0x100 07\nvsetvli 1, e8, m1\nvle8 v0, 0x100")
    state = ArchState.initial(machine, p.data_init)
    after = exec_one(exec_one(state, p.insts[0], machine), p.insts[1], machine)
    assert after.vrf[0, 0] == 7
    assert not state.vrf.any() and state.vtype is None
    assert after != state


def test_dump_is_deterministic(machine):
    p = parse(".data 0x100 0102\nvsetvli 2, e8, m1\nvle8 v3, 0x100")
    text = dump_arch(exec_program(p, machine))
    lines = text.splitlines()
    assert lines[0] == "vtype: e8 m1 vl=2"
    assert lines[1] == "v3: 0102" + "00" * 62
    assert lines[2] == "mem 0x100: 0102"
    assert text == dump_arch(exec_program(p, machine))


def test_jacobi2d_sums_the_five_point_stencil(machine):
    p = gen_kernel("jacobi2d", (5, 21), VType(32, 1, 0), machine, seed=4)
    grid, out = (int(p.meta[k], 16) for k in ("grid", "out"))
    state = exec_program(p, machine)
    g = words(state, grid, 5 * 21).reshape(5, 21)
    want = g[:-2, 1:-1] + g[2:, 1:-1] + g[1:-1, :-2] + g[1:-1, 2:] + g[1:-1, 1:-1]
    got = words(state, out, 5 * 21).reshape(5, 21)
    assert np.array_equal(got[1:-1, 1:-1], want)
    assert not got[0].any() and not got[:, 0].any()


def test_spmv_matches_the_dense_product(machine):
    rows, width = 20, 3
    p = gen_kernel("spmv", (rows, width), VType(32, 1, 0), machine, seed=6)
    x, cols, vals, y = (int(p.meta[k], 16) for k in ("x", "cols", "vals", "y"))
    state = exec_program(p, machine)
    xs = words(state, x, rows)
    c = (words(state, cols, rows * width) // 4).reshape(width, rows)
    v = words(state, vals, rows * width).reshape(width, rows)
    want = (v * xs[c]).sum(axis=0, dtype=np.uint32)
    assert np.array_equal(words(state, y, rows), want)
