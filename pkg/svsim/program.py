"""
Textual mini-assembly format, kernel generators and stripmining.

Grammar, one statement per line, `#` starts a comment:

    vsetvli <avl>, e<sew>, m<lmul>
    vadd|vmul|vmacc|vfma  vd, vs1|<int>, vs2
    vle<w>   vd, <addr>            vse<w>   vs3, <addr>
    vlse<w>  vd, <addr>, <stride>  vsse<w>  vs3, <addr>, <stride>
    vlxe<w>  vd, <addr>, vs2       vsxe<w>  vs3, <addr>, vs2
    vlseg<nf>e<w> vd, <addr>       vsseg<nf>e<w> vs3, <addr>
    scalar <cycles>
    .data <addr> <hex bytes>
    .meta key=value ...

<w> is the element width in bits and must equal the current SEW.
"""

import logging
import math
import random
import re
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from svsim.config import SimConfig
from svsim.errors import ConfigError, KernelError, ProgramError
from svsim.isa import ELEMENT_DTYPES, Opcode, VectorInstruction, VType, vlmax

logger = logging.getLogger(__name__)


@dataclass
class Program:
    insts: list = field(default_factory=list)
    data_init: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.insts)

    @property
    def vector_insts(self) -> list:
        return [i for i in self.insts if i.is_vector]


ARITH_MNEMONICS = {
    "vadd": Opcode.VADD,
    "vmul": Opcode.VMUL,
    "vmacc": Opcode.VMACC,
    "vfma": Opcode.VFMA_OPAQUE,
}

_MEM_RE = re.compile(r"^v(l|s)(seg([2-8])e|se|xe|e)(\d+)$")
_MEM_FORMS = {
    ("l", "e"): Opcode.VLE, ("s", "e"): Opcode.VSE,
    ("l", "se"): Opcode.VLSE, ("s", "se"): Opcode.VSSE,
    ("l", "xe"): Opcode.VLXE, ("s", "xe"): Opcode.VSXE,
    ("l", "seg"): Opcode.VLSEG, ("s", "seg"): Opcode.VSSEG,
}
_MEM_TEXT = {op: key for key, op in _MEM_FORMS.items()}

_REG_RE = re.compile(r"^v(\d+)$")
_INT_RE = re.compile(r"^[+-]?(0[xX][0-9a-fA-F]+|\d+)$")
_OPERAND_RE = re.compile(r"[^,\s]+")


class _LineParser:

    def __init__(self, text: str, lineno: int):
        self.text = text
        self.lineno = lineno

    def error(self, message: str, column: int = 1):
        return ProgramError(message, self.lineno, column)

    def operands(self, start: int) -> list:
        '''
        (token, column) pairs of the comma separated operand list
        '''
        tail = self.text[start:]
        pieces = []
        offset = start
        for chunk in tail.split(","):
            m = _OPERAND_RE.search(chunk)
            if m is None:
                raise self.error("empty operand", offset + 1)
            rest = chunk[m.end():].strip()
            if rest:
                raise self.error(f"unexpected {rest!r}", offset + chunk.index(rest) + 1)
            pieces.append((m.group(0), offset + m.start() + 1))
            offset += len(chunk) + 1
        return pieces

    def reg(self, token):
        text, col = token
        m = _REG_RE.match(text)
        if m is None:
            raise self.error(f"expected a vector register, got {text!r}", col)
        reg = int(m.group(1))
        if reg >= 32:
            raise self.error(f"register v{reg} out of range", col)
        return reg

    def integer(self, token):
        text, col = token
        if _INT_RE.match(text) is None:
            raise self.error(f"expected an integer, got {text!r}", col)
        return int(text, 0)


def parse(text: str) -> Program:
    program = Program()
    sew = lmul = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        p = _LineParser(line, lineno)
        m = re.match(r"\s*(\S+)", line)
        word, col = m.group(1), m.start(1) + 1
        after = m.end(1)

        if word == ".data":
            parts = line[after:].split()
            if len(parts) != 2:
                raise p.error(".data takes an address and hex bytes", col)
            addr = p.integer((parts[0], col))
            try:
                program.data_init[addr] = bytes.fromhex(parts[1])
            except ValueError:
                raise p.error(f"bad hex bytes {parts[1]!r}", col) from None
            continue
        if word == ".meta":
            for item in line[after:].split():
                key, sep, value = item.partition("=")
                if not sep:
                    raise p.error(f"expected key=value, got {item!r}", col)
                program.meta[key] = value
            continue

        ops = p.operands(after) if line[after:].strip() else []
        seq_id = len(program.insts)

        def need(n):
            if len(ops) != n:
                raise p.error(f"{word} takes {n} operands, got {len(ops)}", col)

        if word == "vsetvli":
            need(3)
            avl = p.integer(ops[0])
            e_text, e_col = ops[1]
            m_text, m_col = ops[2]
            if not re.match(r"^e\d+$", e_text):
                raise p.error(f"expected e<sew>, got {e_text!r}", e_col)
            if not re.match(r"^m\d+$", m_text):
                raise p.error(f"expected m<lmul>, got {m_text!r}", m_col)
            if avl < 0:
                raise p.error("avl cannot be negative", ops[0][1])
            try:
                vt = VType(int(e_text[1:]), int(m_text[1:]), 0)
            except ConfigError as e:
                raise p.error(str(e), e_col) from None
            sew, lmul = vt.sew, vt.lmul
            program.insts.append(VectorInstruction(
                Opcode.VSETVLI, vtype=vt, scalar=avl, seq_id=seq_id, line=lineno))
            continue
        if word == "scalar":
            need(1)
            cycles = p.integer(ops[0])
            if cycles < 0:
                raise p.error("scalar cycles cannot be negative", ops[0][1])
            program.insts.append(VectorInstruction(
                Opcode.SCALAR, scalar=cycles, seq_id=seq_id, line=lineno))
            continue

        if word in ARITH_MNEMONICS:
            opcode = ARITH_MNEMONICS[word]
            mem = None
        else:
            mem = _MEM_RE.match(word)
            if mem is None:
                raise p.error(f"unknown opcode {word!r}", col)
            opcode = _MEM_FORMS[mem.group(1), "seg" if mem.group(3) else mem.group(2)]
        if sew is None:
            raise p.error(f"{word} before any vsetvli", col)

        kwargs = {}
        if mem is None:
            need(3)
            kwargs["vd"] = p.reg(ops[0])
            if _REG_RE.match(ops[1][0]):
                kwargs["vs1"] = p.reg(ops[1])
            else:
                kwargs["scalar"] = p.integer(ops[1])
            kwargs["vs2"] = p.reg(ops[2])
        else:
            width = int(mem.group(4))
            if width != sew:
                raise p.error(f"element width {width} does not match SEW {sew}", col)
            if opcode in (Opcode.VLSE, Opcode.VSSE):
                need(3)
                kwargs["stride"] = p.integer(ops[2])
            elif opcode in (Opcode.VLXE, Opcode.VSXE):
                need(3)
                kwargs["vs2"] = p.reg(ops[2])
            else:
                need(2)
            kwargs["vd"] = p.reg(ops[0])
            kwargs["scalar_base"] = p.integer(ops[1])
            if mem.group(3):
                kwargs["nf"] = int(mem.group(3))

        for name in ("vd", "vs1", "vs2"):
            reg = kwargs.get(name)
            if reg is not None and reg % lmul:
                raise p.error(f"v{reg} is not aligned to lmul={lmul}", col)
        nf = kwargs.get("nf", 1)
        if kwargs["vd"] + nf * lmul > 32:
            raise p.error(f"v{kwargs['vd']} register group runs past v31", col)
        try:
            inst = VectorInstruction(opcode, seq_id=seq_id, line=lineno, **kwargs)
        except ConfigError as e:
            raise p.error(str(e), col) from None
        program.insts.append(inst)
    return program


def _render_inst(inst: VectorInstruction, sew: Optional[int]) -> str:
    op = inst.opcode
    if op is Opcode.VSETVLI:
        return f"vsetvli {inst.scalar}, e{inst.vtype.sew}, m{inst.vtype.lmul}"
    if op is Opcode.SCALAR:
        return f"scalar {inst.scalar}"
    if inst.is_arith:
        src = f"v{inst.vs1}" if inst.vs1 is not None else str(inst.scalar)
        return f"{op.value} v{inst.vd}, {src}, v{inst.vs2}"
    if sew is None:
        raise ProgramError(f"{op.value} before any vsetvli")
    direction, form = _MEM_TEXT[op]
    if form == "seg":
        form = f"seg{inst.nf}e"
    text = f"v{direction}{form}{sew} v{inst.vd}, {inst.scalar_base:#x}"
    if inst.stride is not None:
        text += f", {inst.stride}"
    elif inst.is_indexed:
        text += f", v{inst.vs2}"
    return text


def render(program: Program) -> str:
    lines = []
    if program.meta:
        lines.append(".meta " + " ".join(f"{k}={v}" for k, v in program.meta.items()))
    for addr, data in program.data_init.items():
        lines.append(f".data {addr:#x} {bytes(data).hex()}")
    sew = None
    for inst in program.insts:
        if inst.opcode is Opcode.VSETVLI:
            sew = inst.vtype.sew
        lines.append(_render_inst(inst, sew))
    return "\n".join(lines) + "\n" if lines else ""


def stripmine(total_elems: int, vtype: VType, machine: SimConfig) -> list:
    if total_elems < 0:
        raise ValueError("total_elems cannot be negative")
    vmax = vlmax(vtype, machine)
    full, rest = divmod(total_elems, vmax)
    return [vmax] * full + ([rest] if rest else [])


class _Builder:
    '''
    Appends instructions with program-order seq_ids and lays out arrays
    in memory.
    '''

    def __init__(self, vtype: VType, machine: SimConfig, seed: int = 0):
        self.vtype = vtype
        self.machine = machine
        self.esize = vtype.esize
        self.rng = np.random.default_rng(seed)
        self.program = Program()
        self._next_addr = 0x1000

    def alloc(self, nelems: int) -> int:
        addr = self._next_addr
        self._next_addr += max(64, -(-nelems * self.esize // 64) * 64)
        return addr

    def array(self, nelems: int, values: Optional[np.ndarray] = None, high: int = 1 << 8) -> int:
        addr = self.alloc(nelems)
        if values is None:
            values = self.rng.integers(0, high, size=nelems)
        if nelems:
            dt = ELEMENT_DTYPES[self.vtype.sew]
            mask = (1 << self.vtype.sew) - 1
            data = np.array([int(v) & mask for v in values], dtype=dt)
            self.program.data_init[addr] = data.tobytes()
        return addr

    def emit(self, opcode: Opcode, **kwargs):
        self.program.insts.append(VectorInstruction(opcode, seq_id=len(self.program.insts), **kwargs))

    def vsetvli(self, avl: int):
        self.emit(Opcode.VSETVLI, vtype=VType(self.vtype.sew, self.vtype.lmul, 0), scalar=avl)

    def scalar(self, cycles: int = 1):
        self.emit(Opcode.SCALAR, scalar=cycles)

    def groups(self) -> list:
        lmul = self.vtype.lmul
        return [g * lmul for g in range(self.machine.num_arch_regs // lmul)]


def _size(size, n: int, name: str) -> tuple:
    dims = tuple(size) if isinstance(size, (tuple, list)) else (size,)
    if len(dims) == 1 and n > 1:
        dims = dims * n
    if len(dims) != n or any(int(d) < 0 for d in dims):
        raise KernelError(f"{name} needs {n} non-negative dimension(s), got {size!r}")
    return tuple(int(d) for d in dims)


def _axpy(b: _Builder, size) -> None:
    (n,) = _size(size, 1, "axpy")
    a = 3
    x = b.array(n)
    y = b.array(n)
    regs = b.groups()
    if len(regs) < 2:
        raise KernelError("axpy needs two register groups")
    sets = [(regs[0], regs[1])]
    if len(regs) >= 4:
        sets.append((regs[2], regs[3]))
    b.program.meta.update(kernel="axpy", size=str(n), a=str(a), x=hex(x), y=hex(y))
    done = 0
    vls = stripmine(n, b.vtype, b.machine) or [0]
    for i, vl in enumerate(vls):
        vx, vy = sets[i % len(sets)]
        b.vsetvli(vl)
        if vl:
            off = done * b.esize
            b.emit(Opcode.VLE, vd=vx, scalar_base=x + off)
            b.emit(Opcode.VLE, vd=vy, scalar_base=y + off)
            b.emit(Opcode.VMACC, vd=vy, scalar=a, vs2=vx)
            b.emit(Opcode.VSE, vd=vy, scalar_base=y + off)
            b.scalar(1)
        done += vl


def _memcpy(b: _Builder, size) -> None:
    (n,) = _size(size, 1, "memcpy")
    src = b.array(n)
    dst = b.alloc(n)
    b.program.meta.update(kernel="memcpy", size=str(n), src=hex(src), dst=hex(dst))
    regs = b.groups()
    done = 0
    vls = stripmine(n, b.vtype, b.machine) or [0]
    for i, vl in enumerate(vls):
        b.vsetvli(vl)
        if vl:
            reg = regs[i % len(regs)]
            off = done * b.esize
            b.emit(Opcode.VLE, vd=reg, scalar_base=src + off)
            b.emit(Opcode.VSE, vd=reg, scalar_base=dst + off)
            b.scalar(1)
        done += vl


def _gemm_tile(b: _Builder, size) -> None:
    m, n, k = _size(size, 3, "gemm_tile")
    regs = b.groups()
    rows = min(4, len(regs) - 2)
    if rows < 1:
        raise KernelError(f"gemm_tile needs at least 3 register groups at lmul={b.vtype.lmul}")
    a_vals = b.rng.integers(0, 16, size=(m, k))
    a = b.array(m * k, a_vals.reshape(-1))
    bm = b.array(k * n, high=16)
    c = b.alloc(m * n)
    acc = regs[:rows]
    bufs = regs[rows:rows + 2]
    b.program.meta.update(kernel="gemm_tile", size=f"{m}x{n}x{k}", a=hex(a), b=hex(bm), c=hex(c))
    b.vsetvli(0)
    col = 0
    for vl in stripmine(n, b.vtype, b.machine):
        for i0 in range(0, m, rows):
            block = min(rows, m - i0)
            b.vsetvli(vl)
            for r in range(block):
                b.emit(Opcode.VLE, vd=acc[r], scalar_base=c + ((i0 + r) * n + col) * b.esize)
            for kk in range(k):
                buf = bufs[kk % len(bufs)]
                b.emit(Opcode.VLE, vd=buf, scalar_base=bm + (kk * n + col) * b.esize)
                for r in range(block):
                    b.emit(Opcode.VMACC, vd=acc[r], scalar=int(a_vals[i0 + r, kk]), vs2=buf)
                b.scalar(1)
            for r in range(block):
                b.emit(Opcode.VSE, vd=acc[r], scalar_base=c + ((i0 + r) * n + col) * b.esize)
        col += vl


def _transpose(b: _Builder, size) -> None:
    rows, cols = _size(size, 2, "transpose")
    src = b.array(rows * cols)
    dst = b.alloc(rows * cols)
    b.program.meta.update(kernel="transpose", size=f"{rows}x{cols}", src=hex(src), dst=hex(dst))
    e = b.esize
    b.vsetvli(0)
    if 2 <= cols <= 8:
        lmul = b.vtype.lmul
        while lmul > 1 and cols * lmul > 8:
            lmul //= 2
        seg = _Builder(VType(b.vtype.sew, lmul, 0), b.machine)
        seg.program = b.program
        done = 0
        for vl in stripmine(rows, seg.vtype, b.machine):
            seg.vsetvli(vl)
            seg.emit(Opcode.VLSEG, vd=0, nf=cols, scalar_base=src + done * cols * e)
            for f in range(cols):
                seg.emit(Opcode.VSE, vd=f * lmul, scalar_base=dst + (f * rows + done) * e)
            seg.scalar(1)
            done += vl
        return
    regs = b.groups()
    for c in range(cols):
        done = 0
        for i, vl in enumerate(stripmine(rows, b.vtype, b.machine)):
            reg = regs[(c + i) % len(regs)]
            b.vsetvli(vl)
            b.emit(Opcode.VLSE, vd=reg, scalar_base=src + (done * cols + c) * e, stride=cols * e)
            b.emit(Opcode.VSE, vd=reg, scalar_base=dst + (c * rows + done) * e)
            b.scalar(1)
            done += vl


def _gather(b: _Builder, size) -> None:
    (n,) = _size(size, 1, "gather")
    regs = b.groups()
    if len(regs) < 2:
        raise KernelError("gather needs two register groups")
    e = b.esize
    table = min(n, (1 << b.vtype.sew) // e) or 1
    src = b.array(table)
    picks = b.rng.integers(0, table, size=n)
    idx = b.array(n, picks * e)
    dst = b.alloc(n)
    b.program.meta.update(kernel="gather", size=str(n), src=hex(src), idx=hex(idx), dst=hex(dst))
    done = 0
    vls = stripmine(n, b.vtype, b.machine) or [0]
    for i, vl in enumerate(vls):
        b.vsetvli(vl)
        if vl:
            vi, vd = regs[(2 * i) % len(regs)], regs[(2 * i + 1) % len(regs)]
            b.emit(Opcode.VLE, vd=vi, scalar_base=idx + done * e)
            b.emit(Opcode.VLXE, vd=vd, scalar_base=src, vs2=vi)
            b.emit(Opcode.VSE, vd=vd, scalar_base=dst + done * e)
            b.scalar(1)
        done += vl


def _stream_load(b: _Builder, size) -> None:
    (n,) = _size(size, 1, "stream_load")
    src = b.array(n)
    b.program.meta.update(kernel="stream_load", size=str(n), src=hex(src))
    regs = b.groups()
    done = 0
    vls = stripmine(n, b.vtype, b.machine) or [0]
    for i, vl in enumerate(vls):
        b.vsetvli(vl)
        if vl:
            b.emit(Opcode.VLE, vd=regs[i % len(regs)], scalar_base=src + done * b.esize)
            b.scalar(1)
        done += vl


def _gemv(b: _Builder, size) -> None:
    m, n = _size(size, 2, "gemv")
    regs = b.groups()
    if len(regs) < 3:
        raise KernelError("gemv needs three register groups")
    x_vals = b.rng.integers(0, 16, size=n)
    x = b.array(n, x_vals)
    a = b.array(m * n, high=16)  # column-major
    y = b.alloc(m)
    b.program.meta.update(kernel="gemv", size=f"{m}x{n}", a=hex(a), x=hex(x), y=hex(y))
    e = b.esize
    acc, bufs = regs[0], regs[1:3]
    row = 0
    b.vsetvli(0)
    for vl in stripmine(m, b.vtype, b.machine):
        b.vsetvli(vl)
        b.emit(Opcode.VLE, vd=acc, scalar_base=y + row * e)
        for j in range(n):
            buf = bufs[j % 2]
            b.emit(Opcode.VLE, vd=buf, scalar_base=a + (j * m + row) * e)
            b.emit(Opcode.VMACC, vd=acc, scalar=int(x_vals[j]), vs2=buf)
        b.emit(Opcode.VSE, vd=acc, scalar_base=y + row * e)
        b.scalar(1)
        row += vl


def _conv1d(b: _Builder, size) -> None:
    (n,) = _size(size, 1, "conv1d")
    regs = b.groups()
    if len(regs) < 4:
        raise KernelError("conv1d needs four register groups")
    taps = (1, 2, 1)
    x = b.array(n + len(taps) - 1)
    out = b.alloc(n)
    b.program.meta.update(kernel="conv1d", size=str(n), x=hex(x), out=hex(out))
    e = b.esize
    done = 0
    vls = stripmine(n, b.vtype, b.machine) or [0]
    for vl in vls:
        b.vsetvli(vl)
        if vl:
            for t in range(len(taps)):
                b.emit(Opcode.VLE, vd=regs[t], scalar_base=x + (done + t) * e)
            b.emit(Opcode.VMUL, vd=regs[3], scalar=taps[0], vs2=regs[0])
            for t in range(1, len(taps)):
                b.emit(Opcode.VMACC, vd=regs[3], scalar=taps[t], vs2=regs[t])
            b.emit(Opcode.VSE, vd=regs[3], scalar_base=out + done * e)
            b.scalar(1)
        done += vl


def _jacobi2d(b: _Builder, size) -> None:
    '''
    Five-point stencil sum over the interior of a rows x cols grid. Two
    staging registers are reloaded between the adds, so each add waits
    on a load that waits on the add before it.
    '''
    rows, cols = _size(size, 2, "jacobi2d")
    if rows < 3 or cols < 3:
        raise KernelError(f"jacobi2d needs at least a 3x3 grid, got {rows}x{cols}")
    regs = b.groups()
    if len(regs) < 3:
        raise KernelError("jacobi2d needs three register groups")
    sets = [tuple(regs[i:i + 3]) for i in range(0, len(regs) - 2, 3)]
    grid = b.array(rows * cols)
    out = b.alloc(rows * cols)
    b.program.meta.update(kernel="jacobi2d", size=f"{rows}x{cols}", grid=hex(grid), out=hex(out))
    e = b.esize

    def at(r, c):
        return grid + (r * cols + c) * e

    b.vsetvli(0)
    step = 0
    for i in range(1, rows - 1):
        j = 1
        for vl in stripmine(cols - 2, b.vtype, b.machine):
            va, vb, acc = sets[step % len(sets)]
            step += 1
            b.vsetvli(vl)
            b.emit(Opcode.VLE, vd=va, scalar_base=at(i - 1, j))
            b.emit(Opcode.VLE, vd=vb, scalar_base=at(i + 1, j))
            b.emit(Opcode.VADD, vd=acc, vs1=va, vs2=vb)
            b.emit(Opcode.VLE, vd=va, scalar_base=at(i, j - 1))
            b.emit(Opcode.VADD, vd=acc, vs1=acc, vs2=va)
            b.emit(Opcode.VLE, vd=vb, scalar_base=at(i, j + 1))
            b.emit(Opcode.VADD, vd=acc, vs1=acc, vs2=vb)
            b.emit(Opcode.VLE, vd=va, scalar_base=at(i, j))
            b.emit(Opcode.VADD, vd=acc, vs1=acc, vs2=va)
            b.emit(Opcode.VSE, vd=acc, scalar_base=out + (i * cols + j) * e)
            b.scalar(1)
            j += vl


def _spmv(b: _Builder, size) -> None:
    '''
    y = A x with A in ELL form: `width` nonzeros per row, stored slot by
    slot as byte offsets into x and their values. Each slot gathers x.
    '''
    rows, width = _size(size, 2, "spmv")
    regs = b.groups()
    if len(regs) < 4:
        raise KernelError("spmv needs four register groups")
    e = b.esize
    ncols = min(max(rows, 1), (1 << b.vtype.sew) // e) or 1
    x = b.array(ncols, high=16)
    cols = b.rng.integers(0, ncols, size=(width, rows))
    offsets = b.array(width * rows, (cols * e).reshape(-1))
    vals = b.array(width * rows, high=16)
    y = b.alloc(rows)
    b.program.meta.update(kernel="spmv", size=f"{rows}x{width}", x=hex(x), cols=hex(offsets),
                          vals=hex(vals), y=hex(y))
    acc = regs[0]
    slots = [tuple(regs[i:i + 3]) for i in range(1, len(regs) - 2, 3)]
    row = 0
    b.vsetvli(0)
    for vl in stripmine(rows, b.vtype, b.machine):
        b.vsetvli(vl)
        b.emit(Opcode.VLE, vd=acc, scalar_base=y + row * e)
        for s in range(width):
            vi, vx, vv = slots[s % len(slots)]
            base = (s * rows + row) * e
            b.emit(Opcode.VLE, vd=vi, scalar_base=offsets + base)
            b.emit(Opcode.VLXE, vd=vx, scalar_base=x, vs2=vi)
            b.emit(Opcode.VLE, vd=vv, scalar_base=vals + base)
            b.emit(Opcode.VMACC, vd=acc, vs1=vv, vs2=vx)
        b.emit(Opcode.VSE, vd=acc, scalar_base=y + row * e)
        b.scalar(1)
        row += vl


KERNELS = {
    "axpy": _axpy,
    "memcpy": _memcpy,
    "gemm_tile": _gemm_tile,
    "transpose": _transpose,
    "gather": _gather,
    "stream_load": _stream_load,
    "gemv": _gemv,
    "conv1d": _conv1d,
    "jacobi2d": _jacobi2d,
    "spmv": _spmv,
}


def gen_kernel(name: str, size: Union[int, Sequence[int]], vtype: VType,
               machine: Optional[SimConfig] = None, seed: int = 0) -> Program:
    '''
    Stripmined benchmark program. `size` is an element count, or a
    tuple of dimensions for the matrix kernels (gemm_tile: M, N, K).
    '''
    machine = machine or SimConfig()
    if name == "random":
        return random_program(seed, machine)
    if name not in KERNELS:
        raise KernelError(f"unsupported kernel {name!r}; choose from {sorted(KERNELS) + ['random']}")
    if vtype.sew > machine.dlen:
        raise KernelError(f"sew {vtype.sew} is wider than DLEN {machine.dlen}")
    b = _Builder(vtype, machine, seed)
    KERNELS[name](b, size)
    b.program.meta.update(sew=str(vtype.sew), lmul=str(vtype.lmul))
    logger.debug("generated %s: %d instructions", name, len(b.program))
    return b.program


def parse_size(text: str) -> tuple:
    try:
        dims = tuple(int(t, 0) for t in text.lower().split("x"))
    except ValueError:
        raise KernelError(f"bad problem size {text!r}") from None
    return dims[0] if len(dims) == 1 else dims


RANDOM_BASE = 0x4000
RANDOM_SPAN = 0x400


def random_program(seed: int, machine: Optional[SimConfig] = None, length: Optional[int] = None) -> Program:
    '''
    Hazard-dense random program: at most 8 hot registers, mixed opcodes,
    memory accesses overlapping inside one small window.
    '''
    machine = machine or SimConfig()
    rnd = random.Random(seed)
    length = length if length is not None else rnd.randint(1, 64)
    hot = min(8, machine.num_arch_regs)
    sews = [s for s in (8, 16, 32, 64) if s <= machine.dlen]
    prog = Program(meta={"kernel": "random", "seed": str(seed)})
    data = bytes(rnd.getrandbits(8) for _ in range(RANDOM_SPAN + 0x100))
    prog.data_init[RANDOM_BASE - 0x80] = data

    vt = None

    def emit(opcode, **kw):
        prog.insts.append(VectorInstruction(opcode, seq_id=len(prog.insts), **kw))

    def new_vtype():
        lmuls = [l for l in (1, 2, 4) if l <= hot]
        v = VType(rnd.choice(sews), rnd.choice(lmuls), 0)
        emit(Opcode.VSETVLI, vtype=v, scalar=rnd.randint(0, vlmax(v, machine) + 4))
        return v

    def reg(v, groups=1):
        choices = [r for r in range(0, hot, v.lmul) if r + groups * v.lmul <= hot]
        return rnd.choice(choices)

    while len(prog.insts) < length:
        if vt is None or rnd.random() < 0.1:
            vt = new_vtype()
            continue
        e = vt.esize
        base = RANDOM_BASE + rnd.randrange(0, RANDOM_SPAN // 2, 1 if rnd.random() < 0.2 else e)
        kind = rnd.random()
        if kind < 0.35:
            op = rnd.choice(list(ARITH_MNEMONICS.values()))
            kw = {"vd": reg(vt), "vs2": reg(vt)}
            if rnd.random() < 0.3:
                kw["scalar"] = rnd.randint(-8, 8)
            else:
                kw["vs1"] = reg(vt)
            emit(op, **kw)
        elif kind < 0.55:
            emit(rnd.choice((Opcode.VLE, Opcode.VSE)), vd=reg(vt), scalar_base=base)
        elif kind < 0.7:
            stride = rnd.choice((-2 * e, 0, e, 2 * e, 3 * e))
            emit(rnd.choice((Opcode.VLSE, Opcode.VSSE)), vd=reg(vt), scalar_base=base, stride=stride)
        elif kind < 0.8:
            emit(rnd.choice((Opcode.VLXE, Opcode.VSXE)), vd=reg(vt), scalar_base=base, vs2=reg(vt))
        elif kind < 0.92:
            max_nf = min(8, hot // vt.lmul)
            if max_nf < 2:
                continue
            nf = rnd.randint(2, max_nf)
            emit(rnd.choice((Opcode.VLSEG, Opcode.VSSEG)), vd=reg(vt, nf), scalar_base=base, nf=nf)
        else:
            emit(Opcode.SCALAR, scalar=rnd.randint(0, 3))
    return prog
