"""Reference execution of emitted IR under a GPU-to-CPU model.

CTAs run sequentially; threads within a CTA run under a cooperative
round-robin scheduler (seeded, randomizable) that satisfies the counting
-barrier and warp-exchange contracts: a thread suspends at barriers,
shuffles, votes and tensor ops, and resumes when the rendezvous
completes.  Shared memory is zeroed per CTA, fences are no-ops under the
sequential-CTA model, and global loads/stores address a flat 64-bit
memory image whose buffer addresses are written into the parameter bytes
exactly as a real launch would.

The hardware reciprocal is modeled as the IEEE round-to-nearest
reciprocal advanced three ULPs toward +infinity; compiled fast-division
sequences depend on that bias for exact quotients.

Launch descriptor format (one directive per line, ``#`` comments):

    kernel vecadd
    arch sm75
    grid 1 1 1
    block 32 1 1
    shared 1024          # optional shared bytes per CTA
    seed 7               # optional schedule seed
    buffer A f32[32] = 1 2 3 ...     # or: zeros | seq [start [step]]
    param 0x160 ptr A                # absolute constant-bank offsets
    param 0x168 u32 32
    expect OUT u32 = 2 4 6 ...       # bitwise for ints
    expect OUT f32 rel=1e-5 = ...    # relative tolerance for floats
"""

from __future__ import annotations

import math
import random
import re
import struct
from dataclasses import dataclass, field

import numpy as np

from . import arch as archmod
from .irmodel import (
    IRFunction, IRInst, IRModule, element_type, parse_ir, tuple_types,
    vector_len,
)


class InterpError(RuntimeError):
    pass


class Trap(InterpError):
    pass


class _Undef:
    def __repr__(self):
        return "undef"


UNDEF = _Undef()

_MASK32 = 0xFFFFFFFF
_MASK64 = 0xFFFFFFFFFFFFFFFF


# ---------------------------------------------------------------------------
# float helpers
# ---------------------------------------------------------------------------

def f32(x: float) -> float:
    return float(np.float32(x))


def f16(x: float) -> float:
    return float(np.float16(x))


def bf16(x: float) -> float:
    bits = struct.unpack("<I", struct.pack("<f", float(np.float32(x))))[0]
    # round to nearest even on the low 16 bits
    lower = bits & 0xFFFF
    bits >>= 16
    if lower > 0x8000 or (lower == 0x8000 and bits & 1):
        bits += 1
    return struct.unpack("<f", struct.pack("<I", (bits & 0xFFFF) << 16))[0]


def round_float(ty: str, x: float) -> float:
    if ty == "float":
        return f32(x)
    if ty == "double":
        return float(x)
    if ty == "half":
        return f16(x)
    if ty == "bfloat":
        return bf16(x)
    raise InterpError(f"not a float type {ty}")


def f32_bits(x: float) -> int:
    return struct.unpack("<I", struct.pack("<f", x))[0]


def bits_f32(b: int) -> float:
    return struct.unpack("<f", struct.pack("<I", b & _MASK32))[0]


def biased_reciprocal(x: float, bias_ulps: int = 3) -> float:
    """IEEE round-to-nearest float32 reciprocal advanced ``bias_ulps``
    steps toward +infinity, matching the hardware approximation."""
    xf = np.float32(x)
    if np.isnan(xf):
        return float("nan")
    if xf == 0.0:
        return math.copysign(float("inf"), float(xf))
    if np.isinf(xf):
        return math.copysign(0.0, float(xf))
    r = np.float32(1.0) / xf
    for _ in range(bias_ulps):
        r = np.nextafter(r, np.float32(np.inf))
    return float(r)


def to_signed(v: int, width: int) -> int:
    v &= (1 << width) - 1
    if v >= 1 << (width - 1):
        v -= 1 << width
    return v


def to_unsigned(v: int, width: int) -> int:
    return v & ((1 << width) - 1)


# ---------------------------------------------------------------------------
# launch configuration
# ---------------------------------------------------------------------------

ELEM_FMT = {
    "u8": ("<B", 1), "u16": ("<H", 2), "u32": ("<I", 4), "u64": ("<Q", 8),
    "i8": ("<b", 1), "i16": ("<h", 2), "i32": ("<i", 4), "i64": ("<q", 8),
    "f16": ("<e", 2), "f32": ("<f", 4), "f64": ("<d", 8),
}


@dataclass
class BufferSpec:
    name: str
    elem: str
    count: int
    init: list


@dataclass
class ParamSpec:
    offset: int
    kind: str            # ptr | u32 | i32 | u64 | f32 | u16 | u8
    value: object        # buffer name for ptr, number otherwise


@dataclass
class ExpectSpec:
    buffer: str
    elem: str
    rel: float | None    # None = bitwise
    values: list


@dataclass
class LaunchConfig:
    kernel: str = ""
    arch: str = "sm75"
    grid: tuple[int, int, int] = (1, 1, 1)
    block: tuple[int, int, int] = (1, 1, 1)
    shared_bytes: int = 49152
    seed: int = 0
    buffers: list[BufferSpec] = field(default_factory=list)
    params: list[ParamSpec] = field(default_factory=list)
    expects: list[ExpectSpec] = field(default_factory=list)
    rcp_bias_ulps: int = 3

    def nthreads(self) -> int:
        return self.block[0] * self.block[1] * self.block[2]


def parse_launch(text: str) -> LaunchConfig:
    cfg = LaunchConfig()
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        head = parts[0]
        try:
            if head == "kernel":
                cfg.kernel = parts[1]
            elif head == "arch":
                cfg.arch = archmod.check_arch(parts[1])
            elif head == "grid":
                cfg.grid = tuple(int(p, 0) for p in parts[1:4])
            elif head == "block":
                cfg.block = tuple(int(p, 0) for p in parts[1:4])
                if cfg.nthreads() > archmod.MAX_BLOCK_THREADS:
                    raise ValueError("block exceeds 1024 threads")
            elif head == "shared":
                cfg.shared_bytes = int(parts[1], 0)
            elif head == "seed":
                cfg.seed = int(parts[1], 0)
            elif head == "rcp_bias":
                cfg.rcp_bias_ulps = int(parts[1], 0)
            elif head == "buffer":
                cfg.buffers.append(_parse_buffer(line))
            elif head == "param":
                cfg.params.append(ParamSpec(int(parts[1], 0), parts[2],
                                            parts[3] if parts[2] == "ptr"
                                            else _num(parts[3])))
            elif head == "expect":
                cfg.expects.append(_parse_expect(line))
            else:
                raise ValueError(f"unknown directive {head!r}")
        except (IndexError, ValueError) as e:
            raise InterpError(f"launch descriptor line {ln}: {e}") from e
    if not cfg.kernel:
        raise InterpError("launch descriptor missing 'kernel' directive")
    return cfg


def _num(tok: str):
    try:
        return int(tok, 0)
    except ValueError:
        return float(tok)


def _parse_buffer(line: str) -> BufferSpec:
    m = re.match(r"buffer\s+(\w+)\s+(\w+)\[(\d+)\]\s*=\s*(.*)$", line)
    if not m:
        raise ValueError(f"bad buffer spec {line!r}")
    name, elem, count, init = m.group(1), m.group(2), int(m.group(3)), \
        m.group(4).strip()
    if elem not in ELEM_FMT:
        raise ValueError(f"unknown element type {elem!r}")
    toks = init.split()
    if toks and toks[0] == "zeros":
        values = [0] * count
    elif toks and toks[0] == "seq":
        start = _num(toks[1]) if len(toks) > 1 else 0
        step = _num(toks[2]) if len(toks) > 2 else 1
        values = [start + step * i for i in range(count)]
    else:
        values = [_num(t) for t in toks]
        if len(values) != count:
            raise ValueError(
                f"buffer {name}: {len(values)} initializers for {count} elems")
    return BufferSpec(name, elem, count, values)


def _parse_expect(line: str) -> ExpectSpec:
    m = re.match(
        r"expect\s+(\w+)\s+(\w+)(?:\[(\d+)\])?(?:\s+rel=([\d.eE+-]+))?"
        r"\s*=\s*(.*)$", line)
    if not m:
        raise ValueError(f"bad expect spec {line!r}")
    name, elem, count, rel, vals = m.groups()
    if elem not in ELEM_FMT:
        raise ValueError(f"unknown element type {elem!r}")
    toks = vals.split()
    if toks and toks[0] in ("seq", "zeros"):
        if count is None:
            raise ValueError("expect with seq/zeros needs a [count]")
        n = int(count)
        if toks[0] == "zeros":
            values = [0] * n
        else:
            start = _num(toks[1]) if len(toks) > 1 else 0
            step = _num(toks[2]) if len(toks) > 2 else 1
            values = [start + step * i for i in range(n)]
    else:
        values = [_num(t) for t in toks]
    return ExpectSpec(name, elem, float(rel) if rel else None, values)


# ---------------------------------------------------------------------------
# memory
# ---------------------------------------------------------------------------

_BUFFER_BASE = 0x10000000
_BUFFER_STRIDE = 0x01000000


class MemoryImage:
    def __init__(self):
        self.buffers: list[tuple[str, int, bytearray]] = []

    def add(self, name: str, nbytes: int) -> int:
        base = _BUFFER_BASE + len(self.buffers) * _BUFFER_STRIDE
        self.buffers.append((name, base, bytearray(nbytes)))
        return base

    def find(self, addr: int, size: int):
        for name, base, data in self.buffers:
            if base <= addr and addr + size <= base + len(data):
                return data, addr - base
        raise Trap(f"out-of-bounds global access at {addr:#x} ({size} bytes)")

    def bytes_of(self, name: str) -> bytearray:
        for n, _, data in self.buffers:
            if n == name:
                return data
        raise InterpError(f"no buffer named {name}")

    def base_of(self, name: str) -> int:
        for n, base, _ in self.buffers:
            if n == name:
                return base
        raise InterpError(f"no buffer named {name}")


# ---------------------------------------------------------------------------
# thread state
# ---------------------------------------------------------------------------

LOCAL_BYTES = 1 << 16


@dataclass
class ThreadState:
    tid: tuple[int, int, int]
    ctaid: tuple[int, int, int]
    flat: int
    env: dict = field(default_factory=dict)
    label: str = ""
    prev_label: str | None = None
    ip: int = 0
    status: str = "ready"      # ready | barrier | warp | exited | trapped
    wait_data: object = None
    resume_value: object = None
    local: bytearray = field(default_factory=lambda: bytearray(LOCAL_BYTES))
    steps: int = 0

    @property
    def warp(self) -> int:
        return self.flat // archmod.WARP_SIZE

    @property
    def lane(self) -> int:
        return self.flat % archmod.WARP_SIZE

    def where(self) -> str:
        return (f"thread ({self.tid[0]},{self.tid[1]},{self.tid[2]}) "
                f"cta ({self.ctaid[0]},{self.ctaid[1]},{self.ctaid[2]})")


class _Suspend(Exception):
    def __init__(self, kind: str, data):
        self.kind = kind
        self.data = data


# ---------------------------------------------------------------------------
# the machine
# ---------------------------------------------------------------------------

@dataclass
class CheckResult:
    buffer: str
    passed: bool
    detail: str


@dataclass
class RunResult:
    memory: MemoryImage
    checks: list[CheckResult]
    steps: int
    diagnostics: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


MAX_TOTAL_STEPS = 50_000_000
CHUNK_STEPS = 20_000


def run_kernel(module: IRModule | str, name: str, cfg: LaunchConfig,
               schedule_seed: int | None = None) -> RunResult:
    if isinstance(module, str):
        module = parse_ir(module)
    if name not in module.functions:
        raise InterpError(f"module has no function @{name}")
    machine = Machine(module, module.functions[name], cfg,
                      schedule_seed if schedule_seed is not None else cfg.seed)
    machine.run()
    checks = machine.check_expectations()
    return RunResult(machine.memory, checks, machine.total_steps,
                     machine.diagnostics)


class Machine:
    def __init__(self, module: IRModule, fn: IRFunction, cfg: LaunchConfig,
                 seed: int):
        self.module = module
        self.fn = fn
        self.cfg = cfg
        self.rng = random.Random(seed)
        self.memory = MemoryImage()
        self.diagnostics: list[str] = []
        self.total_steps = 0

        for spec in cfg.buffers:
            fmt, size = ELEM_FMT[spec.elem]
            base = self.memory.add(spec.name, size * spec.count)
            data = self.memory.bytes_of(spec.name)
            for i, v in enumerate(spec.init):
                struct.pack_into(fmt, data, i * size,
                                 v if spec.elem[0] == "f" else int(v))

        self.const = bytearray(0x10000)
        for p in cfg.params:
            if p.kind == "ptr":
                struct.pack_into("<Q", self.const, p.offset,
                                 self.memory.base_of(p.value))
            elif p.kind in ("u64", "i64"):
                struct.pack_into("<q" if p.kind == "i64" else "<Q",
                                 self.const, p.offset, int(p.value))
            elif p.kind in ("u32", "i32"):
                struct.pack_into("<i" if p.kind == "i32" else "<I",
                                 self.const, p.offset,
                                 int(p.value) & _MASK32 if p.kind == "u32"
                                 else int(p.value))
            elif p.kind == "f32":
                struct.pack_into("<f", self.const, p.offset, float(p.value))
            elif p.kind == "u16":
                struct.pack_into("<H", self.const, p.offset, int(p.value))
            elif p.kind == "u8":
                struct.pack_into("<B", self.const, p.offset, int(p.value))
            else:
                raise InterpError(f"unknown param kind {p.kind}")
        self._fill_system_slots()

        self.shared = bytearray(cfg.shared_bytes)
        self.threads: list[ThreadState] = []
        self.barrier_wait: dict[int, set[int]] = {}

    def _fill_system_slots(self):
        slots = archmod.SYSTEM_CONST_SLOTS.get(self.cfg.arch, {})
        dims = {
            "ntid.x": self.cfg.block[0], "ntid.y": self.cfg.block[1],
            "ntid.z": self.cfg.block[2],
            "nctaid.x": self.cfg.grid[0], "nctaid.y": self.cfg.grid[1],
            "nctaid.z": self.cfg.grid[2],
        }
        for off, what in slots.items():
            struct.pack_into("<I", self.const, off, dims.get(what, 0))

    # -- top-level run ---------------------------------------------------
    def run(self):
        gx, gy, gz = self.cfg.grid
        for cz in range(gz):
            for cy in range(gy):
                for cx in range(gx):
                    self.run_cta((cx, cy, cz))

    def run_cta(self, ctaid):
        bx, by, bz = self.cfg.block
        self.shared = bytearray(self.cfg.shared_bytes)  # zeroed per CTA
        self.barrier_wait = {}
        self.threads = []
        self.per_thread_const = {}
        flat = 0
        for tz in range(bz):
            for ty in range(by):
                for tx in range(bx):
                    t = ThreadState((tx, ty, tz), ctaid, flat)
                    t.label = self.fn.entry()
                    self.threads.append(t)
                    flat += 1
        # legacy layouts mirror SR_TID in the per-thread constant copy
        sr_slots = archmod.SR_CONST_OFFSETS.get(self.cfg.arch, {})
        for t in self.threads:
            if sr_slots:
                img = bytearray(self.const)
                for off, srname in sr_slots.items():
                    if srname == "SR_TID.X":
                        struct.pack_into("<I", img, off, t.tid[0])
                self.per_thread_const[t.flat] = img

        while True:
            runnable = [t for t in self.threads if t.status == "ready"]
            if runnable:
                t = runnable[self.rng.randrange(len(runnable))]
                self.step_thread(t)
                continue
            alive = [t for t in self.threads if t.status not in ("exited",)]
            if not alive:
                return
            if not self.resolve_rendezvous(alive):
                states = {t.flat: (t.status, t.wait_data) for t in alive[:8]}
                raise Trap(
                    f"deadlock: no runnable thread and no satisfiable "
                    f"barrier/warp rendezvous; waiting: {states}")

    def resolve_rendezvous(self, alive) -> bool:
        # warp exchanges first: they only need their own warp's lanes
        warps: dict[int, list[ThreadState]] = {}
        for t in alive:
            warps.setdefault(t.warp, []).append(t)
        progressed = False
        for wid, lanes in warps.items():
            waiting = [t for t in lanes if t.status == "warp"]
            if waiting and len(waiting) == len(lanes):
                self.complete_warp_op(waiting)
                progressed = True
        if progressed:
            return True
        waiting = [t for t in alive if t.status == "barrier"]
        if waiting and len(waiting) == len(alive):
            ids = {t.wait_data for t in waiting}
            if len(ids) == 1:
                for t in waiting:
                    t.status = "ready"
                    t.wait_data = None
                    t.resume_value = "released"
                return True
        return False

    # -- warp collectives ---------------------------------------------------
    def complete_warp_op(self, lanes: list["ThreadState"]):
        kinds = {t.wait_data[0] for t in lanes}
        if kinds == {"shfl"}:
            width = archmod.WARP_SIZE
            by_lane = {t.lane: t for t in lanes}
            for t in lanes:
                _, mode, value, b, c = t.wait_data
                lane = t.lane
                seg = c & 0x1F
                if mode == "idx":
                    src = b & 0x1F
                elif mode == "up":
                    src = lane - b
                elif mode == "down":
                    src = lane + b
                else:  # bfly
                    src = lane ^ b
                valid = 0 <= src < width and src in by_lane and \
                    by_lane[src].wait_data is not None
                if mode == "down" and src > seg:
                    valid = False
                if mode == "up" and src < 0:
                    valid = False
                if valid:
                    t.resume_value = (by_lane[src].wait_data[2], 1)
                else:
                    t.resume_value = (value, 0)
        elif kinds == {"vote"}:
            preds = [(t.lane, bool(t.wait_data[2])) for t in lanes]
            ballot = 0
            for lane, p in preds:
                if p:
                    ballot |= 1 << lane
            for t in lanes:
                mode = t.wait_data[1]
                if mode == "ballot":
                    t.resume_value = ballot
                elif mode == "any":
                    t.resume_value = 1 if ballot else 0
                else:
                    t.resume_value = 1 if all(p for _, p in preds) else 0
        elif kinds == {"mma"}:
            self._complete_mma(lanes)
        else:
            raise Trap(f"warp divergence: mixed warp ops {kinds}")
        for t in lanes:
            t.status = "ready"
            t.wait_data = None

    def _complete_mma(self, lanes):
        # m16n8k16 f16/bf16 -> f32, standard PTX fragment layout
        shape = {t.wait_data[1] for t in lanes}
        if shape != {"m16n8k16"}:
            raise Trap(f"unsupported mma shape for execution: {shape}")
        A = np.zeros((16, 16), dtype=np.float64)
        B = np.zeros((16, 8), dtype=np.float64)
        C = np.zeros((16, 8), dtype=np.float64)
        for t in lanes:
            _, _, a, b, c = t.wait_data
            g, q = t.lane >> 2, t.lane & 3
            apos = [(g, 2 * q), (g, 2 * q + 1), (g + 8, 2 * q),
                    (g + 8, 2 * q + 1), (g, 2 * q + 8), (g, 2 * q + 9),
                    (g + 8, 2 * q + 8), (g + 8, 2 * q + 9)]
            for val, (r, cc) in zip(a, apos):
                A[r][cc] = val
            bpos = [(2 * q, g), (2 * q + 1, g), (2 * q + 8, g), (2 * q + 9, g)]
            for val, (r, cc) in zip(b, bpos):
                B[r][cc] = val
            cpos = [(g, 2 * q), (g, 2 * q + 1), (g + 8, 2 * q),
                    (g + 8, 2 * q + 1)]
            for val, (r, cc) in zip(c, cpos):
                C[r][cc] = val
        D = A @ B + C
        for t in lanes:
            g, q = t.lane >> 2, t.lane & 3
            cpos = [(g, 2 * q), (g, 2 * q + 1), (g + 8, 2 * q),
                    (g + 8, 2 * q + 1)]
            t.resume_value = [f32(D[r][cc]) for r, cc in cpos]

    # -- stepping ----------------------------------------------------------
    def step_thread(self, t: ThreadState):
        try:
            self.exec_until_suspend(t)
        except _Suspend as s:
            t.status = "barrier" if s.kind == "barrier" else "warp"
            t.wait_data = s.data
        except Trap as e:
            t.status = "trapped"
            raise Trap(f"{e} [{t.where()}]") from e

    def exec_until_suspend(self, t: ThreadState):
        blk = self.fn.blocks[t.label]
        budget = CHUNK_STEPS
        while budget > 0:
            budget -= 1
            self.total_steps += 1
            if self.total_steps > MAX_TOTAL_STEPS:
                raise Trap("interpreter step limit exceeded")
            if t.ip >= len(blk.insts):
                raise Trap(f"fell off the end of block {t.label}")
            inst = blk.insts[t.ip]
            if inst.op == "ret":
                t.status = "exited"
                self._release_barriers()
                return
            if inst.op == "br":
                target = self._branch_target(t, inst)
                t.prev_label = t.label
                t.label = target
                blk = self.fn.blocks[target]
                t.ip = 0
                self._run_phis(t, blk)
                continue
            self.exec_inst(t, inst)
            t.ip += 1

    def _release_barriers(self):
        # a thread exiting may satisfy a pending barrier; nothing to do
        # eagerly: the scheduler re-evaluates rendezvous when idle
        pass

    def _branch_target(self, t, inst) -> str:
        targets = inst.attrs["targets"]
        if len(targets) == 1:
            return targets[0]
        cond = self.operand(t, inst.operands[0])
        return targets[0] if cond else targets[1]

    def _run_phis(self, t: ThreadState, blk):
        values = []
        n = 0
        for inst in blk.insts:
            if inst.op != "phi":
                break
            n += 1
            chosen = None
            for v, lbl in inst.attrs["incomings"]:
                if lbl == t.prev_label:
                    chosen = v
                    break
            if chosen is None:
                raise Trap(f"phi in {blk.label} has no incoming for "
                           f"{t.prev_label}")
            values.append((inst.result,
                           self.token_value(t, chosen, inst.ty)))
        for name, v in values:
            t.env[name] = v
        t.ip = n

    # -- operand evaluation ---------------------------------------------
    def token_value(self, t: ThreadState, token: str, ty: str):
        if token.startswith("%"):
            if token not in t.env:
                raise Trap(f"read of unassigned value {token}")
            v = t.env[token]
            if v is UNDEF:
                raise Trap(f"read of undef value {token}")
            return v
        if token == "undef":
            raise Trap("read of undef operand")
        if token == "true":
            return 1
        if token == "false":
            return 0
        if token == "null":
            return ("ptr", 0)
        if token.startswith("0xH"):
            return float(np.frombuffer(
                struct.pack("<H", int(token[3:], 16)), dtype=np.float16)[0])
        if token.startswith("0xR"):
            return struct.unpack(
                "<f", struct.pack("<I", int(token[3:], 16) << 16))[0]
        if token.startswith("0x"):
            bits = int(token, 16)
            if ty in ("float", "double"):
                d = struct.unpack("<d", struct.pack("<Q", bits))[0]
                return f32(d) if ty == "float" else d
            return bits
        if "." in token or "e" in token or "E" in token:
            return float(token)
        v = int(token)
        if ty and ty.startswith("i"):
            return to_unsigned(v, int(ty[1:]))
        return v

    def operand(self, t: ThreadState, op) -> object:
        return self.token_value(t, op.token, op.ty)

    def lazy_operand(self, t: ThreadState, op):
        """Evaluate without tripping on undef (used by select arms)."""
        if op.token.startswith("%"):
            return t.env.get(op.token, UNDEF)
        if op.token == "undef":
            return UNDEF
        return self.token_value(t, op.token, op.ty)

    # -- instruction execution --------------------------------------------
    def exec_inst(self, t: ThreadState, inst: IRInst):
        op = inst.op
        if op in ("add", "sub", "mul", "and", "or", "xor", "shl", "lshr",
                  "ashr", "udiv", "sdiv", "urem", "srem"):
            self._int_binop(t, inst)
        elif op in ("fadd", "fsub", "fmul", "fdiv"):
            self._float_binop(t, inst)
        elif op == "fneg":
            a = self.operand(t, inst.operands[0])
            t.env[inst.result] = round_float(inst.ty, -a)
        elif op == "icmp":
            self._icmp(t, inst)
        elif op == "fcmp":
            self._fcmp(t, inst)
        elif op == "select":
            cond = self.operand(t, inst.operands[0])
            v = self.lazy_operand(t, inst.operands[1 if cond else 2])
            if v is UNDEF:
                raise Trap(f"select chose an undef arm at line {inst.line_no}")
            t.env[inst.result] = v
        elif op in ("bitcast", "zext", "sext", "trunc", "sitofp", "uitofp",
                    "fptosi", "fptoui", "fpext", "fptrunc", "inttoptr",
                    "ptrtoint"):
            self._cast(t, inst)
        elif op == "load":
            self._load(t, inst)
        elif op == "store":
            self._store(t, inst)
        elif op == "call":
            self._call(t, inst)
        elif op == "extractvalue":
            agg = self.operand(t, inst.operands[0])
            t.env[inst.result] = agg[inst.attrs["index"]]
        elif op == "extractelement":
            vec = self.operand(t, inst.operands[0])
            idx = self.operand(t, inst.operands[1])
            t.env[inst.result] = vec[idx]
        elif op == "insertelement":
            vec = self.lazy_operand(t, inst.operands[0])
            n = vector_len(inst.ty)
            base = list(vec) if vec is not UNDEF else [0] * n
            e = self.operand(t, inst.operands[1])
            idx = self.operand(t, inst.operands[2])
            base[idx] = e
            t.env[inst.result] = base
        else:
            raise Trap(f"unsupported instruction {op} at line {inst.line_no}")

    def _int_binop(self, t, inst):
        ty = element_type(inst.ty)
        w = int(ty[1:])
        a = self.operand(t, inst.operands[0])
        b = self.operand(t, inst.operands[1])
        op = inst.op
        if op == "add":
            r = a + b
        elif op == "sub":
            r = a - b
        elif op == "mul":
            r = a * b
        elif op == "and":
            r = a & b
        elif op == "or":
            r = a | b
        elif op == "xor":
            r = a ^ b
        elif op == "shl":
            r = a << b if b < w else 0
        elif op == "lshr":
            r = a >> b if b < w else 0
        elif op == "ashr":
            r = to_signed(a, w) >> b if b < w else (-1 if to_signed(a, w) < 0
                                                    else 0)
        elif op == "udiv":
            if b == 0:
                raise Trap("udiv by zero")
            r = a // b
        elif op == "sdiv":
            if b == 0:
                raise Trap("sdiv by zero")
            sa, sb = to_signed(a, w), to_signed(b, w)
            r = int(sa / sb)  # trunc toward zero
        elif op == "urem":
            if b == 0:
                raise Trap("urem by zero")
            r = a % b
        else:
            sa, sb = to_signed(a, w), to_signed(b, w)
            if sb == 0:
                raise Trap("srem by zero")
            r = sa - int(sa / sb) * sb
        t.env[inst.result] = to_unsigned(r, w)

    def _float_binop(self, t, inst):
        ty = element_type(inst.ty)
        a = self.operand(t, inst.operands[0])
        b = self.operand(t, inst.operands[1])
        if isinstance(a, list) or isinstance(b, list):
            t.env[inst.result] = [
                self._float_scalar_op(inst.op, ty, x, y)
                for x, y in zip(a, b)
            ]
            return
        t.env[inst.result] = self._float_scalar_op(inst.op, ty, a, b)

    def _float_scalar_op(self, op, ty, a, b):
        if ty == "float":
            a, b = np.float32(a), np.float32(b)
        elif ty == "half":
            a, b = np.float16(a), np.float16(b)
        with np.errstate(all="ignore"):
            if op == "fadd":
                r = a + b
            elif op == "fsub":
                r = a - b
            elif op == "fmul":
                r = a * b
            else:
                r = a / b
        return round_float(ty, float(r))

    def _icmp(self, t, inst):
        ty = element_type(inst.ty)
        w = 64 if ty.startswith("ptr") else int(ty[1:])
        a = self.operand(t, inst.operands[0])
        b = self.operand(t, inst.operands[1])
        if isinstance(a, tuple):
            a = a[1]
        if isinstance(b, tuple):
            b = b[1]
        pred = inst.attrs["pred"]
        if pred.startswith("s"):
            a, b = to_signed(a, w), to_signed(b, w)
        table = {
            "eq": a == b, "ne": a != b,
            "ugt": a > b, "uge": a >= b, "ult": a < b, "ule": a <= b,
            "sgt": a > b, "sge": a >= b, "slt": a < b, "sle": a <= b,
        }
        t.env[inst.result] = 1 if table[pred] else 0

    def _fcmp(self, t, inst):
        a = self.operand(t, inst.operands[0])
        b = self.operand(t, inst.operands[1])
        unordered = math.isnan(a) or math.isnan(b)
        pred = inst.attrs["pred"]
        if pred == "true":
            r = True
        elif pred == "false":
            r = False
        elif pred == "ord":
            r = not unordered
        elif pred == "uno":
            r = unordered
        else:
            cmps = {"eq": a == b, "gt": a > b, "ge": a >= b, "lt": a < b,
                    "le": a <= b, "ne": a != b}
            core = cmps[pred[1:]]
            if pred.startswith("o"):
                r = core and not unordered
            else:
                r = core or unordered
        t.env[inst.result] = 1 if r else 0

    def _cast(self, t, inst):
        op = inst.op
        src_ty = inst.attrs["src_ty"]
        dst_ty = inst.ty
        v = self.operand(t, inst.operands[0])
        if op == "bitcast":
            t.env[inst.result] = _bit_convert(v, src_ty, dst_ty)
            return
        if op == "zext":
            t.env[inst.result] = v
            return
        if op == "sext":
            w_src = int(element_type(src_ty)[1:])
            w_dst = int(element_type(dst_ty)[1:])
            t.env[inst.result] = to_unsigned(to_signed(v, w_src), w_dst)
            return
        if op == "trunc":
            w_dst = int(element_type(dst_ty)[1:])
            t.env[inst.result] = to_unsigned(v, w_dst)
            return
        if op == "sitofp":
            w = int(element_type(src_ty)[1:])
            t.env[inst.result] = round_float(dst_ty, float(to_signed(v, w)))
            return
        if op == "uitofp":
            t.env[inst.result] = round_float(dst_ty, float(v))
            return
        if op in ("fptosi", "fptoui"):
            w = int(element_type(dst_ty)[1:])
            if math.isnan(v) or math.isinf(v):
                r = 0
            else:
                r = int(v)  # trunc toward zero
            t.env[inst.result] = to_unsigned(r, w)
            return
        if op in ("fpext", "fptrunc"):
            t.env[inst.result] = round_float(dst_ty, v)
            return
        if op == "inttoptr":
            space = 0
            m = re.search(r"addrspace\((\d+)\)", dst_ty)
            if m:
                space = int(m.group(1))
            t.env[inst.result] = (space, v)
            return
        if op == "ptrtoint":
            t.env[inst.result] = v[1]
            return
        raise Trap(f"unsupported cast {op}")

    # -- memory ------------------------------------------------------------
    def _mem_bytes(self, t: ThreadState, ptr, size):
        space, addr = ptr
        if space == 1 or space == 0:
            data, off = self.memory.find(addr, size)
            return data, off
        if space == 3:
            if addr + size > len(self.shared):
                raise Trap(f"shared access out of bounds at {addr:#x}")
            return self.shared, addr
        if space == 4:
            img = self.per_thread_const.get(t.flat, self.const)
            if addr + size > len(img):
                raise Trap(f"constant access out of bounds at {addr:#x}")
            return img, addr
        if space == 5:
            if addr + size > len(t.local):
                raise Trap(f"local access out of bounds at {addr:#x}")
            return t.local, addr
        raise Trap(f"unknown address space {space}")

    _LOAD_FMT = {"i8": "<B", "i16": "<H", "i32": "<I", "i64": "<Q",
                 "float": "<f", "double": "<d", "half": "<e", "i1": "<B",
                 "<2 x half>": "<2e", "<2 x bfloat>": None}

    def _load(self, t, inst):
        ptr = self.operand(t, inst.operands[0])
        ty = inst.ty
        if ty == "<2 x bfloat>":
            data, off = self._mem_bytes(t, ptr, 4)
            raw = struct.unpack_from("<2H", data, off)
            t.env[inst.result] = [
                struct.unpack("<f", struct.pack("<I", h << 16))[0]
                for h in raw]
            return
        fmt = self._LOAD_FMT.get(ty)
        if fmt is None:
            raise Trap(f"unsupported load type {ty}")
        size = struct.calcsize(fmt)
        data, off = self._mem_bytes(t, ptr, size)
        if ty == "<2 x half>":
            t.env[inst.result] = [float(x)
                                  for x in struct.unpack_from(fmt, data, off)]
            return
        v = struct.unpack_from(fmt, data, off)[0]
        if ty == "half":
            v = float(v)
        if ty == "i1":
            v &= 1
        t.env[inst.result] = v

    def _store(self, t, inst):
        v = self.operand(t, inst.operands[0])
        ptr = self.operand(t, inst.operands[1])
        ty = inst.operands[0].ty
        if ty == "<2 x bfloat>":
            data, off = self._mem_bytes(t, ptr, 4)
            for k, x in enumerate(v):
                bits = struct.unpack("<I", struct.pack("<f", bf16(x)))[0]
                struct.pack_into("<H", data, off + 2 * k, (bits >> 16) & 0xFFFF)
            return
        fmt = self._LOAD_FMT.get(ty)
        if fmt is None:
            raise Trap(f"unsupported store type {ty}")
        size = struct.calcsize(fmt)
        data, off = self._mem_bytes(t, ptr, size)
        if ty == "<2 x half>":
            struct.pack_into(fmt, data, off, *[float(x) for x in v])
        elif ty in ("float", "double", "half"):
            struct.pack_into(fmt, data, off, v)
        else:
            struct.pack_into(fmt, data, off, to_unsigned(int(v), size * 8))

    # -- calls --------------------------------------------------------------
    def _call(self, t, inst):
        name = inst.attrs["callee"]
        if t.resume_value is not None:
            rv = t.resume_value
            t.resume_value = None
            if rv != "released" and inst.result:
                t.env[inst.result] = rv
            return
        args = [self.operand(t, o) for o in inst.operands]
        result = self.intrinsic(t, inst, name, args)
        if inst.result is not None:
            t.env[inst.result] = result

    def intrinsic(self, t: ThreadState, inst, name: str, args):
        cfg = self.cfg
        if name.startswith("llvm.nvvm.read.ptx.sreg."):
            what = name.rsplit(".", 2)[-2:]
            reg, axis = what[0], what[1] if len(what) > 1 else "x"
            axis_i = {"x": 0, "y": 1, "z": 2}[axis]
            table = {
                "tid": t.tid[axis_i], "ctaid": t.ctaid[axis_i],
                "ntid": cfg.block[axis_i], "nctaid": cfg.grid[axis_i],
            }
            if reg in table:
                return table[reg]
            if name.endswith("laneid"):
                return t.lane
            raise Trap(f"unknown special register intrinsic {name}")
        if name == "llvm.nvvm.barrier0":
            raise _Suspend("barrier", 0)
        if name == "sass.bar.sync":
            raise _Suspend("barrier", args[0])
        if name == "sass.warpsync":
            return None  # lockstep chunks make this a no-op here
        if name.startswith("sass.convergence."):
            return None
        if name == "sass.rcp.approx.f32":
            return biased_reciprocal(args[0], cfg.rcp_bias_ulps)
        if name == "sass.rsq.approx.f32":
            if args[0] < 0:
                return float("nan")
            if args[0] == 0:
                return float("inf")
            return f32(1.0 / math.sqrt(args[0]))
        if name == "sass.sqrt.approx.f32":
            return f32(math.sqrt(args[0])) if args[0] >= 0 else float("nan")
        if name == "sass.sin.approx.f32":
            return f32(math.sin(args[0]))
        if name == "sass.cos.approx.f32":
            return f32(math.cos(args[0]))
        if name == "sass.ex2.approx.f32":
            return f32(2.0 ** args[0])
        if name == "sass.lg2.approx.f32":
            if args[0] <= 0:
                return float("-inf") if args[0] == 0 else float("nan")
            return f32(math.log2(args[0]))
        if name.startswith("llvm.fma."):
            suffix = name.rsplit(".", 1)[1]
            ty = {"f32": "float", "f64": "double", "v2f16": "half",
                  "v2bf16": "bfloat"}[suffix]
            if suffix.startswith("v2"):
                return [round_float(ty, float(a) * float(b) + float(c))
                        for a, b, c in zip(args[0], args[1], args[2])]
            return round_float(ty, float(args[0]) * float(args[1]) + float(args[2]))
        if name.startswith("llvm.fabs."):
            return abs(args[0])
        if name == "llvm.abs.i32":
            return to_unsigned(abs(to_signed(args[0], 32)), 32)
        if name.startswith(("llvm.smin.", "llvm.smax.")):
            w = int(name.rsplit(".i", 1)[1])
            a, b = to_signed(args[0], w), to_signed(args[1], w)
            r = min(a, b) if ".smin." in name else max(a, b)
            return to_unsigned(r, w)
        if name.startswith(("llvm.umin.", "llvm.umax.")):
            return min(args[0], args[1]) if ".umin." in name \
                else max(args[0], args[1])
        if name.startswith(("llvm.minnum.", "llvm.maxnum.")):
            a, b = args
            if math.isnan(a):
                return b
            if math.isnan(b):
                return a
            return min(a, b) if ".minnum." in name else max(a, b)
        if name == "llvm.ctpop.i32":
            return bin(args[0]).count("1")
        if name == "llvm.ctlz.i32":
            return 32 - args[0].bit_length() if args[0] else 32
        if name == "llvm.bitreverse.i32":
            return int(f"{args[0]:032b}"[::-1], 2)
        if name.startswith(("llvm.floor.", "llvm.ceil.", "llvm.trunc.",
                            "llvm.rint.")):
            fnname = name.split(".")[1]
            ty = {"f32": "float", "f64": "double"}[name.rsplit(".", 1)[1]]
            f = {"floor": math.floor, "ceil": math.ceil,
                 "trunc": math.trunc,
                 "rint": lambda x: float(np.rint(x))}[fnname]
            return round_float(ty, float(f(args[0])))
        if name == "sass.prmt":
            return self._prmt(args[0], args[1], args[2])
        if name.startswith("sass.atom."):
            return self._atomic(t, name, args)
        if name.startswith("sass.shfl."):
            mode = name.split(".")[2]
            raise _Suspend("warp", ("shfl", mode, args[0], args[1], args[2]))
        if name.startswith("sass.vote."):
            mode = name.split(".")[2]
            raise _Suspend("warp", ("vote", mode, args[0]))
        if name.startswith("llvm.nvvm.mma."):
            shape = name.split(".")[3]
            raise _Suspend("warp", ("mma", shape, args[0], args[1], args[2]))
        if name.startswith("sass.opaque.") or name.startswith("sass.call"):
            raise Trap(f"opaque intrinsic @{name} has no executable semantics")
        raise Trap(f"unknown intrinsic @{name}")

    def _prmt(self, a, b, sel):
        data = struct.pack("<II", a & _MASK32, b & _MASK32)
        out = bytes(data[(sel >> (4 * i)) & 0x7] for i in range(4))
        return struct.unpack("<I", out)[0]

    def _atomic(self, t, name, args):
        _, _, space, op, ty = name.split(".")
        addr, val = args
        is_float = ty == "f32"
        fmt = "<f" if is_float else "<I"
        spaceid = {"global": 1, "shared": 3, "local": 5}[space]
        data, off = self._mem_bytes(t, (spaceid, addr), 4)
        old = struct.unpack_from(fmt, data, off)[0]
        if op == "add":
            new = old + val
        elif op == "min":
            new = min(to_signed(old, 32), to_signed(val, 32)) \
                if not is_float else min(old, val)
        elif op == "max":
            new = max(to_signed(old, 32), to_signed(val, 32)) \
                if not is_float else max(old, val)
        elif op == "and":
            new = old & val
        elif op == "or":
            new = old | val
        elif op == "xor":
            new = old ^ val
        elif op == "exch":
            new = val
        else:
            raise Trap(f"unsupported atomic op {op}")
        if is_float:
            struct.pack_into(fmt, data, off, f32(new))
        else:
            struct.pack_into(fmt, data, off, to_unsigned(int(new), 32))
        return old

    # -- expectation checks -------------------------------------------------
    def check_expectations(self) -> list[CheckResult]:
        out = []
        for exp in self.cfg.expects:
            fmt, size = ELEM_FMT[exp.elem]
            data = self.memory.bytes_of(exp.buffer)
            got = [struct.unpack_from(fmt, data, i * size)[0]
                   for i in range(len(exp.values))]
            bad = []
            for i, (g, e) in enumerate(zip(got, exp.values)):
                if exp.rel is None:
                    ok = int(g) == int(e)
                else:
                    ok = _close(float(g), float(e), exp.rel)
                if not ok:
                    bad.append((i, g, e))
            if bad:
                i, g, e = bad[0]
                out.append(CheckResult(
                    exp.buffer, False,
                    f"{len(bad)}/{len(got)} mismatches; first at [{i}]: "
                    f"got {g!r}, expected {e!r}"))
            else:
                out.append(CheckResult(exp.buffer, True,
                                       f"{len(got)} values match"))
        return out


def _close(got: float, exp: float, rel: float) -> bool:
    if got == exp:
        return True
    if math.isnan(got) and math.isnan(exp):
        return True
    scale = max(abs(exp), abs(got))
    return abs(got - exp) <= rel * scale


def _bit_convert(v, src_ty: str, dst_ty: str):
    n_src = vector_len(src_ty)
    n_dst = vector_len(dst_ty)
    if n_src is not None or n_dst is not None:
        elems = v if n_src is not None else [v]
        raw = b"".join(_pack_scalar(e, element_type(src_ty)) for e in elems)
        out_elem = element_type(dst_ty)
        size = struct.calcsize(_SCALAR_FMT[out_elem])
        vals = [_unpack_scalar(raw[i:i + size], out_elem)
                for i in range(0, len(raw), size)]
        return vals if n_dst is not None else vals[0]
    raw = _pack_scalar(v, src_ty)
    return _unpack_scalar(raw, dst_ty)


_SCALAR_FMT = {"i1": "<B", "i8": "<B", "i16": "<H", "i32": "<I", "i64": "<Q",
               "float": "<f", "double": "<d", "half": "<e", "bfloat": "<H"}


def _pack_scalar(v, ty: str) -> bytes:
    if ty == "bfloat":
        bits = struct.unpack("<I", struct.pack("<f", float(v)))[0]
        return struct.pack("<H", (bits >> 16) & 0xFFFF)
    fmt = _SCALAR_FMT[ty]
    if ty in ("float", "double", "half"):
        return struct.pack(fmt, float(v))
    return struct.pack(fmt, to_unsigned(int(v), struct.calcsize(fmt) * 8))


def _unpack_scalar(raw: bytes, ty: str):
    if ty == "bfloat":
        bits = struct.unpack("<H", raw)[0]
        return struct.unpack("<f", struct.pack("<I", bits << 16))[0]
    fmt = _SCALAR_FMT[ty]
    v = struct.unpack(fmt, raw[:struct.calcsize(fmt)])[0]
    if ty == "half":
        return float(v)
    return v
