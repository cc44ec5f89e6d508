"""Textual SASS frontend.

Parses disassembly listings into raw SSIR instructions, expands nested
opcodes to 3-address form, recovers implicitly accessed register groups
from per-opcode tables, and rewrites constant-memory aliases of special
registers into explicit S2R reads.

Input grammar (one instruction per line):

    [ADDR:] [@[!]Pn] OPCODE[.MOD]* [operand {, operand}] [;] [// comment]

``ADDR`` is hex with or without ``0x``.  A line consisting only of an
address and a ``/* ... */`` blob is a scheduling control-code line; it
occupies an address but no instruction (branch targets landing on one
are realigned forward).  ``.text.NAME:`` starts a new function.

The optional sidecar manifest supplies what an ELF would:

    arch: sm90
    function vecadd at 0x0
    call_target 0x210 -> 0x780
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from . import arch as archmod
from .operands import (
    ConstMem, Imm, MemRef, Opcode, Operand, ParseError, Pred, PT_INDEX, Reg,
    SReg, SourceLine, UReg, ValueRef, ZeroReg, encode_float_imm,
)
from .ssir import Instruction, LiftedFunction, Phase

# ---------------------------------------------------------------------------
# supported opcode table
# ---------------------------------------------------------------------------

# base mnemonic -> category.  Categories drive operand splitting, implicit
# register expansion, type seeding and emission.
OPCODE_TABLE: dict[str, str] = {
    # control
    "BRA": "control", "EXIT": "control", "RET": "control",
    "CALL": "control", "NOP": "control",
    # convergence and synchronization (kept as instructions with metadata)
    "BSSY": "sync", "BSYNC": "sync", "SSY": "sync", "SYNC": "sync",
    "WARPSYNC": "sync", "BAR": "sync", "MEMBAR": "sync", "DEPBAR": "sync",
    "LDGDEPBAR": "sync", "FENCE": "sync",
    # float32 ALU
    "FADD": "falu", "FMUL": "falu", "FFMA": "falu", "FMNMX": "falu",
    "FSEL": "falu", "FSET": "falu", "MUFU": "falu", "FSETP": "fcmp",
    # float64 ALU (register pairs)
    "DADD": "dalu", "DMUL": "dalu", "DFMA": "dalu", "DSETP": "dcmp",
    # packed float16 ALU
    "HADD2": "halu", "HMUL2": "halu", "HFMA2": "halu", "HSETP2": "hcmp",
    # integer ALU
    "IADD": "ialu", "IADD3": "ialu", "IMAD": "ialu", "IMNMX": "ialu",
    "IABS": "ialu", "LOP": "ialu", "LOP3": "ialu", "LEA": "ialu",
    "FLO": "ialu", "POPC": "ialu", "BREV": "ialu", "PRMT": "ialu",
    "XMAD": "ialu", "P2R": "ialu", "ISETP": "icmp", "PLOP3": "pred",
    "SHF": "shift", "SHL": "shift", "SHR": "shift",
    # moves / selects / special-register reads
    "MOV": "move", "MOV32I": "move", "SEL": "move", "S2R": "sreg",
    "CS2R": "sreg", "SHFL": "shuffle", "VOTE": "vote", "VOTEU": "vote",
    # uniform datapath
    "UMOV": "move", "ULDC": "load", "UIADD3": "ialu", "USHF": "shift",
    "ULEA": "ialu", "ULOP3": "ialu", "UIMAD": "ialu", "USEL": "move",
    # conversions
    "I2F": "convert", "F2I": "convert", "F2F": "convert", "I2I": "convert",
    "FRND": "convert",
    # async copy and packed conversion lift as opaque intrinsics
    "F2FP": "opaque", "LDGSTS": "opaque",
    # memory
    "LDG": "load", "LD": "load", "LDS": "load", "LDL": "load", "LDC": "load",
    "STG": "store", "ST": "store", "STS": "store", "STL": "store",
    "ATOM": "atomic", "ATOMS": "atomic", "ATOMG": "atomic", "RED": "store",
    # tensor core
    "HMMA": "tensor", "IMMA": "tensor", "HGMMA": "tensor",
    # pseudo-opcodes introduced by lifting passes (never parsed from SASS)
    "PHI": "pseudo", "SELECT": "pseudo", "BITCAST": "pseudo",
    "PACK64": "pseudo", "UNPACK64": "pseudo", "UNPACK128": "pseudo",
    "IADD364": "pseudo64", "ISETP64": "pseudo64", "LEA64": "pseudo64",
    "IMAD64": "pseudo64", "MOV64": "pseudo64", "SHL64": "pseudo64",
    "SHR64": "pseudo64", "CAST64": "pseudo64",
}

STORE_LIKE = {"STG", "ST", "STS", "STL", "RED"}
GLOBAL_SPACE = {"LDG", "STG", "LD", "ST", "ATOM", "ATOMG", "RED"}
CARRY_ALU = {"IADD", "IADD3", "LEA", "IMAD", "UIADD3", "ULEA", "UIMAD"}

# tensor shapes: (base, shape modifier) -> register count per named operand
TENSOR_SHAPES: dict[tuple[str, str], tuple[int, int, int, int]] = {
    ("HMMA", "16816"): (4, 4, 2, 4),      # m16n8k16: D, A, B, C
    ("HGMMA", "64x128x16"): (64, 4, 32, 64),
    ("IMMA", "16816"): (4, 4, 2, 4),
}


def opcode_category(base: str) -> str | None:
    return OPCODE_TABLE.get(base)


def is_known_opcode(base: str) -> bool:
    return base in OPCODE_TABLE


# ---------------------------------------------------------------------------
# operand parsing
# ---------------------------------------------------------------------------

_ADDR_RE = re.compile(r"^(0x[0-9a-fA-F]+|[0-9a-fA-F]+)\s*:\s*")
_GUARD_RE = re.compile(r"^@(!?)(P[0-7]|PT)\s+")
_FUNC_RE = re.compile(r"^\.text\.([\w.$]+)\s*:\s*$")
_CTRL_RE = re.compile(r"/\*(.*?)\*/")
_INT_RE = re.compile(r"^-?(0x[0-9a-fA-F]+|\d+)$")
_FLOAT_RE = re.compile(r"^-?(\d+\.\d*([eE][-+]?\d+)?|\d+[eE][-+]?\d+|\.\d+([eE][-+]?\d+)?|INF|NAN)$")


def _parse_pred(tok: str, line_no=None) -> Pred:
    neg = tok.startswith("!")
    if neg:
        tok = tok[1:]
    if tok == "PT":
        return Pred(PT_INDEX, neg)
    if re.fullmatch(r"P[0-7]", tok):
        return Pred(int(tok[1:]), neg)
    raise ParseError(f"bad predicate {tok!r}", line_no)


def parse_operand(tok: str, line_no: int | None = None) -> Operand:
    tok = tok.strip()
    if not tok:
        raise ParseError("empty operand", line_no)

    neg = bitnot = absolute = False
    while tok and tok[0] in "-~":
        if tok[0] == "-":
            neg = True
        else:
            bitnot = True
        tok = tok[1:]
    if tok.startswith("|") and tok.endswith("|"):
        absolute = True
        tok = tok[1:-1]

    if tok.startswith("["):
        if not tok.endswith("]"):
            raise ParseError(f"unterminated memory operand {tok!r}", line_no)
        return _parse_memref(tok[1:-1], line_no)

    if tok.startswith("c[") or tok.startswith("cx["):
        return _parse_constmem(tok, line_no, neg, absolute)

    if tok.startswith("!") or re.fullmatch(r"!?(P[0-7]|PT)", tok):
        p = _parse_pred(tok, line_no)
        if neg:
            p.negated = not p.negated
        return p

    # suffixes: .H0/.H1 half selector, .reuse hint, .64 group width
    half = None
    reuse = False
    width = 1
    m = re.match(r"^([A-Za-z_][\w$]*?)((?:\.(?:H0|H1|reuse|64|128))*)$", tok)
    core, suffixes = (m.group(1), m.group(2)) if m else (tok, "")
    for suf in [s for s in suffixes.split(".") if s]:
        if suf in ("H0", "H1"):
            half = suf
        elif suf == "reuse":
            reuse = True
        elif suf == "64":
            width = 2
        elif suf == "128":
            width = 4

    if core == "RZ":
        return ZeroReg(False, neg, bitnot)
    if core == "URZ":
        return ZeroReg(True, neg, bitnot)
    if re.fullmatch(r"R\d+", core):
        idx = int(core[1:])
        if idx > 255:
            raise ParseError(f"register index out of range in {tok!r}", line_no)
        return Reg(idx, width, neg, absolute, bitnot, half, reuse)
    if re.fullmatch(r"UR\d+", core):
        return UReg(int(core[2:]), width, neg, absolute, bitnot)
    if core.startswith("SR_") or re.fullmatch(r"B\d+", core):
        # barrier resources (B0..B15) and special registers stay symbolic
        name = tok if tok.startswith("SR_") else core
        return SReg(name)

    if _INT_RE.match(tok):
        v = int(tok, 0)
        if neg:
            v = -v
        text = ("-" if neg else "") + tok
        return Imm(v & 0xFFFFFFFFFFFFFFFF, text, is_float=False)
    if _FLOAT_RE.match(tok):
        text = ("-" if neg else "") + tok
        return Imm(encode_float_imm(text), text, is_float=True)
    raise ParseError(f"unrecognized operand {tok!r}", line_no)


def _parse_constmem(tok: str, line_no, neg, absolute) -> ConstMem:
    m = re.match(
        r"^cx?\[(0x[0-9a-fA-F]+|\d+)\]\[(0x[0-9a-fA-F]+|\d+)\](?:\.(H0|H1))?$", tok
    )
    if not m:
        raise ParseError(f"bad constant-memory operand {tok!r}", line_no)
    return ConstMem(int(m.group(1), 0), int(m.group(2), 0), 1, m.group(3),
                    neg, absolute)


def _parse_memref(inner: str, line_no) -> MemRef:
    base = None
    ureg = None
    offset = 0
    for part in re.split(r"(?=[+-])", inner.replace(" ", "")):
        if not part:
            continue
        sign = 1
        if part[0] == "+":
            part = part[1:]
        elif part[0] == "-":
            sign = -1
            part = part[1:]
        if not part:
            raise ParseError(f"bad address expression [{inner}]", line_no)
        if _INT_RE.match(part):
            offset += sign * int(part, 0)
        else:
            op = parse_operand(part, line_no)
            if isinstance(op, Reg):
                base = op
            elif isinstance(op, UReg):
                ureg = op
            elif isinstance(op, ZeroReg):
                pass  # RZ base contributes nothing
            else:
                raise ParseError(f"bad address term {part!r} in [{inner}]", line_no)
    return MemRef(base, ureg, offset)


def _split_operand_text(s: str, line_no) -> list[str]:
    """Split on commas not inside brackets."""
    out, depth, cur = [], 0, []
    for ch in s:
        if ch in "[{(":
            depth += 1
        elif ch in "]})":
            depth -= 1
        if ch == "," and depth == 0:
            out.append("".join(cur).strip())
            cur = []
        else:
            cur.append(ch)
    tail = "".join(cur).strip()
    if tail:
        out.append(tail)
    if any(not t for t in out):
        raise ParseError("empty operand in list", line_no)
    return out


# ---------------------------------------------------------------------------
# def/use splitting
# ---------------------------------------------------------------------------

def split_operands(opcode: Opcode, operands: list[Operand]):
    """Partition parsed operands into (defs, aux_predicate_defs, uses)."""
    cat = opcode_category(opcode.base)
    base = opcode.base

    if cat in ("control", "sync") or base in STORE_LIKE:
        return [], [], list(operands)

    if cat in ("icmp", "fcmp", "dcmp", "hcmp"):
        # ISETP Pu, Pv, a, b, accum[, lo-half result for .EX]
        if len(operands) < 2 or not isinstance(operands[0], Pred):
            raise ParseError(f"{base} expects two leading predicate defs")
        return [operands[0]], [operands[1]], list(operands[2:])

    if cat == "pred":
        defs = [operands[0]]
        aux = [operands[1]] if len(operands) > 1 and isinstance(operands[1], Pred) else []
        return defs, aux, list(operands[len(defs) + len(aux):])

    if cat == "shuffle":
        # SHFL.mode Pd, Rd, src, lane, clamp
        if len(operands) >= 2 and isinstance(operands[0], Pred):
            return [operands[1]], [operands[0]], list(operands[2:])
        return [operands[0]], [], list(operands[1:])

    if not operands:
        return [], [], []

    if not isinstance(operands[0], (Reg, UReg, Pred)):
        # opaque/unknown form with a leading memory or immediate operand
        return [], [], list(operands)
    defs = [operands[0]]
    rest = list(operands[1:])
    aux = []
    if base in CARRY_ALU:
        while rest and isinstance(rest[0], Pred):
            aux.append(rest.pop(0))
    return defs, aux, rest


# ---------------------------------------------------------------------------
# line / module parsing
# ---------------------------------------------------------------------------

@dataclass
class ParsedFunction:
    name: str
    param_base: int
    lines: list[SourceLine] = field(default_factory=list)
    control_addresses: list[int] = field(default_factory=list)
    entry_address: int = 0


@dataclass
class Manifest:
    arch: str | None = None
    functions: list[tuple[str, int]] = field(default_factory=list)
    call_targets: dict[int, int] = field(default_factory=dict)


def parse_manifest(text: str) -> Manifest:
    man = Manifest()
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("arch:"):
            man.arch = line.split(":", 1)[1].strip()
        elif line.startswith("function "):
            m = re.match(r"function\s+([\w.$]+)\s+at\s+(0x[0-9a-fA-F]+|\d+)$", line)
            if not m:
                raise ParseError(f"bad manifest entry {line!r}", ln)
            man.functions.append((m.group(1), int(m.group(2), 0)))
        elif line.startswith("call_target "):
            m = re.match(
                r"call_target\s+(0x[0-9a-fA-F]+|\d+)\s*->\s*(0x[0-9a-fA-F]+|\d+)$", line
            )
            if not m:
                raise ParseError(f"bad manifest entry {line!r}", ln)
            man.call_targets[int(m.group(1), 0)] = int(m.group(2), 0)
        else:
            raise ParseError(f"unknown manifest directive {line!r}", ln)
    return man


def parse_module(text: str, arch: str,
                 manifest: Manifest | None = None) -> list[ParsedFunction]:
    """Split disassembly text into per-function SourceLine streams."""
    archmod.check_arch(arch)
    pbase = archmod.param_base(arch)

    entries: list[ParsedFunction] = []
    by_name: dict[str, ParsedFunction] = {}
    current: ParsedFunction | None = None
    next_synth = 0
    man_funcs = sorted(manifest.functions, key=lambda kv: kv[1]) if manifest else []

    def fn_for_address(addr: int) -> ParsedFunction:
        nonlocal current
        if man_funcs:
            name, start = man_funcs[0]
            for fname, faddr in man_funcs:
                if addr >= faddr:
                    name, start = fname, faddr
            if name not in by_name:
                f = ParsedFunction(name, pbase, entry_address=start)
                by_name[name] = f
                entries.append(f)
            return by_name[name]
        if current is None:
            current = ParsedFunction(f"f{len(entries)}", pbase)
            entries.append(current)
        return current

    def fn_last_address(f: ParsedFunction) -> int:
        last = -1
        if f.lines:
            last = f.lines[-1].address
        if f.control_addresses:
            last = max(last, f.control_addresses[-1])
        return last

    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        m = _FUNC_RE.match(line)
        if m:
            current = ParsedFunction(m.group(1), pbase)
            entries.append(current)
            by_name[m.group(1)] = current
            continue

        control = None
        cm = _CTRL_RE.search(line)
        if cm:
            control = cm.group(1).strip()
            line = _CTRL_RE.sub("", line).strip()
        if "//" in line:
            line = line.split("//", 1)[0].strip()
        line = line.rstrip(";").strip()

        addr = None
        am = _ADDR_RE.match(line)
        if am:
            tok = am.group(1)
            addr = int(tok, 0) if tok.startswith("0x") else int(tok, 16)
            line = line[am.end():].strip()
        if not line and control is None:
            continue
        if addr is None:
            addr = next_synth

        fn = fn_for_address(addr)
        if addr <= fn_last_address(fn):
            raise ParseError(f"address {addr:#x} does not increase", ln)
        if not line:
            # control-code-only line: occupies an address, no instruction
            fn.control_addresses.append(addr)
        else:
            fn.lines.append(SourceLine(addr, line, control, ln))
        next_synth = addr + 16

    for fn in entries:
        if fn.lines and not man_funcs:
            fn.entry_address = fn.lines[0].address
    return [f for f in entries if f.lines or f.control_addresses]


def parse_instruction_line(fn: LiftedFunction, line: SourceLine) -> Instruction:
    text = line.text
    guard = None
    gm = _GUARD_RE.match(text)
    if gm:
        guard = Pred(PT_INDEX if gm.group(2) == "PT" else int(gm.group(2)[1:]),
                     gm.group(1) == "!")
        text = text[gm.end():].strip()

    parts = text.split(None, 1)
    if not parts:
        raise ParseError("empty instruction", line.line_no)
    opcode = Opcode.parse(parts[0])
    operands: list[Operand] = []
    if len(parts) > 1:
        operands = [parse_operand(t, line.line_no)
                    for t in _split_operand_text(parts[1], line.line_no)]

    defs, aux, uses = split_operands(opcode, operands)
    inst = fn.make_inst(opcode, defs, uses, guard=guard, aux=aux, raw=line)
    if not is_known_opcode(opcode.base):
        inst.meta["unknown_opcode"] = True
        fn.diagnose(f"{line.address:#x}: unknown opcode {opcode.base}, lifted opaquely")
    return inst


def render_sass(inst: Instruction) -> str:
    """Print an instruction back in source syntax (round-trip surface)."""
    ops: list[Operand]
    cat = opcode_category(inst.opcode.base)
    if cat in ("icmp", "fcmp", "dcmp", "hcmp", "pred"):
        ops = inst.defs + inst.aux_defs + inst.uses
    elif cat == "shuffle" and inst.aux_defs:
        ops = inst.aux_defs + inst.defs + inst.uses
    elif inst.opcode.base in CARRY_ALU:
        ops = inst.defs + inst.aux_defs + inst.uses
    else:
        ops = inst.defs + inst.aux_defs + inst.uses
    head = f"@{inst.guard} " if inst.guard is not None else ""
    body = str(inst.opcode)
    if ops:
        body += " " + ", ".join(_render_operand(o) for o in ops)
    return head + body


def _render_operand(op: Operand) -> str:
    if isinstance(op, Reg):
        s = f"R{op.base}"
        if op.half:
            s += f".{op.half}"
        if op.reuse:
            s += ".reuse"
        if op.absolute:
            s = f"|{s}|"
        if op.bitnot:
            s = "~" + s
        if op.negated:
            s = "-" + s
        return s
    if isinstance(op, UReg):
        s = f"UR{op.index}"
        if op.absolute:
            s = f"|{s}|"
        if op.bitnot:
            s = "~" + s
        if op.negated:
            s = "-" + s
        return s
    if isinstance(op, MemRef):
        parts = []
        if op.base is not None:
            parts.append(_render_operand(op.base))
        if op.ureg is not None:
            parts.append(_render_operand(op.ureg))
        if op.offset or not parts:
            parts.append(hex(op.offset) if op.offset >= 0 else f"-{hex(-op.offset)}")
        return "[" + "+".join(parts) + "]"
    return str(op)


# ---------------------------------------------------------------------------
# normalization: 3-address form, carry-out restructuring, .X4 expansion
# ---------------------------------------------------------------------------

def normalize_instruction(fn: LiftedFunction, inst: Instruction) -> list[Instruction]:
    out = [inst]

    # Discarded writes: PT in aux defs, RZ in defs carry no value.
    inst.aux_defs = [a for a in inst.aux_defs
                     if not (isinstance(a, Pred) and a.is_pt())]

    # .X4 address-scale modifier becomes an explicit shift feeding the
    # memory operand.
    if inst.opcode.has_mod("X4") and opcode_category(inst.opcode.base) in ("load", "store"):
        mem = next((u for u in inst.uses if isinstance(u, MemRef)), None)
        if mem is not None and isinstance(mem.base, Reg):
            tmp = _new_temp_reg(fn)
            shl = fn.make_inst(
                Opcode("SHL"), [Reg(tmp)], [mem.base, Imm(2, "0x2")],
                guard=inst.guard, raw=inst.raw,
            )
            shl.meta["synthetic"] = "x4-scale"
            mem.base = Reg(tmp, mem.base.width)
            inst.opcode = inst.opcode.without_mod("X4")
            out = [shl, inst]

    for extra in inst.opcode.modifiers:
        if extra not in _KNOWN_MODIFIERS and not _SHAPE_RE.match(extra):
            inst.meta.setdefault("unknown_mods", []).append(extra)
    return out


_SHAPE_RE = re.compile(r"^\d+(x\d+)*$|^0x[0-9a-fA-F]+$|^\d+$")
_KNOWN_MODIFIERS = {
    "E", "X", "EX", "WIDE", "64", "128", "32", "U32", "S32", "U64", "S64",
    "U16", "S16", "F16", "F32", "F64", "BF16", "TF32", "SAT", "FTZ", "RZ",
    "RN", "RM", "RP", "TRUNC", "CEIL", "FLOOR", "HI", "LO", "L", "R", "LUT",
    "AND", "OR", "XOR", "EQ", "NE", "LT", "LE", "GT", "GE", "GEU", "LTU",
    "MIN", "MAX", "RCP", "RSQ", "SQRT", "SIN", "COS", "EX2", "LG2",
    "SYNC", "ABS", "NOINC", "NODEC", "MRG", "PSL", "CBCC", "H0", "H1",
    "IDX", "UP", "DOWN", "BFLY", "ADD", "MMIO", "SYS", "GPU", "CTA", "STRONG",
    "CONSTANT", "PRIVATE", "ANY", "ALL", "BALLOT", "VIEW", "ASYNC", "S",
    "X4", "REQ", "DEFER_BLOCKING", "CI", "NAN", "RED", "POPC", "F2I", "I2F",
}


def _new_temp_reg(fn: LiftedFunction) -> int:
    # Synthetic registers live above the architectural range (R1000+).
    n = fn.meta.get("next_temp_reg", 1000)
    fn.meta["next_temp_reg"] = n + 1
    return n


# ---------------------------------------------------------------------------
# implicit register expansion
# ---------------------------------------------------------------------------

class ExpansionError(ValueError):
    """Wide opcode with no entry in the implicit register table."""


def _mem_size_regs(opcode: Opcode) -> int:
    if opcode.has_mod("128"):
        return 4
    if opcode.has_mod("64"):
        return 2
    return 1


def expand_implicit_registers(inst: Instruction, arch: str) -> Instruction:
    """Rewrite operands to full register groups per the opcode table."""
    base = inst.opcode.base
    cat = opcode_category(base)

    if cat == "tensor":
        shape = next((m for m in inst.opcode.modifiers
                      if re.fullmatch(r"\d+(x\d+x\d+)?", m)), None)
        key = (base, shape) if shape else None
        if key not in TENSOR_SHAPES:
            raise ExpansionError(
                f"tensor opcode {inst.opcode} has no implicit-register entry"
            )
        d, a, b, c = TENSOR_SHAPES[key]
        groups = [d, a, b, c]
        named = inst.defs + inst.uses
        if len(named) != 4:
            raise ExpansionError(f"{inst.opcode}: expected 4 named operands")
        for op, width in zip(named, groups):
            if isinstance(op, Reg):
                op.width = width
        inst.meta["tensor_groups"] = {"d": d, "a": a, "b": b, "c": c}
        return inst

    if cat in ("load", "store"):
        size = _mem_size_regs(inst.opcode)
        payload = inst.defs if cat == "load" else \
            [u for u in inst.uses if isinstance(u, (Reg, UReg))]
        for op in payload:
            if isinstance(op, (Reg, UReg)):
                op.width = size
        for u in inst.uses:
            if isinstance(u, ConstMem):
                u.width = size
        addr_width = 2 if base in GLOBAL_SPACE else 1
        for u in inst.uses:
            if isinstance(u, MemRef) and isinstance(u.base, Reg):
                if u.base.width == 1:
                    u.base.width = addr_width
        return inst

    if cat == "atomic":
        for u in inst.uses:
            if isinstance(u, MemRef) and isinstance(u.base, Reg):
                u.base.width = 2
        return inst

    if base == "IMAD" and inst.opcode.has_mod("WIDE"):
        for d in inst.defs:
            if isinstance(d, Reg):
                d.width = 2
        if inst.uses and isinstance(inst.uses[-1], (Reg, ConstMem)):
            inst.uses[-1].width = 2
        return inst

    if cat in ("dalu", "dcmp"):
        for op in inst.defs + inst.uses:
            if isinstance(op, Reg):
                op.width = 2
        return inst

    if cat == "convert":
        _expand_convert(inst)
        return inst

    return inst


def _expand_convert(inst: Instruction):
    mods = set(inst.opcode.modifiers)
    wide_f = "F64" in mods
    wide_i = bool({"S64", "U64"} & mods)
    base = inst.opcode.base
    if base == "I2F" and wide_f or base == "F2F" and wide_f:
        for d in inst.defs:
            if isinstance(d, Reg):
                d.width = 2
    if base == "F2I" and wide_i:
        for d in inst.defs:
            if isinstance(d, Reg):
                d.width = 2
    if base == "F2I" and wide_f or base == "F2F" and wide_f:
        for u in inst.uses:
            if isinstance(u, Reg):
                u.width = 2
    if base == "I2F" and wide_i:
        for u in inst.uses:
            if isinstance(u, Reg):
                u.width = 2


def access_count(inst: Instruction) -> int:
    """Total registers touched across defs and uses (expansion postcondition)."""
    total = 0
    for op in inst.all_defs() + inst.uses:
        if isinstance(op, (Reg, UReg)):
            total += op.width
        elif isinstance(op, MemRef):
            if isinstance(op.base, Reg):
                total += op.base.width
            if isinstance(op.ureg, UReg):
                total += op.ureg.width
    return total


# ---------------------------------------------------------------------------
# special-register substitution
# ---------------------------------------------------------------------------

def substitute_special_registers(fn: LiftedFunction) -> LiftedFunction:
    """Rewrite constant-bank aliases of SR_* into explicit S2R reads."""
    fn.require_phase(Phase.RAW)
    sr_map = archmod.SR_CONST_OFFSETS.get(fn.arch, {})
    if not sr_map:
        return fn

    temp_for: dict[int, int] = {}
    out: list[Instruction] = []
    for inst in fn.raw_instructions:
        for slot, op in _constmem_slots(inst):
            if op.bank != 0 or op.offset not in sr_map:
                continue
            if op.offset not in temp_for:
                tmp = _new_temp_reg(fn)
                temp_for[op.offset] = tmp
                s2r = fn.make_inst(
                    Opcode("S2R"), [Reg(tmp)], [SReg(sr_map[op.offset])],
                    raw=inst.raw,
                )
                s2r.meta["synthetic"] = "sr-substitute"
                out.append(s2r)
            slot(Reg(temp_for[op.offset], negated=op.negated,
                     absolute=op.absolute, half=op.half))
        out.append(inst)
    fn.raw_instructions = out
    return fn


def _constmem_slots(inst: Instruction):
    """Yield (setter, ConstMem) for each constant-memory use."""
    for i, u in enumerate(inst.uses):
        if isinstance(u, ConstMem):
            yield (lambda v, i=i: inst.uses.__setitem__(i, v)), u


# ---------------------------------------------------------------------------
# raw function assembly
# ---------------------------------------------------------------------------

def build_function(src: ParsedFunction, arch: str,
                   manifest: Manifest | None = None) -> LiftedFunction:
    """Parse + normalize + expand one function body into a raw LiftedFunction."""
    fn = LiftedFunction(src.name, arch, src.param_base)
    fn.meta["entry_address"] = src.entry_address or (
        src.lines[0].address if src.lines else 0
    )
    fn.meta["control_addresses"] = list(src.control_addresses)
    if manifest is not None:
        fn.meta["call_targets"] = dict(manifest.call_targets)

    for line in src.lines:
        inst = parse_instruction_line(fn, line)
        for norm in normalize_instruction(fn, inst):
            expand_implicit_registers(norm, arch)
            fn.raw_instructions.append(norm)
    substitute_special_registers(fn)
    return fn
