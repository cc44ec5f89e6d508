"""Operand and opcode model for parsed SASS instructions.

Operands keep every syntactic detail of the disassembly (negation,
absolute value, bitwise-not, half selectors, reuse hints) so a parsed
instruction can be printed back losslessly.  SSA renaming later replaces
register-like operands with ``ValueRef`` operands; immediates, constant
memory and special registers survive all phases unchanged.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace


class ParseError(ValueError):
    """Malformed disassembly input."""

    def __init__(self, message: str, line_no: int | None = None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


# ---------------------------------------------------------------------------
# source lines
# ---------------------------------------------------------------------------

@dataclass
class SourceLine:
    address: int
    text: str
    control_code: str | None = None
    line_no: int | None = None

    def __str__(self):
        return f"/*{self.address:04x}*/ {self.text}"


@dataclass(frozen=True)
class Opcode:
    base: str
    modifiers: tuple[str, ...] = ()

    def has_mod(self, *mods: str) -> bool:
        return all(m in self.modifiers for m in mods)

    def without_mod(self, *mods: str) -> "Opcode":
        return Opcode(self.base, tuple(m for m in self.modifiers if m not in mods))

    def __str__(self):
        return ".".join((self.base,) + self.modifiers)

    @staticmethod
    def parse(token: str) -> "Opcode":
        parts = token.split(".")
        return Opcode(parts[0], tuple(parts[1:]))


# ---------------------------------------------------------------------------
# operands
# ---------------------------------------------------------------------------

@dataclass
class Reg:
    """A general register group; ``width`` registers starting at ``base``."""

    base: int
    width: int = 1
    negated: bool = False
    absolute: bool = False
    bitnot: bool = False
    half: str | None = None      # "H0" | "H1"
    reuse: bool = False

    def regs(self) -> list[int]:
        return list(range(self.base, self.base + self.width))

    def name(self) -> str:
        if self.width == 1:
            return f"R{self.base}"
        return f"R{self.base + self.width - 1}:R{self.base}"

    def __str__(self):
        s = self.name()
        if self.half:
            s += f".{self.half}"
        if self.reuse:
            s += ".reuse"
        if self.absolute:
            s = f"|{s}|"
        if self.bitnot:
            s = "~" + s
        if self.negated:
            s = "-" + s
        return s


@dataclass
class UReg:
    index: int
    width: int = 1
    negated: bool = False
    absolute: bool = False
    bitnot: bool = False

    def name(self) -> str:
        if self.width == 1:
            return f"UR{self.index}"
        return f"UR{self.index + self.width - 1}:UR{self.index}"

    def __str__(self):
        s = self.name()
        if self.absolute:
            s = f"|{s}|"
        if self.bitnot:
            s = "~" + s
        if self.negated:
            s = "-" + s
        return s


@dataclass
class Pred:
    """Predicate register P0..P7; index ``PT_INDEX`` is the constant-true PT."""

    index: int
    negated: bool = False

    def name(self) -> str:
        return "PT" if self.index == PT_INDEX else f"P{self.index}"

    def is_pt(self) -> bool:
        return self.index == PT_INDEX

    def __str__(self):
        return ("!" if self.negated else "") + self.name()


PT_INDEX = 7  # PT is encoded as predicate 7 in SASS


@dataclass
class ZeroReg:
    """RZ / URZ: reads as zero, writes are discarded."""

    uniform: bool = False
    negated: bool = False
    bitnot: bool = False

    def __str__(self):
        s = "URZ" if self.uniform else "RZ"
        if self.bitnot:
            s = "~" + s
        if self.negated:
            s = "-" + s
        return s


@dataclass
class Imm:
    """Immediate stored as a 64-bit pattern plus its source spelling."""

    bits: int
    text: str
    is_float: bool = False
    negated: bool = False

    def int_value(self, width: int = 32, signed: bool = True) -> int:
        v = self.bits & ((1 << width) - 1)
        if signed and v >= (1 << (width - 1)):
            v -= 1 << width
        return v

    def float_value(self) -> float:
        return struct.unpack("<f", struct.pack("<I", self.bits & 0xFFFFFFFF))[0]

    def __str__(self):
        return ("-" if self.negated else "") + self.text


@dataclass
class ConstMem:
    bank: int
    offset: int
    width: int = 1          # registers (4-byte units)
    half: str | None = None
    negated: bool = False
    absolute: bool = False

    def __str__(self):
        s = f"c[{self.bank:#x}][{self.offset:#x}]"
        if self.half:
            s += f".{self.half}"
        if self.absolute:
            s = f"|{s}|"
        if self.negated:
            s = "-" + s
        return s


@dataclass
class SReg:
    """Special register operand (SR_TID.X, SR_CTAID.Y, barrier resources...)."""

    name: str

    def __str__(self):
        return self.name


@dataclass
class MemRef:
    """Bracketed address operand: ``[base + ureg + offset]``."""

    base: "Reg | ValueRef | None" = None
    ureg: "UReg | ValueRef | None" = None
    offset: int = 0

    def __str__(self):
        parts = []
        if self.base is not None:
            parts.append(str(self.base))
        if self.ureg is not None:
            parts.append(str(self.ureg))
        if self.offset or not parts:
            parts.append(f"{self.offset:#x}" if self.offset >= 0 else f"-{-self.offset:#x}")
        return "[" + "+".join(parts) + "]"


@dataclass
class ValueRef:
    """Reference to an SSA value; replaces register operands after renaming."""

    vid: int
    negated: bool = False
    absolute: bool = False
    bitnot: bool = False
    half: str | None = None

    def __str__(self):
        s = f"%v{self.vid}"
        if self.half:
            s += f".{self.half}"
        if self.absolute:
            s = f"|{s}|"
        if self.bitnot:
            s = "~" + s
        if self.negated:
            s = "-" + s
        return s


Operand = Reg | UReg | Pred | ZeroReg | Imm | ConstMem | SReg | MemRef | ValueRef


def strip_flags(op: Operand) -> Operand:
    """Copy of ``op`` with negation/abs/not flags cleared (identity for bare kinds)."""
    if isinstance(op, (Reg, UReg, ValueRef)):
        return replace(op, negated=False, absolute=False, bitnot=False)
    if isinstance(op, ZeroReg):
        return replace(op, negated=False, bitnot=False)
    if isinstance(op, Pred):
        return replace(op, negated=False)
    if isinstance(op, (Imm, ConstMem)):
        return replace(op, negated=False)
    return op


def same_storage(a: Operand, b: Operand) -> bool:
    """True when two operands name the same register/predicate/immediate."""
    a, b = strip_flags(a), strip_flags(b)
    if type(a) is not type(b):
        return False
    if isinstance(a, Reg):
        return (a.base, a.width, a.half) == (b.base, b.width, b.half)
    if isinstance(a, UReg):
        return (a.index, a.width) == (b.index, b.width)
    if isinstance(a, Pred):
        return a.index == b.index
    if isinstance(a, ZeroReg):
        return a.uniform == b.uniform
    if isinstance(a, Imm):
        return a.bits == b.bits
    if isinstance(a, ConstMem):
        return (a.bank, a.offset, a.width, a.half) == (b.bank, b.offset, b.width, b.half)
    if isinstance(a, SReg):
        return a.name == b.name
    if isinstance(a, ValueRef):
        return (a.vid, a.half) == (b.vid, b.half)
    return False


def encode_float_imm(text: str) -> int:
    """IEEE-754 float32 bit pattern for a float literal, zero-extended to 64."""
    return struct.unpack("<I", struct.pack("<f", float(text)))[0]
