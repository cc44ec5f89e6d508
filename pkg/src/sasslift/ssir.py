"""Architecture-neutral in-memory IR shared by all lifting phases.

A ``LiftedFunction`` starts as a flat instruction list (phase RAW),
gains basic blocks (CFG_BUILT), SSA values (SSA), rewritten idioms
(NORMALIZED) and finally per-value types (TYPED).  Each pass asserts
the phase it needs and advances it; ``verify`` re-checks the invariants
appropriate to the current phase.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .operands import (
    ConstMem, Imm, MemRef, Opcode, Operand, Pred, Reg, SReg, SourceLine,
    UReg, ValueRef, ZeroReg,
)


class Phase(enum.IntEnum):
    RAW = 0
    CFG_BUILT = 1
    SSA = 2
    NORMALIZED = 3
    TYPED = 4


class Provenance(enum.Enum):
    UNSET = "unset"
    SEEDED = "seeded"
    PROPAGATED = "propagated"
    CONFLICTED = "conflicted"
    FALLBACK = "fallback"


# Opcodes whose presence marks a warp-reconvergence point; psi-function
# construction never folds predicated writes across one of these.
CONVERGENCE_OPS = {"BSSY", "BSYNC", "SSY", "SYNC", "WARPSYNC"}


@dataclass
class Instruction:
    iid: int
    opcode: Opcode
    guard: Pred | ValueRef | None
    defs: list[Operand]
    uses: list[Operand]
    aux_defs: list[Operand] = field(default_factory=list)
    raw: SourceLine | None = None
    meta: dict = field(default_factory=dict)

    @property
    def address(self) -> int | None:
        return self.raw.address if self.raw else self.meta.get("address")

    def all_defs(self) -> list[Operand]:
        return self.defs + self.aux_defs

    def is_convergence(self) -> bool:
        return self.opcode.base in CONVERGENCE_OPS

    def render(self) -> str:
        parts = []
        if self.guard is not None:
            parts.append(f"@{self.guard}")
        parts.append(str(self.opcode))
        ops = []
        for d in self.defs:
            ops.append(str(d))
        for a in self.aux_defs:
            ops.append(str(a))
        for u in self.uses:
            ops.append(str(u))
        if self.opcode.base == "PHI":
            blocks = self.meta.get("phi_blocks", [])
            ops = [str(d) for d in self.defs] + [
                f"[{u}, {b}]" for u, b in zip(self.uses, blocks)
            ]
        head = " ".join(parts)
        return f"{head} {', '.join(ops)}" if ops else head

    def __str__(self):
        return self.render()


# SASS alias used by the frontend: a parsed, normalized instruction.
SassInstruction = Instruction


# ---------------------------------------------------------------------------
# terminators
# ---------------------------------------------------------------------------

@dataclass
class Br:
    target: int  # block id

    def successors(self):
        return [self.target]

    def render(self, fn=None):
        return f"br {_bb(self.target)}"


@dataclass
class CondBr:
    cond: Operand
    taken: int
    fallthrough: int
    guard: Operand | None = None  # dual-predicate branch: execution guard

    def successors(self):
        return [self.taken, self.fallthrough]

    def render(self, fn=None):
        g = f" guard={self.guard}" if self.guard is not None else ""
        return f"condbr{g} {self.cond} ? {_bb(self.taken)} : {_bb(self.fallthrough)}"


@dataclass
class Ret:
    def successors(self):
        return []

    def render(self, fn=None):
        return "ret"


@dataclass
class Exit:
    def successors(self):
        return []

    def render(self, fn=None):
        return "exit"


@dataclass
class CondExit:
    cond: Operand
    fallthrough: int

    def successors(self):
        return [self.fallthrough]

    def render(self, fn=None):
        return f"condexit {self.cond} else {_bb(self.fallthrough)}"


@dataclass
class CallRet:
    """CALL terminator kept until device-function recovery rewrites it."""

    target_address: int
    return_address: int
    return_block: int | None = None
    site_address: int | None = None

    def successors(self):
        return [self.return_block] if self.return_block is not None else []

    def render(self, fn=None):
        return f"callret {self.target_address:#x} ret->{self.return_address:#x}"


Terminator = Br | CondBr | Ret | Exit | CondExit | CallRet


def _bb(bid: int) -> str:
    return f"bb{bid}"


@dataclass
class BasicBlock:
    bid: int
    start_address: int
    instructions: list[Instruction] = field(default_factory=list)
    terminator: Terminator | None = None
    preds: list[int] = field(default_factory=list)
    succs: list[int] = field(default_factory=list)
    convergence_meta: str | None = None

    def label(self) -> str:
        return _bb(self.bid)


@dataclass
class ValueInfo:
    vid: int
    origin: str
    def_iid: int | None
    type_state: object = None          # TypeSet, owned by type recovery
    provenance: Provenance = Provenance.UNSET
    is_undef: bool = False
    reach: int | None = None
    final_type: str | None = None

    def name(self) -> str:
        return f"%v{self.vid}"


@dataclass
class LiftedFunction:
    name: str
    arch: str
    param_base: int
    phase: Phase = Phase.RAW
    raw_instructions: list[Instruction] = field(default_factory=list)
    entry: int | None = None
    blocks: dict[int, BasicBlock] = field(default_factory=dict)
    values: dict[int, ValueInfo] = field(default_factory=dict)
    diagnostics: list[str] = field(default_factory=list)
    meta: dict = field(default_factory=dict)
    _next_iid: int = 0
    _next_vid: int = 0
    _next_bid: int = 0

    # -- id allocation ------------------------------------------------
    def new_iid(self) -> int:
        self._next_iid += 1
        return self._next_iid - 1

    def new_block(self, start_address: int) -> BasicBlock:
        b = BasicBlock(self._next_bid, start_address)
        self._next_bid += 1
        self.blocks[b.bid] = b
        return b

    def new_value(self, origin: str, def_iid: int | None,
                  is_undef: bool = False) -> ValueInfo:
        v = ValueInfo(self._next_vid, origin, def_iid, is_undef=is_undef)
        self._next_vid += 1
        self.values[v.vid] = v
        return v

    def make_inst(self, opcode: Opcode, defs, uses, guard=None, aux=None,
                  raw=None, **meta) -> Instruction:
        inst = Instruction(self.new_iid(), opcode, guard, list(defs), list(uses),
                           list(aux or []), raw, dict(meta))
        return inst

    # -- navigation ---------------------------------------------------
    def block_order(self) -> list[BasicBlock]:
        return [self.blocks[b] for b in sorted(self.blocks)]

    def all_instructions(self):
        if self.phase == Phase.RAW:
            yield from self.raw_instructions
            return
        for blk in self.block_order():
            yield from blk.instructions

    def require_phase(self, *phases: Phase):
        if self.phase not in phases:
            names = "/".join(p.name for p in phases)
            raise RuntimeError(
                f"{self.name}: pass requires phase {names}, function is {self.phase.name}"
            )

    def advance_phase(self, new_phase: Phase):
        if new_phase < self.phase:
            raise RuntimeError(
                f"{self.name}: phase may not regress {self.phase.name} -> {new_phase.name}"
            )
        self.phase = new_phase

    def diagnose(self, msg: str):
        self.diagnostics.append(msg)


# ---------------------------------------------------------------------------
# verification
# ---------------------------------------------------------------------------

def verify(fn: LiftedFunction) -> list[str]:
    """Phase-aware invariant check; violations are returned, never raised."""
    out: list[str] = []
    if fn.phase == Phase.RAW:
        prev = None
        for inst in fn.raw_instructions:
            if inst.raw is not None:
                if prev is not None and inst.raw.address < prev:
                    out.append(
                        f"raw address order violated at {inst.raw.address:#x}"
                    )
                prev = inst.raw.address
        return out

    if fn.entry is None or fn.entry not in fn.blocks:
        out.append("missing or dangling entry block")
        return out

    for blk in fn.block_order():
        if blk.terminator is None:
            out.append(f"{blk.label()}: no terminator")
            continue
        for s in blk.terminator.successors():
            if s not in fn.blocks:
                out.append(f"{blk.label()}: successor bb{s} does not exist")
            elif blk.bid not in fn.blocks[s].preds:
                out.append(f"{blk.label()}: edge to bb{s} not mirrored in preds")
        if sorted(blk.succs) != sorted(set(blk.terminator.successors())):
            out.append(f"{blk.label()}: succs list disagrees with terminator")
        for p in blk.preds:
            if p not in fn.blocks:
                out.append(f"{blk.label()}: pred bb{p} does not exist")
            elif blk.bid not in fn.blocks[p].succs:
                out.append(f"{blk.label()}: pred edge bb{p} not mirrored")

        # guard purity: all non-terminator instructions share one guard
        guards = {_guard_key(i.guard) for i in blk.instructions}
        if len(guards) > 1:
            out.append(f"{blk.label()}: mixed guard predicates inside block")

    if fn.phase >= Phase.SSA:
        defs: dict[int, int] = {}
        for blk in fn.block_order():
            for inst in blk.instructions:
                for d in inst.all_defs():
                    if isinstance(d, ValueRef):
                        if d.vid in defs:
                            out.append(
                                f"%v{d.vid}: defined twice (inst {defs[d.vid]} and {inst.iid})"
                            )
                        defs[d.vid] = inst.iid
        for vid, info in fn.values.items():
            if info.is_undef:
                continue
            if info.def_iid is not None and vid not in defs and _value_used(fn, vid):
                out.append(f"%v{vid}: recorded def missing from function body")
        for blk in fn.block_order():
            for inst in blk.instructions:
                for u in _value_uses_of(inst):
                    if u.vid not in fn.values:
                        out.append(f"inst {inst.iid}: use of unknown value %v{u.vid}")

    if fn.phase >= Phase.TYPED:
        for vid, info in fn.values.items():
            if info.provenance == Provenance.UNSET and not info.is_undef:
                if _value_used(fn, vid) or info.def_iid is not None:
                    out.append(f"%v{vid}: provenance unset in typed phase")
    return out


def _guard_key(g):
    if g is None:
        return None
    if isinstance(g, Pred):
        return ("p", g.index, g.negated)
    if isinstance(g, ValueRef):
        return ("v", g.vid, g.negated)
    return ("?", str(g))


def _value_uses_of(inst: Instruction):
    for u in inst.uses:
        if isinstance(u, ValueRef):
            yield u
        elif isinstance(u, MemRef):
            if isinstance(u.base, ValueRef):
                yield u.base
            if isinstance(u.ureg, ValueRef):
                yield u.ureg
    if isinstance(inst.guard, ValueRef):
        yield inst.guard


def _value_used(fn: LiftedFunction, vid: int) -> bool:
    for blk in fn.block_order():
        for inst in blk.instructions:
            for u in _value_uses_of(inst):
                if u.vid == vid:
                    return True
    return False


def terminator_value_uses(term: Terminator):
    if isinstance(term, (CondBr, CondExit)) and isinstance(term.cond, ValueRef):
        yield term.cond
    if isinstance(term, CondBr) and isinstance(term.guard, ValueRef):
        yield term.guard


# ---------------------------------------------------------------------------
# dump
# ---------------------------------------------------------------------------

def dump(fn: LiftedFunction) -> str:
    """Deterministic, phase-aware textual rendering used by golden tests."""
    lines = [
        f"function @{fn.name} [arch={fn.arch} phase={fn.phase.name.lower()}"
        f" param_base={fn.param_base:#x}]"
    ]
    for tag in fn.meta.get("cuda_objects", []):
        lines.append(f"  ; cuda-object {tag}")
    if fn.phase == Phase.RAW:
        for inst in fn.raw_instructions:
            addr = inst.address
            prefix = f"  {addr:04x}: " if addr is not None else "  ----: "
            lines.append(prefix + inst.render())
        return "\n".join(lines) + "\n"

    for blk in fn.block_order():
        preds = ",".join(_bb(p) for p in sorted(blk.preds)) or "-"
        extra = f" conv={blk.convergence_meta}" if blk.convergence_meta else ""
        lines.append(f"{blk.label()} @{blk.start_address:04x}  preds={preds}{extra}")
        for inst in blk.instructions:
            lines.append("  " + inst.render())
        if blk.terminator is not None:
            lines.append("  " + blk.terminator.render(fn))
    if fn.phase >= Phase.TYPED:
        lines.append("types:")
        for vid in sorted(fn.values):
            info = fn.values[vid]
            if info.final_type is None:
                continue
            lines.append(
                f"  %v{vid}:{info.origin} {info.final_type} {info.provenance.value}"
            )
    return "\n".join(lines) + "\n"
