"""Multi-instruction idiom recognition and rewriting.

A pattern is an ordered list of instruction templates with symbolic
operand variables.  Matching scans each basic block for def-use-connected
(not necessarily contiguous) instruction groups whose opcodes fit the
templates, then unifies operands against the variables; any inconsistent
rebinding aborts the candidate.  Matched groups rewrite to aggregated
pseudo-instructions over packed 64-bit values (IADD364, ISETP64, LEA64,
MOV64, SHL64, ...) with PACK64/UNPACK64 at the boundaries.

Rewrites are refused when an intermediate value (carry predicate,
partial product) escapes the matched group, and overlapping matches are
resolved earliest-start-first, longest-pattern-second.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace

from .operands import (
    ConstMem, Imm, MemRef, Opcode, Operand, Pred, Reg, SReg, UReg, ValueRef,
    ZeroReg,
)
from .ssa import DefUse, build_defuse, value_operands
from .ssir import Instruction, LiftedFunction, Phase

CMP_CONDS = ("EQ", "NE", "LT", "LE", "GT", "GE")
BOOL_OPS = ("AND", "OR", "XOR")


# ---------------------------------------------------------------------------
# template slots
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Var:
    name: str
    negated: bool | None = None   # None = don't care, True/False = required
    bitnot: bool | None = None
    half: str | None = None       # required half selector ("H1") or None


@dataclass(frozen=True)
class LitRZ:
    pass


@dataclass(frozen=True)
class LitPT:
    negated: bool | None = None


@dataclass(frozen=True)
class LitImm:
    bits: int


@dataclass(frozen=True)
class Any:
    pass


Slot = Var | LitRZ | LitPT | LitImm | Any


@dataclass(frozen=True)
class InstTemplate:
    base: str
    mods_all: tuple[str, ...] = ()
    mods_none: tuple[str, ...] = ()
    mod_vars: tuple[tuple[str, tuple[str, ...]], ...] = ()  # (var, choices)
    defs: tuple[Slot, ...] = ()
    aux: tuple[Slot, ...] = ()
    uses: tuple[Slot, ...] = ()


@dataclass
class Pattern:
    name: str
    templates: tuple[InstTemplate, ...]
    rewrite: "callable"
    description: str = ""

    def __len__(self):
        return len(self.templates)


@dataclass
class Bindings:
    vars: dict[str, object] = field(default_factory=dict)

    def bind(self, name: str, key) -> bool:
        if name in self.vars and self.vars[name] != key:
            return False
        self.vars[name] = key
        return True


@dataclass
class Match:
    pattern: Pattern
    insts: list[Instruction]
    bindings: Bindings
    block: int
    start_pos: int


def operand_key(op: Operand):
    """Identity of an operand for unification (flags and halves stripped)."""
    if isinstance(op, ValueRef):
        return ("v", op.vid)
    if isinstance(op, Imm):
        return ("imm", op.bits)
    if isinstance(op, ZeroReg):
        return ("rz",)
    if isinstance(op, Pred):
        return ("pt",) if op.is_pt() else ("p", op.index)
    if isinstance(op, ConstMem):
        return ("cm", op.bank, op.offset)
    if isinstance(op, Reg):
        return ("r", op.base, op.width)
    if isinstance(op, UReg):
        return ("ur", op.index, op.width)
    if isinstance(op, SReg):
        return ("sr", op.name)
    return ("other", str(op))


def _match_slot(slot: Slot, op: Operand, b: Bindings) -> bool:
    if isinstance(slot, Any):
        return True
    if isinstance(slot, LitRZ):
        return isinstance(op, ZeroReg)
    if isinstance(slot, LitPT):
        if not (isinstance(op, Pred) and op.is_pt()):
            return False
        return slot.negated is None or op.negated == slot.negated
    if isinstance(slot, LitImm):
        return isinstance(op, Imm) and op.bits == slot.bits
    if isinstance(slot, Var):
        neg = getattr(op, "negated", False)
        ntt = getattr(op, "bitnot", False)
        half = getattr(op, "half", None)
        if slot.negated is not None and neg != slot.negated:
            return False
        if slot.bitnot is not None and ntt != slot.bitnot:
            return False
        if slot.half is not None and half != slot.half:
            return False
        return b.bind(slot.name, operand_key(op))
    raise AssertionError(slot)


def _match_opcode(tmpl: InstTemplate, inst: Instruction, b: Bindings) -> bool:
    opc = inst.opcode
    if opc.base != tmpl.base:
        return False
    if not all(m in opc.modifiers for m in tmpl.mods_all):
        return False
    if any(m in opc.modifiers for m in tmpl.mods_none):
        return False
    for var, choices in tmpl.mod_vars:
        got = next((m for m in opc.modifiers if m in choices), None)
        if got is None or not b.bind("mod:" + var, got):
            return False
    return True


def _unify(tmpl: InstTemplate, inst: Instruction, b: Bindings) -> bool:
    for slots, ops in ((tmpl.defs, inst.defs), (tmpl.aux, inst.aux_defs),
                       (tmpl.uses, inst.uses)):
        if len(slots) != len(ops):
            return False
        for slot, op in zip(slots, ops):
            if not _match_slot(slot, op, b):
                return False
    return True


def match_patterns(fn: LiftedFunction, block, patterns,
                   defuse: DefUse | None = None) -> list[Match]:
    """Find all pattern matches inside one block (no overlap filtering)."""
    matches: list[Match] = []
    insts = block.instructions
    pos = {inst.iid: i for i, inst in enumerate(insts)}
    for pattern in patterns:
        slots_positions = []
        for tmpl in pattern.templates:
            cands = [i for i in insts if i.opcode.base == tmpl.base]
            slots_positions.append(cands)
        if any(not c for c in slots_positions):
            continue
        budget = 50_000
        for candidate in itertools.product(*slots_positions):
            budget -= 1
            if budget < 0:
                break
            if len({c.iid for c in candidate}) != len(candidate):
                continue
            if not all(pos[a.iid] < pos[b_.iid]
                       for a, b_ in zip(candidate, candidate[1:])):
                continue
            b = Bindings()
            ok = True
            for inst, tmpl in zip(candidate, pattern.templates):
                if not _match_opcode(tmpl, inst, b):
                    ok = False
                    break
                if not _unify(tmpl, inst, b):
                    ok = False
                    break
            if ok and _connected(candidate):
                matches.append(Match(pattern, list(candidate), b, block.bid,
                                     pos[candidate[0].iid]))
    return matches


def _connected(insts) -> bool:
    """Def-use connectivity inside the group via shared SSA values."""
    if len(insts) == 1:
        return True
    vals = []
    for inst in insts:
        s = {d.vid for d in inst.all_defs() if isinstance(d, ValueRef)}
        s |= {ref.vid for ref, _ in value_operands(inst)}
        vals.append(s)
    linked = {0}
    changed = True
    while changed:
        changed = False
        for i in range(len(insts)):
            if i in linked:
                continue
            if any(vals[i] & vals[j] for j in linked):
                linked.add(i)
                changed = True
    return len(linked) == len(insts)


def select_matches(matches: list[Match]) -> list[Match]:
    """Overlap tie-break: earliest start wins; longer pattern on ties."""
    order = sorted(matches, key=lambda m: (m.start_pos, -len(m.pattern)))
    taken: set[int] = set()
    out = []
    for m in order:
        ids = {i.iid for i in m.insts}
        if ids & taken:
            continue
        taken |= ids
        out.append(m)
    return out


# ---------------------------------------------------------------------------
# rewrite helpers
# ---------------------------------------------------------------------------

def _escapes(fn: LiftedFunction, du: DefUse, vid: int, group_iids: set[int]) -> bool:
    for site in du.users(vid):
        if site.inst is None or site.inst.iid not in group_iids:
            return True
    return False


def _safe(fn, du, match: Match, redefine) -> bool:
    """No value defined by the group may escape unless the plan redefines it."""
    group = {i.iid for i in match.insts}
    redefined = {r.vid for r in redefine if isinstance(r, ValueRef)}
    for inst in match.insts:
        for d in inst.all_defs():
            if isinstance(d, ValueRef) and d.vid not in redefined and \
                    _escapes(fn, du, d.vid, group):
                return False
    return True


def _pack_pair(fn, new_insts, lo: Operand, hi: Operand) -> Operand:
    """Build the 64-bit operand for a (lo, hi) slot pair, folding constants."""
    lo_zero = isinstance(lo, ZeroReg)
    hi_zero = isinstance(hi, ZeroReg)
    if lo_zero and hi_zero:
        return None
    if isinstance(lo, Imm) and hi_zero:
        return Imm(lo.bits & 0xFFFFFFFF, lo.text)
    if isinstance(lo, Imm) and isinstance(hi, Imm):
        bits = (lo.bits & 0xFFFFFFFF) | ((hi.bits & 0xFFFFFFFF) << 32)
        return Imm(bits, hex(bits))
    if lo_zero and isinstance(hi, Imm):
        bits = (hi.bits & 0xFFFFFFFF) << 32
        return Imm(bits, hex(bits))
    v = fn.new_value("pair", None)
    lo_op = Imm(0, "0x0") if lo_zero else replace(lo, negated=False, bitnot=False) \
        if isinstance(lo, ValueRef) else lo
    hi_op = Imm(0, "0x0") if hi_zero else replace(hi, negated=False, bitnot=False) \
        if isinstance(hi, ValueRef) else hi
    pk = fn.make_inst(Opcode("PACK64"), [ValueRef(v.vid)], [lo_op, hi_op])
    v.def_iid = pk.iid
    new_insts.append(pk)
    return ValueRef(v.vid)


def _unpack_into(fn, new_insts, src_vid: int, lo_ref: ValueRef, hi_ref: ValueRef):
    """Redefine existing half values as UNPACK64 of an aggregated result."""
    for sel, ref in (("LO", lo_ref), ("HI", hi_ref)):
        if not isinstance(ref, ValueRef):
            continue
        up = fn.make_inst(Opcode("UNPACK64", (sel,)), [ValueRef(ref.vid)],
                          [ValueRef(src_vid)])
        fn.values[ref.vid].def_iid = up.iid
        new_insts.append(up)


def _drop_values(fn, refs):
    for r in refs:
        if isinstance(r, ValueRef) and r.vid in fn.values:
            del fn.values[r.vid]


# ---------------------------------------------------------------------------
# rewrites
# ---------------------------------------------------------------------------

def _rw_iadd364(fn, du, match: Match):
    lo, hi = match.insts
    carry = lo.aux_defs[0]
    if not _safe(fn, du, match, [lo.defs[0], hi.defs[0]]):
        return None  # carry or other def consumed elsewhere: aggregation unsound
    lo_srcs = list(lo.uses)
    hi_srcs = list(hi.uses)[:3]  # trailing operands are carry-ins
    new: list[Instruction] = []
    operands = []
    for lo_op, hi_op in zip(lo_srcs, hi_srcs):
        neg_lo = getattr(lo_op, "negated", False)
        not_hi = getattr(hi_op, "bitnot", False)
        plain = not neg_lo and not not_hi and \
            not getattr(lo_op, "bitnot", False) and \
            not getattr(hi_op, "negated", False)
        if plain:
            p = _pack_pair(fn, new, lo_op, hi_op)
            if p is not None:
                operands.append(p)
        elif neg_lo and not_hi:
            p = _pack_pair(fn, new, _strip(lo_op), _strip(hi_op))
            if p is None:
                return None
            if isinstance(p, Imm):
                operands.append(Imm((-p.int_value(64)) & ((1 << 64) - 1),
                                    p.text))
            else:
                operands.append(replace(p, negated=True))
        else:
            return None  # mixed negation the pseudo-op cannot express
    if not operands:
        return None
    res = fn.new_value("pair", None)
    agg = fn.make_inst(Opcode("IADD364"), [ValueRef(res.vid)], operands)
    res.def_iid = agg.iid
    new.append(agg)
    _unpack_into(fn, new, res.vid, lo.defs[0], hi.defs[0])
    _drop_values(fn, [carry])
    return {"insert": new, "remove": {lo.iid, hi.iid}}


def _strip(op):
    if isinstance(op, ValueRef):
        return replace(op, negated=False, bitnot=False)
    return op


def _rw_isetp64(fn, du, match: Match):
    lo, hi = match.insts
    if not _safe(fn, du, match, [hi.defs[0]]):
        return None
    cond = match.bindings.vars["mod:cond"]
    bop = match.bindings.vars["mod:bop"]
    unsigned_hi = "U32" in hi.opcode.modifiers
    new: list[Instruction] = []
    a64 = _pack_pair(fn, new, lo.uses[0], hi.uses[0])
    b64 = _pack_pair(fn, new, lo.uses[1], hi.uses[1])
    a64 = a64 if a64 is not None else Imm(0, "0x0")
    b64 = b64 if b64 is not None else Imm(0, "0x0")
    mods = [cond] + (["U64"] if unsigned_hi else []) + [bop]
    res = hi.defs[0]
    agg = fn.make_inst(Opcode("ISETP64", tuple(mods)), [ValueRef(res.vid)],
                       [a64, b64, hi.uses[2]])
    fn.values[res.vid].def_iid = agg.iid
    new.append(agg)
    _drop_values(fn, [lo.defs[0]])
    return {"insert": new, "remove": {lo.iid, hi.iid}}


def _rw_lea64(fn, du, match: Match):
    lo, hi = match.insts
    carry = lo.aux_defs[0]
    if not _safe(fn, du, match, [lo.defs[0], hi.defs[0]]):
        return None
    a, b_lo, sh = lo.uses
    _a_hi, b_hi, c_hi, _sh2, _cp = hi.uses
    new: list[Instruction] = []
    a64 = _pack_pair(fn, new, a, c_hi)
    b64 = _pack_pair(fn, new, b_lo, b_hi)
    if a64 is None or b64 is None:
        return None
    res = fn.new_value("pair", None)
    agg = fn.make_inst(Opcode("LEA64"), [ValueRef(res.vid)], [b64, a64, sh])
    res.def_iid = agg.iid
    new.append(agg)
    _unpack_into(fn, new, res.vid, lo.defs[0], hi.defs[0])
    _drop_values(fn, [carry])
    return {"insert": new, "remove": {lo.iid, hi.iid}}


def _rw_imad_wide(fn, du, match: Match):
    (inst,) = match.insts
    mods = tuple(m for m in inst.opcode.modifiers if m != "WIDE")
    inst.opcode = Opcode("IMAD64", mods)
    return {"insert": [], "remove": set()}  # in-place retag


def _rw_mov64(fn, du, match: Match):
    mov_lo, mov_hi, pack = match.insts
    clo: ConstMem = mov_lo.uses[0]
    chi: ConstMem = mov_hi.uses[0]
    if not (isinstance(clo, ConstMem) and isinstance(chi, ConstMem)):
        return None
    if clo.bank != chi.bank or chi.offset != clo.offset + 4:
        return None
    res = pack.defs[0]
    agg = fn.make_inst(Opcode("MOV64"), [ValueRef(res.vid)],
                       [ConstMem(clo.bank, clo.offset, 2)])
    fn.values[res.vid].def_iid = agg.iid
    group = {mov_lo.iid, mov_hi.iid, pack.iid}
    remove = {pack.iid}
    for mv in (mov_lo, mov_hi):
        if not _escapes(fn, du, mv.defs[0].vid, group):
            _drop_values(fn, [mv.defs[0]])
            remove.add(mv.iid)
    return {"insert": [agg], "remove": remove}


def _rw_cast64(fn, du, match: Match):
    shf, pack = match.insts
    res = pack.defs[0]
    agg = fn.make_inst(Opcode("CAST64"), [ValueRef(res.vid)],
                       [_strip(pack.uses[0])])
    fn.values[res.vid].def_iid = agg.iid
    group = {shf.iid, pack.iid}
    remove = {pack.iid}
    if not _escapes(fn, du, shf.defs[0].vid, group):
        _drop_values(fn, [shf.defs[0]])
        remove.add(shf.iid)
    return {"insert": [agg], "remove": remove}


def _rw_shl64(fn, du, match: Match):
    hi_shf, lo_shf, pack = match.insts
    new: list[Instruction] = []
    src = _pack_pair(fn, new, hi_shf.uses[0], hi_shf.uses[2])
    if src is None:
        return None
    res = pack.defs[0]
    agg = fn.make_inst(Opcode("SHL64"), [ValueRef(res.vid)],
                       [src, hi_shf.uses[1]])
    fn.values[res.vid].def_iid = agg.iid
    new.append(agg)
    group = {hi_shf.iid, lo_shf.iid, pack.iid}
    remove = {pack.iid}
    for inst in (hi_shf, lo_shf):
        if not _escapes(fn, du, inst.defs[0].vid, group):
            _drop_values(fn, [inst.defs[0]])
            remove.add(inst.iid)
    return {"insert": new, "remove": remove}


def _rw_shr64(fn, du, match: Match):
    hi_shf, lo_shf, pack = match.insts
    signed = "S32" in hi_shf.opcode.modifiers
    new: list[Instruction] = []
    src = _pack_pair(fn, new, lo_shf.uses[0], hi_shf.uses[2])
    if src is None:
        return None
    res = pack.defs[0]
    mods = ("S64",) if signed else ("U64",)
    agg = fn.make_inst(Opcode("SHR64", mods), [ValueRef(res.vid)],
                       [src, hi_shf.uses[1]])
    fn.values[res.vid].def_iid = agg.iid
    new.append(agg)
    group = {hi_shf.iid, lo_shf.iid, pack.iid}
    remove = {pack.iid}
    for inst in (hi_shf, lo_shf):
        if not _escapes(fn, du, inst.defs[0].vid, group):
            _drop_values(fn, [inst.defs[0]])
            remove.add(inst.iid)
    return {"insert": new, "remove": remove}


def _rw_xmad(fn, du, match: Match):
    mrg, mid, psl = match.insts
    b = match.bindings
    if not _safe(fn, du, match, [psl.defs[0]]):
        return None
    a_op = _var_operand(fn, b, "a")
    b_op = _var_operand(fn, b, "b")
    c_op = _var_operand(fn, b, "c")
    d = psl.defs[0]
    agg = fn.make_inst(Opcode("IMAD"), [ValueRef(d.vid)], [a_op, b_op, c_op])
    fn.values[d.vid].def_iid = agg.iid
    for inst in (mrg, mid):
        _drop_values(fn, [dd for dd in inst.defs if isinstance(dd, ValueRef)])
    return {"insert": [agg], "remove": {mrg.iid, mid.iid, psl.iid}}


def _var_operand(fn, b: Bindings, name: str) -> Operand:
    key = b.vars[name]
    if key[0] == "v":
        return ValueRef(key[1])
    if key[0] == "imm":
        return Imm(key[1], hex(key[1]))
    if key[0] == "cm":
        return ConstMem(key[1], key[2])
    if key[0] == "rz":
        return ZeroReg()
    raise AssertionError(key)


# ---------------------------------------------------------------------------
# pattern table
# ---------------------------------------------------------------------------

AGGREGATION_PATTERNS: list[Pattern] = [
    Pattern(
        "iadd3.pair",
        (
            InstTemplate("IADD3", mods_none=("X",), defs=(Var("lo_d"),),
                         aux=(Var("carry"),), uses=(Any(), Any(), Any())),
            InstTemplate("IADD3", mods_all=("X",), defs=(Var("hi_d"),),
                         uses=(Any(), Any(), Any(), Var("carry"), Any())),
        ),
        _rw_iadd364,
        "carry-chain IADD3 + IADD3.X pair -> 64-bit IADD364",
    ),
    Pattern(
        "isetp.pair",
        (
            InstTemplate("ISETP", mods_all=("U32",), mods_none=("EX",),
                         mod_vars=(("cond", CMP_CONDS), ("bop", BOOL_OPS)),
                         defs=(Var("pl"),),
                         uses=(Any(), Any(), Var("acc"))),
            InstTemplate("ISETP", mods_all=("EX",),
                         mod_vars=(("cond", CMP_CONDS), ("bop", BOOL_OPS)),
                         defs=(Var("ph"),),
                         uses=(Any(), Any(), Var("acc"), Var("pl"))),
        ),
        _rw_isetp64,
        "64-bit compare across two predicate halves -> ISETP64",
    ),
    Pattern(
        "lea.pair",
        (
            InstTemplate("LEA", mods_none=("HI", "X"), defs=(Var("lo_d"),),
                         aux=(Var("carry"),),
                         uses=(Var("a"), Any(), Var("sh"))),
            InstTemplate("LEA", mods_all=("HI", "X"), defs=(Var("hi_d"),),
                         uses=(Var("a"), Any(), Any(), Var("sh"),
                               Var("carry"))),
        ),
        _rw_lea64,
        "64-bit effective address LEA + LEA.HI.X -> LEA64",
    ),
    Pattern(
        "imad.wide",
        (
            InstTemplate("IMAD", mods_all=("WIDE",), defs=(Var("d"),),
                         uses=(Any(), Any(), Any())),
        ),
        _rw_imad_wide,
        "widening 32x32->64 multiply -> IMAD64",
    ),
    Pattern(
        "mov.pair",
        (
            InstTemplate("MOV", defs=(Var("lo_d"),), uses=(Var("clo"),)),
            InstTemplate("MOV", defs=(Var("hi_d"),), uses=(Var("chi"),)),
            InstTemplate("PACK64", defs=(Var("p"),),
                         uses=(Var("lo_d"), Var("hi_d"))),
        ),
        _rw_mov64,
        "adjacent constant-bank moves feeding a pair -> MOV64",
    ),
    Pattern(
        "shf.cast64",
        (
            InstTemplate("SHF", mods_all=("R", "S32", "HI"),
                         defs=(Var("hi_d"),),
                         uses=(LitRZ(), LitImm(0x1F), Var("x"))),
            InstTemplate("PACK64", defs=(Var("p"),),
                         uses=(Var("x"), Var("hi_d"))),
        ),
        _rw_cast64,
        "SHF.R sign-word extraction feeding a pair -> CAST64 (sext)",
    ),
    Pattern(
        "shf.shl64",
        (
            InstTemplate("SHF", mods_all=("L", "U64", "HI"),
                         defs=(Var("hi_d"),),
                         uses=(Var("lo"), Var("sh"), Var("hi"))),
            InstTemplate("SHF", mods_all=("L", "U32"), defs=(Var("lo_d"),),
                         uses=(Var("lo"), Var("sh"), LitRZ())),
            InstTemplate("PACK64", defs=(Var("p"),),
                         uses=(Var("lo_d"), Var("hi_d"))),
        ),
        _rw_shl64,
        "two-part SHF left shift feeding a pair -> SHL64",
    ),
    Pattern(
        "shf.shr64",
        (
            InstTemplate("SHF", mods_all=("R", "HI"), mods_none=("L",),
                         defs=(Var("hi_d"),),
                         uses=(Var("lo"), Var("sh"), Var("hi"))),
            InstTemplate("SHF", mods_all=("R",), mods_none=("HI", "L"),
                         defs=(Var("lo_d"),),
                         uses=(Var("lo"), Var("sh"), Var("hi"))),
            InstTemplate("PACK64", defs=(Var("p"),),
                         uses=(Var("lo_d"), Var("hi_d"))),
        ),
        _rw_shr64,
        "two-part SHF right shift feeding a pair -> SHR64",
    ),
]

XMAD_PATTERNS: list[Pattern] = [
    Pattern(
        "xmad.mul3.a",
        (
            InstTemplate("XMAD", mods_all=("MRG",), defs=(Var("m"),),
                         uses=(Var("a"), Var("b", half="H1"), LitRZ())),
            InstTemplate("XMAD", mods_none=("MRG", "PSL"), defs=(Var("t"),),
                         uses=(Var("a"), Var("m"), LitRZ())),
            InstTemplate("XMAD", mods_all=("PSL", "CBCC"), defs=(Var("d"),),
                         uses=(Var("a", half="H1"), Var("t"), Var("c"))),
        ),
        _rw_xmad,
        "SM52 XMAD/XMAD.MRG/XMAD.PSL.CBCC multiply idiom -> IMAD",
    ),
    Pattern(
        "xmad.mul3.b",
        (
            InstTemplate("XMAD", mods_all=("MRG",), defs=(Var("m"),),
                         uses=(Var("a"), Var("b", half="H1"), LitRZ())),
            InstTemplate("XMAD", mods_none=("MRG", "PSL"), defs=(Var("t"),),
                         uses=(Var("a"), Var("b"), Var("c"))),
            InstTemplate("XMAD", mods_all=("PSL", "CBCC"), defs=(Var("d"),),
                         uses=(Var("a", half="H1"), Var("m", half="H1"),
                               Var("t"))),
        ),
        _rw_xmad,
        "SM52 XMAD address-computation idiom -> IMAD",
    ),
]

ALL_PATTERNS = XMAD_PATTERNS + AGGREGATION_PATTERNS


# ---------------------------------------------------------------------------
# pass drivers
# ---------------------------------------------------------------------------

def _apply_patterns(fn: LiftedFunction, patterns) -> int:
    """One round of match + rewrite over every block; returns rewrite count."""
    total = 0
    du = build_defuse(fn)
    for blk in fn.block_order():
        matches = select_matches(match_patterns(fn, blk, patterns, du))
        if not matches:
            continue
        inserts: dict[int, list[Instruction]] = {}
        removed: set[int] = set()
        for m in matches:
            plan = m.pattern.rewrite(fn, du, m)
            if plan is None:
                fn.diagnose(
                    f"bb{blk.bid}: pattern {m.pattern.name} matched but "
                    f"rewrite refused (escape or unsupported operands)"
                )
                continue
            anchor = m.insts[-1].iid
            inserts.setdefault(anchor, []).extend(plan["insert"])
            removed |= plan["remove"]
            total += 1
        if not inserts and not removed:
            continue
        out: list[Instruction] = []
        for inst in blk.instructions:
            if inst.iid in inserts:
                out.extend(inserts[inst.iid])
                if inst.iid not in removed:
                    out.append(inst)
            elif inst.iid in removed:
                continue
            else:
                out.append(inst)
        blk.instructions = out
        du = build_defuse(fn)
    return total


def simplify_packs(fn: LiftedFunction) -> int:
    """PACK64(UNPACK64.LO %v, UNPACK64.HI %v) -> %v, plus dead pseudo removal."""
    changed = 0
    du = build_defuse(fn)
    redirect: dict[int, int] = {}
    for blk in fn.block_order():
        for inst in blk.instructions:
            if inst.opcode.base != "PACK64" or len(inst.uses) != 2:
                continue
            lo, hi = inst.uses
            if not (isinstance(lo, ValueRef) and isinstance(hi, ValueRef)):
                continue
            if lo.negated or hi.negated or lo.bitnot or hi.bitnot:
                continue
            dlo = du.def_inst.get(lo.vid)
            dhi = du.def_inst.get(hi.vid)
            if dlo is None or dhi is None:
                continue
            if dlo.opcode.base == "UNPACK64" and dlo.opcode.has_mod("LO") and \
                    dhi.opcode.base == "UNPACK64" and dhi.opcode.has_mod("HI"):
                src_lo = dlo.uses[0]
                src_hi = dhi.uses[0]
                if isinstance(src_lo, ValueRef) and isinstance(src_hi, ValueRef) \
                        and src_lo.vid == src_hi.vid:
                    redirect[inst.defs[0].vid] = src_lo.vid
                    changed += 1
    if redirect:
        _redirect_values(fn, redirect)
        remove_dead_pseudo(fn)
    return changed


def _redirect_values(fn: LiftedFunction, redirect: dict[int, int]):
    def final(vid):
        while vid in redirect:
            vid = redirect[vid]
        return vid

    for blk in fn.block_order():
        for inst in blk.instructions:
            for i, u in enumerate(inst.uses):
                if isinstance(u, ValueRef) and u.vid in redirect:
                    inst.uses[i] = replace(u, vid=final(u.vid))
                elif isinstance(u, MemRef):
                    if isinstance(u.base, ValueRef) and u.base.vid in redirect:
                        u.base = replace(u.base, vid=final(u.base.vid))
                    if isinstance(u.ureg, ValueRef) and u.ureg.vid in redirect:
                        u.ureg = replace(u.ureg, vid=final(u.ureg.vid))
            if isinstance(inst.guard, ValueRef) and inst.guard.vid in redirect:
                inst.guard = replace(inst.guard, vid=final(inst.guard.vid))
        term = blk.terminator
        for attr in ("cond", "guard"):
            ref = getattr(term, attr, None)
            if isinstance(ref, ValueRef) and ref.vid in redirect:
                setattr(term, attr, replace(ref, vid=final(ref.vid)))


PURE_BASES = {"PACK64", "UNPACK64", "PACK128", "UNPACK128", "MOV", "MOV64",
              "CAST64", "SELECT", "PHI", "BITCAST"}


def remove_dead_pseudo(fn: LiftedFunction) -> int:
    """Drop pure pseudo/move instructions whose results are never used."""
    removedn = 0
    while True:
        du = build_defuse(fn)
        dead: set[int] = set()
        for blk in fn.block_order():
            for inst in blk.instructions:
                if inst.opcode.base not in PURE_BASES:
                    continue
                defs = [d for d in inst.all_defs() if isinstance(d, ValueRef)]
                if defs and all(not du.users(d.vid) for d in defs):
                    dead.add(inst.iid)
                    for d in defs:
                        fn.values.pop(d.vid, None)
        if not dead:
            return removedn
        for blk in fn.block_order():
            blk.instructions = [i for i in blk.instructions
                                if i.iid not in dead]
        removedn += len(dead)


def apply_aggregations(fn: LiftedFunction) -> LiftedFunction:
    fn.require_phase(Phase.SSA, Phase.NORMALIZED)
    for _ in range(4):
        n = _apply_patterns(fn, AGGREGATION_PATTERNS)
        n += simplify_packs(fn)
        if n == 0:
            break
    remove_dead_pseudo(fn)
    return fn


def normalize_xmad(fn: LiftedFunction) -> LiftedFunction:
    fn.require_phase(Phase.SSA, Phase.NORMALIZED)
    if fn.arch == "sm52":
        _apply_patterns(fn, XMAD_PATTERNS)
        remove_dead_pseudo(fn)
    return fn


# ---------------------------------------------------------------------------
# reciprocal-chain normalization
# ---------------------------------------------------------------------------

def normalize_reciprocal(fn: LiftedFunction) -> LiftedFunction:
    """Insert explicit bitcasts around the integer step of the fast-division
    idiom (I2F -> MUFU.RCP -> IADD/IADD3 on the float bits -> ... -> F2I)."""
    fn.require_phase(Phase.SSA, Phase.NORMALIZED)
    du = build_defuse(fn)
    boundaries = fn.meta.setdefault("pattern_boundaries", [])

    for blk in fn.block_order():
        for inst in list(blk.instructions):
            if inst.opcode.base != "MUFU" or not inst.opcode.has_mod("RCP"):
                continue
            src = inst.uses[0] if inst.uses else None
            if not isinstance(src, ValueRef):
                continue
            src_def = du.def_inst.get(src.vid)
            if src_def is None or src_def.opcode.base != "I2F":
                continue
            rcp_def = inst.defs[0]
            adds = [s.inst for s in du.users(rcp_def.vid)
                    if s.inst is not None and s.inst.opcode.base in ("IADD", "IADD3")
                    and any(isinstance(u, Imm) for u in s.inst.uses)]
            for add in adds:
                if not _reaches_f2i(du, add, depth=3):
                    continue
                _insert_reciprocal_bitcasts(fn, du, blk, inst, add)
                boundaries.append({
                    "value": rcp_def.vid, "category": "Fast math chains",
                    "inst": add.iid, "source": "pattern-normalized",
                })
                du = build_defuse(fn)
    return fn


def _reaches_f2i(du: DefUse, inst: Instruction, depth: int) -> bool:
    if inst.opcode.base == "F2I":
        return True
    if depth == 0:
        return False
    for d in inst.all_defs():
        if isinstance(d, ValueRef):
            for site in du.users(d.vid):
                if site.inst is not None and _reaches_f2i(du, site.inst, depth - 1):
                    return True
    return False


def _insert_reciprocal_bitcasts(fn, du, blk, mufu, add):
    rcp_ref = mufu.defs[0]
    vi = fn.new_value(fn.values[rcp_ref.vid].origin + ".bits", None)
    cast_in = fn.make_inst(Opcode("BITCAST", ("F2I",)), [ValueRef(vi.vid)],
                           [ValueRef(rcp_ref.vid)])
    vi.def_iid = cast_in.iid
    for i, u in enumerate(add.uses):
        if isinstance(u, ValueRef) and u.vid == rcp_ref.vid:
            add.uses[i] = replace(u, vid=vi.vid)

    add_ref = add.defs[0]
    vf = fn.new_value(fn.values[add_ref.vid].origin + ".f", None)
    cast_out = fn.make_inst(Opcode("BITCAST", ("I2F",)), [ValueRef(vf.vid)],
                            [ValueRef(add_ref.vid)])
    vf.def_iid = cast_out.iid
    for site in du.users(add_ref.vid):
        if site.inst is None or site.inst.iid in (cast_out.iid,):
            continue
        for i, u in enumerate(site.inst.uses):
            if isinstance(u, ValueRef) and u.vid == add_ref.vid:
                site.inst.uses[i] = replace(u, vid=vf.vid)

    pos = {inst.iid: i for i, inst in enumerate(blk.instructions)}
    add_pos = pos[add.iid]
    blk.instructions.insert(add_pos + 1, cast_out)
    blk.instructions.insert(add_pos, cast_in)


# ---------------------------------------------------------------------------
# CUDA object tagging (metadata only)
# ---------------------------------------------------------------------------

def tag_cuda_objects(fn: LiftedFunction) -> LiftedFunction:
    tags = fn.meta.setdefault("cuda_objects", [])
    for blk in fn.block_order():
        for inst in blk.instructions:
            base = inst.opcode.base
            if base == "BAR" and inst.opcode.has_mod("SYNC"):
                bar_id = 0
                for u in inst.uses:
                    if isinstance(u, Imm):
                        bar_id = u.bits
                inst.meta["cuda_object"] = ("block_sync", bar_id)
                tags.append(("block_sync", blk.bid, bar_id))
            elif base == "WARPSYNC":
                mask = next((u.bits for u in inst.uses if isinstance(u, Imm)),
                            None)
                if mask == 0xFFFFFFFF:
                    inst.meta["cuda_object"] = ("warp_group", mask)
                    tags.append(("warp_group", blk.bid, mask))
            elif base == "SHFL":
                inst.meta["cuda_object"] = ("collective", str(inst.opcode))
                tags.append(("collective", blk.bid, str(inst.opcode)))
    return fn


def describe_patterns() -> list[str]:
    out = []
    for p in ALL_PATTERNS:
        out.append(f"{p.name}: {p.description}")
        for t in p.templates:
            mods = "." + ".".join(t.mods_all) if t.mods_all else ""
            slots = ", ".join(_slot_str(s) for s in t.defs + t.aux + t.uses)
            out.append(f"    {t.base}{mods} {slots}")
    return out


def _slot_str(s: Slot) -> str:
    if isinstance(s, Var):
        flags = ""
        if s.negated:
            flags += "-"
        if s.bitnot:
            flags += "~"
        if s.half:
            flags += f".{s.half}"
        return f"${s.name}{flags}"
    if isinstance(s, LitRZ):
        return "RZ"
    if isinstance(s, LitPT):
        return "PT"
    if isinstance(s, LitImm):
        return hex(s.bits)
    return "_"
