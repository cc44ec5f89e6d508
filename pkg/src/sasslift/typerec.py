"""Type recovery: lattice seeding, fixpoint propagation, conflict splitting.

Every SSA value starts at top.  Instructions with fixed type semantics
intersect their operands' candidate sets (seeding); type-transparent
instructions (moves, bitwise logic, selects, phis, shuffles) relate the
def to its inputs and are resolved by a fixpoint that walks values in
reverse topological order of the def-use graph.  An empty intersection
is an implicit type boundary: the value keeps its definition-site type,
the offending use reads a fresh value through an inserted bitcast, and
conflicted values overwrite instead of intersecting from then on so one
boundary cannot cascade.  Values still ambiguous at the end resolve by
integer-first priority; values with no evidence at all fall back to
Int32.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from . import lattice as L
from .frontend import GLOBAL_SPACE, opcode_category
from .operands import ConstMem, MemRef, Opcode, Reg, UReg, ValueRef
from .ssa import DefUse, UseSite, build_defuse, value_operands
from .ssir import (
    CondBr, CondExit, Instruction, LiftedFunction, Phase, Provenance,
    terminator_value_uses,
)

LINK = "link"

CONVERSION_BASES = {"I2F", "F2I", "F2F", "I2I", "FRND", "CAST64", "BITCAST"}


class TypingError(RuntimeError):
    pass


@dataclass
class Signature:
    role: str                      # "seed" | "transparent" | "conversion"
    defs: list = field(default_factory=list)   # mask | LINK | None per def
    aux: int | None = L.BOOL
    uses: list = field(default_factory=list)   # mask | LINK | None per use


def _f16_elem(mods) -> int:
    return L.BF16 if "BF16" in mods else L.FLOAT16


def _mma_elem(mods) -> int:
    if "BF16" in mods:
        return L.BF16
    if "TF32" in mods:
        return L.INT32  # TF32 models as Int32 at the lattice level
    return L.FLOAT16


def _conv_float(mods, default=L.FLOAT32) -> int:
    if "F64" in mods:
        return L.FLOAT64
    if "F16" in mods:
        return L.FLOAT16
    if "BF16" in mods:
        return L.BF16
    return default


def _conv_int(mods) -> int:
    if "S64" in mods or "U64" in mods:
        return L.INT64
    return L.INT32


def _load_mask(width: int) -> int:
    return {1: L.NUM32, 2: L.NUM64, 4: L.NUM128}.get(width, L.NUM32)


def signature_for(inst: Instruction) -> Signature:
    base = inst.opcode.base
    mods = inst.opcode.modifiers
    cat = opcode_category(base)
    nd, nu = len(inst.defs), len(inst.uses)

    def sig(role, d, u, aux=L.BOOL):
        return Signature(role, d, aux, u)

    if cat == "falu":
        if base == "FSEL":
            return sig("seed", [L.FLOAT32], [L.FLOAT32, L.FLOAT32, L.BOOL])
        return sig("seed", [L.FLOAT32] * nd, [L.FLOAT32] * nu)
    if cat == "fcmp":
        return sig("seed", [L.BOOL], [L.FLOAT32, L.FLOAT32] + [L.BOOL] * (nu - 2))
    if cat == "dalu":
        return sig("seed", [L.FLOAT64] * nd, [L.FLOAT64] * nu)
    if cat == "dcmp":
        return sig("seed", [L.BOOL], [L.FLOAT64, L.FLOAT64] + [L.BOOL] * (nu - 2))
    if cat == "halu":
        e = _f16_elem(mods)
        return sig("seed", [e] * nd, [e] * nu)
    if cat == "hcmp":
        e = _f16_elem(mods)
        return sig("seed", [L.BOOL], [e, e] + [L.BOOL] * (nu - 2))

    if base in ("IMAD", "UIMAD") and "WIDE" in mods:
        # un-aggregated widening multiply: the def is a packed 64-bit value
        return sig("seed", [L.INT64], [L.INT32, L.INT32, L.INT64][:nu] +
                   [None] * max(0, nu - 3))

    if base in ("LOP", "LOP3"):
        # bitwise logic is type-transparent over its register inputs
        return sig("transparent", [LINK] * nd, [LINK] * nu)
    if base in ("SHF", "USHF"):
        u = [LINK, L.INT32, LINK][:nu] + [None] * max(0, nu - 3)
        return sig("transparent", [LINK] * nd, u)
    if base in ("SHL", "SHR"):
        return sig("transparent", [LINK] * nd, [LINK, L.INT32][:nu])
    if base in ("IADD3", "UIADD3", "IADD"):
        nsrc = 3 if base != "IADD" else 2
        return sig("seed", [L.INT32] * nd,
                   [L.INT32] * min(nsrc, nu) + [L.BOOL] * max(0, nu - nsrc))
    if base in ("LEA", "ULEA"):
        nsrc = 4 if "HI" in mods else 3
        return sig("seed", [L.INT32] * nd,
                   [L.INT32] * min(nsrc, nu) + [L.BOOL] * max(0, nu - nsrc))
    if cat == "ialu":
        return sig("seed", [L.INT32] * nd,
                   [L.INT32] * nu)
    if cat == "icmp":
        return sig("seed", [L.BOOL], [L.INT32, L.INT32] + [L.BOOL] * (nu - 2))
    if cat == "pred":
        return sig("seed", [L.BOOL], [L.BOOL] * nu)

    if base in ("MOV", "MOV32I", "UMOV"):
        if any(isinstance(u, ValueRef) for u in inst.uses):
            return sig("transparent", [LINK] * nd, [LINK] * nu)
        width = next((u.width for u in inst.uses if isinstance(u, ConstMem)), 1)
        return sig("seed", [_load_mask(width)] * nd, [None] * nu)
    if base in ("SEL", "USEL"):
        return sig("transparent", [LINK], [LINK, LINK, L.BOOL])
    if base == "SELECT":
        return sig("transparent", [LINK], [L.BOOL, LINK, LINK])
    if base == "PHI":
        return sig("transparent", [LINK], [LINK] * nu)
    if cat == "sreg":
        return sig("seed", [L.INT32] * nd, [None] * nu)
    if cat == "shuffle":
        return sig("transparent", [LINK], [LINK] + [L.INT32] * (nu - 1))
    if cat == "vote":
        return sig("seed", [L.INT32] * nd, [L.BOOL] * nu)

    if base == "I2F":
        return sig("conversion", [_conv_float(mods)], [_conv_int(mods)] * nu)
    if base == "F2I":
        return sig("conversion", [_conv_int(mods)], [_conv_float(mods)] * nu)
    if base == "F2F":
        fm = [m for m in mods if m in ("F64", "F32", "F16", "BF16")]
        dst = _conv_float(fm[:1], L.FLOAT32) if fm else L.FLOAT32
        src = _conv_float(fm[1:2], L.FLOAT32) if len(fm) > 1 else L.FLOAT32
        return sig("conversion", [dst], [src] * nu)
    if base == "I2I":
        return sig("conversion", [L.INT32], [L.INT32] * nu)
    if base == "FRND":
        return sig("conversion", [_conv_float(mods)], [_conv_float(mods)] * nu)
    if base == "CAST64":
        return sig("conversion", [L.INT64], [L.INT32])
    if base == "BITCAST":
        if inst.opcode.has_mod("F2I"):
            return sig("conversion", [L.INT32], [L.FLOAT32])
        if inst.opcode.has_mod("I2F"):
            return sig("conversion", [L.FLOAT32], [L.INT32])
        return sig("conversion", [None] * nd, [None] * nu)

    if cat == "load":
        width = max([d.width if isinstance(d, (Reg, UReg)) else 1
                     for d in inst.defs] or [1])
        if inst.meta.get("packed_def_width"):
            width = inst.meta["packed_def_width"]
        uses = []
        for u in inst.uses:
            if isinstance(u, MemRef):
                uses.append(L.INT64 if base in GLOBAL_SPACE else L.INT32)
            else:
                uses.append(None)
        return sig("seed", [_load_mask(width)] * nd, uses)
    if cat == "store":
        width = inst.meta.get("packed_data_width", 1)
        uses = []
        for u in inst.uses:
            if isinstance(u, MemRef):
                uses.append(L.INT64 if base in GLOBAL_SPACE else L.INT32)
            else:
                uses.append(_store_elem(inst, width))
        return sig("seed", [], uses)
    if cat == "atomic":
        elem = _atom_elem(mods)
        uses = []
        for u in inst.uses:
            if isinstance(u, MemRef):
                uses.append(L.INT64 if base in ("ATOM", "ATOMG") else L.INT32)
            else:
                uses.append(elem)
        return sig("seed", [elem] * nd, uses)

    if cat == "tensor":
        groups = inst.meta.get("tensor_groups", {})
        na, nb, nc = groups.get("a", 0), groups.get("b", 0), groups.get("c", 0)
        elem = _mma_elem(mods)
        acc = L.FLOAT32 if "F32" in mods else L.INT32
        uses = [elem] * (na + nb) + [acc] * nc
        uses += [None] * (nu - len(uses))
        return sig("seed", [acc] * nd, uses[:nu])

    if base == "IADD364":
        return sig("seed", [L.INT64], [L.INT64] * nu)
    if base == "ISETP64":
        return sig("seed", [L.BOOL], [L.INT64, L.INT64] + [L.BOOL] * (nu - 2))
    if base == "LEA64":
        return sig("seed", [L.INT64], [L.INT64, L.INT64, L.INT32][:nu])
    if base == "IMAD64":
        return sig("seed", [L.INT64], [L.INT32, L.INT32, L.INT64][:nu])
    if base == "MOV64":
        return sig("seed", [L.NUM64], [None] * nu)
    if base in ("SHL64", "SHR64"):
        return sig("seed", [L.INT64], [L.INT64, L.INT32][:nu])
    if base == "PACK64":
        return sig("seed", [L.NUM64], [L.NUM32] * nu)
    if base == "PACK128":
        return sig("seed", [L.NUM128], [L.NUM32] * nu)
    if base == "UNPACK64":
        return sig("seed", [L.NUM32], [L.NUM64 | L.NUM128])
    if base == "UNPACK128":
        return sig("seed", [L.NUM32], [L.NUM128])

    # control, sync, opaque, unknown: no constraints
    return sig("seed", [None] * nd, [None] * nu)


def _store_elem(inst, width):
    mods = inst.opcode.modifiers
    if inst.opcode.base == "RED":
        return _atom_elem(mods)
    return _load_mask(width)


def _atom_elem(mods) -> int:
    if "F32" in mods:
        return L.FLOAT32
    if "F64" in mods:
        return L.FLOAT64
    return L.INT32


# ---------------------------------------------------------------------------
# seeding
# ---------------------------------------------------------------------------

@dataclass
class TypeState:
    """Working state of the propagation engine for one function.

    Definition-site seeds are hop-0 evidence ("seeded locally"); use-site
    seeds reach the value across one def-use edge and count as hop 1,
    matching the reach metric.
    """

    seed_mask: dict[int, int] = field(default_factory=dict)
    def_seed_mask: dict[int, int] = field(default_factory=dict)
    use_seed_mask: dict[int, int] = field(default_factory=dict)
    link_exprs: dict[int, list[list[int]]] = field(default_factory=dict)
    roles: dict[int, str] = field(default_factory=dict)    # iid -> role
    iterations: int = 0


def _slot_values(inst: Instruction, op) -> list[tuple[ValueRef, int | None]]:
    """(value ref, sub-constraint) pairs contributed by one operand."""
    if isinstance(op, ValueRef):
        return [(op, None)]
    if isinstance(op, MemRef):
        out = []
        if isinstance(op.base, ValueRef):
            out.append((op.base, None))
        if isinstance(op.ureg, ValueRef):
            out.append((op.ureg, L.INT32))
        return out
    return []


def seed_types(fn: LiftedFunction) -> TypeState:
    """Phase 1: intersect every value with its instructions' signatures."""
    fn.require_phase(Phase.NORMALIZED, Phase.SSA, Phase.TYPED)
    st = TypeState()
    for vid in fn.values:
        st.seed_mask[vid] = L.TOP
        st.def_seed_mask[vid] = L.TOP
        st.use_seed_mask[vid] = L.TOP
        fn.values[vid].type_state = L.TypeSet()

    def narrow(vid, mask, is_def=False):
        st.seed_mask[vid] &= mask
        if is_def:
            st.def_seed_mask[vid] &= mask
        else:
            st.use_seed_mask[vid] &= mask

    for blk in fn.block_order():
        for inst in blk.instructions:
            sig = signature_for(inst)
            st.roles[inst.iid] = sig.role if not _is_link_sig(sig) else "transparent"

            link_uses: list[int] = []
            link_def: int | None = None

            for d, c in zip(inst.defs, sig.defs):
                if not isinstance(d, ValueRef):
                    continue
                if c == LINK:
                    link_def = d.vid
                elif c:
                    narrow(d.vid, c, is_def=True)
            for a in inst.aux_defs:
                if isinstance(a, ValueRef) and sig.aux:
                    narrow(a.vid, sig.aux, is_def=True)
            for u, c in zip(inst.uses, sig.uses + [None] * len(inst.uses)):
                for ref, sub in _slot_values(inst, u):
                    if sub is not None:
                        narrow(ref.vid, sub)
                    elif c == LINK:
                        link_uses.append(ref.vid)
                    elif c:
                        narrow(ref.vid, c)
            if isinstance(inst.guard, ValueRef):
                narrow(inst.guard.vid, L.BOOL)

            if link_def is not None and link_uses:
                st.link_exprs.setdefault(link_def, []).append(link_uses)
                for x in link_uses:
                    st.link_exprs.setdefault(x, []).append([link_def])

        for ref in terminator_value_uses(blk.terminator):
            narrow(ref.vid, L.BOOL)

    # Working masks start at top; the fixpoint folds the seeds in so an
    # empty direct intersection is detected as a conflict, not silently
    # frozen.  (B2 "seed only" applies them directly instead.)
    fn.meta["type_state"] = st
    return st


def apply_seeds_direct(fn: LiftedFunction, st: TypeState):
    for vid, info in fn.values.items():
        info.type_state.mask = st.seed_mask.get(vid, L.TOP)


def _is_link_sig(sig: Signature) -> bool:
    return any(c == LINK for c in sig.defs) or any(c == LINK for c in sig.uses)


# ---------------------------------------------------------------------------
# fixpoint propagation
# ---------------------------------------------------------------------------

def _value_order(fn: LiftedFunction, du: DefUse) -> list[int]:
    """Reverse topological order of the value-flow graph (uses first),
    via Tarjan SCC condensation."""
    succ: dict[int, list[int]] = {v: [] for v in fn.values}
    for vid in fn.values:
        for site in du.users(vid):
            if site.inst is None:
                continue
            for d in site.inst.all_defs():
                if isinstance(d, ValueRef):
                    succ[vid].append(d.vid)

    index: dict[int, int] = {}
    low: dict[int, int] = {}
    on: set[int] = set()
    stack: list[int] = []
    comp_of: dict[int, int] = {}
    comps: list[list[int]] = []
    counter = [0]

    def strongconnect(v0):
        work = [(v0, iter(succ[v0]))]
        index[v0] = low[v0] = counter[0]
        counter[0] += 1
        stack.append(v0)
        on.add(v0)
        path = [v0]
        while work:
            v, it = work[-1]
            advanced = False
            for w in it:
                if w not in index:
                    index[w] = low[w] = counter[0]
                    counter[0] += 1
                    stack.append(w)
                    on.add(w)
                    work.append((w, iter(succ[w])))
                    path.append(w)
                    advanced = True
                    break
                elif w in on:
                    low[v] = min(low[v], index[w])
            if not advanced:
                work.pop()
                path.pop()
                if work:
                    pv = work[-1][0]
                    low[pv] = min(low[pv], low[v])
                if low[v] == index[v]:
                    comp = []
                    while True:
                        w = stack.pop()
                        on.discard(w)
                        comp_of[w] = len(comps)
                        comp.append(w)
                        if w == v:
                            break
                    comps.append(comp)

    for v in fn.values:
        if v not in index:
            strongconnect(v)

    # comps are emitted in reverse topological order of the condensation
    order: list[int] = []
    for comp in comps:
        order.extend(sorted(comp))
    return order


def propagate_fixpoint(fn: LiftedFunction, du: DefUse | None = None,
                       max_iter: int = 64,
                       state: TypeState | None = None) -> tuple[LiftedFunction, int]:
    """Phase 2: fixpoint over the def-use graph; returns iteration count."""
    st: TypeState = state or fn.meta["type_state"]
    du = du or build_defuse(fn)
    order = _value_order(fn, du)

    iteration = 0
    while True:
        iteration += 1
        if iteration > max_iter:
            unstable = [v for v in fn.values
                        if not fn.values[v].type_state.conflicted]
            raise TypingError(
                f"{fn.name}: type propagation did not converge after "
                f"{max_iter} iterations; unstable values {unstable[:8]}"
            )
        changed = False
        for vid in order:
            info = fn.values[vid]
            ts: L.TypeSet = info.type_state
            if ts.conflicted:
                continue
            # accumulate form: T'(v) = T(v) meet seeds meet link contributions
            new = ts.mask & st.seed_mask[vid]
            for expr in st.link_exprs.get(vid, ()):
                contrib = L.TOP
                for x in expr:
                    contrib &= fn.values[x].type_state.mask or L.TOP
                new &= contrib
            if new == ts.mask:
                continue
            if new == 0:
                # conflict: freeze at the definition-site constraint so the
                # empty set never propagates onward
                ts.conflicted = True
                ts.mask = st.def_seed_mask[vid] or ts.mask or L.TOP
                changed = True
                continue
            if new & ~ts.mask:
                raise TypingError(
                    f"{fn.name}: monotonicity violated for %v{vid}: "
                    f"{L.format_mask(ts.mask)} -> {L.format_mask(new)}"
                )
            ts.mask = new
            changed = True
        if not changed:
            break
    st.iterations = iteration
    return fn, iteration


# ---------------------------------------------------------------------------
# conflict resolution
# ---------------------------------------------------------------------------

@dataclass
class ConflictRecord:
    vid: int
    def_mask: int
    use_mask: int
    use_iid: int | None
    use_slot: str
    cast_vid: int
    category: str = "Unclassified"


def _use_requirement(fn, st: TypeState, site: UseSite, vid: int) -> int:
    """Direct constraint a single use site puts on ``vid`` (TOP if none)."""
    if site.inst is None:
        return L.BOOL  # terminator condition
    inst = site.inst
    sig = signature_for(inst)
    req = L.TOP
    if site.slot == "guard":
        return L.BOOL
    for (u, c) in zip(inst.uses, sig.uses + [None] * len(inst.uses)):
        for ref, sub in _slot_values(inst, u):
            if ref.vid != vid:
                continue
            if sub is not None:
                req &= sub
            elif c is not None and c != LINK:
                req &= c
    return req


def resolve_conflicts(fn: LiftedFunction,
                      du: DefUse | None = None) -> tuple[LiftedFunction, list[ConflictRecord]]:
    """Phase 3: split conflicted values with explicit bitcasts at use sites."""
    st: TypeState = fn.meta["type_state"]
    du = du or build_defuse(fn)
    records: list[ConflictRecord] = []

    for vid in sorted(fn.values):
        info = fn.values[vid]
        ts: L.TypeSet = info.type_state
        if not ts.conflicted:
            continue
        if info.is_undef:
            continue  # uninitialized live-in: traps at runtime if read
        def_mask = st.def_seed_mask[vid]
        if def_mask in (0,):
            raise TypingError(
                f"{fn.name}: %v{vid} has contradictory definition-site "
                f"constraints; cannot assign a type"
            )
        if def_mask == L.TOP:
            def_mask = _transparent_def_mask(fn, st, du, vid)
        if not L.is_singleton(def_mask):
            # the retained definition-site type must be concrete before the
            # use sweep, or an ambiguous width-class mask (e.g. a Num32
            # unpack) would mask incompatible uses of the resolved leaf
            def_mask = L.mask_of(L.resolve_priority(def_mask))
        ts.mask = def_mask
        info.provenance = Provenance.CONFLICTED

        for site in list(du.users(vid)):
            req = _use_requirement(fn, st, site, vid)
            if req == L.TOP or req & def_mask:
                continue
            if L.container_bits_of(req) != L.container_bits_of(def_mask):
                raise TypingError(
                    f"{fn.name}: %v{vid} conflict crosses container widths "
                    f"({L.format_mask(def_mask)} vs {L.format_mask(req)})"
                )
            cast_v = fn.new_value(info.origin + ".cast", None)
            cast = fn.make_inst(Opcode("BITCAST"), [ValueRef(cast_v.vid)],
                                [ValueRef(vid)])
            cast.meta["conflict_cast"] = True
            cast_v.def_iid = cast.iid
            cast_v.type_state = L.TypeSet(req)
            st.seed_mask[cast_v.vid] = req
            st.def_seed_mask[cast_v.vid] = req
            _place_cast(fn, du, site, cast)
            _rewrite_use(site, vid, cast_v.vid)
            records.append(ConflictRecord(
                vid, def_mask, req, site.inst.iid if site.inst else None,
                site.slot, cast_v.vid))

    _cast_incompatible_link_inputs(fn, st, du, records)
    fn.meta["conflict_records"] = records
    return fn, records


def _cast_incompatible_link_inputs(fn, st: TypeState, du: DefUse,
                                   records: list[ConflictRecord]):
    """Consistency sweep: a transparent consumer (phi/select/move) whose
    resolved type cannot meet an input's type reads that input through a
    bitcast on the edge.  This is where a float/integer branch merge gets
    its cast on the integer incoming edge."""
    for blk in fn.block_order():
        for inst in list(blk.instructions):
            sig = signature_for(inst)
            if not _is_link_sig(sig):
                continue
            d = next((x for x in inst.defs if isinstance(x, ValueRef)), None)
            if d is None:
                continue
            dmask = fn.values[d.vid].type_state.mask
            if not dmask:
                continue
            for i, (u, c) in enumerate(zip(inst.uses,
                                           sig.uses + [None] * len(inst.uses))):
                if c != LINK or not isinstance(u, ValueRef):
                    continue
                im = fn.values[u.vid].type_state.mask
                if not im or im & dmask:
                    continue
                if L.container_bits_of(im) != L.container_bits_of(dmask):
                    raise TypingError(
                        f"{fn.name}: %v{u.vid} feeds %v{d.vid} across "
                        f"container widths")
                cast_v = fn.new_value(fn.values[u.vid].origin + ".cast", None)
                cast = fn.make_inst(Opcode("BITCAST"), [ValueRef(cast_v.vid)],
                                    [ValueRef(u.vid)])
                cast.meta["conflict_cast"] = True
                cast_v.def_iid = cast.iid
                cast_v.type_state = L.TypeSet(dmask)
                st.seed_mask[cast_v.vid] = dmask
                st.def_seed_mask[cast_v.vid] = dmask
                st.use_seed_mask[cast_v.vid] = L.TOP
                site = UseSite(inst, blk.bid, f"use{i}")
                _place_cast(fn, du, site, cast)
                inst.uses[i] = replace(u, vid=cast_v.vid)
                records.append(ConflictRecord(
                    u.vid, im, dmask, inst.iid, f"use{i}", cast_v.vid))


def _transparent_def_mask(fn, st, du, vid) -> int:
    """Definition-site type for a conflicted transparent def (phi/select/mov):
    prefer direct use requirements, then the first non-empty input mask."""
    req = L.TOP
    for site in du.users(vid):
        req &= _use_requirement(fn, st, site, vid)
    if req not in (0, L.TOP):
        return req
    d = du.def_inst.get(vid)
    if d is not None:
        for ref, _ in value_operands(d):
            m = fn.values[ref.vid].type_state.mask
            if m not in (0, L.TOP):
                return m
    return L.mask_of("Int32")


def _place_cast(fn, du, site: UseSite, cast: Instruction):
    blk = fn.blocks[site.block]
    if site.inst is None:
        blk.instructions.append(cast)
        return
    if site.inst.opcode.base == "PHI":
        # a phi use is a value on the incoming edge: cast in the predecessor
        idx = int(site.slot.replace("use", "").split(".")[0])
        pred_bid = site.inst.meta["phi_blocks"][idx]
        fn.blocks[pred_bid].instructions.append(cast)
        return
    pos = blk.instructions.index(site.inst)
    blk.instructions.insert(pos, cast)


def _rewrite_use(site: UseSite, old_vid: int, new_vid: int):
    inst = site.inst
    if inst is None:
        return
    if site.slot == "guard":
        inst.guard = replace(inst.guard, vid=new_vid)
        return
    for i, u in enumerate(inst.uses):
        if isinstance(u, ValueRef) and u.vid == old_vid:
            inst.uses[i] = replace(u, vid=new_vid)
        elif isinstance(u, MemRef):
            if isinstance(u.base, ValueRef) and u.base.vid == old_vid:
                u.base = replace(u.base, vid=new_vid)
            if isinstance(u.ureg, ValueRef) and u.ureg.vid == old_vid:
                u.ureg = replace(u.ureg, vid=new_vid)


# ---------------------------------------------------------------------------
# ambiguity resolution and provenance
# ---------------------------------------------------------------------------

def resolve_ambiguous(fn: LiftedFunction, strict_empty: bool = False) -> LiftedFunction:
    """Final phase: one leaf per value, provenance and reach recorded."""
    st: TypeState = fn.meta.get("type_state")
    du = build_defuse(fn)
    reach = _propagation_reach(fn, st, du) if st else {}

    for vid in sorted(fn.values):
        info = fn.values[vid]
        ts: L.TypeSet = info.type_state or L.TypeSet()
        if ts.mask == 0:
            if strict_empty:
                raise TypingError(
                    f"{fn.name}: %v{vid} has empty type set and conflict "
                    f"resolution is disabled"
                )
            ts.mask = L.mask_of("Int32")
            ts.conflicted = True
        if info.is_undef:
            info.final_type = "Int32"
            info.provenance = Provenance.FALLBACK
            continue
        if ts.conflicted:
            info.final_type = L.resolve_priority(ts.mask)
            info.provenance = Provenance.CONFLICTED
        elif L.is_singleton(ts.mask):
            info.final_type = L.singleton_name(ts.mask)
            seeded = st is not None and st.def_seed_mask.get(vid) == ts.mask
            info.provenance = Provenance.SEEDED if seeded else Provenance.PROPAGATED
            info.reach = 0 if seeded else reach.get(vid)
        else:
            info.final_type = L.resolve_priority(ts.mask)
            info.provenance = Provenance.FALLBACK
    fn.advance_phase(Phase.TYPED)
    return fn


def _propagation_reach(fn, st: TypeState, du: DefUse) -> dict[int, int]:
    """Hops from the nearest seeding instruction along transparent links.

    A value defined by a seeding instruction is at hop 0; a value consumed
    directly by one is at hop 1 (the evidence travels back one def-use
    edge); each transparent link adds one hop.
    """
    import heapq

    dist: dict[int, int] = {}
    heap: list[tuple[int, int]] = []
    for vid in fn.values:
        best = None
        if st.def_seed_mask.get(vid, L.TOP) != L.TOP:
            best = 0
        elif st.use_seed_mask.get(vid, L.TOP) != L.TOP:
            best = 1
        if best is not None:
            dist[vid] = best
            heapq.heappush(heap, (best, vid))
    while heap:
        d, v = heapq.heappop(heap)
        if d > dist.get(v, 1 << 30):
            continue
        for expr in st.link_exprs.get(v, ()):
            for w in expr:
                if d + 1 < dist.get(w, 1 << 30):
                    dist[w] = d + 1
                    heapq.heappush(heap, (d + 1, w))
    return dist


# ---------------------------------------------------------------------------
# whole-pass driver
# ---------------------------------------------------------------------------

def run_type_recovery(fn: LiftedFunction, mode: str = "b0",
                      max_iter: int = 64) -> LiftedFunction:
    """Seed + propagate + resolve, honoring the ablation mode.

    b0/b1a/b1b: full recovery.  b2: seeding only (no propagation, no
    conflict resolution; contradictory seeds become hard errors).  b3: no
    recovery at all, every value is Int32.
    """
    if fn.phase == Phase.SSA:
        fn.advance_phase(Phase.NORMALIZED)
    if mode == "b3":
        for info in fn.values.values():
            info.type_state = L.TypeSet(L.mask_of("Int32"))
            info.final_type = "Int32"
            info.provenance = Provenance.FALLBACK
        fn.meta["type_iterations"] = 0
        fn.meta["conflict_records"] = []
        fn.advance_phase(Phase.TYPED)
        return fn

    st = seed_types(fn)
    if mode == "b2":
        apply_seeds_direct(fn, st)
        fn.meta["type_iterations"] = 0
        fn.meta["conflict_records"] = []
        return resolve_ambiguous(fn, strict_empty=True)

    du = build_defuse(fn)
    _, iters = propagate_fixpoint(fn, du, max_iter=max_iter)
    fn.meta["type_iterations"] = iters
    fn, _records = resolve_conflicts(fn)
    return resolve_ambiguous(fn)
