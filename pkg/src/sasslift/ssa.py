"""Predicated-SSA construction.

Predicated register writes are replaced by unconditional writes to fresh
temporaries merged through SELECT instructions (select-chain lowering of
psi-functions): for each guarded write ``@p r = e`` we emit ``t = e``
followed by ``r = select(p, t, r)``.  Chaining through the running value
of ``r`` gives sequential masked-write semantics: the last write whose
guard is true wins, otherwise the live-in value survives.  Because each
select is materialized adjacent to its write, a chain never spans a
convergence barrier.

Guarded instructions with side effects (memory, barriers, warp exchange)
cannot become selects; their block is rewritten into an explicit
conditional diamond instead.

Renaming is the standard dominance-based construction with pruned phi
placement.  Register groups become single packed SSA values (PACK64 /
UNPACK64 and the 128-bit equivalents) so 64-bit quantities are one value
with explicit sub-register access.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .frontend import opcode_category
from .operands import (
    ConstMem, Imm, MemRef, Opcode, Operand, Pred, PT_INDEX, Reg, SReg, UReg,
    ValueRef, ZeroReg,
)
from .ssir import (
    Br, CondBr, CondExit, Exit, Instruction, LiftedFunction, Phase, Ret,
    terminator_value_uses,
)
from .cfg import rewire_edges

# Categories whose guarded instances cannot be lowered to selects.
UNSAFE_GUARDED = {"load", "store", "atomic", "sync", "opaque", "tensor",
                  "shuffle", "vote"}


class SsaError(RuntimeError):
    pass


def new_temp_reg(fn: LiftedFunction) -> int:
    n = fn.meta.get("next_temp_reg", 1000)
    fn.meta["next_temp_reg"] = n + 1
    return n


def new_temp_pred(fn: LiftedFunction) -> int:
    n = fn.meta.get("next_temp_pred", 100)
    fn.meta["next_temp_pred"] = n + 1
    return n


# ---------------------------------------------------------------------------
# psi construction (select-chain lowering)
# ---------------------------------------------------------------------------

@dataclass
class PsiRecord:
    block: int
    target: str                      # register name
    writes: list[tuple[str, str]]    # (predicate, temp) in program order
    default: str                     # live-in register name


def construct_psi(fn: LiftedFunction, naive: bool = False) -> LiftedFunction:
    """Replace predicated register writes; see module docstring.

    ``naive`` reproduces the ablation that skips select lowering: guards
    are dropped and the last write simply wins.
    """
    fn.require_phase(Phase.CFG_BUILT)
    records: list[PsiRecord] = fn.meta.setdefault("psi_records", [])

    for blk in list(fn.block_order()):
        guarded = [i for i in blk.instructions if i.guard is not None]
        if not guarded:
            continue
        if any(opcode_category(i.opcode.base) in UNSAFE_GUARDED for i in guarded):
            _lower_guarded_block(fn, blk)
            continue
        if naive:
            for inst in guarded:
                inst.guard = None
            continue

        per_reg: dict[str, PsiRecord] = {}
        out: list[Instruction] = []
        for inst in blk.instructions:
            if inst.guard is None:
                out.append(inst)
                continue
            pred = inst.guard
            inst.guard = None
            out.append(inst)
            for dlist in (inst.defs, inst.aux_defs):
                for di, d in enumerate(dlist):
                    tmp = _fresh_def(fn, d)
                    if tmp is None:
                        continue
                    dlist[di] = tmp
                    live_in = _bare_copy(d)
                    sel = fn.make_inst(
                        Opcode("SELECT"), [_bare_copy(d)],
                        [_copy_pred(pred), _use_of(tmp), live_in],
                    )
                    sel.meta["psi"] = True
                    out.append(sel)
                    key = str(live_in)
                    rec = per_reg.get(key)
                    if rec is None:
                        rec = PsiRecord(blk.bid, key, [], key)
                        per_reg[key] = rec
                        records.append(rec)
                    rec.writes.append((str(pred), str(_use_of(tmp))))
        blk.instructions = out
    return fn


def _fresh_def(fn, d) -> Operand | None:
    if isinstance(d, Reg):
        return Reg(new_temp_reg(fn), d.width)
    if isinstance(d, UReg):
        return UReg(new_temp_reg(fn), d.width)
    if isinstance(d, Pred) and not d.is_pt():
        return Pred(new_temp_pred(fn))
    return None  # RZ / PT writes are discards


def _bare_copy(d):
    if isinstance(d, Reg):
        return Reg(d.base, d.width)
    if isinstance(d, UReg):
        return UReg(d.index, d.width)
    if isinstance(d, Pred):
        return Pred(d.index)
    raise AssertionError(d)


def _use_of(d):
    return _bare_copy(d)


def _copy_pred(p: Pred) -> Pred:
    return Pred(p.index, p.negated)


def _lower_guarded_block(fn: LiftedFunction, blk):
    """Turn a uniformly guarded block with side effects into a diamond."""
    guards = {(_g.guard.index, _g.guard.negated)
              for _g in blk.instructions if _g.guard is not None}
    if len(guards) != 1:
        raise SsaError(f"{fn.name} bb{blk.bid}: mixed guards in side-effect block")
    gidx, gneg = next(iter(guards))

    core = fn.new_block(blk.start_address)
    cont = fn.new_block(blk.start_address)
    core.instructions = blk.instructions
    for inst in core.instructions:
        inst.guard = None
    core.terminator = Br(cont.bid)
    cont.terminator = blk.terminator
    blk.instructions = []
    blk.terminator = CondBr(Pred(gidx, gneg), core.bid, cont.bid)
    rewire_edges(fn)


# ---------------------------------------------------------------------------
# dominators
# ---------------------------------------------------------------------------

def reverse_postorder(fn: LiftedFunction) -> list[int]:
    seen: set[int] = set()
    order: list[int] = []

    def visit(b):
        stack = [(b, iter(fn.blocks[b].succs))]
        seen.add(b)
        while stack:
            bid, it = stack[-1]
            advanced = False
            for s in it:
                if s not in seen:
                    seen.add(s)
                    stack.append((s, iter(fn.blocks[s].succs)))
                    advanced = True
                    break
            if not advanced:
                order.append(bid)
                stack.pop()

    visit(fn.entry)
    order.reverse()
    return order


def immediate_dominators(fn: LiftedFunction) -> dict[int, int | None]:
    """Iterative dominator computation (Cooper-Harvey-Kennedy)."""
    rpo = reverse_postorder(fn)
    index = {b: i for i, b in enumerate(rpo)}
    idom: dict[int, int | None] = {fn.entry: fn.entry}

    def intersect(a, b):
        while a != b:
            while index[a] > index[b]:
                a = idom[a]
            while index[b] > index[a]:
                b = idom[b]
        return a

    changed = True
    while changed:
        changed = False
        for b in rpo:
            if b == fn.entry:
                continue
            preds = [p for p in fn.blocks[b].preds if p in idom and p in index]
            if not preds:
                continue
            new = preds[0]
            for p in preds[1:]:
                new = intersect(new, p)
            if idom.get(b) != new:
                idom[b] = new
                changed = True
    idom[fn.entry] = None
    return idom


def dominance_frontiers(fn: LiftedFunction,
                        idom: dict[int, int | None]) -> dict[int, set[int]]:
    df: dict[int, set[int]] = {b: set() for b in fn.blocks}
    for b in fn.blocks:
        preds = fn.blocks[b].preds
        if len(preds) < 2:
            continue
        for p in preds:
            runner = p
            while runner is not None and runner != idom[b]:
                df[runner].add(b)
                runner = idom[runner]
    return df


def dominator_tree(idom: dict[int, int | None]) -> dict[int, list[int]]:
    tree: dict[int, list[int]] = {b: [] for b in idom}
    for b, d in idom.items():
        if d is not None and d != b:
            tree[d].append(b)
    for kids in tree.values():
        kids.sort()
    return tree


# ---------------------------------------------------------------------------
# register keys and liveness
# ---------------------------------------------------------------------------

RegKey = tuple[str, int]


def _op_use_keys(op: Operand) -> list[RegKey]:
    if isinstance(op, Reg):
        return [("r", i) for i in op.regs()]
    if isinstance(op, UReg):
        return [("ur", op.index + k) for k in range(op.width)]
    if isinstance(op, Pred):
        return [] if op.is_pt() else [("p", op.index)]
    if isinstance(op, MemRef):
        keys = []
        if op.base is not None:
            keys += _op_use_keys(op.base)
        if op.ureg is not None:
            keys += _op_use_keys(op.ureg)
        return keys
    return []


def _inst_use_keys(inst: Instruction) -> list[RegKey]:
    keys = []
    if inst.guard is not None:
        keys += _op_use_keys(inst.guard)
    for u in inst.uses:
        keys += _op_use_keys(u)
    return keys


def _inst_def_keys(inst: Instruction) -> list[RegKey]:
    keys = []
    for d in inst.all_defs():
        keys += _op_use_keys(d)
    return keys


def _term_use_keys(term) -> list[RegKey]:
    keys = []
    if isinstance(term, (CondBr, CondExit)):
        keys += _op_use_keys(term.cond)
    if isinstance(term, CondBr) and term.guard is not None:
        keys += _op_use_keys(term.guard)
    return keys


def compute_liveness(fn: LiftedFunction):
    gen: dict[int, set[RegKey]] = {}
    kill: dict[int, set[RegKey]] = {}
    for blk in fn.block_order():
        g: set[RegKey] = set()
        k: set[RegKey] = set()
        for inst in blk.instructions:
            for key in _inst_use_keys(inst):
                if key not in k:
                    g.add(key)
            for key in _inst_def_keys(inst):
                k.add(key)
        for key in _term_use_keys(blk.terminator):
            if key not in k:
                g.add(key)
        gen[blk.bid], kill[blk.bid] = g, k

    live_in = {b: set() for b in fn.blocks}
    live_out = {b: set() for b in fn.blocks}
    changed = True
    while changed:
        changed = False
        for blk in reversed(fn.block_order()):
            out = set()
            for s in blk.succs:
                out |= live_in[s]
            inn = gen[blk.bid] | (out - kill[blk.bid])
            if out != live_out[blk.bid] or inn != live_in[blk.bid]:
                live_out[blk.bid], live_in[blk.bid] = out, inn
                changed = True
    return live_in, live_out


def _key_name(key: RegKey) -> str:
    kind, idx = key
    return {"r": "R", "ur": "UR", "p": "P"}[kind] + str(idx)


def _key_operand(key: RegKey) -> Operand:
    kind, idx = key
    if kind == "r":
        return Reg(idx)
    if kind == "ur":
        return UReg(idx)
    return Pred(idx)


# ---------------------------------------------------------------------------
# SSA renaming
# ---------------------------------------------------------------------------

def ssa_rename(fn: LiftedFunction) -> LiftedFunction:
    fn.require_phase(Phase.CFG_BUILT)

    idom = immediate_dominators(fn)
    df = dominance_frontiers(fn, idom)
    tree = dominator_tree(idom)
    live_in, _ = compute_liveness(fn)

    # --- phi insertion (pruned) ---------------------------------------
    def_blocks: dict[RegKey, set[int]] = {}
    for blk in fn.block_order():
        for inst in blk.instructions:
            for key in _inst_def_keys(inst):
                def_blocks.setdefault(key, set()).add(blk.bid)

    phis: dict[int, dict[RegKey, Instruction]] = {b: {} for b in fn.blocks}
    for key, blocks in sorted(def_blocks.items()):
        work = list(blocks)
        placed: set[int] = set()
        while work:
            x = work.pop()
            for y in sorted(df.get(x, ())):
                if y in placed or key not in live_in[y]:
                    continue
                phi = fn.make_inst(Opcode("PHI"), [_key_operand(key)], [])
                phi.meta["phi_key"] = key
                phi.meta["phi_blocks"] = []
                phis[y][key] = phi
                placed.add(y)
                if y not in blocks:
                    work.append(y)
    for bid, per_key in phis.items():
        blk = fn.blocks[bid]
        blk.instructions[0:0] = [per_key[k] for k in sorted(per_key)]

    # --- rename walk ----------------------------------------------------
    stacks: dict[RegKey, list[int]] = {}
    undef_for: dict[RegKey, int] = {}
    pack_cache: dict[tuple, int] = {}

    def current(key: RegKey) -> int:
        st = stacks.get(key)
        if st:
            return st[-1]
        if key not in undef_for:
            v = fn.new_value(_key_name(key) + ".undef", None, is_undef=True)
            undef_for[key] = v.vid
            fn.diagnose(f"{_key_name(key)}: read without reaching definition, "
                        f"bound to undef")
        return undef_for[key]

    def rename_use(op: Operand, before: list[Instruction], inst_for_pack):
        if isinstance(op, Reg) and op.width == 1:
            return ValueRef(current(("r", op.base)), op.negated, op.absolute,
                            op.bitnot, op.half)
        if isinstance(op, UReg) and op.width == 1:
            return ValueRef(current(("ur", op.index)), op.negated, op.absolute,
                            op.bitnot)
        if isinstance(op, Pred):
            if op.is_pt():
                return op
            return ValueRef(current(("p", op.index)), op.negated)
        if isinstance(op, (Reg, UReg)):
            if inst_for_pack is not None and inst_for_pack.meta.get("tensor_groups"):
                return None  # handled by caller, per-register expansion
            if inst_for_pack is not None:
                inst_for_pack.meta["packed_data_width"] = op.width
            return _pack_group(op, before)
        if isinstance(op, MemRef):
            if op.base is not None:
                op.base = rename_use(op.base, before, None)
            if op.ureg is not None:
                op.ureg = rename_use(op.ureg, before, None)
            return op
        return op

    def _pack_group(op, before) -> ValueRef:
        if isinstance(op, Reg):
            parts = [current(("r", i)) for i in op.regs()]
            origin = op.name()
        else:
            parts = [current(("ur", op.index + k)) for k in range(op.width)]
            origin = op.name()
        cache_key = tuple(parts)
        if cache_key in pack_cache:
            return ValueRef(pack_cache[cache_key], op.negated, op.absolute,
                            op.bitnot)
        opc = Opcode("PACK64") if len(parts) == 2 else Opcode("PACK128")
        v = fn.new_value(origin, None)
        pk = fn.make_inst(opc, [ValueRef(v.vid)],
                          [ValueRef(p) for p in parts])
        v.def_iid = pk.iid
        before.append(pk)
        pack_cache[cache_key] = v.vid
        return ValueRef(v.vid, op.negated, op.absolute, op.bitnot)

    def rename_def(op: Operand, inst: Instruction, after: list[Instruction],
                   pushed: list[RegKey], tensor: bool):
        if isinstance(op, ZeroReg):
            return op  # discarded write
        if isinstance(op, Pred):
            if op.is_pt():
                return op
            v = fn.new_value(op.name(), inst.iid)
            stacks.setdefault(("p", op.index), []).append(v.vid)
            pushed.append(("p", op.index))
            return ValueRef(v.vid)
        if isinstance(op, (Reg, UReg)):
            kind = "r" if isinstance(op, Reg) else "ur"
            index = op.base if isinstance(op, Reg) else op.index
            if op.width == 1 or tensor:
                if op.width > 1 and tensor:
                    return None  # caller expands
                v = fn.new_value(op.name(), inst.iid)
                stacks.setdefault((kind, index), []).append(v.vid)
                pushed.append((kind, index))
                return ValueRef(v.vid)
            inst.meta["packed_def_width"] = op.width
            vp = fn.new_value(op.name(), inst.iid)
            sels = ["LO", "HI"] if op.width == 2 else ["W0", "W1", "W2", "W3"]
            opc = "UNPACK64" if op.width == 2 else "UNPACK128"
            for k, sel in enumerate(sels):
                hv = fn.new_value(_key_name((kind, index + k)), None)
                up = fn.make_inst(Opcode(opc, (sel,)), [ValueRef(hv.vid)],
                                  [ValueRef(vp.vid)])
                hv.def_iid = up.iid
                after.append(up)
                stacks.setdefault((kind, index + k), []).append(hv.vid)
                pushed.append((kind, index + k))
            return ValueRef(vp.vid)
        raise SsaError(f"unexpected def operand {op!r}")

    def expand_tensor(inst: Instruction, before, pushed):
        """Per-register values for MMA operand groups (no packing)."""
        new_uses = []
        for u in inst.uses:
            if isinstance(u, Reg) and u.width > 1:
                for i in u.regs():
                    new_uses.append(ValueRef(current(("r", i))))
            else:
                new_uses.append(rename_use(u, before, None))
        inst.uses = new_uses
        new_defs = []
        for d in inst.defs:
            if isinstance(d, Reg) and d.width > 1:
                for i in d.regs():
                    v = fn.new_value(f"R{i}", inst.iid)
                    stacks.setdefault(("r", i), []).append(v.vid)
                    pushed.append(("r", i))
                    new_defs.append(ValueRef(v.vid))
            else:
                r = rename_def(d, inst, [], pushed, tensor=False)
                new_defs.append(r)
        inst.defs = new_defs

    def walk(bid: int):
        blk = fn.blocks[bid]
        pushed: list[RegKey] = []
        pack_cache.clear()

        new_list: list[Instruction] = []
        for inst in blk.instructions:
            if inst.opcode.base == "PHI":
                key = inst.meta["phi_key"]
                v = fn.new_value(_key_name(key), inst.iid)
                inst.defs = [ValueRef(v.vid)]
                stacks.setdefault(key, []).append(v.vid)
                pushed.append(key)
                new_list.append(inst)
                continue
            before: list[Instruction] = []
            after: list[Instruction] = []
            if inst.meta.get("tensor_groups"):
                if inst.guard is not None:
                    inst.guard = rename_use(inst.guard, before, None)
                expand_tensor(inst, before, pushed)
            else:
                if inst.guard is not None:
                    inst.guard = rename_use(inst.guard, before, None)
                inst.uses = [rename_use(u, before, inst) for u in inst.uses]
                inst.defs = [rename_def(d, inst, after, pushed, False)
                             for d in inst.defs]
                inst.aux_defs = [rename_def(d, inst, after, pushed, False)
                                 for d in inst.aux_defs]
            new_list.extend(before)
            new_list.append(inst)
            new_list.extend(after)
        blk.instructions = new_list

        term = blk.terminator
        tb: list[Instruction] = []
        if isinstance(term, (CondBr, CondExit)):
            term.cond = rename_use(term.cond, tb, None)
        if isinstance(term, CondBr) and term.guard is not None:
            term.guard = rename_use(term.guard, tb, None)
        blk.instructions.extend(tb)

        for s in blk.succs:
            for key, phi in sorted(phis[s].items()):
                phi.uses.append(ValueRef(current(key)))
                phi.meta["phi_blocks"].append(bid)

        snapshot = dict(pack_cache)
        for child in tree.get(bid, []):
            pack_cache.clear()
            pack_cache.update(snapshot)
            walk(child)
        for key in reversed(pushed):
            stacks[key].pop()

    walk(fn.entry)
    fn.advance_phase(Phase.SSA)
    return fn


# ---------------------------------------------------------------------------
# def-use graph
# ---------------------------------------------------------------------------

@dataclass
class UseSite:
    inst: Instruction | None   # None for terminator uses
    block: int
    slot: str


@dataclass
class DefUse:
    def_inst: dict[int, Instruction] = field(default_factory=dict)
    uses: dict[int, list[UseSite]] = field(default_factory=dict)
    block_of_inst: dict[int, int] = field(default_factory=dict)

    def users(self, vid: int) -> list[UseSite]:
        return self.uses.get(vid, [])


class UndefinedValueError(RuntimeError):
    pass


def value_operands(inst: Instruction):
    """Yield (ValueRef, slot) for every value use of an instruction."""
    if isinstance(inst.guard, ValueRef):
        yield inst.guard, "guard"
    for i, u in enumerate(inst.uses):
        if isinstance(u, ValueRef):
            yield u, f"use{i}"
        elif isinstance(u, MemRef):
            if isinstance(u.base, ValueRef):
                yield u.base, f"use{i}.base"
            if isinstance(u.ureg, ValueRef):
                yield u.ureg, f"use{i}.ureg"


def build_defuse(fn: LiftedFunction) -> DefUse:
    """Two-pass def-use construction over SSA form."""
    fn.require_phase(Phase.SSA, Phase.NORMALIZED, Phase.TYPED)
    du = DefUse()
    for blk in fn.block_order():
        for inst in blk.instructions:
            du.block_of_inst[inst.iid] = blk.bid
            for d in inst.all_defs():
                if isinstance(d, ValueRef):
                    du.def_inst[d.vid] = inst
    for blk in fn.block_order():
        for inst in blk.instructions:
            for ref, slot in value_operands(inst):
                if ref.vid not in du.def_inst and not fn.values[ref.vid].is_undef:
                    raise UndefinedValueError(
                        f"{fn.name}: %v{ref.vid} used at inst {inst.iid} "
                        f"but never defined"
                    )
                du.uses.setdefault(ref.vid, []).append(
                    UseSite(inst, blk.bid, slot))
        for ref in terminator_value_uses(blk.terminator):
            du.uses.setdefault(ref.vid, []).append(
                UseSite(None, blk.bid, "term"))
    return du
