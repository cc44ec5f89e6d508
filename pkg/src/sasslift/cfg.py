"""Predicate-aware control-flow recovery.

Leaders follow the standard rules (entry, branch targets, fall-throughs)
plus one GPU-specific rule: a new block starts whenever the guard
predicate changes.  Predicated BRA/EXIT lower to CondBr/CondExit so the
fall-through path of partially-exiting warps stays reachable, and
compiler-inserted self-loop padding after EXIT is removed.

Device functions embedded in the kernel's instruction stream appear as
disconnected subgraphs; they are inlined at each call site (or extracted
when called from many sites) so the final CFG is fully connected.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .operands import Imm, Pred
from .ssir import (
    BasicBlock, Br, CallRet, CondBr, CondExit, Exit, Instruction,
    LiftedFunction, Phase, Ret, _guard_key,
)

TERMINATOR_BASES = {"BRA", "EXIT", "RET", "CALL"}


class CfgError(ValueError):
    """Unresolvable branch or call target."""


class LeaderReason(enum.Enum):
    ENTRY = "entry"
    BRANCH_TARGET = "branch_target"
    FALL_THROUGH = "fall_through"
    GUARD_CHANGE = "guard_change"


@dataclass
class LeaderSet:
    reasons: dict[int, list[LeaderReason]] = field(default_factory=dict)

    def add(self, addr: int, reason: LeaderReason):
        self.reasons.setdefault(addr, [])
        if reason not in self.reasons[addr]:
            self.reasons[addr].append(reason)

    def addresses(self) -> list[int]:
        return sorted(self.reasons)

    def __contains__(self, addr: int) -> bool:
        return addr in self.reasons


def realign_address(fn: LiftedFunction, target: int) -> int | None:
    """Snap a branch target forward to the next real instruction address.

    Targets may land on control-code-only lines; the first instruction at
    or after the raw target is the semantic destination.
    """
    best = None
    for inst in fn.raw_instructions:
        addr = inst.address
        if addr is not None and addr >= target and (best is None or addr < best):
            best = addr
    return best


def _branch_target(inst: Instruction) -> int | None:
    for u in inst.uses:
        if isinstance(u, Imm):
            return u.bits
    return None


def identify_leaders(fn: LiftedFunction) -> LeaderSet:
    fn.require_phase(Phase.RAW)
    leaders = LeaderSet()
    insts = fn.raw_instructions
    if not insts:
        return leaders
    leaders.add(insts[0].address, LeaderReason.ENTRY)

    call_targets: dict[int, int] = fn.meta.get("call_targets", {})
    prev_guard = None
    prev_was_terminator = False
    for inst in insts:
        base = inst.opcode.base
        if prev_was_terminator:
            leaders.add(inst.address, LeaderReason.FALL_THROUGH)
            prev_guard = None
        if base in TERMINATOR_BASES:
            if base in ("BRA", "CALL"):
                raw_target = _branch_target(inst)
                if base == "CALL":
                    raw_target = call_targets.get(inst.address, raw_target)
                if raw_target is None:
                    raise CfgError(
                        f"{fn.name}: {base} at {inst.address:#x} has no "
                        f"resolvable target (add a call_target manifest entry)"
                    )
                target = realign_address(fn, raw_target)
                if target is None:
                    raise CfgError(
                        f"{fn.name}: branch target {raw_target:#x} at "
                        f"{inst.address:#x} is outside the function"
                    )
                inst.meta["resolved_target"] = target
                leaders.add(target, LeaderReason.BRANCH_TARGET)
            prev_was_terminator = True
            continue
        prev_was_terminator = False
        g = _guard_key(inst.guard)
        if g != prev_guard and inst.address != insts[0].address:
            if leaders.reasons.get(inst.address) is None:
                leaders.add(inst.address, LeaderReason.GUARD_CHANGE)
        prev_guard = g
    return leaders


def build_cfg(fn: LiftedFunction, leaders: LeaderSet | None = None) -> LiftedFunction:
    fn.require_phase(Phase.RAW)
    if leaders is None:
        leaders = identify_leaders(fn)
    fn.meta["leaders"] = leaders

    if not fn.raw_instructions:
        entry = fn.new_block(0)
        entry.terminator = Exit()
        fn.entry = entry.bid
        fn.raw_instructions = []
        fn.advance_phase(Phase.CFG_BUILT)
        rewire_edges(fn)
        return fn

    addrs = leaders.addresses()
    block_at: dict[int, BasicBlock] = {}
    for addr in addrs:
        block_at[addr] = fn.new_block(addr)
    fn.entry = block_at[addrs[0]].bid

    # distribute instructions
    bounds = addrs + [float("inf")]
    bi = 0
    for inst in fn.raw_instructions:
        while inst.address >= bounds[bi + 1]:
            bi += 1
        block_at[bounds[bi]].instructions.append(inst)

    ordered = [block_at[a] for a in addrs]
    next_block = {b.bid: (ordered[i + 1].bid if i + 1 < len(ordered) else None)
                  for i, b in enumerate(ordered)}

    def block_of_address(addr: int) -> int:
        if addr not in block_at:
            raise CfgError(f"{fn.name}: target {addr:#x} is not a block leader")
        return block_at[addr].bid

    for blk in ordered:
        last = blk.instructions[-1] if blk.instructions else None
        base = last.opcode.base if last else None
        if base in TERMINATOR_BASES:
            blk.instructions.pop()
            blk.terminator = _lower_terminator(fn, last, blk, next_block,
                                               block_of_address)
        else:
            nb = next_block[blk.bid]
            if nb is None:
                blk.terminator = Exit()
                fn.diagnose(f"{blk.label()}: no terminator at function end, "
                            f"implicit EXIT appended")
            else:
                blk.terminator = Br(nb)
        for inst in blk.instructions:
            if inst.is_convergence() and blk.convergence_meta is None:
                blk.convergence_meta = str(inst.opcode)

    fn.raw_instructions = []
    fn.advance_phase(Phase.CFG_BUILT)
    rewire_edges(fn)
    remove_exit_padding(fn)
    return fn


def _lower_terminator(fn, inst, blk, next_block, block_of_address):
    base = inst.opcode.base
    nb = next_block[blk.bid]

    def fallthrough():
        if nb is None:
            raise CfgError(
                f"{fn.name}: predicated {base} at {inst.address:#x} "
                f"has no fall-through instruction"
            )
        return nb

    if base == "EXIT":
        if inst.guard is None:
            return Exit()
        return CondExit(inst.guard, fallthrough())

    if base == "RET":
        if inst.guard is not None:
            fn.diagnose(f"{blk.label()}: guarded RET treated as unconditional")
        return Ret()

    if base == "BRA":
        target = block_of_address(inst.meta["resolved_target"])
        cond_operand = next((u for u in inst.uses if isinstance(u, Pred)), None)
        if cond_operand is not None:
            # dual-predicate branch: guard and condition are separate
            return CondBr(cond_operand, target, fallthrough(), guard=inst.guard)
        if inst.guard is None:
            return Br(target)
        return CondBr(inst.guard, target, fallthrough())

    if base == "CALL":
        raw_target = fn.meta.get("call_targets", {}).get(
            inst.address, _branch_target(inst))
        target = realign_address(fn, raw_target)
        if target is None:
            raise CfgError(f"{fn.name}: CALL target {raw_target:#x} not found")
        ret_addr = fn.blocks[nb].start_address if nb is not None else None
        if ret_addr is None:
            raise CfgError(f"{fn.name}: CALL at {inst.address:#x} has no return point")
        return CallRet(target, ret_addr, return_block=nb,
                       site_address=inst.address)

    raise AssertionError(base)


def rewire_edges(fn: LiftedFunction):
    for blk in fn.blocks.values():
        blk.preds = []
        blk.succs = []
    for blk in fn.blocks.values():
        succ = list(dict.fromkeys(blk.terminator.successors()))
        blk.succs = succ
        for s in succ:
            fn.blocks[s].preds.append(blk.bid)


def reachable_blocks(fn: LiftedFunction, start: int | None = None) -> set[int]:
    start = fn.entry if start is None else start
    seen: set[int] = set()
    work = [start]
    while work:
        b = work.pop()
        if b in seen or b not in fn.blocks:
            continue
        seen.add(b)
        work.extend(fn.blocks[b].succs)
    return seen


def remove_exit_padding(fn: LiftedFunction):
    """Drop compiler-inserted infinite-loop padding after EXIT.

    Padding blocks are unconditional self-loops with no predecessors other
    than themselves; a real loop keeps an entry edge (or is the entry).
    """
    drop = []
    for blk in fn.blocks.values():
        if blk.bid == fn.entry:
            continue
        t = blk.terminator
        if isinstance(t, Br) and t.target == blk.bid and \
                set(blk.preds) <= {blk.bid} and not blk.instructions:
            drop.append(blk.bid)
    for bid in drop:
        del fn.blocks[bid]
        fn.diagnose(f"bb{bid}: EXIT padding self-loop removed")
    if drop:
        rewire_edges(fn)


# ---------------------------------------------------------------------------
# device-function recovery
# ---------------------------------------------------------------------------

@dataclass
class DeviceFunctionInfo:
    entry_address: int
    entry_block: int
    blocks: set[int]
    call_sites: list[tuple[int, int]]  # (caller block, call site address)
    disposition: str                   # "inline" | "extract"


def recover_device_functions(
    fn: LiftedFunction, inline_threshold: int = 16
) -> tuple[LiftedFunction, list[LiftedFunction]]:
    """Turn disconnected CALL-target subgraphs into inlined or extracted code."""
    fn.require_phase(Phase.CFG_BUILT)
    extracted: list[LiftedFunction] = []

    for _round in range(10):
        call_blocks = [b for b in fn.block_order()
                       if isinstance(b.terminator, CallRet)]
        if not call_blocks:
            break

        # group call sites by target entry block
        by_target: dict[int, list[BasicBlock]] = {}
        for blk in call_blocks:
            taddr = blk.terminator.target_address
            entry = _block_at_address(fn, taddr)
            if entry is None:
                raise CfgError(
                    f"{fn.name}: unresolved CALL target {taddr:#x} "
                    f"(bb{blk.bid}); not in manifest or function body"
                )
            by_target.setdefault(entry, []).append(blk)

        for entry_bid, sites in by_target.items():
            body = reachable_blocks(fn, entry_bid)
            info = DeviceFunctionInfo(
                fn.blocks[entry_bid].start_address, entry_bid, body,
                [(b.bid, b.terminator.site_address) for b in sites],
                "extract" if len(sites) > inline_threshold else "inline",
            )
            fn.meta.setdefault("device_functions", []).append(info)
            if info.disposition == "extract":
                extracted.append(_extract(fn, info))
            else:
                for site in sites:
                    _inline_at(fn, info, site)
            # original callee blocks are now dead
            for bid in body:
                fn.blocks.pop(bid, None)
        rewire_edges(fn)
    else:
        raise CfgError(f"{fn.name}: call recovery did not converge (recursion?)")

    # anything still unreachable is dead code: report and drop
    live = reachable_blocks(fn)
    for bid in sorted(set(fn.blocks) - live):
        fn.diagnose(f"bb{bid}: unreachable block with no call site, dropped")
        del fn.blocks[bid]
    rewire_edges(fn)
    return fn, extracted


def _block_at_address(fn: LiftedFunction, addr: int) -> int | None:
    for blk in fn.blocks.values():
        if blk.start_address == addr:
            return blk.bid
    return None


def _clone_subgraph(fn: LiftedFunction, info: DeviceFunctionInfo,
                    into: LiftedFunction, return_bid: int | None):
    """Clone callee blocks into ``into``; RET becomes Br(return_bid)."""
    mapping: dict[int, int] = {}
    for bid in sorted(info.blocks):
        src = fn.blocks[bid]
        clone = into.new_block(src.start_address)
        clone.convergence_meta = src.convergence_meta
        mapping[bid] = clone.bid
    for bid in sorted(info.blocks):
        src = fn.blocks[bid]
        dst = into.blocks[mapping[bid]]
        for inst in src.instructions:
            c = into.make_inst(inst.opcode, [_copy_op(o) for o in inst.defs],
                               [_copy_op(o) for o in inst.uses],
                               guard=_copy_op(inst.guard),
                               aux=[_copy_op(o) for o in inst.aux_defs],
                               raw=inst.raw, **dict(inst.meta))
            dst.instructions.append(c)
        t = src.terminator
        if isinstance(t, Ret):
            if return_bid is None:
                dst.terminator = Ret()
            else:
                dst.terminator = Br(return_bid)
        elif isinstance(t, Br):
            dst.terminator = Br(mapping[t.target])
        elif isinstance(t, CondBr):
            dst.terminator = CondBr(_copy_op(t.cond), mapping[t.taken],
                                    mapping[t.fallthrough], guard=_copy_op(t.guard))
        elif isinstance(t, CondExit):
            dst.terminator = CondExit(_copy_op(t.cond), mapping[t.fallthrough])
        elif isinstance(t, Exit):
            dst.terminator = Exit()
        elif isinstance(t, CallRet):
            # nested call: keep for the next recovery round
            dst.terminator = CallRet(t.target_address, t.return_address,
                                     t.return_block)
        else:
            raise AssertionError(t)
    return mapping


def _copy_op(op):
    if op is None:
        return None
    import copy

    return copy.deepcopy(op)


def _inline_at(fn: LiftedFunction, info: DeviceFunctionInfo, site: BasicBlock):
    term: CallRet = site.terminator
    mapping = _clone_subgraph(fn, info, fn, term.return_block)
    site.terminator = Br(mapping[info.entry_block])


def _extract(fn: LiftedFunction, info: DeviceFunctionInfo) -> LiftedFunction:
    from .operands import Imm, Opcode

    dev = LiftedFunction(f"{fn.name}.dev_{info.entry_address:x}", fn.arch,
                         fn.param_base)
    dev.advance_phase(Phase.CFG_BUILT)
    mapping = _clone_subgraph(fn, info, dev, None)
    dev.entry = mapping[info.entry_block]
    rewire_edges(dev)

    for site_bid, _addr in info.call_sites:
        site = fn.blocks[site_bid]
        term: CallRet = site.terminator
        call = fn.make_inst(
            Opcode("CALL", ("ABS", "NOINC")), [],
            [Imm(info.entry_address, hex(info.entry_address))],
        )
        call.meta["opaque_call"] = dev.name
        site.instructions.append(call)
        site.terminator = Br(term.return_block)
    return dev
