"""Characterization metrics over lifted functions.

Per function: instruction counts by recovery role (seeding /
transparent / conversion), value counts by provenance (seeded /
propagated / conflicted / fallback), the final-type histogram, the
propagation-reach histogram (hops from the nearest seeding endpoint,
hop 0 excluded), the fixpoint iteration count, and the categorized
type-boundary records.

Reports render as line-oriented key-value text (machine-readable) or a
human table.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

from .operands import Imm, ValueRef
from .ssir import Instruction, LiftedFunction, Provenance
from .typerec import ConflictRecord

BOUNDARY_CATEGORIES = (
    "Branch merge", "Fast math chains", "IEEE 754 field ops",
    "Float reconstruction", "Analysis artifacts", "Unclassified",
)

_MANTISSA_MASK = 0x7FFFFF
_EXPONENT_MASK = 0x7F800000


@dataclass
class FunctionReport:
    name: str
    status: str = "ok"
    instructions: int = 0
    roles: Counter = field(default_factory=Counter)
    provenance: Counter = field(default_factory=Counter)
    types: Counter = field(default_factory=Counter)
    reach: Counter = field(default_factory=Counter)
    iterations: int = 0
    boundaries: Counter = field(default_factory=Counter)
    conflicts: int = 0
    ablation: str = "b0"


@dataclass
class LiftReport:
    ablation: str = "b0"
    functions: list[FunctionReport] = field(default_factory=list)

    def aggregate(self) -> FunctionReport:
        total = FunctionReport("TOTAL", ablation=self.ablation)
        for fr in self.functions:
            total.instructions += fr.instructions
            total.roles.update(fr.roles)
            total.provenance.update(fr.provenance)
            total.types.update(fr.types)
            total.reach.update(fr.reach)
            total.iterations = max(total.iterations, fr.iterations)
            total.boundaries.update(fr.boundaries)
            total.conflicts += fr.conflicts
        return total


def _inst_by_iid(fn: LiftedFunction) -> dict[int, Instruction]:
    out = {}
    for blk in fn.block_order():
        for inst in blk.instructions:
            out[inst.iid] = inst
    return out


def classify_boundaries(fn: LiftedFunction,
                        records: list[ConflictRecord]) -> list[tuple[ConflictRecord, str]]:
    """Assign exactly one taxonomy category to each conflict record."""
    from . import lattice as L
    from .ssa import build_defuse

    insts = _inst_by_iid(fn)
    du = build_defuse(fn)
    out = []
    for rec in records:
        use_inst = insts.get(rec.use_iid) if rec.use_iid is not None else None
        def_inst = du.def_inst.get(rec.vid)
        rec.category = _categorize(fn, du, rec, use_inst, def_inst)
        out.append((rec, rec.category))
    return out


def _categorize(fn, du, rec, use_inst, def_inst) -> str:
    from . import lattice as L

    if _in_fast_math_chain(fn, du, use_inst) or \
            _in_fast_math_chain(fn, du, def_inst):
        return "Fast math chains"
    for inst in (use_inst, def_inst):
        if inst is not None and inst.opcode.base in ("LOP3", "LOP"):
            imms = {u.bits & 0xFFFFFFFF for u in inst.uses
                    if isinstance(u, Imm)}
            if _MANTISSA_MASK in imms:
                return "IEEE 754 field ops"
            if _EXPONENT_MASK in imms:
                return "Float reconstruction"
    if (use_inst is not None and use_inst.opcode.base == "PHI") or \
            (def_inst is not None and def_inst.opcode.base == "PHI"):
        return "Branch merge"
    if def_inst is not None and def_inst.opcode.base == "UNPACK64" and \
            def_inst.opcode.has_mod("LO"):
        src = def_inst.uses[0]
        if isinstance(src, ValueRef):
            src_def = du.def_inst.get(src.vid)
            if src_def is not None and src_def.opcode.base in ("IMAD64",) and \
                    rec.use_mask & L.FLOAT32:
                return "Analysis artifacts"
    return "Unclassified"


def _in_fast_math_chain(fn, du, inst) -> bool:
    """I2F -> MUFU.RCP -> IADD/IADD3 -> F2I context around an instruction."""
    if inst is None:
        return False
    if inst.opcode.base in ("IADD", "IADD3"):
        for ref, _slot in _value_uses(inst):
            d = du.def_inst.get(ref.vid)
            if d is not None and d.opcode.base == "MUFU" and \
                    d.opcode.has_mod("RCP"):
                return True
    if inst.opcode.base == "MUFU" and inst.opcode.has_mod("RCP"):
        return True
    if inst.opcode.base == "F2I":
        return True
    return False


def _value_uses(inst):
    from .ssa import value_operands

    return list(value_operands(inst))


def function_report(fn: LiftedFunction, ablation: str = "b0") -> FunctionReport:
    fr = FunctionReport(fn.name, ablation=ablation)
    st = fn.meta.get("type_state")
    roles = st.roles if st else {}
    for blk in fn.block_order():
        for inst in blk.instructions:
            fr.instructions += 1
            fr.roles[roles.get(inst.iid, "seeding")] += 1
    # normalize role key used by seeding ("seed" -> "seeding")
    if "seed" in fr.roles:
        fr.roles["seeding"] += fr.roles.pop("seed")

    for info in fn.values.values():
        fr.provenance[info.provenance.value] += 1
        if info.final_type:
            fr.types[info.final_type] += 1
        if info.provenance == Provenance.PROPAGATED and info.reach:
            fr.reach[info.reach] += 1
    fr.iterations = fn.meta.get("type_iterations", 0)

    records = fn.meta.get("conflict_records", [])
    fr.conflicts = len(records)
    for _rec, cat in classify_boundaries(fn, records):
        fr.boundaries[cat] += 1
    for b in fn.meta.get("pattern_boundaries", []):
        fr.boundaries[b.get("category", "Unclassified")] += 1
        fr.conflicts += 0  # normalized boundaries are not conflicts
    return fr


def report(funcs: list[LiftedFunction], ablation: str = "b0") -> LiftReport:
    rep = LiftReport(ablation)
    for fn in funcs:
        rep.functions.append(function_report(fn, ablation))
    return rep


# ---------------------------------------------------------------------------
# rendering
# ---------------------------------------------------------------------------

def render_kv(rep: LiftReport) -> str:
    lines = [f"ablation = {rep.ablation}"]
    for fr in rep.functions + [rep.aggregate()]:
        p = f"func.{fr.name}"
        lines.append(f"{p}.instructions = {fr.instructions}")
        for role in ("seeding", "transparent", "conversion"):
            lines.append(f"{p}.role.{role} = {fr.roles.get(role, 0)}")
        for prov in ("seeded", "propagated", "conflicted", "fallback", "unset"):
            lines.append(f"{p}.provenance.{prov} = {fr.provenance.get(prov, 0)}")
        for ty in sorted(fr.types):
            lines.append(f"{p}.type.{ty} = {fr.types[ty]}")
        for hop in sorted(fr.reach):
            lines.append(f"{p}.reach.{hop} = {fr.reach[hop]}")
        lines.append(f"{p}.iterations = {fr.iterations}")
        lines.append(f"{p}.conflicts = {fr.conflicts}")
        for cat in BOUNDARY_CATEGORIES:
            if fr.boundaries.get(cat):
                key = cat.lower().replace(" ", "_")
                lines.append(f"{p}.boundary.{key} = {fr.boundaries[cat]}")
    return "\n".join(lines) + "\n"


def render_table(rep: LiftReport) -> str:
    headers = ["function", "insts", "seed", "transp", "conv", "seeded",
               "propag", "confl", "fallbk", "iters", "bounds"]
    rows = []
    for fr in rep.functions + [rep.aggregate()]:
        rows.append([
            fr.name, fr.instructions,
            fr.roles.get("seeding", 0), fr.roles.get("transparent", 0),
            fr.roles.get("conversion", 0),
            fr.provenance.get("seeded", 0), fr.provenance.get("propagated", 0),
            fr.provenance.get("conflicted", 0),
            fr.provenance.get("fallback", 0),
            fr.iterations, sum(fr.boundaries.values()),
        ])
    widths = [max(len(str(r[i])) for r in rows + [headers])
              for i in range(len(headers))]
    fmt = "  ".join(f"{{:<{w}}}" for w in widths)
    out = [fmt.format(*headers), fmt.format(*["-" * w for w in widths])]
    out.extend(fmt.format(*[str(c) for c in row]) for row in rows)
    return "\n".join(out) + "\n"
