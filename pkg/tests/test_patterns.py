import random

import numpy as np
import pytest

from conftest import GOLDENS, emit_one, lift_corpus_file, lift_snippet

from sasslift import frontend
from sasslift.cfg import build_cfg
from sasslift.interp import parse_launch, run_kernel
from sasslift.patterns import (
    AGGREGATION_PATTERNS, Bindings, describe_patterns, match_patterns,
    select_matches,
)
from sasslift.pipeline import PipelineConfig, lift_text
from sasslift.ssa import build_defuse, construct_psi, ssa_rename
from sasslift.ssir import dump


def ssa_fn(text, arch="sm90"):
    src = frontend.parse_module(text, arch)[0]
    fn = frontend.build_function(src, arch)
    build_cfg(fn)
    construct_psi(fn)
    return ssa_rename(fn)


# ---------------------------------------------------------------------------
# golden reproductions of the aggregation table
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("corpus,func", [
    ("golden/xmad_sm52.sass", "xmad_pair"),
    ("golden/xmad_sm52.sass", "xmad_addr"),
    ("golden/pairs64.sass", "pair64"),
    ("golden/pairs64.sass", "cmp64"),
    ("golden/carrysub_listing.sass", "carrysub_listing"),
])
def test_pattern_goldens(corpus, func):
    lift = lift_corpus_file(corpus)
    fn = next(f.function for f in lift.functions if f.name == func)
    golden = (GOLDENS / f"{func}.txt").read_text()
    assert dump(fn) == golden


def test_xmad_triple_rewrites_to_single_imad():
    lift = lift_corpus_file("golden/xmad_sm52.sass")
    fn = next(f.function for f in lift.functions if f.name == "xmad_pair")
    bases = [i.opcode.base for b in fn.block_order() for i in b.instructions]
    assert bases == ["IMAD"]


def test_xmad_untouched_on_sm90():
    (fn,) = lift_snippet("""\
XMAD.MRG R2, R0, R0.H1, RZ
XMAD R3, R0, R2, RZ
XMAD.PSL.CBCC R4, R0.H1, R3, R1
EXIT
""", arch="sm90")
    bases = [i.opcode.base for b in fn.block_order() for i in b.instructions]
    assert bases.count("XMAD") == 3


# ---------------------------------------------------------------------------
# matcher behavior
# ---------------------------------------------------------------------------

def test_block_of_fadds_matches_nothing():
    fn = ssa_fn("FADD R0, R1, R2\nFADD R3, R0, R1\nEXIT\n")
    du = build_defuse(fn)
    blk = fn.blocks[fn.entry]
    assert match_patterns(fn, blk, AGGREGATION_PATTERNS, du) == []


def test_two_interleaved_pairs_two_matches():
    fn = ssa_fn("""\
IADD3 R1, P1, R2, 0x4, RZ
IADD3 R11, P2, R12, 0x8, RZ
IADD3.X R4, RZ, R6, RZ, P1, PT
IADD3.X R14, RZ, R16, RZ, P2, PT
EXIT
""")
    du = build_defuse(fn)
    blk = fn.blocks[fn.entry]
    pat = [p for p in AGGREGATION_PATTERNS if p.name == "iadd3.pair"]
    matches = select_matches(match_patterns(fn, blk, pat, du))
    assert len(matches) == 2
    groups = [frozenset(i.iid for i in m.insts) for m in matches]
    assert groups[0].isdisjoint(groups[1])


def test_unification_rejects_inconsistent_rebinding():
    # the .X consumes P2, but the producing IADD3 defines P1: no match
    fn = ssa_fn("""\
IADD3 R1, P1, R2, 0x4, RZ
IADD3.X R4, RZ, R6, RZ, P2, PT
EXIT
""")
    du = build_defuse(fn)
    pat = [p for p in AGGREGATION_PATTERNS if p.name == "iadd3.pair"]
    assert match_patterns(fn, fn.blocks[fn.entry], pat, du) == []


def test_carry_escape_refuses_aggregation():
    # a third instruction consumes the carry predicate: rewrite must refuse
    (fn,) = lift_snippet("""\
IADD3 R1, P1, R2, 0x4, RZ
IADD3.X R4, RZ, R6, RZ, P1, PT
SEL R8, 0x1, RZ, P1
EXIT
""", arch="sm90")
    bases = [i.opcode.base for b in fn.block_order() for i in b.instructions]
    assert "IADD364" not in bases
    assert any("refused" in d for d in fn.diagnostics)


def test_normalization_idempotent():
    from conftest import CORPUS

    from sasslift.patterns import (apply_aggregations, normalize_reciprocal,
                                   normalize_xmad)

    def run_passes(fn):
        normalize_xmad(fn)
        normalize_reciprocal(fn)
        apply_aggregations(fn)

    for rel in ("basic/carrysub.sass", "basic/fastdiv.sass",
                "basic/sumloop.sass"):
        path = CORPUS / rel
        man = frontend.parse_manifest(path.with_suffix(".manifest").read_text())
        src = frontend.parse_module(path.read_text(), man.arch, man)[0]
        fn = frontend.build_function(src, man.arch, man)
        build_cfg(fn)
        construct_psi(fn)
        fn = ssa_rename(fn)
        run_passes(fn)
        first = dump(fn)
        run_passes(fn)
        assert dump(fn) == first, f"{rel}: normalization not idempotent"


# ---------------------------------------------------------------------------
# rewrite soundness: aggregated vs instruction-by-instruction execution
# ---------------------------------------------------------------------------

CARRY_KERNEL = """\
.text.k:
S2R R0, SR_TID.X
S2R R1, SR_CTAID.X
IMAD R0, R1, c[0x0][0x0], R0
MOV R9, 0x8
IMAD.WIDE R2, R0, R9, c[0x0][0x210]
LDG.E.64 R4, [R2]
IMAD.WIDE R6, R0, R9, c[0x0][0x218]
LDG.E.64 R10, [R6]
IADD3 R12, P1, R4, R10, RZ
IADD3.X R13, R5, R11, RZ, P1, !PT
IMAD.WIDE R14, R0, R9, c[0x0][0x220]
STG.E.64 R12, [R14]
ISETP.GE.U32.AND P2, PT, R12, R10, PT
ISETP.GE.AND.EX P2, PT, R13, R11, PT, P2
SEL R16, 0x1, RZ, P2
MOV R17, 0x4
IMAD.WIDE R18, R0, R17, c[0x0][0x228]
STG.E [R18], R16
EXIT
"""


def test_aggregation_soundness_1000_random_operands():
    """64-bit add + compare: aggregated and per-instruction lifts agree
    with 64-bit reference arithmetic, bitwise, on 1000 random operands."""
    rng = np.random.default_rng(7)
    n = 1024
    a = rng.integers(0, 2 ** 64, size=n, dtype=np.uint64)
    b = rng.integers(0, 2 ** 64, size=n, dtype=np.uint64)
    total = a + b  # wraps mod 2^64
    pred = (total.view(np.int64) >= b.view(np.int64)).astype(np.uint32)

    launch = f"""\
kernel k
arch sm90
grid 8 1 1
block 128 1 1
buffer A u64[{n}] = {' '.join(str(x) for x in a)}
buffer B u64[{n}] = {' '.join(str(x) for x in b)}
buffer SUM u64[{n}] = zeros
buffer P u32[{n}] = zeros
param 0x210 ptr A
param 0x218 ptr B
param 0x220 ptr SUM
param 0x228 ptr P
expect SUM u64 = {' '.join(str(x) for x in total)}
expect P u32 = {' '.join(str(x) for x in pred)}
"""
    for aggregate in (True, False):
        lift = lift_text(CARRY_KERNEL, PipelineConfig(arch="sm90",
                                                      aggregate=aggregate))
        assert lift.all_ok, [f.error for f in lift.functions]
        ir = emit_one(lift.ok()[0])
        res = run_kernel(ir, "k", parse_launch(launch))
        assert res.passed, (aggregate,
                            [c.detail for c in res.checks if not c.passed])


def test_aggregated_forms_present():
    lift = lift_text(CARRY_KERNEL, PipelineConfig(arch="sm90"))
    fn = lift.ok()[0]
    bases = {i.opcode.base for b in fn.block_order() for i in b.instructions}
    assert "IADD364" in bases and "ISETP64" in bases


# ---------------------------------------------------------------------------
# reciprocal normalization and CUDA-object tagging
# ---------------------------------------------------------------------------

def test_reciprocal_chain_gets_bitcasts():
    fn = lift_corpus_file("basic/fastdiv.sass").ok()[0]
    bases = [i.opcode.base for b in fn.block_order() for i in b.instructions]
    assert bases.count("BITCAST") >= 2
    bounds = fn.meta.get("pattern_boundaries", [])
    assert any(b["category"] == "Fast math chains" for b in bounds)


def test_isolated_mufu_untouched():
    (fn,) = lift_snippet("MUFU.RCP R4, R5\nEXIT\n")
    bases = [i.opcode.base for b in fn.block_order() for i in b.instructions]
    assert "BITCAST" not in bases


def test_reciprocal_chain_with_iadd():
    (fn,) = lift_snippet("""\
I2F.F32.U32 R4, R5
MUFU.RCP R4, R4
IADD R4, R4, -0x1
F2I.FTZ.U32.F32.TRUNC R6, R4
EXIT
""")
    bases = [i.opcode.base for b in fn.block_order() for i in b.instructions]
    assert bases.count("BITCAST") == 2


def test_cuda_object_tags():
    (fn,) = lift_snippet("""\
BAR.SYNC 0x0
WARPSYNC 0xffffffff
SHFL.DOWN PT, R4, R5, 0x1, 0x1f
EXIT
""")
    tags = {t[0] for t in fn.meta["cuda_objects"]}
    assert tags == {"block_sync", "warp_group", "collective"}
    (plain,) = lift_snippet("MOV R0, R1\nEXIT\n")
    assert plain.meta.get("cuda_objects") == []


def test_pattern_introspection_lists_all():
    text = describe_patterns()
    names = {line.split(":")[0] for line in text if not line.startswith(" ")}
    assert {"iadd3.pair", "isetp.pair", "lea.pair", "imad.wide",
            "mov.pair", "shf.cast64", "xmad.mul3.a"} <= names


SHIFT_KERNEL = """\
.text.sh:
S2R R0, SR_TID.X
MOV R9, 0x8
IMAD.WIDE R2, R0, R9, c[0x0][0x210]
LDG.E.64 R4, [R2]
MOV R9, 0x4
IMAD.WIDE R10, R0, R9, c[0x0][0x218]
LDG.E R6, [R10]
SHF.L.U64.HI R13, R4, R6, R5
SHF.L.U32 R12, R4, R6, RZ
MOV R9, 0x8
IMAD.WIDE R14, R0, R9, c[0x0][0x220]
STG.E.64 R12, [R14]
SHF.R.U32.HI R17, R4, R6, R5
SHF.R.U32 R16, R4, R6, R5
IMAD.WIDE R18, R0, R9, c[0x0][0x228]
STG.E.64 R16, [R18]
EXIT
"""


def test_shift_aggregation_soundness_random_operands():
    """SHL64/SHR64 match 64-bit reference shifts, bitwise, with and
    without aggregation, on random operands and shift amounts."""
    rng = np.random.default_rng(21)
    n = 256
    vals = rng.integers(0, 2 ** 64, size=n, dtype=np.uint64)
    shifts = rng.integers(1, 32, size=n, dtype=np.uint32)
    left = vals << shifts.astype(np.uint64)
    right = vals >> shifts.astype(np.uint64)
    launch = f"""\
kernel sh
arch sm90
grid 1 1 1
block 256 1 1
buffer V u64[{n}] = {' '.join(str(x) for x in vals)}
buffer S u32[{n}] = {' '.join(str(x) for x in shifts)}
buffer L u64[{n}] = zeros
buffer R u64[{n}] = zeros
param 0x210 ptr V
param 0x218 ptr S
param 0x220 ptr L
param 0x228 ptr R
expect L u64 = {' '.join(str(x) for x in left)}
expect R u64 = {' '.join(str(x) for x in right)}
"""
    for aggregate in (True, False):
        lift = lift_text(SHIFT_KERNEL,
                         PipelineConfig(arch="sm90", aggregate=aggregate))
        assert lift.all_ok, [f.error for f in lift.functions]
        fn = lift.ok()[0]
        bases = {i.opcode.base for b in fn.block_order()
                 for i in b.instructions}
        if aggregate:
            assert "SHL64" in bases and "SHR64" in bases
        ir = emit_one(fn)
        res = run_kernel(ir, "sh", parse_launch(launch))
        assert res.passed, (aggregate,
                            [c.detail for c in res.checks if not c.passed])
