from conftest import lift_corpus_file, lift_snippet

from sasslift.metrics import (
    BOUNDARY_CATEGORIES, classify_boundaries, function_report, render_kv,
    render_table, report,
)


def test_roles_sum_to_total_instructions():
    fn = lift_corpus_file("basic/vecadd.sass").ok()[0]
    fr = function_report(fn)
    assert sum(fr.roles.values()) == fr.instructions
    assert fr.roles["seeding"] > 0


def test_provenance_sums_to_total_values():
    fn = lift_corpus_file("basic/saxpy.sass").ok()[0]
    fr = function_report(fn)
    assert sum(fr.provenance.values()) == len(fn.values)


def test_reach_histogram_three_mov_chain():
    (fn,) = lift_snippet("""\
FADD R1, R0, 1.0
MOV R2, R1
MOV R3, R2
MOV R4, R3
EXIT
""", aggregate=False)
    fr = function_report(fn)
    # evidence travels from the FADD definition: one hop per move
    assert fr.reach == {1: 1, 2: 1, 3: 1}


def test_iteration_count_reported():
    fn = lift_corpus_file("basic/vecadd.sass").ok()[0]
    fr = function_report(fn)
    assert fr.iterations == fn.meta["type_iterations"]


def test_listing1_exactly_one_conflict():
    (fn,) = lift_snippet("""\
FADD R25, R25, 1e-8
MUFU.RSQ R24, R25
IADD3 R0, R25, -0xd000000, RZ
ISETP.GT.AND P0, PT, R0, 0x727fffff, PT
@!P0 BRA 0x340
0x340: FMUL R0, R25, R24
EXIT
""")
    fr = function_report(fn)
    assert fr.provenance["conflicted"] == 1
    assert fr.conflicts == 1


def test_boundary_category_ieee_field_ops():
    (fn,) = lift_snippet("""\
FADD R4, R0, 1.0
LOP3.LUT R5, R4, 0x7fffff, RZ, 0xc0
IADD3 R6, R5, 0x1, RZ
STG.E [R8], R6
EXIT
""")
    recs = fn.meta["conflict_records"]
    assert recs
    cats = {c for _, c in classify_boundaries(fn, recs)}
    assert "IEEE 754 field ops" in cats


def test_boundary_category_float_reconstruction():
    (fn,) = lift_snippet("""\
FADD R4, R0, 1.0
LOP3.LUT R5, R4, 0x7f800000, RZ, 0xc0
IADD3 R6, R5, 0x1, RZ
STG.E [R8], R6
EXIT
""")
    recs = fn.meta["conflict_records"]
    cats = {c for _, c in classify_boundaries(fn, recs)}
    assert "Float reconstruction" in cats


def test_boundary_category_fast_math():
    fn = lift_corpus_file("basic/fastdiv.sass").ok()[0]
    fr = function_report(fn)
    assert fr.boundaries["Fast math chains"] >= 1


def test_boundary_category_branch_merge():
    (fn,) = lift_snippet("""\
0x00: ISETP.NE.AND P0, PT, R3, RZ, PT
0x10: @P0 BRA 0x40
0x20: FADD R0, R1, 1.0
0x30: BRA 0x60
0x40: IADD3 R2, R2, 0x1, RZ
0x50: LOP3.LUT R0, R2, 0xffff, RZ, 0xc0
0x60: FMUL R4, R0, R0
0x70: EXIT
""")
    recs = fn.meta["conflict_records"]
    cats = {c for _, c in classify_boundaries(fn, recs)}
    assert "Branch merge" in cats


def test_unmatched_conflict_is_unclassified():
    (fn,) = lift_snippet("""\
FADD R4, R0, 1.0
IADD3 R6, R4, 0x12345, RZ
STG.E [R8], R6
EXIT
""")
    recs = fn.meta["conflict_records"]
    cats = {c for _, c in classify_boundaries(fn, recs)}
    assert cats == {"Unclassified"}


def test_crypto_corpus_zero_boundaries():
    for rel in ("crypto/xorshift.sass", "crypto/mix.sass"):
        fn = lift_corpus_file(rel).ok()[0]
        fr = function_report(fn)
        assert sum(fr.boundaries.values()) == 0, rel
        assert fr.provenance["conflicted"] == 0


def test_category_assignment_deterministic():
    fn = lift_corpus_file("basic/fastdiv.sass").ok()[0]
    a = function_report(fn).boundaries
    b = function_report(fn).boundaries
    assert a == b


def test_reach_bounded_by_longest_transparent_chain():
    for rel in ("basic/vecadd.sass", "crypto/xorshift.sass",
                "basic/saxpy.sass"):
        fn = lift_corpus_file(rel).ok()[0]
        fr = function_report(fn)
        if fr.reach:
            assert max(fr.reach) <= fr.roles.get("transparent", 0) + 1


def test_render_formats():
    fns = lift_corpus_file("basic/vecadd.sass").ok()
    rep = report(fns)
    kv = render_kv(rep)
    assert "func.vecadd.instructions" in kv
    assert "func.TOTAL.iterations" in kv
    table = render_table(rep)
    assert "vecadd" in table and "TOTAL" in table
    assert render_kv(rep) == render_kv(report(fns))  # deterministic


def test_boundary_category_analysis_artifacts():
    (fn,) = lift_snippet("""\
S2R R0, SR_TID.X
MOV R9, 0x4
IMAD.WIDE R2, R0, R9, c[0x0][0x160]
IADD3 R5, R2, 0x1, RZ
FMUL R6, R2, R2
STG.E [R8], R5
STG.E [R10], R6
EXIT
""")
    recs = fn.meta["conflict_records"]
    cats = {c for _, c in classify_boundaries(fn, recs)}
    assert "Analysis artifacts" in cats
