import pytest

from sasslift import frontend
from sasslift.frontend import (
    ExpansionError, Manifest, ParsedFunction, access_count, build_function,
    parse_instruction_line, parse_manifest, parse_module, parse_operand,
    render_sass,
)
from sasslift.operands import (
    ConstMem, Imm, MemRef, ParseError, Pred, Reg, SReg, SourceLine, UReg,
    ZeroReg, same_storage,
)
from sasslift.ssir import LiftedFunction


def parse_one(text, arch="sm75", normalize=False):
    fn = LiftedFunction("t", arch, 0x160)
    inst = parse_instruction_line(fn, SourceLine(0, text, None, 1))
    if normalize:
        out = []
        for i in frontend.normalize_instruction(fn, inst):
            frontend.expand_implicit_registers(i, arch)
            out.append(i)
        return fn, out
    return fn, [inst]


# ---------------------------------------------------------------------------
# operand parsing
# ---------------------------------------------------------------------------

def test_parse_register_flags():
    op = parse_operand("-R4")
    assert isinstance(op, Reg) and op.base == 4 and op.negated
    op = parse_operand("~UR7")
    assert isinstance(op, UReg) and op.index == 7 and op.bitnot
    op = parse_operand("|R3|")
    assert op.absolute
    op = parse_operand("R0.H1")
    assert op.half == "H1"
    op = parse_operand("R0.reuse")
    assert op.reuse


def test_parse_immediates():
    assert parse_operand("0x727fffff").bits == 0x727FFFFF
    neg = parse_operand("-0xd000000")
    assert neg.int_value(32) == -0xD000000
    f = parse_operand("1e-8")
    assert f.is_float and abs(f.float_value() - 1e-8) < 1e-12
    assert parse_operand("-0.5").float_value() == -0.5


def test_parse_constmem_and_memref():
    cm = parse_operand("c[0x0][0x2c]")
    assert isinstance(cm, ConstMem) and cm.bank == 0 and cm.offset == 0x2C
    cm = parse_operand("c[0x0][0x8].H1")
    assert cm.half == "H1"
    mem = parse_operand("[R2+0x10]")
    assert isinstance(mem, MemRef) and mem.base.base == 2 and mem.offset == 0x10
    mem = parse_operand("[R0.64+UR4]")
    assert mem.base.width == 2 and mem.ureg.index == 4


def test_parse_predicates_and_zero():
    p = parse_operand("!P0")
    assert isinstance(p, Pred) and p.index == 0 and p.negated
    assert parse_operand("PT").is_pt()
    assert isinstance(parse_operand("RZ"), ZeroReg)
    assert isinstance(parse_operand("SR_TID.X"), SReg)


def test_bad_operand_raises():
    with pytest.raises(ParseError):
        parse_operand("R999")
    with pytest.raises(ParseError):
        parse_operand("???")


# ---------------------------------------------------------------------------
# line parsing and def/use split
# ---------------------------------------------------------------------------

def test_listing_rsqrt_lines():
    _, (fadd,) = parse_one("FADD R25, R25, 1e-8")
    assert fadd.opcode.base == "FADD"
    assert [d.base for d in fadd.defs] == [25]
    assert isinstance(fadd.uses[1], Imm)

    _, (bra,) = parse_one("@!P0 BRA 0x340")
    assert bra.guard.negated and bra.guard.index == 0
    assert bra.uses[0].bits == 0x340


def test_isetp_dual_pred_defs():
    _, (inst,) = parse_one("ISETP.GT.AND P0, PT, R0, 0x727fffff, PT")
    assert inst.defs[0].index == 0
    assert inst.aux_defs[0].is_pt()
    assert len(inst.uses) == 3


def test_carry_out_split():
    _, (inst,) = parse_one("IADD3 R1, P1, PT, R2, 0x4, RZ", normalize=True)
    assert [d.base for d in inst.defs] == [1]
    # the PT write is a discard; the real carry-out lives in aux defs
    assert [a.index for a in inst.aux_defs] == [1]
    assert len(inst.uses) == 3


def test_iadd3_x_carry_in_is_use():
    _, (inst,) = parse_one("IADD3.X R4, RZ, R6, RZ, P1, PT")
    assert inst.aux_defs == []
    assert isinstance(inst.uses[3], Pred) and inst.uses[3].index == 1


def test_x4_scale_expansion():
    _, insts = parse_one("LDG.E.X4 R2, [R3]", normalize=True)
    assert [i.opcode.base for i in insts] == ["SHL", "LDG"]
    shl, ldg = insts
    mem = ldg.uses[0]
    assert mem.base.base == shl.defs[0].base
    assert not ldg.opcode.has_mod("X4")


def test_mov_unchanged():
    _, insts = parse_one("MOV R0, R1", normalize=True)
    assert len(insts) == 1 and render_sass(insts[0]) == "MOV R0, R1"


# ---------------------------------------------------------------------------
# implicit register expansion
# ---------------------------------------------------------------------------

def test_ldg64_expansion():
    _, (inst,) = parse_one("LDG.E.64 R4, [R2]", normalize=True)
    assert inst.defs[0].width == 2
    assert inst.uses[0].base.width == 2
    assert access_count(inst) == 4


def test_tensor_expansion_counts():
    _, (hmma,) = parse_one("HMMA.16816.F32 R20, R38, R57, R20",
                           normalize=True, arch="sm90")
    assert access_count(hmma) == 14
    _, (hgmma,) = parse_one("HGMMA.64x128x16.F32 R128, R192, R196, R128",
                            normalize=True, arch="sm90")
    assert access_count(hgmma) == 164


def test_unknown_tensor_shape_is_hard_error():
    fn = LiftedFunction("t", "sm90", 0x210)
    inst = parse_instruction_line(
        fn, SourceLine(0, "HMMA.999.F32 R0, R4, R8, R0", None, 1))
    with pytest.raises(ExpansionError):
        frontend.expand_implicit_registers(inst, "sm90")


def test_scalar_op_unchanged():
    _, (inst,) = parse_one("IADD3 R0, R1, R2, RZ", normalize=True)
    assert all(getattr(u, "width", 1) == 1 for u in inst.uses)
    assert access_count(inst) == 3


# ---------------------------------------------------------------------------
# special-register substitution
# ---------------------------------------------------------------------------

def test_sr_substitution_legacy():
    src = ParsedFunction("t", 0x140)
    src.lines = [SourceLine(0, "MOV R0, c[0x0][0x2c]", None, 1),
                 SourceLine(16, "IADD3 R1, R0, c[0x0][0x2c], RZ", None, 2)]
    fn = build_function(src, "sm52")
    bases = [i.opcode.base for i in fn.raw_instructions]
    assert bases[0] == "S2R"
    assert bases.count("S2R") == 1  # one read reused by both uses
    assert isinstance(fn.raw_instructions[0].uses[0], SReg)


def test_param_area_not_substituted():
    src = ParsedFunction("t", 0x160)
    src.lines = [SourceLine(0, "MOV R0, c[0x0][0x160]", None, 1)]
    fn = build_function(src, "sm75")
    assert fn.raw_instructions[0].opcode.base == "MOV"
    assert isinstance(fn.raw_instructions[0].uses[0], ConstMem)


# ---------------------------------------------------------------------------
# module / manifest parsing
# ---------------------------------------------------------------------------

def test_empty_input_is_empty_module():
    assert parse_module("", "sm75") == []


def test_function_markers_and_addresses():
    funcs = parse_module(
        ".text.a:\nMOV R0, R1\n.text.b:\n0x100: MOV R2, R3\n", "sm75")
    assert [f.name for f in funcs] == ["a", "b"]
    assert funcs[1].lines[0].address == 0x100


def test_address_must_increase():
    with pytest.raises(ParseError):
        parse_module("0x20: MOV R0, R1\n0x10: MOV R2, R3\n", "sm75")


def test_control_code_only_lines():
    funcs = parse_module(
        "0x10: MOV R0, R1\n0x20: /* 0xfe2 */\n0x30: EXIT\n", "sm75")
    assert funcs[0].control_addresses == [0x20]
    assert len(funcs[0].lines) == 2


def test_manifest_parsing():
    man = parse_manifest(
        "arch: sm90\nfunction k at 0x0\ncall_target 0x210 -> 0x780\n")
    assert man.arch == "sm90"
    assert man.functions == [("k", 0)]
    assert man.call_targets == {0x210: 0x780}
    with pytest.raises(ParseError):
        parse_manifest("nonsense directive\n")


def test_manifest_assigns_functions_by_range():
    man = Manifest(functions=[("lo", 0x0), ("hi", 0x100)])
    funcs = parse_module("0x0: MOV R0, R1\n0x100: MOV R2, R3\n", "sm75", man)
    assert [(f.name, len(f.lines)) for f in funcs] == [("lo", 1), ("hi", 1)]


def test_unknown_arch_rejected():
    from sasslift.arch import ArchError

    with pytest.raises(ArchError):
        parse_module("MOV R0, R1\n", "sm999")


def test_unknown_opcode_flagged_not_rejected():
    fn = LiftedFunction("t", "sm90", 0x210)
    inst = parse_instruction_line(
        fn, SourceLine(0, "QGMMA.64x128x32.F8 R0, R64, R96, R0", None, 1))
    assert inst.meta.get("unknown_opcode")
    assert fn.diagnostics


# ---------------------------------------------------------------------------
# round trip over the bundled corpus
# ---------------------------------------------------------------------------

def test_round_trip_corpus():
    from conftest import all_corpus_sass

    from sasslift import arch as archmod

    for path in all_corpus_sass():
        man_path = path.with_suffix(".manifest")
        man = parse_manifest(man_path.read_text()) if man_path.exists() else None
        arch = man.arch if man and man.arch else "sm75"
        for src in parse_module(path.read_text(), arch, man):
            for line in src.lines:
                fn = LiftedFunction("t", arch, archmod.param_base(arch))
                inst = parse_instruction_line(fn, line)
                text2 = render_sass(inst)
                inst2 = parse_instruction_line(
                    fn, SourceLine(line.address, text2, None, 0))
                assert _structurally_equal(inst, inst2), \
                    f"{line.text!r} -> {text2!r} did not round-trip"


def _structurally_equal(a, b):
    if str(a.opcode) != str(b.opcode):
        return False
    if (a.guard is None) != (b.guard is None):
        return False
    if a.guard is not None and not same_storage(a.guard, b.guard):
        return False
    for la, lb in ((a.defs, b.defs), (a.aux_defs, b.aux_defs),
                   (a.uses, b.uses)):
        if len(la) != len(lb):
            return False
        for oa, ob in zip(la, lb):
            if isinstance(oa, MemRef) != isinstance(ob, MemRef):
                return False
            if isinstance(oa, MemRef):
                if oa.offset != ob.offset:
                    return False
                continue
            if not same_storage(oa, ob):
                return False
    return True


def test_unknown_modifier_passes_through_with_note():
    _, (inst,) = parse_one("FADD.WEIRDMOD R0, R1, R2", normalize=True)
    assert inst.opcode.has_mod("WEIRDMOD")  # untouched
    assert "WEIRDMOD" in inst.meta.get("unknown_mods", [])
