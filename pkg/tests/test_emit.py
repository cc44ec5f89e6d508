import pytest

from conftest import all_corpus_sass, emit_one, lift_corpus_file, lift_snippet

from sasslift.emit import EmitConfig, emit_json, emit_module, float_hex
from sasslift.irmodel import parse_ir, verify_ir_text
from sasslift.pipeline import PipelineConfig, lift_text


def test_emission_deterministic():
    a = emit_one(lift_corpus_file("basic/vecadd.sass").ok()[0])
    b = emit_one(lift_corpus_file("basic/vecadd.sass").ok()[0])
    assert a == b


def test_corpus_emission_grammar_closure():
    for path in all_corpus_sass():
        man = path.with_suffix(".manifest")
        lift = lift_text(path.read_text(), PipelineConfig(),
                         man.read_text() if man.exists() else None)
        assert lift.all_ok, (path, [f.error for f in lift.functions])
        ir = emit_module(lift.ok())
        assert verify_ir_text(ir) == [], path


def test_void_signature_and_addrspaces():
    ir = emit_one(lift_corpus_file("basic/vecadd.sass").ok()[0])
    assert "define void @vecadd()" in ir
    assert "ptr addrspace(1)" in ir    # global loads/stores
    assert "ptr addrspace(4)" in ir    # constant-bank parameter loads


def test_shared_space_and_barrier():
    ir = emit_one(lift_corpus_file("basic/barrier_reduce.sass").ok()[0])
    assert "ptr addrspace(3)" in ir
    assert "@llvm.nvvm.barrier0()" in ir


def test_sreg_intrinsics():
    ir = emit_one(lift_corpus_file("basic/vecadd.sass").ok()[0])
    assert "@llvm.nvvm.read.ptx.sreg.tid.x()" in ir
    assert "@llvm.nvvm.read.ptx.sreg.ctaid.x()" in ir


def test_listing1_emission_shapes():
    (fn,) = lift_snippet("""\
FADD R25, R25, 1e-8
MUFU.RSQ R24, R25
IADD3 R0, R25, -0xd000000, RZ
ISETP.GT.AND P0, PT, R0, 0x727fffff, PT
@!P0 BRA 0x340
0x340: FMUL R0, R25, R24
EXIT
""")
    ir = emit_one(fn)
    assert "fadd float" in ir
    assert "@sass.rsq.approx.f32" in ir
    assert ir.count("bitcast float") == 1  # exactly one boundary cast
    assert "fmul float" in ir
    assert "br i1" in ir
    assert "icmp sgt" in ir


def test_select_chain_emitted_as_select():
    ir = emit_one(lift_corpus_file("basic/relu.sass").ok()[0])
    assert "select i1" in ir


def test_phi_emitted():
    ir = emit_one(lift_corpus_file("basic/sumloop.sass").ok()[0])
    assert "phi " in ir


def test_mma_emission_vectors_and_intrinsics():
    lift = lift_corpus_file("golden/tensorish.sass")
    ir = emit_module(lift.ok())
    assert "@llvm.nvvm.mma.m16n8k16.f32.f16" in ir
    assert "@llvm.nvvm.mma.m64n128k16.f32.f16" in ir
    assert "<8 x half>" in ir          # A fragment of m16n8k16 as halves
    assert "<4 x float>" in ir         # accumulator vector
    assert "insertelement" in ir and "extractelement" in ir
    # the unknown QGMMA lifts as an opaque declared intrinsic
    assert "sass.opaque.qgmma" in ir
    assert verify_ir_text(ir) == []


def test_unset_provenance_refused():
    from sasslift import frontend
    from sasslift.cfg import build_cfg
    from sasslift.emit import EmitError, FunctionEmitter
    from sasslift.ssa import construct_psi, ssa_rename

    src = frontend.parse_module("MOV R0, 0x1\nSTG.E [R2], R0\nEXIT\n", "sm75")[0]
    fn = frontend.build_function(src, "sm75")
    build_cfg(fn)
    construct_psi(fn)
    fn = ssa_rename(fn)
    fn.phase = type(fn.phase).TYPED  # skip typing on purpose
    with pytest.raises(EmitError):
        FunctionEmitter(fn, EmitConfig()).emit_function()


def test_float_hex_encoding():
    assert float_hex(1.0, "float") == "0x3FF0000000000000"
    assert float_hex(1.0, "double") == "0x3FF0000000000000"
    assert float_hex(1.0, "half") == "0xH3C00"
    assert float_hex(1.0, "bfloat") == "0xR3F80"


def test_emit_json_structure():
    import json

    fn = lift_corpus_file("basic/vecadd.sass").ok()[0]
    data = json.loads(emit_json([fn]))
    assert data[0]["name"] == "vecadd"
    assert data[0]["blocks"]
    assert all("type" in v for v in data[0]["values"].values())


# ---------------------------------------------------------------------------
# verifier negatives
# ---------------------------------------------------------------------------

GOOD = """\
declare i32 @f(i32)

define void @k() {
bb0:
  %a = add i32 1, 2
  %b = call i32 @f(i32 %a)
  br label %bb1
bb1:
  ret void
}
"""


def test_verifier_accepts_good():
    assert verify_ir_text(GOOD) == []


def test_verifier_use_before_def():
    bad = GOOD.replace("%a = add i32 1, 2\n  %b = call i32 @f(i32 %a)",
                       "%b = call i32 @f(i32 %a)\n  %a = add i32 1, 2")
    assert any("before definition" in v for v in verify_ir_text(bad))


def test_verifier_fadd_on_ints():
    bad = "define void @k() {\nbb0:\n  %a = fadd i32 1, 2\n  ret void\n}\n"
    assert any("requires a float type" in v for v in verify_ir_text(bad))


def test_verifier_unterminated_block():
    bad = "define void @k() {\nbb0:\n  %a = add i32 1, 2\n}\n"
    assert any("not terminated" in v for v in verify_ir_text(bad))


def test_verifier_undeclared_call():
    bad = "define void @k() {\nbb0:\n  call void @nope()\n  ret void\n}\n"
    assert any("undeclared" in v for v in verify_ir_text(bad))


def test_verifier_type_mismatch_on_use():
    bad = """\
define void @k() {
bb0:
  %a = add i32 1, 2
  %b = add i64 %a, 1
  ret void
}
"""
    assert any("has type i32 but is used as i64" in v
               for v in verify_ir_text(bad))


def test_verifier_dominance_across_blocks():
    bad = """\
define void @k() {
bb0:
  br i1 true, label %bb1, label %bb2
bb1:
  %x = add i32 1, 2
  br label %bb3
bb2:
  br label %bb3
bb3:
  %y = add i32 %x, 1
  ret void
}
"""
    assert any("not dominated" in v for v in verify_ir_text(bad))


def test_verifier_phi_labels_match_preds():
    bad = """\
define void @k() {
bb0:
  br label %bb1
bb1:
  %p = phi i32 [ 1, %bb9 ]
  ret void
}
"""
    assert any("do not match preds" in v for v in verify_ir_text(bad))


def test_parse_round_trips_own_emission():
    ir = emit_one(lift_corpus_file("basic/carrysub.sass").ok()[0])
    mod = parse_ir(ir)
    assert "carrysub" in mod.functions
    fn = mod.functions["carrysub"]
    assert fn.order and all(b.insts for b in fn.blocks.values())


def test_external_llvm_toolchain_optional():
    """Non-gating: when a host LLVM toolchain exists, emitted modules must
    parse cleanly; absence of the toolchain skips this check."""
    import shutil
    import subprocess
    import tempfile

    clang = shutil.which("clang")
    if clang is None:
        pytest.skip("no LLVM toolchain on this host")
    for path in all_corpus_sass():
        man = path.with_suffix(".manifest")
        lift = lift_text(path.read_text(), PipelineConfig(),
                         man.read_text() if man.exists() else None)
        ir = emit_module(lift.ok())
        with tempfile.NamedTemporaryFile("w", suffix=".ll") as f:
            f.write(ir)
            f.flush()
            proc = subprocess.run(
                [clang, "-S", "-emit-llvm", "-mllvm", "-opaque-pointers",
                 "-x", "ir", f.name, "-o", "/dev/null"],
                capture_output=True, text=True)
            if proc.returncode != 0 and "-opaque-pointers" in proc.stderr:
                # newer clang: opaque pointers are the default
                proc = subprocess.run(
                    [clang, "-S", "-emit-llvm", "-x", "ir", f.name,
                     "-o", "/dev/null"], capture_output=True, text=True)
            assert proc.returncode == 0, (path, proc.stderr[:400])


def test_packed_half_alu_emission():
    """HADD2/HFMA2 operate on the packed pair: <2 x half> / <2 x bfloat>."""
    lift = lift_corpus_file("golden/tensorish.sass")
    ir = emit_module(lift.ok())
    assert "fadd <2 x half>" in ir
    assert "@llvm.fma.v2bf16" in ir
    assert verify_ir_text(ir) == []
