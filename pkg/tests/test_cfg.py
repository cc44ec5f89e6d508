import pytest

from conftest import lift_corpus_file

from sasslift import frontend
from sasslift.cfg import (
    CfgError, LeaderReason, build_cfg, identify_leaders,
    reachable_blocks, recover_device_functions,
)
from sasslift.ssir import Br, CondBr, CondExit, verify


def raw_fn(text, arch="sm75", manifest=None):
    man = frontend.parse_manifest(manifest) if manifest else None
    src = frontend.parse_module(text, arch, man)[0]
    return frontend.build_function(src, arch, man)


LISTING1 = """\
FADD R25, R25, 1e-8
MUFU.RSQ R24, R25
IADD3 R0, R25, -0xd000000, RZ
ISETP.GT.AND P0, PT, R0, 0x727fffff, PT
@!P0 BRA 0x340
0x340: FMUL R0, R25, R24
EXIT
"""


def test_listing1_leaders():
    fn = raw_fn(LISTING1)
    leaders = identify_leaders(fn)
    assert set(leaders.addresses()) == {0x0, 0x340}
    assert LeaderReason.ENTRY in leaders.reasons[0x0]
    assert LeaderReason.BRANCH_TARGET in leaders.reasons[0x340]
    assert LeaderReason.FALL_THROUGH in leaders.reasons[0x340]


def test_straight_line_single_leader():
    fn = raw_fn("MOV R0, R1\nIADD3 R2, R0, 0x1, RZ\nEXIT\n")
    assert identify_leaders(fn).addresses() == [0]


def test_guard_change_rule():
    fn = raw_fn("IADD3 R0, R1, 0x1, RZ\n@P0 IADD3 R1, R0, 0x1, RZ\n"
                "IADD3 R2, R1, 0x1, RZ\nEXIT\n")
    leaders = identify_leaders(fn)
    assert len(leaders.addresses()) == 3
    assert LeaderReason.GUARD_CHANGE in leaders.reasons[0x10]
    assert LeaderReason.GUARD_CHANGE in leaders.reasons[0x20]


def test_branch_target_realignment():
    # target lands on a control-code-only line and snaps forward
    fn = raw_fn("BRA 0x20\n0x20: /* ctrl */\n0x30: MOV R0, R1\nEXIT\n")
    leaders = identify_leaders(fn)
    assert 0x30 in leaders.reasons


def test_unresolved_branch_target_errors():
    fn = raw_fn("BRA 0x1000\nEXIT\n")
    with pytest.raises(CfgError):
        identify_leaders(fn)


def test_predicated_exit_keeps_fallthrough():
    fn = raw_fn("@P0 EXIT\nMOV R0, R1\nEXIT\n")
    build_cfg(fn)
    entry = fn.blocks[fn.entry]
    assert isinstance(entry.terminator, CondExit)
    assert entry.terminator.fallthrough in fn.blocks


def test_exit_padding_removed_real_loop_kept():
    fn = raw_fn("EXIT\n0x10: BRA 0x10\n")
    build_cfg(fn)
    assert len(fn.blocks) == 1
    assert any("padding" in d for d in fn.diagnostics)

    loop = raw_fn("0x0: BRA 0x0\n")
    build_cfg(loop)
    entry = loop.blocks[loop.entry]
    assert isinstance(entry.terminator, Br)
    assert entry.terminator.target == loop.entry  # self-edge retained


def test_dual_predicate_branch_cfg():
    lift = lift_corpus_file("basic/dualpred.sass")
    fn = lift.ok()[0]
    dual = [b.terminator for b in fn.block_order()
            if isinstance(b.terminator, CondBr) and b.terminator.guard is not None]
    assert len(dual) == 1
    t = dual[0]
    live = reachable_blocks(fn)
    assert t.taken in live and t.fallthrough in live


def test_edge_symmetry_and_guard_purity_on_corpus():
    from conftest import all_corpus_sass

    from sasslift.pipeline import PipelineConfig, lift_text

    for path in all_corpus_sass():
        man = path.with_suffix(".manifest")
        lift = lift_text(path.read_text(), PipelineConfig(),
                         man.read_text() if man.exists() else None)
        for fl in lift.functions:
            fn = fl.function
            for blk in fn.block_order():
                for s in blk.succs:
                    assert blk.bid in fn.blocks[s].preds
                for p in blk.preds:
                    assert blk.bid in fn.blocks[p].succs


DEVFN = """\
0x200: MOV R8, 0x40000000
0x210: CALL.ABS.NOINC 0x780
0x220: FADD R8, R2, 1.0
0x230: EXIT
0x780: MOV R2, 0x3f800000
0x790: FFMA R2, R2, R8, R8
0x7a0: RET
"""


def test_device_function_inlines_and_connects():
    fn = raw_fn(DEVFN, manifest="arch: sm75\ncall_target 0x210 -> 0x780\n")
    build_cfg(fn)
    # before recovery the callee is a disconnected subgraph
    assert len(reachable_blocks(fn)) < len(fn.blocks)
    fn, extracted = recover_device_functions(fn)
    assert extracted == []
    assert reachable_blocks(fn) == set(fn.blocks)
    assert verify(fn) == []
    infos = fn.meta["device_functions"]
    assert infos[0].disposition == "inline"
    assert infos[0].entry_address == 0x780


def test_extract_above_threshold():
    # 17 call sites to one target crosses the inline threshold of 16
    lines = []
    addr = 0
    for i in range(17):
        lines.append(f"{addr:#x}: CALL.ABS.NOINC 0x780")
        addr += 0x10
        lines.append(f"{addr:#x}: MOV R{i % 8}, R1")
        addr += 0x10
    lines.append(f"{addr:#x}: EXIT")
    lines.append("0x780: MOV R2, 0x1")
    lines.append("0x790: RET")
    fn = raw_fn("\n".join(lines) + "\n")
    build_cfg(fn)
    fn, extracted = recover_device_functions(fn)
    assert len(extracted) == 1
    assert fn.meta["device_functions"][0].disposition == "extract"
    assert reachable_blocks(fn) == set(fn.blocks)
    opaque = [i for b in fn.block_order() for i in b.instructions
              if i.meta.get("opaque_call")]
    assert len(opaque) == 17


def test_inline_at_threshold_boundary():
    lines = []
    addr = 0
    for i in range(16):
        lines.append(f"{addr:#x}: CALL.ABS.NOINC 0x780")
        addr += 0x10
        lines.append(f"{addr:#x}: MOV R{i % 8}, R1")
        addr += 0x10
    lines.append(f"{addr:#x}: EXIT")
    lines.append("0x780: MOV R2, 0x1")
    lines.append("0x790: RET")
    fn = raw_fn("\n".join(lines) + "\n")
    build_cfg(fn)
    fn, extracted = recover_device_functions(fn)
    assert extracted == []  # 16 sites inline; 17 extract


def test_unresolved_call_errors():
    fn = raw_fn("0x0: CALL.ABS.NOINC 0x9999\n0x10: EXIT\n")
    with pytest.raises(CfgError):
        build_cfg(fn)


def test_dead_subgraph_dropped_with_warning():
    fn = raw_fn("0x0: EXIT\n0x100: MOV R0, R1\n0x110: BRA 0x100\n")
    build_cfg(fn)
    fn, _ = recover_device_functions(fn)
    assert reachable_blocks(fn) == set(fn.blocks)
    assert any("unreachable" in d for d in fn.diagnostics)


def test_connected_function_unchanged():
    lift = lift_corpus_file("basic/vecadd.sass")
    fn = lift.ok()[0]
    assert reachable_blocks(fn) == set(fn.blocks)
    assert not fn.meta.get("device_functions")


def test_inlining_preserves_instruction_multiset():
    fn = raw_fn(DEVFN, manifest="arch: sm75\ncall_target 0x210 -> 0x780\n")
    build_cfg(fn)
    before = sorted(
        str(i.opcode) for b in fn.block_order() for i in b.instructions)
    fn, _ = recover_device_functions(fn)
    after = sorted(
        str(i.opcode) for b in fn.block_order() for i in b.instructions)
    # CALL/RET became branches; everything else survives the clone
    assert after == before
