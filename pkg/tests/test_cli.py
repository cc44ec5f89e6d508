import json

from conftest import CORPUS

from sasslift.cli import main


def run_cli(*argv, capsys=None):
    code = main(list(argv))
    return code


def test_lift_emits_ir(tmp_path, capsys):
    out = tmp_path / "vecadd.ll"
    code = main(["lift", str(CORPUS / "basic/vecadd.sass"),
                 "--emit", str(out)])
    captured = capsys.readouterr()
    assert code == 0
    assert "lifted" in captured.out
    assert "define void @vecadd()" in out.read_text()


def test_lift_report_kv_and_json(tmp_path):
    rep = tmp_path / "rep.kv"
    js = tmp_path / "m.json"
    code = main(["lift", str(CORPUS / "basic/vecadd.sass"),
                 "--emit", str(tmp_path / "o.ll"),
                 "--emit-json", str(js), "--report", str(rep)])
    assert code == 0
    assert "func.vecadd.iterations" in rep.read_text()
    assert json.loads(js.read_text())[0]["name"] == "vecadd"


def test_lift_dump_flags(tmp_path, capsys):
    code = main(["lift", str(CORPUS / "basic/vecadd.sass"),
                 "--emit", str(tmp_path / "o.ll"),
                 "--dump-phases", "--dump-types"])
    captured = capsys.readouterr()
    assert code == 0
    assert "[cfg]" in captured.out and "[typed]" in captured.out
    assert "value %v0" in captured.out


def test_lift_missing_file_usage_error(capsys):
    assert main(["lift", "/nonexistent.sass"]) == 2


def test_run_pass_and_fail(tmp_path, capsys):
    ll = tmp_path / "vecadd.ll"
    main(["lift", str(CORPUS / "basic/vecadd.sass"), "--emit", str(ll)])
    code = main(["run", str(ll), str(CORPUS / "basic/vecadd.launch")])
    captured = capsys.readouterr()
    assert code == 0 and "PASS" in captured.out

    # corrupt the expectation: must fail with exit 1
    bad = tmp_path / "bad.launch"
    text = (CORPUS / "basic/vecadd.launch").read_text()
    bad.write_text(text.replace("expect OUT u32 = 100",
                                "expect OUT u32 = 999"))
    code = main(["run", str(ll), str(bad)])
    captured = capsys.readouterr()
    assert code == 1 and "FAIL" in captured.out


def test_run_no_checks(tmp_path, capsys):
    ll = tmp_path / "v.ll"
    main(["lift", str(CORPUS / "basic/vecadd.sass"), "--emit", str(ll)])
    nl = tmp_path / "nocheck.launch"
    nl.write_text("\n".join(
        ln for ln in (CORPUS / "basic/vecadd.launch").read_text().splitlines()
        if not ln.startswith("expect")) + "\n")
    code = main(["run", str(ll), str(nl)])
    captured = capsys.readouterr()
    assert code == 0 and "no checks" in captured.out


def test_corpus_summary(capsys):
    code = main(["corpus", str(CORPUS)])
    captured = capsys.readouterr()
    assert code == 0
    assert "vecadd.sass" in captured.out
    assert "PASS" in captured.out


def test_corpus_empty_dir(tmp_path, capsys):
    code = main(["corpus", str(tmp_path)])
    assert code == 0


def test_patterns_listing(capsys):
    code = main(["patterns"])
    captured = capsys.readouterr()
    assert code == 0
    assert "iadd3.pair" in captured.out
    assert "IADD3" in captured.out


def test_unknown_opcode_lifts_with_warning(tmp_path, capsys):
    sass = tmp_path / "odd.sass"
    sass.write_text(".text.odd:\nFANCYOP R0, R1, R2\nEXIT\n")
    code = main(["lift", str(sass), "--emit", str(tmp_path / "o.ll")])
    captured = capsys.readouterr()
    assert code == 0  # unknown opcodes lift opaquely, not fatally
    assert "sass.opaque.fancyop" in (tmp_path / "o.ll").read_text()


def test_empty_file_lifts_to_empty_module(tmp_path):
    sass = tmp_path / "empty.sass"
    sass.write_text("\n")
    assert main(["lift", str(sass), "--emit", str(tmp_path / "o.ll")]) == 0


def test_partial_failure_does_not_abort_module(tmp_path, capsys):
    sass = tmp_path / "two.sass"
    sass.write_text(""".text.good:
MOV R0, 0x1
STG.E [R2], R0
EXIT
.text.bad:
BRA 0x99999
EXIT
""")
    code = main(["lift", str(sass), "--emit", str(tmp_path / "o.ll")])
    captured = capsys.readouterr()
    assert code == 1
    assert "lifted   good" in captured.out
    assert "FAILED   bad" in captured.out
    assert "define void @good()" in (tmp_path / "o.ll").read_text()
