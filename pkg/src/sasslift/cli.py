"""Command-line entry point.

Subcommands:
  lift     lift one disassembly file to IR (+ optional report/dumps)
  run      execute an emitted module under a launch descriptor
  corpus   lift/run/check every kernel in a corpus directory
  patterns list the pattern table with its templates
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import metrics as metricsmod
from .arch import SUPPORTED_ARCHS
from .emit import EmitConfig, emit_json, emit_module
from .interp import InterpError, Trap, parse_launch, run_kernel
from .irmodel import verify_ir_text
from .patterns import describe_patterns
from .pipeline import ABLATION_MODES, PipelineConfig, lift_text
from .ssir import dump

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_USAGE = 2


def _add_pipeline_flags(p: argparse.ArgumentParser):
    p.add_argument("--arch", choices=SUPPORTED_ARCHS, default="sm75",
                   help="architecture when no manifest provides one")
    p.add_argument("--ablation", choices=ABLATION_MODES, default="b0",
                   help="pipeline ablation mode (b0 = full pipeline)")
    agg = p.add_mutually_exclusive_group()
    agg.add_argument("--aggregate", dest="aggregate", action="store_true",
                     default=True, help="enable 64-bit idiom aggregation")
    agg.add_argument("--no-aggregate", dest="aggregate", action="store_false",
                     help="lift strictly instruction-by-instruction")
    p.add_argument("--inline-threshold", type=int, default=16, metavar="N",
                   help="device functions with more call sites are extracted")
    p.add_argument("--iteration-cap", type=int, default=64, metavar="N",
                   help="type-propagation fixpoint iteration limit")
    p.add_argument("--timeout", type=float, default=900.0, metavar="SECS",
                   help="per-function lift timeout")
    p.add_argument("--dump-phases", action="store_true",
                   help="print the function dump after each phase")
    p.add_argument("--dump-types", action="store_true",
                   help="print per-value type/provenance/reach lines")


def _config(args) -> PipelineConfig:
    return PipelineConfig(
        arch=args.arch, aggregate=args.aggregate, ablation=args.ablation,
        inline_threshold=args.inline_threshold,
        iteration_cap=args.iteration_cap, dump_phases=args.dump_phases,
        timeout=args.timeout,
    )


def _dump_types(fn) -> str:
    from .metrics import classify_boundaries

    lines = []
    for vid in sorted(fn.values):
        info = fn.values[vid]
        reach = "-" if info.reach is None else str(info.reach)
        lines.append(f"value %v{vid} {info.origin} {info.final_type} "
                     f"{info.provenance.value} reach={reach}")
    records = fn.meta.get("conflict_records", [])
    classify_boundaries(fn, records)
    for rec in records:
        lines.append(f"conflict %v{rec.vid} cast=%v{rec.cast_vid} "
                     f"site={rec.use_iid} category={rec.category}")
    return "\n".join(lines)


def cmd_lift(args) -> int:
    config = _config(args)
    path = Path(args.input)
    if not path.exists():
        print(f"error: no such file {path}", file=sys.stderr)
        return EXIT_USAGE
    manifest_text = None
    mpath = Path(args.manifest) if args.manifest else path.with_suffix(".manifest")
    if mpath.exists():
        manifest_text = mpath.read_text()

    lift = lift_text(path.read_text(), config, manifest_text)
    failed = [f for f in lift.functions if f.status != "ok"]
    for fl in lift.functions:
        marker = {"ok": "lifted", "error": "FAILED", "timeout": "TIMEOUT"}
        print(f"{marker[fl.status]:8} {fl.name}"
              + (f": {fl.error}" if fl.error else ""))
        if args.dump_phases:
            for tag, text in fl.phase_dumps:
                print(f"--- {fl.name} [{tag}] ---")
                print(text)
        if args.dump_types and fl.function is not None:
            print(_dump_types(fl.function))

    funcs = lift.ok()
    if funcs:
        ir = emit_module(funcs, EmitConfig())
        violations = verify_ir_text(ir)
        if violations:
            for v in violations:
                print(f"ir-verify: {v}", file=sys.stderr)
            failed.append("ir")
        if args.emit:
            Path(args.emit).write_text(ir)
        elif not args.report and not args.emit_json:
            sys.stdout.write(ir)
        if args.emit_json:
            Path(args.emit_json).write_text(emit_json(funcs))

    if args.report:
        rep = metricsmod.report(funcs, ablation=config.ablation)
        text = metricsmod.render_table(rep) if args.report_format == "table" \
            else metricsmod.render_kv(rep)
        if args.report == "-":
            sys.stdout.write(text)
        else:
            Path(args.report).write_text(text)
    return EXIT_PARTIAL if failed else EXIT_OK


def cmd_run(args) -> int:
    module_text = Path(args.module).read_text()
    violations = verify_ir_text(module_text)
    if violations:
        for v in violations:
            print(f"verify: {v}", file=sys.stderr)
        return EXIT_PARTIAL
    cfg = parse_launch(Path(args.launch).read_text())
    if args.schedule_seed is not None:
        cfg.seed = args.schedule_seed
    if args.unbiased_rcp:
        cfg.rcp_bias_ulps = 0
    try:
        res = run_kernel(module_text, cfg.kernel, cfg)
    except (Trap, InterpError) as e:
        print(f"trap: {e}", file=sys.stderr)
        return EXIT_PARTIAL
    if not cfg.expects:
        print("ran to completion; no checks in descriptor")
        return EXIT_OK
    ok = True
    for c in res.checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.buffer}: {c.detail}")
        ok = ok and c.passed
    return EXIT_OK if ok else EXIT_PARTIAL


def cmd_corpus(args) -> int:
    config = _config(args)
    root = Path(args.dir)
    if not root.is_dir():
        print(f"error: {root} is not a directory", file=sys.stderr)
        return EXIT_USAGE
    rows = []
    reports = []
    any_fail = False
    for sass in sorted(root.rglob("*.sass")):
        row = {"kernel": str(sass.relative_to(root)), "lift": "-",
               "verify": "-", "run": "-", "kinds": "-"}
        manifest = sass.with_suffix(".manifest")
        lift = lift_text(sass.read_text(), config,
                         manifest.read_text() if manifest.exists() else None)
        ok_funcs = lift.ok()
        row["lift"] = f"{len(ok_funcs)}/{len(lift.functions)}"
        if not lift.all_ok:
            any_fail = True
            row["verify"] = "skip"
            rows.append(row)
            continue
        ir = emit_module(ok_funcs)
        violations = verify_ir_text(ir)
        row["verify"] = "ok" if not violations else f"{len(violations)} bad"
        if violations:
            any_fail = True
        reports.append(metricsmod.report(ok_funcs, ablation=config.ablation))

        launch = sass.with_suffix(".launch")
        if launch.exists() and not violations:
            try:
                cfg = parse_launch(launch.read_text())
                res = run_kernel(ir, cfg.kernel, cfg)
                row["run"] = "PASS" if res.passed else "FAIL"
            except (Trap, InterpError) as e:
                row["run"] = f"TRAP"
            if row["run"] != "PASS":
                any_fail = True

        ann = sass.with_suffix(".types")
        if ann.exists():
            good, total = check_annotations(ok_funcs, ann.read_text())
            row["kinds"] = f"{good}/{total}"
            if good != total:
                any_fail = True
        rows.append(row)

    widths = {k: max(len(k), *(len(r[k]) for r in rows)) if rows else len(k)
              for k in ("kernel", "lift", "verify", "run", "kinds")}
    header = "  ".join(k.ljust(widths[k]) for k in widths)
    print(header)
    print("  ".join("-" * widths[k] for k in widths))
    for r in rows:
        print("  ".join(r[k].ljust(widths[k]) for k in widths))

    lifted = sum(int(r["lift"].split("/")[0]) for r in rows)
    total = sum(int(r["lift"].split("/")[1]) for r in rows)
    ran = [r for r in rows if r["run"] != "-"]
    passed = sum(1 for r in ran if r["run"] == "PASS")
    kg = sum(int(r["kinds"].split("/")[0]) for r in rows if r["kinds"] != "-")
    kt = sum(int(r["kinds"].split("/")[1]) for r in rows if r["kinds"] != "-")
    print()
    print(f"lift rate: {lifted}/{total}"
          + (f"  run pass rate: {passed}/{len(ran)}" if ran else "")
          + (f"  kind accuracy: {kg}/{kt}" if kt else ""))
    if args.report and reports:
        merged = metricsmod.LiftReport(config.ablation)
        for rep in reports:
            merged.functions.extend(rep.functions)
        text = metricsmod.render_table(merged) if args.report_format == "table" \
            else metricsmod.render_kv(merged)
        Path(args.report).write_text(text)
    return EXIT_PARTIAL if any_fail else EXIT_OK


def check_annotations(funcs, text: str) -> tuple[int, int]:
    """Compare recovered type kinds against sidecar annotations."""
    from .lattice import KIND

    good = total = 0
    for ln in text.splitlines():
        ln = ln.split("#", 1)[0].strip()
        if not ln:
            continue
        parts = ln.split()
        if parts[0] != "annotate" or len(parts) != 4:
            raise InterpError(f"bad annotation line {ln!r}")
        addr, reg, kind = int(parts[1], 0), parts[2], parts[3]
        total += 1
        for fn in funcs:
            hit = False
            for info in fn.values.values():
                if info.origin != reg or info.final_type is None:
                    continue
                d = _def_inst(fn, info)
                if d is not None and d.address == addr:
                    hit = True
                    if KIND.get(info.final_type) == kind:
                        good += 1
                    break
            if hit:
                break
    return good, total


def _def_inst(fn, info):
    if info.def_iid is None:
        return None
    for blk in fn.block_order():
        for inst in blk.instructions:
            if inst.iid == info.def_iid:
                return inst
    return None


def cmd_patterns(_args) -> int:
    for line in describe_patterns():
        print(line)
    return EXIT_OK


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="sasslift",
        description="Lift textual SASS disassembly to typed, SSA-form IR. "
                    "Unknown opcodes lift to opaque intrinsic calls instead "
                    "of failing the function.",
    )
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("lift", help="lift a .sass file")
    p.add_argument("input")
    p.add_argument("--manifest", help="sidecar manifest path "
                   "(default: INPUT with .manifest suffix)")
    _add_pipeline_flags(p)
    p.add_argument("--emit", metavar="PATH", help="write IR text here")
    p.add_argument("--emit-json", metavar="PATH",
                   help="write a structured JSON dump here")
    p.add_argument("--report", metavar="PATH",
                   help="write a metrics report ('-' for stdout)")
    p.add_argument("--report-format", choices=("kv", "table"), default="kv")
    p.set_defaults(fn=cmd_lift)

    p = sub.add_parser("run", help="execute an emitted module")
    p.add_argument("module")
    p.add_argument("launch")
    p.add_argument("--schedule-seed", type=int, default=None)
    p.add_argument("--unbiased-rcp", action="store_true",
                   help="disable the +3 ULP hardware reciprocal bias")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("corpus", help="lift and check a corpus directory")
    p.add_argument("dir")
    _add_pipeline_flags(p)
    p.add_argument("--report", metavar="PATH")
    p.add_argument("--report-format", choices=("kv", "table"), default="kv")
    p.set_defaults(fn=cmd_corpus)

    p = sub.add_parser("patterns", help="list the pattern table")
    p.set_defaults(fn=cmd_patterns)

    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else 0
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
