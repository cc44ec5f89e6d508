"""Fixed-order lifting pipeline and its configuration.

The pass order never changes: frontend parse/normalize/expand, CFG
recovery, device-function recovery, psi/select lowering, SSA renaming,
pattern normalization and aggregation, type recovery, emission.  Flags
and ablation modes can disable the content of a stage but not reorder
stages; typing before aggregation would mistype carry chains, so the
ordering is structural.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

from . import arch as archmod
from . import cfg as cfgmod
from . import patterns as patmod
from . import typerec
from .frontend import Manifest, build_function, parse_manifest, parse_module
from .ssa import construct_psi, ssa_rename
from .ssir import LiftedFunction, Phase, dump, verify

ABLATION_MODES = ("b0", "b1a", "b1b", "b2", "b3")


class LiftError(RuntimeError):
    pass


class LiftTimeout(LiftError):
    pass


@dataclass
class PipelineConfig:
    arch: str = "sm75"
    aggregate: bool = True
    ablation: str = "b0"
    inline_threshold: int = 16
    iteration_cap: int = 64
    dump_phases: bool = False
    timeout: float = 900.0

    def __post_init__(self):
        archmod.check_arch(self.arch)
        if self.ablation not in ABLATION_MODES:
            raise LiftError(f"unknown ablation mode {self.ablation!r}")


@dataclass
class FunctionLift:
    name: str
    status: str                 # ok | error | timeout
    function: LiftedFunction | None = None
    error: str | None = None
    phase_dumps: list[tuple[str, str]] = field(default_factory=list)
    seconds: float = 0.0


@dataclass
class ModuleLift:
    arch: str
    functions: list[FunctionLift] = field(default_factory=list)

    def ok(self) -> list[LiftedFunction]:
        return [f.function for f in self.functions if f.status == "ok"]

    @property
    def all_ok(self) -> bool:
        return all(f.status == "ok" for f in self.functions)


class _Deadline:
    def __init__(self, seconds: float):
        self.t0 = time.monotonic()
        self.seconds = seconds

    def check(self, where: str):
        if time.monotonic() - self.t0 > self.seconds:
            raise LiftTimeout(f"function lift timed out during {where}")

    def elapsed(self) -> float:
        return time.monotonic() - self.t0


def _checked(fn: LiftedFunction, where: str):
    violations = verify(fn)
    if violations:
        raise LiftError(f"{fn.name}: verify failed after {where}: "
                        + "; ".join(violations[:5]))


def lift_text(text: str, config: PipelineConfig,
              manifest_text: str | None = None) -> ModuleLift:
    manifest = parse_manifest(manifest_text) if manifest_text else None
    arch = config.arch
    if manifest is not None and manifest.arch:
        arch = archmod.check_arch(manifest.arch)

    result = ModuleLift(arch)
    for src in parse_module(text, arch, manifest):
        for flift in _lift_one(src, arch, config, manifest):
            result.functions.append(flift)
    result.functions.sort(key=lambda f: f.name)
    return result


def _lift_one(src, arch: str, config: PipelineConfig,
              manifest: Manifest | None):
    deadline = _Deadline(config.timeout)
    out: list[FunctionLift] = []
    name = src.name

    def snap(fn, tag, dumps):
        if config.dump_phases:
            dumps.append((tag, dump(fn)))

    try:
        fn = build_function(src, arch, manifest)
        dumps: list[tuple[str, str]] = []
        snap(fn, "raw", dumps)
        _checked(fn, "frontend")
        deadline.check("frontend")

        cfgmod.build_cfg(fn)
        _checked(fn, "cfg")
        snap(fn, "cfg", dumps)
        deadline.check("cfg")

        fn, extracted = cfgmod.recover_device_functions(
            fn, config.inline_threshold)
        _checked(fn, "device-recovery")
        deadline.check("device-recovery")

        for sub, sub_dumps in [(fn, dumps)] + [(e, []) for e in extracted]:
            out.append(_finish_function(sub, config, deadline, sub_dumps))
    except LiftTimeout as e:
        out.append(FunctionLift(name, "timeout", error=str(e),
                                seconds=deadline.elapsed()))
    except Exception as e:  # per-function failures must not abort the module
        out.append(FunctionLift(name, "error", error=f"{type(e).__name__}: {e}",
                                seconds=deadline.elapsed()))
    return out


def _finish_function(fn: LiftedFunction, config: PipelineConfig,
                     deadline: _Deadline,
                     dumps: list[tuple[str, str]]) -> FunctionLift:
    def snap(tag):
        if config.dump_phases:
            dumps.append((tag, dump(fn)))

    try:
        construct_psi(fn, naive=(config.ablation == "b1a"))
        _checked(fn, "psi")
        deadline.check("psi")

        ssa_rename(fn)
        _checked(fn, "ssa")
        snap("ssa")
        deadline.check("ssa")

        if config.ablation != "b1b":
            patmod.normalize_xmad(fn)
            patmod.normalize_reciprocal(fn)
            if config.aggregate:
                patmod.apply_aggregations(fn)
            patmod.tag_cuda_objects(fn)
            _checked(fn, "patterns")
        fn.advance_phase(Phase.NORMALIZED)
        snap("normalized")
        deadline.check("patterns")

        typerec.run_type_recovery(fn, mode=config.ablation,
                                  max_iter=config.iteration_cap)
        _checked(fn, "typing")
        snap("typed")
        deadline.check("typing")
        return FunctionLift(fn.name, "ok", fn, phase_dumps=dumps,
                            seconds=deadline.elapsed())
    except LiftTimeout as e:
        return FunctionLift(fn.name, "timeout", error=str(e),
                            phase_dumps=dumps, seconds=deadline.elapsed())
    except Exception as e:
        return FunctionLift(fn.name, "error",
                            error=f"{type(e).__name__}: {e}",
                            phase_dumps=dumps, seconds=deadline.elapsed())


def lift_path(sass_path, config: PipelineConfig) -> ModuleLift:
    """Lift a .sass file, picking up the sidecar manifest when present."""
    from pathlib import Path

    p = Path(sass_path)
    manifest_text = None
    mpath = p.with_suffix(".manifest")
    if mpath.exists():
        manifest_text = mpath.read_text()
    return lift_text(p.read_text(), config, manifest_text)
