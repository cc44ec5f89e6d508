"""Pipeline closure under pseudo-random kernels.

Generates seeded random-but-plausible instruction streams over the
supported ALU/compare/select/branch subset and asserts the closure
property end to end: every function lifts (or fails with a clean
diagnostic, never an unhandled crash), every lifted function passes
verify, and every emitted module passes the IR grammar check.  Integer
kernels additionally execute against a Python oracle.
"""

import random

from conftest import CORPUS

from sasslift.emit import emit_module
from sasslift.interp import parse_launch, run_kernel
from sasslift.irmodel import verify_ir_text
from sasslift.pipeline import PipelineConfig, lift_text
from sasslift.ssir import verify

INT_OPS = [
    ("IADD3 {d}, {a}, {b}, RZ", lambda a, b: (a + b) & 0xFFFFFFFF),
    ("IADD3 {d}, {a}, -{b}, RZ", lambda a, b: (a - b) & 0xFFFFFFFF),
    ("LOP3.LUT {d}, {a}, {b}, RZ, 0x3c", lambda a, b: a ^ b),
    ("LOP3.LUT {d}, {a}, {b}, RZ, 0xc0", lambda a, b: a & b),
    ("LOP3.LUT {d}, {a}, {b}, RZ, 0xfc", lambda a, b: a | b),
    ("IMAD {d}, {a}, {b}, RZ", lambda a, b: (a * b) & 0xFFFFFFFF),
    ("SHF.L.U32 {d}, {a}, 0x3, RZ", lambda a, b: (a << 3) & 0xFFFFFFFF),
    ("SHR.U32 {d}, {a}, 0x5", lambda a, b: a >> 5),
    ("IMNMX {d}, {a}, {b}, PT", lambda a, b: min(_s32(a), _s32(b)) & 0xFFFFFFFF),
    ("IMNMX.U32 {d}, {a}, {b}, !PT", lambda a, b: max(a, b)),
    ("MOV {d}, {a}", lambda a, b: a),
    ("IABS {d}, {a}", lambda a, b: abs(_s32(a)) & 0xFFFFFFFF),
    ("POPC {d}, {a}", lambda a, b: bin(a).count("1")),
]


def _s32(v):
    return v - (1 << 32) if v >= (1 << 31) else v


def gen_kernel(rng: random.Random, nregs=6, nops=14):
    """Random straight-line-plus-one-guard integer kernel and its oracle."""
    lines = [
        "S2R R0, SR_TID.X",
        "MOV R9, 0x4",
        "IMAD.WIDE R2, R0, R9, c[0x0][0x160]",
        "LDG.E R4, [R2]",
    ]
    regs = {f"R{10 + i}" for i in range(nregs)}
    init = {}
    for i, r in enumerate(sorted(regs)):
        seedv = rng.randrange(0, 1 << 16)
        lines.append(f"MOV {r}, {hex(seedv)}")
        init[r] = seedv

    def model(x):
        env = dict(init)
        env["R4"] = x
        pred = None
        for text, fn, a, b, d, guarded in steps:
            if guarded and not ((env["R4"] >> 2) & 1):
                continue
            env[d] = fn(env[a], env[b])
        return env[out_reg]

    steps = []
    pool = sorted(regs) + ["R4"]
    guard_emitted = False
    for i in range(nops):
        text, fn = INT_OPS[rng.randrange(len(INT_OPS))]
        a, b = rng.choice(pool), rng.choice(pool)
        d = rng.choice(sorted(regs))
        guarded = False
        if not guard_emitted and i == nops // 2:
            lines.append("LOP3.LUT R8, R4, 0x4, RZ, 0xc0")
            lines.append("ISETP.NE.AND P1, PT, R8, RZ, PT")
            guard_emitted = True
        if guard_emitted and rng.random() < 0.3:
            guarded = True
        prefix = "@P1 " if guarded else ""
        lines.append(prefix + text.format(d=d, a=a, b=b))
        steps.append((text, fn, a, b, d, guarded))
    out_reg = rng.choice(sorted(regs))
    lines += [
        "IMAD.WIDE R6, R0, R9, c[0x0][0x168]",
        f"STG.E [R6], {out_reg}",
        "EXIT",
    ]
    return ".text.fuzz:\n" + "\n".join(lines) + "\n", model


def test_fuzz_pipeline_closure_and_semantics():
    failures = []
    for seed in range(40):
        rng = random.Random(seed)
        text, model = gen_kernel(rng)
        for aggregate in (True, False):
            lift = lift_text(text, PipelineConfig(arch="sm75",
                                                  aggregate=aggregate))
            assert lift.all_ok, (seed, [f.error for f in lift.functions])
            for fl in lift.functions:
                assert verify(fl.function) == [], (seed, aggregate)
            ir = emit_module(lift.ok())
            violations = verify_ir_text(ir)
            assert violations == [], (seed, aggregate, violations[:3])
            n = 16
            inputs = [rng.randrange(0, 1 << 20) for _ in range(n)]
            expected = [model(x) for x in inputs]
            cfg = parse_launch(f"""\
kernel fuzz
grid 1 1 1
block {n} 1 1
buffer X u32[{n}] = {' '.join(map(str, inputs))}
buffer OUT u32[{n}] = zeros
param 0x160 ptr X
param 0x168 ptr OUT
expect OUT u32 = {' '.join(map(str, expected))}
""")
            res = run_kernel(ir, "fuzz", cfg)
            if not res.passed:
                failures.append((seed, [c.detail for c in res.checks]))
    assert not failures, failures[:3]


def test_fuzz_guarded_branchy_kernels_lift_cleanly():
    """Random forward-branching guarded kernels: closure only (no oracle)."""
    for seed in range(25):
        rng = random.Random(1000 + seed)
        nops = 10
        lines = ["S2R R0, SR_TID.X", "MOV R10, 0x1", "MOV R11, 0x2"]
        addr = 0x30
        body = []
        for i in range(nops):
            op = rng.random()
            if op < 0.2:
                target = addr + 0x10 * rng.randrange(2, 4)
                body.append((addr, f"@P0 BRA {hex(target)}"))
            elif op < 0.35:
                body.append((addr, "ISETP.LT.AND P0, PT, R10, R11, PT"))
            elif op < 0.5:
                body.append((addr, "@P0 IADD3 R10, R10, R11, RZ"))
            else:
                body.append((addr, f"IADD3 R1{rng.randrange(0, 2)}, R10, R11, RZ"))
            addr += 0x10
        # pad out so every branch target lands on an instruction
        while addr <= 0x30 + 0x10 * (nops + 4):
            body.append((addr, "IADD3 R10, R10, 0x1, RZ"))
            addr += 0x10
        body.append((addr, "EXIT"))
        text = ".text.branchy:\n" + "\n".join(
            f"{hex(a)}: {t}" for a, t in
            [(0x0, lines[0]), (0x10, lines[1]), (0x20, lines[2])] + body) + "\n"
        lift = lift_text(text, PipelineConfig(arch="sm75"))
        assert lift.all_ok, (seed, [f.error for f in lift.functions])
        ir = emit_module(lift.ok())
        assert verify_ir_text(ir) == [], seed
