#!/usr/bin/env python3
"""One-shot corpus generator: writes .sass/.manifest/.launch/.types files.

Expected outputs are computed here with plain numpy arithmetic (the
independent oracle), then frozen into the launch descriptors.
"""
import struct
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parent.parent / "corpus"
BASIC = ROOT / "basic"
CRYPTO = ROOT / "crypto"
GOLDEN = ROOT / "golden"
for d in (BASIC, CRYPTO, GOLDEN):
    d.mkdir(parents=True, exist_ok=True)


def write(path: Path, text: str):
    path.write_text(text)
    print("wrote", path)


def fmt(vals, kind):
    out = []
    for v in vals:
        if kind == "f":
            out.append(repr(float(np.float32(v))))
        else:
            out.append(str(int(v)))
    return " ".join(out)


# ---------------------------------------------------------------------------
# vecadd (sm75, int)
# ---------------------------------------------------------------------------
write(BASIC / "vecadd.sass", """\
.text.vecadd:
S2R R0, SR_CTAID.X
S2R R3, SR_TID.X
IMAD R0, R0, c[0x0][0x0], R3
ISETP.GE.AND P0, PT, R0, c[0x0][0x178], PT
@P0 EXIT
MOV R9, 0x4
IMAD.WIDE R2, R0, R9, c[0x0][0x160]
IMAD.WIDE R4, R0, R9, c[0x0][0x168]
LDG.E R6, [R2]
LDG.E R7, [R4]
IADD3 R10, R6, R7, RZ
IMAD.WIDE R8, R0, R9, c[0x0][0x170]
STG.E [R8], R10
EXIT
""")
write(BASIC / "vecadd.manifest", "arch: sm75\n")
a = np.arange(32, dtype=np.uint32)
b = np.arange(32, dtype=np.uint32) + 100
out = a + b
write(BASIC / "vecadd.launch", f"""\
kernel vecadd
arch sm75
grid 2 1 1
block 16 1 1
buffer A u32[32] = seq
buffer B u32[32] = seq 100
buffer OUT u32[32] = zeros
param 0x160 ptr A
param 0x168 ptr B
param 0x170 ptr OUT
param 0x178 u32 32
expect OUT u32 = {fmt(out, 'u')}
""")
write(BASIC / "vecadd.types", """\
# kind annotations: value defined at <addr> into <reg>
annotate 0x30 P0 bool
annotate 0x60 R3:R2 int
annotate 0x80 R6 int
annotate 0xa0 R10 int
""")

# ---------------------------------------------------------------------------
# saxpy (sm90, float)
# ---------------------------------------------------------------------------
write(BASIC / "saxpy.sass", """\
.text.saxpy:
S2R R0, SR_CTAID.X
S2R R3, SR_TID.X
IMAD R0, R0, c[0x0][0x0], R3
ISETP.GE.AND P0, PT, R0, c[0x0][0x228], PT
@P0 EXIT
MOV R9, 0x4
IMAD.WIDE R2, R0, R9, c[0x0][0x210]
IMAD.WIDE R4, R0, R9, c[0x0][0x218]
LDG.E R6, [R2]
LDG.E R7, [R4]
MOV R8, c[0x0][0x22c]
FFMA R10, R6, R8, R7
IMAD.WIDE R12, R0, R9, c[0x0][0x220]
STG.E [R12], R10
EXIT
""")
write(BASIC / "saxpy.manifest", "arch: sm90\n")
x = (np.arange(32, dtype=np.float32) * np.float32(0.25))
y = np.arange(32, dtype=np.float32) + np.float32(100)
alpha = np.float32(1.5)
sax = np.float32(x * alpha + y)
write(BASIC / "saxpy.launch", f"""\
kernel saxpy
arch sm90
grid 1 1 1
block 32 1 1
buffer X f32[32] = {fmt(x, 'f')}
buffer Y f32[32] = {fmt(y, 'f')}
buffer OUT f32[32] = zeros
param 0x210 ptr X
param 0x218 ptr Y
param 0x220 ptr OUT
param 0x228 u32 32
param 0x22c f32 1.5
expect OUT f32 rel=1e-5 = {fmt(sax, 'f')}
""")
write(BASIC / "saxpy.types", """\
annotate 0x80 R6 float
annotate 0x90 R7 float
annotate 0xb0 R10 float
annotate 0x30 P0 bool
""")

# ---------------------------------------------------------------------------
# relu (sm75, predicated write -> select)
# ---------------------------------------------------------------------------
write(BASIC / "relu.sass", """\
.text.relu:
S2R R0, SR_CTAID.X
S2R R3, SR_TID.X
IMAD R0, R0, c[0x0][0x0], R3
ISETP.GE.AND P0, PT, R0, c[0x0][0x170], PT
@P0 EXIT
MOV R9, 0x4
IMAD.WIDE R2, R0, R9, c[0x0][0x160]
LDG.E R4, [R2]
FSETP.LT.AND P1, PT, R4, RZ, PT
@P1 MOV R4, RZ
IMAD.WIDE R6, R0, R9, c[0x0][0x168]
STG.E [R6], R4
EXIT
""")
write(BASIC / "relu.manifest", "arch: sm75\n")
xs = np.array([1.5, -2.25, 0.0, -0.5, 3.75, -100.0, 42.0, -0.125] * 4,
              dtype=np.float32)
relu = np.where(xs < 0, np.float32(0), xs)
write(BASIC / "relu.launch", f"""\
kernel relu
arch sm75
grid 1 1 1
block 32 1 1
buffer X f32[32] = {fmt(xs, 'f')}
buffer OUT f32[32] = zeros
param 0x160 ptr X
param 0x168 ptr OUT
param 0x170 u32 32
expect OUT f32 rel=1e-5 = {fmt(relu, 'f')}
""")
write(BASIC / "relu.types", """\
annotate 0x70 R4 float
annotate 0x80 P1 bool
""")

# ---------------------------------------------------------------------------
# fastdiv (sm75, reciprocal chain with magic-constant nudge)
# ---------------------------------------------------------------------------
write(BASIC / "fastdiv.sass", """\
.text.fastdiv:
S2R R0, SR_CTAID.X
S2R R3, SR_TID.X
IMAD R0, R0, c[0x0][0x0], R3
ISETP.GE.AND P0, PT, R0, c[0x0][0x178], PT
@P0 EXIT
MOV R9, 0x4
IMAD.WIDE R2, R0, R9, c[0x0][0x160]
IMAD.WIDE R4, R0, R9, c[0x0][0x168]
LDG.E R6, [R2]
LDG.E R7, [R4]
I2F.F32.U32 R8, R7
MUFU.RCP R8, R8
IADD3 R8, R8, -0x1, RZ
I2F.F32.U32 R10, R6
FMUL R10, R10, R8
F2I.FTZ.U32.F32.TRUNC R10, R10
IMAD.WIDE R12, R0, R9, c[0x0][0x170]
STG.E [R12], R10
EXIT
""")
write(BASIC / "fastdiv.manifest", "arch: sm75\n")


def fastdiv_oracle(a, b, bias=3):
    f = np.float32(1.0) / np.float32(b)
    for _ in range(bias):
        f = np.nextafter(f, np.float32(np.inf))
    bits = struct.unpack("<I", struct.pack("<f", float(f)))[0] - 1
    r = struct.unpack("<f", struct.pack("<I", bits & 0xFFFFFFFF))[0]
    p = np.float32(np.float32(a) * np.float32(r))
    return int(p)


da = np.array([1, 7, 100, 9999, 10000, 6, 42, 8191, 5000, 1,
               999, 123, 4567, 33, 10000, 2], dtype=np.uint64)
db = np.array([1, 7, 3, 999, 1000, 2, 5, 64, 11, 1000,
               37, 123, 89, 7, 1, 3], dtype=np.uint64)
dq = [fastdiv_oracle(int(x), int(y)) for x, y in zip(da, db)]
assert dq == [int(x) // int(y) for x, y in zip(da, db)], dq
write(BASIC / "fastdiv.launch", f"""\
kernel fastdiv
arch sm75
grid 1 1 1
block 16 1 1
buffer A u32[16] = {fmt(da, 'u')}
buffer B u32[16] = {fmt(db, 'u')}
buffer OUT u32[16] = zeros
param 0x160 ptr A
param 0x168 ptr B
param 0x170 ptr OUT
param 0x178 u32 16
expect OUT u32 = {fmt(dq, 'u')}
""")
write(BASIC / "fastdiv.types", """\
annotate 0xa0 R8 float
annotate 0xf0 R10 int
""")

# ---------------------------------------------------------------------------
# rsqrt listing (structural fixture from the walkthrough) + executable variant
# ---------------------------------------------------------------------------
write(BASIC / "listing_rsqrt.sass", """\
.text.rsqrt_listing:
FADD R25, R25, 1e-8
MUFU.RSQ R24, R25
IADD3 R0, R25, -0xd000000, RZ
ISETP.GT.AND P0, PT, R0, 0x727fffff, PT
@!P0 BRA 0x340
0x340: FMUL R0, R25, R24
EXIT
""")
write(BASIC / "listing_rsqrt.manifest", "arch: sm75\n")
write(BASIC / "listing_rsqrt.types", """\
annotate 0x0 R25 float
annotate 0x10 R24 float
annotate 0x20 R0 int
annotate 0x30 P0 bool
annotate 0x340 R0 float
""")

write(BASIC / "rsqrt_kernel.sass", """\
.text.rsqrt_kernel:
0x00: S2R R0, SR_CTAID.X
0x10: S2R R3, SR_TID.X
0x20: IMAD R0, R0, c[0x0][0x0], R3
0x30: ISETP.GE.AND P0, PT, R0, c[0x0][0x170], PT
0x40: @P0 EXIT
0x50: MOV R9, 0x4
0x60: IMAD.WIDE R2, R0, R9, c[0x0][0x160]
0x70: LDG.E R25, [R2]
0x80: FADD R25, R25, 1e-8
0x90: MUFU.RSQ R24, R25
0xa0: IADD3 R1, R25, -0xd000000, RZ
0xb0: ISETP.GT.AND P1, PT, R1, 0x727fffff, PT
0xc0: @!P1 BRA 0x100
0xf0: FADD R24, R24, R24
0x100: FMUL R5, R25, R24
0x110: IMAD.WIDE R6, R0, R9, c[0x0][0x168]
0x120: STG.E [R6], R5
0x130: EXIT
""")
write(BASIC / "rsqrt_kernel.manifest", "arch: sm75\n")


def rsqrt_oracle(x):
    x1 = np.float32(np.float32(x) + np.float32(1e-8))
    with np.errstate(invalid="ignore"):
        r = np.float32(1.0) / np.float32(np.sqrt(np.float64(x1), dtype=np.float64))
    r = np.float32(r)
    bits = struct.unpack("<I", struct.pack("<f", float(x1)))[0]
    t = (bits - 0xD000000) & 0xFFFFFFFF
    t = t - (1 << 32) if t >= (1 << 31) else t
    p1 = t > 0x727FFFFF
    if p1:
        r = np.float32(r + r)
    return float(np.float32(x1 * r))


rx = np.array([1.0, 4.0, 0.25, 16.0, 100.0, 0.0, 2.0, 9.0,
               -1.0, -4.0, 0.5, 64.0, 1e-6, 123.0, 0.125, 10000.0],
              dtype=np.float32)
rout = [rsqrt_oracle(float(v)) for v in rx]
write(BASIC / "rsqrt_kernel.launch", f"""\
kernel rsqrt_kernel
arch sm75
grid 1 1 1
block 16 1 1
buffer X f32[16] = {fmt(rx, 'f')}
buffer OUT f32[16] = zeros
param 0x160 ptr X
param 0x168 ptr OUT
param 0x170 u32 16
expect OUT f32 rel=1e-5 = {fmt(rout, 'f')}
""")

# ---------------------------------------------------------------------------
# dual-predicate branch (sm90)
# ---------------------------------------------------------------------------
write(BASIC / "dualpred.sass", """\
.text.dualpred:
0x2760: S2R R0, SR_TID.X
0x2770: MOV R9, 0x4
0x2780: IMAD.WIDE R4, R0, R9, c[0x0][0x210]
0x2790: LDG.E R24, [R4]
0x27a0: IMAD.WIDE R6, R0, R9, c[0x0][0x218]
0x27b0: LDG.E R2, [R6]
0x27c0: ISETP.EQ.AND P1, PT, R24, 0x1, PT
0x27d0: ISETP.NE.AND P0, PT, R2, RZ, PT
0x27e0: IMAD.WIDE R8, R0, R9, c[0x0][0x220]
0x27f0: @!P0 BRA P1, 0x2810
0x2800: BRA 0x2820
0x2810: MOV R7, 0xde
0x2814: STG.E [R8], R7
0x2818: EXIT
0x2820: MOV R7, 0x6f
0x2824: STG.E [R8], R7
0x2828: EXIT
""")
write(BASIC / "dualpred.manifest", "arch: sm90\n")
A = [1, 1, 0, 0, 2, 1, 7, 1]
B = [0, 5, 0, 5, 0, 0, 9, 1]
dp = [0xDE if (bb == 0 and aa == 1) else 0x6F for aa, bb in zip(A, B)]
write(BASIC / "dualpred.launch", f"""\
kernel dualpred
arch sm90
grid 1 1 1
block 8 1 1
buffer A u32[8] = {fmt(A, 'u')}
buffer B u32[8] = {fmt(B, 'u')}
buffer OUT u32[8] = zeros
param 0x210 ptr A
param 0x218 ptr B
param 0x220 ptr OUT
expect OUT u32 = {fmt(dp, 'u')}
""")

# ---------------------------------------------------------------------------
# device function (sm75)
# ---------------------------------------------------------------------------
write(BASIC / "devicefunc.sass", """\
.text.devfn:
0x180: S2R R0, SR_TID.X
0x190: MOV R9, 0x4
0x1a0: IMAD.WIDE R4, R0, R9, c[0x0][0x160]
0x1b0: MOV R8, 0x40000000
0x1c0: MOV R6, 0x41200000
0x210: CALL.ABS.NOINC 0x780
0x220: FADD R8, R2, 1.0
0x230: IMAD.WIDE R10, R0, R9, c[0x0][0x168]
0x240: STG.E [R10], R8
0x250: EXIT
0x780: LDG.E R2, [R4]
0x790: FFMA R2, R2, R8, R6
0x7a0: RET
""")
write(BASIC / "devicefunc.manifest", """\
arch: sm75
call_target 0x210 -> 0x780
""")
dx = np.array([0.5, 1.0, -2.0, 3.25, 7.5, 0.0, -1.5, 10.0,
               2.5, 4.0, -8.0, 0.75, 5.5, -0.25, 6.0, 9.0], dtype=np.float32)
dres = np.float32(np.float32(dx * np.float32(2.0) + np.float32(10.0))
                  + np.float32(1.0))
write(BASIC / "devicefunc.launch", f"""\
kernel devfn
arch sm75
grid 1 1 1
block 16 1 1
buffer X f32[16] = {fmt(dx, 'f')}
buffer OUT f32[16] = zeros
param 0x160 ptr X
param 0x168 ptr OUT
expect OUT f32 rel=1e-5 = {fmt(dres, 'f')}
""")

# ---------------------------------------------------------------------------
# 64-bit carry-chain subtraction + compare (sm90), executable
# ---------------------------------------------------------------------------
write(BASIC / "carrysub.sass", """\
.text.carrysub:
S2R R0, SR_TID.X
S2R R1, SR_CTAID.X
IMAD R0, R1, c[0x0][0x0], R0
ULDC.64 UR6, c[0x0][0x218]
ULDC.64 UR4, c[0x0][0x220]
MOV R9, 0x4
IMAD.WIDE R2, R0, R9, c[0x0][0x210]
LDG.E R6, [R2]
SHF.R.S32.HI R7, RZ, 0x1f, R6
IADD3 R4, P0, R6, -UR6, RZ
IADD3.X R5, R7, ~UR7, RZ, P0, !PT
MOV R9, 0x8
IMAD.WIDE R10, R0, R9, c[0x0][0x228]
STG.E.64 R4, [R10]
ISETP.GE.U32.AND P1, PT, R4, UR4, PT
ISETP.GE.AND.EX P1, PT, R5, UR5, PT, P1
SEL R12, 0x1, RZ, P1
MOV R13, 0x4
IMAD.WIDE R14, R0, R13, c[0x0][0x230]
STG.E [R14], R12
EXIT
""")
write(BASIC / "carrysub.manifest", "arch: sm90\n")
rng = np.random.default_rng(12345)
n = 1024
ivals = rng.integers(-(2 ** 31), 2 ** 31, size=n, dtype=np.int64).astype(np.int32)
delta = np.int64(-123456789012345)
limit = np.int64(987654321)
diff = ivals.astype(np.int64) - delta
pred = (diff >= limit).astype(np.uint32)
du64 = diff.view(np.uint64)
write(BASIC / "carrysub.launch", f"""\
kernel carrysub
arch sm90
grid 8 1 1
block 128 1 1
buffer I i32[{n}] = {fmt(ivals, 'u')}
buffer OUT64 u64[{n}] = zeros
buffer OUTP u32[{n}] = zeros
param 0x210 ptr I
param 0x218 i64 {int(delta)}
param 0x220 i64 {int(limit)}
param 0x228 ptr OUT64
param 0x230 ptr OUTP
expect OUT64 u64 = {fmt(du64, 'u')}
expect OUTP u32 = {fmt(pred, 'u')}
""")

# ---------------------------------------------------------------------------
# loop with carried values (sm75)
# ---------------------------------------------------------------------------
write(BASIC / "sumloop.sass", """\
.text.sumloop:
S2R R0, SR_TID.X
SHF.L.U32 R1, R0, 0x5, RZ
MOV R9, 0x4
IMAD.WIDE R2, R0, R9, c[0x0][0x168]
MOV R4, c[0x0][0x160]
MOV R5, c[0x0][0x164]
IADD3 R4, P0, R1, R4, RZ
IADD3.X R5, RZ, R5, RZ, P0, !PT
MOV R6, RZ
MOV R7, 0x8
0xa0: LDG.E R8, [R4]
IADD3 R6, R6, R8, RZ
IADD3 R4, P0, R4, 0x4, RZ
IADD3.X R5, RZ, R5, RZ, P0, !PT
IADD3 R7, R7, -0x1, RZ
ISETP.NE.AND P1, PT, R7, RZ, PT
@P1 BRA 0xa0
STG.E [R2], R6
EXIT
""")
write(BASIC / "sumloop.manifest", "arch: sm75\n")
sl_in = rng.integers(0, 1000, size=16 * 8, dtype=np.uint32)
sl_out = sl_in.reshape(16, 8).sum(axis=1, dtype=np.uint32)
write(BASIC / "sumloop.launch", f"""\
kernel sumloop
arch sm75
grid 1 1 1
block 16 1 1
buffer A u32[128] = {fmt(sl_in, 'u')}
buffer OUT u32[16] = zeros
param 0x160 ptr A
param 0x168 ptr OUT
expect OUT u32 = {fmt(sl_out, 'u')}
""")

# ---------------------------------------------------------------------------
# warp shuffle butterfly reduction (sm75)
# ---------------------------------------------------------------------------
write(BASIC / "warpshfl.sass", """\
.text.warpshfl:
S2R R0, SR_TID.X
MOV R9, 0x4
IMAD.WIDE R2, R0, R9, c[0x0][0x160]
LDG.E R4, [R2]
WARPSYNC 0xffffffff
SHFL.BFLY PT, R5, R4, 0x10, 0x1f
IADD3 R4, R4, R5, RZ
SHFL.BFLY PT, R5, R4, 0x8, 0x1f
IADD3 R4, R4, R5, RZ
SHFL.BFLY PT, R5, R4, 0x4, 0x1f
IADD3 R4, R4, R5, RZ
SHFL.BFLY PT, R5, R4, 0x2, 0x1f
IADD3 R4, R4, R5, RZ
SHFL.BFLY PT, R5, R4, 0x1, 0x1f
IADD3 R4, R4, R5, RZ
IMAD.WIDE R6, R0, R9, c[0x0][0x168]
STG.E [R6], R4
EXIT
""")
write(BASIC / "warpshfl.manifest", "arch: sm75\n")
ws_in = rng.integers(0, 100, size=32, dtype=np.uint32)
ws_out = np.full(32, ws_in.sum(dtype=np.uint32), dtype=np.uint32)
write(BASIC / "warpshfl.launch", f"""\
kernel warpshfl
arch sm75
grid 1 1 1
block 32 1 1
buffer A u32[32] = {fmt(ws_in, 'u')}
buffer OUT u32[32] = zeros
param 0x160 ptr A
param 0x168 ptr OUT
expect OUT u32 = {fmt(ws_out, 'u')}
""")

# ---------------------------------------------------------------------------
# shared-memory neighbor exchange across a barrier (sm75)
# ---------------------------------------------------------------------------
write(BASIC / "barrier_reduce.sass", """\
.text.barrier_reduce:
S2R R0, SR_TID.X
MOV R9, 0x4
IMAD.WIDE R2, R0, R9, c[0x0][0x160]
LDG.E R4, [R2]
SHF.L.U32 R5, R0, 0x2, RZ
STS [R5], R4
BAR.SYNC 0x0
IADD3 R6, R0, 0x1, RZ
LOP3.LUT R6, R6, 0x1f, RZ, 0xc0
SHF.L.U32 R6, R6, 0x2, RZ
LDS R7, [R6]
IADD3 R8, R4, R7, RZ
IMAD.WIDE R10, R0, R9, c[0x0][0x168]
STG.E [R10], R8
EXIT
""")
write(BASIC / "barrier_reduce.manifest", "arch: sm75\n")
br_in = rng.integers(0, 1000, size=32, dtype=np.uint32)
br_out = br_in + np.roll(br_in, -1)
write(BASIC / "barrier_reduce.launch", f"""\
kernel barrier_reduce
arch sm75
grid 1 1 1
block 32 1 1
shared 256
buffer A u32[32] = {fmt(br_in, 'u')}
buffer OUT u32[32] = zeros
param 0x160 ptr A
param 0x168 ptr OUT
expect OUT u32 = {fmt(br_out, 'u')}
""")

# ---------------------------------------------------------------------------
# crypto: xorshift32 step (integer only)
# ---------------------------------------------------------------------------
write(CRYPTO / "xorshift.sass", """\
.text.xorshift:
S2R R0, SR_TID.X
MOV R9, 0x4
IMAD.WIDE R2, R0, R9, c[0x0][0x160]
LDG.E R4, [R2]
SHF.L.U32 R5, R4, 0xd, RZ
LOP3.LUT R4, R4, R5, RZ, 0x3c
SHR.U32 R5, R4, 0x11
LOP3.LUT R4, R4, R5, RZ, 0x3c
SHF.L.U32 R5, R4, 0x5, RZ
LOP3.LUT R4, R4, R5, RZ, 0x3c
IMAD.WIDE R6, R0, R9, c[0x0][0x168]
STG.E [R6], R4
EXIT
""")
write(CRYPTO / "xorshift.manifest", "arch: sm75\n")
xx = rng.integers(1, 2 ** 32, size=32, dtype=np.uint64).astype(np.uint32)
v = xx.copy()
v ^= v << np.uint32(13)
v ^= v >> np.uint32(17)
v ^= v << np.uint32(5)
write(CRYPTO / "xorshift.launch", f"""\
kernel xorshift
arch sm75
grid 1 1 1
block 32 1 1
buffer X u32[32] = {fmt(xx, 'u')}
buffer OUT u32[32] = zeros
param 0x160 ptr X
param 0x168 ptr OUT
expect OUT u32 = {fmt(v, 'u')}
""")
write(CRYPTO / "xorshift.types", """\
annotate 0x30 R4 int
annotate 0x40 R5 int
""")

# ---------------------------------------------------------------------------
# crypto: rotate-multiply-mix checksum (integer only)
# ---------------------------------------------------------------------------
write(CRYPTO / "mix.sass", """\
.text.mix:
S2R R0, SR_TID.X
MOV R9, 0x4
IMAD.WIDE R2, R0, R9, c[0x0][0x160]
LDG.E R4, [R2]
SHF.L.U32.HI R5, R4, 0x3, R4
IMAD R6, R4, 0x9e3779b1, RZ
SHR.U32 R7, R6, 0x10
LOP3.LUT R8, R5, R7, RZ, 0x3c
IADD3 R8, R8, 0x55, RZ
IMAD.WIDE R10, R0, R9, c[0x0][0x168]
STG.E [R10], R8
EXIT
""")
write(CRYPTO / "mix.manifest", "arch: sm75\n")
mx = rng.integers(0, 2 ** 32, size=32, dtype=np.uint64).astype(np.uint32)
rot = (mx << np.uint32(3)) | (mx >> np.uint32(29))
prod = (mx * np.uint32(0x9E3779B1))
mix_out = ((rot ^ (prod >> np.uint32(16))) + np.uint32(0x55)).astype(np.uint32)
write(CRYPTO / "mix.launch", f"""\
kernel mix
arch sm75
grid 1 1 1
block 32 1 1
buffer X u32[32] = {fmt(mx, 'u')}
buffer OUT u32[32] = zeros
param 0x160 ptr X
param 0x168 ptr OUT
expect OUT u32 = {fmt(mix_out, 'u')}
""")

# ---------------------------------------------------------------------------
# golden-only fixtures (lift structure, no execution)
# ---------------------------------------------------------------------------
write(GOLDEN / "xmad_sm52.sass", """\
.text.xmad_pair:
XMAD.MRG R2, R0, R0.H1, RZ
XMAD R3, R0, R2, RZ
XMAD.PSL.CBCC R4, R0.H1, R3, R1
EXIT
.text.xmad_addr:
XMAD.MRG R3, R0.reuse, c[0x0][0x8].H1, RZ
XMAD R2, R0.reuse, c[0x0][0x8], R2
XMAD.PSL.CBCC R0, R0.H1, R3.H1, R2
EXIT
""")
write(GOLDEN / "xmad_sm52.manifest", "arch: sm52\n")

write(GOLDEN / "pairs64.sass", """\
.text.pair64:
IADD3 R1, P1, PT, R2, 0x4, RZ
IADD3.X R4, RZ, R6, RZ, P1, PT
EXIT
.text.cmp64:
ISETP.EQ.U32.AND P0, PT, R6, 0x1, PT
ISETP.EQ.U32.AND.EX P0, PT, R7, RZ, PT, P0
EXIT
""")
write(GOLDEN / "pairs64.manifest", "arch: sm90\n")

write(GOLDEN / "carrysub_listing.sass", """\
.text.carrysub_listing:
SHF.R.S32.HI R5, RZ, 0x1f, R0
IADD3 R3, P0, R0, -UR6, RZ
IADD3.X R4, R5, ~UR7, RZ, P0, !PT
ISETP.GE.U32.AND P0, PT, R3, UR5, PT
ISETP.GE.AND.EX P0, PT, R4, UR4, PT, P0
EXIT
""")
write(GOLDEN / "carrysub_listing.manifest", "arch: sm90\n")

write(GOLDEN / "tensorish.sass", """\
.text.tensorish:
HMMA.16816.F32 R20, R38, R57, R20
HGMMA.64x128x16.F32 R128, R192, R196, R128
QGMMA.64x128x32.F8 R12, R64, R96, R12
HADD2 R240, R241, R242
HFMA2.BF16 R243, R244, R245, R243
EXIT
""")
write(GOLDEN / "tensorish.manifest", "arch: sm90\n")

print("done")


# ---------------------------------------------------------------------------
# 64-bit indexed gather: exercises MOV64, CAST64 and LEA64 aggregation
# ---------------------------------------------------------------------------
def gen_int64idx():
    write(BASIC / "int64idx.sass", """\
.text.int64idx:
S2R R0, SR_TID.X
MOV R9, 0x4
IMAD.WIDE R2, R0, R9, c[0x0][0x168]
LDG.E R6, [R2]
SHF.R.S32.HI R7, RZ, 0x1f, R6
MOV R4, c[0x0][0x160]
MOV R5, c[0x0][0x164]
LEA R10, P0, R6, R4, 0x2
LEA.HI.X R11, R6, R5, R7, 0x2, P0
LDG.E R12, [R10]
IMAD.WIDE R14, R0, R9, c[0x0][0x170]
STG.E [R14], R12
EXIT
""")
    write(BASIC / "int64idx.manifest", "arch: sm75\n")
    r = np.random.default_rng(99)
    data = r.integers(0, 10_000, size=64, dtype=np.uint32)
    idx = r.integers(0, 64, size=32, dtype=np.uint32)
    out = data[idx]
    write(BASIC / "int64idx.launch", f"""\
kernel int64idx
arch sm75
grid 1 1 1
block 32 1 1
buffer DATA u32[64] = {fmt(data, 'u')}
buffer IDX u32[32] = {fmt(idx, 'u')}
buffer OUT u32[32] = zeros
param 0x160 ptr DATA
param 0x168 ptr IDX
param 0x170 ptr OUT
expect OUT u32 = {fmt(out, 'u')}
""")
    write(BASIC / "int64idx.types", """\
annotate 0x30 R6 int
annotate 0x90 R12 int
""")


gen_int64idx()


# ---------------------------------------------------------------------------
# packed-half add: boundary between a 32-bit load and half2 arithmetic
# ---------------------------------------------------------------------------
def gen_half2add():
    write(BASIC / "half2add.sass", """\
.text.half2add:
S2R R0, SR_TID.X
MOV R9, 0x4
IMAD.WIDE R2, R0, R9, c[0x0][0x160]
LDG.E R4, [R2]
HADD2 R5, R4, R4
IMAD.WIDE R6, R0, R9, c[0x0][0x168]
STG.E [R6], R5
EXIT
""")
    write(BASIC / "half2add.manifest", "arch: sm75\n")
    xs = np.array([1.0, 2.0, 0.5, -1.5, 3.0, 0.25, -2.0, 8.0,
                   4.5, -0.75, 16.0, 0.125, -6.0, 1.25, 9.0, -3.5],
                  dtype=np.float16)
    out = np.float16(xs + xs)
    write(BASIC / "half2add.launch", f"""\
kernel half2add
arch sm75
grid 1 1 1
block 8 1 1
buffer X f16[16] = {fmt(xs, 'f')}
buffer OUT f16[16] = zeros
param 0x160 ptr X
param 0x168 ptr OUT
expect OUT f16 rel=1e-2 = {fmt(out, 'f')}
""")


gen_half2add()
