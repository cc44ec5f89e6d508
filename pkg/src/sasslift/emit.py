"""Lower typed SSIR to LLVM-flavored textual IR.

The dialect is a documented subset of LLVM IR: integer/float arithmetic,
bitcasts and width conversions, loads/stores through explicit address
spaces, phi/select, icmp/fcmp, branches, and calls to declared
intrinsics.  Lifted kernels have a ``void()`` signature; parameters are
loads from the constant address space at ``param_base + offset``, and
special registers become intrinsic calls.

Emission renders every value at its recovered type and never "repairs" a
float operation fed by integer-typed values: that mismatch is exactly
what the downstream verifier must catch when type recovery is ablated.
Bit-preserving adapters (same-width bitcast, bool zext) are inserted
where they cannot change semantics.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

from . import lattice as L
from .operands import (
    ConstMem, Imm, MemRef, Opcode, Operand, Pred, Reg, SReg, UReg, ValueRef,
    ZeroReg,
)
from .ssir import (
    Br, CallRet, CondBr, CondExit, Exit, Instruction, LiftedFunction, Phase,
    Provenance, Ret,
)


class EmitError(RuntimeError):
    pass


@dataclass
class EmitConfig:
    """Address-space ids follow the NVVM convention; names are overridable."""

    addrspace_global: int = 1
    addrspace_shared: int = 3
    addrspace_constant: int = 4
    addrspace_local: int = 5
    target_annotation: str = "sass-lifted"
    sreg_intrinsics: dict = field(default_factory=lambda: dict(_SREG_MAP))
    barrier0: str = "llvm.nvvm.barrier0"

    def spaces(self):
        return {
            "global": self.addrspace_global,
            "shared": self.addrspace_shared,
            "constant": self.addrspace_constant,
            "local": self.addrspace_local,
        }


_SREG_MAP = {
    "SR_TID.X": "llvm.nvvm.read.ptx.sreg.tid.x",
    "SR_TID.Y": "llvm.nvvm.read.ptx.sreg.tid.y",
    "SR_TID.Z": "llvm.nvvm.read.ptx.sreg.tid.z",
    "SR_CTAID.X": "llvm.nvvm.read.ptx.sreg.ctaid.x",
    "SR_CTAID.Y": "llvm.nvvm.read.ptx.sreg.ctaid.y",
    "SR_CTAID.Z": "llvm.nvvm.read.ptx.sreg.ctaid.z",
    "SR_NTID.X": "llvm.nvvm.read.ptx.sreg.ntid.x",
    "SR_NTID.Y": "llvm.nvvm.read.ptx.sreg.ntid.y",
    "SR_NTID.Z": "llvm.nvvm.read.ptx.sreg.ntid.z",
    "SR_NCTAID.X": "llvm.nvvm.read.ptx.sreg.nctaid.x",
    "SR_NCTAID.Y": "llvm.nvvm.read.ptx.sreg.nctaid.y",
    "SR_NCTAID.Z": "llvm.nvvm.read.ptx.sreg.nctaid.z",
    "SR_LANEID": "llvm.nvvm.read.ptx.sreg.laneid",
}

# Float16/BF16 values live packed two-per-register, so their 32-bit
# container emits as a two-element vector.
LLTYPE = {
    "Int32": "i32", "Float32": "float", "Int64": "i64", "Float64": "double",
    "Bool": "i1", "Float16": "<2 x half>", "BF16": "<2 x bfloat>",
}

_FLOAT_TYPES = {"float", "double", "half", "bfloat"}
_WIDTH = {"i1": 1, "i32": 32, "i64": 64, "float": 32, "double": 64,
          "half": 16, "bfloat": 16, "<2 x half>": 32, "<2 x bfloat>": 32}

_MUFU_FN = {"RCP": "rcp", "RSQ": "rsq", "SIN": "sin", "COS": "cos",
            "EX2": "ex2", "LG2": "lg2", "SQRT": "sqrt"}

_ICMP = {"EQ": "eq", "NE": "ne", "LT": "slt", "LE": "sle", "GT": "sgt",
         "GE": "sge"}
_ICMP_U = {"EQ": "eq", "NE": "ne", "LT": "ult", "LE": "ule", "GT": "ugt",
           "GE": "uge"}
_FCMP = {"EQ": "oeq", "NE": "une", "LT": "olt", "LE": "ole", "GT": "ogt",
         "GE": "oge"}


def float_hex(value: float, ty: str) -> str:
    if ty == "double":
        return "0x%016X" % struct.unpack("<Q", struct.pack("<d", value))[0]
    if ty == "float":
        # LLVM prints float constants as the double encoding of the value
        import numpy as np

        return "0x%016X" % struct.unpack(
            "<Q", struct.pack("<d", float(np.float32(value))))[0]
    if ty == "half":
        return "0xH%04X" % struct.unpack("<H", struct.pack("<e", value))[0]
    if ty == "bfloat":
        bits = struct.unpack("<I", struct.pack("<f", value))[0]
        return "0xR%04X" % ((bits >> 16) & 0xFFFF)
    raise EmitError(f"not a float type: {ty}")


class FunctionEmitter:
    def __init__(self, fn: LiftedFunction, config: EmitConfig):
        self.fn = fn
        self.config = config
        self.lines: list[str] = []
        self.declared: dict[str, str] = {}
        self.tmp = 0
        self.exit_label: str | None = None
        self.quad_parts: dict[int, list[str]] = {}
        # values whose textual definition has a natural type (i1 compares,
        # carry bits) that may differ from the recovered type
        self.emitted: dict[int, str] = {}

    # -- small helpers --------------------------------------------------
    def fresh(self) -> str:
        self.tmp += 1
        return f"%t{self.tmp - 1}"

    def out(self, text: str):
        self.lines.append("  " + text)

    def declare(self, name: str, signature: str):
        self.declared.setdefault(name, signature)

    def vtype(self, vid: int) -> str:
        info = self.fn.values.get(vid)
        if info is None or info.final_type is None:
            raise EmitError(f"{self.fn.name}: %v{vid} has no recovered type")
        if info.provenance == Provenance.UNSET:
            raise EmitError(
                f"{self.fn.name}: %v{vid} reached emission with unset "
                f"provenance (pipeline ordering bug)")
        if info.final_type == "Int128":
            return "i128"
        return LLTYPE[info.final_type]

    def vname(self, vid: int) -> str:
        return f"%v{vid}"

    # -- operand materialization ----------------------------------------
    def imm_text(self, imm: Imm, ty: str) -> str:
        if ty in _FLOAT_TYPES:
            if imm.is_float:
                return float_hex(imm.float_value(), ty)
            # integer literal consumed as float: reinterpret the bits
            t = self.fresh()
            w = _WIDTH[ty]
            ity = f"i{w}"
            bits = imm.bits & ((1 << w) - 1)
            self.out(f"{t} = bitcast {ity} {bits} to {ty}")
            return t
        if ty == "i1":
            return "1" if imm.bits & 1 else "0"
        w = _WIDTH[ty]
        return str(imm.int_value(w, signed=True))

    def value(self, op: Operand, want: str | None = None) -> tuple[str, str]:
        """Materialize an operand; returns (text, type)."""
        if isinstance(op, Imm):
            ty = want or "i32"
            return self.imm_text(op, ty), ty
        if isinstance(op, ZeroReg):
            ty = want or "i32"
            if ty in _FLOAT_TYPES:
                return float_hex(0.0, ty), ty
            return "0", ty
        if isinstance(op, Pred):
            assert op.is_pt()
            return ("0" if op.negated else "1"), "i1"
        if isinstance(op, ConstMem):
            return self.const_load(op, want)
        if isinstance(op, ValueRef):
            return self.value_ref(op, want)
        raise EmitError(f"cannot materialize operand {op!r}")

    def value_ref(self, ref: ValueRef, want: str | None) -> tuple[str, str]:
        info = self.fn.values[ref.vid]
        ty = self.emitted.get(ref.vid) or self.vtype(ref.vid)
        if info.is_undef:
            name = "undef"
        else:
            name = self.vname(ref.vid)
        # Bit-preserving adapters only, and never INTO a float type: feeding
        # a float slot from an integer-typed value is precisely the breakage
        # the type-recovery ablations must surface, not hide.
        if want is not None and want != ty:
            if name == "undef":
                ty = want
            elif ty == "i1" and want in ("i32", "i64"):
                t = self.fresh()
                self.out(f"{t} = zext i1 {name} to {want}")
                name, ty = t, want
            elif want == "i1" and ty in ("i32", "i64"):
                t = self.fresh()
                self.out(f"{t} = icmp ne {ty} {name}, 0")
                name, ty = t, "i1"
            elif _WIDTH.get(ty) == _WIDTH.get(want) and \
                    not _is_floatish(want):
                t = self.fresh()
                self.out(f"{t} = bitcast {ty} {name} to {want}")
                name, ty = t, want
        name = self.apply_flags(name, ty, ref)
        return name, ty

    def apply_flags(self, name: str, ty: str, ref: ValueRef) -> str:
        if ref.half:
            t = self.fresh()
            if ref.half == "H1":
                self.out(f"{t} = lshr {ty} {name}, 16")
            else:
                self.out(f"{t} = and {ty} {name}, 65535")
            name = t
        if ref.absolute:
            t = self.fresh()
            if ty in _FLOAT_TYPES:
                intr = f"llvm.fabs.{_fsuffix(ty)}"
                self.declare(intr, f"declare {ty} @{intr}({ty})")
                self.out(f"{t} = call {ty} @{intr}({ty} {name})")
            else:
                intr = f"llvm.abs.{ty}"
                self.declare(intr, f"declare {ty} @{intr}({ty}, i1)")
                self.out(f"{t} = call {ty} @{intr}({ty} {name}, i1 0)")
            name = t
        if ref.bitnot:
            t = self.fresh()
            self.out(f"{t} = xor {ty} {name}, -1")
            name = t
        if ref.negated:
            t = self.fresh()
            if ty == "i1":
                self.out(f"{t} = xor i1 {name}, true")
            elif ty in _FLOAT_TYPES:
                self.out(f"{t} = fneg {ty} {name}")
            else:
                self.out(f"{t} = sub {ty} 0, {name}")
            name = t
        return name

    def const_load(self, cm: ConstMem, want: str | None) -> tuple[str, str]:
        ty = want or ("i64" if cm.width == 2 else "i32")
        addr = (cm.bank << 16) | cm.offset
        p = self.fresh()
        sp = self.config.addrspace_constant
        self.out(f"{p} = inttoptr i64 {addr} to ptr addrspace({sp})")
        t = self.fresh()
        self.out(f"{t} = load {ty}, ptr addrspace({sp}) {p}")
        return t, ty

    def bool_operand(self, op: Operand) -> str:
        name, _ = self.value(op, "i1")
        return name

    # -- address computation ---------------------------------------------
    def address(self, mem: MemRef, space: str) -> str:
        """Materialize the byte address of a memory operand as i64."""
        total = None
        if mem.base is not None:
            name, ty = self.value(mem.base)
            if ty != "i64":
                t = self.fresh()
                if ty in _FLOAT_TYPES:
                    b = self.fresh()
                    self.out(f"{b} = bitcast {ty} {name} to i{_WIDTH[ty]}")
                    name, ty = b, f"i{_WIDTH[ty]}"
                self.out(f"{t} = zext {ty} {name} to i64")
                name = t
            total = name
        if mem.ureg is not None:
            name, ty = self.value(mem.ureg)
            if ty != "i64":
                t = self.fresh()
                self.out(f"{t} = zext {ty} {name} to i64")
                name = t
            if total is None:
                total = name
            else:
                t = self.fresh()
                self.out(f"{t} = add i64 {total}, {name}")
                total = t
        if total is None:
            total = str(mem.offset)
        elif mem.offset:
            t = self.fresh()
            self.out(f"{t} = add i64 {total}, {mem.offset}")
            total = t
        p = self.fresh()
        sp = self.config.spaces()[space]
        self.out(f"{p} = inttoptr i64 {total} to ptr addrspace({sp})")
        return p

    # -- per-instruction emission ----------------------------------------
    def emit_function(self) -> str:
        fn = self.fn
        fn.require_phase(Phase.TYPED)
        self.lines = []
        header = f"define void @{fn.name}() {{"
        order = [fn.blocks[fn.entry]] + [b for b in fn.block_order()
                                         if b.bid != fn.entry]
        for blk in order:
            self.lines.append(f"bb{blk.bid}:")
            for inst in blk.instructions:
                self.emit_inst(inst)
            self.emit_terminator(blk)
        if self.exit_label is not None:
            self.lines.append(f"{self.exit_label[1:]}:")
            self.out("ret void")
        return header + "\n" + "\n".join(self.lines) + "\n}\n"

    def need_exit_block(self) -> str:
        if self.exit_label is None:
            self.exit_label = "%exit"
        return self.exit_label

    def def_type(self, inst: Instruction) -> str:
        d = inst.defs[0]
        assert isinstance(d, ValueRef)
        return self.vtype(d.vid)

    def dname(self, inst: Instruction, idx: int = 0) -> str:
        d = inst.defs[idx]
        assert isinstance(d, ValueRef)
        return self.vname(d.vid)

    def emit_inst(self, inst: Instruction):
        base = inst.opcode.base
        handler = getattr(self, f"_op_{base.lower()}", None)
        if handler is not None:
            handler(inst)
            return
        if base in ("NOP", "MEMBAR", "DEPBAR", "LDGDEPBAR", "FENCE", "ERRBAR"):
            return  # fences are no-ops under the sequential-CTA model
        if base in ("BSSY", "BSYNC", "SSY", "SYNC"):
            name = f"sass.convergence.{base.lower()}"
            self.declare(name, f"declare void @{name}()")
            self.out(f"call void @{name}()")
            return
        self.emit_opaque(inst)

    # arithmetic -----------------------------------------------------------
    def _binop_float(self, inst, op):
        ty = self.def_type(inst)
        a, _ = self.value(inst.uses[0], ty)
        b, _ = self.value(inst.uses[1], ty)
        self.out(f"{self.dname(inst)} = {op} {ty} {a}, {b}")

    def _op_fadd(self, inst):
        self._binop_float(inst, "fadd")

    def _op_fmul(self, inst):
        self._binop_float(inst, "fmul")

    def _op_dadd(self, inst):
        self._binop_float(inst, "fadd")

    def _op_dmul(self, inst):
        self._binop_float(inst, "fmul")

    def _natural_float(self, inst) -> str:
        """Float type the op requires; falls back to the opcode family when
        recovery assigned something else (ablation modes)."""
        ty = self.def_type(inst)
        if ty in _FLOAT_TYPES:
            return ty
        base = inst.opcode.base
        if base.startswith("D"):
            return "double"
        if base.startswith("H"):
            return "<2 x bfloat>" if inst.opcode.has_mod("BF16") \
                else "<2 x half>"
        return "float"

    def _op_ffma(self, inst):
        ty = self._natural_float(inst)
        a, _ = self.value(inst.uses[0], ty)
        b, _ = self.value(inst.uses[1], ty)
        c, _ = self.value(inst.uses[2], ty)
        intr = f"llvm.fma.{_fsuffix(ty)}"
        self.declare(intr, f"declare {ty} @{intr}({ty}, {ty}, {ty})")
        self.out(f"{self.dname(inst)} = call {ty} @{intr}"
                 f"({ty} {a}, {ty} {b}, {ty} {c})")

    _op_dfma = _op_ffma

    def _op_hadd2(self, inst):
        ty = self._natural_float(inst)
        a, _ = self.value(inst.uses[0], ty)
        b, _ = self.value(inst.uses[1], ty)
        self.out(f"{self.dname(inst)} = fadd {ty} {a}, {b}")

    def _op_hmul2(self, inst):
        ty = self._natural_float(inst)
        a, _ = self.value(inst.uses[0], ty)
        b, _ = self.value(inst.uses[1], ty)
        self.out(f"{self.dname(inst)} = fmul {ty} {a}, {b}")

    def _op_hfma2(self, inst):
        ty = self._natural_float(inst)
        a, _ = self.value(inst.uses[0], ty)
        b, _ = self.value(inst.uses[1], ty)
        c, _ = self.value(inst.uses[2], ty)
        intr = f"llvm.fma.{_fsuffix(ty)}"
        self.declare(intr, f"declare {ty} @{intr}({ty}, {ty}, {ty})")
        self.out(f"{self.dname(inst)} = call {ty} @{intr}"
                 f"({ty} {a}, {ty} {b}, {ty} {c})")

    def _op_mufu(self, inst):
        fnname = next((m for m in inst.opcode.modifiers if m in _MUFU_FN), None)
        if fnname is None:
            self.emit_opaque(inst)
            return
        intr = f"sass.{_MUFU_FN[fnname]}.approx.f32"
        self.declare(intr, f"declare float @{intr}(float)")
        a, _ = self.value(inst.uses[0], "float")
        self.out(f"{self.dname(inst)} = call float @{intr}(float {a})")

    def _op_fmnmx(self, inst):
        ty = self._natural_float(inst)
        a, _ = self.value(inst.uses[0], ty)
        b, _ = self.value(inst.uses[1], ty)
        sel = inst.uses[2] if len(inst.uses) > 2 else Pred(7)
        mn = f"llvm.minnum.{_fsuffix(ty)}"
        mx = f"llvm.maxnum.{_fsuffix(ty)}"
        for intr in (mn, mx):
            self.declare(intr, f"declare {ty} @{intr}({ty}, {ty})")
        if isinstance(sel, Pred) and sel.is_pt():
            intr = mx if sel.negated else mn
            self.out(f"{self.dname(inst)} = call {ty} @{intr}"
                     f"({ty} {a}, {ty} {b})")
            return
        p = self.bool_operand(sel)
        t1, t2 = self.fresh(), self.fresh()
        self.out(f"{t1} = call {ty} @{mn}({ty} {a}, {ty} {b})")
        self.out(f"{t2} = call {ty} @{mx}({ty} {a}, {ty} {b})")
        self.out(f"{self.dname(inst)} = select i1 {p}, {ty} {t1}, {ty} {t2}")

    def _op_imnmx(self, inst):
        ty = self.def_type(inst)
        unsigned = inst.opcode.has_mod("U32")
        a, _ = self.value(inst.uses[0], ty)
        b, _ = self.value(inst.uses[1], ty)
        sel = inst.uses[2] if len(inst.uses) > 2 else Pred(7)
        mn = f"llvm.{'u' if unsigned else 's'}min.{ty}"
        mx = f"llvm.{'u' if unsigned else 's'}max.{ty}"
        for intr in (mn, mx):
            self.declare(intr, f"declare {ty} @{intr}({ty}, {ty})")
        if isinstance(sel, Pred) and sel.is_pt():
            intr = mx if sel.negated else mn
            self.out(f"{self.dname(inst)} = call {ty} @{intr}"
                     f"({ty} {a}, {ty} {b})")
            return
        p = self.bool_operand(sel)
        t1, t2 = self.fresh(), self.fresh()
        self.out(f"{t1} = call {ty} @{mn}({ty} {a}, {ty} {b})")
        self.out(f"{t2} = call {ty} @{mx}({ty} {a}, {ty} {b})")
        self.out(f"{self.dname(inst)} = select i1 {p}, {ty} {t1}, {ty} {t2}")

    def _add_chain(self, inst, terms, result_ty, dest):
        acc = None
        for name, negate in terms:
            if acc is None:
                if negate:
                    t = self.fresh()
                    self.out(f"{t} = sub {result_ty} 0, {name}")
                    name = t
                acc = name
                continue
            t = self.fresh()
            opc = "sub" if negate else "add"
            self.out(f"{t} = {opc} {result_ty} {acc}, {name}")
            acc = t
        if acc is None:
            acc = "0"
        if acc != dest:
            self.out(f"{dest} = add {result_ty} {acc}, 0")

    def _op_iadd(self, inst):
        self._op_iadd3(inst)

    def _op_iadd3(self, inst):
        ty = "i32"
        has_carry_out = any(isinstance(a, ValueRef) for a in inst.aux_defs)
        carry_ins = [u for u in inst.uses[3:]]
        srcs = inst.uses[:3] if inst.opcode.base == "IADD3" else inst.uses
        if inst.opcode.base == "IADD":
            srcs, carry_ins = inst.uses[:2], list(inst.uses[2:])
        if not has_carry_out and not inst.opcode.has_mod("X"):
            terms = [t for t in self._int_terms_from(srcs, ty)]
            self._add_chain(inst, terms, ty, self.dname(inst))
            return
        # carry-aware form: widen to i64 so the carry-out bit is exact
        total = None
        inject = 0
        for op in srcs:
            if isinstance(op, ZeroReg):
                continue
            neg = getattr(op, "negated", False)
            ntt = getattr(op, "bitnot", False)
            if isinstance(op, ValueRef):
                stripped = ValueRef(op.vid, False, op.absolute, False, op.half)
                name, _ = self.value(stripped, ty)
            else:
                name, _ = self.value(op, ty)
            if neg or ntt:
                t = self.fresh()
                self.out(f"{t} = xor {ty} {name}, -1")
                name = t
                if neg:
                    inject += 1
            z = self.fresh()
            self.out(f"{z} = zext {ty} {name} to i64")
            if total is None:
                total = z
            else:
                t = self.fresh()
                self.out(f"{t} = add i64 {total}, {z}")
                total = t
        if total is None:
            total = "0"
        if inject:
            t = self.fresh()
            self.out(f"{t} = add i64 {total}, {inject}")
            total = t
        if inst.opcode.has_mod("X") and carry_ins:
            cin = self.bool_operand(carry_ins[0])
            z = self.fresh()
            self.out(f"{z} = zext i1 {cin} to i64")
            t = self.fresh()
            self.out(f"{t} = add i64 {total}, {z}")
            total = t
        self.out(f"{self.dname(inst)} = trunc i64 {total} to i32")
        for aux in inst.aux_defs:
            if isinstance(aux, ValueRef):
                hi = self.fresh()
                self.out(f"{hi} = lshr i64 {total}, 32")
                b = self.fresh()
                self.out(f"{b} = and i64 {hi}, 1")
                self.emitted[aux.vid] = "i1"
                self.out(f"{self.vname(aux.vid)} = icmp ne i64 {b}, 0")

    def _int_terms_from(self, srcs, ty):
        terms = []
        for op in srcs:
            if isinstance(op, ZeroReg):
                continue
            if isinstance(op, Imm) and op.bits == 0:
                continue
            neg = isinstance(op, ValueRef) and op.negated
            if isinstance(op, ValueRef):
                stripped = ValueRef(op.vid, False, op.absolute, op.bitnot,
                                    op.half)
                name, _ = self.value(stripped, ty)
            else:
                name, _ = self.value(op, ty)
            terms.append((name, neg))
        return terms

    def _op_iadd364(self, inst):
        self.emitted[inst.defs[0].vid] = "i64"
        terms = []
        for op in inst.uses:
            neg = isinstance(op, ValueRef) and op.negated
            if isinstance(op, ValueRef):
                stripped = ValueRef(op.vid, False, op.absolute, op.bitnot)
                name, _ = self.value(stripped, "i64")
            else:
                name, _ = self.value(op, "i64")
            terms.append((name, neg))
        self._add_chain(inst, terms, "i64", self.dname(inst))

    def _op_imad(self, inst):
        if inst.opcode.has_mod("WIDE"):
            # reached only with aggregation disabled; same semantics
            self._op_imad64(inst)
            return
        ty = "i32"
        a, _ = self.value(inst.uses[0], ty)
        b, _ = self.value(inst.uses[1], ty)
        if inst.opcode.has_mod("HI"):
            unsigned = inst.opcode.has_mod("U32")
            ext = "zext" if unsigned else "sext"
            a64, b64 = self.fresh(), self.fresh()
            self.out(f"{a64} = {ext} i32 {a} to i64")
            self.out(f"{b64} = {ext} i32 {b} to i64")
            m = self.fresh()
            self.out(f"{m} = mul i64 {a64}, {b64}")
            s = self.fresh()
            self.out(f"{s} = lshr i64 {m}, 32")
            lo = self.fresh()
            self.out(f"{lo} = trunc i64 {s} to i32")
            prod = lo
        else:
            prod = self.fresh()
            self.out(f"{prod} = mul i32 {a}, {b}")
        if len(inst.uses) > 2 and not _is_zero(inst.uses[2]):
            c, _ = self.value(inst.uses[2], ty)
            self.out(f"{self.dname(inst)} = add i32 {prod}, {c}")
        else:
            self.out(f"{self.dname(inst)} = add i32 {prod}, 0")

    _op_uimad = _op_imad
    _op_xmad = _op_imad  # reaches emission only when the idiom was not matched

    def _op_imad64(self, inst):
        self.emitted[inst.defs[0].vid] = "i64"
        unsigned = inst.opcode.has_mod("U32")
        ext = "zext" if unsigned else "sext"
        a, _ = self.value(inst.uses[0], "i32")
        b, _ = self.value(inst.uses[1], "i32")
        a64, b64 = self.fresh(), self.fresh()
        self.out(f"{a64} = {ext} i32 {a} to i64")
        self.out(f"{b64} = {ext} i32 {b} to i64")
        m = self.fresh()
        self.out(f"{m} = mul i64 {a64}, {b64}")
        if len(inst.uses) > 2 and not _is_zero(inst.uses[2]):
            c, _ = self.value(inst.uses[2], "i64")
            self.out(f"{self.dname(inst)} = add i64 {m}, {c}")
        else:
            self.out(f"{self.dname(inst)} = add i64 {m}, 0")

    def _op_lea(self, inst):
        if inst.opcode.has_mod("HI"):
            # hi half: b + high-word of ((c:a) << shift) [+ carry]
            a, _ = self.value(inst.uses[0], "i32")
            b, _ = self.value(inst.uses[1], "i32")
            c, _ = self.value(inst.uses[2], "i32") if len(inst.uses) > 2 \
                else ("0", "i32")
            sh = inst.uses[3] if len(inst.uses) > 3 else Imm(0, "0")
            shv, _ = self.value(sh, "i32")
            az, cz = self.fresh(), self.fresh()
            self.out(f"{az} = zext i32 {a} to i64")
            self.out(f"{cz} = zext i32 {c} to i64")
            chi = self.fresh()
            self.out(f"{chi} = shl i64 {cz}, 32")
            pair = self.fresh()
            self.out(f"{pair} = or i64 {chi}, {az}")
            shz = self.fresh()
            self.out(f"{shz} = zext i32 {shv} to i64")
            sub = self.fresh()
            self.out(f"{sub} = sub i64 32, {shz}")
            shifted = self.fresh()
            self.out(f"{shifted} = lshr i64 {pair}, {sub}")
            lo = self.fresh()
            self.out(f"{lo} = trunc i64 {shifted} to i32")
            acc = self.fresh()
            self.out(f"{acc} = add i32 {b}, {lo}")
            if inst.opcode.has_mod("X") and len(inst.uses) > 4:
                cin = self.bool_operand(inst.uses[4])
                z = self.fresh()
                self.out(f"{z} = zext i1 {cin} to i32")
                t = self.fresh()
                self.out(f"{t} = add i32 {acc}, {z}")
                acc = t
            self.out(f"{self.dname(inst)} = add i32 {acc}, 0")
            return
        a, _ = self.value(inst.uses[0], "i32")
        b, _ = self.value(inst.uses[1], "i32")
        sh, _ = self.value(inst.uses[2], "i32") if len(inst.uses) > 2 \
            else ("0", "i32")
        has_carry = any(isinstance(x, ValueRef) for x in inst.aux_defs)
        if not has_carry:
            t = self.fresh()
            self.out(f"{t} = shl i32 {a}, {sh}")
            self.out(f"{self.dname(inst)} = add i32 {t}, {b}")
            return
        az = self.fresh()
        self.out(f"{az} = zext i32 {a} to i64")
        shz = self.fresh()
        self.out(f"{shz} = zext i32 {sh} to i64")
        t = self.fresh()
        self.out(f"{t} = shl i64 {az}, {shz}")
        tl = self.fresh()
        self.out(f"{tl} = and i64 {t}, 4294967295")
        bz = self.fresh()
        self.out(f"{bz} = zext i32 {b} to i64")
        s = self.fresh()
        self.out(f"{s} = add i64 {tl}, {bz}")
        self.out(f"{self.dname(inst)} = trunc i64 {s} to i32")
        for aux in inst.aux_defs:
            if isinstance(aux, ValueRef):
                hi = self.fresh()
                self.out(f"{hi} = lshr i64 {s}, 32")
                b1 = self.fresh()
                self.out(f"{b1} = and i64 {hi}, 1")
                self.emitted[aux.vid] = "i1"
                self.out(f"{self.vname(aux.vid)} = icmp ne i64 {b1}, 0")

    _op_ulea = _op_lea

    def _op_lea64(self, inst):
        self.emitted[inst.defs[0].vid] = "i64"
        b, _ = self.value(inst.uses[0], "i64")
        a, _ = self.value(inst.uses[1], "i64")
        sh, _ = self.value(inst.uses[2], "i32")
        shz = self.fresh()
        self.out(f"{shz} = zext i32 {sh} to i64")
        t = self.fresh()
        self.out(f"{t} = shl i64 {a}, {shz}")
        self.out(f"{self.dname(inst)} = add i64 {t}, {b}")

    def _op_iabs(self, inst):
        a, _ = self.value(inst.uses[0], "i32")
        intr = "llvm.abs.i32"
        self.declare(intr, "declare i32 @llvm.abs.i32(i32, i1)")
        self.out(f"{self.dname(inst)} = call i32 @{intr}(i32 {a}, i1 0)")

    def _op_flo(self, inst):
        a, _ = self.value(inst.uses[0], "i32")
        intr = "llvm.ctlz.i32"
        self.declare(intr, "declare i32 @llvm.ctlz.i32(i32, i1)")
        t = self.fresh()
        self.out(f"{t} = call i32 @{intr}(i32 {a}, i1 0)")
        self.out(f"{self.dname(inst)} = sub i32 31, {t}")

    def _op_popc(self, inst):
        a, _ = self.value(inst.uses[0], "i32")
        intr = "llvm.ctpop.i32"
        self.declare(intr, "declare i32 @llvm.ctpop.i32(i32)")
        self.out(f"{self.dname(inst)} = call i32 @{intr}(i32 {a})")

    def _op_brev(self, inst):
        a, _ = self.value(inst.uses[0], "i32")
        intr = "llvm.bitreverse.i32"
        self.declare(intr, "declare i32 @llvm.bitreverse.i32(i32)")
        self.out(f"{self.dname(inst)} = call i32 @{intr}(i32 {a})")

    def _op_prmt(self, inst):
        name = "sass.prmt"
        self.declare(name, "declare i32 @sass.prmt(i32, i32, i32)")
        a, _ = self.value(inst.uses[0], "i32")
        b, _ = self.value(inst.uses[1], "i32")
        c, _ = self.value(inst.uses[2], "i32")
        self.out(f"{self.dname(inst)} = call i32 @{name}"
                 f"(i32 {a}, i32 {b}, i32 {c})")

    # logic / shifts -------------------------------------------------------
    def _op_lop3(self, inst):
        ty = self.def_type(inst)
        if ty in _FLOAT_TYPES:
            ty = "i32"
        lut = None
        srcs = []
        for u in inst.uses:
            if isinstance(u, Imm) and lut is None and len(srcs) >= 3:
                lut = u.bits & 0xFF
            elif isinstance(u, Pred):
                continue
            else:
                srcs.append(u)
        if lut is None and len(srcs) == 4 and isinstance(srcs[3], Imm):
            lut = srcs[3].bits & 0xFF
            srcs = srcs[:3]
        if lut is None or len(srcs) < 3:
            self.emit_opaque(inst)
            return
        names = [self.value(s, "i32")[0] for s in srcs[:3]]
        self._emit_lut(inst, names, lut)

    def _emit_lut(self, inst, names, lut):
        a, b, c = names
        dest = self.dname(inst)
        simple = {
            0xC0: lambda: self.out(f"{dest} = and i32 {a}, {b}"),
            0xFC: lambda: self.out(f"{dest} = or i32 {a}, {b}"),
            0x3C: lambda: self.out(f"{dest} = xor i32 {a}, {b}"),
            0xF0: lambda: self.out(f"{dest} = add i32 {a}, 0"),
        }
        if lut in simple:
            simple[lut]()
            return
        minterms = []
        inv = {}
        for name in (a, b, c):
            if name not in inv:
                t = self.fresh()
                self.out(f"{t} = xor i32 {name}, -1")
                inv[name] = t
        for k in range(8):
            if not (lut >> k) & 1:
                continue
            fa = a if k & 4 else inv[a]
            fb = b if k & 2 else inv[b]
            fc = c if k & 1 else inv[c]
            t1 = self.fresh()
            self.out(f"{t1} = and i32 {fa}, {fb}")
            t2 = self.fresh()
            self.out(f"{t2} = and i32 {t1}, {fc}")
            minterms.append(t2)
        if not minterms:
            self.out(f"{dest} = add i32 0, 0")
            return
        acc = minterms[0]
        for m in minterms[1:]:
            t = self.fresh()
            self.out(f"{t} = or i32 {acc}, {m}")
            acc = t
        self.out(f"{dest} = add i32 {acc}, 0")

    _op_lop = _op_lop3
    _op_ulop3 = _op_lop3

    def _op_shl(self, inst):
        a, _ = self.value(inst.uses[0], "i32")
        s, _ = self.value(inst.uses[1], "i32")
        self.out(f"{self.dname(inst)} = shl i32 {a}, {s}")

    def _op_shr(self, inst):
        a, _ = self.value(inst.uses[0], "i32")
        s, _ = self.value(inst.uses[1], "i32")
        op = "lshr" if inst.opcode.has_mod("U32") else "ashr"
        self.out(f"{self.dname(inst)} = {op} i32 {a}, {s}")

    def _op_shf(self, inst):
        # funnel shift over the 64-bit concatenation hi:lo
        left = inst.opcode.has_mod("L")
        hi_word = inst.opcode.has_mod("HI")
        signed = inst.opcode.has_mod("S32") or inst.opcode.has_mod("S64")
        lo, _ = self.value(inst.uses[0], "i32")
        s, _ = self.value(inst.uses[1], "i32")
        hi, _ = self.value(inst.uses[2], "i32") if len(inst.uses) > 2 \
            else ("0", "i32")
        loz, hiz = self.fresh(), self.fresh()
        self.out(f"{loz} = zext i32 {lo} to i64")
        self.out(f"{hiz} = zext i32 {hi} to i64")
        sh = self.fresh()
        self.out(f"{sh} = shl i64 {hiz}, 32")
        pair = self.fresh()
        self.out(f"{pair} = or i64 {sh}, {loz}")
        sz = self.fresh()
        self.out(f"{sz} = zext i32 {s} to i64")
        res = self.fresh()
        if left:
            self.out(f"{res} = shl i64 {pair}, {sz}")
        elif signed:
            self.out(f"{res} = ashr i64 {pair}, {sz}")
        else:
            self.out(f"{res} = lshr i64 {pair}, {sz}")
        if hi_word:
            w = self.fresh()
            self.out(f"{w} = lshr i64 {res}, 32")
            self.out(f"{self.dname(inst)} = trunc i64 {w} to i32")
        else:
            self.out(f"{self.dname(inst)} = trunc i64 {res} to i32")

    _op_ushf = _op_shf

    def _op_shl64(self, inst):
        self.emitted[inst.defs[0].vid] = "i64"
        a, _ = self.value(inst.uses[0], "i64")
        s, _ = self.value(inst.uses[1], "i32")
        sz = self.fresh()
        self.out(f"{sz} = zext i32 {s} to i64")
        self.out(f"{self.dname(inst)} = shl i64 {a}, {sz}")

    def _op_shr64(self, inst):
        self.emitted[inst.defs[0].vid] = "i64"
        a, _ = self.value(inst.uses[0], "i64")
        s, _ = self.value(inst.uses[1], "i32")
        sz = self.fresh()
        self.out(f"{sz} = zext i32 {s} to i64")
        op = "ashr" if inst.opcode.has_mod("S64") else "lshr"
        self.out(f"{self.dname(inst)} = {op} i64 {a}, {sz}")

    # compares ---------------------------------------------------------
    def _cmp_combine(self, inst, raw: str):
        """Combine a raw i1 with the accumulator predicate per the bool op.

        The accumulator is the third source slot; later predicate operands
        belong to .EX low-half chaining and are already folded into raw.
        """
        bop = next((m for m in inst.opcode.modifiers if m in ("AND", "OR", "XOR")),
                   "AND")
        accum = None
        if len(inst.uses) >= 3 and isinstance(inst.uses[2], (Pred, ValueRef)) \
                and _is_predlike(self.fn, inst.uses[2]):
            accum = inst.uses[2]
        dest = self.dname(inst)
        self.emitted[inst.defs[0].vid] = "i1"
        if accum is None or (isinstance(accum, Pred) and accum.is_pt()
                             and not accum.negated and bop == "AND"):
            self.out(f"{dest} = and i1 {raw}, true")
            return
        acc = self.bool_operand(accum)
        self.out(f"{dest} = {bop.lower()} i1 {raw}, {acc}")

    def _op_isetp(self, inst):
        mods = inst.opcode.modifiers
        cond = next((m for m in mods if m in _ICMP), "EQ")
        table = _ICMP_U if "U32" in mods else _ICMP
        a, _ = self.value(inst.uses[0], "i32")
        b, _ = self.value(inst.uses[1], "i32")
        raw = self.fresh()
        self.out(f"{raw} = icmp {table[cond]} i32 {a}, {b}")
        if inst.opcode.has_mod("EX") and len(inst.uses) >= 4:
            # extended compare: strict(hi) | (eq(hi) & low-half result)
            low = self.bool_operand(inst.uses[3])
            eq = self.fresh()
            self.out(f"{eq} = icmp eq i32 {a}, {b}")
            both = self.fresh()
            self.out(f"{both} = and i1 {eq}, {low}")
            if cond in ("EQ",):
                raw = both
            elif cond == "NE":
                t = self.fresh()
                self.out(f"{t} = or i1 {raw}, {both}")
                ne_lo = self.fresh()
                self.out(f"{ne_lo} = icmp ne i32 {a}, {b}")
                raw2 = self.fresh()
                self.out(f"{raw2} = or i1 {ne_lo}, {both}")
                raw = raw2
            else:
                strict = {"LT": "lt", "LE": "lt", "GT": "gt", "GE": "gt"}[cond]
                pre = "u" if "U32" in mods else "s"
                st = self.fresh()
                self.out(f"{st} = icmp {pre}{strict} i32 {a}, {b}")
                raw2 = self.fresh()
                self.out(f"{raw2} = or i1 {st}, {both}")
                raw = raw2
        self._cmp_combine(inst, raw)

    def _op_isetp64(self, inst):
        mods = inst.opcode.modifiers
        cond = next((m for m in mods if m in _ICMP), "EQ")
        table = _ICMP_U if "U64" in mods else _ICMP
        a, _ = self.value(inst.uses[0], "i64")
        b, _ = self.value(inst.uses[1], "i64")
        raw = self.fresh()
        self.out(f"{raw} = icmp {table[cond]} i64 {a}, {b}")
        self._cmp_combine(inst, raw)

    def _op_fsetp(self, inst):
        mods = inst.opcode.modifiers
        cond = next((m for m in mods if m in _FCMP), "EQ")
        a, _ = self.value(inst.uses[0], "float")
        b, _ = self.value(inst.uses[1], "float")
        raw = self.fresh()
        self.out(f"{raw} = fcmp {_FCMP[cond]} float {a}, {b}")
        self._cmp_combine(inst, raw)

    def _op_dsetp(self, inst):
        mods = inst.opcode.modifiers
        cond = next((m for m in mods if m in _FCMP), "EQ")
        a, _ = self.value(inst.uses[0], "double")
        b, _ = self.value(inst.uses[1], "double")
        raw = self.fresh()
        self.out(f"{raw} = fcmp {_FCMP[cond]} double {a}, {b}")
        self._cmp_combine(inst, raw)

    def _op_plop3(self, inst):
        # predicate logic: only the common and/or/xor LUTs are supported
        srcs = [u for u in inst.uses if isinstance(u, (Pred, ValueRef))]
        imms = [u for u in inst.uses if isinstance(u, Imm)]
        lut = imms[0].bits & 0xFF if imms else 0xC0
        a = self.bool_operand(srcs[0]) if srcs else "1"
        b = self.bool_operand(srcs[1]) if len(srcs) > 1 else "1"
        op = {0xC0: "and", 0xFC: "or", 0x3C: "xor"}.get(lut)
        if op is None:
            self.emit_opaque(inst)
            return
        self.emitted[inst.defs[0].vid] = "i1"
        self.out(f"{self.dname(inst)} = {op} i1 {a}, {b}")

    # moves / selects ---------------------------------------------------
    def _op_mov(self, inst):
        ty = self.def_type(inst)
        a, aty = self.value(inst.uses[0], ty)
        if aty != ty:
            self.out(f"{self.dname(inst)} = bitcast {aty} {a} to {ty}")
        elif ty in _FLOAT_TYPES:
            self.out(f"{self.dname(inst)} = bitcast {ty} {a} to {ty}")
        else:
            self.out(f"{self.dname(inst)} = add {ty} {a}, 0")

    _op_mov32i = _op_mov
    _op_umov = _op_mov
    _op_mov64 = _op_mov
    _op_ldc = _op_mov
    _op_uldc = _op_mov

    def _op_sel(self, inst):
        ty = self.def_type(inst)
        a, _ = self.value(inst.uses[0], ty)
        b, _ = self.value(inst.uses[1], ty)
        p = self.bool_operand(inst.uses[2])
        self.out(f"{self.dname(inst)} = select i1 {p}, {ty} {a}, {ty} {b}")

    _op_usel = _op_sel
    _op_fsel = _op_sel

    def _op_select(self, inst):
        ty = self.def_type(inst)
        p = self.bool_operand(inst.uses[0])
        a, _ = self.value(inst.uses[1], ty)
        b, _ = self.value(inst.uses[2], ty)
        self.out(f"{self.dname(inst)} = select i1 {p}, {ty} {a}, {ty} {b}")

    def _op_phi(self, inst):
        ty = self.def_type(inst)
        args = []
        for u, bid in zip(inst.uses, inst.meta.get("phi_blocks", [])):
            if isinstance(u, ValueRef):
                # no adapters here: instructions may not precede a phi
                info = self.fn.values[u.vid]
                name = "undef" if info.is_undef else self.vname(u.vid)
            else:
                name = self.imm_only(u, ty)
            args.append(f"[ {name}, %bb{bid} ]")
        self.out(f"{self.dname(inst)} = phi {ty} " + ", ".join(args))

    def imm_only(self, op, ty: str) -> str:
        if isinstance(op, Imm):
            if ty in _FLOAT_TYPES and op.is_float:
                return float_hex(op.float_value(), ty)
            if ty in _FLOAT_TYPES:
                return float_hex(bits_to_float(op.bits), ty)
            if ty == "i1":
                return "1" if op.bits & 1 else "0"
            return str(op.int_value(_WIDTH[ty], signed=True))
        if isinstance(op, ZeroReg):
            return float_hex(0.0, ty) if ty in _FLOAT_TYPES else "0"
        if isinstance(op, Pred) and op.is_pt():
            return "0" if op.negated else "1"
        raise EmitError(f"operand {op!r} cannot appear in a phi")

    def _op_bitcast(self, inst):
        ty = self.def_type(inst)
        a, aty = self.value(inst.uses[0])
        if aty == ty:
            if ty in _FLOAT_TYPES:
                self.out(f"{self.dname(inst)} = bitcast {ty} {a} to {ty}")
            else:
                self.out(f"{self.dname(inst)} = add {ty} {a}, 0")
            return
        self.out(f"{self.dname(inst)} = bitcast {aty} {a} to {ty}")

    def _op_s2r(self, inst):
        sreg = inst.uses[0]
        assert isinstance(sreg, SReg)
        intr = self.config.sreg_intrinsics.get(sreg.name)
        if intr is None:
            intr = "sass.sreg." + sreg.name.lower().replace(".", "_")
        self.declare(intr, f"declare i32 @{intr}()")
        self.out(f"{self.dname(inst)} = call i32 @{intr}()")

    _op_cs2r = _op_s2r

    # pack / unpack ------------------------------------------------------
    def _op_pack64(self, inst):
        ty = self.def_type(inst)
        if ty not in ("i64", "double"):
            ty = "i64"
        self.emitted[inst.defs[0].vid] = ty
        lo, _ = self.value(inst.uses[0], "i32")
        hi, _ = self.value(inst.uses[1], "i32")
        loz, hiz = self.fresh(), self.fresh()
        self.out(f"{loz} = zext i32 {lo} to i64")
        self.out(f"{hiz} = zext i32 {hi} to i64")
        sh = self.fresh()
        self.out(f"{sh} = shl i64 {hiz}, 32")
        if ty == "double":
            t = self.fresh()
            self.out(f"{t} = or i64 {sh}, {loz}")
            self.out(f"{self.dname(inst)} = bitcast i64 {t} to double")
        else:
            self.out(f"{self.dname(inst)} = or i64 {sh}, {loz}")

    def _op_unpack64(self, inst):
        src = inst.uses[0]
        a, aty = self.value(src, None)
        if aty == "double":
            t = self.fresh()
            self.out(f"{t} = bitcast double {a} to i64")
            a = t
        ty = self.def_type(inst)
        if inst.opcode.has_mod("HI"):
            t = self.fresh()
            self.out(f"{t} = lshr i64 {a}, 32")
            a = t
        t = self.fresh()
        self.out(f"{t} = trunc i64 {a} to i32")
        if ty in _FLOAT_TYPES:
            self.out(f"{self.dname(inst)} = bitcast i32 {t} to {ty}")
        else:
            self.out(f"{self.dname(inst)} = add i32 {t}, 0")

    def _op_cast64(self, inst):
        self.emitted[inst.defs[0].vid] = "i64"
        a, _ = self.value(inst.uses[0], "i32")
        self.out(f"{self.dname(inst)} = sext i32 {a} to i64")

    def _op_pack128(self, inst):
        # 128-bit packs exist only between memory ops; they are decomposed
        # at their use sites and emit nothing themselves
        self.quad_parts[inst.defs[0].vid] = [
            self.value(u, "i32")[0] for u in inst.uses
        ]

    def _op_unpack128(self, inst):
        src = inst.uses[0]
        assert isinstance(src, ValueRef)
        parts = self.quad_parts.get(src.vid)
        if parts is None:
            raise EmitError(f"{self.fn.name}: 128-bit value %v{src.vid} "
                            f"was not decomposed")
        sel = next(m for m in inst.opcode.modifiers if m.startswith("W"))
        part = parts[int(sel[1:])]
        ty = self.def_type(inst)
        if ty in _FLOAT_TYPES:
            self.out(f"{self.dname(inst)} = bitcast i32 {part} to {ty}")
        else:
            self.out(f"{self.dname(inst)} = add i32 {part}, 0")

    # conversions ---------------------------------------------------------
    def _op_i2f(self, inst):
        mods = inst.opcode.modifiers
        dst = "double" if "F64" in mods else ("half" if "F16" in mods else "float")
        unsigned = "U32" in mods or "U64" in mods
        src_ty = "i64" if ("S64" in mods or "U64" in mods) else "i32"
        a, _ = self.value(inst.uses[0], src_ty)
        op = "uitofp" if unsigned else "sitofp"
        self.out(f"{self.dname(inst)} = {op} {src_ty} {a} to {dst}")

    def _op_f2i(self, inst):
        mods = inst.opcode.modifiers
        src = "double" if "F64" in mods else "float"
        unsigned = "U32" in mods or "U64" in mods
        dst = "i64" if ("S64" in mods or "U64" in mods) else "i32"
        a, _ = self.value(inst.uses[0], src)
        if "FLOOR" in mods:
            intr = f"llvm.floor.{_fsuffix(src)}"
            self.declare(intr, f"declare {src} @{intr}({src})")
            t = self.fresh()
            self.out(f"{t} = call {src} @{intr}({src} {a})")
            a = t
        elif "CEIL" in mods:
            intr = f"llvm.ceil.{_fsuffix(src)}"
            self.declare(intr, f"declare {src} @{intr}({src})")
            t = self.fresh()
            self.out(f"{t} = call {src} @{intr}({src} {a})")
            a = t
        op = "fptoui" if unsigned else "fptosi"
        self.out(f"{self.dname(inst)} = {op} {src} {a} to {dst}")

    def _op_f2f(self, inst):
        dst = self.def_type(inst)
        a, aty = self.value(inst.uses[0])
        if _WIDTH.get(aty, 0) < _WIDTH.get(dst, 0):
            self.out(f"{self.dname(inst)} = fpext {aty} {a} to {dst}")
        elif _WIDTH.get(aty, 0) > _WIDTH.get(dst, 0):
            self.out(f"{self.dname(inst)} = fptrunc {aty} {a} to {dst}")
        else:
            self.out(f"{self.dname(inst)} = bitcast {aty} {a} to {dst}")

    def _op_i2i(self, inst):
        a, _ = self.value(inst.uses[0], "i32")
        self.out(f"{self.dname(inst)} = add i32 {a}, 0")

    def _op_frnd(self, inst):
        mods = inst.opcode.modifiers
        ty = self._natural_float(inst)
        fnname = "floor" if "FLOOR" in mods else \
            "ceil" if "CEIL" in mods else \
            "trunc" if "TRUNC" in mods else "rint"
        intr = f"llvm.{fnname}.{_fsuffix(ty)}"
        self.declare(intr, f"declare {ty} @{intr}({ty})")
        a, _ = self.value(inst.uses[0], ty)
        self.out(f"{self.dname(inst)} = call {ty} @{intr}({ty} {a})")

    # memory ---------------------------------------------------------------
    def _space_of(self, base: str) -> str:
        if base in ("LDG", "STG", "LD", "ST", "ATOM", "ATOMG", "RED"):
            return "global"
        if base in ("LDS", "STS", "ATOMS"):
            return "shared"
        return "local"

    def _op_ldg(self, inst):
        base = inst.opcode.base
        mem = next(u for u in inst.uses if isinstance(u, MemRef))
        p = None
        d = inst.defs[0]
        assert isinstance(d, ValueRef)
        ty = self.vtype(d.vid)
        if ty == "i128":
            # four scalar loads; parts consumed through UNPACK128
            parts = []
            for k in range(4):
                off_mem = MemRef(mem.base, mem.ureg, mem.offset + 4 * k)
                pk = self.address(off_mem, self._space_of(base))
                t = self.fresh()
                self.out(f"{t} = load i32, ptr addrspace("
                         f"{self.config.spaces()[self._space_of(base)]}) {pk}")
                parts.append(t)
            self.quad_parts[d.vid] = parts
            return
        p = self.address(mem, self._space_of(base))
        sp = self.config.spaces()[self._space_of(base)]
        self.out(f"{self.vname(d.vid)} = load {ty}, ptr addrspace({sp}) {p}")

    _op_ld = _op_ldg
    _op_lds = _op_ldg
    _op_ldl = _op_ldg

    def _op_stg(self, inst):
        base = inst.opcode.base
        mem = next(u for u in inst.uses if isinstance(u, MemRef))
        data = next(u for u in inst.uses if not isinstance(u, MemRef))
        space = self._space_of(base)
        sp = self.config.spaces()[space]
        if isinstance(data, ValueRef) and self.vtype(data.vid) == "i128":
            parts = self.quad_parts.get(data.vid)
            if parts is None:
                raise EmitError(f"{self.fn.name}: 128-bit store of "
                                f"undecomposed %v{data.vid}")
            for k, part in enumerate(parts):
                off_mem = MemRef(mem.base, mem.ureg, mem.offset + 4 * k)
                pk = self.address(off_mem, space)
                self.out(f"store i32 {part}, ptr addrspace({sp}) {pk}")
            return
        name, ty = self.value(data)
        p = self.address(mem, space)
        self.out(f"store {ty} {name}, ptr addrspace({sp}) {p}")

    _op_st = _op_stg
    _op_sts = _op_stg
    _op_stl = _op_stg

    def _op_atom(self, inst):
        base = inst.opcode.base
        op = next((m for m in inst.opcode.modifiers
                   if m in ("ADD", "MIN", "MAX", "AND", "OR", "XOR", "EXCH")),
                  "ADD")
        space = self._space_of(base)
        mem = next(u for u in inst.uses if isinstance(u, MemRef))
        data = [u for u in inst.uses if not isinstance(u, MemRef)]
        elem = "float" if inst.opcode.has_mod("F32") else "i32"
        name = f"sass.atom.{space}.{op.lower()}.{_fsuffix(elem) if elem == 'float' else elem}"
        self.declare(name, f"declare {elem} @{name}(i64, {elem})")
        addr = self._plain_address(mem)
        v, _ = self.value(data[0], elem) if data else ("0", elem)
        if inst.defs and isinstance(inst.defs[0], ValueRef):
            self.out(f"{self.dname(inst)} = call {elem} @{name}"
                     f"(i64 {addr}, {elem} {v})")
        else:
            t = self.fresh()
            self.out(f"{t} = call {elem} @{name}(i64 {addr}, {elem} {v})")

    _op_atoms = _op_atom
    _op_atomg = _op_atom
    _op_red = _op_atom

    def _plain_address(self, mem: MemRef) -> str:
        total = None
        if mem.base is not None:
            name, ty = self.value(mem.base)
            if ty != "i64":
                t = self.fresh()
                self.out(f"{t} = zext {ty} {name} to i64")
                name = t
            total = name
        if mem.ureg is not None:
            name, ty = self.value(mem.ureg)
            t = self.fresh()
            self.out(f"{t} = zext {ty} {name} to i64")
            if total is None:
                total = t
            else:
                t2 = self.fresh()
                self.out(f"{t2} = add i64 {total}, {t}")
                total = t2
        if total is None:
            return str(mem.offset)
        if mem.offset:
            t = self.fresh()
            self.out(f"{t} = add i64 {total}, {mem.offset}")
            total = t
        return total

    # sync / warp ----------------------------------------------------------
    def _op_bar(self, inst):
        bar_id = next((u.bits for u in inst.uses if isinstance(u, Imm)), 0)
        if bar_id == 0:
            name = self.config.barrier0
            self.declare(name, f"declare void @{name}()")
            self.out(f"call void @{name}()")
        else:
            name = "sass.bar.sync"
            self.declare(name, "declare void @sass.bar.sync(i32)")
            self.out(f"call void @{name}(i32 {bar_id})")

    def _op_warpsync(self, inst):
        mask = next((u.bits for u in inst.uses if isinstance(u, Imm)),
                    0xFFFFFFFF)
        name = "sass.warpsync"
        self.declare(name, "declare void @sass.warpsync(i32)")
        self.out(f"call void @{name}(i32 {mask & 0xFFFFFFFF})")

    def _op_shfl(self, inst):
        mode = next((m for m in inst.opcode.modifiers
                     if m in ("IDX", "UP", "DOWN", "BFLY")), "IDX")
        name = f"sass.shfl.{mode.lower()}.i32"
        self.declare(name, f"declare {{i32, i1}} @{name}(i32, i32, i32)")
        a, _ = self.value(inst.uses[0], "i32")
        b, _ = self.value(inst.uses[1], "i32")
        c, _ = self.value(inst.uses[2], "i32") if len(inst.uses) > 2 \
            else ("31", "i32")
        agg = self.fresh()
        self.out(f"{agg} = call {{i32, i1}} @{name}(i32 {a}, i32 {b}, i32 {c})")
        self.out(f"{self.dname(inst)} = extractvalue {{i32, i1}} {agg}, 0")
        for aux in inst.aux_defs:
            if isinstance(aux, ValueRef):
                self.emitted[aux.vid] = "i1"
                self.out(f"{self.vname(aux.vid)} = extractvalue "
                         f"{{i32, i1}} {agg}, 1")

    def _op_vote(self, inst):
        mode = next((m for m in inst.opcode.modifiers
                     if m in ("ALL", "ANY", "BALLOT")), "BALLOT")
        name = f"sass.vote.{mode.lower()}"
        ret = "i32" if mode == "BALLOT" else "i1"
        self.declare(name, f"declare {ret} @{name}(i1)")
        p = self.bool_operand(inst.uses[0]) if inst.uses else "1"
        if ret == "i1":
            self.emitted[inst.defs[0].vid] = "i1"
        self.out(f"{self.dname(inst)} = call {ret} @{name}(i1 {p})")

    _op_voteu = _op_vote

    # tensor / opaque --------------------------------------------------------
    def _op_hmma(self, inst):
        self._emit_mma(inst)

    _op_hgmma = _op_hmma
    _op_imma = _op_hmma

    def _emit_mma(self, inst):
        groups = inst.meta.get("tensor_groups")
        if not groups:
            self.emit_opaque(inst)
            return
        na, nb, nc, nd = groups["a"], groups["b"], groups["c"], groups["d"]
        mods = inst.opcode.modifiers
        shape = next((m for m in mods if m[0].isdigit()), "shape")
        shape_name = _mma_shape_name(shape)
        elem = "bf16" if "BF16" in mods else ("tf32" if "TF32" in mods else "f16")
        acc = "f32" if "F32" in mods else "s32"
        intr = f"llvm.nvvm.mma.{shape_name}.{acc}.{elem}"
        a_ops = inst.uses[:na]
        b_ops = inst.uses[na:na + nb]
        c_ops = inst.uses[na + nb:na + nb + nc]
        acc_ty = "float" if acc == "f32" else "i32"

        def build_vec(ops, ety):
            n = len(ops)
            cur = "undef"
            for i, op in enumerate(ops):
                name, _ = self.value(op, ety)
                t = self.fresh()
                self.out(f"{t} = insertelement <{n} x {ety}> {cur}, "
                         f"{ety} {name}, i32 {i}")
                cur = t
            return cur, f"<{n} x {ety}>"

        av, avt = build_vec(a_ops, "i32")
        bv, bvt = build_vec(b_ops, "i32")
        cv, cvt = build_vec(c_ops, acc_ty)
        if elem in ("f16", "bf16"):
            ety = "half" if elem == "f16" else "bfloat"
            t = self.fresh()
            self.out(f"{t} = bitcast {avt} {av} to <{2 * na} x {ety}>")
            av, avt = t, f"<{2 * na} x {ety}>"
            t = self.fresh()
            self.out(f"{t} = bitcast {bvt} {bv} to <{2 * nb} x {ety}>")
            bv, bvt = t, f"<{2 * nb} x {ety}>"
        ret = f"<{nd} x {acc_ty}>"
        self.declare(intr,
                     f"declare {ret} @{intr}({avt}, {bvt}, {cvt})")
        agg = self.fresh()
        self.out(f"{agg} = call {ret} @{intr}({avt} {av}, {bvt} {bv}, "
                 f"{cvt} {cv})")
        for i, d in enumerate(inst.defs):
            if isinstance(d, ValueRef):
                self.out(f"{self.vname(d.vid)} = extractelement {ret} "
                         f"{agg}, i32 {i}")

    def emit_opaque(self, inst: Instruction):
        """Unknown or deliberately-opaque opcode: declared intrinsic call."""
        base = inst.opcode.base
        suffix = "_".join([base.lower()] + [m.lower() for m in inst.opcode.modifiers])
        name = f"sass.opaque.{suffix}"
        args = []
        arg_types = []
        for u in inst.uses:
            if isinstance(u, MemRef):
                addr = self._plain_address(u)
                args.append(f"i64 {addr}")
                arg_types.append("i64")
                continue
            try:
                n, t = self.value(u)
            except EmitError:
                continue
            args.append(f"{t} {n}")
            arg_types.append(t)
        defs = [d for d in inst.all_defs() if isinstance(d, ValueRef)]
        if not defs:
            self.declare(name, f"declare void @{name}({', '.join(arg_types)})")
            self.out(f"call void @{name}({', '.join(args)})")
            return
        ret_types = [self.vtype(d.vid) for d in defs]
        if len(defs) == 1:
            self.declare(name,
                         f"declare {ret_types[0]} @{name}({', '.join(arg_types)})")
            self.out(f"{self.vname(defs[0].vid)} = call {ret_types[0]} "
                     f"@{name}({', '.join(args)})")
            return
        tup = "{" + ", ".join(ret_types) + "}"
        self.declare(name, f"declare {tup} @{name}({', '.join(arg_types)})")
        agg = self.fresh()
        self.out(f"{agg} = call {tup} @{name}({', '.join(args)})")
        for i, d in enumerate(defs):
            self.out(f"{self.vname(d.vid)} = extractvalue {tup} {agg}, {i}")

    def _op_call(self, inst):
        target = next((u.bits for u in inst.uses if isinstance(u, Imm)), 0)
        name = inst.meta.get("opaque_call", f"sass.call.{target:x}")
        sym = name.replace(".", "_") if name.startswith("sass.call") else name
        self.declare(sym, f"declare void @{sym}()")
        self.out(f"call void @{sym}()")

    # terminators --------------------------------------------------------
    def emit_terminator(self, blk):
        t = blk.terminator
        if isinstance(t, Br):
            self.out(f"br label %bb{t.target}")
        elif isinstance(t, CondBr):
            c = self.bool_operand(t.cond)
            if t.guard is not None:
                g = self.bool_operand(t.guard)
                both = self.fresh()
                self.out(f"{both} = and i1 {g}, {c}")
                c = both
            self.out(f"br i1 {c}, label %bb{t.taken}, label %bb{t.fallthrough}")
        elif isinstance(t, (Exit, Ret)):
            self.out("ret void")
        elif isinstance(t, CondExit):
            c = self.bool_operand(t.cond)
            ex = self.need_exit_block()
            self.out(f"br i1 {c}, label {ex}, label %bb{t.fallthrough}")
        elif isinstance(t, CallRet):
            raise EmitError(
                f"{self.fn.name}: CALL survived to emission "
                f"(device-function recovery did not run)")
        else:
            raise AssertionError(t)


def _is_floatish(ty: str) -> bool:
    import re as _re

    m = _re.fullmatch(r"<\d+ x (.+)>", ty)
    return (m.group(1) if m else ty) in _FLOAT_TYPES


def bits_to_float(bits: int) -> float:
    return struct.unpack("<f", struct.pack("<I", bits & 0xFFFFFFFF))[0]


def _fsuffix(ty: str) -> str:
    return {"float": "f32", "double": "f64", "half": "f16",
            "bfloat": "bf16", "<2 x half>": "v2f16",
            "<2 x bfloat>": "v2bf16"}[ty]


def _is_zero(op) -> bool:
    return isinstance(op, ZeroReg) or (isinstance(op, Imm) and op.bits == 0)


def _is_predlike(fn, op) -> bool:
    if isinstance(op, Pred):
        return True
    if isinstance(op, ValueRef):
        info = fn.values.get(op.vid)
        return info is not None and info.final_type == "Bool"
    return False


def _mma_shape_name(shape: str) -> str:
    if shape == "16816":
        return "m16n8k16"
    if "x" in shape:
        m, n, k = shape.split("x")
        return f"m{m}n{n}k{k}"
    return shape


def emit_module(funcs: list[LiftedFunction],
                config: EmitConfig | None = None) -> str:
    """Emit one textual IR module for a list of typed functions."""
    config = config or EmitConfig()
    bodies = []
    declares: dict[str, str] = {}
    for fn in funcs:
        em = FunctionEmitter(fn, config)
        bodies.append(em.emit_function())
        declares.update(em.declared)
    head = [f"; module: {config.target_annotation}"]
    for name in sorted(declares):
        head.append(declares[name])
    return "\n".join(head) + "\n\n" + "\n".join(bodies)


def emit_json(funcs: list[LiftedFunction]) -> str:
    """Structured dump of typed functions for external tooling."""
    out = []
    for fn in funcs:
        j = {
            "name": fn.name, "arch": fn.arch, "param_base": fn.param_base,
            "phase": fn.phase.name.lower(), "entry": fn.entry,
            "blocks": [], "values": {},
        }
        for blk in fn.block_order():
            j["blocks"].append({
                "id": blk.bid,
                "start_address": blk.start_address,
                "preds": blk.preds, "succs": blk.succs,
                "instructions": [inst.render() for inst in blk.instructions],
                "terminator": blk.terminator.render(fn)
                if blk.terminator else None,
            })
        for vid, info in sorted(fn.values.items()):
            j["values"][f"%v{vid}"] = {
                "origin": info.origin, "type": info.final_type,
                "provenance": info.provenance.value,
                "reach": info.reach,
            }
        out.append(j)
    return json.dumps(out, indent=2)
