"""Parser, model and verifier for the emitted IR dialect.

The dialect is the LLVM-textual subset produced by the emitter: typed
SSA values, integer/float arithmetic, width/bit conversions, loads and
stores through explicit address spaces, phi/select/icmp/fcmp, branches,
and calls to declared intrinsics.  The verifier is self-contained (no
external toolchain): it checks def-before-use along dominance, per
instruction type consistency, block termination and call signatures,
returning violations as data.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field


class IRParseError(ValueError):
    def __init__(self, msg, line_no=None):
        if line_no is not None:
            msg = f"ir line {line_no}: {msg}"
        super().__init__(msg)


SCALAR_TYPES = {"i1", "i8", "i16", "i32", "i64", "i128",
                "float", "double", "half", "bfloat", "void"}
FLOAT_TYPES = {"float", "double", "half", "bfloat"}
INT_TYPES = {"i1", "i8", "i16", "i32", "i64", "i128"}

BINOPS_INT = {"add", "sub", "mul", "and", "or", "xor", "shl", "lshr", "ashr",
              "udiv", "sdiv", "urem", "srem"}
BINOPS_FLOAT = {"fadd", "fsub", "fmul", "fdiv"}
CASTS = {"bitcast", "zext", "sext", "trunc", "sitofp", "uitofp", "fptosi",
         "fptoui", "fpext", "fptrunc", "inttoptr", "ptrtoint"}
ICMP_PREDS = {"eq", "ne", "ugt", "uge", "ult", "ule", "sgt", "sge", "slt",
              "sle"}
FCMP_PREDS = {"oeq", "ogt", "oge", "olt", "ole", "one", "ord", "ueq", "ugt",
              "uge", "ult", "ule", "une", "uno", "true", "false"}


def int_width(ty: str) -> int:
    return int(ty[1:])


@dataclass
class Operand:
    ty: str
    token: str  # %name, @name, literal, undef, true/false

    def is_ref(self) -> bool:
        return self.token.startswith("%")

    def __str__(self):
        return f"{self.ty} {self.token}"


@dataclass
class IRInst:
    line_no: int
    result: str | None
    op: str
    ty: str | None = None
    operands: list[Operand] = field(default_factory=list)
    attrs: dict = field(default_factory=dict)

    def is_terminator(self) -> bool:
        return self.op in ("br", "ret")


@dataclass
class IRBlock:
    label: str
    insts: list[IRInst] = field(default_factory=list)
    preds: list[str] = field(default_factory=list)
    succs: list[str] = field(default_factory=list)


@dataclass
class IRFunction:
    name: str
    blocks: dict[str, IRBlock] = field(default_factory=dict)
    order: list[str] = field(default_factory=list)

    def entry(self) -> str:
        return self.order[0]


@dataclass
class IRModule:
    declares: dict[str, tuple[str, list[str]]] = field(default_factory=dict)
    functions: dict[str, IRFunction] = field(default_factory=dict)


# ---------------------------------------------------------------------------
# scanning helpers
# ---------------------------------------------------------------------------

class Cursor:
    def __init__(self, text: str, line_no: int):
        self.s = text
        self.i = 0
        self.line_no = line_no

    def error(self, msg):
        raise IRParseError(f"{msg} at col {self.i} in {self.s!r}", self.line_no)

    def skip_ws(self):
        while self.i < len(self.s) and self.s[self.i] in " \t":
            self.i += 1

    def eof(self) -> bool:
        self.skip_ws()
        return self.i >= len(self.s)

    def peek(self, tok: str) -> bool:
        self.skip_ws()
        return self.s.startswith(tok, self.i)

    def eat(self, tok: str) -> bool:
        if self.peek(tok):
            self.i += len(tok)
            return True
        return False

    def expect(self, tok: str):
        if not self.eat(tok):
            self.error(f"expected {tok!r}")

    def word(self) -> str:
        self.skip_ws()
        m = re.match(r"[A-Za-z_][\w.]*", self.s[self.i:])
        if not m:
            self.error("expected word")
        self.i += m.end()
        return m.group(0)

    def value_token(self) -> str:
        self.skip_ws()
        m = re.match(
            r"(%[\w.]+|@[\w.$]+|undef|true|false|null"
            r"|0xH[0-9A-Fa-f]+|0xR[0-9A-Fa-f]+|0x[0-9A-Fa-f]+"
            r"|-?\d+\.\d+(e[+-]?\d+)?|-?\d+)",
            self.s[self.i:])
        if not m:
            self.error("expected value")
        self.i += m.end()
        return m.group(0)

    def number(self) -> int:
        self.skip_ws()
        m = re.match(r"-?\d+", self.s[self.i:])
        if not m:
            self.error("expected number")
        self.i += m.end()
        return int(m.group(0))

    def parse_type(self) -> str:
        self.skip_ws()
        if self.eat("<"):
            n = self.number()
            self.skip_ws()
            self.expect("x")
            inner = self.parse_type()
            self.expect(">")
            return f"<{n} x {inner}>"
        if self.eat("{"):
            parts = [self.parse_type()]
            while self.eat(","):
                parts.append(self.parse_type())
            self.expect("}")
            return "{" + ", ".join(parts) + "}"
        if self.eat("ptr"):
            if self.eat("addrspace("):
                n = self.number()
                self.expect(")")
                return f"ptr addrspace({n})"
            return "ptr"
        w = self.word()
        if w not in SCALAR_TYPES:
            self.error(f"unknown type {w!r}")
        return w


# ---------------------------------------------------------------------------
# module parsing
# ---------------------------------------------------------------------------

def parse_ir(text: str) -> IRModule:
    mod = IRModule()
    fn: IRFunction | None = None
    block: IRBlock | None = None

    for line_no, raw in enumerate(text.splitlines(), 1):
        line = raw.split(";", 1)[0].rstrip()
        stripped = line.strip()
        if not stripped:
            continue

        if stripped.startswith("declare "):
            c = Cursor(stripped[len("declare "):], line_no)
            ret = c.parse_type()
            c.skip_ws()
            c.expect("@")
            name = _sym(c)
            c.expect("(")
            args = []
            if not c.peek(")"):
                args.append(c.parse_type())
                while c.eat(","):
                    args.append(c.parse_type())
            c.expect(")")
            mod.declares[name] = (ret, args)
            continue

        if stripped.startswith("define "):
            c = Cursor(stripped[len("define "):], line_no)
            c.parse_type()
            c.skip_ws()
            c.expect("@")
            name = _sym(c)
            c.expect("(")
            c.expect(")")
            fn = IRFunction(name)
            mod.functions[name] = fn
            block = None
            continue

        if stripped == "}":
            fn = None
            block = None
            continue

        if stripped.endswith(":") and fn is not None:
            label = "%" + stripped[:-1]
            block = IRBlock(label)
            if label in fn.blocks:
                raise IRParseError(f"duplicate label {label}", line_no)
            fn.blocks[label] = block
            fn.order.append(label)
            continue

        if fn is None or block is None:
            raise IRParseError(f"instruction outside a block: {stripped!r}",
                               line_no)
        block.insts.append(parse_inst(stripped, line_no))

    for f in mod.functions.values():
        _wire_edges(f)
    return mod


def _sym(c: Cursor) -> str:
    m = re.match(r"[\w.$]+", c.s[c.i:])
    if not m:
        c.error("expected symbol")
    c.i += m.end()
    return m.group(0)


def parse_inst(text: str, line_no: int) -> IRInst:
    c = Cursor(text, line_no)
    result = None
    if c.peek("%"):
        c.expect("%")
        result = "%" + _sym(c)
        c.skip_ws()
        c.expect("=")

    c.skip_ws()
    op = c.word()
    inst = IRInst(line_no, result, op)

    if op in BINOPS_INT | BINOPS_FLOAT:
        inst.ty = c.parse_type()
        a = c.value_token()
        c.expect(",")
        b = c.value_token()
        inst.operands = [Operand(inst.ty, a), Operand(inst.ty, b)]
        return inst

    if op == "fneg":
        inst.ty = c.parse_type()
        inst.operands = [Operand(inst.ty, c.value_token())]
        return inst

    if op in ("icmp", "fcmp"):
        pred = c.word()
        inst.attrs["pred"] = pred
        inst.ty = c.parse_type()
        a = c.value_token()
        c.expect(",")
        b = c.value_token()
        inst.operands = [Operand(inst.ty, a), Operand(inst.ty, b)]
        return inst

    if op == "select":
        cty = c.parse_type()
        cv = c.value_token()
        c.expect(",")
        ty = c.parse_type()
        a = c.value_token()
        c.expect(",")
        ty2 = c.parse_type()
        b = c.value_token()
        inst.ty = ty
        inst.attrs["arm2_ty"] = ty2
        inst.operands = [Operand(cty, cv), Operand(ty, a), Operand(ty2, b)]
        return inst

    if op == "phi":
        inst.ty = c.parse_type()
        incomings = []
        while True:
            c.expect("[")
            v = c.value_token()
            c.expect(",")
            c.skip_ws()
            c.expect("%")
            lbl = "%" + _sym(c)
            c.expect("]")
            incomings.append((v, lbl))
            if not c.eat(","):
                break
        inst.attrs["incomings"] = incomings
        inst.operands = [Operand(inst.ty, v) for v, _ in incomings]
        return inst

    if op in CASTS:
        src_ty = c.parse_type()
        v = c.value_token()
        c.skip_ws()
        c.expect("to")
        dst_ty = c.parse_type()
        inst.ty = dst_ty
        inst.attrs["src_ty"] = src_ty
        inst.operands = [Operand(src_ty, v)]
        return inst

    if op == "load":
        inst.ty = c.parse_type()
        c.expect(",")
        pty = c.parse_type()
        p = c.value_token()
        inst.operands = [Operand(pty, p)]
        return inst

    if op == "store":
        vty = c.parse_type()
        v = c.value_token()
        c.expect(",")
        pty = c.parse_type()
        p = c.value_token()
        inst.operands = [Operand(vty, v), Operand(pty, p)]
        return inst

    if op == "call":
        ret = c.parse_type()
        inst.ty = ret
        c.skip_ws()
        c.expect("@")
        inst.attrs["callee"] = _sym(c)
        c.expect("(")
        ops = []
        if not c.peek(")"):
            while True:
                t = c.parse_type()
                v = c.value_token()
                ops.append(Operand(t, v))
                if not c.eat(","):
                    break
        c.expect(")")
        inst.operands = ops
        return inst

    if op == "extractvalue":
        ty = c.parse_type()
        v = c.value_token()
        c.expect(",")
        idx = c.number()
        inst.ty = ty
        inst.attrs["index"] = idx
        inst.operands = [Operand(ty, v)]
        return inst

    if op in ("extractelement", "insertelement"):
        vty = c.parse_type()
        v = c.value_token()
        c.expect(",")
        if op == "insertelement":
            ety = c.parse_type()
            e = c.value_token()
            c.expect(",")
            ity = c.parse_type()
            idx = c.value_token()
            inst.ty = vty
            inst.operands = [Operand(vty, v), Operand(ety, e),
                             Operand(ity, idx)]
            return inst
        ity = c.parse_type()
        idx = c.value_token()
        inst.ty = vty
        inst.operands = [Operand(vty, v), Operand(ity, idx)]
        return inst

    if op == "br":
        c.skip_ws()
        if c.eat("label"):
            c.skip_ws()
            c.expect("%")
            inst.attrs["targets"] = ["%" + _sym(c)]
            return inst
        cty = c.parse_type()
        v = c.value_token()
        c.expect(",")
        c.skip_ws()
        c.expect("label")
        c.skip_ws()
        c.expect("%")
        t1 = "%" + _sym(c)
        c.expect(",")
        c.skip_ws()
        c.expect("label")
        c.skip_ws()
        c.expect("%")
        t2 = "%" + _sym(c)
        inst.operands = [Operand(cty, v)]
        inst.attrs["targets"] = [t1, t2]
        return inst

    if op == "ret":
        c.skip_ws()
        c.expect("void")
        return inst

    raise IRParseError(f"unsupported instruction {op!r}", line_no)


def _wire_edges(fn: IRFunction):
    for label in fn.order:
        blk = fn.blocks[label]
        if not blk.insts:
            continue
        last = blk.insts[-1]
        if last.op == "br":
            blk.succs = list(last.attrs["targets"])
    for label in fn.order:
        for s in fn.blocks[label].succs:
            if s in fn.blocks:
                fn.blocks[s].preds.append(label)


# ---------------------------------------------------------------------------
# verification
# ---------------------------------------------------------------------------

def element_type(ty: str) -> str:
    m = re.fullmatch(r"<(\d+) x (.+)>", ty)
    return m.group(2) if m else ty


def vector_len(ty: str) -> int | None:
    m = re.fullmatch(r"<(\d+) x (.+)>", ty)
    return int(m.group(1)) if m else None


def tuple_types(ty: str) -> list[str] | None:
    if ty.startswith("{") and ty.endswith("}"):
        return [t.strip() for t in ty[1:-1].split(",")]
    return None


def type_bits(ty: str) -> int | None:
    base = {"i1": 1, "i8": 8, "i16": 16, "i32": 32, "i64": 64, "i128": 128,
            "half": 16, "bfloat": 16, "float": 32, "double": 64}
    if ty in base:
        return base[ty]
    n = vector_len(ty)
    if n is not None:
        inner = type_bits(element_type(ty))
        return None if inner is None else n * inner
    if ty.startswith("ptr"):
        return 64
    return None


def verify_ir_text(text: str) -> list[str]:
    """Check the documented grammar subset; violations are data, not errors."""
    out: list[str] = []
    try:
        mod = parse_ir(text)
    except IRParseError as e:
        return [str(e)]

    for fname, fn in mod.functions.items():
        out.extend(_verify_function(mod, fn))
    return out


def _verify_function(mod: IRModule, fn: IRFunction) -> list[str]:
    out = []
    where = f"@{fn.name}"
    if not fn.order:
        return [f"{where}: function has no blocks"]

    # termination and definition table
    defs: dict[str, tuple[str, str, int]] = {}  # name -> (ty, block, index)
    for label in fn.order:
        blk = fn.blocks[label]
        if not blk.insts or not blk.insts[-1].is_terminator():
            out.append(f"{where} {label}: block not terminated")
        for idx, inst in enumerate(blk.insts):
            if inst.is_terminator() and idx != len(blk.insts) - 1:
                out.append(f"{where} {label}: instruction after terminator")
            if inst.op == "phi" and idx > 0 and blk.insts[idx - 1].op != "phi":
                out.append(f"{where} {label}: phi not at block start")
            if inst.result:
                if inst.result in defs:
                    out.append(f"{where}: {inst.result} defined twice")
                defs[inst.result] = (_result_type(inst), label, idx)
        for s in blk.succs:
            if s not in fn.blocks:
                out.append(f"{where} {label}: branch to unknown label {s}")

    idom = _ir_idom(fn)

    def dominates(b1, b2):
        while b2 is not None:
            if b1 == b2:
                return True
            b2 = idom.get(b2)
        return False

    for label in fn.order:
        blk = fn.blocks[label]
        for idx, inst in enumerate(blk.insts):
            out.extend(_check_types(mod, fn, inst, defs))
            if inst.op == "phi":
                incoming_labels = [lbl for _, lbl in inst.attrs["incomings"]]
                if sorted(incoming_labels) != sorted(set(blk.preds)):
                    out.append(
                        f"{where} {label}: phi incoming labels "
                        f"{incoming_labels} do not match preds {blk.preds}")
                for v, lbl in inst.attrs["incomings"]:
                    if v.startswith("%") and v in defs:
                        dety, dblk, _ = defs[v]
                        if lbl in fn.blocks and not dominates(dblk, lbl):
                            out.append(
                                f"{where} {label}: phi operand {v} does not "
                                f"dominate incoming edge {lbl}")
                    elif v.startswith("%") and v not in defs and v != "%undef":
                        out.append(f"{where} {label}: use of undefined {v}")
                continue
            for opnd in inst.operands + _extra_refs(inst):
                v = opnd.token
                if not v.startswith("%"):
                    continue
                if v not in defs:
                    out.append(f"{where} {label}: use of undefined value {v}")
                    continue
                dty, dblk, didx = defs[v]
                if dblk == label and didx >= idx:
                    out.append(f"{where} {label}: {v} used before definition")
                elif dblk != label and not dominates(dblk, label):
                    out.append(f"{where} {label}: use of {v} not dominated "
                               f"by its definition in {dblk}")
                if dty != opnd.ty:
                    out.append(
                        f"{where} {label}: {v} has type {dty} but is used "
                        f"as {opnd.ty} (line {inst.line_no})")
    return out


def _extra_refs(inst: IRInst) -> list[Operand]:
    return []


def _result_type(inst: IRInst) -> str:
    if inst.op == "extractvalue":
        tys = tuple_types(inst.ty)
        return tys[inst.attrs["index"]] if tys else inst.ty
    if inst.op == "extractelement":
        return element_type(inst.ty)
    if inst.op in ("icmp", "fcmp"):
        return "i1"
    return inst.ty or "void"


def _check_types(mod: IRModule, fn: IRFunction, inst: IRInst,
                 defs) -> list[str]:
    out = []
    w = f"@{fn.name} line {inst.line_no}"
    op = inst.op
    if op in BINOPS_INT:
        ety = element_type(inst.ty)
        if ety not in INT_TYPES:
            out.append(f"{w}: {op} requires an integer type, got {inst.ty}")
    elif op in BINOPS_FLOAT or op == "fneg":
        ety = element_type(inst.ty)
        if ety not in FLOAT_TYPES:
            out.append(f"{w}: {op} requires a float type, got {inst.ty}")
    elif op == "icmp":
        if inst.attrs["pred"] not in ICMP_PREDS:
            out.append(f"{w}: bad icmp predicate {inst.attrs['pred']}")
        if element_type(inst.ty) not in INT_TYPES and \
                not inst.ty.startswith("ptr"):
            out.append(f"{w}: icmp on non-integer type {inst.ty}")
    elif op == "fcmp":
        if inst.attrs["pred"] not in FCMP_PREDS:
            out.append(f"{w}: bad fcmp predicate {inst.attrs['pred']}")
        if element_type(inst.ty) not in FLOAT_TYPES:
            out.append(f"{w}: fcmp on non-float type {inst.ty}")
    elif op == "select":
        if inst.operands[0].ty != "i1":
            out.append(f"{w}: select condition must be i1")
        if inst.attrs["arm2_ty"] != inst.ty:
            out.append(f"{w}: select arms disagree "
                       f"({inst.ty} vs {inst.attrs['arm2_ty']})")
    elif op in CASTS:
        src, dst = inst.attrs["src_ty"], inst.ty
        if op == "bitcast":
            sb, db = type_bits(src), type_bits(dst)
            if sb is not None and db is not None and sb != db:
                out.append(f"{w}: bitcast between different widths "
                           f"({src} -> {dst})")
        if op in ("zext", "sext") and not (
                element_type(src) in INT_TYPES and
                element_type(dst) in INT_TYPES and
                int_width(element_type(src)) < int_width(element_type(dst))):
            out.append(f"{w}: {op} must widen an integer ({src} -> {dst})")
        if op == "trunc" and not (
                element_type(src) in INT_TYPES and
                element_type(dst) in INT_TYPES and
                int_width(element_type(src)) > int_width(element_type(dst))):
            out.append(f"{w}: trunc must narrow an integer ({src} -> {dst})")
        if op in ("sitofp", "uitofp") and \
                element_type(dst) not in FLOAT_TYPES:
            out.append(f"{w}: {op} must produce a float type")
        if op in ("fptosi", "fptoui") and \
                element_type(src) not in FLOAT_TYPES:
            out.append(f"{w}: {op} must consume a float type")
        if op == "inttoptr" and not dst.startswith("ptr"):
            out.append(f"{w}: inttoptr must produce a pointer")
    elif op == "load":
        if not inst.operands[0].ty.startswith("ptr"):
            out.append(f"{w}: load address must be a pointer")
    elif op == "store":
        if not inst.operands[1].ty.startswith("ptr"):
            out.append(f"{w}: store address must be a pointer")
    elif op == "call":
        callee = inst.attrs["callee"]
        if callee not in mod.declares and callee not in mod.functions:
            out.append(f"{w}: call to undeclared @{callee}")
        elif callee in mod.declares:
            ret, args = mod.declares[callee]
            if ret != inst.ty:
                out.append(f"{w}: call return type {inst.ty} does not match "
                           f"declared {ret} for @{callee}")
            if len(args) != len(inst.operands):
                out.append(f"{w}: call to @{callee} with {len(inst.operands)} "
                           f"args, declared {len(args)}")
            else:
                for i, (a, o) in enumerate(zip(args, inst.operands)):
                    if a != o.ty:
                        out.append(f"{w}: arg {i} of @{callee} has type "
                                   f"{o.ty}, declared {a}")
    elif op == "extractvalue":
        tys = tuple_types(inst.ty)
        if tys is None or not (0 <= inst.attrs["index"] < len(tys)):
            out.append(f"{w}: bad extractvalue index")
    elif op in ("extractelement", "insertelement"):
        if vector_len(inst.ty) is None:
            out.append(f"{w}: {op} requires a vector type")
    elif op == "br" and inst.operands:
        if inst.operands[0].ty != "i1":
            out.append(f"{w}: conditional branch on non-i1")
    return out


def _ir_idom(fn: IRFunction) -> dict[str, str | None]:
    entry = fn.entry()
    order: list[str] = []
    seen = set()

    def dfs(lbl):
        stack = [(lbl, iter(fn.blocks[lbl].succs))]
        seen.add(lbl)
        while stack:
            b, it = stack[-1]
            advanced = False
            for s in it:
                if s in fn.blocks and s not in seen:
                    seen.add(s)
                    stack.append((s, iter(fn.blocks[s].succs)))
                    advanced = True
                    break
            if not advanced:
                order.append(b)
                stack.pop()

    dfs(entry)
    order.reverse()
    index = {b: i for i, b in enumerate(order)}
    idom: dict[str, str | None] = {entry: entry}

    def intersect(a, b):
        while a != b:
            while index[a] > index[b]:
                a = idom[a]
            while index[b] > index[a]:
                b = idom[b]
        return a

    changed = True
    while changed:
        changed = False
        for b in order:
            if b == entry:
                continue
            preds = [p for p in fn.blocks[b].preds if p in idom and p in index]
            if not preds:
                continue
            new = preds[0]
            for p in preds[1:]:
                new = intersect(new, p)
            if idom.get(b) != new:
                idom[b] = new
                changed = True
    idom[entry] = None
    return idom
