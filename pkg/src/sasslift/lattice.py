"""Type lattice: eight leaf types partitioned into width classes.

Candidate type sets are bitmasks over the leaves; meet is intersection.
The empty set is the conflict element (an implicit type boundary), and
the full set is the unconstrained top.
"""

from __future__ import annotations

from dataclasses import dataclass

LEAVES = ("Int32", "Float32", "Int64", "Float64", "Int128", "Bool",
          "Float16", "BF16")
_BIT = {name: 1 << i for i, name in enumerate(LEAVES)}

INT32 = _BIT["Int32"]
FLOAT32 = _BIT["Float32"]
INT64 = _BIT["Int64"]
FLOAT64 = _BIT["Float64"]
INT128 = _BIT["Int128"]
BOOL = _BIT["Bool"]
FLOAT16 = _BIT["Float16"]
BF16 = _BIT["BF16"]

NUM32 = INT32 | FLOAT32
NUM64 = INT64 | FLOAT64
NUM128 = INT128
NUM1 = BOOL
NUM16 = FLOAT16 | BF16

TOP = NUM32 | NUM64 | NUM128 | NUM1 | NUM16
BOTTOM = 0

WIDTH_CLASS = {
    INT32: NUM32, FLOAT32: NUM32,
    INT64: NUM64, FLOAT64: NUM64,
    INT128: NUM128, BOOL: NUM1,
    FLOAT16: NUM16, BF16: NUM16,
}

# integer-priority resolution order for ambiguous sets
_PRIORITY = ("Int32", "Int64", "Int128", "Float32", "Float64", "Bool",
             "Float16", "BF16")

KIND = {
    "Int32": "int", "Int64": "int", "Int128": "int",
    "Float32": "float", "Float64": "float", "Float16": "float",
    "BF16": "float", "Bool": "bool",
}

BIT_WIDTH = {
    "Int32": 32, "Float32": 32, "Int64": 64, "Float64": 64,
    "Int128": 128, "Bool": 1, "Float16": 16, "BF16": 16,
}

# Register-container width per leaf.  The 16-bit float family always
# travels packed two-per-register, so its container is 32 bits: a
# bitcast between Int32/Float32 and a packed half pair preserves bits.
CONTAINER_BITS = {
    "Int32": 32, "Float32": 32, "Float16": 32, "BF16": 32,
    "Int64": 64, "Float64": 64, "Int128": 128, "Bool": 1,
}


def container_bits_of(mask: int) -> set[int]:
    return {CONTAINER_BITS[name] for name in leaves_of(mask)}


def meet(a: int, b: int) -> int:
    return a & b


def leaves_of(mask: int) -> list[str]:
    return [name for name in LEAVES if mask & _BIT[name]]


def mask_of(*names: str) -> int:
    m = 0
    for n in names:
        m |= _BIT[n]
    return m


def is_singleton(mask: int) -> bool:
    return mask != 0 and (mask & (mask - 1)) == 0


def singleton_name(mask: int) -> str:
    assert is_singleton(mask)
    return leaves_of(mask)[0]


def resolve_priority(mask: int) -> str:
    """Ambiguity fallback: Int32, then Int64, then Int128, then any member."""
    if mask == 0 or mask == TOP:
        return "Int32"
    for name in _PRIORITY:
        if mask & _BIT[name]:
            return name
    return "Int32"


def format_mask(mask: int) -> str:
    if mask == TOP:
        return "top"
    if mask == 0:
        return "bottom"
    return "{" + ",".join(leaves_of(mask)) + "}"


def width_class_of(mask: int) -> int | None:
    """The width class containing ``mask``, if one does."""
    for cls in (NUM32, NUM64, NUM128, NUM1, NUM16):
        if mask and mask & ~cls == 0:
            return cls
    return None


@dataclass
class TypeSet:
    """Candidate set plus the conflicted flag.

    Once a value is conflicted, later assignments overwrite instead of
    intersecting, which stops a single boundary from cascading into
    false conflicts downstream.
    """

    mask: int = TOP
    conflicted: bool = False

    def intersect(self, other: int) -> bool:
        """Meet with ``other``; returns True if the set changed."""
        if self.conflicted:
            if other and self.mask != other:
                self.mask = other
                return True
            return False
        new = self.mask & other
        if new == self.mask:
            return False
        self.mask = new
        return True

    def copy(self) -> "TypeSet":
        return TypeSet(self.mask, self.conflicted)

    def __str__(self):
        s = format_mask(self.mask)
        return s + ("!" if self.conflicted else "")
