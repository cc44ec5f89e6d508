"""Per-architecture configuration data.

Everything here is plain configuration: parameter-bank base offsets,
constant-bank slots that mirror launch state, and the few knobs that
differ between GPU generations.  The rest of the lifter is
architecture-independent.
"""

from __future__ import annotations

# Byte offset of the kernel-parameter area inside constant bank 0.
SM52_PARAM_BASE = 0x140
SM75_PARAM_BASE = 0x160
SM90_PARAM_BASE = 0x210
SM100_PARAM_BASE = 0x360
SM120_PARAM_BASE = 0x360

PARAM_BASE = {
    "sm52": SM52_PARAM_BASE,
    "sm75": SM75_PARAM_BASE,
    "sm90": SM90_PARAM_BASE,
    "sm100": SM100_PARAM_BASE,
    "sm120": SM120_PARAM_BASE,
}

SUPPORTED_ARCHS = tuple(sorted(PARAM_BASE))

WARP_SIZE = 32
MAX_BLOCK_THREADS = 1024

# Constant-bank-0 offsets that alias special registers on legacy layouts.
# Reads of these slots are rewritten to explicit S2R instructions.
SR_CONST_OFFSETS: dict[str, dict[int, str]] = {
    "sm52": {0x2C: "SR_TID.X"},
    "sm75": {},
    "sm90": {},
    "sm100": {},
    "sm120": {},
}

# Constant-bank-0 slots holding launch dimensions.  The interpreter
# fills these per launch so code that reads them directly (instead of
# via S2R) still executes correctly.
SYSTEM_CONST_SLOTS: dict[str, dict[int, str]] = {
    "sm52": {
        0x08: "ntid.x", 0x0C: "ntid.y", 0x10: "ntid.z",
        0x14: "nctaid.x", 0x18: "nctaid.y", 0x1C: "nctaid.z",
    },
    "sm75": {
        0x00: "ntid.x", 0x04: "ntid.y", 0x08: "ntid.z",
        0x0C: "nctaid.x", 0x10: "nctaid.y", 0x14: "nctaid.z",
    },
}
for _a in ("sm90", "sm100", "sm120"):
    SYSTEM_CONST_SLOTS[_a] = dict(SYSTEM_CONST_SLOTS["sm75"])


class ArchError(ValueError):
    """Unknown or unsupported architecture identifier."""


def check_arch(arch: str) -> str:
    if arch not in PARAM_BASE:
        raise ArchError(
            f"unknown architecture {arch!r}; supported: {', '.join(SUPPORTED_ARCHS)}"
        )
    return arch


def param_base(arch: str) -> int:
    return PARAM_BASE[check_arch(arch)]


def is_volta_plus(arch: str) -> bool:
    """Volta and later split carry-out predicates and use BSSY/BSYNC."""
    return check_arch(arch) not in ("sm52",)
