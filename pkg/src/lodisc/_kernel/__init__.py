"""Step-kernel backend selection.

Imports the compiled Cython kernel when the extension built, falling back to
the pure-numpy implementation.  Set LODISC_KERNEL=pure (or =compiled) to
force a backend; forcing "compiled" raises if the extension is missing.
"""

from __future__ import annotations

import math
import os

import numpy as np

from . import pure

GENERIC = pure.GENERIC
DEGENERATE = pure.DEGENERATE
ZERO_OVER_ZERO = pure.ZERO_OVER_ZERO

_forced = os.environ.get("LODISC_KERNEL", "").strip().lower()

if _forced == "pure":
    _impl = pure
    BACKEND = "pure"
else:
    try:
        from . import _fast as _impl  # type: ignore[attr-defined]
        BACKEND = "compiled"
    except ImportError:
        if _forced == "compiled":
            raise
        _impl = pure
        BACKEND = "pure"

plan_step = _impl.plan_step
apply_step = _impl.apply_step
apply_pair = _impl.apply_pair
step_both = _impl.step_both
final_amps = _impl.final_amps
final_align_objective = _impl.final_align_objective


class Tables:
    """Per-cutoff lookup tables shared by both backends."""

    _cache: dict[int, "Tables"] = {}

    def __init__(self, cutoff: int):
        M = cutoff
        lg = [math.lgamma(k + 1) for k in range(M + 2)]
        sqb = np.zeros((M + 1, M + 1))
        for n in range(M + 1):
            for j in range(M + 1 - n):
                sqb[n, j] = math.exp(0.5 * (lg[n + j] - lg[n] - lg[j]))
        self.sqb = sqb
        self.isf = np.exp(-0.5 * np.array(lg[: M + 1]))
        self.cutoff = M

    @classmethod
    def for_cutoff(cls, cutoff: int) -> "Tables":
        tab = cls._cache.get(cutoff)
        if tab is None:
            tab = cls(cutoff)
            cls._cache[cutoff] = tab
        return tab


def make_stepper(cutoff: int):
    """A per-cutoff kernel handle (owns scratch space: not thread-shared)."""
    tab = Tables.for_cutoff(cutoff)
    return _impl.Stepper(tab.sqb, tab.isf)


def backend_name() -> str:
    return BACKEND
