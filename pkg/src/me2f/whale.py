"""Whale Dominance Score (WDS).

WDS = C * N where C is the cumulative share of the top-n addresses and N
rescales the Herfindahl-Hirschman index of those shares onto [0, 1]
(0 = perfectly equal top-n holdings, 1 = a single dominant holder).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from .domain import HolderSnapshot
from .errors import HOutOfRange, ZeroCumulativeShare

_H_TOLERANCE = 1e-12


@dataclass(frozen=True)
class ConcentrationResult:
    token_id: str
    c: float
    h: float
    n_internal: float
    wds: float

    def __post_init__(self):
        if not 0 <= self.c <= 1:
            raise ValueError(f"{self.token_id}: c={self.c} outside [0, 1]")
        if not 0 <= self.n_internal <= 1:
            raise ValueError(f"{self.token_id}: n_internal={self.n_internal} outside [0, 1]")


def cumulative_share(snapshot: HolderSnapshot) -> float:
    """Sum of shares; float dust above 1 (<= 1e-9) is clamped to 1."""
    total = math.fsum(snapshot.shares)
    return 1.0 if total > 1.0 else total


def hhi(snapshot: HolderSnapshot) -> float:
    """Sum of squared shares."""
    return math.fsum(s * s for s in snapshot.shares)


def internal_concentration(c: float, h: float, n: int) -> float:
    """Rescale HHI onto [0, 1] given the cumulative share c and slot count n.

    ((h / c^2) - 1/n) / (1 - 1/n): 0 when the top-n shares are equal,
    1 when a single address holds everything.
    """
    if n < 2:
        raise ValueError(f"n={n} must be >= 2")
    if c <= 0:
        raise ZeroCumulativeShare("internal concentration undefined at c = 0")
    c2 = c * c
    if h < c2 / n - _H_TOLERANCE or h > c2 + _H_TOLERANCE:
        raise HOutOfRange(f"h={h} outside [{c2 / n}, {c2}]")
    value = ((h / c2) - 1.0 / n) / (1.0 - 1.0 / n)
    return min(1.0, max(0.0, value))


def concentration(snapshot: HolderSnapshot, n: int) -> ConcentrationResult:
    """Full concentration profile over the top-n shares of a snapshot.

    The [0, 1] rescaling runs in exact rational arithmetic so that an
    equal distribution yields exactly 0 and a single holder exactly 1;
    float rounding of the intermediate sums would otherwise leak into the
    score. Snapshots longer than n are truncated to their top n entries.
    """
    if n < 2:
        raise ValueError(f"n={n} must be >= 2")
    shares = snapshot.shares[:n]
    total = math.fsum(shares)
    c = 1.0 if total > 1.0 else total
    h = math.fsum(s * s for s in shares)
    c_exact = sum((Fraction(s) for s in shares), Fraction(0))
    if c_exact == 0:
        return ConcentrationResult(snapshot.token_id, 0.0, 0.0, 0.0, 0.0)
    h_exact = sum((Fraction(s) ** 2 for s in shares), Fraction(0))
    ratio = h_exact / (c_exact * c_exact)
    n_internal = float((ratio - Fraction(1, n)) / (1 - Fraction(1, n)))
    return ConcentrationResult(snapshot.token_id, c, h, n_internal, c * n_internal)


def wds(snapshot: HolderSnapshot, n: int) -> float:
    """Whale dominance score; 0 for empty or all-zero snapshots."""
    return concentration(snapshot, n).wds
