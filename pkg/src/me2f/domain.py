"""Shared domain types: market bars, holder snapshots, sentiment series.

All types are frozen dataclasses that validate their invariants at
construction time, so a value that exists is a value that is valid. They
are safe to share across threads.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import date as Date
from itertools import pairwise
from typing import Iterable

from .errors import (
    ConfigError,
    FgiOutOfRange,
    InvalidBar,
    InvalidShares,
    LowAboveHigh,
    NegativePrice,
    NonMonotonicDates,
    OutOfRange,
)

_SHARE_SUM_TOLERANCE = 1e-9


def _require_finite_positive(name: str, value: float, day: Date) -> None:
    if not math.isfinite(value) or value <= 0:
        raise NegativePrice(f"{name}={value!r} on {day}")


@dataclass(frozen=True)
class DailyBar:
    """One day of trading: intraday extremes, close, volume, market cap (USD)."""

    date: Date
    high: float
    low: float
    close: float
    volume_usd: float
    market_cap_usd: float

    def __post_init__(self):
        _require_finite_positive("high", self.high, self.date)
        _require_finite_positive("low", self.low, self.date)
        _require_finite_positive("close", self.close, self.date)
        for name in ("volume_usd", "market_cap_usd"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise InvalidBar(f"{name}={value!r} on {self.date}")
        if self.low > self.high:
            raise LowAboveHigh(f"low {self.low} > high {self.high} on {self.date}")


def _check_dates(dates: Iterable[Date]) -> None:
    for prev, cur in pairwise(dates):
        if cur <= prev:
            what = "duplicate" if cur == prev else "out-of-order"
            raise NonMonotonicDates(f"{what} date {cur}")


@dataclass(frozen=True)
class TokenSeries:
    """Date-ascending daily bars for one token."""

    token_id: str
    bars: tuple[DailyBar, ...]

    def __post_init__(self):
        object.__setattr__(self, "bars", tuple(self.bars))
        _check_dates(bar.date for bar in self.bars)

    def window(self) -> tuple[Date, Date] | None:
        if not self.bars:
            return None
        return self.bars[0].date, self.bars[-1].date


def validate_series(series: TokenSeries) -> TokenSeries:
    """Re-check every bar and series invariant; return the series unchanged.

    Idempotent by construction. Useful after deserialization paths that
    bypass ``__post_init__``.
    """
    for bar in series.bars:
        _require_finite_positive("high", bar.high, bar.date)
        _require_finite_positive("low", bar.low, bar.date)
        _require_finite_positive("close", bar.close, bar.date)
        if not math.isfinite(bar.volume_usd) or bar.volume_usd < 0:
            raise InvalidBar(f"volume_usd={bar.volume_usd!r} on {bar.date}")
        if not math.isfinite(bar.market_cap_usd) or bar.market_cap_usd < 0:
            raise InvalidBar(f"market_cap_usd={bar.market_cap_usd!r} on {bar.date}")
        if bar.low > bar.high:
            raise LowAboveHigh(f"low {bar.low} > high {bar.high} on {bar.date}")
    _check_dates(bar.date for bar in series.bars)
    return series


@dataclass(frozen=True)
class HolderSnapshot:
    """Top holder ownership shares (fractions of total supply), descending.

    Snapshots may carry fewer entries than the scoring parameter ``n``;
    absent tail holders count as zero shares.
    """

    token_id: str
    shares: tuple[float, ...]
    as_of: Date | None = None

    def __post_init__(self):
        object.__setattr__(self, "shares", tuple(self.shares))
        for k, share in enumerate(self.shares):
            if not math.isfinite(share) or share < 0 or share > 1:
                raise InvalidShares(f"share #{k + 1} = {share!r} outside [0, 1]")
        for k, (bigger, smaller) in enumerate(pairwise(self.shares)):
            if smaller > bigger:
                raise InvalidShares(f"shares not descending at position {k + 2}")
        total = math.fsum(self.shares)
        if total > 1 + _SHARE_SUM_TOLERANCE:
            raise InvalidShares(f"shares sum to {total}, exceeding total supply")


@dataclass(frozen=True)
class SentimentPoint:
    """Daily fear-and-greed index value with that day's absolute price return.

    ``abs_return`` is None on days without a previous close (typically the
    first observation).
    """

    date: Date
    fgi: float
    abs_return: float | None = None

    def __post_init__(self):
        if not math.isfinite(self.fgi) or not 0 <= self.fgi <= 100:
            raise FgiOutOfRange(f"fgi={self.fgi!r} on {self.date} outside [0, 100]")
        if self.abs_return is not None:
            if not math.isfinite(self.abs_return) or self.abs_return < 0:
                raise OutOfRange(f"abs_return={self.abs_return!r} on {self.date} must be >= 0")


@dataclass(frozen=True)
class SentimentSeries:
    """Date-ascending sentiment observations for one token."""

    token_id: str
    points: tuple[SentimentPoint, ...]

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))
        _check_dates(p.date for p in self.points)

    def window(self) -> tuple[Date, Date] | None:
        if not self.points:
            return None
        return self.points[0].date, self.points[-1].date


@dataclass(frozen=True)
class FrameworkParams:
    """Scoring parameters.

    alpha      weight between persistent and extreme volatility, in [0, 1]
    beta       base-chain spillover gain, > 0
    gamma      scale down-weighting strength, > 0
    delta      sentiment shock exponent, > 0
    n          number of top holders considered
    scale_unit USD divisor applied to volume/market cap before scale math
    """

    alpha: float = 0.5
    beta: float = 0.5
    gamma: float = 0.5
    delta: float = 1.5
    n: int = 100
    scale_unit: float = 1e9

    def __post_init__(self):
        if not 0 <= self.alpha <= 1:
            raise ConfigError(f"alpha={self.alpha} outside [0, 1]")
        for name in ("beta", "gamma", "delta", "scale_unit"):
            value = getattr(self, name)
            if not math.isfinite(value) or value <= 0:
                raise ConfigError(f"{name}={value!r} must be > 0")
        if not isinstance(self.n, int) or self.n < 1:
            raise ConfigError(f"n={self.n!r} must be a positive integer")


@dataclass(frozen=True)
class ChainRole:
    """Standalone chain, or token hosted on a standalone base chain."""

    base: str | None = None

    def __post_init__(self):
        if self.base is not None and not self.base:
            raise ConfigError("hosted role requires a non-empty base token id")

    @property
    def is_standalone(self) -> bool:
        return self.base is None

    @classmethod
    def standalone(cls) -> "ChainRole":
        return cls()

    @classmethod
    def hosted_on(cls, base_token_id: str) -> "ChainRole":
        return cls(base=base_token_id)
