"""Token fragility scoring engine.

Three per-token scores over a cross-sectional universe:

- VDS (volatility dynamics): range-based volatility, scale-adjusted and
  amplified by base-chain spillover for hosted tokens.
- WDS (whale dominance): cumulative top-n holder share times normalized
  internal concentration.
- SAS (sentiment amplification): fear-and-greed instability times shock
  transmission strength.

Plus rolling-window early-warning flags over score histories.
"""
from .domain import (
    ChainRole,
    DailyBar,
    FrameworkParams,
    HolderSnapshot,
    SentimentPoint,
    SentimentSeries,
    TokenSeries,
    validate_series,
)
from .scoring import (
    FragilityReport,
    ScoringContext,
    TokenInputs,
    build_context,
    score_universe,
)

__version__ = "0.1.0"

__all__ = [
    "ChainRole",
    "DailyBar",
    "FragilityReport",
    "FrameworkParams",
    "HolderSnapshot",
    "ScoringContext",
    "SentimentPoint",
    "SentimentSeries",
    "TokenInputs",
    "TokenSeries",
    "build_context",
    "score_universe",
    "validate_series",
    "__version__",
]
