"""Command-line surface: score, warn, plot, fetch.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 internal
error. Diagnostics go to stderr; data goes to files.

Report schema (report.json): top-level keys params, window, tokens,
warnings, flags, joint_events, buckets. Scores are rounded to 3 decimals
for display with full precision preserved under each token's "raw"
sub-field; absent scores serialize as null and render as an em dash in
tabular output.
"""
from __future__ import annotations

import json
import math
import sys
from collections import defaultdict
from datetime import date as Date
from pathlib import Path

import click

from . import ingest, scoring
from .domain import FrameworkParams, TokenSeries
from .errors import ConfigError, DataError, Me2fError, MissingReport
from .ingest import HISTORY_HEADER, MarketDataClient
from .scoring import FragilityReport, TokenReport
from .warning import (
    Metric,
    ScorePoint,
    ScoreSeries,
    assign_buckets,
    joint_spike,
    rolling_flags,
)

ABSENT = "—"  # rendered for missing scores in tabular output

_METRIC_COLORS = {"vds": "#2a9d8f", "wds": "#3a6ea5", "sas": "#e76f51"}


# --- serialization -------------------------------------------------------

def _round_or_none(value: float | None, digits: int) -> float | None:
    return None if value is None else round(value, digits)


def _window_dict(window: tuple[Date, Date] | None) -> dict | None:
    if window is None:
        return None
    return {"start": window[0].isoformat(), "end": window[1].isoformat()}


def _token_entry(t: TokenReport) -> dict:
    if t.role.is_standalone:
        role = {"kind": "standalone"}
    else:
        role = {"kind": "hosted", "base": t.role.base}
    volatility = None
    if t.volatility is not None:
        volatility = {
            "avg_vol_pct": round(t.volatility.avg_vol * 100, 2),
            "max_vol_pct": round(t.volatility.max_vol * 100, 2),
            "max_volume": t.volatility.max_volume,
            "max_mcap": t.volatility.max_mcap,
        }
    concentration = None
    if t.concentration is not None:
        concentration = {
            "top_share_pct": round(t.concentration.c * 100, 2),
            "hhi": t.concentration.h,
            "internal": t.concentration.n_internal,
        }
    fgi = None
    if t.fgi is not None:
        fgi = {
            "f_bar": t.fgi.f_bar,
            "f_max": t.fgi.f_max,
            "f_min": t.fgi.f_min,
            "r_f": t.fgi.r_f,
            "q_g_pct": round(t.fgi.q_g * 100, 2),
            "q_f_pct": round(t.fgi.q_f * 100, 2),
            "delta_f_max": t.fgi.delta_f_max,
            "delta_p_max_pct": round(t.fgi.delta_p_max * 100, 2),
        }
    return {
        "id": t.token_id,
        "role": role,
        "vds": _round_or_none(t.vds, 3),
        "wds": _round_or_none(t.wds, 3),
        "sas": _round_or_none(t.sas, 3),
        "raw": {"vds": t.vds, "wds": t.wds, "sas": t.sas},
        "inputs": {"volatility": volatility, "concentration": concentration, "fgi": fgi},
        "window": _window_dict(t.window),
        "warnings": list(t.warnings),
    }


def report_to_dict(report: FragilityReport) -> dict:
    p = report.params
    return {
        "params": {
            "alpha": p.alpha, "beta": p.beta, "gamma": p.gamma,
            "delta": p.delta, "n": p.n, "scale_unit": p.scale_unit,
        },
        "window": _window_dict(report.window),
        "tokens": [_token_entry(t) for t in report.tokens],
        "warnings": list(report.warnings),
        "flags": [],
        "joint_events": [],
        "buckets": [],
    }


def report_table(report: FragilityReport) -> str:
    """Fixed-width fragility summary, one row per token, ascending VDS."""

    def cell(value: float | None) -> str:
        return ABSENT if value is None else f"{value:.3f}"

    lines = [f"{'Token':<10}{'VDS':>8}{'WDS':>8}{'SAS':>8}"]
    lines.append(f"{'-----':<10}{'---':>8}{'---':>8}{'---':>8}")
    for t in report.tokens:
        lines.append(f"{t.token_id:<10}{cell(t.vds):>8}{cell(t.wds):>8}{cell(t.sas):>8}")
    if report.window is not None:
        lines.append("")
        lines.append(f"window: {report.window[0]} .. {report.window[1]}")
    for note in report.warnings:
        lines.append(f"warning: {note}")
    for t in report.tokens:
        for note in t.warnings:
            lines.append(f"warning [{t.token_id}]: {note}")
    return "\n".join(lines) + "\n"


def _dumps(doc: dict) -> str:
    return json.dumps(doc, indent=2) + "\n"


def bars_to_csv(series: TokenSeries) -> str:
    lines = [",".join(ingest.BARS_HEADER)]
    for b in series.bars:
        lines.append(
            f"{b.date.isoformat()},{b.high},{b.low},{b.close},{b.volume_usd},{b.market_cap_usd}"
        )
    return "\n".join(lines) + "\n"


# --- charts ----------------------------------------------------------------

def _nice_ceiling(value: float) -> float:
    if value <= 0:
        return 1.0
    exp = math.floor(math.log10(value))
    for mult in (1.0, 2.0, 2.5, 5.0, 10.0):
        candidate = mult * 10.0**exp
        if candidate >= value * (1 - 1e-12):
            return candidate
    return 10.0 ** (exp + 1)  # unreachable


def bar_chart_svg(title: str, pairs: list[tuple[str, float]], color: str = "#2a9d8f") -> str:
    """Static descending bar chart; byte-stable for identical input.

    No external fonts, no generated ids, fixed coordinate formatting.
    """
    margin_left, margin_right, margin_top, margin_bottom = 64, 16, 44, 52
    slot = 64
    plot_h = 300
    width = margin_left + margin_right + slot * max(1, len(pairs))
    height = margin_top + plot_h + margin_bottom
    top = _nice_ceiling(max((v for _, v in pairs), default=0.0))

    def x(i: int) -> float:
        return margin_left + slot * i

    def y(v: float) -> float:
        return margin_top + plot_h * (1 - v / top)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{margin_left}" y="24" font-family="monospace" font-size="16" '
        f'font-weight="bold">{title}</text>',
    ]
    for i in range(5):
        tick = top * i / 4
        ty = y(tick)
        parts.append(
            f'<line x1="{margin_left}" y1="{ty:.2f}" x2="{width - margin_right}" '
            f'y2="{ty:.2f}" stroke="#dddddd" stroke-dasharray="3,3"/>'
        )
        parts.append(
            f'<text x="{margin_left - 6}" y="{ty + 4:.2f}" font-family="monospace" '
            f'font-size="11" text-anchor="end">{tick:g}</text>'
        )
    bar_w = slot * 0.6
    for i, (label, value) in enumerate(pairs):
        bx = x(i) + (slot - bar_w) / 2
        by = y(value)
        parts.append(
            f'<rect x="{bx:.2f}" y="{by:.2f}" width="{bar_w:.2f}" '
            f'height="{margin_top + plot_h - by:.2f}" fill="{color}"/>'
        )
        cx = x(i) + slot / 2
        parts.append(
            f'<text x="{cx:.2f}" y="{by - 5:.2f}" font-family="monospace" font-size="11" '
            f'text-anchor="middle">{value:.3f}</text>'
        )
        parts.append(
            f'<text x="{cx:.2f}" y="{margin_top + plot_h + 16}" font-family="monospace" '
            f'font-size="11" text-anchor="middle">{label}</text>'
        )
    parts.append(
        f'<line x1="{margin_left}" y1="{margin_top + plot_h}" x2="{width - margin_right}" '
        f'y2="{margin_top + plot_h}" stroke="black"/>'
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_charts(doc: dict, out_dir: Path) -> list[str]:
    """One SVG per score plus a CSV sidecar; skips all-absent scores."""
    notices = []
    for metric in ("vds", "wds", "sas"):
        pairs = [
            (t["id"], t[metric]) for t in doc.get("tokens", []) if t.get(metric) is not None
        ]
        if not pairs:
            notices.append(f"skipped {metric} chart: no values present")
            continue
        pairs.sort(key=lambda kv: (-kv[1], kv[0]))
        (out_dir / f"{metric}.svg").write_text(
            bar_chart_svg(metric.upper(), pairs, _METRIC_COLORS[metric]), encoding="utf-8"
        )
        sidecar = "token,value\n" + "".join(f"{tok},{val}\n" for tok, val in pairs)
        (out_dir / f"{metric}.csv").write_text(sidecar, encoding="utf-8")
    return notices


# --- commands ----------------------------------------------------------------

def _execute(action) -> None:
    try:
        action()
    except ConfigError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    except DataError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(3)
    except Me2fError as exc:
        click.echo(f"internal error: {exc}", err=True)
        sys.exit(4)


def _build_params(alpha, beta, gamma, delta, n, scale_unit) -> FrameworkParams:
    defaults = FrameworkParams()
    return FrameworkParams(
        alpha=defaults.alpha if alpha is None else alpha,
        beta=defaults.beta if beta is None else beta,
        gamma=defaults.gamma if gamma is None else gamma,
        delta=defaults.delta if delta is None else delta,
        n=defaults.n if n is None else n,
        scale_unit=defaults.scale_unit if scale_unit is None else scale_unit,
    )


def _param_options(fn):
    for deco in reversed([
        click.option("--alpha", type=float, default=None, help="volatility blend weight"),
        click.option("--beta", type=float, default=None, help="base-chain spillover gain"),
        click.option("--gamma", type=float, default=None, help="scale down-weighting strength"),
        click.option("--delta", type=float, default=None, help="sentiment shock exponent"),
        click.option("--n", type=int, default=None, help="top-holder count"),
        click.option("--scale-unit", type=float, default=None, help="USD divisor for volume/mcap"),
    ]):
        fn = deco(fn)
    return fn


@click.group()
@click.version_option("0.1.0", prog_name="me2f")
def main():
    """Token fragility scoring: volatility dynamics, whale dominance,
    sentiment amplification."""


@main.command()
@click.option("--universe", "universe_path", required=True, type=click.Path(), help="universe JSON file")
@click.option("--out", "out_dir", default="me2f_out", show_default=True, type=click.Path())
@click.option("--format", "formats", default="json,table", show_default=True,
              help="comma-separated subset of json,table,chart")
@_param_options
def score(universe_path, out_dir, formats, alpha, beta, gamma, delta, n, scale_unit):
    """Score a universe and write the fragility report."""

    def run():
        wanted = {f.strip() for f in formats.split(",") if f.strip()}
        unknown = wanted - {"json", "table", "chart"}
        if unknown:
            raise ConfigError(f"unknown output format(s): {', '.join(sorted(unknown))}")
        params = _build_params(alpha, beta, gamma, delta, n, scale_unit)
        inputs = ingest.load_universe(universe_path, params)
        report = scoring.score_universe(scoring.build_context(inputs, params))
        doc = report_to_dict(report)
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        written = []
        if "json" in wanted:
            (out / "report.json").write_text(_dumps(doc), encoding="utf-8")
            written.append("report.json")
        if "table" in wanted:
            (out / "report.txt").write_text(report_table(report), encoding="utf-8")
            written.append("report.txt")
        if "chart" in wanted:
            for notice in write_charts(doc, out):
                click.echo(notice, err=True)
            written.append("charts")
        click.echo(f"scored {len(report.tokens)} token(s) -> {out} ({', '.join(written)})", err=True)

    _execute(run)


def _load_report_scores(path: Path) -> list[tuple[Date, str, Metric, float]]:
    if not path.exists():
        raise MissingReport(f"report file not found: {path}")
    doc = json.loads(path.read_text(encoding="utf-8"))
    window = doc.get("window")
    if not window or not window.get("end"):
        raise DataError(f"{path}: report has no window; cannot date its scores")
    day = Date.fromisoformat(window["end"])
    points = []
    for t in doc.get("tokens", []):
        raw = t.get("raw", {})
        for metric in Metric:
            value = raw.get(metric.value, t.get(metric.value))
            if value is not None:
                points.append((day, t["id"], metric, float(value)))
    return points


@main.command()
@click.option("--history", "history_path", type=click.Path(), default=None,
              help=f"score history CSV ({','.join(HISTORY_HEADER)})")
@click.option("--report", "report_paths", multiple=True, type=click.Path(),
              help="dated report.json files to use as history (repeatable)")
@click.option("--window", "window_days", default=90, show_default=True, help="rolling window, days")
@click.option("--threshold", default=0.90, show_default=True, help="flag percentile threshold")
@click.option("--x-days", "x_days", default=3, show_default=True,
              help="max day gap for a joint spike")
@click.option("--out", "out_dir", default="me2f_out", show_default=True, type=click.Path())
def warn(history_path, report_paths, window_days, threshold, x_days, out_dir):
    """Raise rolling-window early-warning flags over score histories."""

    def run():
        if history_path is None and not report_paths:
            raise ConfigError("provide --history and/or --report inputs")
        points: list[tuple[Date, str, Metric, float]] = []
        if history_path is not None:
            points.extend(ingest.load_history_csv(history_path))
        for rp in report_paths:
            points.extend(_load_report_scores(Path(rp)))

        grouped: dict[tuple[str, Metric], list[ScorePoint]] = defaultdict(list)
        for day, token, metric, value in points:
            grouped[(token, metric)].append(ScorePoint(day, value))

        flags_by_token: dict[str, dict[Metric, list]] = defaultdict(dict)
        all_flags = []
        for (token, metric), pts in sorted(grouped.items(), key=lambda kv: (kv[0][0], kv[0][1].value)):
            series = ScoreSeries(token, metric, tuple(sorted(pts, key=lambda p: p.date)))
            flags = rolling_flags(series, window_days, threshold)
            flags_by_token[token][metric] = flags
            all_flags.extend(flags)

        events = []
        buckets = []
        for token in sorted(flags_by_token):
            events.extend(joint_spike(flags_by_token[token], x_days))
            buckets.extend(assign_buckets(flags_by_token[token], x_days))

        doc = {
            "params": {"window_days": window_days, "threshold": threshold, "x_days": x_days},
            "window": None,
            "tokens": [],
            "warnings": [],
            "flags": [
                {
                    "token": f.token_id,
                    "metric": f.metric.value,
                    "date": f.date.isoformat(),
                    "value": f.value,
                    "window_percentile": f.window_percentile,
                }
                for f in sorted(all_flags, key=lambda f: (f.token_id, f.metric.value, f.date))
            ],
            "joint_events": [
                {
                    "token": e.token_id,
                    "date": e.date.isoformat(),
                    "metrics": [m.value for m in e.metrics],
                }
                for e in sorted(events, key=lambda e: (e.token_id, e.date, e.metrics[0].value))
            ],
            "buckets": [
                {
                    "token": b.token_id,
                    "date": b.date.isoformat(),
                    "bucket": b.bucket.value,
                    "metrics": [m.value for m in b.metrics],
                }
                for b in sorted(buckets, key=lambda b: (b.token_id, b.date))
            ],
        }
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "warnings.json").write_text(_dumps(doc), encoding="utf-8")
        click.echo(
            f"{len(doc['flags'])} flag(s), {len(doc['joint_events'])} joint event(s) "
            f"-> {out / 'warnings.json'}",
            err=True,
        )

    _execute(run)


@main.command()
@click.option("--report", "report_path", required=True, type=click.Path(), help="report.json to plot")
@click.option("--out", "out_dir", default="me2f_out", show_default=True, type=click.Path())
def plot(report_path, out_dir):
    """Render descending bar charts (SVG + CSV sidecar) from a report."""

    def run():
        path = Path(report_path)
        if not path.exists():
            raise MissingReport(f"report file not found: {path}")
        doc = json.loads(path.read_text(encoding="utf-8"))
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for notice in write_charts(doc, out):
            click.echo(notice, err=True)
        click.echo(f"charts -> {out}", err=True)

    _execute(run)


@main.command()
@click.option("--provider-config", "provider_path", required=True, type=click.Path())
@click.option("--token", "token_id", required=True)
@click.option("--start", "start_raw", required=True, help="YYYY-MM-DD")
@click.option("--end", "end_raw", required=True, help="YYYY-MM-DD")
@click.option("--cache-dir", envvar="ME2F_CACHE_DIR", default=".me2f_cache", show_default=True,
              type=click.Path())
@click.option("--out", "out_path", default=None, type=click.Path(), help="write bars CSV here")
def fetch(provider_path, token_id, start_raw, end_raw, cache_dir, out_path):
    """Fetch daily bars from a configured provider (cache-first)."""

    def run():
        try:
            start = Date.fromisoformat(start_raw)
            end = Date.fromisoformat(end_raw)
        except ValueError as exc:
            raise ConfigError(f"bad date: {exc}") from None
        provider = ingest.load_provider_config(provider_path)
        client = MarketDataClient(provider, cache_dir)
        series = client.fetch_daily(token_id, start, end)
        if out_path:
            Path(out_path).write_text(bars_to_csv(series), encoding="utf-8")
            click.echo(f"{len(series.bars)} bar(s) -> {out_path}", err=True)
        else:
            click.echo(f"{len(series.bars)} bar(s) cached for {token_id}", err=True)

    _execute(run)


if __name__ == "__main__":
    main()
