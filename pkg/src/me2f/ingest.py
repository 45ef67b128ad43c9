"""Data ingestion: CSV loaders, universe files, and remote market data.

CSV schemas (exact headers):
    bars       date,high,low,close,volume_usd,market_cap_usd
    holders    rank,share        (or address,share)
    sentiment  date,fgi,abs_return

Pre-aggregated summary tables (the alternative entry point to raw series):
    volatility token,avg_vol_pct,max_vol_pct,max_volume_busd,max_mcap_busd,chain_role,base
    fgi        token,f_bar,f_max,f_min,q_g_pct,q_f_pct,delta_f_max,delta_p_max_pct

Dates are ISO-8601 (YYYY-MM-DD); decimal point, no thousands separators.

Remote fetching is provider-neutral: a JSON config declares the URL
template, pagination query, field paths and rate limit. Responses are
cached on disk under <cache_dir>/<provider>/<token>/<kind>/<range>.json
with a sha256 sidecar; cache hits make zero network calls.
"""
from __future__ import annotations

import hashlib
import json
import math
import os
import threading
import time
from collections import deque
from dataclasses import dataclass
from datetime import date as Date
from datetime import timedelta
from pathlib import Path
from typing import Callable, Iterable, Mapping

from .domain import (
    ChainRole,
    DailyBar,
    FrameworkParams,
    HolderSnapshot,
    SentimentPoint,
    SentimentSeries,
    TokenSeries,
)
from .errors import (
    ConfigError,
    DataError,
    EmptyFile,
    EmptyUniverse,
    FgiOutOfRange,
    HttpError,
    MalformedRow,
    NegativeShare,
    ParseError,
    PartialRange,
    RateLimited,
    SchemaMismatch,
    SumExceedsOne,
)
from .scoring import TokenInputs
from .sentiment import FgiIndicators
from .volatility import VolatilityAggregate
from .warning import Metric

BARS_HEADER = ["date", "high", "low", "close", "volume_usd", "market_cap_usd"]
SENTIMENT_HEADER = ["date", "fgi", "abs_return"]
HISTORY_HEADER = ["date", "token", "metric", "value"]
VOLATILITY_TABLE_HEADER = [
    "token", "avg_vol_pct", "max_vol_pct", "max_volume_busd", "max_mcap_busd",
    "chain_role", "base",
]
FGI_TABLE_HEADER = [
    "token", "f_bar", "f_max", "f_min", "q_g_pct", "q_f_pct",
    "delta_f_max", "delta_p_max_pct",
]


# --- CSV plumbing --------------------------------------------------------

def _read_rows(path: Path, header: list[str]) -> list[tuple[int, list[str]]]:
    text = Path(path).read_text(encoding="utf-8")
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines:
        raise EmptyFile(f"{path}: file is empty")
    got = [cell.strip() for cell in lines[0].split(",")]
    if got != header:
        raise SchemaMismatch(f"{path}: header {got!r} != expected {header!r}")
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        cells = [cell.strip() for cell in line.split(",")]
        if len(cells) != len(header):
            raise MalformedRow(lineno, header[0], f"expected {len(header)} cells, got {len(cells)}")
        rows.append((lineno, cells))
    if not rows:
        raise EmptyFile(f"{path}: no data rows")
    return rows


def _parse_float(lineno: int, column: str, raw: str) -> float:
    try:
        value = float(raw)
    except ValueError:
        raise MalformedRow(lineno, column, f"not a number: {raw!r}") from None
    if not math.isfinite(value):
        raise MalformedRow(lineno, column, f"not finite: {raw!r}")
    return value


def _parse_date(lineno: int, raw: str) -> Date:
    try:
        return Date.fromisoformat(raw)
    except ValueError:
        raise MalformedRow(lineno, "date", f"not an ISO date: {raw!r}") from None


def _token_id_for(path: Path, token_id: str | None) -> str:
    return token_id if token_id else Path(path).stem.upper()


# --- loaders -------------------------------------------------------------

def load_bars_csv(path: str | Path, token_id: str | None = None) -> TokenSeries:
    """Load and validate a daily-bar CSV into a TokenSeries.

    Rows are sorted by date (shuffled input is canonicalized, not
    rejected); duplicate dates and invariant violations are errors.
    """
    path = Path(path)
    bars = []
    for lineno, cells in _read_rows(path, BARS_HEADER):
        day = _parse_date(lineno, cells[0])
        values = [_parse_float(lineno, col, raw) for col, raw in zip(BARS_HEADER[1:], cells[1:])]
        try:
            bars.append(DailyBar(day, *values))
        except DataError as exc:
            raise MalformedRow(lineno, "date", str(exc)) from None
    bars.sort(key=lambda b: b.date)
    return TokenSeries(_token_id_for(path, token_id), tuple(bars))


def load_holders_csv(
    path: str | Path,
    token_id: str | None = None,
    n: int = 100,
    as_of: Date | None = None,
    exclude: Iterable[str] = (),
) -> HolderSnapshot:
    """Load a holder-share CSV into a descending top-n snapshot.

    The first column is either a numeric rank or an address; an optional
    ``exclude`` set drops address rows (custodial filtering, off by
    default). The share sum is checked before truncation to the top n.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines:
        raise EmptyFile(f"{path}: file is empty")
    header = [cell.strip() for cell in lines[0].split(",")]
    if header not in (["rank", "share"], ["address", "share"]):
        raise SchemaMismatch(f"{path}: header {header!r} not rank,share or address,share")
    excluded = set(exclude)
    shares: list[float] = []
    for lineno, line in enumerate(lines[1:], start=2):
        cells = [cell.strip() for cell in line.split(",")]
        if len(cells) != 2:
            raise MalformedRow(lineno, header[0], f"expected 2 cells, got {len(cells)}")
        if cells[0] in excluded:
            continue
        share = _parse_float(lineno, "share", cells[1])
        if share < 0:
            raise NegativeShare(f"{path}: line {lineno}: share {share} < 0")
        shares.append(share)
    if not shares:
        raise EmptyFile(f"{path}: no data rows")
    total = math.fsum(shares)
    if total > 1 + 1e-9:
        raise SumExceedsOne(f"{path}: shares sum to {total}")
    shares.sort(reverse=True)
    return HolderSnapshot(_token_id_for(path, token_id), tuple(shares[:n]), as_of=as_of)


def load_sentiment_csv(path: str | Path, token_id: str | None = None) -> SentimentSeries:
    """Load a daily FGI CSV; an empty abs_return cell means "no return"."""
    path = Path(path)
    points = []
    for lineno, cells in _read_rows(path, SENTIMENT_HEADER):
        day = _parse_date(lineno, cells[0])
        fgi = _parse_float(lineno, "fgi", cells[1])
        if not 0 <= fgi <= 100:
            raise FgiOutOfRange(f"{path}: line {lineno}: fgi={fgi} outside [0, 100]")
        abs_return = None
        if cells[2] != "":
            abs_return = _parse_float(lineno, "abs_return", cells[2])
            if abs_return < 0:
                raise MalformedRow(lineno, "abs_return", f"negative return {abs_return}")
        points.append(SentimentPoint(day, fgi, abs_return))
    points.sort(key=lambda p: p.date)
    return SentimentSeries(_token_id_for(path, token_id), tuple(points))


def load_volatility_table(
    path: str | Path,
) -> dict[str, tuple[VolatilityAggregate, ChainRole]]:
    """Load a pre-aggregated volatility summary table.

    Percent columns become fractions; volume/market-cap columns are
    already in scale units (USD billions).
    """
    out: dict[str, tuple[VolatilityAggregate, ChainRole]] = {}
    for lineno, cells in _read_rows(Path(path), VOLATILITY_TABLE_HEADER):
        token = cells[0]
        if not token:
            raise MalformedRow(lineno, "token", "empty token id")
        avg_pct, max_pct, volume, mcap = (
            _parse_float(lineno, col, raw)
            for col, raw in zip(VOLATILITY_TABLE_HEADER[1:5], cells[1:5])
        )
        role_raw, base = cells[5], cells[6]
        if role_raw == "standalone":
            if base:
                raise MalformedRow(lineno, "base", f"standalone token {token} must not name a base")
            role = ChainRole.standalone()
        elif role_raw == "hosted":
            if not base:
                raise MalformedRow(lineno, "base", f"hosted token {token} needs a base")
            role = ChainRole.hosted_on(base)
        else:
            raise MalformedRow(lineno, "chain_role", f"unknown role {role_raw!r}")
        agg = VolatilityAggregate(token, avg_pct / 100.0, max_pct / 100.0, volume, mcap)
        out[token] = (agg, role)
    return out


def load_fgi_table(path: str | Path) -> dict[str, FgiIndicators]:
    """Load a pre-aggregated FGI indicator table (percent columns -> fractions)."""
    out: dict[str, FgiIndicators] = {}
    for lineno, cells in _read_rows(Path(path), FGI_TABLE_HEADER):
        token = cells[0]
        if not token:
            raise MalformedRow(lineno, "token", "empty token id")
        f_bar, f_max, f_min, q_g_pct, q_f_pct, delta_f, delta_p_pct = (
            _parse_float(lineno, col, raw)
            for col, raw in zip(FGI_TABLE_HEADER[1:], cells[1:])
        )
        out[token] = FgiIndicators(
            token_id=token,
            f_bar=f_bar,
            f_max=f_max,
            f_min=f_min,
            r_f=f_max - f_min,
            q_g=q_g_pct / 100.0,
            q_f=q_f_pct / 100.0,
            delta_f_max=delta_f,
            delta_p_max=delta_p_pct / 100.0,
        )
    return out


def load_history_csv(path: str | Path) -> list[tuple[Date, str, Metric, float]]:
    """Load a score-history CSV: one (date, token, metric, value) per row."""
    points = []
    for lineno, cells in _read_rows(Path(path), HISTORY_HEADER):
        day = _parse_date(lineno, cells[0])
        token = cells[1]
        if not token:
            raise MalformedRow(lineno, "token", "empty token id")
        try:
            metric = Metric(cells[2])
        except ValueError:
            raise MalformedRow(lineno, "metric", f"unknown metric {cells[2]!r}") from None
        points.append((day, token, metric, _parse_float(lineno, "value", cells[3])))
    return points


# --- universe files ------------------------------------------------------

def load_universe(path: str | Path, params: FrameworkParams) -> dict[str, TokenInputs]:
    """Assemble per-token inputs from a universe JSON file.

    The file lists per-token raw data files and/or pre-aggregated summary
    tables; relative paths resolve against the universe file's directory.
    Explicit per-token files take precedence over table rows.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"universe file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"universe file {path} is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"universe file {path} must contain a JSON object")
    base_dir = path.parent

    vol_table: dict[str, tuple[VolatilityAggregate, ChainRole]] = {}
    if doc.get("volatility_table"):
        vol_table = load_volatility_table(base_dir / doc["volatility_table"])
    fgi_table: dict[str, FgiIndicators] = {}
    if doc.get("fgi_table"):
        fgi_table = load_fgi_table(base_dir / doc["fgi_table"])

    entries = doc.get("tokens", [])
    if not isinstance(entries, list):
        raise ConfigError(f"universe file {path}: 'tokens' must be a list")

    roles: dict[str, ChainRole] = {tid: role for tid, (_, role) in vol_table.items()}
    inputs_cfg: dict[str, dict] = {}
    for entry in entries:
        if not isinstance(entry, dict) or "id" not in entry:
            raise ConfigError(f"universe file {path}: each token entry needs an 'id'")
        tid = entry["id"]
        inputs_cfg[tid] = entry
        role_raw = entry.get("role")
        if role_raw == "standalone":
            roles[tid] = ChainRole.standalone()
        elif role_raw == "hosted":
            if not entry.get("base"):
                raise ConfigError(f"universe file {path}: hosted token {tid} needs a 'base'")
            roles[tid] = ChainRole.hosted_on(entry["base"])
        elif role_raw is not None:
            raise ConfigError(f"universe file {path}: unknown role {role_raw!r} for {tid}")

    token_ids = sorted(set(vol_table) | set(fgi_table) | set(inputs_cfg))
    if not token_ids:
        raise EmptyUniverse(f"universe file {path} names no tokens")

    universe: dict[str, TokenInputs] = {}
    for tid in token_ids:
        if tid not in roles:
            raise ConfigError(f"universe file {path}: no chain role known for {tid}")
        entry = inputs_cfg.get(tid, {})
        series = None
        if entry.get("bars"):
            series = load_bars_csv(base_dir / entry["bars"], token_id=tid)
        holders = None
        if entry.get("holders"):
            holders = load_holders_csv(
                base_dir / entry["holders"],
                token_id=tid,
                n=params.n,
                exclude=entry.get("exclude_addresses", ()),
            )
        sentiment = None
        if entry.get("sentiment"):
            sentiment = load_sentiment_csv(base_dir / entry["sentiment"], token_id=tid)
        universe[tid] = TokenInputs(
            role=roles[tid],
            series=series,
            volatility=None if series is not None else _first(vol_table.get(tid)),
            holders=holders,
            sentiment=sentiment,
            fgi=None if sentiment is not None else fgi_table.get(tid),
        )
    return universe


def _first(pair):
    return pair[0] if pair is not None else None


# --- remote market data ----------------------------------------------------

@dataclass(frozen=True)
class ProviderEndpointSpec:
    """Declarative description of one market-data provider.

    ``path`` and ``query`` values may use the placeholders {token},
    {start}, {end}, {page} and {page_size}. ``items_path`` and the
    ``fields`` values are dot-separated paths into the JSON response.
    The API key is read from the environment (ME2F_API_KEY_<NAME>) and
    sent in ``api_key_header``; keys never live in config files.
    """

    name: str
    base_url: str
    path: str
    query: Mapping[str, str]
    fields: Mapping[str, str]
    items_path: str = ""
    api_key_header: str | None = None
    rate_limit: int = 30
    timeout: float = 10.0
    page_size: int = 100

    def __post_init__(self):
        if self.rate_limit <= 0:
            raise ConfigError(f"rate_limit={self.rate_limit} must be > 0")
        if self.timeout <= 0:
            raise ConfigError(f"timeout={self.timeout} must be > 0")
        missing = [f for f in BARS_HEADER if f not in self.fields]
        if missing:
            raise ConfigError(f"provider {self.name}: missing field paths for {missing}")

    def api_key_env(self) -> str:
        return "ME2F_API_KEY_" + "".join(
            ch if ch.isalnum() else "_" for ch in self.name.upper()
        )


def load_provider_config(path: str | Path) -> ProviderEndpointSpec:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"provider config not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"provider config {path} is not valid JSON: {exc}") from None
    try:
        return ProviderEndpointSpec(
            name=doc["name"],
            base_url=doc["base_url"],
            path=doc.get("path", ""),
            query=dict(doc.get("query", {})),
            fields=dict(doc["fields"]),
            items_path=doc.get("items_path", ""),
            api_key_header=doc.get("api_key_header"),
            rate_limit=int(doc.get("rate_limit_per_minute", 30)),
            timeout=float(doc.get("timeout_seconds", 10.0)),
            page_size=int(doc.get("page_size", 100)),
        )
    except KeyError as exc:
        raise ConfigError(f"provider config {path}: missing key {exc}") from None


class RateLimiter:
    """Blocking token bucket: at most ``max_per_minute`` acquisitions in
    any rolling 60-second window. Shared across threads."""

    def __init__(
        self,
        max_per_minute: int,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.max_per_minute = max_per_minute
        self._clock = clock
        self._sleep = sleep
        self._stamps: deque[float] = deque()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        with self._lock:
            while True:
                now = self._clock()
                while self._stamps and now - self._stamps[0] >= 60.0:
                    self._stamps.popleft()
                if len(self._stamps) < self.max_per_minute:
                    self._stamps.append(now)
                    return
                self._sleep(60.0 - (now - self._stamps[0]))


def _dig(record, dotted_path: str):
    value = record
    for key in dotted_path.split("."):
        if not key:
            continue
        if not isinstance(value, dict) or key not in value:
            raise ParseError(f"response field path {dotted_path!r} not found")
        value = value[key]
    return value


class MarketDataClient:
    """Cache-first daily-bar fetcher for one provider endpoint."""

    def __init__(
        self,
        provider: ProviderEndpointSpec,
        cache_dir: str | Path,
        session=None,
        clock: Callable[[], float] = time.time,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.provider = provider
        self.cache_dir = Path(cache_dir)
        if session is None:
            import requests

            session = requests.Session()
        self.session = session
        self._clock = clock
        self._sleep = sleep
        self.limiter = RateLimiter(provider.rate_limit, clock=clock, sleep=sleep)

    # cache layout: <cache_dir>/<provider>/<token>/<kind>/<range>.json (+ .sha256)
    def _cache_path(self, token_id: str, kind: str, start: Date, end: Date) -> Path:
        return self.cache_dir / self.provider.name / token_id / kind / f"{start}_{end}.json"

    def _cache_read(self, path: Path) -> list[dict] | None:
        sidecar = path.with_suffix(path.suffix + ".sha256")
        if not path.exists() or not sidecar.exists():
            return None
        payload = path.read_bytes()
        if hashlib.sha256(payload).hexdigest() != sidecar.read_text().strip():
            return None
        return json.loads(payload)["records"]

    def _cache_write(self, path: Path, records: list[dict]) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = json.dumps(
            {"fetched_at": self._clock(), "records": records}, indent=2
        ).encode("utf-8")
        tmp = path.with_suffix(".tmp")
        tmp.write_bytes(payload)
        os.replace(tmp, path)
        path.with_suffix(path.suffix + ".sha256").write_text(
            hashlib.sha256(payload).hexdigest() + "\n"
        )

    def _get(self, url: str, params: dict[str, str]):
        headers = {}
        if self.provider.api_key_header:
            key = os.environ.get(self.provider.api_key_env(), "")
            if key:
                headers[self.provider.api_key_header] = key
        self.limiter.acquire()
        resp = self.session.get(url, params=params, headers=headers, timeout=self.provider.timeout)
        if resp.status_code == 429:
            self._sleep(float(resp.headers.get("Retry-After", 1.0)))
            self.limiter.acquire()
            resp = self.session.get(url, params=params, headers=headers, timeout=self.provider.timeout)
            if resp.status_code == 429:
                raise RateLimited(f"{self.provider.name}: still rate limited after backoff")
        if resp.status_code >= 400:
            raise HttpError(resp.status_code, resp.text)
        return resp

    def _fetch_pages(self, token_id: str, start: Date, end: Date) -> list:
        spec = self.provider
        items: list = []
        page = 1
        while True:
            fill = {
                "token": token_id,
                "start": start.isoformat(),
                "end": end.isoformat(),
                "page": str(page),
                "page_size": str(spec.page_size),
            }
            url = spec.base_url.rstrip("/") + spec.path.format(**fill)
            params = {k: v.format(**fill) for k, v in spec.query.items()}
            resp = self._get(url, params)
            try:
                body = resp.json()
            except ValueError as exc:
                raise ParseError(f"{spec.name}: response is not JSON: {exc}") from None
            batch = _dig(body, spec.items_path) if spec.items_path else body
            if not isinstance(batch, list):
                raise ParseError(f"{spec.name}: items path does not yield a list")
            items.extend(batch)
            if len(batch) < spec.page_size:
                return items
            page += 1

    def fetch_daily(self, token_id: str, start: Date, end: Date) -> TokenSeries:
        """Daily bars for [start, end], cache-first.

        Raises PartialRange when the provider covers only part of the
        range; only complete responses are cached.
        """
        if end < start:
            raise ConfigError(f"date range {start}..{end} is inverted")
        cache_path = self._cache_path(token_id, "bars", start, end)
        records = self._cache_read(cache_path)
        from_cache = records is not None
        if records is None:
            fields = self.provider.fields
            records = []
            for item in self._fetch_pages(token_id, start, end):
                try:
                    day = Date.fromisoformat(str(_dig(item, fields["date"])))
                    records.append(
                        {
                            "date": day.isoformat(),
                            "high": float(_dig(item, fields["high"])),
                            "low": float(_dig(item, fields["low"])),
                            "close": float(_dig(item, fields["close"])),
                            "volume_usd": float(_dig(item, fields["volume_usd"])),
                            "market_cap_usd": float(_dig(item, fields["market_cap_usd"])),
                        }
                    )
                except (TypeError, ValueError) as exc:
                    raise ParseError(f"{self.provider.name}: bad record: {exc}") from None
            records = [r for r in records if start.isoformat() <= r["date"] <= end.isoformat()]
            records.sort(key=lambda r: r["date"])

        got = {r["date"] for r in records}
        expected = []
        day = start
        while day <= end:
            expected.append(day)
            day += timedelta(days=1)
        missing = [d for d in expected if d.isoformat() not in got]
        if missing:
            raise PartialRange(token_id, missing)

        series = TokenSeries(
            token_id,
            tuple(
                DailyBar(
                    Date.fromisoformat(r["date"]),
                    r["high"], r["low"], r["close"], r["volume_usd"], r["market_cap_usd"],
                )
                for r in records
            ),
        )
        if not from_cache:
            self._cache_write(cache_path, records)
        return series
