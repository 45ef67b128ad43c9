"""Loaders, universe assembly, caching, rate limiting, and remote fetch."""
from __future__ import annotations

import json
import random
from datetime import date, timedelta
from pathlib import Path

import pytest

from me2f.domain import DailyBar, FrameworkParams, TokenSeries, validate_series
from me2f.errors import (
    ConfigError,
    DataError,
    EmptyFile,
    EmptyUniverse,
    FgiOutOfRange,
    HttpError,
    MalformedRow,
    NonMonotonicDates,
    ParseError,
    PartialRange,
    RateLimited,
    SchemaMismatch,
    SumExceedsOne,
    NegativeShare,
)
from me2f.ingest import (
    BARS_HEADER,
    MarketDataClient,
    ProviderEndpointSpec,
    RateLimiter,
    load_bars_csv,
    load_fgi_table,
    load_holders_csv,
    load_provider_config,
    load_sentiment_csv,
    load_universe,
    load_volatility_table,
)
from conftest import REFERENCE_DIR

PARAMS = FrameworkParams()


def write(tmp_path: Path, name: str, text: str) -> Path:
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


BARS_OK = """date,high,low,close,volume_usd,market_cap_usd
2024-01-01,110,90,100,1000000,2000000
2024-01-02,120,100,110,1500000,2500000
2024-01-03,115,105,108,1200000,2400000
"""


class TestLoadBarsCsv:
    def test_well_formed(self, tmp_path):
        series = load_bars_csv(write(tmp_path, "x.csv", BARS_OK), token_id="X")
        assert series.token_id == "X"
        assert len(series.bars) == 3
        assert series.bars[0].high == 110.0

    def test_token_id_defaults_to_stem(self, tmp_path):
        series = load_bars_csv(write(tmp_path, "doge.csv", BARS_OK))
        assert series.token_id == "DOGE"

    def test_low_above_high_is_malformed_row(self, tmp_path):
        text = BARS_OK.replace("2024-01-02,120,100", "2024-01-02,100,120")
        with pytest.raises(MalformedRow) as err:
            load_bars_csv(write(tmp_path, "x.csv", text))
        assert err.value.line == 3

    def test_shuffled_dates_are_sorted(self, tmp_path):
        lines = BARS_OK.strip().splitlines()
        shuffled = "\n".join([lines[0], lines[3], lines[1], lines[2]]) + "\n"
        assert load_bars_csv(write(tmp_path, "a.csv", shuffled), token_id="X") == load_bars_csv(
            write(tmp_path, "b.csv", BARS_OK), token_id="X"
        )

    def test_duplicate_dates_rejected(self, tmp_path):
        text = BARS_OK + "2024-01-03,111,101,105,1000,2000\n"
        with pytest.raises(NonMonotonicDates):
            load_bars_csv(write(tmp_path, "x.csv", text))

    def test_schema_mismatch(self, tmp_path):
        with pytest.raises(SchemaMismatch):
            load_bars_csv(write(tmp_path, "x.csv", "date,open,close\n2024-01-01,1,2\n"))

    def test_empty_file(self, tmp_path):
        with pytest.raises(EmptyFile):
            load_bars_csv(write(tmp_path, "x.csv", ""))
        with pytest.raises(EmptyFile):
            load_bars_csv(write(tmp_path, "y.csv", ",".join(BARS_HEADER) + "\n"))

    def test_bad_number(self, tmp_path):
        text = BARS_OK.replace("1500000", "oops")
        with pytest.raises(MalformedRow) as err:
            load_bars_csv(write(tmp_path, "x.csv", text))
        assert err.value.column == "volume_usd"

    def test_bad_date(self, tmp_path):
        text = BARS_OK.replace("2024-01-03", "03/01/2024")
        with pytest.raises(MalformedRow):
            load_bars_csv(write(tmp_path, "x.csv", text))


class TestLoadHoldersCsv:
    def test_hundred_equal_shares(self, tmp_path):
        text = "rank,share\n" + "".join(f"{i},0.005\n" for i in range(1, 101))
        snap = load_holders_csv(write(tmp_path, "h.csv", text), token_id="X")
        assert len(snap.shares) == 100
        assert sum(snap.shares) == pytest.approx(0.5)

    def test_truncates_to_top_n(self, tmp_path):
        text = "rank,share\n" + "".join(f"{i},0.005\n" for i in range(1, 151))
        snap = load_holders_csv(write(tmp_path, "h.csv", text), n=100)
        assert len(snap.shares) == 100

    def test_sum_exceeds_one(self, tmp_path):
        text = "rank,share\n" + "".join(f"{i},0.012\n" for i in range(1, 101))
        with pytest.raises(SumExceedsOne):
            load_holders_csv(write(tmp_path, "h.csv", text))

    def test_negative_share(self, tmp_path):
        with pytest.raises(NegativeShare):
            load_holders_csv(write(tmp_path, "h.csv", "rank,share\n1,-0.2\n"))

    def test_sorts_descending(self, tmp_path):
        snap = load_holders_csv(write(tmp_path, "h.csv", "rank,share\n1,0.1\n2,0.4\n3,0.2\n"))
        assert snap.shares == (0.4, 0.2, 0.1)

    def test_address_schema_with_exclusions(self, tmp_path):
        text = "address,share\n0xabc,0.4\n0xexchange,0.3\n0xdef,0.1\n"
        snap = load_holders_csv(
            write(tmp_path, "h.csv", text), exclude={"0xexchange"}
        )
        assert snap.shares == (0.4, 0.1)

    def test_unknown_header(self, tmp_path):
        with pytest.raises(SchemaMismatch):
            load_holders_csv(write(tmp_path, "h.csv", "wallet,pct\nx,0.5\n"))


class TestLoadSentimentCsv:
    def test_two_rows(self, tmp_path):
        text = "date,fgi,abs_return\n2024-01-01,50,\n2024-01-02,60,0.05\n"
        series = load_sentiment_csv(write(tmp_path, "s.csv", text), token_id="X")
        assert len(series.points) == 2
        assert series.points[0].abs_return is None
        assert series.points[1].abs_return == 0.05

    def test_real_valued_fgi(self, tmp_path):
        text = "date,fgi,abs_return\n2024-01-01,94.5,\n2024-01-02,60,0.05\n"
        series = load_sentiment_csv(write(tmp_path, "s.csv", text))
        assert series.points[0].fgi == 94.5

    def test_fgi_out_of_range(self, tmp_path):
        text = "date,fgi,abs_return\n2024-01-01,101,\n"
        with pytest.raises(FgiOutOfRange):
            load_sentiment_csv(write(tmp_path, "s.csv", text))


class TestSummaryTables:
    def test_reference_volatility_table(self):
        table = load_volatility_table(REFERENCE_DIR / "reference_volatility.csv")
        assert len(table) == 9
        agg, role = table["DOGE"]
        assert agg.avg_vol == pytest.approx(0.0627)
        assert agg.max_volume == pytest.approx(399.36)
        assert role.is_standalone
        _, shib_role = table["SHIB"]
        assert shib_role.base == "ETH"

    def test_reference_fgi_table(self):
        table = load_fgi_table(REFERENCE_DIR / "reference_fgi.csv")
        assert len(table) == 8 and "LIBRA" not in table
        eth = table["ETH"]
        assert eth.r_f == pytest.approx(87.0)
        assert eth.q_g == pytest.approx(0.0119)
        assert eth.delta_p_max == pytest.approx(0.1012)

    def test_hosted_without_base_rejected(self, tmp_path):
        text = ("token,avg_vol_pct,max_vol_pct,max_volume_busd,max_mcap_busd,chain_role,base\n"
                "X,1,2,3,4,hosted,\n")
        with pytest.raises(MalformedRow):
            load_volatility_table(write(tmp_path, "v.csv", text))


class TestLoadUniverse:
    def test_reference_universe(self, reference_universe_path):
        inputs = load_universe(reference_universe_path, PARAMS)
        assert len(inputs) == 9
        assert inputs["LIBRA"].fgi is None
        assert inputs["TRUMP"].role.base == "SOL"

    def test_empty_universe_names_file(self, tmp_path):
        path = write(tmp_path, "u.json", '{"tokens": []}')
        with pytest.raises(EmptyUniverse) as err:
            load_universe(path, PARAMS)
        assert "u.json" in str(err.value)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_universe(tmp_path / "nope.json", PARAMS)

    def test_per_token_files(self, tmp_path):
        write(tmp_path, "x.csv", BARS_OK)
        holders = "rank,share\n1,0.5\n"
        write(tmp_path, "xh.csv", holders)
        doc = {"tokens": [{"id": "X", "role": "standalone", "bars": "x.csv", "holders": "xh.csv"}]}
        inputs = load_universe(write(tmp_path, "u.json", json.dumps(doc)), PARAMS)
        assert inputs["X"].series is not None
        assert inputs["X"].holders.shares == (0.5,)

    def test_role_required(self, tmp_path):
        doc = {"tokens": [{"id": "X"}]}
        with pytest.raises(ConfigError):
            load_universe(write(tmp_path, "u.json", json.dumps(doc)), PARAMS)

    def test_exclude_addresses_passthrough(self, tmp_path):
        write(tmp_path, "h.csv", "address,share\n0xwhale,0.4\n0xcustody,0.3\n")
        doc = {"tokens": [{"id": "X", "role": "standalone", "holders": "h.csv",
                           "exclude_addresses": ["0xcustody"]}]}
        inputs = load_universe(write(tmp_path, "u.json", json.dumps(doc)), PARAMS)
        assert inputs["X"].holders.shares == (0.4,)


# --- remote fetch ----------------------------------------------------------

class FakeResponse:
    def __init__(self, status_code=200, payload=None, headers=None, text=""):
        self.status_code = status_code
        self._payload = payload
        self.headers = headers or {}
        self.text = text

    def json(self):
        if self._payload is None:
            raise ValueError("no JSON body")
        return self._payload


class FakeSession:
    """Serves paginated daily records; records every request."""

    def __init__(self, records, page_size=2, fail_first=None):
        self.records = records
        self.page_size = page_size
        self.calls = []
        self.fail_first = list(fail_first or [])

    def get(self, url, params=None, headers=None, timeout=None):
        self.calls.append({"url": url, "params": dict(params or {}), "headers": dict(headers or {})})
        if self.fail_first:
            return self.fail_first.pop(0)
        page = int(params["page"])
        size = int(params.get("limit", self.page_size))
        start = (page - 1) * size
        return FakeResponse(payload={"data": self.records[start : start + size]})


class ExplodingSession:
    def get(self, *args, **kwargs):  # pragma: no cover - reaching it is the failure
        raise AssertionError("network touched despite cache hit")


def make_provider(page_size=2, api_key_header=None, rate_limit=30):
    return ProviderEndpointSpec(
        name="fakeprov",
        base_url="https://api.fake",
        path="/bars/{token}",
        query={"start": "{start}", "end": "{end}", "page": "{page}", "limit": "{page_size}"},
        fields={"date": "d", "high": "h", "low": "l", "close": "c",
                "volume_usd": "v", "market_cap_usd": "m"},
        items_path="data",
        api_key_header=api_key_header,
        rate_limit=rate_limit,
        timeout=5.0,
        page_size=page_size,
    )


def day_records(start: date, count: int):
    return [
        {"d": (start + timedelta(days=i)).isoformat(), "h": 110.0 + i, "l": 90.0 + i,
         "c": 100.0 + i, "v": 1e9, "m": 2e9}
        for i in range(count)
    ]


class SimClock:
    def __init__(self):
        self.now = 0.0

    def __call__(self):
        return self.now

    def sleep(self, seconds):
        self.now += max(0.0, seconds)


def make_client(tmp_path, session, provider=None):
    clock = SimClock()
    return MarketDataClient(
        provider or make_provider(), tmp_path / "cache",
        session=session, clock=clock, sleep=clock.sleep,
    ), clock


class TestMarketDataClient:
    START = date(2024, 3, 1)

    def test_fetch_paginated_and_parsed(self, tmp_path):
        session = FakeSession(day_records(self.START, 5))
        client, _ = make_client(tmp_path, session)
        series = client.fetch_daily("DOGE", self.START, self.START + timedelta(days=4))
        assert len(series.bars) == 5
        assert len(session.calls) == 3  # pages of 2, 2, 1
        assert session.calls[0]["url"] == "https://api.fake/bars/DOGE"

    def test_cache_round_trip_zero_network(self, tmp_path):
        session = FakeSession(day_records(self.START, 5))
        client, _ = make_client(tmp_path, session)
        end = self.START + timedelta(days=4)
        first = client.fetch_daily("DOGE", self.START, end)
        cached_client, _ = make_client(tmp_path, ExplodingSession())
        second = cached_client.fetch_daily("DOGE", self.START, end)
        assert first == second
        assert validate_series(second) is second

    def test_corrupted_cache_is_refetched(self, tmp_path):
        session = FakeSession(day_records(self.START, 3))
        client, _ = make_client(tmp_path, session, make_provider(page_size=10))
        end = self.START + timedelta(days=2)
        client.fetch_daily("DOGE", self.START, end)
        cache_file = next((tmp_path / "cache").rglob("*.json"))
        cache_file.write_bytes(cache_file.read_bytes() + b" ")
        refetch = FakeSession(day_records(self.START, 3))
        client2, _ = make_client(tmp_path, refetch, make_provider(page_size=10))
        series = client2.fetch_daily("DOGE", self.START, end)
        assert len(refetch.calls) == 1
        assert len(series.bars) == 3

    def test_partial_range_lists_missing_days(self, tmp_path):
        records = day_records(self.START, 5)
        del records[2]  # drop 2024-03-03
        session = FakeSession(records, page_size=10)
        client, _ = make_client(tmp_path, session, make_provider(page_size=10))
        with pytest.raises(PartialRange) as err:
            client.fetch_daily("DOGE", self.START, self.START + timedelta(days=4))
        assert err.value.missing == [date(2024, 3, 3)]
        assert not list((tmp_path / "cache").rglob("*.json"))  # incomplete: not cached

    def test_429_retries_once_then_raises(self, tmp_path):
        ok = day_records(self.START, 1)
        session = FakeSession(ok, page_size=10,
                              fail_first=[FakeResponse(429, headers={"Retry-After": "7"})])
        client, clock = make_client(tmp_path, session, make_provider(page_size=10))
        series = client.fetch_daily("DOGE", self.START, self.START)
        assert len(series.bars) == 1
        assert clock.now >= 7.0  # honored the advertised delay

        double429 = FakeSession(ok, page_size=10,
                                fail_first=[FakeResponse(429), FakeResponse(429)])
        client2, _ = make_client(tmp_path, double429, make_provider(page_size=10))
        with pytest.raises(RateLimited):
            client2.fetch_daily("SHIB", self.START, self.START)  # fresh token: no cache hit

    def test_http_error(self, tmp_path):
        session = FakeSession([], page_size=10,
                              fail_first=[FakeResponse(500, text="boom")])
        client, _ = make_client(tmp_path, session, make_provider(page_size=10))
        with pytest.raises(HttpError) as err:
            client.fetch_daily("DOGE", self.START, self.START)
        assert err.value.status == 500

    def test_bad_items_path(self, tmp_path):
        session = FakeSession([], page_size=10,
                              fail_first=[FakeResponse(200, payload={"wrong": []})])
        client, _ = make_client(tmp_path, session, make_provider(page_size=10))
        with pytest.raises(ParseError):
            client.fetch_daily("DOGE", self.START, self.START)

    def test_api_key_from_environment(self, tmp_path, monkeypatch):
        provider = make_provider(page_size=10, api_key_header="x-api-key")
        assert provider.api_key_env() == "ME2F_API_KEY_FAKEPROV"
        monkeypatch.setenv("ME2F_API_KEY_FAKEPROV", "sekrit")
        session = FakeSession(day_records(self.START, 1), page_size=10)
        client, _ = make_client(tmp_path, session, provider)
        client.fetch_daily("DOGE", self.START, self.START)
        assert session.calls[0]["headers"]["x-api-key"] == "sekrit"


class TestRateLimiter:
    def test_rolling_window_compliance(self):
        clock = SimClock()
        limiter = RateLimiter(10, clock=clock, sleep=clock.sleep)
        times = []
        for _ in range(25):
            limiter.acquire()
            times.append(clock.now)
            clock.now += 0.5  # requests arrive faster than the budget
        for i in range(len(times) - 10):
            assert times[i + 10] - times[i] >= 60.0 - 1e-9

    def test_under_budget_never_sleeps(self):
        clock = SimClock()
        limiter = RateLimiter(5, clock=clock, sleep=clock.sleep)
        for _ in range(5):
            limiter.acquire()
        assert clock.now == 0.0


class TestProviderConfig:
    def test_load_round_trip(self, tmp_path):
        doc = {
            "name": "prov", "base_url": "https://x", "path": "/v1/{token}",
            "query": {"page": "{page}"}, "items_path": "data",
            "fields": {"date": "d", "high": "h", "low": "l", "close": "c",
                       "volume_usd": "v", "market_cap_usd": "m"},
            "rate_limit_per_minute": 12, "timeout_seconds": 3.5, "page_size": 50,
        }
        spec = load_provider_config(write(tmp_path, "p.json", json.dumps(doc)))
        assert spec.rate_limit == 12 and spec.page_size == 50

    def test_missing_fields_rejected(self, tmp_path):
        doc = {"name": "p", "base_url": "https://x", "fields": {"date": "d"}}
        with pytest.raises(ConfigError):
            load_provider_config(write(tmp_path, "p.json", json.dumps(doc)))


class TestLoaderDomainAgreement:
    """The loader accepts exactly the inputs whose assembled series validates."""

    def test_seeded_sample(self, tmp_path):
        rng = random.Random(99)
        agreements = 0
        for case in range(60):
            rows, bars = make_bar_rows(rng)
            text = ",".join(BARS_HEADER) + "\n" + "".join(rows)
            path = write(tmp_path, f"case{case}.csv", text)
            loader_ok, domain_ok = True, True
            try:
                load_bars_csv(path)
            except DataError:
                loader_ok = False
            # domain check: construct bars directly from the raw tuples
            try:
                constructed = [DailyBar(*b) for b in sorted(bars, key=lambda b: b[0])]
                validate_series(TokenSeries("X", tuple(constructed)))
            except DataError:
                domain_ok = False
            assert loader_ok == domain_ok, text
            agreements += 1
        assert agreements == 60


def make_bar_rows(rng: random.Random):
    """Random parseable rows; ~half carry a domain violation."""
    n = rng.randint(2, 8)
    days = sorted(rng.sample(range(1, 28), n))
    rows, bars = [], []
    corrupt = rng.random() < 0.5
    corrupt_at = rng.randrange(n) if corrupt else -1
    kind = rng.choice(["low_above_high", "neg_price", "dup_date", "neg_volume"])
    for i, dd in enumerate(days):
        low = rng.uniform(1, 100)
        high = low * rng.uniform(1.0, 1.5)
        close = rng.uniform(low, high)
        volume, mcap = rng.uniform(0, 1e9), rng.uniform(0, 1e9)
        day = date(2024, 2, dd)
        if i == corrupt_at:
            if kind == "low_above_high":
                low, high = high * 1.1, low
            elif kind == "neg_price":
                close = -abs(close)
            elif kind == "dup_date" and i > 0:
                day = date(2024, 2, days[i - 1])
            elif kind == "neg_volume":
                volume = -1.0
        rows.append(f"{day},{high},{low},{close},{volume},{mcap}\n")
        bars.append((day, high, low, close, volume, mcap))
    return rows, bars
