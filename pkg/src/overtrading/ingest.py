"""Reading and cleaning of forum posts, trade ticks and reference files.

All input files are UTF-8, tab separated, with a header line. Bad rows are
never fatal: each one is returned as a :class:`Rejection` carrying the file
line number and a reason code, so ``accepted + rejected == rows``.
"""

from __future__ import annotations

import csv
import datetime as dt
import enum
import io
import re
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from zoneinfo import ZoneInfo

import numpy as np
import pandas as pd

DEFAULT_ZONE = "Asia/Shanghai"
EPOCH = dt.date(1970, 1, 1)
DEFAULT_BOT_IDS = frozenset({"Ask-Sectary Robot", "AI Summary"})

POSTS_HEADER = ("stock_id", "timestamp", "author_id", "text")
TRADES_HEADER = ("stock_id", "timestamp", "price", "volume")
SHARES_HEADER = ("stock_id", "date", "shares")
FUNDAMENTALS_HEADER = (
    "stock_id", "date", "pb", "market_risk_premium", "market_return", "float_cap",
)
MEMBERSHIP_HEADER = ("stock_id", "date", "event")

# reason codes
MALFORMED = "malformed-row"
MISSING_TIMESTAMP = "missing-timestamp"
BAD_TIMESTAMP = "bad-timestamp"
NON_TRADING_DAY = "non-trading-day"
OUTSIDE_HOURS = "outside-trading-hours"
EMPTY_TEXT = "empty-text"
BAD_PRICE = "bad-price"
BAD_VOLUME = "bad-volume"


class IngestError(Exception):
    """Fatal input problem (unreadable file, wrong header, broken reference data)."""


class Slot(enum.IntEnum):
    """The four intraday buckets of a trading day."""

    S1 = 1
    S2 = 2
    S3 = 3
    S4 = 4

    @property
    def bounds(self) -> tuple[dt.time, dt.time]:
        return _SLOT_BOUNDS[self]


_SLOT_BOUNDS = {
    Slot.S1: (dt.time(9, 30), dt.time(10, 30)),
    Slot.S2: (dt.time(10, 30), dt.time(11, 30)),
    Slot.S3: (dt.time(13, 0), dt.time(14, 0)),
    Slot.S4: (dt.time(14, 0), dt.time(15, 0)),
}

_NS_PER_SECOND = 1_000_000_000
# [start, end) in ns since midnight; S4 is closed at 15:00
_SLOT_NS = [
    (int(slot), (a.hour * 3600 + a.minute * 60) * _NS_PER_SECOND,
     (b.hour * 3600 + b.minute * 60) * _NS_PER_SECOND)
    for slot, (a, b) in _SLOT_BOUNDS.items()
]


@dataclass(frozen=True, order=True)
class HourSlot:
    date: dt.date
    slot: Slot


@dataclass(frozen=True, slots=True)
class Post:
    stock_id: str
    posted_at: dt.datetime
    author_id: str
    text: str
    key: HourSlot | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.key is None:
            slot = assign_slot(self.posted_at)
            if slot is not None:
                object.__setattr__(self, "key", HourSlot(self.posted_at.date(), slot))


@dataclass(frozen=True, slots=True)
class TradeTick:
    stock_id: str
    traded_at: dt.datetime
    price: float
    volume: int


@dataclass(frozen=True, slots=True)
class Rejection:
    stock_id: str
    line: int
    reason: str


def assign_slot(timestamp: dt.datetime | dt.time) -> Slot | None:
    """Return the slot containing ``timestamp`` (exchange local time), or None."""
    t = timestamp.time() if isinstance(timestamp, dt.datetime) else timestamp
    for slot, (start, end) in _SLOT_BOUNDS.items():
        if start <= t < end or (slot is Slot.S4 and t == end):
            return slot
    return None


def slot_codes(ns_of_day: np.ndarray) -> np.ndarray:
    """Vectorized :func:`assign_slot`: 1..4 for in-session times, 0 otherwise."""
    ns = np.asarray(ns_of_day, dtype=np.int64)
    out = np.zeros(ns.shape, dtype=np.int8)
    for code, start, end in _SLOT_NS:
        inside = (ns >= start) & (ns < end)
        if code == 4:
            inside |= ns == end
        out[inside] = code
    return out


# ---------------------------------------------------------------------------
# file reading helpers


def _read_table(path: str | Path, header: Sequence[str]) -> tuple[pd.DataFrame, np.ndarray, list[int]]:
    """Split a tab-separated file into rows of the expected width.

    Returns (frame of string columns ``0..width-1``, line numbers of those
    rows, line numbers of malformed rows). Blank lines are treated as
    malformed so the row count still balances.
    """
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            raw = fh.read()
    except (OSError, UnicodeDecodeError) as exc:
        raise IngestError(f"cannot read {path}: {exc}") from exc
    if "\r" in raw:
        raw = re.sub(r"\r+(\n|$)", "\\1", raw)
    lines = raw.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise IngestError(f"{path}: missing header line")
    found = tuple(c.strip() for c in lines[0].split("\t"))
    if found != tuple(header):
        raise IngestError(f"{path}: expected header {'|'.join(header)}, got {'|'.join(found)}")
    width = len(header)
    body = lines[1:]
    good = np.fromiter((line.count("\t") == width - 1 for line in body), dtype=bool, count=len(body))
    numbers = np.flatnonzero(good) + 2
    bad = (np.flatnonzero(~good) + 2).tolist()
    kept = body if not bad else [line for line, ok in zip(body, good) if ok]
    if kept:
        frame = pd.read_csv(io.StringIO("\n".join(kept)), sep="\t", header=None, names=range(width),
                            dtype=str, keep_default_na=False, na_filter=False, quoting=csv.QUOTE_NONE,
                            lineterminator="\n", skip_blank_lines=False, engine="c")
    else:
        frame = pd.DataFrame({i: pd.Series([], dtype=object) for i in range(width)})
    if len(frame) != len(kept):
        raise IngestError(f"{path}: row count mismatch while parsing")
    return frame, numbers, bad


_SPACES = tuple(chr(c) for c in range(0x3001) if chr(c).isspace())


def _stripped(col: pd.Series) -> pd.Series:
    """``col.str.strip()``, skipped when no value contains whitespace at all."""
    joined = "".join(col.tolist())
    if not any(ch in joined for ch in _SPACES):
        return col
    return col.str.strip()


_OFFSET_RE = r"(?:Z|[+-]\d\d:?\d\d)$"


def _parse_timestamps(values: pd.Series, zone: str) -> pd.Series:
    """Parse ISO-8601 strings to naive exchange-local datetimes (NaT on failure).

    Values with an explicit UTC offset are converted into ``zone``; naive values
    are taken to be exchange local already.
    """
    # fast path for the common second-resolution form
    out = pd.to_datetime(values, format="%Y-%m-%dT%H:%M:%S", errors="coerce")
    rest = out.isna() & (values != "")
    if rest.any():
        other = values[rest]
        aware = other.str.contains(_OFFSET_RE, regex=True)
        naive = other[~aware]
        if len(naive):
            out[naive.index] = pd.to_datetime(naive, format="ISO8601", errors="coerce")
        if aware.any():
            parsed = pd.to_datetime(other[aware], format="ISO8601", errors="coerce", utc=True)
            out[parsed.index] = parsed.dt.tz_convert(ZoneInfo(zone)).dt.tz_localize(None)
    return out


def _unescape(text: str) -> str:
    if "\\" not in text:
        return text
    return re.sub(r"\\([tn\\])", lambda m: {"t": "\t", "n": "\n", "\\": "\\"}[m.group(1)], text)


def escape_text(text: str) -> str:
    """Inverse of the post-file text escaping."""
    return text.replace("\\", "\\\\").replace("\t", "\\t").replace("\n", "\\n")


def _timed_frame(frame: pd.DataFrame, numbers, ts_col: int, calendar: Sequence[dt.date], zone: str):
    """Common timestamp checks; returns (frame, reason array)."""
    frame["line"] = numbers
    reason = np.full(len(frame), "", dtype=object)
    if len(frame) == 0:
        frame["ts"] = pd.Series([], dtype="datetime64[ns]")
        frame["slot"] = np.zeros(0, dtype=np.int8)
        return frame, reason
    stamps = _stripped(frame[ts_col])
    ts = _parse_timestamps(stamps, zone)
    day = ts.dt.normalize()
    ns_of_day = (ts - day).to_numpy(dtype="timedelta64[ns]").astype(np.int64)
    slots = slot_codes(np.where(ts.isna(), -1, ns_of_day))
    trading = day.isin(pd.DatetimeIndex(pd.to_datetime(list(calendar))))
    reason[(slots == 0).astype(bool)] = OUTSIDE_HOURS
    reason[~trading.to_numpy()] = NON_TRADING_DAY
    reason[ts.isna().to_numpy()] = BAD_TIMESTAMP
    reason[(stamps == "").to_numpy()] = MISSING_TIMESTAMP
    frame["ts"] = ts
    frame["slot"] = slots
    return frame, reason


def _rejections(frame: pd.DataFrame, reason: np.ndarray, bad_lines: list[int],
                raw_rows_by_line: Mapping[int, str]) -> list[Rejection]:
    out = [Rejection(raw_rows_by_line.get(n, ""), n, MALFORMED) for n in bad_lines]
    mask = reason != ""
    for sid, n, why in zip(frame.loc[mask, 0], frame.loc[mask, "line"], reason[mask]):
        out.append(Rejection(sid, int(n), why))
    out.sort(key=lambda r: r.line)
    return out


def _malformed_ids(path: str | Path, bad_lines: list[int]) -> dict[int, str]:
    if not bad_lines:
        return {}
    wanted = set(bad_lines)
    ids = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if lineno in wanted:
                ids[lineno] = line.split("\t", 1)[0].strip()
    return ids


# ---------------------------------------------------------------------------
# loaders


def load_calendar(path: str | Path) -> list[dt.date]:
    """One ISO date per line; blank lines and ``#`` comments ignored."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IngestError(f"cannot read calendar {path}: {exc}") from exc
    days = []
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            days.append(dt.date.fromisoformat(line))
        except ValueError as exc:
            raise IngestError(f"{path}:{n}: bad calendar date {line!r}") from exc
    if any(b <= a for a, b in zip(days, days[1:])):
        raise IngestError(f"{path}: calendar dates must be strictly increasing")
    if not days:
        raise IngestError(f"{path}: empty calendar")
    return days


def load_posts(path: str | Path, calendar: Sequence[dt.date],
               zone: str = DEFAULT_ZONE) -> tuple[list[Post], list[Rejection]]:
    """Load forum posts, rejecting rows with unusable time stamps or empty text."""
    frame, numbers, bad = _read_table(path, POSTS_HEADER)
    frame, reason = _timed_frame(frame, numbers, 1, calendar, zone)
    posts: list[Post] = []
    if len(frame):
        texts = [_unescape(t) for t in frame[3]]
        empty = np.fromiter((not t.strip() for t in texts), dtype=bool, count=len(texts))
        reason[empty & (reason == "")] = EMPTY_TEXT
        ok = np.flatnonzero(reason == "")
        ts = frame["ts"].to_numpy()[ok]
        stamps = ts.astype("datetime64[us]").astype(object).tolist()
        sids, authors = _stripped(frame[0]).to_numpy()[ok].tolist(), frame[2].to_numpy()[ok].tolist()
        # one shared HourSlot per distinct (day, slot)
        code = ts.astype("datetime64[D]").astype(np.int64) * 8 + frame["slot"].to_numpy()[ok]
        uniq, inverse = np.unique(code, return_inverse=True)
        keys = [HourSlot(EPOCH + dt.timedelta(days=int(c) // 8), Slot(int(c) % 8)) for c in uniq]
        posts = [Post(sid, stamp, author, texts[i], keys[k])
                 for sid, stamp, author, i, k in zip(sids, stamps, authors, ok.tolist(), inverse.tolist())]
    rejects = _rejections(frame, reason, bad, _malformed_ids(path, bad))
    return posts, rejects


def load_trades(path: str | Path, calendar: Sequence[dt.date],
                zone: str = DEFAULT_ZONE) -> tuple[pd.DataFrame, list[Rejection]]:
    """Load trade ticks as a frame with columns
    ``stock_id, traded_at, date, slot, price, volume, line``.

    Ticks outside the four slots (the opening call auction included) are
    rejected as outside-trading-hours.
    """
    frame, numbers, bad = _read_table(path, TRADES_HEADER)
    frame, reason = _timed_frame(frame, numbers, 1, calendar, zone)
    if len(frame):
        price = pd.to_numeric(_stripped(frame[2]), errors="coerce").to_numpy(dtype=float)
        volume = pd.to_numeric(_stripped(frame[3]), errors="coerce").to_numpy(dtype=float)
        bad_price = ~np.isfinite(price) | ~(price > 0)
        bad_volume = ~np.isfinite(volume) | ~(volume > 0) | (np.mod(volume, 1) != 0)
        reason[bad_volume & (reason == "")] = BAD_VOLUME
        reason[bad_price & (reason == "")] = BAD_PRICE
    else:
        price = volume = np.zeros(0)
    ok = reason == ""
    ticks = pd.DataFrame({
        "stock_id": _stripped(frame[0])[ok].to_numpy(),
        "traded_at": frame["ts"][ok].to_numpy(),
        "price": price[ok],
        "volume": volume[ok].astype(np.int64),
        "slot": frame["slot"].to_numpy()[ok],
        "line": frame["line"].to_numpy(dtype=np.int64)[ok],
    })
    ticks.insert(2, "date", ticks["traded_at"].dt.normalize())
    rejects = _rejections(frame, reason, bad, _malformed_ids(path, bad))
    return ticks.reset_index(drop=True), rejects


def iter_ticks(ticks: pd.DataFrame) -> Iterable[TradeTick]:
    for sid, ts, price, vol in zip(ticks["stock_id"], ticks["traded_at"], ticks["price"], ticks["volume"]):
        yield TradeTick(sid, pd.Timestamp(ts).to_pydatetime(), float(price), int(vol))


def _strict_rows(path, header):
    frame, numbers, bad = _read_table(path, header)
    rows = frame.to_numpy(dtype=object).tolist()
    if bad:
        raise IngestError(f"{path}: malformed lines {bad[:5]}")
    return rows, numbers


def load_shares(path: str | Path) -> dict[str, list[tuple[dt.date, float]]]:
    """Shares outstanding per stock as date-sorted (effective_date, shares) pairs."""
    rows, numbers = _strict_rows(path, SHARES_HEADER)
    out: dict[str, list[tuple[dt.date, float]]] = {}
    for (sid, day, shares), n in zip(rows, numbers):
        try:
            d, s = dt.date.fromisoformat(day.strip()), float(shares)
        except ValueError as exc:
            raise IngestError(f"{path}:{n}: {exc}") from exc
        if not s > 0:
            raise IngestError(f"{path}:{n}: shares must be positive")
        hist = out.setdefault(sid.strip(), [])
        if hist and d <= hist[-1][0]:
            raise IngestError(f"{path}:{n}: effective dates must be strictly increasing per stock")
        hist.append((d, s))
    return out


def load_fundamentals(path: str | Path) -> pd.DataFrame:
    """Daily controls and float cap, one row per (stock, date)."""
    rows, _ = _strict_rows(path, FUNDAMENTALS_HEADER)
    frame = pd.DataFrame(rows, columns=list(FUNDAMENTALS_HEADER))
    frame["stock_id"] = frame["stock_id"].str.strip()
    frame["date"] = pd.to_datetime(frame["date"].str.strip(), format="ISO8601")
    for col in FUNDAMENTALS_HEADER[2:]:
        frame[col] = pd.to_numeric(frame[col], errors="raise")
    if frame.duplicated(["stock_id", "date"]).any():
        raise IngestError(f"{path}: more than one row per (stock, date)")
    if (frame["float_cap"] < 0).any():
        raise IngestError(f"{path}: negative float_cap")
    return frame


def load_membership(path: str | Path) -> dict[str, int]:
    """Count index-constituent changes (enter/leave events) per stock."""
    rows, _ = _strict_rows(path, MEMBERSHIP_HEADER)
    counts: dict[str, int] = {}
    for sid, _day, event in rows:
        if event.strip() not in ("enter", "leave"):
            raise IngestError(f"{path}: unknown membership event {event!r}")
        counts[sid.strip()] = counts.get(sid.strip(), 0) + 1
    return counts


# ---------------------------------------------------------------------------
# cleaning rules


def filter_bot_posts(posts: Iterable[Post], bot_ids: Iterable[str]) -> list[Post]:
    bots = frozenset(bot_ids)
    if not bots:
        return list(posts)
    return [p for p in posts if p.author_id not in bots]


def filter_sparse_stocks(posts_by_stock: Mapping[str, Iterable[Post | HourSlot]],
                         total_slots: int, max_empty_share: float = 0.10) -> set[str]:
    """Keep stocks whose share of post-free slots is at most ``max_empty_share``."""
    if total_slots <= 0:
        raise IngestError("empty-sample: total_slots must be positive")
    keep = set()
    for sid, items in posts_by_stock.items():
        covered = {x if isinstance(x, HourSlot) else x.key for x in items}
        if (total_slots - len(covered)) / total_slots <= max_empty_share:
            keep.add(sid)
    return keep


def suspension_days(trade_dates: Iterable[dt.date], calendar: Sequence[dt.date]) -> int:
    traded = set(trade_dates)
    return sum(1 for d in calendar if d not in traded)


def filter_suspended_stocks(dates_by_stock: Mapping[str, Iterable[dt.date]],
                            calendar: Sequence[dt.date], max_days: int = 30) -> set[str]:
    """Drop stocks with more than ``max_days`` trading days without a single trade."""
    return {sid for sid, dates in dates_by_stock.items()
            if suspension_days(dates, calendar) <= max_days}


def filter_index_effect(stocks: Iterable[str], membership_changes: Mapping[str, int],
                        max_changes: int = 2) -> set[str]:
    return {s for s in stocks if membership_changes.get(s, 0) <= max_changes}


def group_posts(posts: Iterable[Post]) -> dict[str, list[Post]]:
    out: dict[str, list[Post]] = {}
    for p in posts:
        out.setdefault(p.stock_id, []).append(p)
    return out


def trade_dates_by_stock(ticks: pd.DataFrame) -> dict[str, set[dt.date]]:
    out: dict[str, set[dt.date]] = {}
    if len(ticks) == 0:
        return out
    pairs = ticks[["stock_id", "date"]].drop_duplicates()
    for sid, day in zip(pairs["stock_id"], pairs["date"].dt.date):
        out.setdefault(sid, set()).add(day)
    return out


@dataclass
class CleanResult:
    posts: list[Post]
    ticks: pd.DataFrame
    stocks: list[str]
    dropped: dict[str, list[str]]
    bot_posts: int


def clean(posts: Sequence[Post], ticks: pd.DataFrame, calendar: Sequence[dt.date],
          bot_ids: Iterable[str] = DEFAULT_BOT_IDS,
          membership_changes: Mapping[str, int] | None = None,
          max_empty_share: float = 0.10, max_suspension_days: int = 30) -> CleanResult:
    """Apply all cleaning rules; the result is a fixed point of ``clean``."""
    kept_posts = filter_bot_posts(posts, bot_ids)
    by_stock = group_posts(kept_posts)
    universe = set(by_stock) | set(ticks["stock_id"].unique())
    for sid in universe:
        by_stock.setdefault(sid, [])
    dates = trade_dates_by_stock(ticks)
    for sid in universe:
        dates.setdefault(sid, set())
    dense = filter_sparse_stocks(by_stock, 4 * len(calendar), max_empty_share)
    active = filter_suspended_stocks(dates, calendar, max_suspension_days)
    dropped = {
        "sparse-posts": sorted(universe - dense),
        "suspended": sorted(universe - active),
    }
    keep = dense & active
    if membership_changes is not None:
        stable = filter_index_effect(universe, membership_changes)
        dropped["index-effect"] = sorted(universe - stable)
        keep &= stable
    stocks = sorted(keep)
    return CleanResult(
        posts=[p for p in kept_posts if p.stock_id in keep],
        ticks=ticks[ticks["stock_id"].isin(keep)].reset_index(drop=True),
        stocks=stocks,
        dropped=dropped,
        bot_posts=len(posts) - len(kept_posts),
    )
