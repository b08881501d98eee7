"""Slot turnover, excess turnover and the institutional/retail trade split.

Turnover follows the value-traded form by default::

    turnover = sum(price * volume over the slot's ticks) / shares_outstanding

and excess turnover compares it with the mean of up to ``window`` earlier
turnovers (by default the same slot on previous trading days)::

    excess = (turnover - baseline) / baseline

Total turnover is defined as the sum of its two class components so the
split adds up exactly.
"""

from __future__ import annotations

import bisect
import datetime as dt
import enum
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .ingest import HourSlot, TradeTick

AMOUNT_THRESHOLD = 200_000.0
SHARE_THRESHOLD = 100_000
ROBUST_AMOUNT_THRESHOLD = 500_000.0

VALUE, SHARES = "value", "shares"
SAME_SLOT, ROLLING = "same-slot", "rolling"

METRIC_COLUMNS = (
    "stock_id", "date", "slot", "turnover_total", "turnover_inst", "turnover_retail",
    "et_total", "et_inst", "et_retail", "window",
)


class MetricsError(Exception):
    pass


class MissingSharesError(MetricsError):
    def __init__(self, stock_id: str, date: dt.date):
        super().__init__(f"missing-shares: no shares outstanding for {stock_id} on {date}")
        self.stock_id, self.date = stock_id, date


class InvestorClass(str, enum.Enum):
    INSTITUTIONAL = "inst"
    RETAIL = "retail"


@dataclass(frozen=True)
class SlotTurnover:
    stock_id: str
    slot_key: HourSlot | None
    turnover: float
    by_class: Mapping[InvestorClass, float]


@dataclass(frozen=True)
class ExcessTurnover:
    stock_id: str
    slot_key: HourSlot | None
    investor_class: InvestorClass | None  # None means all trades
    value: float
    baseline_mean: float
    window_used: int


def classify_trade(tick: TradeTick, amount_threshold: float = AMOUNT_THRESHOLD,
                   share_threshold: float = SHARE_THRESHOLD) -> InvestorClass:
    if tick.price * tick.volume > amount_threshold or tick.volume > share_threshold:
        return InvestorClass.INSTITUTIONAL
    return InvestorClass.RETAIL


def institutional_mask(price: np.ndarray, volume: np.ndarray,
                       amount_threshold: float = AMOUNT_THRESHOLD,
                       share_threshold: float = SHARE_THRESHOLD) -> np.ndarray:
    """Array form of :func:`classify_trade` (True = institutional)."""
    price = np.asarray(price, dtype=float)
    volume = np.asarray(volume)
    return (price * volume > amount_threshold) | (volume > share_threshold)


def shares_on(history: Sequence[tuple[dt.date, float]] | None, day: dt.date, stock_id: str = "") -> float:
    """Shares outstanding effective on ``day`` (latest effective date not after it)."""
    if history:
        i = bisect.bisect_right([d for d, _ in history], day)
        if i:
            return history[i - 1][1]
    raise MissingSharesError(stock_id, day)


def slot_turnover(ticks: Iterable[TradeTick], shares_outstanding: float | None,
                  amount_threshold: float = AMOUNT_THRESHOLD,
                  share_threshold: float = SHARE_THRESHOLD,
                  formula: str = VALUE, stock_id: str = "",
                  slot_key: HourSlot | None = None) -> SlotTurnover:
    if shares_outstanding is None or not shares_outstanding > 0:
        raise MissingSharesError(stock_id, slot_key.date if slot_key else None)
    sums = {InvestorClass.INSTITUTIONAL: 0.0, InvestorClass.RETAIL: 0.0}
    for t in ticks:
        amount = t.price * t.volume if formula == VALUE else float(t.volume)
        sums[classify_trade(t, amount_threshold, share_threshold)] += amount
    by_class = {k: v / shares_outstanding for k, v in sums.items()}
    total = by_class[InvestorClass.INSTITUTIONAL] + by_class[InvestorClass.RETAIL]
    return SlotTurnover(stock_id, slot_key, total, by_class)


def default_min_window(window: int) -> int:
    return math.ceil(window / 2)


def baseline(history: Sequence[float], window: int) -> tuple[float, int]:
    """Mean of up to ``window`` values of a most-recent-first history."""
    used = list(history[:window])
    total = 0.0
    for v in used:
        total += v
    return (total / len(used) if used else math.nan), len(used)


def excess_turnover(current: SlotTurnover | float, history: Sequence[float], window: int = 20,
                    min_window: int | None = None,
                    investor_class: InvestorClass | None = None) -> ExcessTurnover | None:
    """Excess turnover of ``current`` against its most-recent-first ``history``.

    Returns None (no baseline) when fewer than ``min_window`` history values
    exist or their mean is zero.
    """
    if window < 1:
        raise MetricsError(f"window must be >= 1, got {window}")
    if min_window is None:
        min_window = default_min_window(window)
    if isinstance(current, SlotTurnover):
        t = current.turnover if investor_class is None else current.by_class[investor_class]
        sid, key = current.stock_id, current.slot_key
    else:
        t, sid, key = float(current), "", None
    mean, used = baseline(history, window)
    if used < min_window or not mean > 0:
        return None
    return ExcessTurnover(sid, key, investor_class, (t - mean) / mean, mean, used)


# ---------------------------------------------------------------------------
# whole-sample computation


@dataclass
class MetricsParams:
    amount_threshold: float = AMOUNT_THRESHOLD
    share_threshold: float = SHARE_THRESHOLD
    window: int = 20
    min_window: int | None = None
    baseline_mode: str = SAME_SLOT
    cumulative: bool = False
    formula: str = VALUE


def _rolling_baseline(series: np.ndarray, window: int, min_window: int) -> tuple[np.ndarray, np.ndarray]:
    """Baseline along the last axis, summing most-recent-first like :func:`baseline`."""
    length = series.shape[-1]
    acc = np.zeros_like(series)
    for k in range(1, min(window, length - 1) + 1):
        acc[..., k:] += series[..., :-k]
    used = np.minimum(np.arange(length), window)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = acc / used
    mean[..., used < min_window] = np.nan
    return mean, np.broadcast_to(used, series.shape)


def _excess(t: np.ndarray, mean: np.ndarray) -> np.ndarray:
    with np.errstate(invalid="ignore", divide="ignore"):
        et = (t - mean) / mean
    et[~(mean > 0)] = np.nan
    return et


def compute_metrics(ticks: pd.DataFrame, stocks: Sequence[str], calendar: Sequence[dt.date],
                    shares: Mapping[str, Sequence[tuple[dt.date, float]]],
                    params: MetricsParams = MetricsParams()) -> pd.DataFrame:
    """Turnover and excess turnover for every (stock, trading day, slot).

    Slots without ticks have zero turnover. ``ticks`` is the frame produced
    by :func:`overtrading.ingest.load_trades`.
    """
    if params.window < 1:
        raise MetricsError(f"window must be >= 1, got {params.window}")
    min_window = params.min_window if params.min_window is not None else default_min_window(params.window)
    stocks = list(stocks)
    n_s, n_d = len(stocks), len(calendar)
    days = pd.DatetimeIndex(pd.to_datetime(list(calendar)))

    share_grid = np.empty((n_s, n_d))
    for i, sid in enumerate(stocks):
        hist = shares.get(sid)
        for j, day in enumerate(calendar):
            share_grid[i, j] = shares_on(hist, day, sid)

    sel = ticks[ticks["stock_id"].isin(stocks)]
    s_idx = pd.Index(stocks).get_indexer(sel["stock_id"])
    d_idx = days.get_indexer(sel["date"])
    if (d_idx < 0).any():
        raise MetricsError("ticks dated outside the calendar")
    flat = (s_idx * n_d + d_idx) * 4 + (sel["slot"].to_numpy(dtype=np.int64) - 1)
    price = sel["price"].to_numpy(dtype=float)
    volume = sel["volume"].to_numpy()
    amount = price * volume if params.formula == VALUE else volume.astype(float)
    inst = institutional_mask(price, volume, params.amount_threshold, params.share_threshold)
    size = n_s * n_d * 4
    # bincount accumulates in row order, matching slot_turnover's loop
    inst_val = np.bincount(flat[inst], weights=amount[inst], minlength=size).reshape(n_s, n_d, 4)
    ret_val = np.bincount(flat[~inst], weights=amount[~inst], minlength=size).reshape(n_s, n_d, 4)
    t_inst = inst_val / share_grid[:, :, None]
    t_ret = ret_val / share_grid[:, :, None]
    if params.cumulative:
        t_inst = np.cumsum(t_inst, axis=2)
        t_ret = np.cumsum(t_ret, axis=2)
    t_all = t_inst + t_ret

    def excess(t):
        if params.baseline_mode == SAME_SLOT:
            series = t.transpose(0, 2, 1)  # (stock, slot, day)
            mean, used = _rolling_baseline(series, params.window, min_window)
            return _excess(series, mean).transpose(0, 2, 1), used.transpose(0, 2, 1)
        if params.baseline_mode == ROLLING:
            series = t.reshape(n_s, n_d * 4)
            mean, used = _rolling_baseline(series, params.window, min_window)
            return _excess(series, mean).reshape(n_s, n_d, 4), used.reshape(n_s, n_d, 4)
        raise MetricsError(f"unknown baseline mode {params.baseline_mode!r}")

    et_all, used = excess(t_all)
    et_inst, _ = excess(t_inst)
    et_ret, _ = excess(t_ret)

    frame = pd.DataFrame({
        "stock_id": np.repeat(np.array(stocks, dtype=object), n_d * 4),
        "date": np.tile(np.repeat(days.values, 4), n_s),
        "slot": np.tile(np.arange(1, 5, dtype=np.int8), n_s * n_d),
        "turnover_total": t_all.ravel(),
        "turnover_inst": t_inst.ravel(),
        "turnover_retail": t_ret.ravel(),
        "et_total": et_all.ravel(),
        "et_inst": et_inst.ravel(),
        "et_retail": et_ret.ravel(),
        "window": np.ascontiguousarray(used).ravel().astype(np.int64),
    })
    return frame
