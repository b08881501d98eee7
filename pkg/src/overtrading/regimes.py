"""Bull/bear phase dating of an index series and float-cap tiers.

The dating follows the peak/trough core of the Pagan-Sossounov procedure:

1. a day is a candidate peak when its level is the maximum of the ``window``
   days on either side (first occurrence on ties), a candidate trough
   likewise for the minimum; only days with a full window on both sides
   qualify;
2. of two adjacent peaks the higher is kept, of two adjacent troughs the
   lower (earlier on ties);
3. interior phases shorter than ``min_phase`` days are removed by dropping
   both turning points that bound them, then step 2 is repeated;
4. trough-to-peak spans are Bull, peak-to-trough spans Bear. A turning point
   belongs to the phase it ends.
"""

from __future__ import annotations

import bisect
import datetime as dt
import enum
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

DEFAULT_WINDOW = 105  # 5 months of 21 trading days
LARGE_CAP = 1e11
SMALL_CAP = 1e10


class RegimeError(Exception):
    pass


class Regime(str, enum.Enum):
    BULL = "Bull"
    BEAR = "Bear"


class CapTier(str, enum.Enum):
    LARGE = "Large"
    MID = "Mid"
    SMALL = "Small"


@dataclass(frozen=True)
class RegimePhase:
    kind: Regime
    start_date: dt.date
    end_date: dt.date


@dataclass(frozen=True)
class TurningPoint:
    index: int
    is_peak: bool


def load_index_series(path: str | Path) -> tuple[list[dt.date], np.ndarray]:
    """Read ``date<TAB>level`` lines (header ``date<TAB>level``)."""
    dates, levels = [], []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split("\t")
        if header != ["date", "level"]:
            raise RegimeError(f"{path}: expected header date<TAB>level")
        for n, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            try:
                day, level = line.split("\t")
                dates.append(dt.date.fromisoformat(day))
                levels.append(float(level))
            except ValueError as exc:
                raise RegimeError(f"{path}:{n}: {exc}") from exc
    return dates, check_series(dates, levels)


def check_series(dates: Sequence[dt.date], levels) -> np.ndarray:
    levels = np.asarray(levels, dtype=float)
    if len(dates) != len(levels):
        raise RegimeError("dates and levels differ in length")
    if any(b <= a for a, b in zip(dates, dates[1:])):
        raise RegimeError("index dates must be strictly increasing")
    if not np.all(levels > 0):
        raise RegimeError("index levels must be positive")
    return levels


def candidate_turning_points(levels: np.ndarray, window: int) -> list[TurningPoint]:
    """Days that are the first maximum / minimum of their +-window neighbourhood."""
    n = len(levels)
    if n < 2 * window + 1:
        return []
    views = sliding_window_view(levels, 2 * window + 1)  # row r is centred on day r + window
    centre = levels[window:n - window]
    left, right = views[:, :window], views[:, window + 1:]
    peaks = (centre > left.max(axis=1)) & (centre >= right.max(axis=1))
    troughs = (centre < left.min(axis=1)) & (centre <= right.min(axis=1))
    out = [TurningPoint(int(i) + window, True) for i in np.flatnonzero(peaks)]
    out += [TurningPoint(int(i) + window, False) for i in np.flatnonzero(troughs)]
    return sorted(out, key=lambda tp: tp.index)


def enforce_alternation(points: list[TurningPoint], levels: np.ndarray) -> list[TurningPoint]:
    out: list[TurningPoint] = []
    for tp in points:
        if out and out[-1].is_peak == tp.is_peak:
            prev = out[-1]
            better = levels[tp.index] > levels[prev.index] if tp.is_peak else levels[tp.index] < levels[prev.index]
            if better:
                out[-1] = tp
            continue
        out.append(tp)
    return out


def _drop_short_phases(points: list[TurningPoint], levels: np.ndarray, min_phase: int) -> list[TurningPoint]:
    points = enforce_alternation(points, levels)
    while len(points) >= 2:
        gaps = [b.index - a.index for a, b in zip(points, points[1:])]
        k = min(range(len(gaps)), key=lambda i: (gaps[i], i))
        if gaps[k] >= min_phase:
            break
        points = enforce_alternation(points[:k] + points[k + 2:], levels)
    return points


def turning_points(levels, window: int = DEFAULT_WINDOW, min_phase: int | None = None) -> list[TurningPoint]:
    levels = np.asarray(levels, dtype=float)
    if min_phase is None:
        min_phase = window
    return _drop_short_phases(candidate_turning_points(levels, window), levels, min_phase)


def date_regimes(dates: Sequence[dt.date], levels, window: int = DEFAULT_WINDOW,
                 min_phase: int | None = None) -> list[RegimePhase]:
    """Split the dated range into alternating Bull and Bear phases."""
    levels = check_series(dates, levels)
    if window < 1:
        raise RegimeError("window must be >= 1")
    if len(levels) <= 2 * window:
        raise RegimeError(f"insufficient-history: {len(levels)} days for a +-{window} day window")
    points = turning_points(levels, window, min_phase)
    last = len(levels) - 1
    if not points:
        kind = Regime.BULL if levels[-1] >= levels[0] else Regime.BEAR
        return [RegimePhase(kind, dates[0], dates[last])]
    phases = []
    start = 0
    for tp in points:
        phases.append(RegimePhase(Regime.BULL if tp.is_peak else Regime.BEAR, dates[start], dates[tp.index]))
        start = tp.index + 1
    if start <= last:
        tail = Regime.BEAR if points[-1].is_peak else Regime.BULL
        phases.append(RegimePhase(tail, dates[start], dates[last]))
    return phases


def label_slot_regime(day: dt.date, phases: Sequence[RegimePhase]) -> Regime:
    """Kind of the phase containing ``day``; non-trading days between two
    phases belong to the later one."""
    if not phases or day < phases[0].start_date or day > phases[-1].end_date:
        raise RegimeError(f"undated: {day} lies outside the dated range")
    ends = [p.end_date for p in phases]
    return phases[bisect.bisect_left(ends, day)].kind


def cap_tier(float_cap: float, large: float = LARGE_CAP, small: float = SMALL_CAP) -> CapTier:
    if float_cap < 0:
        raise RegimeError(f"negative float cap {float_cap}")
    if float_cap > large:
        return CapTier.LARGE
    if float_cap >= small:
        return CapTier.MID
    return CapTier.SMALL


def cap_tiers(float_caps: np.ndarray, large: float = LARGE_CAP, small: float = SMALL_CAP) -> np.ndarray:
    caps = np.asarray(float_caps, dtype=float)
    if (caps < 0).any():
        raise RegimeError("negative float cap")
    out = np.where(caps > large, CapTier.LARGE.value,
                   np.where(caps >= small, CapTier.MID.value, CapTier.SMALL.value)).astype(object)
    out[np.isnan(caps)] = None
    return out


def write_phases(phases: Sequence[RegimePhase], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("kind\tstart\tend\n")
        for p in phases:
            fh.write(f"{p.kind.value}\t{p.start_date.isoformat()}\t{p.end_date.isoformat()}\n")


def read_phases(path: str | Path) -> list[RegimePhase]:
    out = []
    with open(path, encoding="utf-8") as fh:
        fh.readline()
        for line in fh:
            if line.strip():
                kind, start, end = line.rstrip("\n").split("\t")
                out.append(RegimePhase(Regime(kind), dt.date.fromisoformat(start), dt.date.fromisoformat(end)))
    return out
