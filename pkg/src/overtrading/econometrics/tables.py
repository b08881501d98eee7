"""Regression panel assembly and the grid of regression cells.

Every cell is a pooled OLS of one slot's excess turnover on the sentiment of
an earlier slot of the same day, over a row subset (investor class, regime
or cap tier) and a specification variant.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
import pandas as pd

from .diagnostics import DiagnosticError, lm_serial_test, white_test
from .ols import EstimationError, design, fit_ols

PANELS = ("all", "inst", "retail")
REGRESSION_SLOTS = (2, 3, 4)
REGIMES = ("Bull", "Bear")
TIERS = ("Large", "Mid", "Small")
CONTROLS = ("pb", "market_risk_premium", "market_return")

OK = "ok"
INSUFFICIENT = "insufficient-data"

PANEL_COLUMNS = (
    "stock_id", "date", "slot", "et_total", "et_inst", "et_retail", "et_inst_alt", "et_retail_alt",
    "sent_lag1", "sent_lag2", "sent_lag3", *CONTROLS, "float_cap", "cap_tier", "regime",
)


class PanelError(Exception):
    pass


def _no_duplicates(frame: pd.DataFrame, keys: list[str], what: str) -> None:
    dup = frame.duplicated(keys)
    if dup.any():
        first = frame.loc[dup, keys].iloc[0].tolist()
        raise PanelError(f"data-integrity: duplicate {what} key {first}")


def build_panel(sentiment: pd.DataFrame, metrics: pd.DataFrame,
                metrics_alt: pd.DataFrame | None = None,
                fundamentals: pd.DataFrame | None = None,
                regime_of: Callable[[str, pd.Timestamp], str | None] | None = None,
                tier_of: Callable[[np.ndarray], np.ndarray] | None = None,
                measure: str = "value") -> pd.DataFrame:
    """Join sentiment, excess turnover and controls into regression rows.

    One row per (stock, date, slot 2..4) that has last-hour sentiment and at
    least one excess-turnover value. ``sent_lagK`` is the sentiment of slot
    ``slot - K`` on the same day (NaN when that slot has no signal or does not
    exist). ``measure`` picks the sentiment column (``value`` = mean,
    ``total`` = unnormalized sum).
    """
    _no_duplicates(sentiment, ["stock_id", "date", "slot"], "sentiment")
    _no_duplicates(metrics, ["stock_id", "date", "slot"], "metrics")
    wide = sentiment.pivot(index=["stock_id", "date"], columns="slot", values=measure)
    wide = wide.reindex(columns=[1, 2, 3, 4])
    rows = metrics.loc[metrics["slot"] >= 2, ["stock_id", "date", "slot", "et_total", "et_inst", "et_retail"]]
    if metrics_alt is not None:
        _no_duplicates(metrics_alt, ["stock_id", "date", "slot"], "alternative metrics")
        alt = metrics_alt[["stock_id", "date", "slot", "et_inst", "et_retail"]].rename(
            columns={"et_inst": "et_inst_alt", "et_retail": "et_retail_alt"})
        rows = rows.merge(alt, on=["stock_id", "date", "slot"], how="left")
    else:
        rows = rows.assign(et_inst_alt=np.nan, et_retail_alt=np.nan)
    rows = rows.merge(wide, left_on=["stock_id", "date"], right_index=True, how="left")
    slot = rows["slot"].to_numpy()
    grid = rows[[1, 2, 3, 4]].to_numpy(dtype=float)
    for k in (1, 2, 3):
        src = slot - k
        lag = np.full(len(rows), np.nan)
        ok = src >= 1
        lag[ok] = grid[np.flatnonzero(ok), src[ok] - 1]
        rows[f"sent_lag{k}"] = lag
    rows = rows.drop(columns=[1, 2, 3, 4])
    has_et = rows[["et_total", "et_inst", "et_retail"]].notna().any(axis=1)
    rows = rows[rows["sent_lag1"].notna() & has_et]

    if fundamentals is not None and len(fundamentals):
        _no_duplicates(fundamentals, ["stock_id", "date"], "fundamentals")
        fund = fundamentals[["stock_id", "date", *CONTROLS, "float_cap"]]
        rows = rows.merge(fund, on=["stock_id", "date"], how="left")
    else:
        for col in (*CONTROLS, "float_cap"):
            rows[col] = np.nan
    if tier_of is not None:
        rows["cap_tier"] = tier_of(rows["float_cap"].to_numpy(dtype=float))
    else:
        rows["cap_tier"] = None
    if regime_of is not None:
        rows["regime"] = [regime_of(s, d) for s, d in zip(rows["stock_id"], rows["date"])]
    else:
        rows["regime"] = None
    rows = rows.sort_values(["stock_id", "date", "slot"], kind="mergesort")
    return rows[list(PANEL_COLUMNS)].reset_index(drop=True)


# ---------------------------------------------------------------------------
# cell grid


@dataclass(frozen=True)
class Cell:
    table: str
    panel: str
    slot: int
    filter: tuple[str, str] | None = None  # ("regime", "Bull") / ("tier", "Large")
    variant: str = "base"

    @property
    def id(self) -> str:
        filt = "-" if self.filter is None else f"{self.filter[0]}={self.filter[1]}"
        return f"{self.table}|{self.panel}|{filt}|S{self.slot}|{self.variant}"

    @property
    def dependent(self) -> str:
        col = {"all": "et_total", "inst": "et_inst", "retail": "et_retail"}[self.panel]
        if self.variant == "alt-threshold":
            col += "_alt"
        return col

    @property
    def regressors(self) -> list[str]:
        lag = {"lag2": "sent_lag2", "lag3": "sent_lag3"}.get(self.variant, "sent_lag1")
        return [lag, *CONTROLS] if self.variant == "controls" else [lag]


@dataclass
class SpecMatrix:
    base: bool = True          # investor-class grid (9 cells)
    regimes: bool = True       # bull/bear grid (18 cells)
    tiers: bool = True         # cap-tier grid (27 cells)
    robustness: bool = True    # lag, control and threshold variants (24 cells)


def cell_grid(spec: SpecMatrix = SpecMatrix()) -> list[Cell]:
    cells: list[Cell] = []
    if spec.base:
        cells += [Cell("T2", "all", h) for h in REGRESSION_SLOTS]
        cells += [Cell("T3", p, h) for p in ("inst", "retail") for h in REGRESSION_SLOTS]
    if spec.regimes:
        cells += [Cell("T4", p, h, ("regime", r)) for p in PANELS for r in REGIMES for h in REGRESSION_SLOTS]
    if spec.tiers:
        cells += [Cell("T5", p, h, ("tier", t)) for p in PANELS for t in TIERS for h in REGRESSION_SLOTS]
    if spec.robustness:
        cells += [Cell("R", p, h, variant="lag2") for p in PANELS for h in (3, 4)]
        cells += [Cell("R", p, 4, variant="lag3") for p in PANELS]
        cells += [Cell("R", p, h, variant="controls") for p in PANELS for h in REGRESSION_SLOTS]
        cells += [Cell("R", p, h, variant="alt-threshold") for p in ("inst", "retail") for h in REGRESSION_SLOTS]
    return cells


@dataclass
class Coefficient:
    name: str
    estimate: float
    std_error: float
    t_stat: float
    p_value: float


@dataclass
class RegressionReport:
    cell_id: str
    table: str
    panel: str
    slot: int
    filter: str
    variant: str
    status: str
    n_obs: int
    coefficients: list[Coefficient] = field(default_factory=list)
    r_squared: float | None = None
    adj_r_squared: float | None = None
    f_statistic: float | None = None
    f_pvalue: float | None = None
    wald_chi2: float | None = None
    wald_pvalue: float | None = None
    white_stat: float | None = None
    white_pvalue: float | None = None
    white_df: int | None = None
    lm_stat: float | None = None
    lm_pvalue: float | None = None
    lm_df: int | None = None
    note: str = ""

    def coefficient(self, name: str) -> Coefficient:
        for c in self.coefficients:
            if c.name == name:
                return c
        raise KeyError(name)

    @property
    def beta(self) -> Coefficient:
        return self.coefficients[1]

    @property
    def stars(self) -> str:
        if self.status != OK:
            return ""
        return significance_stars(self.beta.p_value)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["stars"] = self.stars
        return d


def significance_stars(p: float) -> str:
    if p < 0.01:
        return "***"
    if p < 0.05:
        return "**"
    if p < 0.10:
        return "*"
    return ""


def cell_rows(panel: pd.DataFrame, cell: Cell) -> pd.DataFrame:
    """Rows of ``panel`` entering ``cell``, ordered by (stock, date)."""
    rows = panel[panel["slot"] == cell.slot]
    if cell.filter is not None:
        kind, value = cell.filter
        rows = rows[rows["regime" if kind == "regime" else "cap_tier"] == value]
    cols = [cell.dependent, *cell.regressors]
    return rows.dropna(subset=cols)


def fit_cell(panel: pd.DataFrame, cell: Cell, robust: bool = False, lm_lags: int = 1) -> RegressionReport:
    rows = cell_rows(panel, cell)
    filt = "-" if cell.filter is None else f"{cell.filter[0]}={cell.filter[1]}"
    report = RegressionReport(cell.id, cell.table, cell.panel, cell.slot, filt, cell.variant,
                              INSUFFICIENT, len(rows))
    regs = cell.regressors
    X = rows[regs].to_numpy(dtype=float)
    y = rows[cell.dependent].to_numpy(dtype=float)
    if len(y) and np.ptp(y) == 0:
        report.note = "dependent variable is constant"
        return report
    try:
        fit = fit_ols(y, design(X.T), ["alpha", *regs], robust=robust)
    except EstimationError as exc:
        report.note = str(exc)
        return report
    report.status = OK
    report.coefficients = [
        Coefficient(name, float(b), float(se), float(t), float(p))
        for name, b, se, t, p in zip(fit.names, fit.params, fit.bse, fit.tvalues, fit.pvalues)
    ]
    report.r_squared, report.adj_r_squared = fit.r_squared, fit.adj_r_squared
    report.f_statistic, report.f_pvalue = fit.f_stat, fit.f_pvalue
    report.wald_chi2, report.wald_pvalue = fit.wald([regs[0]])
    notes = []
    try:
        w = white_test(fit.resid, X)
        report.white_stat, report.white_pvalue, report.white_df = w.statistic, w.pvalue, w.df
    except DiagnosticError as exc:
        notes.append(f"white: {exc}")
    try:
        # one row per stock-day in a slot cell: lags run over trading days within a stock
        lm = lm_serial_test(fit.resid, X, lm_lags, pd.factorize(rows["stock_id"])[0])
        report.lm_stat, report.lm_pvalue, report.lm_df = lm.statistic, lm.pvalue, lm.df
    except DiagnosticError as exc:
        notes.append(f"lm: {exc}")
    report.note = "; ".join(notes)
    return report


def run_table(panel: pd.DataFrame, cells: Iterable[Cell] | None = None, robust: bool = False,
              lm_lags: int = 1, threads: int = 1) -> list[RegressionReport]:
    """Fit every cell; the result order is the cell order whatever ``threads`` is."""
    cells = list(cell_grid() if cells is None else cells)
    by_slot = {s: panel[panel["slot"] == s] for s in sorted({c.slot for c in cells})}

    def fit(cell: Cell) -> RegressionReport:
        return fit_cell(by_slot[cell.slot], cell, robust, lm_lags)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fit, cells))
    return [fit(c) for c in cells]


REPORT_COLUMNS = (
    "cell_id", "table", "panel", "filter", "slot", "variant", "status", "n_obs",
    "alpha", "alpha_t", "beta", "beta_se", "beta_t", "beta_p", "stars",
    "r_squared", "adj_r_squared", "f_statistic", "f_pvalue", "wald_chi2", "wald_pvalue",
    "white_stat", "white_pvalue", "lm_stat", "lm_pvalue", "controls", "note",
)


def _fmt(x, places: int = 6) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        return f"{x:.{places}f}"
    return str(x)


def report_rows(reports: Sequence[RegressionReport]) -> Iterable[list[str]]:
    for r in reports:
        a = r.coefficients[0] if r.coefficients else None
        b = r.coefficients[1] if len(r.coefficients) > 1 else None
        controls = ";".join(f"{c.name}={c.estimate:.6f}({c.t_stat:.2f})" for c in r.coefficients[2:])
        yield [
            r.cell_id, r.table, r.panel, r.filter, f"S{r.slot}", r.variant, r.status, str(r.n_obs),
            _fmt(a and a.estimate), _fmt(a and a.t_stat), _fmt(b and b.estimate), _fmt(b and b.std_error),
            _fmt(b and b.t_stat), _fmt(b and b.p_value), r.stars,
            _fmt(r.r_squared), _fmt(r.adj_r_squared), _fmt(r.f_statistic), _fmt(r.f_pvalue),
            _fmt(r.wald_chi2), _fmt(r.wald_pvalue), _fmt(r.white_stat), _fmt(r.white_pvalue),
            _fmt(r.lm_stat), _fmt(r.lm_pvalue), controls, r.note,
        ]
