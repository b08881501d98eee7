"""End-to-end orchestration: stages, on-disk artifacts and the run manifest.

Each stage reads what it needs from the previous stages' artifacts in the
output directory unless the data is already held in memory by a
:class:`Run`, so stages can be run one by one from the command line or all
together with :func:`run_pipeline`.
"""

from __future__ import annotations

import datetime as dt
import json
import logging
import math
from collections import Counter
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from . import ingest, lexicon as lexmod, microstructure as micro, regimes, sentiment
from .config import PipelineConfig, dump_config
from .econometrics.tables import SpecMatrix, build_panel, cell_grid, report_rows, REPORT_COLUMNS, run_table

log = logging.getLogger(__name__)

STAGES = ("ingest", "sentiment", "metrics", "regimes", "panel", "regress", "describe")

REJECTIONS_POSTS = "rejections_posts.tsv"
REJECTIONS_TRADES = "rejections_trades.tsv"
UNIVERSE = "universe.tsv"
SENTIMENT_INDEX = "sentiment_index.tsv"
METRICS = "metrics.tsv"
METRICS_ALT = "metrics_alt.tsv"
PANEL = "panel.tsv"
REPORTS_TSV = "reports.tsv"
REPORTS_JSON = "reports.json"
DESCRIBE = "describe.tsv"
MANIFEST = "manifest.json"
EFFECTIVE_CONFIG = "config.effective"

ALT_COLUMNS = ("stock_id", "date", "slot", "turnover_inst", "turnover_retail", "et_inst", "et_retail")
DESCRIBED = (("Sentiment", "sent_lag1"), ("ET(All)", "et_total"),
             ("ET(Institute)", "et_inst"), ("ET(Retail)", "et_retail"))


class StageError(Exception):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage} failed: {cause}")
        self.stage, self.cause = stage, cause


# ---------------------------------------------------------------------------
# descriptive statistics


@dataclass(frozen=True)
class DescriptiveStats:
    n: int
    mean: float
    std: float
    maximum: float
    minimum: float


def describe(values: Iterable[float]) -> DescriptiveStats:
    """Mean, sample (n-1) standard deviation, max and min of a non-empty column.

    NaN entries are skipped. A single value has standard deviation 0.
    """
    xs = [float(v) for v in values if not math.isnan(v)]
    if not xs:
        raise ValueError("describe needs at least one value")
    n = len(xs)
    lo, hi = min(xs), max(xs)
    mean = math.fsum(xs) / n
    # two roundings can push the mean one ulp outside [min, max]
    mean = min(max(mean, lo), hi)
    std = math.sqrt(math.fsum((x - mean) ** 2 for x in xs) / (n - 1)) if n > 1 else 0.0
    return DescriptiveStats(n, mean, std, hi, lo)


# ---------------------------------------------------------------------------
# tsv helpers


def _col_strings(series: pd.Series) -> list[str]:
    kind = series.dtype.kind
    if kind == "M":
        return list(np.datetime_as_string(series.to_numpy(dtype="datetime64[D]"), unit="D"))
    if kind == "f":
        values = series.to_numpy(dtype=float)
        # format each distinct bit pattern once; panel columns repeat a lot
        codes, uniq = pd.factorize(values.view(np.int64))
        text = np.array(list(map(repr, uniq.view(float).tolist())), dtype=object)[codes]
        text[np.isnan(values)] = ""
        return text.tolist()
    return ["" if x is None else str(x) for x in series.tolist()]


def write_frame(frame: pd.DataFrame, path: Path) -> None:
    cols = [_col_strings(frame[c]) for c in frame.columns]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\t".join(frame.columns) + "\n")
        fh.writelines("\t".join(row) + "\n" for row in zip(*cols))


def write_rows(path: Path, header: Sequence[str], rows: Iterable[Sequence[str]]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\t".join(header) + "\n")
        fh.writelines("\t".join(r) + "\n" for r in rows)


def read_frame(path: Path, date_cols: Sequence[str] = ("date",)) -> pd.DataFrame:
    frame = pd.read_csv(path, sep="\t", dtype={"stock_id": str, "cap_tier": object, "regime": object},
                        float_precision="round_trip", keep_default_na=False, na_values=[""])
    for col in date_cols:
        if col in frame:
            frame[col] = pd.to_datetime(frame[col], format="ISO8601")
    return frame


# ---------------------------------------------------------------------------
# run state


@dataclass
class Run:
    cfg: PipelineConfig
    out: Path = field(init=False)
    manifest: dict = field(default_factory=dict)
    calendar: list[dt.date] | None = None
    posts: list[ingest.Post] | None = None
    ticks: pd.DataFrame | None = None
    stocks: list[str] | None = None
    sentiment: pd.DataFrame | None = None
    metrics: pd.DataFrame | None = None
    metrics_alt: pd.DataFrame | None = None
    phases: dict[str, list[regimes.RegimePhase]] | None = None
    panel: pd.DataFrame | None = None
    reports: list | None = None

    def __post_init__(self):
        self.out = Path(self.cfg.out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        path = self.out / MANIFEST
        if path.exists() and not self.manifest:
            self.manifest = json.loads(path.read_text(encoding="utf-8"))

    def save_manifest(self) -> None:
        text = json.dumps(self.manifest, indent=2, sort_keys=True, ensure_ascii=False)
        (self.out / MANIFEST).write_text(text + "\n", encoding="utf-8")

    def need_calendar(self) -> list[dt.date]:
        if self.calendar is None:
            self.calendar = ingest.load_calendar(self.cfg.calendar_path)
        return self.calendar

    def need_stocks(self) -> list[str]:
        if self.stocks is None:
            path = self.out / UNIVERSE
            if not path.exists():
                raise FileNotFoundError(f"{path} missing; run the ingest stage first")
            self.stocks = read_frame(path, ())["stock_id"].tolist()
        return self.stocks

    def need_posts(self) -> list[ingest.Post]:
        if self.posts is None:
            keep = set(self.need_stocks())
            posts, _ = ingest.load_posts(self.cfg.posts_path, self.need_calendar(), self.cfg.zone)
            self.posts = [p for p in ingest.filter_bot_posts(posts, self.cfg.bot_ids) if p.stock_id in keep]
        return self.posts

    def need_ticks(self) -> pd.DataFrame:
        if self.ticks is None:
            ticks, _ = ingest.load_trades(self.cfg.trades_path, self.need_calendar(), self.cfg.zone)
            self.ticks = ticks[ticks["stock_id"].isin(self.need_stocks())].reset_index(drop=True)
        return self.ticks

    def need(self, attr: str, filename: str) -> pd.DataFrame:
        if getattr(self, attr) is None:
            setattr(self, attr, read_frame(self.out / filename))
        return getattr(self, attr)


# ---------------------------------------------------------------------------
# stages


def _reason_counts(rejects: Sequence[ingest.Rejection]) -> dict[str, int]:
    return dict(sorted(Counter(r.reason for r in rejects).items()))


def stage_ingest(run: Run) -> None:
    cfg = run.cfg
    cfg.check_paths()
    calendar = run.need_calendar()
    posts, post_rej = ingest.load_posts(cfg.posts_path, calendar, cfg.zone)
    ticks, tick_rej = ingest.load_trades(cfg.trades_path, calendar, cfg.zone)
    membership = ingest.load_membership(cfg.membership_path) if cfg.membership_path else None
    result = ingest.clean(posts, ticks, calendar, cfg.bot_ids, membership,
                          cfg.max_empty_share, cfg.max_suspension_days)
    rej_rows = lambda rs: ([r.stock_id, str(r.line), r.reason] for r in rs)  # noqa: E731
    write_rows(run.out / REJECTIONS_POSTS, ("stock_id", "line", "reason"), rej_rows(post_rej))
    write_rows(run.out / REJECTIONS_TRADES, ("stock_id", "line", "reason"), rej_rows(tick_rej))
    write_rows(run.out / UNIVERSE, ("stock_id",), ([s] for s in result.stocks))
    n_universe = len(set(p.stock_id for p in posts) | set(ticks["stock_id"]))
    after_bots = len(posts) - result.bot_posts
    run.manifest["ingest"] = {
        "posts": {"rows_in": len(posts) + len(post_rej), "accepted": len(posts),
                  "rejected": len(post_rej), "rejected_by_reason": _reason_counts(post_rej)},
        "trades": {"rows_in": len(ticks) + len(tick_rej), "accepted": len(ticks),
                   "rejected": len(tick_rej), "rejected_by_reason": _reason_counts(tick_rej)},
        "bot_filter": {"rows_in": len(posts), "accepted": after_bots, "rejected": result.bot_posts},
        "stocks": {"rows_in": n_universe, "accepted": len(result.stocks),
                   "rejected": n_universe - len(result.stocks), "dropped_by_rule": result.dropped},
        "posts_universe": {"rows_in": after_bots, "accepted": len(result.posts),
                           "rejected": after_bots - len(result.posts)},
        "trades_universe": {"rows_in": len(ticks), "accepted": len(result.ticks),
                            "rejected": len(ticks) - len(result.ticks)},
    }
    run.posts, run.ticks, run.stocks = result.posts, result.ticks, result.stocks


def stage_sentiment(run: Run) -> None:
    cfg = run.cfg
    lex = lexmod.load_lexicon(cfg.lexicon_paths, cfg.negation_paths, cfg.conflict_policy)
    frame, stats = sentiment.hourly_frame(run.need_posts(), lex)
    write_frame(frame, run.out / SENTIMENT_INDEX)
    run.sentiment = frame
    run.manifest["sentiment"] = {
        "posts": {"rows_in": stats["posts"], "accepted": stats["scored"], "rejected": stats["no_signal"]},
        "hours_with_signal": stats["hours"],
        "lexicon": lex.counts(),
        "lexicon_issues": len(lex.issues),
    }


def _metrics_params(cfg: PipelineConfig, amount: float) -> micro.MetricsParams:
    return micro.MetricsParams(
        amount_threshold=amount, share_threshold=cfg.share_threshold, window=cfg.window,
        min_window=cfg.min_window or None, baseline_mode=cfg.baseline_mode,
        cumulative=cfg.cumulative_turnover, formula=cfg.turnover_formula,
    )


def stage_metrics(run: Run) -> None:
    cfg = run.cfg
    shares = ingest.load_shares(cfg.shares_path)
    args = (run.need_ticks(), run.need_stocks(), run.need_calendar(), shares)
    run.metrics = micro.compute_metrics(*args, _metrics_params(cfg, cfg.amount_threshold))
    run.metrics_alt = micro.compute_metrics(*args, _metrics_params(cfg, cfg.robust_amount_threshold))
    write_frame(run.metrics, run.out / METRICS)
    # the alternative threshold only moves trades between classes
    write_frame(run.metrics_alt[list(ALT_COLUMNS)], run.out / METRICS_ALT)
    m = run.metrics
    run.manifest["metrics"] = {
        "slots": {"rows_in": len(m), "accepted": int(m["et_total"].notna().sum()),
                  "rejected": int(m["et_total"].isna().sum())},
        "zero_turnover_slots": int((m["turnover_total"] == 0).sum()),
    }


def _phases_file(prefix: str) -> str:
    return f"phases_{prefix}.tsv"


def stage_regimes(run: Run) -> None:
    cfg = run.cfg
    run.phases = {}
    for prefix, path in sorted(cfg.index_series.items()):
        dates, levels = regimes.load_index_series(path)
        phases = regimes.date_regimes(dates, levels, cfg.regime_window, cfg.regime_min_phase or None)
        regimes.write_phases(phases, run.out / _phases_file(prefix))
        run.phases[prefix] = phases
    run.manifest["regimes"] = {
        prefix: {"phases": len(ph), "bull": sum(p.kind is regimes.Regime.BULL for p in ph)}
        for prefix, ph in run.phases.items()
    }


def _need_phases(run: Run) -> dict[str, list[regimes.RegimePhase]]:
    if run.phases is None:
        run.phases = {p: regimes.read_phases(run.out / _phases_file(p)) for p in run.cfg.index_series}
    return run.phases


def _regime_lookup(phases: dict[str, list[regimes.RegimePhase]]):
    prefixes = sorted(phases, key=len, reverse=True)
    prefix_of: dict[str, str | None] = {}
    memo: dict[tuple[str | None, pd.Timestamp], str | None] = {}

    def regime_of(stock_id: str, day: pd.Timestamp) -> str | None:
        if stock_id not in prefix_of:
            prefix_of[stock_id] = next((p for p in prefixes if stock_id.startswith(p)), None)
        key = (prefix_of[stock_id], day)
        if key not in memo:
            label = None
            if key[0] is not None:
                try:
                    label = regimes.label_slot_regime(day.date(), phases[key[0]]).value
                except regimes.RegimeError:
                    pass  # outside the dated range: left out of regime cells only
            memo[key] = label
        return memo[key]

    return regime_of


def _fixed_tier_caps(fund: pd.DataFrame, day: str) -> pd.DataFrame:
    at = fund[fund["date"] == pd.Timestamp(day)].set_index("stock_id")["float_cap"]
    fund = fund.copy()
    fund["float_cap"] = fund["stock_id"].map(at)
    return fund


def stage_panel(run: Run) -> None:
    cfg = run.cfg
    fund = ingest.load_fundamentals(cfg.fundamentals_path) if cfg.fundamentals_path else None
    if fund is not None and cfg.tier_date:
        fund = _fixed_tier_caps(fund, cfg.tier_date)
    phases = _need_phases(run)
    regime_of = _regime_lookup(phases) if phases else None
    tier_of = lambda caps: regimes.cap_tiers(caps, cfg.large_cap, cfg.small_cap)  # noqa: E731
    panel = build_panel(run.need("sentiment", SENTIMENT_INDEX), run.need("metrics", METRICS),
                        run.need("metrics_alt", METRICS_ALT), fund, regime_of, tier_of,
                        measure=cfg.sentiment_measure)
    write_frame(panel, run.out / PANEL)
    run.panel = panel
    candidates = int(len(run.metrics[run.metrics["slot"] >= 2]))
    run.manifest["panel"] = {
        "rows": {"rows_in": candidates, "accepted": len(panel), "rejected": candidates - len(panel)},
        "by_slot": {f"S{s}": int((panel["slot"] == s).sum()) for s in (2, 3, 4)},
        "without_regime": int(panel["regime"].isna().sum()),
        "without_tier": int(panel["cap_tier"].isna().sum()),
    }


def _reports_json(reports) -> str:
    return json.dumps([r.to_dict() for r in reports], indent=1, sort_keys=True, allow_nan=True) + "\n"


def stage_regress(run: Run) -> None:
    cfg = run.cfg
    spec = SpecMatrix(cfg.spec_base, cfg.spec_regimes, cfg.spec_tiers, cfg.spec_robustness)
    panel = run.need("panel", PANEL)
    run.reports = run_table(panel, cell_grid(spec), cfg.robust_se, cfg.lm_lags, cfg.threads)
    write_rows(run.out / REPORTS_TSV, REPORT_COLUMNS, report_rows(run.reports))
    (run.out / REPORTS_JSON).write_text(_reports_json(run.reports), encoding="utf-8")
    status = Counter(r.status for r in run.reports)
    run.manifest["regress"] = {"cells": len(run.reports), "by_status": dict(sorted(status.items()))}


def stage_describe(run: Run) -> None:
    panel = run.need("panel", PANEL)
    rows = []
    for label, col in DESCRIBED:
        values = panel[col].dropna()
        if len(values):
            s = describe(values)
            rows.append([label, str(s.n), f"{s.mean:.6f}", f"{s.std:.6f}", f"{s.maximum:.6f}", f"{s.minimum:.6f}"])
    write_rows(run.out / DESCRIBE, ("variable", "n", "average", "std", "maximum", "minimum"), rows)
    run.manifest["describe"] = {"variables": len(rows)}


STAGE_FUNCS = {
    "ingest": stage_ingest,
    "sentiment": stage_sentiment,
    "metrics": stage_metrics,
    "regimes": stage_regimes,
    "panel": stage_panel,
    "regress": stage_regress,
    "describe": stage_describe,
}


def run_stage(run: Run, name: str) -> None:
    try:
        STAGE_FUNCS[name](run)
    except Exception as exc:  # any failure is reported against its stage
        raise StageError(name, exc) from exc
    run.save_manifest()
    text = dump_config(run.cfg, exclude=PipelineConfig.RUNTIME_KEYS)
    (run.out / EFFECTIVE_CONFIG).write_text(text, encoding="utf-8")


def run_pipeline(cfg: PipelineConfig, stages: Sequence[str] = STAGES) -> Run:
    """Validate ``cfg`` and run ``stages`` in order; raises :class:`StageError`.

    Missing input files are reported by the ingest stage, other bad values
    by ``config``.
    """
    try:
        cfg.validate(check_paths="ingest" not in stages)
    except Exception as exc:
        raise StageError("config", exc) from exc
    run = Run(cfg)
    for name in stages:
        log.info("stage %s", name)
        run_stage(run, name)
    return run

