"""Seeded synthetic market used for end-to-end recovery tests.

Construction, per stock, trading day and hour slot:

1. Posts. Each slot gets 1..``max_posts_per_slot`` posts (2% of slots stay
   empty, half of them for the sparse stocks). A post is either filler text
   only (share ``silent_post_share``) or 1-3 sentiment words with 0-2
   negation words scattered between filler characters. No dictionary word is
   a prefix of another and no filler character starts a word, so the
   segmenter recovers the intended tokens and every post score is known in
   advance. A slot's sentiment is the mean of its scored posts, summed in
   posting order.
2. Trades. For each investor class the target excess turnover of slot ``h``
   is ``alpha + beta_class * sentiment[h-1] + e`` (previous-slot sentiment
   taken as 0 for the first slot and for slots without signal) with
   ``e ~ N(0, noise_sd)`` clipped to ``+-min(3 * noise_sd, 0.6)``. The class turnover is set to
   ``baseline * (1 + target)`` where the baseline is the mean of the realized
   turnover of the same slot on up to 20 previous days, summed
   most-recent-first like the metrics stage. Until 10 earlier days exist the
   turnover is the class level times ``1 + e``. ``1 + target`` is floored at
   0.05.
3. The class amount ``turnover * shares`` is split into equal ticks at the
   stock's daily price: institutional ticks of up to 50m CNY (always above
   200k CNY), retail ticks of at most 190k CNY and 95k shares. The
   realized turnover, computed from the rounded volumes, feeds later
   baselines, so the only gap between target and measured excess turnover
   is volume rounding.

Ancillary files: a business-day calendar, shares outstanding (a 20% issue
midway for every tenth stock), fundamentals with float caps spread over the
three size tiers, index membership events, and two triangle index series
(a peak for ids starting with 6, a trough for ids starting with 0 or 3).
Bot posts, junk rows, a sparse stock, a suspended stock and a churned
stock exercise the cleaning rules.
"""

from __future__ import annotations

import datetime as dt
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import PipelineConfig, SynthConfig, dump_config
from .ingest import MEMBERSHIP_HEADER, POSTS_HEADER, SHARES_HEADER, TRADES_HEADER, FUNDAMENTALS_HEADER

POSITIVE = ("看涨", "利好", "大涨", "牛市", "涨停", "加仓")
NEGATIVE = ("看跌", "利空", "暴跌", "熊市", "跌停", "割肉")
NEGATIONS = ("不", "没有")
FILLER = "今天这只股票感觉家们啊呢吧的了我你他走势行情"
BOT_AUTHOR = "AI Summary"

SLOT_START_S = (9 * 3600 + 1800, 10 * 3600 + 1800, 13 * 3600, 14 * 3600)
SLOT_LEN_S = 3600
WINDOW, MIN_WINDOW = 20, 10
INST_TICK, RETAIL_TICK = 50e6, 190e3
RETAIL_MAX_SHARES = 95_000
INST_LEVEL, RETAIL_LEVEL = 20e6, 1.5e5  # class amount per slot before any plant
INST_FLOOR = 200_000.0
TIER_CAPS = (2e11, 3e10, 3e9)
EMPTY_SLOT_SHARE = 0.02


@dataclass
class SyntheticData:
    directory: Path
    config_path: Path
    stocks: list[str]
    truth: dict = field(default_factory=dict)


def business_days(start: dt.date, n: int) -> list[dt.date]:
    days, day = [], start
    while len(days) < n:
        if day.weekday() < 5:
            days.append(day)
        day += dt.timedelta(days=1)
    return days


def stock_ids(n: int) -> list[str]:
    prefixes = ("6", "0", "3")
    return [f"{prefixes[i % 3]}{i // 3 + 1:05d}" for i in range(n)]


def regime_window_for(n_days: int) -> int:
    """Largest turning-point window (at most 105) that still dates a mid-sample extremum."""
    return min(105, (n_days - 1) // 2 - 1)


def _roles(n: int, synth: SynthConfig) -> dict[str, list[int]]:
    order = list(range(n - 1, -1, -1))
    out, pos = {}, 0
    for role, count in (("sparse", synth.sparse_stocks), ("suspended", synth.suspended_stocks),
                        ("churned", synth.churned_stocks)):
        out[role] = order[pos:pos + count]
        pos += count
    return out


# ---------------------------------------------------------------------------
# posts


def _filler_pool(rng: np.random.Generator, size: int, lo: int, hi: int) -> np.ndarray:
    chars = np.array(list(FILLER), dtype=object)
    lengths = rng.integers(lo, hi + 1, size=size)
    return np.array(["".join(chars[rng.integers(0, len(chars), size=n)]) for n in lengths], dtype=object)


def _texts(rng: np.random.Generator, pieces: np.ndarray) -> np.ndarray:
    """Join each row of ``pieces`` (empty strings allowed) in random order with filler between."""
    m, width = pieces.shape
    inner, tail = _filler_pool(rng, 512, 0, 3), _filler_pool(rng, 512, 1, 4)
    order = np.argsort(rng.random((m, width)), axis=1)
    shuffled = np.take_along_axis(pieces, order, axis=1)
    text = np.full(m, "", dtype=object)
    for w in range(width):
        text = text + inner[rng.integers(0, len(inner), size=m)] + shuffled[:, w]
    return text + tail[rng.integers(0, len(tail), size=m)]


def _posts(rng: np.random.Generator, stocks, days, synth: SynthConfig,
           sparse: set[int]) -> tuple[list[tuple], np.ndarray]:
    """Post rows ``(stock, day, second, author, text)`` and the slot sentiment grid."""
    n_s, n_d = len(stocks), len(days)
    counts = rng.integers(1, synth.max_posts_per_slot + 1, size=(n_s, n_d, 4))
    empty_p = np.full((n_s, 1, 1), EMPTY_SLOT_SHARE)
    empty_p[sorted(sparse)] = 0.5
    counts[rng.random((n_s, n_d, 4)) < empty_p] = 0
    bucket = SLOT_LEN_S // synth.max_posts_per_slot
    acc = np.zeros((n_s, n_d, 4))
    scored = np.zeros((n_s, n_d, 4), dtype=np.int64)
    words = np.array((*POSITIVE, *NEGATIVE), dtype=object)
    negations = np.array(NEGATIONS, dtype=object)
    rows = []
    for k in range(synth.max_posts_per_slot):
        idx = np.argwhere(counts > k)
        m = len(idx)
        silent = rng.random(m) < synth.silent_post_share
        n_words = np.where(silent, 0, rng.integers(1, 4, size=m))
        positive = rng.random((m, 3)) < 0.5
        choice = rng.integers(0, len(POSITIVE), size=(m, 3))
        n_neg = np.where(silent, 0, rng.choice(3, size=m, p=(0.6, 0.3, 0.1)))
        neg_choice = rng.integers(0, len(NEGATIONS), size=(m, 2))
        offset = rng.integers(0, bucket, size=m)
        author = rng.integers(0, 5000, size=m)
        used = np.arange(3)[None, :] < n_words[:, None]
        pos = (positive & used).sum(axis=1)
        neg = (~positive & used).sum(axis=1)
        with np.errstate(invalid="ignore"):
            value = (pos - neg) / (pos + neg)
        value = np.where(n_neg % 2 == 1, -value, value)
        value[silent] = 0.0
        # hourly sums run in posting order; post k is the k-th of its slot
        acc[tuple(idx.T)] += value
        scored[tuple(idx.T)] += ~silent
        pieces = np.full((m, 5), "", dtype=object)
        pieces[:, :3] = np.where(used, words[choice + np.where(positive, 0, len(POSITIVE))], "")
        pieces[:, 3:] = np.where(np.arange(2)[None, :] < n_neg[:, None], negations[neg_choice], "")
        texts = _texts(rng, pieces)
        seconds = np.asarray(SLOT_START_S)[idx[:, 2]] + k * bucket + offset
        rows.extend(zip(idx[:, 0].tolist(), idx[:, 1].tolist(), seconds.tolist(),
                        [f"u{a:05d}" for a in author.tolist()], texts.tolist()))
    with np.errstate(invalid="ignore"):
        sentiment = np.where(scored > 0, acc / scored, np.nan)
    return rows, sentiment


def _bot_rows(rng: np.random.Generator, n_s: int, n_d: int, count: int) -> list[tuple]:
    s, d, h = rng.integers(n_s, size=count), rng.integers(n_d, size=count), rng.integers(4, size=count)
    seconds = np.asarray(SLOT_START_S)[h] + rng.integers(SLOT_LEN_S, size=count)
    pieces = np.array(POSITIVE, dtype=object)[rng.integers(0, len(POSITIVE), size=(count, 2))]
    texts = _texts(rng, pieces.reshape(count, 2))
    return list(zip(s.tolist(), d.tolist(), seconds.tolist(), [BOT_AUTHOR] * count, texts.tolist()))


# ---------------------------------------------------------------------------
# trades


def _split(amount: np.ndarray, tick: float) -> np.ndarray:
    return np.maximum(1, np.ceil(amount / tick)).astype(np.int64)


def _trades(rng: np.random.Generator, synth: SynthConfig, sentiment: np.ndarray, price: np.ndarray,
            shares: np.ndarray, suspended_days: np.ndarray):
    """Tick arrays ``(stock, day, second, price, volume)`` and realized class turnovers."""
    n_s, n_d = price.shape
    betas = (synth.beta_inst, synth.beta_retail)
    levels = (INST_LEVEL, RETAIL_LEVEL)
    ticks = (INST_TICK, RETAIL_TICK)
    clip = min(3 * synth.noise_sd, 0.6)
    history = np.zeros((2, n_s, 4, n_d))
    parts = []
    for d in range(n_d):
        prev = np.zeros((n_s, 4))
        prev[:, 1:] = np.nan_to_num(sentiment[:, d, :3], nan=0.0)
        p = price[:, d][:, None]
        for c in range(2):
            level = levels[c] / shares[:, 0][:, None] * np.ones((1, 4))
            noise = np.clip(rng.normal(0.0, synth.noise_sd, size=(n_s, 4)), -clip, clip)
            used = min(d, WINDOW)
            if used >= MIN_WINDOW:
                acc = np.zeros((n_s, 4))
                for k in range(1, used + 1):
                    acc += history[c, :, :, d - k]
                mean = acc / used
                mean = np.where(mean > 0, mean, level)
                factor = 1.0 + synth.alpha + betas[c] * prev + noise
            else:
                mean, factor = level, 1.0 + noise
            amount = mean * np.maximum(factor, 0.05) * shares[:, d][:, None]
            n_ticks = _split(amount, ticks[c])
            if c == 1:
                n_ticks = np.maximum(n_ticks, _split(amount / p, RETAIL_MAX_SHARES))
            volume = np.maximum(1, np.rint(amount / n_ticks / p)).astype(np.int64)
            if c == 0:
                volume = np.maximum(volume, np.floor(INST_FLOOR / p).astype(np.int64) + 1)
            tick_amount = p * volume
            total = np.zeros((n_s, 4))
            for k in range(int(n_ticks.max())):
                total += np.where(k < n_ticks, tick_amount, 0.0)
            off = suspended_days[:, d][:, None]
            total[np.broadcast_to(off, total.shape)] = 0.0
            history[c, :, :, d] = total / shares[:, d][:, None]
            # expand to rows: one per tick, equally spaced within the slot
            live = np.where(off, 0, n_ticks)
            s_idx, h_idx = np.nonzero(live)
            reps = live[s_idx, h_idx]
            rs, rh = np.repeat(s_idx, reps), np.repeat(h_idx, reps)
            k = np.arange(reps.sum()) - np.repeat(np.cumsum(reps) - reps, reps)
            u = rng.random(len(k))
            second = np.asarray(SLOT_START_S)[rh] + np.floor((k + u) / reps.repeat(reps) * SLOT_LEN_S).astype(np.int64)
            parts.append((rs, np.full(len(k), d), second, np.full(len(k), c), k, volume[rs, rh]))
    cols = [np.concatenate(x) for x in zip(*parts)]
    s, d, second, cls, k, vol = cols
    order = np.lexsort((k, cls, second, d, s))
    return (s[order], d[order], second[order], vol[order]), history


# ---------------------------------------------------------------------------
# writing


def _stamp(days: list[dt.date], d: np.ndarray, second: np.ndarray) -> np.ndarray:
    base = np.array(days, dtype="datetime64[D]")[d].astype("datetime64[s]")
    return np.datetime_as_string(base + second.astype("timedelta64[s]"), unit="s")


def _write(path: Path, header, lines) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\t".join(header) + "\n")
        fh.writelines(line + "\n" for line in lines)


def _insert(rng: np.random.Generator, lines: list[str], extra: list[str]) -> list[str]:
    out = list(lines)
    for row in extra:
        out.insert(int(rng.integers(len(out) + 1)), row)
    return out


def _junk_posts(stock: str, days: list[dt.date], count: int) -> list[str]:
    saturday = days[0] + dt.timedelta(days=(5 - days[0].weekday()) % 7)
    d0 = days[0].isoformat()
    kinds = [
        f"{stock}\t{d0}T10:00:00",  # malformed: two fields
        f"{stock}\t{d0}T25:61:00\tu00001\t利好",
        f"{stock}\t{d0}T12:15:00\tu00001\t利好",
        f"{stock}\t{saturday.isoformat()}T10:00:00\tu00001\t利好",
        f"{stock}\t{d0}T10:00:00\tu00001\t   ",
        f"{stock}\t\tu00001\t利好",
    ]
    return [kinds[i % len(kinds)] for i in range(count)]


def _junk_trades(stock: str, days: list[dt.date], count: int) -> list[str]:
    saturday = days[0] + dt.timedelta(days=(5 - days[0].weekday()) % 7)
    d0 = days[0].isoformat()
    kinds = [
        f"{stock}\t{d0}T10:00:00\t10.0",
        f"{stock}\t{d0}T10:00:00\t-3.5\t100",
        f"{stock}\t{d0}T10:00:00\t10.0\t12.5",
        f"{stock}\t{d0}T09:25:00\t10.0\t100",
        f"{stock}\t{saturday.isoformat()}T10:00:00\t10.0\t100",
        f"{stock}\t\t10.0\t100",
    ]
    return [kinds[i % len(kinds)] for i in range(count)]


def _triangle(n: int, peak: bool) -> np.ndarray:
    dist = np.abs(np.arange(n) - n // 2)
    return 3000.0 - 5.0 * dist if peak else 2000.0 + 5.0 * dist


def generate_synthetic(directory: str | Path, synth: SynthConfig | None = None) -> SyntheticData:
    """Write a complete synthetic input set plus ``pipeline.cfg`` into ``directory``."""
    synth = (synth or SynthConfig()).validate()
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(synth.seed)
    days = business_days(dt.date.fromisoformat(synth.start_date), synth.n_days)
    stocks = stock_ids(synth.n_stocks)
    n_s, n_d = len(stocks), len(days)
    roles = _roles(n_s, synth)

    post_rows, sentiment = _posts(rng, stocks, days, synth, set(roles["sparse"]))
    post_rows += _bot_rows(rng, n_s, n_d, synth.bot_posts)
    post_rows.sort(key=lambda r: (r[0], r[1], r[2], r[3], r[4]))
    p_idx = np.array([[r[0], r[1], r[2]] for r in post_rows], dtype=np.int64).reshape(-1, 3)
    stamps = _stamp(days, p_idx[:, 1], p_idx[:, 2])
    post_lines = [f"{stocks[r[0]]}\t{ts}\t{r[3]}\t{r[4]}" for r, ts in zip(post_rows, stamps)]

    price = np.round(rng.uniform(5, 40, size=(n_s, 1))
                     * np.exp(np.cumsum(rng.normal(0, 0.02, size=(n_s, n_d)), axis=1)), 2)
    price = np.maximum(price, 1.0)
    base_shares = np.round(rng.uniform(5e8, 2e9, size=n_s), -4)
    issue_day = n_d // 2
    shares = np.repeat(base_shares[:, None], n_d, axis=1)
    issuers = list(range(0, n_s, 10))
    shares[issuers, issue_day:] *= 1.2
    suspended_days = np.zeros((n_s, n_d), dtype=bool)
    span = min(n_d, 40)
    for s in roles["suspended"]:
        start = max(0, min(n_d // 3, n_d - span))
        suspended_days[s, start:start + span] = True

    (ts_s, ts_d, ts_sec, ts_vol), realized = _trades(rng, synth, sentiment, price, shares, suspended_days)
    price_text = np.array([repr(x) for x in price.ravel().tolist()], dtype=object).reshape(n_s, n_d)
    t_stamps = _stamp(days, ts_d, ts_sec)
    sid = np.array(stocks, dtype=object)
    trade_lines = [f"{a}\t{b}\t{c}\t{v}" for a, b, c, v in
                   zip(sid[ts_s].tolist(), t_stamps.tolist(), price_text[ts_s, ts_d].tolist(), ts_vol.tolist())]

    n_junk_posts = synth.junk_rows // 2
    n_junk_trades = synth.junk_rows - n_junk_posts
    post_lines = _insert(rng, post_lines, _junk_posts(stocks[0], days, n_junk_posts))
    trade_lines = _insert(rng, trade_lines, _junk_trades(stocks[0], days, n_junk_trades))
    _write(root / "posts.tsv", POSTS_HEADER, post_lines)
    _write(root / "trades.tsv", TRADES_HEADER, trade_lines)

    (root / "calendar.txt").write_text("".join(f"{d.isoformat()}\n" for d in days), encoding="utf-8")
    share_lines = [f"{stocks[s]}\t{days[0].isoformat()}\t{repr(float(base_shares[s]))}" for s in range(n_s)]
    share_lines += [f"{stocks[s]}\t{days[issue_day].isoformat()}\t{repr(float(shares[s, issue_day]))}"
                    for s in issuers if issue_day > 0]
    _write(root / "shares.tsv", SHARES_HEADER, sorted(share_lines))

    tier = np.array([TIER_CAPS[(i // 3) % 3] for i in range(n_s)])
    caps = tier[:, None] * np.exp(rng.normal(0, 0.03, size=(n_s, n_d)))
    pb = rng.uniform(1, 5, size=(n_s, 1)) * np.exp(np.cumsum(rng.normal(0, 0.01, size=(n_s, n_d)), axis=1))
    mret = rng.normal(0.0003, 0.012, size=n_d)
    mrp = mret - 0.0001
    pb_l, caps_l, mrp_l, mret_l = pb.tolist(), caps.tolist(), mrp.tolist(), mret.tolist()
    day_text = [d.isoformat() for d in days]
    fund_lines = [f"{stocks[s]}\t{day_text[d]}\t{pb_l[s][d]!r}\t{mrp_l[d]!r}\t{mret_l[d]!r}\t{caps_l[s][d]!r}"
                  for s in range(n_s) for d in range(n_d)]
    _write(root / "fundamentals.tsv", FUNDAMENTALS_HEADER, fund_lines)

    member_lines = []
    for s in roles["churned"]:
        for i, event in enumerate(("enter", "leave", "enter")):
            member_lines.append(f"{stocks[s]}\t{days[min(i * 10, n_d - 1)].isoformat()}\t{event}")
    _write(root / "membership.tsv", MEMBERSHIP_HEADER, member_lines)

    (root / "lexicon.tsv").write_text(
        "".join(f"{w}\t1\n" for w in POSITIVE) + "".join(f"{w}\t-1\n" for w in NEGATIVE), encoding="utf-8")
    (root / "negations.txt").write_text("".join(f"{w}\n" for w in NEGATIONS), encoding="utf-8")

    window = regime_window_for(n_d)
    index_series = {}
    if window >= 1:
        for name, peak in (("index_sh.tsv", True), ("index_sz.tsv", False)):
            levels = _triangle(n_d, peak)
            _write(root / name, ("date", "level"), (f"{d.isoformat()}\t{v!r}" for d, v in zip(days, levels.tolist())))
        index_series = {"6": "index_sh.tsv", "0": "index_sz.tsv", "3": "index_sz.tsv"}

    cfg = PipelineConfig(
        posts_path="posts.tsv", trades_path="trades.tsv", shares_path="shares.tsv",
        calendar_path="calendar.txt", fundamentals_path="fundamentals.tsv",
        membership_path="membership.tsv", index_series=index_series,
        lexicon_paths=["lexicon.tsv"], negation_paths=["negations.txt"],
        window=WINDOW, min_window=MIN_WINDOW, regime_window=max(window, 1), seed=synth.seed,
    )
    config_path = root / "pipeline.cfg"
    config_path.write_text("# synthetic dataset; rerun with: overtrading run --config pipeline.cfg\n"
                           + dump_config(cfg, synth), encoding="utf-8")

    truth = {
        "beta_inst": synth.beta_inst, "beta_retail": synth.beta_retail, "alpha": synth.alpha,
        "noise_sd": synth.noise_sd, "noise_clip": min(3 * synth.noise_sd, 0.6),
        "stocks": n_s, "days": n_d,
        "dropped": {role: [stocks[i] for i in idx] for role, idx in roles.items()},
        "posts": len(post_rows) - synth.bot_posts, "bot_posts": synth.bot_posts,
        "ticks": len(ts_vol), "junk_posts": n_junk_posts, "junk_trades": n_junk_trades,
        "regime_window": window,
    }
    (root / "truth.json").write_text(json.dumps(truth, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return SyntheticData(root, config_path, stocks, truth)
