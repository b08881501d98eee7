"""Post-level sentiment scores and the hourly per-stock sentiment index."""

from __future__ import annotations

from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .ingest import HourSlot, Post
from .lexicon import Lexicon, lexicon_tokens

POSITIVE, NEGATIVE, NEUTRAL = "positive", "negative", "neutral"


class SentimentError(Exception):
    pass


@dataclass(frozen=True, slots=True)
class PostScore:
    stock_id: str
    slot_key: HourSlot | None
    value: float
    sentiment_word_count: int
    negation_count: int


@dataclass(frozen=True, slots=True)
class HourSentiment:
    stock_id: str
    slot_key: HourSlot
    value: float
    post_count: int
    total: float  # unnormalized sum of post scores


def score_tokens(tokens: Iterable[str], lexicon: Lexicon) -> tuple[float, int, int] | None:
    """(value, E, n) for a token sequence, or None when no token carries a weight.

    value = (sum of weights / E) * (-1)**n, where E counts nonzero-weight
    tokens and n counts negation tokens.
    """
    entries, negations = lexicon.entries, lexicon.negations
    total = e = n = 0
    for tok in tokens:
        entry = entries.get(tok)
        if entry is not None:
            if entry.weight:
                total += entry.weight
                e += 1
        elif tok in negations:
            n += 1
    if e == 0:
        return None
    value = total / e
    return (-value if n % 2 else value), e, n


def score_post(tokens: Sequence[str], lexicon: Lexicon, stock_id: str = "",
               slot_key: HourSlot | None = None) -> PostScore | None:
    """Score one segmented post; None means the post carries no signal."""
    scored = score_tokens(tokens, lexicon)
    if scored is None:
        return None
    value, e, n = scored
    return PostScore(stock_id, slot_key, value, e, n)


def score_posts(posts: Iterable[Post], lexicon: Lexicon) -> tuple[list[PostScore], int]:
    """Score posts in the given order; returns (scores, number of no-signal posts)."""
    scores, silent = [], 0
    for post in posts:
        s = score_post(lexicon_tokens(post.text, lexicon), lexicon, post.stock_id, post.key)
        if s is None:
            silent += 1
        else:
            scores.append(s)
    return scores, silent


def aggregate_hour(scores: Sequence[PostScore]) -> HourSentiment | None:
    """Mean of the post scores of one (stock, slot); None for an empty slot.

    Summation follows the given order, so callers pass scores sorted by
    posting time for run-to-run reproducibility.
    """
    if not scores:
        return None
    first = scores[0]
    total = 0.0
    for s in scores:
        if (s.stock_id, s.slot_key) != (first.stock_id, first.slot_key):
            raise SentimentError("aggregate_hour needs scores from a single (stock, slot)")
        total += s.value
    return HourSentiment(first.stock_id, first.slot_key, total / len(scores), len(scores), total)


def hourly_index(posts: Sequence[Post], lexicon: Lexicon) -> tuple[list[HourSentiment], dict[str, int]]:
    """Score every post and average per (stock, slot).

    Posts are ordered by (stock, time, author, text) before summation so the
    result does not depend on input order.
    """
    ordered = sorted(posts, key=lambda p: (p.stock_id, p.posted_at, p.author_id, p.text))
    scores, silent = score_posts(ordered, lexicon)
    groups: dict[tuple[str, HourSlot], list[PostScore]] = {}
    for s in scores:
        groups.setdefault((s.stock_id, s.slot_key), []).append(s)
    index = [aggregate_hour(groups[k]) for k in sorted(groups)]
    stats = {"posts": len(ordered), "scored": len(scores), "no_signal": silent, "hours": len(index)}
    return index, stats


def hourly_frame(posts: Sequence[Post], lexicon: Lexicon) -> tuple[pd.DataFrame, dict[str, int]]:
    """Table form of :func:`hourly_index` with columns
    ``stock_id, date, slot, value, post_count, total``.

    Gives the same numbers: sorting by stock and time makes each hour's posts
    contiguous, and ``np.bincount`` adds them one by one in that order.
    """
    ordered = sorted(posts, key=lambda p: (p.stock_id, p.posted_at, p.author_id, p.text))
    values, keep = [], []
    for i, post in enumerate(ordered):
        scored = score_tokens(lexicon_tokens(post.text, lexicon), lexicon)
        if scored is not None:
            values.append(scored[0])
            keep.append(i)
    kept = [ordered[i] for i in keep]
    sids = np.array([p.stock_id for p in kept], dtype=object)
    days = np.array([p.key.date for p in kept], dtype="datetime64[D]")
    slots = np.array([int(p.key.slot) for p in kept], dtype=np.int64)
    new = np.ones(len(kept), dtype=bool)
    if len(kept):
        new[1:] = (sids[1:] != sids[:-1]) | (days[1:] != days[:-1]) | (slots[1:] != slots[:-1])
    group = np.cumsum(new) - 1
    n_groups = int(new.sum())
    total = np.bincount(group, weights=np.array(values, dtype=float), minlength=n_groups)
    count = np.bincount(group, minlength=n_groups).astype(np.int64)
    first = np.flatnonzero(new)
    frame = pd.DataFrame({
        "stock_id": sids[first],
        "date": days[first].astype("datetime64[ns]"),
        "slot": slots[first],
        "value": total / np.maximum(count, 1),
        "post_count": count,
        "total": total,
    })
    stats = {"posts": len(ordered), "scored": len(kept), "no_signal": len(ordered) - len(kept),
             "hours": n_groups}
    return frame, stats


def sign_class(value: float | None) -> str:
    if value is None or value == 0:
        return NEUTRAL
    return POSITIVE if value > 0 else NEGATIVE


def evaluate_accuracy(scores: Sequence[PostScore | None], labels: Sequence[str]) -> float:
    """Share of posts whose score sign matches the hand label (no signal counts as neutral)."""
    if not labels:
        raise SentimentError("no labels to evaluate against")
    if len(scores) != len(labels):
        raise SentimentError("scores and labels differ in length")
    hits = sum(sign_class(None if s is None else s.value) == lab for s, lab in zip(scores, labels))
    return hits / len(labels)


def load_labeled(path) -> list[tuple[str, str]]:
    """Read an accuracy fixture of ``text<TAB>label`` lines (header first)."""
    rows = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if header[:2] != ["text", "label"]:
            raise SentimentError(f"{path}: expected header text<TAB>label")
        for line in fh:
            line = line.rstrip("\r\n")
            if not line:
                continue
            text, label = line.split("\t")[:2]
            if label not in (POSITIVE, NEGATIVE, NEUTRAL):
                raise SentimentError(f"{path}: bad label {label!r}")
            rows.append((text, label))
    return rows
