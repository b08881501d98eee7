"""Sentiment dictionary storage and forward-maximum-matching segmentation."""

from __future__ import annotations

import logging
import re
from collections import Counter
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

log = logging.getLogger(__name__)

PRIORITY = "priority"
SUM_SIGN = "sum-sign"
CONFLICT_POLICIES = (PRIORITY, SUM_SIGN)


class LexiconError(Exception):
    pass


@dataclass(frozen=True)
class LexiconEntry:
    word: str
    weight: int
    source: str

    def __post_init__(self):
        if not self.word:
            raise LexiconError("empty word")
        if self.weight not in (-1, 0, 1):
            raise LexiconError(f"weight of {self.word!r} must be -1, 0 or 1, got {self.weight}")


@dataclass(frozen=True)
class LoadIssue:
    source: str
    line: int
    word: str
    kind: str  # "malformed" or "conflict"
    detail: str = ""


@dataclass
class Lexicon:
    entries: dict[str, LexiconEntry]
    negations: frozenset[str]
    issues: list[LoadIssue] = field(default_factory=list, compare=False)

    def __post_init__(self):
        overlap = self.negations & self.entries.keys()
        if overlap:
            raise LexiconError(f"words both weighted and negating: {sorted(overlap)[:5]}")
        self.max_word_length = max((len(w) for w in (*self.entries, *self.negations)), default=0)
        # word lengths keyed by first character, longest first
        lengths: dict[str, set[int]] = {}
        for w in (*self.entries, *self.negations):
            lengths.setdefault(w[0], set()).add(len(w))
        self._lengths = {c: sorted(ls, reverse=True) for c, ls in lengths.items()}
        starts = "".join(re.escape(c) for c in sorted(lengths))
        self._starts = re.compile(f"[{starts}]") if starts else None

    def weight(self, token: str) -> int:
        entry = self.entries.get(token)
        return entry.weight if entry is not None else 0

    def counts(self) -> dict[str, int]:
        c = Counter(e.weight for e in self.entries.values())
        return {"positive": c[1], "negative": c[-1], "neutral": c[0],
                "negation": len(self.negations)}

    def __contains__(self, token: str) -> bool:
        return token in self.entries or token in self.negations


def merge_tables(tables: Sequence[Mapping[str, LexiconEntry]], policy: str = PRIORITY,
                 issues: list[LoadIssue] | None = None) -> dict[str, LexiconEntry]:
    """Merge word tables given in priority order (first wins under ``priority``).

    ``sum-sign`` adds the weights across all sources and keeps the sign.
    """
    if policy not in CONFLICT_POLICIES:
        raise LexiconError(f"unknown conflict policy {policy!r}")
    merged: dict[str, LexiconEntry] = {}
    totals: dict[str, int] = {}
    for table in tables:
        for word, entry in table.items():
            have = merged.get(word)
            if have is None:
                merged[word] = entry
                totals[word] = entry.weight
                continue
            if have.weight != entry.weight and issues is not None:
                issues.append(LoadIssue(entry.source, 0, word, "conflict",
                                        f"{have.source}={have.weight} vs {entry.source}={entry.weight}"))
            if policy == SUM_SIGN:
                totals[word] += entry.weight
    if policy == SUM_SIGN:
        merged = {w: LexiconEntry(w, (t > 0) - (t < 0), merged[w].source) for w, t in totals.items()}
    return merged


def read_dictionary(path: str | Path, issues: list[LoadIssue] | None = None) -> dict[str, LexiconEntry]:
    """Read ``word<TAB>weight`` lines; bad lines are skipped and reported."""
    source = Path(path).name
    table: dict[str, LexiconEntry] = {}
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            word = parts[0].strip()
            try:
                if len(parts) != 2 or not word:
                    raise ValueError("expected word<TAB>weight")
                entry = LexiconEntry(word, int(parts[1]), source)
            except (ValueError, LexiconError) as exc:
                if issues is not None:
                    issues.append(LoadIssue(source, n, word, "malformed", str(exc)))
                continue
            # within one file the first occurrence wins
            table.setdefault(word, entry)
    return table


def read_negations(path: str | Path) -> set[str]:
    with open(path, encoding="utf-8") as fh:
        return {w for w in (line.strip() for line in fh) if w and not w.startswith("#")}


def load_lexicon(paths: Sequence[str | Path], negation_paths: Iterable[str | Path] = (),
                 conflict_policy: str = PRIORITY) -> Lexicon:
    """Merge dictionary files (highest priority first) and negation lists.

    A word listed as a negation is removed from the weighted table; the
    removal is reported as a conflict.
    """
    issues: list[LoadIssue] = []
    try:
        tables = [read_dictionary(p, issues) for p in paths]
        negations = set()
        for p in negation_paths:
            negations |= read_negations(p)
    except OSError as exc:
        raise LexiconError(f"cannot read lexicon: {exc}") from exc
    entries = merge_tables(tables, conflict_policy, issues)
    for word in sorted(negations & entries.keys()):
        issues.append(LoadIssue(entries[word].source, 0, word, "conflict", "listed as negation"))
        del entries[word]
    if not entries:
        raise LexiconError("lexicon merge produced no entries")
    for issue in issues:
        log.info("lexicon %s %s:%d %r %s", issue.kind, issue.source, issue.line, issue.word, issue.detail)
    lex = Lexicon(entries, frozenset(negations), issues)
    log.info("lexicon loaded: %s", lex.counts())
    return lex


def default_negations_path() -> Path:
    return Path(str(resources.files("overtrading") / "data" / "negations.txt"))


def segment(text: str, lexicon: Lexicon) -> list[str]:
    """Greedy forward maximum matching over the lexicon's words.

    Characters that start no lexicon word become single-character tokens, so
    ``"".join(segment(t, lex)) == t`` always holds.
    """
    lengths = lexicon._lengths
    entries, negations = lexicon.entries, lexicon.negations
    tokens = []
    i, n = 0, len(text)
    while i < n:
        step = 1
        for size in lengths.get(text[i], ()):
            if i + size <= n:
                piece = text[i:i + size]
                if piece in entries or piece in negations:
                    step = size
                    break
        tokens.append(text[i:i + step])
        i += step
    return tokens


def lexicon_tokens(text: str, lexicon: Lexicon) -> list[str]:
    """The dictionary and negation tokens of ``segment(text)``, in order.

    Jumps between characters that can start a word instead of walking every
    character, which makes scoring cheap on long posts.
    """
    starts = lexicon._starts
    if starts is None:
        return []
    lengths = lexicon._lengths
    entries, negations = lexicon.entries, lexicon.negations
    tokens = []
    n = len(text)
    m = starts.search(text)
    while m is not None:
        i = m.start()
        step = 1
        for size in lengths[text[i]]:
            if i + size <= n:
                piece = text[i:i + size]
                if piece in entries or piece in negations:
                    tokens.append(piece)
                    step = size
                    break
        m = starts.search(text, i + step)
    return tokens


def frequency_report(texts: Iterable[str], lexicon: Lexicon, threshold: int = 80) -> list[tuple[str, int]]:
    """Tokens not in the lexicon occurring at least ``threshold`` times, for manual labelling."""
    counts: Counter[str] = Counter()
    for text in texts:
        counts.update(t for t in segment(text, lexicon) if t not in lexicon and not t.isspace())
    hits = [(t, c) for t, c in counts.items() if c >= threshold]
    return sorted(hits, key=lambda tc: (-tc[1], tc[0]))


def write_frequency_report(rows: Iterable[tuple[str, int]], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for token, count in rows:
            fh.write(f"{token}\t{count}\n")
