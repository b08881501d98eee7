import shutil
from pathlib import Path

import pytest

from overtrading.config import load_config
from overtrading.lexicon import Lexicon, LexiconEntry, load_lexicon

FIXTURES = Path(__file__).parent / "fixtures"
TINY = FIXTURES / "tiny"


def make_lexicon(weights: dict[str, int], negations=()) -> Lexicon:
    entries = {w: LexiconEntry(w, v, "test") for w, v in weights.items()}
    return Lexicon(entries, frozenset(negations))


@pytest.fixture(scope="session")
def audit_lexicon() -> Lexicon:
    return load_lexicon([FIXTURES / "audit_lexicon.tsv"], [FIXTURES / "audit_negations.txt"])


@pytest.fixture
def tiny_config(tmp_path):
    """Config for the hand-audited four-stock dataset, writing into a temp dir."""
    cfg, _ = load_config(TINY / "pipeline.cfg", {"out_dir": str(tmp_path / "out")})
    return cfg


@pytest.fixture
def tiny_copy(tmp_path):
    """A writable copy of the tiny dataset (plus the dictionaries it points at)."""
    root = tmp_path / "data"
    shutil.copytree(TINY, root / "tiny")
    for name in ("audit_lexicon.tsv", "audit_negations.txt"):
        shutil.copy(FIXTURES / name, root / name)
    return root / "tiny"


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE: list[str] = []


def record(criterion: int, title: str, passed: bool, seconds: float, detail: str = "") -> None:
    line = f"criterion {criterion} [{'PASS' if passed else 'FAIL'}] {title} ({seconds:.1f} s){': ' + detail if detail else ''}"
    ACCEPTANCE.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
