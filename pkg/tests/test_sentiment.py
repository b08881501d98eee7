import datetime as dt
import random
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from overtrading.ingest import HourSlot, Post, Slot
from overtrading.lexicon import segment
from overtrading.sentiment import (
    PostScore, SentimentError, aggregate_hour, evaluate_accuracy, hourly_frame, hourly_index,
    load_labeled, score_post, score_posts, sign_class,
)

from conftest import FIXTURES, make_lexicon

LEX = make_lexicon({"好": 1, "升": 1, "坏": -1, "平": 0}, ["不", "没"])
KEY = HourSlot(dt.date(2020, 3, 2), Slot.S2)
token_lists = st.lists(st.sampled_from(["好", "升", "坏", "平", "不", "没", "x"]), max_size=12)


def scores(*values):
    return [PostScore("600000", KEY, v, 1, 0) for v in values]


class TestScorePost:
    def test_single_positive_word(self):
        assert score_post(["好"], LEX).value == 1.0

    def test_negated_mix(self):
        s = score_post(["好", "升", "坏", "不"], LEX)
        # (1 + 1 - 1) / 3 * (-1)**1
        assert s.value == float(Fraction(-1, 3))
        assert (s.sentiment_word_count, s.negation_count) == (3, 1)

    def test_no_weighted_words(self):
        assert score_post(["平", "不", "x"], LEX) is None

    def test_zero_weight_words_do_not_count(self):
        assert score_post(["好", "平", "平"], LEX).sentiment_word_count == 1

    @given(token_lists)
    def test_bounded(self, tokens):
        s = score_post(tokens, LEX)
        assert s is None or -1.0 <= s.value <= 1.0

    @given(token_lists)
    def test_negation_parity(self, tokens):
        base = score_post(tokens, LEX)
        once = score_post(tokens + ["不"], LEX)
        twice = score_post(tokens + ["不", "没"], LEX)
        if base is None:
            assert once is None and twice is None
        else:
            assert once.value == -base.value
            assert twice.value == base.value
            assert once.sentiment_word_count == base.sentiment_word_count

    @given(token_lists, st.randoms(use_true_random=False))
    def test_token_order_irrelevant(self, tokens, rnd):
        shuffled = list(tokens)
        rnd.shuffle(shuffled)
        a, b = score_post(tokens, LEX), score_post(shuffled, LEX)
        assert (a is None and b is None) or a.value == b.value

    def test_many_negations(self):
        assert score_post(["坏"] + ["不"] * 7, LEX).value == 1.0


class TestAggregateHour:
    def test_symmetric(self):
        assert aggregate_hour(scores(1.0, -1.0)).value == 0.0

    def test_mean(self):
        h = aggregate_hour(scores(-1 / 3, -1.0))
        assert h.value == pytest.approx(float(Fraction(-2, 3)), rel=1e-15)
        assert (h.post_count, h.total) == (2, -1 / 3 - 1.0)

    def test_empty(self):
        assert aggregate_hour([]) is None

    def test_mixed_slots_rejected(self):
        other = PostScore("600000", HourSlot(dt.date(2020, 3, 2), Slot.S3), 1.0, 1, 0)
        with pytest.raises(SentimentError):
            aggregate_hour(scores(1.0) + [other])

    @given(st.lists(st.sampled_from([-1.0, -0.5, 0.0, 1 / 3, 1.0]), min_size=1, max_size=10))
    def test_duplicating_posts_keeps_mean(self, values):
        once = aggregate_hour(scores(*values)).value
        twice = aggregate_hour(scores(*values, *values)).value
        assert twice == pytest.approx(once, abs=1e-12)
        assert -1.0 <= once <= 1.0


def random_posts(seed: int, n: int) -> list[Post]:
    rnd = random.Random(seed)
    words = ["好", "升", "坏", "平", "不", "x", "y"]
    out = []
    for _ in range(n):
        stamp = dt.datetime(2020, 3, 2 + rnd.randrange(2), rnd.choice([9, 10, 13, 14]), rnd.randrange(30, 60))
        text = "".join(rnd.choice(words) for _ in range(rnd.randrange(1, 6)))
        out.append(Post(rnd.choice(["600000", "000001"]), stamp, f"u{rnd.randrange(3)}", text))
    return out


class TestHourlyIndex:
    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10_000), st.integers(0, 80))
    def test_frame_matches_object_form(self, seed, n):
        posts = random_posts(seed, n)
        index, stats = hourly_index(posts, LEX)
        frame, fstats = hourly_frame(posts, LEX)
        assert fstats == stats
        assert frame["stock_id"].tolist() == [h.stock_id for h in index]
        assert [d.date() for d in frame["date"]] == [h.slot_key.date for h in index]
        assert frame["slot"].tolist() == [int(h.slot_key.slot) for h in index]
        assert frame["value"].tolist() == [h.value for h in index]
        assert frame["total"].tolist() == [h.total for h in index]
        assert frame["post_count"].tolist() == [h.post_count for h in index]

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10_000))
    def test_input_order_irrelevant(self, seed):
        posts = random_posts(seed, 60)
        shuffled = list(posts)
        random.Random(seed).shuffle(shuffled)
        assert hourly_index(posts, LEX) == hourly_index(shuffled, LEX)

    def test_stats(self):
        posts = [Post("a", dt.datetime(2020, 3, 2, 9, 31), "u", "好"),
                 Post("a", dt.datetime(2020, 3, 2, 9, 32), "u", "平"),
                 Post("a", dt.datetime(2020, 3, 2, 9, 33), "u", "坏不")]
        index, stats = hourly_index(posts, LEX)
        assert stats == {"posts": 3, "scored": 2, "no_signal": 1, "hours": 1}
        assert index[0].value == 1.0 and index[0].post_count == 2

    def test_score_posts_counts_silent(self):
        posts = [Post("a", dt.datetime(2020, 3, 2, 9, 31), "u", t) for t in ("好", "x", "平")]
        found, silent = score_posts(posts, LEX)
        assert (len(found), silent) == (1, 2)


class TestEvaluateAccuracy:
    def test_all_match(self):
        assert evaluate_accuracy(scores(1.0, -0.5), ["positive", "negative"]) == 1.0

    def test_three_of_four(self):
        preds = scores(1.0, -1.0, 0.5) + [None]
        assert evaluate_accuracy(preds, ["positive", "negative", "negative", "neutral"]) == 0.75

    def test_no_labels(self):
        with pytest.raises(SentimentError):
            evaluate_accuracy([], [])

    def test_length_mismatch(self):
        with pytest.raises(SentimentError):
            evaluate_accuracy(scores(1.0), ["positive", "neutral"])

    def test_sign_classes(self):
        assert [sign_class(v) for v in (None, 0.0, 0.2, -0.2)] == ["neutral", "neutral", "positive", "negative"]

    def test_labeled_fixture(self, audit_lexicon):
        """Ten hand-labeled posts; the two misses are a bullish reading of bad
        news and a mixed post the labeler called negative."""
        rows = load_labeled(FIXTURES / "labeled_posts.tsv")
        preds = [score_post(segment(text, audit_lexicon), audit_lexicon) for text, _ in rows]
        assert evaluate_accuracy(preds, [lab for _, lab in rows]) == 0.8

    def test_bad_label_file(self, tmp_path):
        path = tmp_path / "l.tsv"
        path.write_text("text\tlabel\n好\tgreat\n", encoding="utf-8")
        with pytest.raises(SentimentError):
            load_labeled(path)
