import dataclasses
from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

from overtrading.config import (
    ConfigError, PipelineConfig, SynthConfig, dump_config, load_config, parse_flat,
)

from conftest import TINY


class TestParse:
    def test_flat(self):
        assert parse_flat("# c\na = 1\n\nb =  x y \n") == {"a": "1", "b": "x y"}

    def test_missing_equals(self):
        with pytest.raises(ConfigError, match=":2:"):
            parse_flat("a = 1\nnonsense\n")

    def test_duplicate(self):
        with pytest.raises(ConfigError, match="duplicate"):
            parse_flat("a = 1\na = 2\n")

    def test_types(self, tmp_path):
        cfg, synth = load_config(None, {"window": "5", "robust_se": "true", "large_cap": "2e11",
                                        "lexicon_paths": "a.tsv, b.tsv", "index_series": "6=x.tsv",
                                        "synth.n_stocks": "7"}, base_dir=tmp_path)
        assert (cfg.window, cfg.robust_se, cfg.large_cap, synth.n_stocks) == (5, True, 2e11, 7)
        assert cfg.lexicon_paths == [str(tmp_path / "a.tsv"), str(tmp_path / "b.tsv")]
        assert cfg.index_series == {"6": str(tmp_path / "x.tsv")}

    @pytest.mark.parametrize("key, value", [("window", "x"), ("robust_se", "yes"), ("index_series", "6")])
    def test_bad_values(self, key, value):
        with pytest.raises(ConfigError):
            load_config(None, {key: value})

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown config key widow"):
            load_config(None, {"widow": "3"})
        with pytest.raises(ConfigError, match="synth.beta"):
            load_config(None, {"synth.beta": "3"})


class TestRoundTrip:
    def test_defaults(self, tmp_path):
        cfg, synth = PipelineConfig(), SynthConfig()
        path = tmp_path / "c.cfg"
        path.write_text(dump_config(cfg, synth), encoding="utf-8")
        # relative defaults come back resolved against the file's folder
        back, sback = load_config(path)
        assert sback == synth
        assert back.out_dir == str(tmp_path / "out")
        assert dataclasses.replace(back, out_dir="out") == cfg

    @settings(max_examples=50)
    @given(st.integers(1, 500), st.floats(1.0, 1e12), st.booleans(), st.sampled_from(["value", "total"]),
           st.floats(-1, 1), st.integers(0, 2**31))
    def test_random_values(self, window, cap, robust, measure, beta, seed):
        cfg = PipelineConfig(posts_path="/d/p.tsv", lexicon_paths=["/d/a.tsv", "/d/b.tsv"], window=window,
                             large_cap=cap, robust_se=robust, sentiment_measure=measure, out_dir="/o",
                             index_series={"6": "/d/i.tsv"})
        synth = SynthConfig(beta_inst=beta, seed=seed)
        main = dict(line.split(" = ", 1) for line in dump_config(cfg, synth).splitlines())
        back, sback = load_config(None, main)
        assert (back, sback) == (cfg, synth)


class TestValidate:
    def test_tiny_config_valid(self, tiny_config):
        tiny_config.validate()
        assert Path(tiny_config.posts_path) == TINY / "posts.tsv"

    def test_missing_file(self, tiny_config):
        tiny_config.trades_path = "/nonexistent/trades.tsv"
        tiny_config.validate(check_paths=False)
        with pytest.raises(ConfigError, match="missing input file"):
            tiny_config.validate()

    @pytest.mark.parametrize("key, value", [
        ("window", 0), ("min_window", 99), ("small_cap", 1e12), ("threads", 0), ("max_empty_share", 2.0),
        ("baseline_mode", "weekly"), ("conflict_policy", "vote"), ("tier_date", "2020-13-01"),
        ("lexicon_paths", []), ("posts_path", ""),
    ])
    def test_bad_values(self, tiny_config, key, value):
        setattr(tiny_config, key, value)
        with pytest.raises(ConfigError):
            tiny_config.validate()

    @pytest.mark.parametrize("key, value", [("n_stocks", 0), ("noise_sd", -1.0), ("beta_inst", float("nan")),
                                            ("silent_post_share", 1.0), ("start_date", "soon")])
    def test_bad_synth(self, key, value):
        with pytest.raises(ConfigError):
            dataclasses.replace(SynthConfig(), **{key: value}).validate()
