import json
import math

import pandas as pd
import pytest
from hypothesis import given, strategies as st

from overtrading.cli import main
from overtrading.config import load_config
from overtrading.pipeline import STAGES, StageError, describe, read_frame, run_pipeline

from conftest import TINY


class TestDescribe:
    def test_constant(self):
        s = describe([1.0, 1.0, 1.0])
        assert (s.n, s.mean, s.std, s.maximum, s.minimum) == (3, 1.0, 0.0, 1.0, 1.0)

    def test_two_values(self):
        s = describe([0.0, 2.0])
        assert (s.mean, s.std) == (1.0, math.sqrt(2))

    def test_empty(self):
        with pytest.raises(ValueError):
            describe([])
        with pytest.raises(ValueError):
            describe([math.nan])

    def test_single_value(self):
        assert describe([4.0]).std == 0.0

    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=50))
    def test_mean_within_range(self, xs):
        s = describe(xs)
        assert s.minimum <= s.mean <= s.maximum and s.std >= 0


def conserved(node, path=""):
    """Every manifest entry with rows_in splits exactly into accepted + rejected."""
    found = []
    if isinstance(node, dict):
        if "rows_in" in node:
            assert node["accepted"] + node["rejected"] == node["rows_in"], path
            found.append(path)
        for k, v in node.items():
            found += conserved(v, f"{path}/{k}")
    return found


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("tiny") / "out"
    cfg, _ = load_config(TINY / "pipeline.cfg", {"out_dir": str(out)})
    run_pipeline(cfg)
    return out


class TestTinyRun:
    """The four-stock fixture: A (600001) and D (600002) survive, B (000001)
    has too few posts and C (300001) is suspended for four days."""

    def manifest(self, out):
        return json.loads((out / "manifest.json").read_text(encoding="utf-8"))

    def test_ingest_counts(self, tiny_run):
        m = self.manifest(tiny_run)["ingest"]
        assert (m["posts"]["rows_in"], m["posts"]["accepted"]) == (193, 188)
        assert m["posts"]["rejected_by_reason"] == {r: 1 for r in (
            "empty-text", "malformed-row", "missing-timestamp", "non-trading-day", "outside-trading-hours")}
        assert (m["trades"]["rows_in"], m["trades"]["accepted"]) == (182, 177)
        assert m["trades"]["rejected_by_reason"] == {r: 1 for r in (
            "bad-price", "bad-volume", "malformed-row", "non-trading-day", "outside-trading-hours")}
        assert (m["bot_filter"]["accepted"], m["bot_filter"]["rejected"]) == (186, 2)
        assert m["stocks"]["dropped_by_rule"] == {"index-effect": [], "sparse-posts": ["000001"],
                                                  "suspended": ["300001"]}
        assert (m["posts_universe"]["accepted"], m["trades_universe"]["accepted"]) == (96, 97)

    def test_later_counts(self, tiny_run):
        m = self.manifest(tiny_run)
        assert m["sentiment"]["posts"] == {"rows_in": 96, "accepted": 95, "rejected": 1}
        assert m["sentiment"]["hours_with_signal"] == 95
        assert m["metrics"]["slots"] == {"rows_in": 96, "accepted": 80, "rejected": 16}
        assert m["panel"]["rows"] == {"rows_in": 72, "accepted": 59, "rejected": 13}
        assert m["panel"]["by_slot"] == {"S2": 19, "S3": 20, "S4": 20}
        assert m["regress"] == {"cells": 78, "by_status": {"insufficient-data": 36, "ok": 42}}
        assert m["describe"] == {"variables": 3}

    def test_manifest_conservation(self, tiny_run):
        m = self.manifest(tiny_run)
        assert len(conserved(m)) == 9
        i = m["ingest"]
        # each filter consumes what the previous step accepted
        assert i["bot_filter"]["rows_in"] == i["posts"]["accepted"]
        assert i["posts_universe"]["rows_in"] == i["bot_filter"]["accepted"]
        assert i["trades_universe"]["rows_in"] == i["trades"]["accepted"]
        assert m["sentiment"]["posts"]["rows_in"] == i["posts_universe"]["accepted"]

    def test_artifacts(self, tiny_run):
        names = {p.name for p in tiny_run.iterdir()}
        assert names == {"config.effective", "describe.tsv", "manifest.json", "metrics.tsv", "metrics_alt.tsv",
                         "panel.tsv", "phases_0.tsv", "phases_3.tsv", "phases_6.tsv", "rejections_posts.tsv",
                         "rejections_trades.tsv", "reports.json", "reports.tsv", "sentiment_index.tsv",
                         "universe.tsv"}
        assert (tiny_run / "universe.tsv").read_text() == "stock_id\n600001\n600002\n"
        assert (tiny_run / "phases_6.tsv").read_text() == (
            "kind\tstart\tend\nBull\t2020-03-02\t2020-03-10\nBear\t2020-03-11\t2020-03-17\n")

    def test_hand_computed_metrics(self, tiny_run):
        m = read_frame(tiny_run / "metrics.tsv")
        a = m[(m["stock_id"] == "600001") & (m["date"] == pd.Timestamp("2020-03-17"))].set_index("slot")
        assert (a.loc[2, "turnover_total"], a.loc[2, "et_total"]) == (0.015625, 1.0)
        assert (a.loc[3, "turnover_total"], a.loc[3, "turnover_inst"], a.loc[3, "et_total"]) == (0.2578125, 0.25, 32.0)
        assert math.isnan(a.loc[3, "et_inst"]) and a.loc[3, "et_retail"] == 0.0
        alt = read_frame(tiny_run / "metrics_alt.tsv")
        row = alt[(alt["stock_id"] == "600001") & (alt["date"] == pd.Timestamp("2020-03-17")) & (alt["slot"] == 3)]
        assert row["et_retail"].item() == 32.0

    def test_reports_consistent(self, tiny_run):
        reports = json.loads((tiny_run / "reports.json").read_text(encoding="utf-8"))
        tsv = read_frame(tiny_run / "reports.tsv", ())
        assert len(reports) == len(tsv) == 78
        assert tsv["cell_id"].tolist() == [r["cell_id"] for r in reports]
        assert all((r["status"] == "ok") == bool(r["coefficients"]) for r in reports)

    def test_rerun_identical(self, tiny_run, tmp_path):
        cfg, _ = load_config(TINY / "pipeline.cfg", {"out_dir": str(tmp_path / "again"), "threads": "3"})
        run_pipeline(cfg)
        for p in tiny_run.iterdir():
            assert (tmp_path / "again" / p.name).read_bytes() == p.read_bytes(), p.name

    def test_stage_by_stage_equals_run(self, tiny_run, tmp_path):
        out = tmp_path / "staged"
        for stage in STAGES:
            assert main([stage, "--config", str(TINY / "pipeline.cfg"), "--out-dir", str(out)]) == 0
        for p in tiny_run.iterdir():
            assert (out / p.name).read_bytes() == p.read_bytes(), p.name


class TestFailures:
    def test_missing_trades_fails_in_ingest(self, tiny_copy, tmp_path, capsys):
        (tiny_copy / "trades.tsv").unlink()
        code = main(["run", "--config", str(tiny_copy / "pipeline.cfg"), "--out-dir", str(tmp_path / "o")])
        assert code == 1
        assert "stage ingest" in capsys.readouterr().err

    def test_missing_trades_api(self, tiny_copy, tmp_path):
        (tiny_copy / "trades.tsv").unlink()
        cfg, _ = load_config(tiny_copy / "pipeline.cfg", {"out_dir": str(tmp_path / "o")})
        with pytest.raises(StageError) as err:
            run_pipeline(cfg)
        assert err.value.stage == "ingest"

    def test_stage_needs_previous_artifacts(self, tmp_path, capsys):
        code = main(["metrics", "--config", str(TINY / "pipeline.cfg"), "--out-dir", str(tmp_path / "o")])
        assert code == 1 and "stage metrics" in capsys.readouterr().err

    def test_bad_value_is_config_error(self, tiny_config):
        tiny_config.window = 0
        with pytest.raises(StageError) as err:
            run_pipeline(tiny_config)
        assert err.value.stage == "config"
