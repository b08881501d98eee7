import json

import numpy as np
import pandas as pd
import pytest

from overtrading.econometrics.tables import (
    INSUFFICIENT, OK, PANEL_COLUMNS, Cell, PanelError, SpecMatrix, build_panel, cell_grid,
    cell_rows, fit_cell, report_rows, run_table, significance_stars, REPORT_COLUMNS,
)
from overtrading.regimes import cap_tiers

D1, D2 = pd.Timestamp("2020-03-02"), pd.Timestamp("2020-03-03")


def sent(rows):
    return pd.DataFrame(rows, columns=["stock_id", "date", "slot", "value"]).assign(total=lambda f: f["value"] * 2)


def metrics(rows):
    return pd.DataFrame(rows, columns=["stock_id", "date", "slot", "et_total", "et_inst", "et_retail"])


class TestBuildPanel:
    def test_lags_from_same_day(self):
        s = sent([("A", D1, 1, 0.5), ("A", D1, 2, -0.25), ("A", D1, 3, 1.0)])
        m = metrics([("A", D1, k, 0.1 * k, np.nan, 0.2) for k in (1, 2, 3, 4)])
        p = build_panel(s, m)
        assert list(p.columns) == list(PANEL_COLUMNS)
        assert p["slot"].tolist() == [2, 3, 4]
        assert p["sent_lag1"].tolist() == [0.5, -0.25, 1.0]
        assert p.loc[1, "sent_lag2"] == 0.5
        assert p.loc[2, "sent_lag2"] == -0.25 and p.loc[2, "sent_lag3"] == 0.5
        assert np.isnan(p.loc[0, "sent_lag2"])

    def test_missing_previous_slot_drops_row(self):
        s = sent([("A", D1, 2, 0.5)])
        m = metrics([("A", D1, 2, 0.1, 0.1, 0.1), ("A", D1, 3, 0.1, 0.1, 0.1)])
        p = build_panel(s, m)
        assert p["slot"].tolist() == [3]

    def test_no_cross_day_lag(self):
        s = sent([("A", D1, 4, 0.5)])
        m = metrics([("A", D2, 2, 0.1, 0.1, 0.1)])
        assert len(build_panel(s, m)) == 0

    def test_row_needs_some_excess_turnover(self):
        s = sent([("A", D1, 1, 0.5), ("A", D1, 2, 0.5)])
        m = metrics([("A", D1, 2, np.nan, np.nan, np.nan), ("A", D1, 3, np.nan, 0.3, np.nan)])
        assert build_panel(s, m)["slot"].tolist() == [3]

    def test_total_measure(self):
        s = sent([("A", D1, 1, 0.5)])
        m = metrics([("A", D1, 2, 0.1, 0.1, 0.1)])
        assert build_panel(s, m, measure="total")["sent_lag1"].tolist() == [1.0]

    def test_controls_tier_and_regime(self):
        s = sent([("A", D1, 1, 0.5)])
        m = metrics([("A", D1, 2, 0.1, 0.1, 0.1)])
        f = pd.DataFrame([("A", D1, 1.2, 0.01, 0.02, 5e10)],
                         columns=["stock_id", "date", "pb", "market_risk_premium", "market_return", "float_cap"])
        p = build_panel(s, m, fundamentals=f, tier_of=cap_tiers, regime_of=lambda sid, d: "Bear")
        assert p.loc[0, ["pb", "cap_tier", "regime"]].tolist() == [1.2, "Mid", "Bear"]

    def test_duplicate_keys(self):
        s = sent([("A", D1, 1, 0.5), ("A", D1, 1, 0.4)])
        with pytest.raises(PanelError, match="data-integrity"):
            build_panel(s, metrics([]))
        s = sent([("A", D1, 1, 0.5)])
        m = metrics([("A", D1, 2, 0.1, 0.1, 0.1)] * 2)
        with pytest.raises(PanelError):
            build_panel(s, m)


class TestCellGrid:
    def test_counts(self):
        cells = cell_grid()
        assert len(cells) == 78
        assert len({c.id for c in cells}) == 78
        by_table = pd.Series([c.table for c in cells]).value_counts().to_dict()
        assert by_table == {"T2": 3, "T3": 6, "T4": 18, "T5": 27, "R": 24}

    def test_subsets(self):
        assert len(cell_grid(SpecMatrix(regimes=False, tiers=False, robustness=False))) == 9
        assert len(cell_grid(SpecMatrix(base=False, tiers=False, robustness=False))) == 18

    def test_variants(self):
        c = Cell("R", "inst", 4, variant="alt-threshold")
        assert (c.dependent, c.regressors) == ("et_inst_alt", ["sent_lag1"])
        c = Cell("R", "all", 3, variant="controls")
        assert c.regressors == ["sent_lag1", "pb", "market_risk_premium", "market_return"]
        assert Cell("T4", "retail", 2, ("regime", "Bull")).id == "T4|retail|regime=Bull|S2|base"


def synthetic_panel(seed, n_stocks=12, n_days=40, beta=0.2):
    rng = np.random.default_rng(seed)
    rows = []
    for s in range(n_stocks):
        tier = ["Large", "Mid", "Small"][s % 3]
        for d in range(n_days):
            date = pd.Timestamp("2020-01-01") + pd.Timedelta(days=d)
            lags = rng.uniform(-1, 1, 3)
            for slot in (2, 3, 4):
                et = 0.1 + beta * lags[0] + rng.normal(0, 0.3, 3)
                rows.append({"stock_id": f"S{s:02d}", "date": date, "slot": slot,
                             "et_total": et[0], "et_inst": et[1], "et_retail": et[2],
                             "et_inst_alt": et[1] + 0.01, "et_retail_alt": et[2] - 0.01,
                             "sent_lag1": lags[0], "sent_lag2": lags[1] if slot >= 3 else np.nan,
                             "sent_lag3": lags[2] if slot == 4 else np.nan,
                             "pb": rng.uniform(1, 3), "market_risk_premium": rng.normal(0, 0.01),
                             "market_return": rng.normal(0, 0.01), "float_cap": 0.0,
                             "cap_tier": tier, "regime": "Bull" if d < 20 else "Bear"})
    return pd.DataFrame(rows)[list(PANEL_COLUMNS)]


class TestFitCell:
    def test_all_cells_fit(self):
        reports = run_table(synthetic_panel(0))
        assert len(reports) == 78
        assert all(r.status == OK for r in reports)
        base = reports[0]
        assert base.cell_id == "T2|all|-|S2|base" and base.n_obs == 480
        assert base.beta.estimate == pytest.approx(0.2, abs=0.06)
        assert base.wald_chi2 == pytest.approx(base.beta.t_stat ** 2, rel=1e-9)

    def test_three_rows_insufficient(self):
        panel = synthetic_panel(1).iloc[:9]
        rep = fit_cell(panel, Cell("T2", "all", 2))
        assert (rep.status, rep.n_obs) == (INSUFFICIENT, 3)
        assert rep.stars == "" and rep.coefficients == []

    def test_constant_dependent_insufficient(self):
        panel = synthetic_panel(2).assign(et_total=0.5)
        rep = fit_cell(panel, Cell("T2", "all", 3))
        assert rep.status == INSUFFICIENT and "constant" in rep.note

    def test_cell_rows_filters(self):
        panel = synthetic_panel(3)
        rows = cell_rows(panel, Cell("T5", "inst", 4, ("tier", "Small")))
        assert set(rows["cap_tier"]) == {"Small"} and set(rows["slot"]) == {4}

    def test_thread_count_irrelevant(self):
        panel = synthetic_panel(4)
        one = [r.to_dict() for r in run_table(panel, threads=1)]
        four = [r.to_dict() for r in run_table(panel, threads=4)]
        assert json.dumps(one) == json.dumps(four)

    def test_robust_errors_change_only_errors(self):
        panel = synthetic_panel(5)
        a = fit_cell(panel, Cell("T2", "all", 2))
        b = fit_cell(panel, Cell("T2", "all", 2), robust=True)
        assert a.beta.estimate == b.beta.estimate and a.beta.std_error != b.beta.std_error

    def test_lm_lags(self):
        panel = synthetic_panel(6)
        assert fit_cell(panel, Cell("T2", "all", 2), lm_lags=3).lm_df == 3


class TestReporting:
    @pytest.mark.parametrize("p, stars", [(0.001, "***"), (0.01, "**"), (0.049, "**"), (0.05, "*"),
                                          (0.0999, "*"), (0.1, ""), (0.7, "")])
    def test_stars(self, p, stars):
        assert significance_stars(p) == stars

    def test_rows(self):
        panel = synthetic_panel(7)
        reports = run_table(panel, [Cell("T2", "all", 2), Cell("R", "all", 3, variant="controls")])
        reports.append(fit_cell(panel.iloc[:6], Cell("T2", "all", 2)))
        rows = list(report_rows(reports))
        assert all(len(r) == len(REPORT_COLUMNS) for r in rows)
        assert rows[0][0] == "T2|all|-|S2|base" and rows[0][-2] == ""
        assert rows[1][-2].startswith("pb=")
        assert rows[2][6] == INSUFFICIENT and rows[2][8] == ""
        d = reports[0].to_dict()
        assert d["stars"] == reports[0].stars and d["coefficients"][1]["name"] == "sent_lag1"
