import itertools
import math

import numpy as np
import pytest
from conftest import toy_model
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from msrbench.evaluation import (ScenarioReport, aggregate_reports, auc, logloss, profile, rank_flags,
                                 report_from_predictions, rows_to_csv, rows_to_text, summary_rows,
                                 welch_ttest)
from msrbench.training import TrainConfig


def pairwise_auc(y, s):
    pos, neg = s[y == 1], s[y == 0]
    diff = pos[:, None] - neg[None, :]
    return ((diff > 0).sum() + 0.5 * (diff == 0).sum()) / (pos.size * neg.size)


def test_auc_small_cases():
    assert auc([0, 1], [0.1, 0.9]) == 1.0
    assert auc([0, 1], [0.9, 0.1]) == 0.0
    assert auc([0, 1, 0, 1], [0.5] * 4) == 0.5
    assert math.isnan(auc([1, 1, 1], [0.1, 0.2, 0.3]))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 6)), min_size=2, max_size=80))
def test_auc_matches_pairwise(pairs):
    y = np.array([p[0] for p in pairs])
    s = np.array([p[1] for p in pairs], dtype=float)
    if y.min() == y.max():
        return
    assert auc(y, s) == pytest.approx(pairwise_auc(y, s), abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(-500, 500), min_size=4, max_size=60), st.integers(0, 1000))
def test_auc_invariant_to_monotone_transform(scores, seed):
    s = np.array(scores) / 100.0   # a grid, so the transform cannot merge distinct floats
    y = np.random.default_rng(seed).integers(0, 2, s.size)
    if y.min() == y.max():
        return
    assert auc(y, np.exp(2 * s) + 3) == pytest.approx(auc(y, s), abs=1e-12)
    assert auc(y, -s) == pytest.approx(1 - auc(y, s), abs=1e-12)


def test_logloss_reference():
    y = np.array([1, 0, 1, 0.0])
    p = np.array([0.9, 0.2, 0.6, 0.4])
    assert logloss(y, p) == pytest.approx(-np.mean(np.log([0.9, 0.8, 0.6, 0.6])))
    assert np.isfinite(logloss([1, 0], [0.0, 1.0]))


def test_report_flags_and_macro():
    y = np.array([1, 0, 1, 1, 0, 1])
    s = np.array([.9, .1, .7, .8, .3, .2])
    scen = np.array([0, 0, 1, 1, 0, 0])
    rep = report_from_predictions(y, s, scen, 3)
    assert rep.per_scenario[1]["auc"] is None and rep.per_scenario[2]["n"] == 0
    assert rep.flags == ["S-1: single class", "S-2: empty"]
    assert rep.macro_auc == rep.per_scenario[0]["auc"]
    back = ScenarioReport.from_dict(rep.to_dict())
    assert back == rep and '"macro_auc"' in rep.to_json()


def test_aggregate_uses_sample_std():
    reps = [report_from_predictions([0, 1, 0, 1], s, [0, 0, 1, 1], 2)
            for s in ([.1, .9, .2, .8], [.9, .1, .2, .8], [.1, .9, .8, .2])]
    agg = aggregate_reports(reps, [1, 2, 3])
    aucs = [r.auc for r in reps]
    assert agg["overall"]["auc"]["mean"] == pytest.approx(np.mean(aucs))
    assert agg["overall"]["auc"]["std"] == pytest.approx(np.std(aucs, ddof=1))
    assert agg["per_scenario"][0]["auc"]["n"] == 3


# -------------------------------------------------------------------- welch

def test_welch_against_scipy():
    rng = np.random.default_rng(3)
    for _ in range(30):
        a = rng.normal(0.8, rng.uniform(.001, .01), rng.integers(2, 12))
        b = rng.normal(0.801, rng.uniform(.001, .01), rng.integers(2, 12))
        t, p = welch_ttest(a, b)
        ref = stats.ttest_ind(a, b, equal_var=False)
        assert t == pytest.approx(ref.statistic, rel=1e-9)
        assert p == pytest.approx(ref.pvalue, abs=1e-9)


def test_welch_degenerate_rules():
    assert welch_ttest([1, 1, 1], [1, 1]) == (0.0, 1.0)
    t, p = welch_ttest([2, 2], [1, 1, 1])
    assert p == 0.0 and t == math.inf
    with pytest.raises(ValueError):
        welch_ttest([1.0], [1.0, 2.0])


# ------------------------------------------------------------------- tables

def test_rank_flags():
    assert rank_flags([0.7, None, 0.9, 0.8]) == ["", "", "best", "second"]
    assert rank_flags([0.5, 0.4], higher_is_better=False) == ["second", "best"]
    assert rank_flags([None]) == [""]


def test_summary_tables():
    def agg(m, sd):
        return {"overall": {"auc": {"mean": m, "std": sd, "n": 3}, "logloss": {"mean": 1 - m, "std": sd, "n": 3}}}
    rows = summary_rows({"a": agg(.80, .01), "b": agg(.82, .002), "c": agg(.81, .0)},
                        {"a": {"p": 0.01, "significant": True}})
    assert [r["auc_flag"] for r in rows] == ["", "best", "second"]
    assert [r["logloss_flag"] for r in rows] == ["", "best", "second"]
    csv_text = rows_to_csv(rows)
    assert csv_text.splitlines()[0].startswith("model,auc_mean")
    txt = rows_to_text(rows)
    assert "0.8200±0.0020*" in txt and "0.01" in txt


def test_profile_counts_and_times(toy_ds):
    m = toy_model("mmoe", toy_ds.feature_space)
    tr, _, te = toy_ds.parts()
    rep = profile(m, tr, te, TrainConfig(batch_size=32))
    assert rep.param_count == m.param_count()
    assert rep.train_seconds_per_epoch > 0 and rep.inference_ms_per_batch > 0
    assert rep.batches == math.ceil(len(te) / 32)


def test_pairwise_oracle_itself():
    # the oracle against brute-force enumeration on a tiny case
    y = np.array([1, 0, 1, 0, 1])
    s = np.array([.3, .3, .9, .1, .2])
    wins = sum((a > b) + 0.5 * (a == b) for a, b in itertools.product(s[y == 1], s[y == 0]))
    assert pairwise_auc(y, s) == wins / 6
