import numpy as np
import pandas as pd
import pytest

from retrain_index import aggregate, index, ingest, reweight, stats, synth
from retrain_index.errors import DegenerateError

from conftest import analysis_frame


def test_incidence_intensity_arithmetic():
    s = aggregate.summarize([0.2, -0.1], None)
    assert (s["incidence"], s["intensity"], s["i_g"]) == (0.5, 0.2, 0.1)


def test_all_non_positive_group():
    s = aggregate.summarize([0.0, -0.1, -0.3], None)
    assert s["incidence"] == 0.0 and s["i_g"] == 0.0 and np.isnan(s["intensity"])


def test_weight_homogeneity():
    r = np.random.default_rng(0)
    x, w = r.normal(size=50), r.random(50) + 0.1
    a, b = aggregate.summarize(x, w), aggregate.summarize(x, 2 * w)
    for k in ("incidence", "intensity", "i_g", "mean_i_n"):
        assert a[k] == pytest.approx(b[k], rel=1e-14)


def _data(small_frame, small_scores, weights=True):
    scores, _ = small_scores
    d = analysis_frame(small_frame, scores)
    if weights:
        s, _, _ = reweight.reweight(small_frame, scores[scores["variant"] == "occupation"])
        d["weight"] = s.w_hat
    return aggregate.add_bins(d)


def test_group_identity_and_unit_weights(small_frame, small_scores):
    d = _data(small_frame, small_scores)
    d["one"] = 1.0
    for name, t in aggregate.subgroup_tables(d, min_group_size=0).items():
        ok = t["weighted_n"] > 0
        prod = (t["incidence"] * t["intensity"]).fillna(0.0)
        assert np.all(np.abs(t.loc[ok, "i_g"] - prod[ok]) <= 1e-12), name
    for col in ("state", "funding_stream", "wdb_id"):
        a = aggregate.group_index(d, col, "one", 0)
        b = aggregate.group_index(d, col, None, 0)
        pd.testing.assert_frame_equal(a, b)


def test_partition_additivity_and_coverage(small_frame, small_scores):
    d = _data(small_frame, small_scores)
    t = aggregate.group_index(d, "state", "weight", 0)
    total = d.loc[d["calculable"], "weight"].sum()
    assert t["weighted_n"].sum() == pytest.approx(total, rel=1e-12)
    assert t["n_total"].sum() == len(d)
    assert np.all((t["pct_with_index"] >= 0) & (t["pct_with_index"] <= 1))


def test_single_group_matches_full_set(small_frame, small_scores):
    d = _data(small_frame, small_scores)
    d["all"] = "everyone"
    row = aggregate.group_index(d, "all", "weight", 0).iloc[0]
    c = d[d["calculable"]]
    s = aggregate.summarize(c["i_n"], c["weight"])
    assert row["i_g"] == s["i_g"] and row["incidence"] == s["incidence"]


def test_suppression(small_frame, small_scores):
    d = _data(small_frame, small_scores)
    t = aggregate.group_index(d, "wdb_id", "weight", 100)
    small = t["n_periods"] < 100
    assert small.any()
    assert t.loc[small, ["incidence", "intensity", "i_g"]].isna().all().all()
    assert t.loc[small, "suppressed"].all() and not t.loc[~small, "suppressed"].any()
    previous = None
    for m in (200, 150, 100, 50, 0):
        n_sup = int(aggregate.group_index(d, "wdb_id", "weight", m)["suppressed"].sum())
        assert previous is None or n_sup <= previous
        previous = n_sup


def test_missing_label_and_order(small_frame, small_scores):
    d = _data(small_frame, small_scores)
    t = aggregate.group_index(d, "education_level", "weight", 0)
    assert "Missing" in set(t["group"]) and list(t["group"]) == sorted(t["group"])


def test_age_bins_and_rti_bins(small_frame, small_scores, small_ds):
    d = _data(small_frame, small_scores)
    lv = index.task_levels(d, small_ds.book, "occupation")
    d = aggregate.add_bins(d, 5, 4, pd.DataFrame(lv))
    assert set(d["pre_rti_c_bin"].dropna()) <= {"Q1", "Q2", "Q3", "Q4"}
    ages = d["age"].dropna()
    assert set(d.loc[ages.index, "age_bin"]) == {str(int(a // 5 * 5)) for a in ages}


def test_latex_rows(small_frame, small_scores):
    d = _data(small_frame, small_scores)
    t = aggregate.group_index(d, "sex", "weight", 100)
    tex = aggregate.to_latex(t)
    assert tex.count(r"\\") == len(t) and tex.splitlines()[0].count("&") == 7


def test_planted_group_ordering():
    ds = synth.generate(synth.SynthConfig(n=100_000, seed=2024))
    frame = ingest.records_to_frame(ds.prepared)
    scores, _ = index.score_all(frame, ds.book)
    occ = scores[scores["variant"] == "occupation"]
    s, _, _ = reweight.reweight(frame, occ)
    d = analysis_frame(frame, scores)
    d["weight"] = s.w_hat
    t = aggregate.group_index(d, "funding_stream", "weight", 100)
    ranked = list(t.sort_values("incidence", ascending=False)["group"])
    assert ranked == ds.truth.group_order


# ---------------------------------------------------------------- transitions


def test_transition_identity_and_rows():
    x = np.random.default_rng(1).normal(size=1000)
    tm = aggregate.quartile_transition_matrix(x, x)
    np.testing.assert_allclose(np.diag(tm.percent), 100.0)
    assert np.all(np.abs(tm.percent.sum(axis=1) - 100) <= 1e-9)


def test_transition_independent():
    r = np.random.default_rng(2)
    tm = aggregate.quartile_transition_matrix(r.normal(size=100_000), r.normal(size=100_000))
    assert np.all(np.abs(tm.percent - 25.0) <= 2.0)
    assert np.all(np.abs(tm.percent.sum(axis=1) - 100) <= 1e-9)


def test_transition_hand_count():
    pre = np.arange(1.0, 9.0)
    post = np.array([1.0, 5, 2, 6, 3, 7, 4, 8])
    tm = aggregate.quartile_transition_matrix(pre, post)
    expected = np.array([[50, 0, 50, 0], [50, 0, 50, 0], [0, 50, 0, 50], [0, 50, 0, 50]], dtype=float)
    np.testing.assert_array_equal(tm.percent, expected)
    np.testing.assert_array_equal(tm.deviation, expected - 25)


def test_transition_weighted_and_degenerate():
    w = np.array([1, 3, 1, 1, 1, 1, 1, 1], dtype=float)
    pre = np.arange(1.0, 9.0)
    post = np.array([1.0, 5, 2, 6, 3, 7, 4, 8])
    tm = aggregate.quartile_transition_matrix(pre, post, w)
    assert tm.percent[0, 2] == 75.0
    d = aggregate.quartile_transition_matrix(np.ones(4), np.arange(4.0))
    assert d.degenerate_pre and np.all(d.percent[0] == 25.0)
    with pytest.raises(DegenerateError):
        aggregate.quartile_transition_matrix([], [])


# ---------------------------------------------------------------- binscatter


def test_binscatter_diagonal():
    x = np.arange(20.0)
    bs = aggregate.binscatter(x, x, 4)
    np.testing.assert_array_equal(bs.bins["x_mean"], bs.bins["y_mean"])
    assert bs.fit.slope == pytest.approx(1.0) and list(bs.bins["n"]) == [5, 5, 5, 5]


def test_binscatter_constant_and_consistency():
    x = np.random.default_rng(3).normal(size=200)
    assert aggregate.binscatter(x, np.full(200, 2.0), 10).fit.slope == 0.0
    y = 0.5 * x + np.random.default_rng(4).normal(size=200)
    assert tuple(aggregate.binscatter(x, y, 10).fit) == tuple(stats.ols(x, y))
    with pytest.raises(ValueError):
        aggregate.binscatter(x, y, 1)
    with pytest.raises(ValueError):
        aggregate.binscatter(x[:3], y[:3], 4)
