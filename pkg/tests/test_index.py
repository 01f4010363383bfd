import math
import time

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from retrain_index import index, ingest, synth
from retrain_index.errors import DegenerateError
from retrain_index.ingest import ParticipationRecord, TaskIntensityBook


def prepared(rid, pre, post, pre_occ=None, post_occ=None, pre_n=None, post_n=None):
    import datetime as dt
    pre = (list(pre) + [None] * 3)[:3]
    post = (list(post) + [None] * 4)[:4]
    return ParticipationRecord(rid, 2019, "AL", "W", "Adult", False, "Employed", False, dt.date(2020, 1, 1),
                               tuple(pre), tuple(post), pre_occ=pre_occ, post_occ=post_occ,
                               pre_naics3=pre_n, post_naics3=post_n,
                               real_pre_wages=tuple(pre), real_post_wages=tuple(post))


# ---------------------------------------------------------------- wages


def test_ihs_mean_wage_cases():
    assert index.ihs_mean_wage([0.0, 0.0, 0.0]) == 0.0
    assert index.ihs_mean_wage([None, 1000.0, None]) == pytest.approx(7.600902709541988, abs=1e-15)
    assert index.ihs_mean_wage([]) is None
    assert index.ihs_mean_wage([None, None]) is None


def test_build_normalization_basic():
    ctx = index.build_normalization([0.0, 10.0], winsor=None)
    assert (ctx.min, ctx.max, ctx.degenerate) == (0.0, 10.0, False)
    assert index.normalize(0.0, ctx) == 0.0 and index.normalize(10.0, ctx) == 1.0
    assert index.normalize(5.0, ctx) == 0.5


def test_outlier_is_winsorized():
    pool = np.random.default_rng(0).normal(size=1000)
    pool[17] = 1e6
    ctx = index.build_normalization(pool)
    assert ctx.max == pytest.approx(np.percentile(pool, 99), abs=0) and ctx.max < 1e6
    assert ctx.min == np.percentile(pool, 1)
    assert index.normalize(1e6, ctx) == 1.0


def test_constant_pool_is_degenerate():
    ctx = index.build_normalization([5.0, 5.0, 5.0])
    assert ctx.degenerate
    np.testing.assert_array_equal(index.normalize([1.0, 5.0, 9.0], ctx), [0.5, 0.5, 0.5])
    with pytest.raises(DegenerateError):
        index.build_normalization([])


def test_wage_subcomponent_identity_and_extremes():
    ctx = index.build_normalization([math.asinh(100.0), math.asinh(1000.0)], winsor=None)
    assert index.wage_subcomponent(prepared("a", [500.0], [500.0]), ctx) == 0.0
    assert index.wage_subcomponent(prepared("a", [100.0], [1000.0]), ctx) == 1.0
    assert index.wage_subcomponent(prepared("a", [None], [1000.0]), ctx) is None


def test_three_record_toy_population():
    recs = [prepared("1", [100.0], [200.0]), prepared("2", [500.0], [500.0]), prepared("3", [1000.0], [800.0])]
    pool = [index.ihs_mean_wage(r.real_pre_wages) for r in recs] + [index.ihs_mean_wage(r.real_post_wages) for r in recs]
    ctx = index.build_normalization(pool, winsor=None)
    # (asinh 200 - asinh 100) / (asinh 1000 - asinh 100), evaluated by hand
    assert index.wage_subcomponent(recs[0], ctx) == pytest.approx(0.3010250885565718, abs=1e-15)


# ---------------------------------------------------------------- task intensity

FIVE = {"cashier": (1.5, 0.4), "nurse": (-0.5, -0.2), "clerk": (0.2, 0.9), "analyst": (-1.0, -0.6),
        "driver": (0.9, 0.1)}


def five_book():
    return TaskIntensityBook(FIVE, {(s, "445"): 1.0 for s in FIVE})


def test_occupation_identity_and_extremes():
    book = TaskIntensityBook({"A": (-1.0, 0.0), "B": (1.0, 0.0)}, {})
    c = index.build_normalization([-1.0, 1.0], winsor=None)
    m = index.build_normalization([0.0, 0.0], winsor=None)
    assert index.rti_subcomponents_occupation(prepared("x", [1], [1], "A", "A"), book, c, m) == (0.0, 0.0)
    i_c, _ = index.rti_subcomponents_occupation(prepared("x", [1], [1], "A", "B"), book, c, m)
    assert i_c == 1.0
    assert index.rti_subcomponents_occupation(prepared("x", [1], [1], "A", None), book, c, m) is None


def test_five_occupation_hand_value():
    book = five_book()
    c = index.build_normalization([v[0] for v in FIVE.values()], winsor=None)
    m = index.build_normalization([v[1] for v in FIVE.values()], winsor=None)
    i_c, i_m = index.rti_subcomponents_occupation(prepared("x", [1], [1], "cashier", "nurse"), book, c, m)
    # cognitive pool [-1, 1.5]: 0.5/2.5 - 2.5/2.5 ; manual pool [-0.6, 0.9]: 0.4/1.5 - 1.0/1.5
    assert i_c == pytest.approx(-0.8, abs=1e-12)
    assert i_m == pytest.approx(-0.4, abs=1e-12)


def test_subsector_rollup_and_collapse():
    rti = {"o1": (1.0, 0.2), "o2": (-1.0, 0.6), "o3": (0.6, -0.4)}
    book = TaskIntensityBook(rti, {("o1", "311"): 100.0, ("o2", "311"): 300.0, ("o3", "622"): 50.0})
    assert book.subsector_rti["311"] == pytest.approx((0.25 * 1.0 + 0.75 * -1.0, 0.25 * 0.2 + 0.75 * 0.6))
    assert book.subsector_rti["622"] == rti["o3"]
    c = index.build_normalization([-0.5, 0.6], winsor=None)
    m = index.build_normalization([0.5, -0.4], winsor=None)
    rec = prepared("x", [1], [1], "o1", "o3", "311", "622")
    i_c, i_m = index.rti_subcomponents_subsector(rec, book, c, m)
    assert i_c == pytest.approx(1.0) and i_m == pytest.approx(-1.0)
    same = prepared("x", [1], [1], pre_n="311", post_n="311")
    assert index.rti_subcomponents_subsector(same, book, c, m) == (0.0, 0.0)
    # single-occupation subsector equals the occupation variant
    single = prepared("y", [1], [1], "o3", "o3", "622", "622")
    assert index.rti_subcomponents_subsector(single, book, c, m) == index.rti_subcomponents_occupation(single, book, c, m)


# ---------------------------------------------------------------- composite


def test_composite_cases():
    assert index.composite("a", "occupation", 0.0, 0.0, 0.0).i_n == 0.0
    assert index.composite("a", "occupation", 1.0, -1.0, -1.0).i_n == 1.0
    assert index.composite("a", "occupation", 0.2, 0.1, -0.3).i_n == pytest.approx(0.15, abs=1e-15)
    miss = index.composite("a", "occupation", 0.2, None, 0.1)
    assert not miss.calculable and miss.i_n is None and "missing_i_c" in miss.reason


def test_weights_renormalised_with_fixed_signs():
    a = index.combine(0.3, 0.1, 0.2, (2.0, 1.0, 1.0))
    b = index.combine(0.3, 0.1, 0.2, (-0.5, 0.25, -0.25))
    assert a == pytest.approx(0.5 * 0.3 - 0.25 * 0.1 - 0.25 * 0.2) and b == a


@settings(max_examples=200, deadline=None)
@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1))
def test_composite_identity_and_bounds(i_w, i_c, i_m):
    i_n = index.combine(i_w, i_c, i_m)
    assert abs(i_n - (0.5 * i_w - 0.25 * i_c - 0.25 * i_m)) <= 1e-12
    assert -1.0 <= i_n <= 1.0


# ---------------------------------------------------------------- frame scoring


def test_reasons_and_calculability(small_scores):
    scores, _ = small_scores
    occ = scores[scores["variant"] == "occupation"]
    assert (occ["calculable"] == (occ["reason"] == "")).all()
    assert occ.loc[~occ["calculable"], "i_n"].isna().all()
    reasons = set(";".join(occ["reason"]).split(";")) - {""}
    assert reasons <= {"missing_pre_occ", "missing_post_occ"}


def test_cpi_exclusion_reason():
    frame = ingest.records_to_frame([ingest.ParticipationRecord(
        **{**prepared("a", [1.0], [2.0]).__dict__, "real_pre_wages": None, "real_post_wages": None,
           "exclusion": "cpi_year_missing:2019"}), prepared("b", [1.0, 3.0, 4.0], [2.0, 2.0, 2.0, 2.0])])
    book = five_book()
    ctx = index.IndexContexts(index.build_normalization([0.0, 3.0]), None, None, None, None)
    s = index.compute_scores(frame, book, ctx, "occupation")
    assert s.loc[0, "reason"].startswith("cpi_year_missing")


def test_frame_scores_match_single_record_api(small_ds, small_frame, small_scores):
    scores, ctx = small_scores
    by = scores.set_index(["record_id", "variant"])
    for r in small_ds.prepared[:200]:
        for v in index.VARIANTS:
            one = index.score_record(r, small_ds.book, ctx, v)
            row = by.loc[(r.record_id, v)]
            assert one.calculable == row["calculable"]
            if one.calculable:
                assert one.i_n == pytest.approx(row["i_n"], abs=1e-14)


def test_oracle_agreement_and_order_independence(small_ds, small_frame, small_scores):
    scores, _ = small_scores
    orc = synth.oracle_index(small_ds.prepared, small_ds.book)
    calc = scores[scores["calculable"]]
    assert len(calc) == sum(len(v) for v in orc.values())
    for rid, v, a, b, c, d in calc[["record_id", "variant", "i_w", "i_c", "i_m", "i_n"]].itertuples(index=False):
        assert np.max(np.abs(np.subtract(orc[rid][v], (a, b, c, d)))) < 1e-10
    perm = list(reversed(small_ds.prepared))
    again = synth.oracle_index(perm, small_ds.book)
    assert again == orc
    shuffled = small_frame.sample(frac=1.0, random_state=3).reset_index(drop=True)
    s2, _ = index.score_all(shuffled, small_ds.book)
    a = scores.set_index(["record_id", "variant"]).sort_index()
    b = s2.set_index(["record_id", "variant"]).sort_index()
    pd.testing.assert_frame_equal(a, b)


def test_zero_change_records_score_zero(small_ds):
    recs = [prepared(str(i), [1000.0 * (i + 1)], [1000.0 * (i + 1)], "cashier", "cashier", "445", "445")
            for i in range(5)] + [prepared("z", [10.0], [50000.0], "cashier", "nurse", "445", "445")]
    book = five_book()
    frame = ingest.records_to_frame(recs)
    scores, _ = index.score_all(frame, book)
    zero = scores[scores["record_id"] != "z"]
    assert (zero[["i_w", "i_c", "i_m", "i_n"]].to_numpy() == 0.0).all()
    orc = synth.oracle_index(recs, book)
    assert all(v == (0.0, 0.0, 0.0, 0.0) for rid, d in orc.items() if rid != "z" for v in d.values())


def test_subsector_proxy():
    ids = [str(i) for i in range(5)]
    d = np.linspace(-0.5, 0.5, 5)
    occ = pd.DataFrame({"record_id": ids, "i_c": d, "i_m": 2 * d, "calculable": True})
    sub = pd.DataFrame({"record_id": ids, "i_c": d, "i_m": 2 * d, "calculable": True})
    rep = index.validate_subsector_proxy(occ, sub)
    assert rep["cognitive"]["slope"] == pytest.approx(1.0) and rep["cognitive"]["intercept"] == pytest.approx(0.0)
    assert rep["manual"]["r2"] == pytest.approx(1.0)
    sub["i_c"] = 0.1
    with pytest.raises(DegenerateError, match="degenerate regressor"):
        index.validate_subsector_proxy(occ, sub)


def test_scoring_10k_is_fast():
    ds = synth.generate(synth.SynthConfig(n=10_000, seed=5))
    frame = ingest.records_to_frame(ds.prepared)
    t0 = time.perf_counter()
    index.score_all(frame, ds.book)
    assert time.perf_counter() - t0 < 10.0
