import numpy as np
import pandas as pd
import pytest

from retrain_index import sensitivity


def frame(n=400, seed=0, agree=None):
    r = np.random.default_rng(seed)
    i_w = r.uniform(-0.5, 0.8, n)
    if agree is None:
        i_c, i_m = r.uniform(-0.5, 0.5, n), r.uniform(-0.5, 0.5, n)
    else:
        i_c = -agree * i_w + r.normal(0, 0.05, n)
        i_m = -agree * i_w + r.normal(0, 0.05, n)
    return pd.DataFrame({
        "record_id": [f"r{i:04d}" for i in range(n)],
        "i_w": i_w, "i_c": i_c, "i_m": i_m,
        "state": r.choice(list("ABCDEFGH"), n),
        "pair": r.choice(["x", "y"], n),
        "one": "only",
    })


GROUPS = {"participation_period": None, "state": "state"}


def test_percentile_shift_cases():
    assert np.all(sensitivity.percentile_shift([1, 2, 3], [1, 2, 3]) == 0)
    np.testing.assert_array_equal(sensitivity.percentile_shift([1, 2, 3], [3, 2, 1]), [1, 0, 1])
    np.testing.assert_array_equal(sensitivity.percentile_shift([1, 2, 3, 4, 5], [1, 3, 2, 4, 5]),
                                  [0, 0.25, 0.25, 0, 0])
    with pytest.raises(ValueError):
        sensitivity.percentile_shift([1, 2], [1, 2, 3])


def test_single_driver_is_stable():
    d = frame()
    d["i_c"] = 0.0
    d["i_m"] = 0.0
    rep = sensitivity.run_sensitivity(d, GROUPS, n_sims=500, sample_frac=1.0, seed=3)
    assert (rep.table["mean_rho"] == 1.0).all() and (rep.table["max_shift"] == 0.0).all()
    assert len(rep.draws) == 500


def test_two_groups_only_plus_minus_one():
    rep = sensitivity.run_sensitivity(frame(), {"pair": "pair"}, n_sims=200, sample_frac=1.0, seed=1)
    assert set(rep.per_sim["rho"].unique()) <= {-1.0, 1.0}


def test_single_group_is_undefined():
    rep = sensitivity.run_sensitivity(frame(), {"one": "one"}, n_sims=5, sample_frac=1.0, seed=1)
    assert np.isnan(rep.table.loc[0, "mean_rho"]) and rep.table.loc[0, "n_groups"] == 1


def test_disagreement_lowers_rho():
    aligned = sensitivity.run_sensitivity(frame(agree=1.0), GROUPS, 200, 1.0, seed=5).table
    orthogonal = sensitivity.run_sensitivity(frame(), GROUPS, 200, 1.0, seed=5).table
    assert (aligned["mean_rho"].to_numpy() > orthogonal["mean_rho"].to_numpy()).all()


def test_report_ranges():
    rep = sensitivity.run_sensitivity(frame(), GROUPS, 50, 0.5, seed=2)
    t = rep.table
    assert ((t["mean_rho"] >= -1) & (t["mean_rho"] <= 1)).all()
    assert ((t["max_shift"] >= 0) & (t["max_shift"] <= 1)).all()
    assert rep.n_sampled == 200


def test_replay_and_determinism():
    d = frame(1000)
    a = sensitivity.run_sensitivity(d, GROUPS, 40, 0.1, seed=9)
    b = sensitivity.run_sensitivity(d.sample(frac=1.0, random_state=1), GROUPS, 40, 0.1, seed=9, threads=4)
    assert a.table.to_csv() == b.table.to_csv()
    assert a.replay_json() == b.replay_json()
    w, rows = sensitivity.replay(d, GROUPS, 9, 17, 0.1)
    np.testing.assert_array_equal(w, a.draws[17]["weights"])
    expect = a.per_sim[a.per_sim["sim"] == 17].to_dict("records")
    assert rows == expect


def test_weights_respect_orientation():
    w = sensitivity.draw_weights(0, 0)
    assert np.all(w > 0) and abs(w.sum() - 1) < 1e-12
