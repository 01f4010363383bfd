import json

import numpy as np
import pytest

from retrain_index import ingest, stats, synth
from retrain_index.synth import SynthConfig


def test_empty_dataset():
    ds = synth.generate(SynthConfig(n=0, seed=1))
    assert ds.records == [] and ds.prepared == []
    eff = synth.oracle_effects(ds.truth)
    assert eff["att"] is None and eff["ate"] is None


def test_invalid_config():
    with pytest.raises(ValueError):
        SynthConfig(n=-1)
    with pytest.raises(ValueError):
        SynthConfig(quarter_missing=1.0)
    with pytest.raises(ValueError):
        SynthConfig(funding_weights=(1.0,))


def test_same_seed_same_bytes(tmp_path):
    a = synth.write_dataset(synth.generate(SynthConfig(n=500, seed=9)), tmp_path / "a")
    b = synth.write_dataset(synth.generate(SynthConfig(n=500, seed=9)), tmp_path / "b")
    for key in a:
        assert a[key].read_bytes() == b[key].read_bytes(), key
    c = synth.write_dataset(synth.generate(SynthConfig(n=500, seed=10)), tmp_path / "c")
    assert a["records"].read_bytes() != c["records"].read_bytes()


def test_zero_effect():
    ds = synth.generate(SynthConfig(n=2000, seed=3, delta=0.0))
    assert ds.truth.wage_shift == 0.0
    for variant in ("occupation", "subsector"):
        assert synth.oracle_effects(ds.truth, variant)["att"] == 0.0


@pytest.mark.parametrize("delta", [0.02, 0.05, 0.1])
def test_effect_exact_records_carry_delta(delta):
    t = synth.generate(SynthConfig(n=3000, seed=4, delta=delta)).truth
    diff = t.y1["occupation"] - t.y0["occupation"]
    sel = t.effect_exact & ~np.isnan(diff)
    assert sel.sum() > 0.9 * (~np.isnan(diff)).sum()
    np.testing.assert_allclose(diff[sel], delta, atol=1e-12)
    # clamped records can only lose part of the effect
    rest = ~t.effect_exact & ~np.isnan(diff)
    assert np.all(diff[rest] <= delta + 1e-12)


def test_heterogeneous_truth_averages_to_att():
    t = synth.generate(SynthConfig(n=3000, seed=6)).truth
    eff = synth.oracle_effects(t)
    diff = t.y1["occupation"] - t.y0["occupation"]
    ok = t.kept & t.treated & ~np.isnan(diff)
    assert eff["att"] == pytest.approx(diff[ok].mean(), abs=1e-15)
    assert eff["att"] == pytest.approx(0.05, abs=0.002)


def test_no_treated_records():
    cfg = SynthConfig(n=300, seed=2)
    cfg.treatment = {"intercept": -60.0}
    ds = synth.generate(cfg)
    assert not ds.truth.treated.any()
    assert synth.oracle_effects(ds.truth)["att"] is None


def test_missingness_off_keeps_everything_calculable():
    t = synth.generate(SynthConfig(n=1000, seed=5, missingness_on=False)).truth
    assert t.calculable[t.kept].all() and t.missingness_coef == {}


def test_ground_truth_json_round_trip():
    ds = synth.generate(SynthConfig(n=200, seed=7))
    doc = json.loads(ds.truth.to_json())
    assert set(doc["records"]) == set(ds.truth.record_id)
    assert doc["dataset"]["group_order"][0] == "Adult"
    assert doc["dataset"]["education_mode"] == "HighSchool"


def test_written_records_reload(tmp_path):
    ds = synth.generate(SynthConfig(n=400, seed=8))
    paths = synth.write_dataset(ds, tmp_path)
    loaded, report = ingest.load_records(paths["records"])
    assert len(loaded) == len(ds.records) and not report.rejections


def test_planted_logistic_recovers_beta():
    beta = np.array([-0.5, 1.0, -0.8, 0.3])
    X, y = synth.planted_logistic(50_000, beta, seed=1)
    fit = stats.fit_logistic(X, y)
    np.testing.assert_allclose(fit.beta, beta, atol=0.05)
