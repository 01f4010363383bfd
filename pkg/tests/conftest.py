import numpy as np
import pandas as pd
import pytest

from retrain_index import index, ingest, synth


@pytest.fixture(scope="session")
def small_ds():
    return synth.generate(synth.SynthConfig(n=3000, seed=11))


@pytest.fixture(scope="session")
def small_written(small_ds, tmp_path_factory):
    d = tmp_path_factory.mktemp("synth")
    return synth.write_dataset(small_ds, d)


@pytest.fixture(scope="session")
def small_frame(small_ds):
    return ingest.records_to_frame(small_ds.prepared)


@pytest.fixture(scope="session")
def small_scores(small_frame, small_ds):
    scores, ctx = index.score_all(small_frame, small_ds.book)
    return scores, ctx


def analysis_frame(frame: pd.DataFrame, scores: pd.DataFrame, variant: str = "occupation") -> pd.DataFrame:
    s = scores[scores["variant"] == variant]
    out = frame.merge(s[["record_id", "i_w", "i_c", "i_m", "i_n", "calculable"]], on="record_id")
    out["pre_wage_ihs"] = index.ihs_means(out, "pre")
    return out


def rng(seed=0):
    return np.random.default_rng(seed)
