"""Stabilised inverse-probability weights for the calculable subsample."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from . import stats
from .errors import DegenerateError
from .stats import FeatureSpec

IPW_FEATURES = FeatureSpec(
    categorical=(
        "sex",
        "race_ethnicity",
        "education_level",
        "employment_status_at_entry",
        "funding_stream",
        "program_year",
    ),
    continuous=("age",),
    binary=("low_income", "received_training"),
)
PROPENSITY_EPS = 1e-6
SMD_THRESHOLD = 0.1


def estimate_calculability(frame: pd.DataFrame, calculable, spec: FeatureSpec = IPW_FEATURES,
                           l2: float = stats.DEFAULT_L2, eps: float = PROPENSITY_EPS):
    """Logistic propensity of being calculable given pre-outcome covariates.

    Returns clipped propensities and the fitted model.
    """
    c = np.asarray(calculable, dtype=float)
    if c.sum() < 2 or (1 - c).sum() < 2:
        raise DegenerateError("calculability model needs at least two calculable and two non-calculable records")
    dm = stats.encode(frame, spec)
    model = stats.fit_logistic(dm, c, l2=l2)
    p = np.clip(stats.predict_proba(model, dm), eps, 1 - eps)
    return p, model


@dataclass
class WeightedSample:
    record_id: np.ndarray
    calculable: np.ndarray
    p_hat: np.ndarray
    w_hat: np.ndarray  # NaN for non-calculable records
    marginal_rate: float

    @property
    def weights(self) -> np.ndarray:
        """Weights of the calculable records, in frame order."""
        return self.w_hat[self.calculable]

    def summary(self) -> dict:
        w = self.weights
        q = np.percentile(w, [0, 25, 50, 75, 100]) if w.size else [np.nan] * 5
        return {
            "n_calculable": int(w.size),
            "n_total": int(self.calculable.size),
            "marginal_rate": self.marginal_rate,
            "mean": float(w.mean()) if w.size else float("nan"),
            "min": float(q[0]), "p25": float(q[1]), "median": float(q[2]),
            "p75": float(q[3]), "max": float(q[4]),
            "ess": ess(w) if w.size else float("nan"),
        }

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"record_id": self.record_id, "calculable": self.calculable,
                             "p_hat": self.p_hat, "w_hat": self.w_hat})


def stabilized_weights(propensities, calculable, record_id=None, cap: float | None = None) -> WeightedSample:
    p = np.asarray(propensities, dtype=float)
    c = np.asarray(calculable, dtype=bool)
    if np.any((p <= 0) | (p >= 1)):
        raise ValueError("propensities must lie strictly inside (0, 1)")
    rate = float(c.mean())
    w = np.full(p.shape, np.nan)
    w[c] = rate / p[c]
    if cap is not None:
        w[c] = np.minimum(w[c], cap)
    rid = np.asarray(record_id) if record_id is not None else np.arange(p.size).astype(str)
    return WeightedSample(rid, c, p, w, rate)


def ess(weights) -> float:
    """Kish effective sample size, (sum w)^2 / sum w^2.

    Sums are taken in exact rational arithmetic, so the result is the
    correctly rounded value and does not depend on summation order.
    """
    w = np.asarray(weights, dtype=float)
    if w.size == 0:
        raise ValueError("effective sample size of no weights")
    if np.any(w <= 0):
        raise ValueError("weights must be positive")
    # w_i = m_i * 2**e_i with integer m_i; the common 2**min(e) cancels in the ratio
    mant, exp = np.frexp(w)
    m = (mant * 2.0**53).astype(np.int64).tolist()
    sh = (exp - exp.min()).tolist()
    s = sum(mi << k for mi, k in zip(m, sh))
    s2 = sum((mi * mi) << (2 * k) for mi, k in zip(m, sh))
    return s * s / s2


def _wmean(x, w):
    return float(x.mean()) if w is None else float(np.sum(w * x) / np.sum(w))


def smd(a, b, w_a=None, w_b=None, scale: float | None = None) -> float | None:
    """Standardised mean difference of group ``a`` minus group ``b``.

    Means may be weighted; the denominator uses the unweighted group
    variances (or a fixed ``scale``) so that weighted and unweighted SMDs
    share one scale. ``None`` when the denominator is zero.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise ValueError("both groups must be non-empty")
    if scale is None:
        scale = float(np.sqrt((a.var() + b.var()) / 2.0))
    if scale <= 0:
        return None
    return (_wmean(a, w_a) - _wmean(b, w_b)) / scale


@dataclass
class BalanceReport:
    table: pd.DataFrame
    n_imbalanced_before: int
    n_imbalanced_after: int
    ess: float
    n_weighted: int
    threshold: float = SMD_THRESHOLD


def covariate_levels(dm: stats.DesignMatrix) -> list[tuple[str, str, int]]:
    """(covariate, level, column) for every design column."""
    out = []
    for j, col in enumerate(dm.columns):
        if "=" in col:
            cov, level = col.split("=", 1)
        else:
            cov, level = col, ""
        out.append((cov, level, j))
    return out


def balance_table(dm: stats.DesignMatrix, in_a, in_b, w_a=None, threshold: float = SMD_THRESHOLD) -> pd.DataFrame:
    """Per-level SMD of group A vs group B, unweighted and with A weighted by ``w_a``."""
    in_a = np.asarray(in_a, dtype=bool)
    in_b = np.asarray(in_b, dtype=bool)
    rows = []
    for cov, level, j in covariate_levels(dm):
        xa, xb = dm.X[in_a, j], dm.X[in_b, j]
        before = smd(xa, xb)
        after = smd(xa, xb, w_a=w_a) if w_a is not None else before
        rows.append({
            "covariate": cov,
            "level": level,
            "smd_before": np.nan if before is None else before,
            "smd_after": np.nan if after is None else after,
        })
    t = pd.DataFrame(rows, columns=["covariate", "level", "smd_before", "smd_after"])
    t["imbalanced_before"] = t["smd_before"].abs() >= threshold
    t["imbalanced_after"] = t["smd_after"].abs() >= threshold
    return t


def balance_report(frame: pd.DataFrame, sample: WeightedSample, spec: FeatureSpec = IPW_FEATURES,
                   threshold: float = SMD_THRESHOLD) -> BalanceReport:
    """Calculable subsample (raw, then weighted) against the full restricted sample."""
    dm = stats.encode(frame, spec)
    everyone = np.ones(len(frame), dtype=bool)
    t = balance_table(dm, sample.calculable, everyone, sample.weights, threshold)
    return BalanceReport(
        t,
        int(t["imbalanced_before"].sum()),
        int(t["imbalanced_after"].sum()),
        ess(sample.weights),
        int(sample.calculable.sum()),
        threshold,
    )


def weight_histogram(weights, bins: int = 40) -> pd.DataFrame:
    counts, edges = np.histogram(np.asarray(weights, dtype=float), bins=bins)
    return pd.DataFrame({"bin_lo": edges[:-1], "bin_hi": edges[1:], "count": counts})


def reweight(frame: pd.DataFrame, scores: pd.DataFrame, spec: FeatureSpec = IPW_FEATURES,
             l2: float = stats.DEFAULT_L2, cap: float | None = None):
    """Propensity fit, weights and balance for one score variant; rows aligned on record_id."""
    calc = frame[["record_id"]].merge(scores[["record_id", "calculable"]], on="record_id", how="left")
    c = calc["calculable"].fillna(False).to_numpy(dtype=bool)
    p, model = estimate_calculability(frame, c, spec, l2)
    sample = stabilized_weights(p, c, frame["record_id"].to_numpy(), cap)
    return sample, balance_report(frame, sample, spec), model
