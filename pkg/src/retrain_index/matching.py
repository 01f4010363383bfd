"""Propensity-score matching estimates of intervention effects on the index.

Treated periods are matched to the nearest control on the propensity scale
inside exact strata (program year by default), with replacement and a
caliper. Effects are IPW-weighted means of matched differences with
percentile bootstrap intervals over matched units.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import pandas as pd

from . import stats
from .reweight import covariate_levels, smd
from .stats import FeatureSpec

MATCH_FEATURES = FeatureSpec(
    categorical=("sex", "race_ethnicity", "education_level", "employment_status_at_entry",
                 "funding_stream", "state"),
    continuous=("age", "pre_wage_ihs"),
    binary=("low_income",),
    target=("pre_occ", "pre_naics3", "wdb_id"),
    smoothing=20.0,
)


@dataclass(frozen=True)
class MatchSpec:
    name: str = "received_training"
    treatment_field: str = "received_training"
    treatment_value: Any = True
    strata: tuple[str, ...] = ("program_year",)
    caliper: float = 0.1
    features: FeatureSpec = MATCH_FEATURES
    replacement: bool = True
    l2: float = stats.DEFAULT_L2

    def __post_init__(self):
        if not self.caliper > 0:
            raise ValueError("caliper must be positive")

    def treated(self, frame: pd.DataFrame) -> np.ndarray:
        col = frame[self.treatment_field]
        if isinstance(self.treatment_value, bool):
            return col.map(lambda v: (v is True) or (str(v).lower() == "true")).to_numpy(dtype=bool)
        return (col.astype(object) == self.treatment_value).to_numpy(dtype=bool)


APPRENTICESHIP = MatchSpec(name="registered_apprenticeship", treatment_field="training_service_type",
                           treatment_value="RegisteredApprenticeship")


@dataclass
class PropensityFit:
    p: np.ndarray
    treated: np.ndarray
    auc: float
    model: stats.LogisticModel


def fit_propensity(frame: pd.DataFrame, spec: MatchSpec) -> PropensityFit:
    t = spec.treated(frame)
    dm = stats.encode(frame, spec.features, y=t.astype(float))
    model = stats.fit_logistic(dm, t.astype(float), l2=spec.l2)
    p = stats.predict_proba(model, dm)
    return PropensityFit(p, t, stats.auc(p, t), model)


def strata_codes(frame: pd.DataFrame, keys) -> np.ndarray:
    if not keys:
        return np.zeros(len(frame), dtype=int)
    labels = frame[list(keys)].astype(str).agg("|".join, axis=1).to_numpy()
    _, codes = np.unique(labels, return_inverse=True)
    return codes


@dataclass
class MatchResult:
    pairs: pd.DataFrame  # treated, control (positional indices), distance, stratum
    unmatched: np.ndarray
    n_treated: int

    @property
    def n_pairs(self) -> int:
        return len(self.pairs)

    @property
    def match_rate(self) -> float:
        return self.n_pairs / self.n_treated if self.n_treated else float("nan")

    @property
    def duplicate_controls(self) -> int:
        return self.n_pairs - int(self.pairs["control"].nunique())


def _nearest_in(sorted_p, order, target):
    """Nearest position in a sorted control array; ties go to the lower propensity, then lower index."""
    pos = int(np.searchsorted(sorted_p, target, side="left"))
    best = None
    if pos > 0:
        v = sorted_p[pos - 1]
        first = int(np.searchsorted(sorted_p, v, side="left"))
        best = (target - v, first)
    if pos < sorted_p.size:
        d = sorted_p[pos] - target
        if best is None or d < best[0]:
            best = (d, pos)
    return best


def match(p, treated, strata=None, caliper: float = 0.1, replacement: bool = True) -> MatchResult:
    """Greedy nearest-neighbour matching of treated to control units.

    Treated units are visited in descending propensity order. A pair needs
    the same stratum code and ``|p_t - p_c| <= caliper``.
    """
    p = np.asarray(p, dtype=float)
    t = np.asarray(treated, dtype=bool)
    s = np.zeros(p.size, dtype=int) if strata is None else np.asarray(strata)
    rows = []
    unmatched = []
    for stratum in np.unique(s):
        in_s = s == stratum
        ti = np.flatnonzero(in_s & t)
        ci = np.flatnonzero(in_s & ~t)
        ti = ti[np.argsort(-p[ti], kind="stable")]
        if ci.size == 0:
            unmatched.extend(ti.tolist())
            continue
        order = ci[np.argsort(p[ci], kind="stable")]
        sp = p[order]
        if replacement:
            for i in ti:
                d, k = _nearest_in(sp, order, p[i])
                if d <= caliper:
                    rows.append((i, int(order[k]), abs(p[i] - sp[k]), stratum))
                else:
                    unmatched.append(i)
        else:
            used = np.zeros(order.size, dtype=bool)
            for i in ti:
                pos = int(np.searchsorted(sp, p[i], side="left"))
                lo, hi = pos - 1, pos
                while lo >= 0 and used[lo]:
                    lo -= 1
                if lo >= 0:  # lowest index among equal propensities
                    lo = int(np.searchsorted(sp, sp[lo], side="left"))
                    while used[lo]:
                        lo += 1
                while hi < sp.size and used[hi]:
                    hi += 1
                cands = [(p[i] - sp[lo], lo)] if lo >= 0 else []
                if hi < sp.size:
                    cands.append((sp[hi] - p[i], hi))
                if not cands:
                    unmatched.append(i)
                    continue
                d, k = min(cands)
                if d <= caliper:
                    used[k] = True
                    rows.append((i, int(order[k]), abs(p[i] - sp[k]), stratum))
                else:
                    unmatched.append(i)
    pairs = pd.DataFrame(rows, columns=["treated", "control", "distance", "stratum"])
    pairs = pairs.sort_values("treated", kind="stable").reset_index(drop=True)
    return MatchResult(pairs, np.sort(np.asarray(unmatched, dtype=int)), int(t.sum()))


# --------------------------------------------------------------------------
# effects
# --------------------------------------------------------------------------


def _weighted_effect(y_focal, y_match, w):
    return float(np.sum(w * (y_focal - y_match)) / np.sum(w))


@dataclass
class EffectEstimate:
    att: float
    att_ci: tuple[float, float]
    ate: float
    ate_ci: tuple[float, float]
    atc: float
    n_pairs: int
    n_reverse_pairs: int
    n_boot: int
    boot_att: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0))


def effects(att_pairs: pd.DataFrame, atc_pairs: pd.DataFrame | None, y, w=None, n_boot: int = 1000,
            seed: int = 0, level: float = 0.95, threads: int = 1) -> EffectEstimate:
    """ATT over treated-to-control pairs; ATE combines it with the mirrored control-to-treated match.

    ``atc_pairs`` uses the same column names with roles swapped: its
    ``treated`` column holds the focal control unit and ``control`` the
    matched treated unit.
    """
    y = np.asarray(y, dtype=float)
    w = np.ones_like(y) if w is None else np.asarray(w, dtype=float)
    if len(att_pairs) == 0:
        raise ValueError("no matched pairs")
    ft = att_pairs["treated"].to_numpy()
    mt = att_pairs["control"].to_numpy()
    d_t = y[ft] - y[mt]
    w_t = w[ft]
    if atc_pairs is not None and len(atc_pairs):
        fc = atc_pairs["treated"].to_numpy()
        mc = atc_pairs["control"].to_numpy()
        d_c = y[mc] - y[fc]
        w_c = w[fc]
    else:
        d_c = np.zeros(0)
        w_c = np.zeros(0)

    def estimate(it, ic):
        Wt = w_t[it].sum()
        att = float(np.sum(w_t[it] * d_t[it]) / Wt)
        if ic.size:
            Wc = w_c[ic].sum()
            atc = float(np.sum(w_c[ic] * d_c[ic]) / Wc)
            ate = (Wt * att + Wc * atc) / (Wt + Wc)
        else:
            atc, ate = float("nan"), att
        return att, atc, float(ate)

    att, atc, ate = estimate(np.arange(d_t.size), np.arange(d_c.size))

    def replicate(b):
        rng = np.random.default_rng([seed, b])
        it = rng.integers(0, d_t.size, size=d_t.size)
        ic = rng.integers(0, d_c.size, size=d_c.size) if d_c.size else np.zeros(0, dtype=int)
        a, _, e = estimate(it, ic)
        return a, e

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            reps = list(ex.map(replicate, range(n_boot)))
    else:
        reps = [replicate(b) for b in range(n_boot)]
    reps = np.asarray(reps, dtype=float).reshape(-1, 2)
    tail = 100 * (1 - level) / 2
    if n_boot:
        a_lo, a_hi = np.percentile(reps[:, 0], [tail, 100 - tail])
        e_lo, e_hi = np.percentile(reps[:, 1], [tail, 100 - tail])
    else:
        a_lo = a_hi = e_lo = e_hi = float("nan")
    return EffectEstimate(att, (float(a_lo), float(a_hi)), ate, (float(e_lo), float(e_hi)), atc,
                          int(d_t.size), int(d_c.size), n_boot, reps[:, 0])


# --------------------------------------------------------------------------
# diagnostics
# --------------------------------------------------------------------------


def love_plot_data(frame: pd.DataFrame, treated, result: MatchResult, covariates: FeatureSpec,
                   threshold: float = 0.1) -> pd.DataFrame:
    """SMD of treated vs control before matching and across matched pairs.

    Both columns use the pre-matching pooled standard deviation.
    """
    t = np.asarray(treated, dtype=bool)
    dm = stats.encode(frame, covariates, y=t.astype(float) if covariates.target else None)
    ft = result.pairs["treated"].to_numpy()
    mc = result.pairs["control"].to_numpy()
    rows = []
    for cov, level, j in covariate_levels(dm):
        x = dm.X[:, j]
        xt, xc = x[t], x[~t]
        if xt.size == 0 or xc.size == 0:
            continue
        scale = float(np.sqrt((xt.var() + xc.var()) / 2.0))
        before = smd(xt, xc, scale=scale)
        after = smd(x[ft], x[mc], scale=scale) if ft.size else None
        rows.append({"covariate": cov, "level": level,
                     "smd_before": np.nan if before is None else before,
                     "smd_after": np.nan if after is None else after})
    out = pd.DataFrame(rows, columns=["covariate", "level", "smd_before", "smd_after"])
    out["imbalanced_before"] = out["smd_before"].abs() >= threshold
    out["imbalanced_after"] = out["smd_after"].abs() >= threshold
    return out


def overlap_histogram(p, treated, bins: int = 20) -> pd.DataFrame:
    edges = np.linspace(0.0, 1.0, bins + 1)
    t = np.asarray(treated, dtype=bool)
    ct, _ = np.histogram(p[t], bins=edges)
    cc, _ = np.histogram(p[~t], bins=edges)
    return pd.DataFrame({"bin_lo": edges[:-1], "bin_hi": edges[1:], "treated": ct, "control": cc})


@dataclass
class MatchingRun:
    spec: MatchSpec
    propensity: PropensityFit
    result: MatchResult
    reverse: MatchResult
    estimate: EffectEstimate
    love: pd.DataFrame
    overlap: pd.DataFrame
    record_id: np.ndarray

    def effects_row(self) -> dict:
        e = self.estimate
        return {"intervention": self.spec.name, "n_pairs": e.n_pairs,
                "att": e.att, "att_ci_lo": e.att_ci[0], "att_ci_hi": e.att_ci[1],
                "ate": e.ate, "ate_ci_lo": e.ate_ci[0], "ate_ci_hi": e.ate_ci[1]}

    def diagnostics_row(self) -> dict:
        r = self.result
        return {"intervention": self.spec.name, "treated": r.n_treated, "matched": r.n_pairs,
                "match_rate": r.match_rate, "duplicate_controls": r.duplicate_controls,
                "auc": self.propensity.auc}

    def pairs_frame(self) -> pd.DataFrame:
        pr = self.result.pairs
        p = self.propensity.p
        return pd.DataFrame({
            "treated_id": self.record_id[pr["treated"].to_numpy()],
            "control_id": self.record_id[pr["control"].to_numpy()],
            "p_treated": p[pr["treated"].to_numpy()],
            "p_control": p[pr["control"].to_numpy()],
            "distance": pr["distance"].to_numpy(),
        })


def run_matching(frame: pd.DataFrame, y, spec: MatchSpec, w=None, n_boot: int = 1000, seed: int = 0,
                 level: float = 0.95, diagnostics_spec: FeatureSpec | None = None,
                 threads: int = 1) -> MatchingRun:
    """Fit propensities, match both directions, estimate effects and diagnostics.

    ``frame`` rows are the periods with an observed outcome ``y``.
    """
    prop = fit_propensity(frame, spec)
    codes = strata_codes(frame, spec.strata)
    fwd = match(prop.p, prop.treated, codes, spec.caliper, spec.replacement)
    rev = match(prop.p, ~prop.treated, codes, spec.caliper, spec.replacement)
    est = effects(fwd.pairs, rev.pairs, y, w, n_boot, seed, level, threads)
    love = love_plot_data(frame, prop.treated, fwd, diagnostics_spec or spec.features)
    return MatchingRun(spec, prop, fwd, rev, est, love, overlap_histogram(prop.p, prop.treated),
                       frame["record_id"].to_numpy())
