"""Per-period Retrainability Index.

Wage change uses the IHS of mean real quarterly wages; task change uses
routine cognitive / manual intensities of the pre and post occupation
(occupation variant) or of the 3-digit subsector (subsector variant).
Every level is winsorised and min-max scaled against a pool of pre and post
values that is built once per dataset and then frozen.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from . import stats
from .errors import DegenerateError
from .ingest import WAGE_COLUMNS, ParticipationRecord, TaskIntensityBook

VARIANTS = ("occupation", "subsector")
DEFAULT_WEIGHTS = (0.5, 0.25, 0.25)
DEFAULT_WINSOR = (1.0, 99.0)
SCORE_COLUMNS = ["record_id", "variant", "i_w", "i_c", "i_m", "i_n", "calculable", "reason"]

_PRE_WAGE = [f"real_{c}" for c in WAGE_COLUMNS if "pre" in c]
_POST_WAGE = [f"real_{c}" for c in WAGE_COLUMNS if "post" in c]


def ihs_mean_wage(wages: Sequence[float | None]) -> float | None:
    """asinh of the mean over the quarters that are present."""
    present = [w for w in wages if w is not None and not math.isnan(w)]
    if not present:
        return None
    return math.asinh(sum(present) / len(present))


def ihs_means(frame: pd.DataFrame, side: str) -> np.ndarray:
    cols = _PRE_WAGE if side == "pre" else _POST_WAGE
    w = frame[cols].to_numpy(dtype=float)
    cnt = np.sum(~np.isnan(w), axis=1)
    tot = np.nansum(w, axis=1)
    out = np.full(len(frame), np.nan)
    ok = cnt > 0
    out[ok] = np.arcsinh(tot[ok] / cnt[ok])
    return out


@dataclass(frozen=True)
class NormalizationContext:
    lo: float
    hi: float
    min: float
    max: float
    degenerate: bool
    winsor: tuple[float, float] | None = DEFAULT_WINSOR
    name: str = ""

    def to_dict(self) -> dict:
        return {"name": self.name, "lo": self.lo, "hi": self.hi, "min": self.min, "max": self.max,
                "degenerate": self.degenerate, "winsor": list(self.winsor) if self.winsor else None}


def build_normalization(values, winsor=DEFAULT_WINSOR, name: str = "") -> NormalizationContext:
    v = np.asarray(values, dtype=float)
    v = v[np.isfinite(v)]
    if v.size == 0:
        raise DegenerateError(f"empty normalization pool {name!r}".strip())
    if winsor is None:
        lo, hi = float(v.min()), float(v.max())
    else:
        lo, hi = (float(x) for x in stats.percentile(v, list(winsor)))
    clamped = np.clip(v, lo, hi)
    mn, mx = float(clamped.min()), float(clamped.max())
    return NormalizationContext(lo, hi, mn, mx, degenerate=not mx > mn,
                                winsor=tuple(winsor) if winsor else None, name=name)


def normalize(v, ctx: NormalizationContext):
    """Clamp to the context range and scale to [0, 1]. NaN passes through."""
    arr = np.asarray(v, dtype=float)
    if ctx.degenerate:
        out = np.where(np.isnan(arr), np.nan, 0.5)
    else:
        out = (np.clip(arr, ctx.min, ctx.max) - ctx.min) / (ctx.max - ctx.min)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class IndexContexts:
    wage: NormalizationContext
    occ_c: NormalizationContext | None
    occ_m: NormalizationContext | None
    sub_c: NormalizationContext | None
    sub_m: NormalizationContext | None

    def to_dict(self) -> dict:
        return {k: (v.to_dict() if v else None) for k, v in self.__dict__.items()}


def _lookup(codes: Sequence, table: Mapping[str, tuple[float, float]], k: int) -> np.ndarray:
    out = np.full(len(codes), np.nan)
    for i, c in enumerate(codes):
        if c is not None and c in table:
            out[i] = table[c][k]
    return out


def task_levels(frame: pd.DataFrame, book: TaskIntensityBook, variant: str) -> dict[str, np.ndarray]:
    """Pre/post routine cognitive and manual levels per row (NaN where unavailable)."""
    if variant == "occupation":
        pre, post, table = frame["pre_occ"].tolist(), frame["post_occ"].tolist(), book.occ_rti
    elif variant == "subsector":
        pre, post, table = frame["pre_naics3"].tolist(), frame["post_naics3"].tolist(), book.subsector_rti
    else:
        raise ValueError(f"unknown variant {variant!r}")
    return {
        "pre_c": _lookup(pre, table, 0),
        "post_c": _lookup(post, table, 0),
        "pre_m": _lookup(pre, table, 1),
        "post_m": _lookup(post, table, 1),
    }


def _usable(frame: pd.DataFrame) -> np.ndarray:
    if "exclusion" not in frame.columns:
        return np.ones(len(frame), dtype=bool)
    return frame["exclusion"].isna().to_numpy()


def build_contexts(frame: pd.DataFrame, book: TaskIntensityBook, winsor=DEFAULT_WINSOR) -> IndexContexts:
    ok = _usable(frame)
    wage_pool = np.concatenate([ihs_means(frame, "pre")[ok], ihs_means(frame, "post")[ok]])
    ctx = {"wage": build_normalization(wage_pool, winsor, "wage")}
    for variant, prefix in (("occupation", "occ"), ("subsector", "sub")):
        lv = task_levels(frame, book, variant)
        for ch in ("c", "m"):
            pool = np.concatenate([lv[f"pre_{ch}"][ok], lv[f"post_{ch}"][ok]])
            pool = pool[~np.isnan(pool)]
            ctx[f"{prefix}_{ch}"] = build_normalization(pool, winsor, f"{prefix}_{ch}") if pool.size else None
    return IndexContexts(**ctx)


def normalized_weights(weights=DEFAULT_WEIGHTS) -> tuple[float, float, float]:
    w = [abs(float(x)) for x in weights]
    if len(w) != 3 or sum(w) == 0:
        raise ValueError("weights must be three numbers, not all zero")
    s = sum(w)
    return w[0] / s, w[1] / s, w[2] / s


def combine(i_w, i_c, i_m, weights=DEFAULT_WEIGHTS):
    """Composite with the fixed (+, -, -) orientation: falling routine intensity raises the index."""
    a, b, c = normalized_weights(weights)
    return a * i_w - b * i_c - c * i_m


def compute_scores(
    frame: pd.DataFrame,
    book: TaskIntensityBook,
    contexts: IndexContexts,
    variant: str,
    weights=DEFAULT_WEIGHTS,
) -> pd.DataFrame:
    """Score every row of a prepared frame under one variant."""
    n = len(frame)
    ok = _usable(frame)
    pre_w = ihs_means(frame, "pre")
    post_w = ihs_means(frame, "post")
    i_w = normalize(post_w, contexts.wage) - normalize(pre_w, contexts.wage)
    lv = task_levels(frame, book, variant)
    prefix = "occ" if variant == "occupation" else "sub"
    ctx_c, ctx_m = getattr(contexts, f"{prefix}_c"), getattr(contexts, f"{prefix}_m")
    if ctx_c is None or ctx_m is None:
        i_c = i_m = np.full(n, np.nan)
    else:
        i_c = normalize(lv["post_c"], ctx_c) - normalize(lv["pre_c"], ctx_c)
        i_m = normalize(lv["post_m"], ctx_m) - normalize(lv["pre_m"], ctx_m)
    code = "occ" if variant == "occupation" else "subsector"
    checks = [
        (~ok, "cpi_year_missing"),
        (np.isnan(pre_w), "missing_pre_wage"),
        (np.isnan(post_w), "missing_post_wage"),
        (np.isnan(lv["pre_c"]) | np.isnan(lv["pre_m"]), f"missing_pre_{code}"),
        (np.isnan(lv["post_c"]) | np.isnan(lv["post_m"]), f"missing_post_{code}"),
    ]
    reasons = [[] for _ in range(n)]
    for mask, label in checks:
        for i in np.flatnonzero(mask):
            reasons[i].append(label)
    calc = np.array([not r for r in reasons])
    i_w = np.where(calc, i_w, np.nan)
    i_c = np.where(calc, i_c, np.nan)
    i_m = np.where(calc, i_m, np.nan)
    i_n = combine(i_w, i_c, i_m, weights)
    return pd.DataFrame({
        "record_id": frame["record_id"].to_numpy(),
        "variant": variant,
        "i_w": i_w,
        "i_c": i_c,
        "i_m": i_m,
        "i_n": i_n,
        "calculable": calc,
        "reason": [";".join(r) for r in reasons],
    }, columns=SCORE_COLUMNS)


def score_all(frame, book, winsor=DEFAULT_WINSOR, weights=DEFAULT_WEIGHTS):
    """Both variants stacked, plus the frozen contexts used."""
    ctx = build_contexts(frame, book, winsor)
    scores = pd.concat([compute_scores(frame, book, ctx, v, weights) for v in VARIANTS], ignore_index=True)
    return scores, ctx


# --------------------------------------------------------------------------
# single-record API
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class IndexScore:
    record_id: str
    variant: str
    i_w: float | None
    i_c: float | None
    i_m: float | None
    i_n: float | None
    calculable: bool
    reason: str = ""


def _real(record: ParticipationRecord, side: str):
    wages = record.real_pre_wages if side == "pre" else record.real_post_wages
    return wages if wages is not None else ()


def wage_subcomponent(record: ParticipationRecord, ctx: NormalizationContext) -> float | None:
    pre = ihs_mean_wage(_real(record, "pre"))
    post = ihs_mean_wage(_real(record, "post"))
    if pre is None or post is None:
        return None
    return normalize(post, ctx) - normalize(pre, ctx)


def _rti_delta(pre_code, post_code, table, ctx_c, ctx_m):
    if pre_code not in table or post_code not in table:
        return None
    (pc, pm), (qc, qm) = table[pre_code], table[post_code]
    return normalize(qc, ctx_c) - normalize(pc, ctx_c), normalize(qm, ctx_m) - normalize(pm, ctx_m)


def rti_subcomponents_occupation(record, book: TaskIntensityBook, ctx_c, ctx_m):
    return _rti_delta(record.pre_occ, record.post_occ, book.occ_rti, ctx_c, ctx_m)


def rti_subcomponents_subsector(record, book: TaskIntensityBook, ctx_c, ctx_m):
    return _rti_delta(record.pre_naics3, record.post_naics3, book.subsector_rti, ctx_c, ctx_m)


def composite(record_id: str, variant: str, i_w, i_c, i_m, weights=DEFAULT_WEIGHTS) -> IndexScore:
    missing = [n for n, v in (("i_w", i_w), ("i_c", i_c), ("i_m", i_m)) if v is None]
    if missing:
        return IndexScore(record_id, variant, i_w, i_c, i_m, None, False,
                          ";".join(f"missing_{m}" for m in missing))
    return IndexScore(record_id, variant, i_w, i_c, i_m, combine(i_w, i_c, i_m, weights), True)


def score_record(record: ParticipationRecord, book: TaskIntensityBook, contexts: IndexContexts,
                 variant: str, weights=DEFAULT_WEIGHTS) -> IndexScore:
    i_w = wage_subcomponent(record, contexts.wage)
    if variant == "occupation":
        rti = rti_subcomponents_occupation(record, book, contexts.occ_c, contexts.occ_m)
    else:
        rti = rti_subcomponents_subsector(record, book, contexts.sub_c, contexts.sub_m)
    i_c, i_m = rti if rti else (None, None)
    return composite(record.record_id, variant, i_w, i_c, i_m, weights)


# --------------------------------------------------------------------------
# occupation vs subsector check
# --------------------------------------------------------------------------


def validate_subsector_proxy(scores_occ: pd.DataFrame, scores_sub: pd.DataFrame) -> dict:
    """Regress occupation-level task changes on subsector-level ones, per channel."""
    a = scores_occ.loc[scores_occ["calculable"], ["record_id", "i_c", "i_m"]]
    b = scores_sub.loc[scores_sub["calculable"], ["record_id", "i_c", "i_m"]]
    both = a.merge(b, on="record_id", suffixes=("_occ", "_sub"))
    if len(both) < 2:
        raise DegenerateError("need at least two records scored under both variants")
    out = {"n": int(len(both))}
    for ch, label in (("c", "cognitive"), ("m", "manual")):
        fit = stats.ols(both[f"i_{ch}_sub"].to_numpy(), both[f"i_{ch}_occ"].to_numpy())
        out[label] = {"slope": fit.slope, "intercept": fit.intercept, "r2": fit.r2}
    return out
