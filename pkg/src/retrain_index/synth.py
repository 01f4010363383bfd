"""Synthetic participation data with planted ground truth, plus naive oracles.

The generator plants: a wage process with an optional pre-entry dip and
post-exit recovery, occupation / subsector transitions, a logit-linear
calculability (missing occupation) model, a logit-linear treatment model,
a constant treatment effect on the index and per-funding-stream wage
shifts. ``oracle_index`` recomputes scores with plain Python loops and its
own percentile routine; it deliberately shares no helpers with ``index``.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable

import numpy as np

from .ingest import (
    CANONICAL_COLUMNS,
    FUNDING_STREAMS,
    NAICS_COLUMNS,
    OCC_COLUMNS,
    POST_OFFSETS,
    PRE_OFFSETS,
    TRAINING_SERVICE_TYPES,
    WAGE_COLUMNS,
    CodeObservation,
    CpiTable,
    ParticipationRecord,
    TaskIntensityBook,
)

SEXES = ("Female", "Male", "DidNotSelfIdentify")
RACES = ("Asian", "Black", "Hispanic", "White", "Other")
EDUCATION = ("NoCredential", "HighSchool", "Postsecondary", "Bachelors", "Advanced")
EMPLOYMENT = ("Employed", "Unemployed", "NotInLaborForce", "Other")
STATE_CODES = ("AL", "CA", "MS", "NY", "OH", "TX", "WA", "AR", "GA", "IL")
SUBSECTORS = ("311", "423", "445", "484", "541", "561", "622", "722")


@dataclass
class SynthConfig:
    n: int = 10_000
    seed: int = 0
    years: tuple[int, ...] = (2017, 2018, 2019, 2020, 2021, 2022, 2023)
    n_states: int = 6
    wdbs_per_state: int = 3
    n_occupations: int = 12
    n_subsectors: int = 5
    # wage process (log real quarterly wages)
    base_log_mean: float = 8.6
    base_log_sd: float = 0.55
    quarter_noise: float = 0.10
    dip: float = 0.15
    reversion: float = 0.08
    post_noise: float = 0.25
    quarter_missing: float = 0.10
    occupation_stay: float = 0.45
    inflation: float = 0.02
    # calculability model: intercept + coefficients on planted features
    missingness: dict = field(default_factory=lambda: {
        "intercept": 0.2, "received_training": 1.2, "funding_stream=WagnerPeyser": -1.4,
        "low_income": 0.7, "age_z": -0.35,
    })
    missingness_on: bool = True
    # treatment (received_training) model
    treatment: dict = field(default_factory=lambda: {
        "intercept": -1.1, "age_z": -0.5, "low_income": 0.6,
        "employment=Unemployed": 0.5, "pre_wage_z": -0.5,
    })
    delta: float = 0.05
    funding_weights: tuple[float, ...] = (0.35, 0.25, 0.10, 0.25, 0.05)
    group_shift: dict = field(default_factory=lambda: {
        "Adult": 0.30, "DislocatedWorker": 0.15, "Youth": 0.0, "Other": -0.15, "WagnerPeyser": -0.30,
    })
    outcome_age: float = -0.10
    outcome_low_income: float = 0.10
    apprenticeship_share: float = 0.10
    reportable_rate: float = 0.05
    missing_exit_rate: float = 0.03
    covariate_missing: float = 0.03
    winsor: tuple[float, float] | None = (1.0, 99.0)

    def __post_init__(self):
        if self.n < 0:
            raise ValueError("n must be non-negative")
        if self.n_occupations < 2 or self.n_subsectors < 2:
            raise ValueError("universe sizes must be at least 2")
        if self.n_subsectors > len(SUBSECTORS) or self.n_states > len(STATE_CODES):
            raise ValueError("universe size exceeds built-in code lists")
        for name in ("quarter_missing", "reportable_rate", "missing_exit_rate", "covariate_missing",
                     "occupation_stay", "apprenticeship_share"):
            v = getattr(self, name)
            if not 0 <= v < 1:
                raise ValueError(f"{name} must lie in [0, 1)")
        if len(self.funding_weights) != len(FUNDING_STREAMS):
            raise ValueError("one funding weight per funding stream")


@dataclass
class GroundTruth:
    record_id: list[str]
    p_calc: np.ndarray
    calculable: np.ndarray
    p_treat: np.ndarray
    treated: np.ndarray
    kept: np.ndarray
    reportable: np.ndarray
    missing_exit: np.ndarray
    # potential outcomes of i_n; NaN where undefined
    y0: dict[str, np.ndarray]
    y1: dict[str, np.ndarray]
    effect_exact: np.ndarray
    wage_shift: float
    missingness_coef: dict
    treatment_coef: dict
    group_order: list[str]
    education_mode: str
    real_means: dict[str, float]

    def to_json(self) -> str:
        def arr(a):
            return [None if (isinstance(x, float) and math.isnan(x)) else x for x in np.asarray(a).tolist()]

        return json.dumps({
            "dataset": {
                "wage_shift": self.wage_shift,
                "missingness_coef": self.missingness_coef,
                "treatment_coef": self.treatment_coef,
                "group_order": self.group_order,
                "education_mode": self.education_mode,
                "real_means": self.real_means,
                "restriction_counts": {
                    "reportable_individual": int(self.reportable.sum()),
                    "missing_exit_date": int((self.missing_exit & ~self.reportable).sum()),
                },
            },
            "records": {
                rid: {
                    "p_calc": pc, "calculable": bool(c), "p_treat": pt, "treated": bool(t),
                    "kept": bool(k), "y0_occupation": y0o, "y1_occupation": y1o,
                    "y0_subsector": y0s, "y1_subsector": y1s, "effect_exact": bool(e),
                }
                for rid, pc, c, pt, t, k, y0o, y1o, y0s, y1s, e in zip(
                    self.record_id, arr(self.p_calc), self.calculable.tolist(), arr(self.p_treat),
                    self.treated.tolist(), self.kept.tolist(), arr(self.y0["occupation"]),
                    arr(self.y1["occupation"]), arr(self.y0["subsector"]), arr(self.y1["subsector"]),
                    self.effect_exact.tolist())
            },
        }, indent=1, sort_keys=True)


@dataclass
class SynthDataset:
    config: SynthConfig
    records: list[ParticipationRecord]
    book: TaskIntensityBook
    cpi: CpiTable
    truth: GroundTruth
    prepared: list[ParticipationRecord]  # real wages and resolved codes, as planted
    employment: dict[tuple[str, str], float] = field(default_factory=dict)


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def _logit(coef: dict, feats: dict) -> np.ndarray:
    z = np.full(len(next(iter(feats.values()))), float(coef.get("intercept", 0.0)))
    for k, b in coef.items():
        if k == "intercept":
            continue
        z = z + float(b) * feats[k]
    return z


def _quarter_year(d: dt.date, offset: int) -> int:
    q = d.year * 4 + (d.month - 1) // 3 + offset
    return q // 4


def _percentile_naive(sorted_vals: list[float], q: float) -> float:
    n = len(sorted_vals)
    h = (n - 1) * q / 100.0
    lo = int(math.floor(h))
    hi = min(lo + 1, n - 1)
    return sorted_vals[lo] + (h - lo) * (sorted_vals[hi] - sorted_vals[lo])


def _range_naive(values: list[float], winsor) -> tuple[float, float]:
    s = sorted(values)
    if winsor is None:
        return s[0], s[-1]
    lo = _percentile_naive(s, winsor[0])
    hi = _percentile_naive(s, winsor[1])
    clamped = [min(max(v, lo), hi) for v in s]
    return min(clamped), max(clamped)


def make_book(cfg: SynthConfig, rng: np.random.Generator) -> tuple[TaskIntensityBook, dict]:
    """Random codebook; also returns the raw employment counts."""
    socs = [f"{11 + 2 * i:02d}-{1011 + 37 * i:04d}" for i in range(cfg.n_occupations)]
    rc = rng.normal(0.0, 1.0, cfg.n_occupations)
    rm = rng.normal(0.0, 1.0, cfg.n_occupations)
    subs = SUBSECTORS[: cfg.n_subsectors]
    emp: dict[tuple[str, str], float] = {}
    for i, s in enumerate(socs):
        k = int(rng.integers(1, 4))
        for j in rng.choice(len(subs), size=min(k, len(subs)), replace=False):
            emp[(s, subs[j])] = float(rng.integers(100, 5000))
    for j, sub in enumerate(subs):  # every subsector employs someone
        if not any(key[1] == sub for key in emp):
            emp[(socs[j % len(socs)], sub)] = 1000.0
    occ_rti = {s: (float(c), float(m)) for s, c, m in zip(socs, rc, rm)}
    return TaskIntensityBook(occ_rti, dict(emp), frozenset(socs)), emp


def make_cpi(cfg: SynthConfig) -> CpiTable:
    return CpiTable({y: 100.0 * (1.0 + cfg.inflation) ** (y - 2010) for y in range(2005, 2031)})


def generate(cfg: SynthConfig) -> SynthDataset:
    rng = np.random.default_rng(cfg.seed)
    book, employment = make_book(cfg, rng)
    cpi = make_cpi(cfg)
    n = cfg.n
    socs = sorted(book.occ_rti)
    subs = sorted(book.subsector_rti)
    occ_subs = {s: sorted(j for (o, j) in book.emp_shares if o == s) for s in socs}

    year = rng.choice(cfg.years, size=n)
    state_idx = rng.integers(0, cfg.n_states, size=n)
    wdb_idx = rng.integers(0, cfg.wdbs_per_state, size=n)
    funding = rng.choice(len(FUNDING_STREAMS), size=n, p=np.asarray(cfg.funding_weights) / sum(cfg.funding_weights))
    sex = rng.choice(len(SEXES), size=n, p=[0.5, 0.45, 0.05])
    race = rng.choice(len(RACES), size=n, p=[0.06, 0.22, 0.2, 0.47, 0.05])
    edu_p = np.array([0.12, 0.40, 0.22, 0.18, 0.08])
    edu = rng.choice(len(EDUCATION), size=n, p=edu_p)
    age = rng.integers(18, 71, size=n).astype(float)
    low = rng.random(n) < 0.4
    emp_status = rng.choice(len(EMPLOYMENT), size=n, p=[0.35, 0.5, 0.1, 0.05])
    age_z = (age - 44.0) / 15.0

    # wage process in real dollars
    log_base = (cfg.base_log_mean + 0.12 * (edu - 1.5) - 0.25 * low + 0.08 * age_z
                + rng.normal(0.0, cfg.base_log_sd, n))
    pre = np.exp(log_base[:, None] + rng.normal(0.0, cfg.quarter_noise, (n, len(PRE_OFFSETS))))
    pre[:, -1] *= 1.0 - cfg.dip
    shift_g = np.array([cfg.group_shift.get(f, 0.0) for f in FUNDING_STREAMS])[funding]
    log_post = (log_base + cfg.reversion + shift_g + cfg.outcome_age * age_z + cfg.outcome_low_income * low
                + rng.normal(0.0, cfg.post_noise, n))
    post = np.exp(log_post[:, None] + rng.normal(0.0, cfg.quarter_noise, (n, len(POST_OFFSETS))))

    def knock_out(w):
        miss = rng.random(w.shape) < cfg.quarter_missing
        keep = rng.integers(0, w.shape[1], size=n)
        miss[np.arange(n), keep] = False  # at least one observed quarter
        out = w.copy()
        out[miss] = np.nan
        return out

    pre = knock_out(pre)
    post0 = knock_out(post)
    pre_ihs = np.arcsinh(np.nanmean(pre, axis=1))
    post0_ihs = np.arcsinh(np.nanmean(post0, axis=1))
    pre_wage_z = (pre_ihs - pre_ihs.mean()) / pre_ihs.std() if n > 1 else np.zeros(n)

    feats = {
        "age_z": age_z,
        "low_income": low.astype(float),
        "employment=Unemployed": (emp_status == EMPLOYMENT.index("Unemployed")).astype(float),
        "pre_wage_z": pre_wage_z,
    }
    p_treat = _sigmoid(_logit(cfg.treatment, feats))
    treated = rng.random(n) < p_treat
    feats["received_training"] = treated.astype(float)
    feats["funding_stream=WagnerPeyser"] = (funding == FUNDING_STREAMS.index("WagnerPeyser")).astype(float)
    if cfg.missingness_on:
        p_calc = _sigmoid(_logit(cfg.missingness, feats))
    else:
        p_calc = np.ones(n)
    calculable = rng.random(n) < p_calc
    drop_post_side = rng.random(n) < 0.5

    reportable = rng.random(n) < cfg.reportable_rate
    missing_exit = rng.random(n) < cfg.missing_exit_rate
    kept = ~reportable & ~missing_exit

    # occupations and subsectors
    occ_p = rng.dirichlet(np.full(len(socs), 2.0))
    pre_occ = rng.choice(len(socs), size=n, p=occ_p)
    stay = rng.random(n) < cfg.occupation_stay
    post_occ = np.where(stay, pre_occ, rng.choice(len(socs), size=n, p=occ_p))
    older_occ = rng.choice(len(socs), size=n, p=occ_p)
    pre_sub = [occ_subs[socs[o]][int(rng.integers(0, len(occ_subs[socs[o]])))] for o in pre_occ]
    post_sub = [occ_subs[socs[o]][int(rng.integers(0, len(occ_subs[socs[o]])))] for o in post_occ]

    # the planted effect shifts treated post IHS wages by s, chosen so that the
    # frozen wage range R satisfies s = 2 * delta * R
    def wage_range(s):
        post_ihs = post0_ihs + s * treated
        pool = np.concatenate([pre_ihs[kept], post_ihs[kept]]).tolist()
        if not pool:
            return 0.0, 0.0
        return _range_naive(pool, cfg.winsor)

    s = 0.0
    for _ in range(200):
        lo, hi = wage_range(s)
        s_new = 2.0 * cfg.delta * (hi - lo)
        if abs(s_new - s) <= 1e-15 * max(1.0, abs(s_new)):
            s = s_new
            break
        s = s_new
    lo, hi = wage_range(s)
    m0 = np.nanmean(post0, axis=1)
    k = np.sinh(post0_ihs + s) / m0
    post_obs = np.where(treated[:, None], post0 * k[:, None], post0)

    # dates
    entry = [dt.date(int(y), 7, 1) + dt.timedelta(days=int(d)) for y, d in zip(year, rng.integers(0, 365, n))]
    exit_ = [e + dt.timedelta(days=int(d)) for e, d in zip(entry, rng.integers(30, 540, n))]
    training_types = [t for t in TRAINING_SERVICE_TYPES if t != "RegisteredApprenticeship"]
    appr = rng.random(n) < cfg.apprenticeship_share
    ttype_idx = rng.integers(0, len(training_types), n)
    cov_miss = rng.random((n, 2)) < cfg.covariate_missing

    records: list[ParticipationRecord] = []
    prepared: list[ParticipationRecord] = []
    width = len(str(max(n - 1, 0)))
    real_pre_all: list[float] = []
    real_post_all: list[float] = []
    for i in range(n):
        rid = f"R{i:0{width}d}"
        ex_date = None if missing_exit[i] else exit_[i]
        pre_years = [_quarter_year(entry[i], o) for o in PRE_OFFSETS]
        post_years = [_quarter_year(exit_[i], o) for o in POST_OFFSETS]
        real_pre = tuple(None if math.isnan(v) else float(v) for v in pre[i])
        real_post = tuple(None if math.isnan(v) else float(v) for v in post_obs[i])
        nom_pre = tuple(None if v is None else v * cpi.values[y] / cpi.values[2010] for v, y in zip(real_pre, pre_years))
        nom_post = tuple(None if v is None else v * cpi.values[y] / cpi.values[2010] for v, y in zip(real_post, post_years))
        if kept[i]:
            real_pre_all.extend(v for v in real_pre if v is not None)
            real_post_all.extend(v for v in real_post if v is not None)
        p_occ, q_occ = socs[pre_occ[i]], socs[post_occ[i]]
        drop_pre = not calculable[i] and not drop_post_side[i]
        drop_post = not calculable[i] and drop_post_side[i]
        pre_occ_c = () if drop_pre else (CodeObservation(socs[older_occ[i]], -3), CodeObservation(p_occ, -1))
        post_occ_c = () if drop_post else (CodeObservation(q_occ, 1), CodeObservation(socs[older_occ[i]], 3))
        pre_n = (CodeObservation(pre_sub[i] + "110", -1),)
        post_n = (CodeObservation(post_sub[i] + "120", 2),)
        ttype = None
        if treated[i]:
            ttype = "RegisteredApprenticeship" if appr[i] else training_types[ttype_idx[i]]
        rec = ParticipationRecord(
            record_id=rid,
            program_year=int(year[i]),
            state=STATE_CODES[state_idx[i]],
            wdb_id=f"{STATE_CODES[state_idx[i]]}-WDB{wdb_idx[i] + 1}",
            funding_stream=FUNDING_STREAMS[funding[i]],
            received_training=bool(treated[i]),
            employment_status_at_entry=EMPLOYMENT[emp_status[i]],
            reportable_individual=bool(reportable[i]),
            exit_date=ex_date,
            entry_date=entry[i],
            pre_wages=nom_pre,
            post_wages=nom_post,
            training_service_type=ttype,
            age=None if cov_miss[i, 0] else float(age[i]),
            sex=SEXES[sex[i]],
            race_ethnicity=RACES[race[i]],
            education_level=None if cov_miss[i, 1] else EDUCATION[edu[i]],
            low_income=bool(low[i]),
            pre_occ_candidates=pre_occ_c,
            post_occ_candidates=post_occ_c,
            pre_naics_candidates=pre_n,
            post_naics_candidates=post_n,
        )
        records.append(rec)
        if kept[i]:
            prepared.append(replace(
                rec,
                pre_occ=None if drop_pre else p_occ,
                post_occ=None if drop_post else q_occ,
                pre_naics3=pre_sub[i], post_naics3=post_sub[i],
                real_pre_wages=real_pre, real_post_wages=real_post,
            ))

    # potential outcomes through the naive oracle, with contexts frozen on observed data
    contexts = oracle_contexts(prepared, book, cfg.winsor)
    y0 = {v: np.full(n, np.nan) for v in ("occupation", "subsector")}
    y1 = {v: np.full(n, np.nan) for v in ("occupation", "subsector")}
    exact = np.zeros(n, dtype=bool)
    wage_lo, wage_hi = contexts["wage"] if contexts["wage"] else (0.0, 0.0)
    pos = {r.record_id: i for i, r in enumerate(records)}
    for r in prepared:
        i = pos[r.record_id]
        pre_v = _oracle_ihs(r.real_pre_wages)
        post_v = _oracle_ihs(r.real_post_wages)
        other = post_v - s if treated[i] else post_v + s
        lo_v, hi_v = sorted([post_v, other])
        exact[i] = wage_hi > wage_lo and lo_v >= wage_lo and hi_v <= wage_hi
        for variant in ("occupation", "subsector"):
            obs = _oracle_one(r, book, contexts, variant, (0.5, 0.25, 0.25))
            if obs is None:
                continue
            i_w, i_c, i_m, y_obs = obs
            i_w_other = _oracle_norm(other, wage_lo, wage_hi) - _oracle_norm(pre_v, wage_lo, wage_hi)
            y_other = 0.5 * i_w_other - 0.25 * i_c - 0.25 * i_m
            if treated[i]:
                y1[variant][i], y0[variant][i] = y_obs, y_other
            else:
                y0[variant][i], y1[variant][i] = y_obs, y_other

    shifts = sorted(FUNDING_STREAMS, key=lambda f: -cfg.group_shift.get(f, 0.0))
    truth = GroundTruth(
        record_id=[r.record_id for r in records],
        p_calc=p_calc, calculable=calculable, p_treat=p_treat, treated=treated, kept=kept,
        reportable=reportable, missing_exit=missing_exit, y0=y0, y1=y1, effect_exact=exact,
        wage_shift=float(s),
        missingness_coef=dict(cfg.missingness) if cfg.missingness_on else {},
        treatment_coef=dict(cfg.treatment),
        group_order=shifts,
        education_mode=EDUCATION[int(np.argmax(edu_p))],
        real_means={
            "pre": float(np.mean(real_pre_all)) if real_pre_all else float("nan"),
            "post": float(np.mean(real_post_all)) if real_post_all else float("nan"),
        },
    )
    return SynthDataset(cfg, records, book, cpi, truth, prepared, employment)


# --------------------------------------------------------------------------
# naive oracles
# --------------------------------------------------------------------------


def _oracle_ihs(wages) -> float | None:
    vals = [w for w in (wages or ()) if w is not None and not math.isnan(w)]
    if not vals:
        return None
    m = sum(vals) / len(vals)
    return math.log(m + math.sqrt(m * m + 1.0))


def _oracle_norm(v: float, lo: float, hi: float) -> float:
    if hi <= lo:
        return 0.5
    if v < lo:
        v = lo
    if v > hi:
        v = hi
    return (v - lo) / (hi - lo)


def _oracle_rollup(book: TaskIntensityBook) -> dict[str, tuple[float, float]]:
    num: dict[str, list[float]] = {}
    for (occ, sub), e in book.emp_shares.items():
        if occ not in book.occ_rti:
            continue
        acc = num.setdefault(sub, [0.0, 0.0, 0.0])
        acc[0] += e * book.occ_rti[occ][0]
        acc[1] += e * book.occ_rti[occ][1]
        acc[2] += e
    return {sub: (a[0] / a[2], a[1] / a[2]) for sub, a in num.items() if a[2] > 0}


def oracle_contexts(records: Iterable[ParticipationRecord], book: TaskIntensityBook, winsor=(1.0, 99.0)) -> dict:
    records = [r for r in records if r.exclusion is None]
    rollup = _oracle_rollup(book)
    wage_pool = []
    pools = {k: [] for k in ("occ_c", "occ_m", "sub_c", "sub_m")}
    for r in records:
        for wv in (_oracle_ihs(r.real_pre_wages), _oracle_ihs(r.real_post_wages)):
            if wv is not None:
                wage_pool.append(wv)
        for code in (r.pre_occ, r.post_occ):
            if code is not None and code in book.occ_rti:
                pools["occ_c"].append(book.occ_rti[code][0])
                pools["occ_m"].append(book.occ_rti[code][1])
        for code in (r.pre_naics3, r.post_naics3):
            if code is not None and code in rollup:
                pools["sub_c"].append(rollup[code][0])
                pools["sub_m"].append(rollup[code][1])
    out = {"wage": _range_naive(wage_pool, winsor) if wage_pool else None, "rollup": rollup}
    for k, pool in pools.items():
        out[k] = _range_naive(pool, winsor) if pool else None
    return out


def _oracle_one(r: ParticipationRecord, book: TaskIntensityBook, ctx: dict, variant: str, weights):
    if r.exclusion is not None:
        return None
    pre_v = _oracle_ihs(r.real_pre_wages)
    post_v = _oracle_ihs(r.real_post_wages)
    if pre_v is None or post_v is None or ctx["wage"] is None:
        return None
    i_w = _oracle_norm(post_v, *ctx["wage"]) - _oracle_norm(pre_v, *ctx["wage"])
    if variant == "occupation":
        a, b = r.pre_occ, r.post_occ
        if a not in book.occ_rti or b not in book.occ_rti:
            return None
        (ac, am), (bc, bm) = book.occ_rti[a], book.occ_rti[b]
        cc, cm = ctx["occ_c"], ctx["occ_m"]
    else:
        table = ctx["rollup"]
        a, b = r.pre_naics3, r.post_naics3
        if a not in table or b not in table:
            return None
        (ac, am), (bc, bm) = table[a], table[b]
        cc, cm = ctx["sub_c"], ctx["sub_m"]
    i_c = _oracle_norm(bc, *cc) - _oracle_norm(ac, *cc)
    i_m = _oracle_norm(bm, *cm) - _oracle_norm(am, *cm)
    total = abs(weights[0]) + abs(weights[1]) + abs(weights[2])
    i_n = (abs(weights[0]) * i_w - abs(weights[1]) * i_c - abs(weights[2]) * i_m) / total
    return i_w, i_c, i_m, i_n


def oracle_index(records: Iterable[ParticipationRecord], book: TaskIntensityBook,
                 weights=(0.5, 0.25, 0.25), winsor=(1.0, 99.0)) -> dict[str, dict[str, tuple]]:
    """record_id -> variant -> (i_w, i_c, i_m, i_n) for every calculable record."""
    records = list(records)
    ctx = oracle_contexts(records, book, winsor)
    out: dict[str, dict[str, tuple]] = {}
    for r in records:
        for variant in ("occupation", "subsector"):
            res = _oracle_one(r, book, ctx, variant, weights)
            if res is not None:
                out.setdefault(r.record_id, {})[variant] = res
    return out


def oracle_effects(truth: GroundTruth, variant: str = "occupation") -> dict:
    """True ATT / ATE from planted potential outcomes, plus planted orderings and propensities."""
    y0, y1 = truth.y0[variant], truth.y1[variant]
    ok = truth.kept & ~np.isnan(y0) & ~np.isnan(y1)
    t = ok & truth.treated
    diff = y1 - y0
    return {
        "att": float(diff[t].mean()) if t.any() else None,
        "ate": float(diff[ok].mean()) if ok.any() else None,
        "group_order": list(truth.group_order),
        "p_calc": truth.p_calc,
        "p_treat": truth.p_treat,
    }


def planted_logistic(n: int, beta, seed: int = 0):
    """Design with standard-normal columns and labels drawn from sigmoid(beta[0] + X beta[1:])."""
    rng = np.random.default_rng(seed)
    beta = np.asarray(beta, dtype=float)
    X = rng.normal(size=(n, beta.size - 1))
    y = (rng.random(n) < _sigmoid(beta[0] + X @ beta[1:])).astype(float)
    return X, y


# --------------------------------------------------------------------------
# files
# --------------------------------------------------------------------------


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, dt.date):
        return v.isoformat()
    return str(v)


def record_row(r: ParticipationRecord) -> dict[str, str]:
    row = {
        "record_id": r.record_id, "program_year": r.program_year, "state": r.state, "wdb_id": r.wdb_id,
        "funding_stream": r.funding_stream, "received_training": r.received_training,
        "employment_status_at_entry": r.employment_status_at_entry,
        "reportable_individual": r.reportable_individual, "exit_date": r.exit_date,
        "entry_date": r.entry_date, "training_service_type": r.training_service_type, "age": r.age,
        "sex": r.sex, "race_ethnicity": r.race_ethnicity, "education_level": r.education_level,
        "low_income": r.low_income,
    }
    for col, w in zip(WAGE_COLUMNS, r.pre_wages + r.post_wages):
        row[col] = w
    offsets = PRE_OFFSETS + POST_OFFSETS
    for cols, cands in ((OCC_COLUMNS, r.pre_occ_candidates + r.post_occ_candidates),
                        (NAICS_COLUMNS, r.pre_naics_candidates + r.post_naics_candidates)):
        by_off = {c.offset: c.code for c in cands}
        for col, off in zip(cols, offsets):
            row[col] = by_off.get(off)
    return {k: _fmt(v) for k, v in row.items()}


def write_records(records: Iterable[ParticipationRecord], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(CANONICAL_COLUMNS), lineterminator="\n")
        w.writeheader()
        for r in records:
            w.writerow(record_row(r))


def write_codebooks(book: TaskIntensityBook, cpi: CpiTable, outdir, raw_employment=None) -> dict[str, Path]:
    outdir = Path(outdir)
    paths = {
        "soc": outdir / "soc_structure.csv",
        "employment": outdir / "employment_matrix.csv",
        "rti": outdir / "rti.csv",
        "cpi": outdir / "cpi.csv",
    }
    with open(paths["soc"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["soc_code", "title"])
        for s in sorted(book.soc_codes):
            w.writerow([s, f"Occupation {s}"])
    with open(paths["employment"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["soc_code", "naics", "employment"])
        for (s, j), e in sorted((raw_employment or book.emp_shares).items()):
            w.writerow([s, j, repr(float(e))])
    with open(paths["rti"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["soc_code", "rti_cognitive", "rti_manual"])
        for s, (c, m) in sorted(book.occ_rti.items()):
            w.writerow([s, repr(c), repr(m)])
    with open(paths["cpi"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["year", "value"])
        for y, v in sorted(cpi.values.items()):
            w.writerow([y, repr(float(v))])
    return paths


def write_dataset(ds: SynthDataset, outdir) -> dict[str, Path]:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = write_codebooks(ds.book, ds.cpi, outdir, ds.employment or None)
    paths["records"] = outdir / "records.csv"
    write_records(ds.records, paths["records"])
    paths["ground_truth"] = outdir / "ground_truth.json"
    paths["ground_truth"].write_text(ds.truth.to_json(), encoding="utf-8")
    paths["synth_config"] = outdir / "synth_config.json"
    cfg = asdict(ds.config)
    paths["synth_config"].write_text(json.dumps(cfg, indent=2, sort_keys=True), encoding="utf-8")
    return paths
