"""Monte Carlo robustness of index rankings to the subcomponent weights.

Each simulation draws a weight vector from a Dirichlet distribution, keeps
the (+, -, -) orientation, recomputes every period's index, re-aggregates
each grouping and compares its ranking with the baseline weights through
Spearman's rho and absolute percentile-rank shifts.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.stats import rankdata

from . import stats
from .index import DEFAULT_WEIGHTS

PERIOD = "participation_period"
REPORT_COLUMNS = ["grouping", "n_groups", "mean_rho", "min_rho", "median_shift", "max_shift"]


def percentile_ranks(values) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        raise ValueError("percentile ranks need at least two units")
    return (rankdata(v, method="average") - 1.0) / (v.size - 1.0)


def percentile_shift(baseline, perturbed) -> np.ndarray:
    """Absolute change in percentile rank, unit by unit."""
    b = np.asarray(baseline, dtype=float)
    p = np.asarray(perturbed, dtype=float)
    if b.shape != p.shape:
        raise ValueError("rankings differ in length")
    return np.abs(percentile_ranks(b) - percentile_ranks(p))


@dataclass
class _Grouping:
    name: str
    codes: np.ndarray | None  # None: each period is its own unit
    n_groups: int


@dataclass
class SensitivityReport:
    table: pd.DataFrame
    per_sim: pd.DataFrame
    draws: list[dict]
    seed: int
    n_sims: int
    sample_frac: float
    n_sampled: int

    def replay_json(self) -> str:
        return json.dumps({"seed": self.seed, "n_sims": self.n_sims, "sample_frac": self.sample_frac,
                           "n_sampled": self.n_sampled, "draws": self.draws}, indent=2)


@dataclass
class SensitivityInputs:
    """Subsampled, sorted components plus prebuilt grouping codes."""

    i_w: np.ndarray
    i_c: np.ndarray
    i_m: np.ndarray
    weight: np.ndarray
    groupings: list[_Grouping] = field(default_factory=list)
    baseline: dict[str, np.ndarray] = field(default_factory=dict)


def subsample(data: pd.DataFrame, sample_frac: float, seed: int) -> pd.DataFrame:
    """Sorted by record_id first so the draw does not depend on input row order."""
    d = data.sort_values("record_id", kind="stable").reset_index(drop=True)
    if sample_frac >= 1.0:
        return d
    k = max(2, int(round(sample_frac * len(d))))
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(len(d), size=min(k, len(d)), replace=False))
    return d.iloc[idx].reset_index(drop=True)


def _aggregate(i_n, w, g: _Grouping) -> np.ndarray:
    if g.codes is None:
        return i_n
    pos = i_n > 0
    num = np.bincount(g.codes, weights=np.where(pos, w * i_n, 0.0), minlength=g.n_groups)
    den = np.bincount(g.codes, weights=w, minlength=g.n_groups)
    return num / den


def prepare_inputs(data: pd.DataFrame, groupings: dict[str, str | None], weight_col: str | None = None,
                   baseline=DEFAULT_WEIGHTS) -> SensitivityInputs:
    w = np.ones(len(data)) if weight_col is None else data[weight_col].to_numpy(dtype=float)
    inp = SensitivityInputs(
        data["i_w"].to_numpy(dtype=float),
        data["i_c"].to_numpy(dtype=float),
        data["i_m"].to_numpy(dtype=float),
        w,
    )
    for name, col in groupings.items():
        if col is None:
            inp.groupings.append(_Grouping(name, None, len(data)))
            continue
        labels = data[col].map(lambda v: "Missing" if pd.isna(v) else str(v))
        uniq, codes = np.unique(labels.to_numpy(dtype=str), return_inverse=True)
        inp.groupings.append(_Grouping(name, codes, len(uniq)))
    base_i_n = _index(inp, baseline)
    for g in inp.groupings:
        inp.baseline[g.name] = _aggregate(base_i_n, inp.weight, g)
    return inp


def _index(inp: SensitivityInputs, weights) -> np.ndarray:
    a, b, c = weights
    return a * inp.i_w - b * inp.i_c - c * inp.i_m


def simulate(inp: SensitivityInputs, weights) -> list[dict]:
    """Compare one weight vector's rankings with the baseline, per grouping."""
    i_n = _index(inp, weights)
    rows = []
    for g in inp.groupings:
        base = inp.baseline[g.name]
        if g.n_groups < 2:
            rows.append({"grouping": g.name, "rho": np.nan, "shifts": np.zeros(0)})
            continue
        sim = _aggregate(i_n, inp.weight, g)
        rho = stats.spearman_rho(base, sim)
        rows.append({"grouping": g.name, "rho": np.nan if rho is None else rho,
                     "shifts": percentile_shift(base, sim)})
    return rows


def draw_weights(seed: int, sim: int, alpha=(1.0, 1.0, 1.0)) -> np.ndarray:
    """Weight vector of simulation ``sim``; the stream depends only on (seed, sim)."""
    return stats.dirichlet_sample(alpha, np.random.default_rng([seed, sim]))


def run_sensitivity(
    data: pd.DataFrame,
    groupings: dict[str, str | None],
    n_sims: int = 500,
    sample_frac: float = 0.10,
    seed: int = 0,
    alpha=(1.0, 1.0, 1.0),
    weight_col: str | None = None,
    threads: int = 1,
) -> SensitivityReport:
    """Run the Dirichlet perturbation study.

    ``data`` has one row per calculable period with ``record_id``, ``i_w``,
    ``i_c``, ``i_m`` and the grouping columns. ``groupings`` maps a report
    name to a column, or to ``None`` for the period-level ranking.
    """
    sample = subsample(data, sample_frac, seed)
    inp = prepare_inputs(sample, groupings, weight_col)

    def one(s):
        w = draw_weights(seed, s, alpha)
        return w, simulate(inp, w)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(one, range(n_sims)))
    else:
        results = [one(s) for s in range(n_sims)]

    draws = []
    per_sim = []
    by_group: dict[str, dict[str, list]] = {g.name: {"rho": [], "shifts": []} for g in inp.groupings}
    for s, (w, rows) in enumerate(results):
        draws.append({"sim": s, "seed": [seed, s], "weights": [float(x) for x in w]})
        for r in rows:
            sh = r["shifts"]
            per_sim.append({
                "sim": s, "grouping": r["grouping"], "rho": r["rho"],
                "median_shift": float(np.median(sh)) if sh.size else np.nan,
                "max_shift": float(sh.max()) if sh.size else np.nan,
            })
            by_group[r["grouping"]]["rho"].append(r["rho"])
            by_group[r["grouping"]]["shifts"].append(sh)

    table = []
    for g in inp.groupings:
        rhos = np.asarray(by_group[g.name]["rho"], dtype=float)
        rhos = rhos[~np.isnan(rhos)]
        shifts = np.concatenate(by_group[g.name]["shifts"]) if by_group[g.name]["shifts"] else np.zeros(0)
        table.append({
            "grouping": g.name,
            "n_groups": g.n_groups,
            "mean_rho": float(rhos.mean()) if rhos.size else np.nan,
            "min_rho": float(rhos.min()) if rhos.size else np.nan,
            "median_shift": float(np.median(shifts)) if shifts.size else np.nan,
            "max_shift": float(shifts.max()) if shifts.size else np.nan,
        })
    return SensitivityReport(pd.DataFrame(table, columns=REPORT_COLUMNS), pd.DataFrame(per_sim),
                             draws, seed, n_sims, sample_frac, len(sample))


def replay(data: pd.DataFrame, groupings: dict[str, str | None], seed: int, sim: int,
           sample_frac: float = 0.10, alpha=(1.0, 1.0, 1.0), weight_col: str | None = None):
    """Recompute a single simulation from its seed: (weights, per-grouping rows)."""
    inp = prepare_inputs(subsample(data, sample_frac, seed), groupings, weight_col)
    w = draw_weights(seed, sim, alpha)
    rows = simulate(inp, w)
    return w, [{"sim": sim, "grouping": r["grouping"], "rho": r["rho"],
                "median_shift": float(np.median(r["shifts"])) if r["shifts"].size else np.nan,
                "max_shift": float(r["shifts"].max()) if r["shifts"].size else np.nan} for r in rows]
