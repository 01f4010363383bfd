"""Group-level aggregation of period scores.

``Incidence_g`` is the weighted share of calculable periods with a strictly
positive index, ``Intensity_g`` the weighted mean index among those, and the
group index is their product.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from . import stats
from .errors import DegenerateError

MIN_GROUP_SIZE = 100

GROUPINGS = {
    "state": "state",
    "wdb": "wdb_id",
    "age": "age_bin",
    "funding_stream": "funding_stream",
    "training_service_type": "training_service_type",
    "received_training": "received_training",
    "program_year": "program_year",
    "employment_status": "employment_status_at_entry",
    "race_ethnicity": "race_ethnicity",
    "sex": "sex",
    "low_income": "low_income",
    "education_level": "education_level",
    "pre_occupation": "pre_occ",
    "pre_subsector": "pre_naics3",
    "pre_rti_cognitive": "pre_rti_c_bin",
    "pre_rti_manual": "pre_rti_m_bin",
}

SUMMARY_COLUMNS = [
    "grouping", "group", "n_total", "n_periods", "pct_with_index", "weighted_n",
    "incidence", "intensity", "i_g", "mean_i_n", "mean_i_w", "mean_i_c", "mean_i_m", "suppressed",
]
_STAT_COLUMNS = ["incidence", "intensity", "i_g", "mean_i_n", "mean_i_w", "mean_i_c", "mean_i_m"]


@dataclass(frozen=True)
class GroupSummary:
    grouping: str
    group: str
    n_total: int
    n_periods: int
    pct_with_index: float
    weighted_n: float
    incidence: float
    intensity: float
    i_g: float
    mean_i_n: float
    mean_i_w: float
    mean_i_c: float
    mean_i_m: float
    suppressed: bool


def _label(v) -> str:
    if v is None or (isinstance(v, float) and np.isnan(v)):
        return "Missing"
    if isinstance(v, (float, np.floating)) and float(v).is_integer():
        return str(int(v))
    return str(v)


def summarize(i_n, weights, comps=None) -> dict:
    """Incidence / intensity / group index for one set of calculable periods."""
    i_n = np.asarray(i_n, dtype=float)
    w = np.ones_like(i_n) if weights is None else np.asarray(weights, dtype=float)
    W = float(w.sum())
    pos = i_n > 0
    W_pos = float(w[pos].sum())
    incidence = W_pos / W if W > 0 else np.nan
    intensity = float(np.sum(w[pos] * i_n[pos]) / W_pos) if W_pos > 0 else np.nan
    out = {
        "weighted_n": W,
        "incidence": incidence,
        "intensity": intensity,
        "i_g": incidence * intensity if W_pos > 0 else (0.0 if W > 0 else np.nan),
        "mean_i_n": float(np.sum(w * i_n) / W) if W > 0 else np.nan,
    }
    for name in ("i_w", "i_c", "i_m"):
        if comps is not None and name in comps:
            x = np.asarray(comps[name], dtype=float)
            out[f"mean_{name}"] = float(np.sum(w * x) / W) if W > 0 else np.nan
        else:
            out[f"mean_{name}"] = np.nan
    return out


def group_index(
    data: pd.DataFrame,
    by: str,
    weight_col: str | None = "weight",
    min_group_size: int = MIN_GROUP_SIZE,
    grouping: str | None = None,
) -> pd.DataFrame:
    """One summary row per group of ``by``, sorted by group label.

    ``data`` holds every period of the restricted sample with ``i_n``,
    ``i_w``, ``i_c``, ``i_m`` and a boolean ``calculable``. Only calculable
    periods enter the statistics; the rest feed the coverage column. Pass
    ``weight_col=None`` for unweighted aggregation.
    """
    if by not in data.columns:
        raise KeyError(f"unknown grouping key {by!r}")
    labels = data[by].map(_label).to_numpy()
    calc = data["calculable"].to_numpy(dtype=bool)
    w_all = None if weight_col is None else data[weight_col].to_numpy(dtype=float)
    i_n = data["i_n"].to_numpy(dtype=float)
    comps = {c: data[c].to_numpy(dtype=float) for c in ("i_w", "i_c", "i_m") if c in data.columns}
    rows = []
    for g in sorted(set(labels)):
        in_g = labels == g
        sel = in_g & calc
        n_total = int(in_g.sum())
        n_calc = int(sel.sum())
        suppressed = n_calc < min_group_size
        row = {
            "grouping": grouping or by,
            "group": g,
            "n_total": n_total,
            "n_periods": n_calc,
            "pct_with_index": n_calc / n_total if n_total else np.nan,
            "suppressed": suppressed,
        }
        stats_ = summarize(i_n[sel], None if w_all is None else w_all[sel],
                           {k: v[sel] for k, v in comps.items()})
        row.update(stats_)
        if suppressed:
            for c in _STAT_COLUMNS:
                row[c] = np.nan
        rows.append(row)
    return pd.DataFrame(rows, columns=SUMMARY_COLUMNS)


def add_bins(data: pd.DataFrame, age_width: float = 1.0, rti_bins: int = 4,
             pre_rti: pd.DataFrame | None = None) -> pd.DataFrame:
    """Derived grouping columns: ``age_bin`` and, when given, pre-program RTI bins.

    ``pre_rti`` has ``pre_c`` and ``pre_m`` columns aligned with ``data``.
    """
    out = data.copy()
    if "age" in out.columns:
        age = out["age"].astype(float)
        start = np.floor(age / age_width) * age_width
        out["age_bin"] = [None if np.isnan(a) else _label(a) for a in start]
    if pre_rti is not None:
        for ch in ("c", "m"):
            v = pre_rti[f"pre_{ch}"].to_numpy(dtype=float)
            ok = ~np.isnan(v)
            lab = np.full(v.shape, None, dtype=object)
            if ok.any():
                edges = stats.percentile(v[ok], np.linspace(0, 100, rti_bins + 1)[1:-1])
                idx = np.searchsorted(edges, v[ok], side="right") + 1
                lab[ok] = [f"Q{i}" for i in idx]
            out[f"pre_rti_{ch}_bin"] = lab
    return out


def subgroup_tables(data: pd.DataFrame, groupings=None, weight_col: str | None = "weight",
                    min_group_size: int = MIN_GROUP_SIZE) -> dict[str, pd.DataFrame]:
    """Summary tables keyed by grouping name (see ``GROUPINGS``)."""
    names = list(GROUPINGS) if groupings is None else list(groupings)
    tables = {}
    for name in names:
        col = GROUPINGS.get(name, name)
        if col not in data.columns:
            continue
        tables[name] = group_index(data, col, weight_col, min_group_size, grouping=name)
    return tables


def to_latex(table: pd.DataFrame, digits: int = 2) -> str:
    """Rows in the layout Group & % w/ Index & Incidence & Intensity & I_n & I^W & I^C & I^M."""
    cols = ["pct_with_index", "incidence", "intensity", "mean_i_n", "mean_i_w", "mean_i_c", "mean_i_m"]
    lines = []
    for _, r in table.iterrows():
        if r["suppressed"]:
            cells = [f"{r['pct_with_index']:.{digits}f}"] + ["--"] * (len(cols) - 1)
        else:
            cells = ["--" if pd.isna(r[c]) else f"{r[c]:.{digits}f}" for c in cols]
        group = str(r["group"]).replace("&", r"\&").replace("_", r"\_")
        lines.append(f"{group} & " + " & ".join(cells) + r" \\")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# quartile transitions and binscatter
# --------------------------------------------------------------------------


@dataclass
class TransitionMatrix:
    percent: np.ndarray
    deviation: np.ndarray
    row_weight: np.ndarray
    degenerate_pre: bool
    degenerate_post: bool

    def to_frame(self, name: str = "") -> pd.DataFrame:
        rows = []
        for x in range(4):
            for y in range(4):
                rows.append({"measure": name, "pre_quartile": f"Q{x + 1}", "post_quartile": f"Q{y + 1}",
                             "percent": self.percent[x, y], "deviation": self.deviation[x, y]})
        return pd.DataFrame(rows)


def quartile_transition_matrix(pre, post, weights=None) -> TransitionMatrix:
    """Weighted share of each pre-quartile landing in each post-quartile (rows sum to 100)."""
    pre = np.asarray(pre, dtype=float)
    post = np.asarray(post, dtype=float)
    if pre.shape != post.shape:
        raise ValueError("pre and post must be paired")
    if pre.size == 0:
        raise DegenerateError("no paired values")
    w = np.ones_like(pre) if weights is None else np.asarray(weights, dtype=float)
    cp, cq = stats.quartile_cutpoints(pre), stats.quartile_cutpoints(post)
    qx = stats.assign_quartiles(pre, cp) - 1
    qy = stats.assign_quartiles(post, cq) - 1
    counts = np.zeros((4, 4))
    np.add.at(counts, (qx, qy), w)
    row = counts.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        pct = 100.0 * counts / row[:, None]
    return TransitionMatrix(pct, pct - 25.0, row, cp.degenerate, cq.degenerate)


@dataclass
class Binscatter:
    bins: pd.DataFrame
    fit: stats.OLSFit


def binscatter(x, y, n_bins: int = 20) -> Binscatter:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if n_bins < 2:
        raise ValueError("binscatter needs at least two bins")
    if x.size < n_bins:
        raise ValueError(f"{x.size} points cannot fill {n_bins} bins")
    order = np.argsort(x, kind="stable")
    rows = []
    for b, idx in enumerate(np.array_split(order, n_bins)):
        rows.append({"bin": b + 1, "n": idx.size, "x_mean": float(x[idx].mean()),
                     "y_mean": float(y[idx].mean())})
    return Binscatter(pd.DataFrame(rows), stats.ols(x, y))
