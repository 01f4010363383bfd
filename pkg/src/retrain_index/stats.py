"""Numeric engine shared by the estimation modules.

Feature encoding, L2-penalised logistic regression fitted by Newton/IRLS,
closed-form OLS, rank statistics (AUC, Spearman), quartile utilities,
classifier metrics and Dirichlet draws.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np
import pandas as pd
from scipy.stats import rankdata

from .errors import ConvergenceError, DegenerateError, SeparationError


DEFAULT_L2 = 1e-6
DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 500


def _is_missing(v) -> bool:
    if v is None:
        return True
    if isinstance(v, float) and math.isnan(v):
        return True
    return isinstance(v, str) and v == ""


def _as_category(v) -> str | None:
    if _is_missing(v):
        return None
    if isinstance(v, (bool, np.bool_)):
        return "True" if v else "False"
    if isinstance(v, (float, np.floating)) and float(v).is_integer():
        return str(int(v))
    return str(v)


def _mode(values: Sequence[str]) -> str:
    # ties broken lexicographically so the choice never depends on row order
    counts: dict[str, int] = {}
    for v in values:
        counts[v] = counts.get(v, 0) + 1
    best = max(counts.values())
    return min(k for k, c in counts.items() if c == best)


# --------------------------------------------------------------------------
# encoding
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class FeatureSpec:
    """Which record fields enter a design matrix, and how.

    ``target`` features get smoothed target encoding (needs labels at fit
    time); the remaining kinds are label-free.
    """

    categorical: tuple[str, ...] = ()
    continuous: tuple[str, ...] = ()
    binary: tuple[str, ...] = ()
    target: tuple[str, ...] = ()
    smoothing: float = 20.0

    def features(self) -> list[str]:
        return sorted({*self.categorical, *self.continuous, *self.binary, *self.target})

    def kind(self, name: str) -> str:
        for k in ("categorical", "continuous", "binary", "target"):
            if name in getattr(self, k):
                return k
        raise KeyError(name)


@dataclass
class DesignMatrix:
    X: np.ndarray
    columns: list[str]
    groups: dict[str, list[int]]
    imputation: dict[str, str]
    degenerate: set[str] = field(default_factory=set)
    encoder: "Encoder | None" = None

    @property
    def n(self) -> int:
        return self.X.shape[0]


@dataclass
class Encoder:
    """Fitted encoding state; ``transform`` replays it on new rows."""

    spec: FeatureSpec
    state: dict[str, dict[str, Any]]

    @classmethod
    def fit(cls, frame: pd.DataFrame, spec: FeatureSpec, y: np.ndarray | None = None) -> "Encoder":
        state: dict[str, dict[str, Any]] = {}
        for name in spec.features():
            if name not in frame.columns:
                raise KeyError(f"feature {name!r} not in records")
            kind = spec.kind(name)
            col = frame[name].tolist()
            if kind == "continuous":
                vals = np.array([np.nan if _is_missing(v) else float(v) for v in col], dtype=float)
                present = vals[~np.isnan(vals)]
                if present.size == 0:
                    raise DegenerateError(f"feature {name!r} has no observed values")
                median = float(np.median(present))
                filled = np.where(np.isnan(vals), median, vals)
                mean = float(filled.mean())
                sd = float(filled.std())
                state[name] = {"kind": kind, "median": median, "mean": mean, "sd": sd}
                continue
            cats = [_as_category(v) for v in col]
            present = [c for c in cats if c is not None]
            if not present:
                raise DegenerateError(f"feature {name!r} has no observed values")
            mode = _mode(present)
            filled = [mode if c is None else c for c in cats]
            entry: dict[str, Any] = {"kind": kind, "mode": mode}
            if kind == "categorical":
                entry["levels"] = sorted(set(filled))
            elif kind == "binary":
                levels = sorted(set(filled))
                if len(levels) > 2:
                    raise ValueError(f"binary feature {name!r} has levels {levels}")
                entry["positive"] = "True" if "True" in levels else levels[-1]
            else:
                if y is None:
                    raise ValueError(f"target encoding of {name!r} needs labels")
                yy = np.asarray(y, dtype=float)
                prior = float(yy.mean())
                sums: dict[str, float] = {}
                counts: dict[str, int] = {}
                for c, t in zip(filled, yy):
                    sums[c] = sums.get(c, 0.0) + t
                    counts[c] = counts.get(c, 0) + 1
                m = spec.smoothing
                entry["prior"] = prior
                entry["table"] = {
                    c: (sums[c] + m * prior) / (counts[c] + m) for c in sorted(counts)
                }
            state[name] = entry
        return cls(spec, state)

    def transform(self, frame: pd.DataFrame) -> DesignMatrix:
        blocks: list[np.ndarray] = []
        columns: list[str] = []
        groups: dict[str, list[int]] = {}
        imputation: dict[str, str] = {}
        degenerate: set[str] = set()
        n = len(frame)
        for name in self.spec.features():
            st = self.state[name]
            col = frame[name].tolist()
            start = len(columns)
            if st["kind"] == "continuous":
                vals = np.array([np.nan if _is_missing(v) else float(v) for v in col], dtype=float)
                vals = np.where(np.isnan(vals), st["median"], vals)
                if st["sd"] > 0:
                    vals = (vals - st["mean"]) / st["sd"]
                else:
                    vals = np.zeros(n)
                    degenerate.add(name)
                blocks.append(vals[:, None])
                columns.append(name)
                imputation[name] = "median"
            else:
                cats = [_as_category(v) for v in col]
                cats = [st["mode"] if c is None else c for c in cats]
                imputation[name] = "mode"
                if st["kind"] == "categorical":
                    levels = st["levels"]
                    index = {lv: i for i, lv in enumerate(levels)}
                    block = np.zeros((n, len(levels)))
                    for r, c in enumerate(cats):
                        if c in index:  # unseen levels stay all-zero
                            block[r, index[c]] = 1.0
                    blocks.append(block)
                    columns.extend(f"{name}={lv}" for lv in levels)
                elif st["kind"] == "binary":
                    blocks.append(np.array([[1.0 if c == st["positive"] else 0.0] for c in cats]).reshape(n, 1))
                    columns.append(name)
                else:
                    table, prior = st["table"], st["prior"]
                    blocks.append(np.array([table.get(c, prior) for c in cats], dtype=float).reshape(n, 1))
                    columns.append(name)
                    imputation[name] = "mode+target"
            groups[name] = list(range(start, len(columns)))
        X = np.hstack(blocks) if blocks else np.zeros((n, 0))
        return DesignMatrix(X, columns, groups, imputation, degenerate, self)

    def to_dict(self) -> dict:
        return {"spec": {k: list(v) if isinstance(v, tuple) else v for k, v in self.spec.__dict__.items()},
                "state": self.state}

    @classmethod
    def from_dict(cls, d: dict) -> "Encoder":
        s = d["spec"]
        spec = FeatureSpec(
            categorical=tuple(s["categorical"]),
            continuous=tuple(s["continuous"]),
            binary=tuple(s["binary"]),
            target=tuple(s["target"]),
            smoothing=float(s["smoothing"]),
        )
        return cls(spec, d["state"])


def encode(frame: pd.DataFrame, spec: FeatureSpec, y: np.ndarray | None = None) -> DesignMatrix:
    """Fit an encoder on ``frame`` and return its design matrix."""
    return Encoder.fit(frame, spec, y).transform(frame)


# --------------------------------------------------------------------------
# logistic regression
# --------------------------------------------------------------------------


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _with_intercept(X: np.ndarray) -> np.ndarray:
    return np.hstack([np.ones((X.shape[0], 1)), X])


def _penalty(k: int, l2: float) -> np.ndarray:
    pen = np.full(k, float(l2))
    pen[0] = 0.0
    return pen


def log_likelihood(beta, X, y, l2: float = 0.0) -> float:
    """Penalised log-likelihood per observation. ``beta[0]`` is the intercept."""
    A = _with_intercept(np.asarray(X, dtype=float))
    eta = A @ beta
    y = np.asarray(y, dtype=float)
    ll = float(np.sum(y * eta - np.logaddexp(0.0, eta)))
    ll -= 0.5 * l2 * float(np.sum(np.asarray(beta)[1:] ** 2))
    return ll / len(y)


def gradient(beta, X, y, l2: float = 0.0) -> np.ndarray:
    A = _with_intercept(np.asarray(X, dtype=float))
    p = sigmoid(A @ beta)
    g = A.T @ (np.asarray(y, dtype=float) - p) - _penalty(A.shape[1], l2) * beta
    return g / len(y)


@dataclass
class LogisticModel:
    intercept: float
    coef: np.ndarray
    columns: list[str]
    l2: float
    iterations: int
    grad_norm: float
    encoder: Encoder | None = None

    @property
    def beta(self) -> np.ndarray:
        return np.concatenate([[self.intercept], self.coef])

    def to_json(self) -> str:
        return json.dumps(
            {
                "intercept": self.intercept,
                "coef": [float(c) for c in self.coef],
                "columns": self.columns,
                "l2": self.l2,
                "iterations": self.iterations,
                "grad_norm": self.grad_norm,
                "encoder": self.encoder.to_dict() if self.encoder else None,
            },
            indent=2,
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "LogisticModel":
        d = json.loads(text)
        enc = Encoder.from_dict(d["encoder"]) if d.get("encoder") else None
        return cls(d["intercept"], np.asarray(d["coef"], dtype=float), d["columns"], d["l2"],
                   d["iterations"], d["grad_norm"], enc)


def fit_logistic(
    X,
    y,
    l2: float = DEFAULT_L2,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> LogisticModel:
    """Maximise the L2-penalised logistic log-likelihood by damped Newton steps.

    The intercept is never penalised. Convergence is declared when the
    per-observation gradient norm drops below ``tol``.
    """
    if l2 < 0:
        raise ValueError("l2 must be >= 0")
    dm = X if isinstance(X, DesignMatrix) else None
    Xa = np.asarray(dm.X if dm else X, dtype=float)
    if Xa.ndim == 1:
        Xa = Xa[:, None]
    y = np.asarray(y, dtype=float)
    if y.shape[0] != Xa.shape[0]:
        raise ValueError("X and y have different row counts")
    if not (np.any(y == 1) and np.any(y == 0)):
        raise DegenerateError("logistic fit needs at least one positive and one negative label")
    A = _with_intercept(Xa)
    n, k = A.shape
    pen = _penalty(k, l2)
    beta = np.zeros(k)
    rate = y.mean()
    beta[0] = math.log(rate / (1 - rate))

    def objective(b):
        eta = A @ b
        return float(np.sum(y * eta - np.logaddexp(0.0, eta)) - 0.5 * np.sum(pen * b * b))

    obj = objective(beta)
    gnorm = math.inf
    it = 0
    for it in range(1, max_iter + 1):
        eta = A @ beta
        p = sigmoid(eta)
        g = A.T @ (y - p) - pen * beta
        gnorm = float(np.linalg.norm(g) / n)
        if gnorm < tol:
            it -= 1
            break
        w = p * (1 - p)
        H = (A * w[:, None]).T @ A + np.diag(pen)
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, g, rcond=None)[0]
        t = 1.0
        while t > 1e-10:
            cand = beta + t * step
            cobj = objective(cand)
            if cobj >= obj - 1e-12 * abs(obj):
                break
            t *= 0.5
        beta, obj = cand, cobj
        if l2 == 0 and float(np.max(np.abs(A @ beta))) > 30:
            raise SeparationError(
                "classes appear perfectly separated; refit with l2 > 0"
            )
    else:
        eta = A @ beta
        g = A.T @ (y - sigmoid(eta)) - pen * beta
        gnorm = float(np.linalg.norm(g) / n)
        if gnorm >= tol:
            raise ConvergenceError(
                f"logistic fit did not converge in {max_iter} iterations",
                {"iterations": max_iter, "grad_norm": gnorm},
            )
    columns = dm.columns if dm else [f"x{i}" for i in range(k - 1)]
    return LogisticModel(float(beta[0]), beta[1:].copy(), list(columns), float(l2), it, gnorm,
                         dm.encoder if dm else None)


def predict_proba(model: LogisticModel, X) -> np.ndarray:
    if isinstance(X, DesignMatrix):
        if X.columns != model.columns:
            raise ValueError("design matrix columns do not match the fitted model")
        X = X.X
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[1] != model.coef.shape[0]:
        raise ValueError(f"expected {model.coef.shape[0]} columns, got {X.shape[1]}")
    return sigmoid(model.intercept + X @ model.coef)


# --------------------------------------------------------------------------
# rank statistics, regression, metrics
# --------------------------------------------------------------------------


def auc(scores, labels) -> float:
    """Area under the ROC curve as the Mann-Whitney U statistic; ties count 1/2."""
    s = np.asarray(scores, dtype=float)
    lab = np.asarray(labels).astype(bool)
    n1 = int(lab.sum())
    n0 = lab.size - n1
    if n1 == 0 or n0 == 0:
        raise DegenerateError("AUC needs both classes")
    ranks = rankdata(s, method="average")
    u = ranks[lab].sum() - n1 * (n1 + 1) / 2.0
    return float(u / (n1 * n0))


@dataclass(frozen=True)
class OLSFit:
    slope: float
    intercept: float
    r2: float

    def __iter__(self):
        return iter((self.slope, self.intercept, self.r2))


def ols(x, y) -> OLSFit:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError("x and y lengths differ")
    if x.size < 2:
        raise DegenerateError("OLS needs at least two points")
    xc = x - x.mean()
    yc = y - y.mean()
    sxx = float(xc @ xc)
    if sxx == 0:
        raise DegenerateError("degenerate regressor: x is constant")
    sxy = float(xc @ yc)
    syy = float(yc @ yc)
    slope = sxy / sxx
    intercept = float(y.mean() - slope * x.mean())
    r2 = 0.0 if syy == 0 else min(1.0, sxy * sxy / (sxx * syy))
    return OLSFit(slope, intercept, r2)


def spearman_rho(a, b) -> float | None:
    """Pearson correlation of average ranks. ``None`` when either side is constant."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("spearman_rho: length mismatch")
    if a.size < 2:
        raise ValueError("spearman_rho needs at least two observations")
    ra = rankdata(a, method="average")
    rb = rankdata(b, method="average")
    ra -= ra.mean()
    rb -= rb.mean()
    den = math.sqrt(float(ra @ ra) * float(rb @ rb))
    if den == 0:
        return None
    return max(-1.0, min(1.0, float(ra @ rb) / den))


def percentile(values, q):
    """Linear-interpolation percentile(s), ``q`` on the 0-100 scale."""
    return np.percentile(np.asarray(values, dtype=float), q, method="linear")


@dataclass(frozen=True)
class QuartileCuts:
    lo: float
    q1: float
    q2: float
    q3: float
    hi: float
    degenerate: bool


def quartile_cutpoints(values) -> QuartileCuts:
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise DegenerateError("quartiles of an empty set")
    q1, q2, q3 = (float(x) for x in percentile(v, [25, 50, 75]))
    lo, hi = float(v.min()), float(v.max())
    return QuartileCuts(lo, q1, q2, q3, hi, degenerate=lo == hi)


def assign_quartiles(values, cuts: QuartileCuts) -> np.ndarray:
    """Quartile label 1..4 with half-open bins [Q_k, Q_k+1) and a closed top bin."""
    v = np.asarray(values, dtype=float)
    if cuts.degenerate:
        return np.ones(v.shape, dtype=int)
    return np.searchsorted([cuts.q1, cuts.q2, cuts.q3], v, side="right") + 1


def classifier_report(probabilities, labels, threshold: float = 0.5) -> dict:
    p = np.asarray(probabilities, dtype=float)
    y = np.asarray(labels).astype(int)
    if set(np.unique(y)) != {0, 1}:
        raise DegenerateError("classifier report needs both classes among the labels")
    pred = (p >= threshold).astype(int)
    tp = int(np.sum((pred == 1) & (y == 1)))
    tn = int(np.sum((pred == 0) & (y == 0)))
    fp = int(np.sum((pred == 1) & (y == 0)))
    fn = int(np.sum((pred == 0) & (y == 1)))

    def _div(a, b):
        return a / b if b else 0.0

    rows = {}
    for cls, (hit, false_pos, miss) in {1: (tp, fp, fn), 0: (tn, fn, fp)}.items():
        prec = _div(hit, hit + false_pos)
        rec = _div(hit, hit + miss)
        f1 = _div(2 * prec * rec, prec + rec)
        rows[cls] = {"precision": prec, "recall": rec, "f1": f1, "support": hit + miss}
    n = y.size
    macro = {m: (rows[0][m] + rows[1][m]) / 2 for m in ("precision", "recall", "f1")}
    weighted = {m: (rows[0][m] * rows[0]["support"] + rows[1][m] * rows[1]["support"]) / n
                for m in ("precision", "recall", "f1")}
    return {
        "classes": rows,
        "accuracy": (tp + tn) / n,
        "macro": macro,
        "weighted": weighted,
        "confusion": {"tp": tp, "fp": fp, "fn": fn, "tn": tn},
        "threshold": threshold,
    }


def dirichlet_sample(alpha: Iterable[float], rng: np.random.Generator) -> np.ndarray:
    """One Dirichlet draw built from normalised independent gamma variates."""
    a = np.asarray(list(alpha), dtype=float)
    if a.size == 0 or np.any(~(a > 0)):
        raise ValueError("Dirichlet concentration must be strictly positive")
    g = rng.standard_gamma(a)
    while not np.all(g > 0):  # underflow for tiny alpha
        g = rng.standard_gamma(a)
    return g / g.sum()
