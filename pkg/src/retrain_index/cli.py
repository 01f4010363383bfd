"""Command-line pipeline: synth, ingest, index, reweight, aggregate, sensitivity, match, report.

Every stage reads files and writes files under ``<out>/<stage>/`` together
with a ``manifest.json`` listing input and output hashes, the config hash
and the seed. Exit codes: 0 ok, 1 internal error, 2 missing artifact,
3 config error.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import os
import shutil
import sys
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
import yaml
from threadpoolctl import threadpool_limits

from . import __version__, aggregate, index, ingest, matching, reweight, sensitivity, synth
from .errors import ConfigError, MissingArtifactError
from .stats import FeatureSpec

log = logging.getLogger("retrain_index")

OUT_ENV = "RETRAIN_INDEX_OUT"
STAGES = ("synth", "ingest", "index", "reweight", "aggregate", "sensitivity", "match", "report")
FORMATS = ("csv", "json", "latex")

DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "out": "retrain_index_out",
    "format": "csv",
    "threads": 1,
    "synth": {"n": 10_000},
    "inputs": {},
    "ingest": {"max_reject_fraction": 0.5, "year_range": list(ingest.YEAR_RANGE)},
    "index": {"weights": list(index.DEFAULT_WEIGHTS), "winsor": list(index.DEFAULT_WINSOR)},
    "reweight": {
        "variant": "occupation",
        "l2": 1e-6,
        "cap": None,
        "categorical": list(reweight.IPW_FEATURES.categorical),
        "continuous": list(reweight.IPW_FEATURES.continuous),
        "binary": list(reweight.IPW_FEATURES.binary),
    },
    "aggregate": {
        "variant": "occupation",
        "weighted": True,
        "min_group_size": aggregate.MIN_GROUP_SIZE,
        "groupings": list(aggregate.GROUPINGS),
        "age_width": 1,
        "rti_bins": 4,
        "binscatter_bins": 20,
    },
    "sensitivity": {
        "variant": "occupation",
        "n_sims": 500,
        "sample_frac": 0.10,
        "weighted": False,
        "groupings": ["participation_period", "state", "wdb", "training_service_type", "funding_stream"],
    },
    "match": {
        "variant": "occupation",
        "n_boot": 1000,
        "level": 0.95,
        "caliper": 0.1,
        "weighted": True,
        "specs": [
            {"name": "received_training", "treatment_field": "received_training", "treatment_value": True},
            {"name": "registered_apprenticeship", "treatment_field": "training_service_type",
             "treatment_value": "RegisteredApprenticeship"},
        ],
    },
}

_SYNTH_FIELDS = {f.name for f in dataclasses.fields(synth.SynthConfig)}


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------


def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _require(cond: bool, field: str, message: str) -> None:
    if not cond:
        raise ConfigError(field, message)


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def validate(cfg: dict) -> dict:
    """Check types and ranges; raises ConfigError naming the offending field."""
    known = set(DEFAULTS)
    for k in cfg:
        _require(k in known, k, "unknown section")
    _require(isinstance(cfg["seed"], int) and not isinstance(cfg["seed"], bool) and cfg["seed"] >= 0,
             "seed", "must be a non-negative integer")
    _require(cfg["format"] in FORMATS, "format", f"must be one of {', '.join(FORMATS)}")
    _require(isinstance(cfg["threads"], int) and cfg["threads"] >= 1, "threads", "must be a positive integer")
    for k in cfg["synth"]:
        _require(k in _SYNTH_FIELDS, f"synth.{k}", "unknown field")
    w = cfg["index"]["weights"]
    _require(isinstance(w, list) and len(w) == 3, "index.weights", "must list three weights")
    for i, x in enumerate(w):
        _require(_is_num(x) and x > 0, f"index.weights[{i}]", "must be positive")
    wz = cfg["index"]["winsor"]
    if wz is not None:
        _require(isinstance(wz, list) and len(wz) == 2 and all(_is_num(x) for x in wz)
                 and 0 <= wz[0] < wz[1] <= 100, "index.winsor", "must be [lo, hi] with 0 <= lo < hi <= 100")
    for section in ("reweight", "aggregate", "sensitivity", "match"):
        _require(cfg[section]["variant"] in index.VARIANTS, f"{section}.variant",
                 f"must be one of {', '.join(index.VARIANTS)}")
    cap = cfg["reweight"]["cap"]
    _require(cap is None or (_is_num(cap) and cap > 0), "reweight.cap", "must be positive or null")
    _require(_is_num(cfg["reweight"]["l2"]) and cfg["reweight"]["l2"] >= 0, "reweight.l2", "must be >= 0")
    a = cfg["aggregate"]
    _require(isinstance(a["min_group_size"], int) and a["min_group_size"] >= 0,
             "aggregate.min_group_size", "must be a non-negative integer")
    for i, g in enumerate(a["groupings"]):
        _require(g in aggregate.GROUPINGS, f"aggregate.groupings[{i}]", f"unknown grouping {g!r}")
    _require(_is_num(a["age_width"]) and a["age_width"] > 0, "aggregate.age_width", "must be positive")
    _require(isinstance(a["rti_bins"], int) and a["rti_bins"] >= 2, "aggregate.rti_bins", "must be >= 2")
    _require(isinstance(a["binscatter_bins"], int) and a["binscatter_bins"] >= 2,
             "aggregate.binscatter_bins", "must be >= 2")
    s = cfg["sensitivity"]
    _require(isinstance(s["n_sims"], int) and s["n_sims"] >= 1, "sensitivity.n_sims", "must be >= 1")
    _require(_is_num(s["sample_frac"]) and 0 < s["sample_frac"] <= 1, "sensitivity.sample_frac",
             "must lie in (0, 1]")
    for i, g in enumerate(s["groupings"]):
        _require(g == sensitivity.PERIOD or g in aggregate.GROUPINGS, f"sensitivity.groupings[{i}]",
                 f"unknown grouping {g!r}")
    m = cfg["match"]
    _require(isinstance(m["n_boot"], int) and m["n_boot"] >= 0, "match.n_boot", "must be >= 0")
    _require(_is_num(m["level"]) and 0 < m["level"] < 1, "match.level", "must lie in (0, 1)")
    _require(_is_num(m["caliper"]) and m["caliper"] > 0, "match.caliper", "must be positive")
    for i, sp in enumerate(m["specs"]):
        _require(isinstance(sp, dict) and {"name", "treatment_field", "treatment_value"} <= set(sp),
                 f"match.specs[{i}]", "needs name, treatment_field and treatment_value")
    return cfg


def load_config(path: str | None, overrides: dict | None = None) -> dict:
    raw: dict = {}
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise MissingArtifactError(str(p))
        try:
            raw = yaml.safe_load(p.read_text(encoding="utf-8")) or {}
        except yaml.YAMLError as exc:
            raise ConfigError("<root>", f"not valid YAML: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("<root>", "top level must be a mapping")
    for k, v in raw.items():
        if isinstance(DEFAULTS.get(k), dict) and v is not None and not isinstance(v, dict):
            raise ConfigError(k, "must be a mapping")
    cfg = _merge(DEFAULTS, {k: v for k, v in raw.items() if v is not None})
    if os.environ.get(OUT_ENV):
        cfg["out"] = os.environ[OUT_ENV]
    for k, v in (overrides or {}).items():
        if v is not None:
            cfg[k] = v
    return validate(cfg)


def config_hash(cfg: dict) -> str:
    """Hash of everything that can change outputs (not the output path or thread count)."""
    core = {k: v for k, v in cfg.items() if k not in ("out", "threads")}
    return hashlib.sha256(json.dumps(core, sort_keys=True, default=str).encode()).hexdigest()


# --------------------------------------------------------------------------
# stage plumbing
# --------------------------------------------------------------------------


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class Stage:
    """Output directory of one stage; tracks written files for the manifest."""

    def __init__(self, cfg: dict, name: str):
        self.cfg = cfg
        self.name = name
        self.root = Path(cfg["out"])
        self.dir = self.root / name
        if self.dir.exists():
            shutil.rmtree(self.dir)
        self.dir.mkdir(parents=True)
        self.inputs: dict[str, str] = {}
        self.outputs: list[Path] = []

    def use(self, role: str, path) -> Path:
        p = Path(path)
        if not p.exists():
            raise MissingArtifactError(str(p))
        self.inputs[role] = sha256_file(p)
        return p

    def path(self, name: str) -> Path:
        p = self.dir / name
        self.outputs.append(p)
        return p

    def table(self, df: pd.DataFrame, name: str, latex=None) -> None:
        """Write ``name`` as CSV, plus JSON or LaTeX rows when requested."""
        df.to_csv(self.path(f"{name}.csv"), index=False, lineterminator="\n", float_format="%.12g")
        fmt = self.cfg["format"]
        if fmt == "json":
            self.path(f"{name}.json").write_text(
                df.to_json(orient="records", indent=1, double_precision=12) + "\n", encoding="utf-8")
        elif fmt == "latex":
            body = latex(df) if latex is not None else _generic_latex(df)
            self.path(f"{name}.tex").write_text(body, encoding="utf-8")

    def json(self, obj, name: str) -> None:
        self.path(name).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n",
                                   encoding="utf-8")

    def finish(self) -> Path:
        manifest = {
            "stage": self.name,
            "version": __version__,
            "seed": self.cfg["seed"],
            "config_sha256": config_hash(self.cfg),
            "inputs": dict(sorted(self.inputs.items())),
            "outputs": {p.relative_to(self.root).as_posix(): sha256_file(p)
                        for p in sorted(self.outputs)},
        }
        p = self.dir / "manifest.json"
        p.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return p


def _jsonable(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return o.as_posix()
    raise TypeError(f"not serialisable: {type(o).__name__}")


def _generic_latex(df: pd.DataFrame) -> str:
    lines = []
    for _, r in df.iterrows():
        cells = []
        for v in r:
            if isinstance(v, float):
                cells.append("--" if np.isnan(v) else f"{v:.3f}")
            else:
                cells.append(str(v).replace("_", r"\_").replace("&", r"\&"))
        lines.append(" & ".join(cells) + r" \\")
    return "\n".join(lines) + "\n"


def _upstream(cfg: dict, stage: str, name: str) -> Path:
    return Path(cfg["out"]) / stage / name


def _input_paths(cfg: dict) -> dict[str, Path]:
    """Records, codebooks and CPI: explicit ``inputs`` entries, else the synth stage outputs."""
    names = {"records": "records.csv", "soc": "soc_structure.csv", "employment": "employment_matrix.csv",
             "rti": "rti.csv", "cpi": "cpi.csv"}
    out = {}
    for role, fname in names.items():
        given = cfg["inputs"].get(role)
        out[role] = Path(given) if given else _upstream(cfg, "synth", fname)
    if cfg["inputs"].get("schema"):
        out["schema"] = Path(cfg["inputs"]["schema"])
    return out


def _load_book(stage: Stage) -> ingest.TaskIntensityBook:
    paths = _input_paths(stage.cfg)
    return ingest.load_codebooks(stage.use("soc", paths["soc"]), stage.use("employment", paths["employment"]),
                                 stage.use("rti", paths["rti"]))


def _variant_scores(stage: Stage, variant: str) -> pd.DataFrame:
    scores = pd.read_csv(stage.use("scores", _upstream(stage.cfg, "index", "scores.csv")),
                         dtype={"record_id": str, "reason": str}, float_precision="round_trip",
                         keep_default_na=False, na_values=[""])
    scores["calculable"] = scores["calculable"].astype(str).str.lower() == "true"
    return scores[scores["variant"] == variant].reset_index(drop=True)


def _frame(stage: Stage) -> pd.DataFrame:
    return ingest.read_frame(stage.use("frame", _upstream(stage.cfg, "ingest", "frame.csv")))


def _analysis_data(stage: Stage, variant: str, with_weights: bool) -> pd.DataFrame:
    """Usable restricted periods with scores for ``variant`` and (optionally) IPW weights."""
    frame = _frame(stage)
    frame = frame[frame["exclusion"].isna()].reset_index(drop=True)
    s = _variant_scores(stage, variant)
    data = frame.merge(s[["record_id", "i_w", "i_c", "i_m", "i_n", "calculable"]], on="record_id", how="left")
    data["calculable"] = data["calculable"].fillna(False).astype(bool)
    if with_weights:
        wpath = _upstream(stage.cfg, "reweight", "weights.csv")
        w = pd.read_csv(stage.use("weights", wpath), dtype={"record_id": str}, float_precision="round_trip")
        data = data.merge(w[["record_id", "w_hat"]], on="record_id", how="left").rename(columns={"w_hat": "weight"})
    return data


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def cmd_synth(cfg: dict) -> Path:
    stage = Stage(cfg, "synth")
    params = dict(cfg["synth"])
    params.setdefault("seed", cfg["seed"])
    for k in ("years", "funding_weights", "winsor"):
        if k in params and params[k] is not None:
            params[k] = tuple(params[k])
    try:
        sc = synth.SynthConfig(**params)
    except (TypeError, ValueError) as exc:
        raise ConfigError("synth", str(exc)) from exc
    ds = synth.generate(sc)
    for p in synth.write_dataset(ds, stage.dir).values():
        stage.outputs.append(p)
    return stage.finish()


def cmd_ingest(cfg: dict) -> Path:
    stage = Stage(cfg, "ingest")
    paths = _input_paths(cfg)
    book = _load_book(stage)
    cpi = ingest.load_cpi(stage.use("cpi", paths["cpi"]))
    schema = ingest.load_schema_config(stage.use("schema", paths["schema"])) if "schema" in paths else None
    recs, report = ingest.load_records(stage.use("records", paths["records"]), schema, book,
                                       cfg["ingest"]["max_reject_fraction"], tuple(cfg["ingest"]["year_range"]))
    prepared, counts = ingest.prepare(recs, book, cpi)
    ingest.write_frame(ingest.records_to_frame(prepared), stage.path("frame.csv"))
    summary = report.to_dict()
    summary["restriction"] = counts
    summary["n_restricted"] = len(prepared)
    stage.json(summary, "ingest_report.json")
    return stage.finish()


def cmd_index(cfg: dict) -> Path:
    stage = Stage(cfg, "index")
    book = _load_book(stage)
    frame = _frame(stage)
    winsor = tuple(cfg["index"]["winsor"]) if cfg["index"]["winsor"] is not None else None
    scores, ctx = index.score_all(frame, book, winsor, tuple(cfg["index"]["weights"]))
    scores.to_csv(stage.path("scores.csv"), index=False, lineterminator="\n")
    stage.json(ctx.to_dict(), "normalization.json")
    occ = scores[scores["variant"] == "occupation"]
    sub = scores[scores["variant"] == "subsector"]
    try:
        proxy = index.validate_subsector_proxy(occ, sub)
    except ValueError as exc:
        proxy = {"error": str(exc)}
    stage.json(proxy, "subsector_proxy.json")
    counts = scores.groupby("variant")["calculable"].agg(["sum", "size"]).reset_index()
    counts.columns = ["variant", "n_calculable", "n_total"]
    stage.table(counts, "calculability")
    return stage.finish()


def cmd_reweight(cfg: dict) -> Path:
    stage = Stage(cfg, "reweight")
    r = cfg["reweight"]
    frame = _frame(stage)
    frame = frame[frame["exclusion"].isna()].reset_index(drop=True)
    scores = _variant_scores(stage, r["variant"])
    spec = FeatureSpec(categorical=tuple(r["categorical"]), continuous=tuple(r["continuous"]),
                       binary=tuple(r["binary"]))
    for name in spec.features():
        if name not in frame.columns:
            raise ConfigError("reweight", f"covariate {name!r} is not a frame column")
    sample, report, model = reweight.reweight(frame, scores, spec, r["l2"], r["cap"])
    sample.to_frame().to_csv(stage.path("weights.csv"), index=False, lineterminator="\n")
    stage.table(report.table, "balance")
    stage.table(reweight.weight_histogram(sample.weights), "weight_histogram")
    summary = sample.summary()
    summary.update({"n_imbalanced_before": report.n_imbalanced_before,
                    "n_imbalanced_after": report.n_imbalanced_after, "threshold": report.threshold,
                    "iterations": model.iterations})
    stage.json(summary, "weight_summary.json")
    stage.path("calculability_model.json").write_text(model.to_json() + "\n", encoding="utf-8")
    return stage.finish()


def cmd_aggregate(cfg: dict) -> Path:
    stage = Stage(cfg, "aggregate")
    a = cfg["aggregate"]
    book = _load_book(stage)
    data = _analysis_data(stage, a["variant"], a["weighted"])
    levels = index.task_levels(data, book, a["variant"])
    data = aggregate.add_bins(data, a["age_width"], a["rti_bins"], pd.DataFrame(levels))
    weight_col = "weight" if a["weighted"] else None
    tables = aggregate.subgroup_tables(data, a["groupings"], weight_col, a["min_group_size"])
    for name, t in tables.items():
        stage.table(t, f"group_{name}", aggregate.to_latex)
    calc = data[data["calculable"]].reset_index(drop=True)
    w = calc["weight"].to_numpy(dtype=float) if weight_col else None
    pre_w, post_w = index.ihs_means(calc, "pre"), index.ihs_means(calc, "post")
    lv = index.task_levels(calc, book, a["variant"])
    frames = []
    for name, pre, post in (("wage", pre_w, post_w), ("rti_cognitive", lv["pre_c"], lv["post_c"]),
                            ("rti_manual", lv["pre_m"], lv["post_m"])):
        ok = ~np.isnan(pre) & ~np.isnan(post)
        if ok.any():
            tm = aggregate.quartile_transition_matrix(pre[ok], post[ok], None if w is None else w[ok])
            frames.append(tm.to_frame(name))
    if frames:
        stage.table(pd.concat(frames, ignore_index=True), "quartile_transitions")
    for name, x in (("rti_cognitive", lv["pre_c"]), ("rti_manual", lv["pre_m"])):
        if len(calc) >= a["binscatter_bins"]:
            try:
                bs = aggregate.binscatter(x, calc["i_n"].to_numpy(dtype=float), a["binscatter_bins"])
            except ValueError:
                continue
            stage.table(bs.bins, f"binscatter_{name}")
            stage.json({"slope": bs.fit.slope, "intercept": bs.fit.intercept, "r2": bs.fit.r2},
                       f"binscatter_{name}_fit.json")
    summary = aggregate.summarize(calc["i_n"].to_numpy(dtype=float), w,
                                  {c: calc[c].to_numpy(dtype=float) for c in ("i_w", "i_c", "i_m")})
    summary["n_periods"] = int(len(calc))
    stage.json(summary, "overall.json")
    return stage.finish()


def cmd_sensitivity(cfg: dict) -> Path:
    stage = Stage(cfg, "sensitivity")
    s = cfg["sensitivity"]
    data = _analysis_data(stage, s["variant"], s["weighted"])
    data = aggregate.add_bins(data, cfg["aggregate"]["age_width"])
    data = data[data["calculable"]].reset_index(drop=True)
    groupings = {g: (None if g == sensitivity.PERIOD else aggregate.GROUPINGS[g]) for g in s["groupings"]}
    rep = sensitivity.run_sensitivity(data, groupings, s["n_sims"], s["sample_frac"], cfg["seed"],
                                      weight_col="weight" if s["weighted"] else None, threads=cfg["threads"])
    stage.table(rep.table, "mc_sensitivity")
    rep.per_sim.to_csv(stage.path("per_simulation.csv"), index=False, lineterminator="\n", float_format="%.12g")
    stage.path("replay.json").write_text(rep.replay_json() + "\n", encoding="utf-8")
    return stage.finish()


def cmd_match(cfg: dict) -> Path:
    stage = Stage(cfg, "match")
    m = cfg["match"]
    data = _analysis_data(stage, m["variant"], m["weighted"])
    data = data[data["calculable"]].reset_index(drop=True)
    data["pre_wage_ihs"] = index.ihs_means(data, "pre")
    y = data["i_n"].to_numpy(dtype=float)
    w = data["weight"].to_numpy(dtype=float) if m["weighted"] else None
    effects, diags = [], []
    for i, sp in enumerate(m["specs"]):
        spec = matching.MatchSpec(name=sp["name"], treatment_field=sp["treatment_field"],
                                  treatment_value=sp["treatment_value"], caliper=m["caliper"])
        if spec.treatment_field not in data.columns:
            raise ConfigError(f"match.specs[{i}].treatment_field", f"no column {spec.treatment_field!r}")
        t = spec.treated(data)
        if t.all() or not t.any():
            log.warning("intervention %s has no treated or no control periods; skipped", spec.name)
            continue
        run = matching.run_matching(data, y, spec, w, m["n_boot"], cfg["seed"] + i, m["level"],
                                    threads=cfg["threads"])
        effects.append(run.effects_row())
        diags.append(run.diagnostics_row())
        run.pairs_frame().to_csv(stage.path(f"pairs_{spec.name}.csv"), index=False, lineterminator="\n")
        stage.table(run.love, f"love_{spec.name}")
        stage.table(run.overlap, f"overlap_{spec.name}")
    stage.table(pd.DataFrame(effects, columns=["intervention", "n_pairs", "att", "att_ci_lo", "att_ci_hi",
                                               "ate", "ate_ci_lo", "ate_ci_hi"]), "psm_effects")
    stage.table(pd.DataFrame(diags, columns=["intervention", "treated", "matched", "match_rate",
                                             "duplicate_controls", "auc"]), "psm_diagnostics")
    return stage.finish()


REPORT_TABLES = {
    "ingest": ["ingest_report.json"],
    "index": ["calculability.csv", "subsector_proxy.json"],
    "reweight": ["balance.csv", "weight_summary.json", "weight_histogram.csv"],
    "aggregate": None,  # every table
    "sensitivity": ["mc_sensitivity.csv", "replay.json"],
    "match": ["psm_effects.csv", "psm_diagnostics.csv"],
}


def cmd_report(cfg: dict) -> Path:
    """Copy every stage's tables into one directory, prefixed by stage."""
    stage = Stage(cfg, "report")
    root = Path(cfg["out"])
    for src_stage, names in REPORT_TABLES.items():
        mpath = root / src_stage / "manifest.json"
        stage.use(f"{src_stage}_manifest", mpath)
        listed = json.loads(mpath.read_text(encoding="utf-8"))["outputs"]
        files = sorted(Path(k).name for k in listed)
        if names is not None:
            stems = {Path(n).stem for n in names}
            files = [f for f in files if Path(f).stem in stems]
        for f in files:
            shutil.copyfile(root / src_stage / f, stage.path(f"{src_stage}__{f}"))
    return stage.finish()


COMMANDS = {
    "synth": cmd_synth,
    "ingest": cmd_ingest,
    "index": cmd_index,
    "reweight": cmd_reweight,
    "aggregate": cmd_aggregate,
    "sensitivity": cmd_sensitivity,
    "match": cmd_match,
    "report": cmd_report,
}


def cmd_pipeline(cfg: dict) -> Path:
    last = None
    for name in STAGES:
        if name == "synth" and cfg["inputs"].get("records"):
            continue
        last = COMMANDS[name](cfg)
    return last


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="retrain-index", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in STAGES + ("pipeline",):
        p = sub.add_parser(name)
        p.add_argument("--config", help="YAML run configuration")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help=f"output directory (overrides ${OUT_ENV} and the config)")
        p.add_argument("--format", choices=FORMATS)
        p.add_argument("--threads", type=int)
        p.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, {"seed": args.seed, "out": args.out, "format": args.format,
                                        "threads": args.threads})
        fn = cmd_pipeline if args.command == "pipeline" else COMMANDS[args.command]
        # BLAS stays single-threaded so results do not depend on the thread setting
        with threadpool_limits(limits=1):
            manifest = fn(cfg)
    except MissingArtifactError as exc:
        print(f"error: missing artifact: {exc.path}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"error: config {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    print(manifest)
    return 0


if __name__ == "__main__":
    sys.exit(main())
