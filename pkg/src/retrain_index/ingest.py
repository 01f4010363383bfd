"""Participation-record ingestion.

Parses the wide record CSV, validates each row, drops the out-of-scope
periods, resolves occupation / industry codes and deflates quarterly wages
to constant base-year dollars.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
import logging
import math
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np
import pandas as pd
import yaml

from .errors import IngestError

log = logging.getLogger(__name__)

YEAR_RANGE = (2016, 2024)
BASE_YEAR = 2010
PRE_OFFSETS = (-3, -2, -1)
POST_OFFSETS = (1, 2, 3, 4)

FUNDING_STREAMS = ("Adult", "DislocatedWorker", "Youth", "WagnerPeyser", "Other")
EMPLOYMENT_STATUSES = ("Employed", "Unemployed", "NotInLaborForce", "Other")
TRAINING_SERVICE_TYPES = (
    "OnTheJobTraining",
    "SkillUpgrading",
    "EntrepreneurialTraining",
    "ABEOrESLInCombination",
    "CustomizedTraining",
    "OccupationalSkillsTraining",
    "RemedialTraining",
    "PrerequisiteTraining",
    "RegisteredApprenticeship",
    "YouthOccupationalSkillsTraining",
    "OtherNonOccupationalSkillsTraining",
    "JobReadinessTraining",
    "TransitionalJobs",
    "IncumbentWorkerTraining",
)


def _offset_tag(offset: int) -> str:
    return f"pre{-offset}" if offset < 0 else f"post{offset}"


WAGE_COLUMNS = tuple(f"wage_{_offset_tag(o)}" for o in PRE_OFFSETS + POST_OFFSETS)
OCC_COLUMNS = tuple(f"occ_{_offset_tag(o)}" for o in PRE_OFFSETS + POST_OFFSETS)
NAICS_COLUMNS = tuple(f"naics_{_offset_tag(o)}" for o in PRE_OFFSETS + POST_OFFSETS)

REQUIRED_COLUMNS = (
    "record_id",
    "program_year",
    "state",
    "wdb_id",
    "funding_stream",
    "received_training",
    "employment_status_at_entry",
    "reportable_individual",
    "exit_date",
) + WAGE_COLUMNS
OPTIONAL_COLUMNS = (
    "entry_date",
    "training_service_type",
    "age",
    "sex",
    "race_ethnicity",
    "education_level",
    "low_income",
) + OCC_COLUMNS + NAICS_COLUMNS
CANONICAL_COLUMNS = REQUIRED_COLUMNS + OPTIONAL_COLUMNS


def _norm_key(s: str) -> str:
    return "".join(ch for ch in s.lower() if ch.isalnum())


_FUNDING_ALIASES = {_norm_key(v): v for v in FUNDING_STREAMS}
_EMPLOYMENT_ALIASES = {_norm_key(v): v for v in EMPLOYMENT_STATUSES}
_EMPLOYMENT_ALIASES.update({"notinlabourforce": "NotInLaborForce", "nilf": "NotInLaborForce"})
_TRAINING_ALIASES = {_norm_key(v): v for v in TRAINING_SERVICE_TYPES}
_TRAINING_ALIASES.update({"none": None, "nan": None})
_TRUE = {"true", "1", "yes", "y", "t"}
_FALSE = {"false", "0", "no", "n", "f"}


@dataclass(frozen=True)
class CodeObservation:
    """A code observed in a quarter; ``offset`` is relative to the participation window."""

    code: str
    offset: int


@dataclass(frozen=True)
class ParticipationRecord:
    record_id: str
    program_year: int
    state: str
    wdb_id: str
    funding_stream: str
    received_training: bool
    employment_status_at_entry: str
    reportable_individual: bool
    exit_date: dt.date | None
    pre_wages: tuple[float | None, ...]
    post_wages: tuple[float | None, ...]
    entry_date: dt.date | None = None
    training_service_type: str | None = None
    age: float | None = None
    sex: str | None = None
    race_ethnicity: str | None = None
    education_level: str | None = None
    low_income: bool | None = None
    pre_occ_candidates: tuple[CodeObservation, ...] = ()
    post_occ_candidates: tuple[CodeObservation, ...] = ()
    pre_naics_candidates: tuple[CodeObservation, ...] = ()
    post_naics_candidates: tuple[CodeObservation, ...] = ()
    # filled by resolve_codes
    pre_occ: str | None = None
    post_occ: str | None = None
    pre_naics3: str | None = None
    post_naics3: str | None = None
    # filled by deflate_wages
    real_pre_wages: tuple[float | None, ...] | None = None
    real_post_wages: tuple[float | None, ...] | None = None
    exclusion: str | None = None


# --------------------------------------------------------------------------
# codebooks
# --------------------------------------------------------------------------


@dataclass
class TaskIntensityBook:
    """Occupation RTI, occupation-by-subsector employment shares, and subsector rollups."""

    occ_rti: dict[str, tuple[float, float]]
    emp_shares: dict[tuple[str, str], float]
    soc_codes: frozenset[str] = frozenset()
    subsector_rti: dict[str, tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self):
        if not self.soc_codes:
            self.soc_codes = frozenset(self.occ_rti) | frozenset(s for s, _ in self.emp_shares)
        self.emp_shares = normalize_shares(self.emp_shares, self.occ_rti)
        self.subsector_rti = subsector_rollup(self.emp_shares, self.occ_rti)

    @property
    def subsectors(self) -> frozenset[str]:
        return frozenset(self.subsector_rti)


def normalize_shares(
    emp: Mapping[tuple[str, str], float], occ_rti: Mapping[str, tuple[float, float]]
) -> dict[tuple[str, str], float]:
    """Rescale employment so shares within each subsector sum to one.

    Occupations without an RTI entry are dropped before rescaling, so the
    rollup is a proper weighted mean over the occupations it can use.
    """
    totals: dict[str, float] = {}
    for (soc, j), e in emp.items():
        if e < 0 or not math.isfinite(e):
            raise ValueError(f"invalid employment for ({soc}, {j}): {e}")
        if soc in occ_rti:
            totals[j] = totals.get(j, 0.0) + e
    out = {}
    for (soc, j), e in sorted(emp.items()):
        if soc in occ_rti and totals.get(j, 0.0) > 0:
            out[(soc, j)] = e / totals[j]
    return out


def subsector_rollup(
    shares: Mapping[tuple[str, str], float], occ_rti: Mapping[str, tuple[float, float]]
) -> dict[str, tuple[float, float]]:
    acc: dict[str, list[float]] = {}
    for (soc, j), p in sorted(shares.items()):
        rc, rm = occ_rti[soc]
        a = acc.setdefault(j, [0.0, 0.0])
        a[0] += p * rc
        a[1] += p * rm
    return {j: (v[0], v[1]) for j, v in sorted(acc.items())}


@dataclass(frozen=True)
class CpiTable:
    values: Mapping[int, float]
    base_year: int = BASE_YEAR

    def __post_init__(self):
        if self.base_year not in self.values:
            raise ValueError(f"CPI table lacks the base year {self.base_year}")
        bad = [y for y, v in self.values.items() if not (v > 0 and math.isfinite(v))]
        if bad:
            raise ValueError(f"non-positive CPI values for years {sorted(bad)}")

    def factor(self, year: int) -> float:
        """Multiplier taking nominal ``year`` dollars to base-year dollars."""
        return self.values[self.base_year] / self.values[year]


def load_cpi(path) -> CpiTable:
    df = pd.read_csv(path, float_precision="round_trip")
    return CpiTable({int(y): float(v) for y, v in zip(df["year"], df["value"])})


def load_codebooks(soc_path, employment_path, rti_path) -> TaskIntensityBook:
    """Build a book from the SOC structure, employment matrix and RTI CSVs."""
    soc = pd.read_csv(soc_path, dtype=str)
    rti = pd.read_csv(rti_path, dtype={"soc_code": str}, float_precision="round_trip")
    emp = pd.read_csv(employment_path, dtype={"soc_code": str, "naics": str},
                      float_precision="round_trip")
    occ_rti = {
        s: (float(c), float(m))
        for s, c, m in zip(rti["soc_code"], rti["rti_cognitive"], rti["rti_manual"])
    }
    shares: dict[tuple[str, str], float] = {}
    for s, n, e in zip(emp["soc_code"], emp["naics"], emp["employment"]):
        key = (s, str(n)[:3])
        shares[key] = shares.get(key, 0.0) + float(e)
    return TaskIntensityBook(occ_rti, shares, frozenset(soc["soc_code"]))


# --------------------------------------------------------------------------
# reading records
# --------------------------------------------------------------------------


@dataclass
class IngestReport:
    n_rows: int = 0
    n_emitted: int = 0
    rejections: Counter = field(default_factory=Counter)
    warnings: Counter = field(default_factory=Counter)

    def to_dict(self) -> dict:
        return {
            "n_rows": self.n_rows,
            "n_emitted": self.n_emitted,
            "rejections": dict(sorted(self.rejections.items())),
            "warnings": dict(sorted(self.warnings.items())),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


class RowError(ValueError):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


def load_schema_config(path) -> dict[str, str]:
    """Canonical field -> source column mapping from a YAML or JSON file."""
    with open(path, encoding="utf-8") as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise IngestError(f"schema config {path} must be a mapping")
    unknown = set(data) - set(CANONICAL_COLUMNS)
    if unknown:
        raise IngestError(f"schema config names unknown fields: {sorted(unknown)}")
    return {str(k): str(v) for k, v in data.items()}


def _blank(s) -> bool:
    return s is None or str(s).strip() == "" or str(s).strip().lower() in {"na", "nan", "null"}


def _parse_bool(s, name, optional=False):
    if _blank(s):
        if optional:
            return None
        raise RowError(f"missing_{name}")
    v = str(s).strip().lower()
    if v in _TRUE:
        return True
    if v in _FALSE:
        return False
    raise RowError(f"bad_boolean_{name}")


def _parse_date(s, name):
    if _blank(s):
        return None
    try:
        return dt.date.fromisoformat(str(s).strip()[:10])
    except ValueError:
        raise RowError(f"bad_date_{name}") from None


def _parse_wage(s):
    if _blank(s):
        return None
    try:
        v = float(s)
    except ValueError:
        raise RowError("bad_wage") from None
    if not math.isfinite(v):
        raise RowError("nonfinite_wage")
    if v < 0:
        raise RowError("negative_wage")
    return v


def _parse_enum(s, aliases, name, optional=False):
    if _blank(s):
        if optional:
            return None
        raise RowError(f"missing_{name}")
    key = _norm_key(str(s))
    if key not in aliases:
        raise RowError(f"bad_{name}")
    return aliases[key]


def _primary_wdb(raw: str) -> str:
    """Pick the board flagged primary (trailing ``*``) from a ``;``-separated list, else the first."""
    parts = [p.strip() for p in str(raw).split(";") if p.strip()]
    if not parts:
        raise RowError("missing_wdb_id")
    for p in parts:
        if p.endswith("*"):
            return p[:-1].strip()
    return parts[0]


def _opt_str(s):
    return None if _blank(s) else str(s).strip()


def parse_row(
    row: Mapping[str, str],
    book: TaskIntensityBook | None = None,
    warnings: Counter | None = None,
    year_range: tuple[int, int] = YEAR_RANGE,
) -> ParticipationRecord:
    """Turn one canonical-keyed row into a record or raise ``RowError``."""
    warnings = warnings if warnings is not None else Counter()
    rid = _opt_str(row.get("record_id"))
    if rid is None:
        raise RowError("missing_record_id")
    try:
        year = int(float(row.get("program_year")))
    except (TypeError, ValueError):
        raise RowError("bad_program_year") from None
    if not year_range[0] <= year <= year_range[1]:
        raise RowError("program_year_out_of_range")
    state = _opt_str(row.get("state"))
    if state is None or len(state) != 2 or not state.isalpha():
        raise RowError("bad_state")
    wages = [_parse_wage(row.get(c)) for c in WAGE_COLUMNS]
    age = None
    if not _blank(row.get("age")):
        try:
            age = float(row.get("age"))
        except ValueError:
            raise RowError("bad_age") from None
        if not (math.isfinite(age) and 0 <= age <= 120):
            raise RowError("bad_age")

    def codes(columns, offsets, kind):
        out = []
        for col, off in zip(columns, offsets):
            code = _opt_str(row.get(col))
            if code is None:
                continue
            if kind == "occ":
                if book is not None and code not in book.soc_codes:
                    warnings["unknown_soc"] += 1
                    continue
            else:
                digits = code.replace("-", "")
                if not digits.isdigit() or len(digits) < 3:
                    warnings["malformed_naics"] += 1
                    continue
                code = digits
                if book is not None and code[:3] not in book.subsectors:
                    warnings["unknown_naics"] += 1
                    continue
            out.append(CodeObservation(code, off))
        return tuple(out)

    n_pre = len(PRE_OFFSETS)
    return ParticipationRecord(
        record_id=rid,
        program_year=year,
        state=state.upper(),
        wdb_id=_primary_wdb(row.get("wdb_id") or ""),
        funding_stream=_parse_enum(row.get("funding_stream"), _FUNDING_ALIASES, "funding_stream"),
        received_training=_parse_bool(row.get("received_training"), "received_training"),
        employment_status_at_entry=_parse_enum(
            row.get("employment_status_at_entry"), _EMPLOYMENT_ALIASES, "employment_status"
        ),
        reportable_individual=_parse_bool(row.get("reportable_individual"), "reportable_individual"),
        exit_date=_parse_date(row.get("exit_date"), "exit"),
        entry_date=_parse_date(row.get("entry_date"), "entry"),
        pre_wages=tuple(wages[:n_pre]),
        post_wages=tuple(wages[n_pre:]),
        training_service_type=_parse_enum(
            row.get("training_service_type"), _TRAINING_ALIASES, "training_service_type", optional=True
        ),
        age=age,
        sex=_opt_str(row.get("sex")),
        race_ethnicity=_opt_str(row.get("race_ethnicity")),
        education_level=_opt_str(row.get("education_level")),
        low_income=_parse_bool(row.get("low_income"), "low_income", optional=True),
        pre_occ_candidates=codes(OCC_COLUMNS[:n_pre], PRE_OFFSETS, "occ"),
        post_occ_candidates=codes(OCC_COLUMNS[n_pre:], POST_OFFSETS, "occ"),
        pre_naics_candidates=codes(NAICS_COLUMNS[:n_pre], PRE_OFFSETS, "naics"),
        post_naics_candidates=codes(NAICS_COLUMNS[n_pre:], POST_OFFSETS, "naics"),
    )


def load_records(
    path,
    schema_config: Mapping[str, str] | None = None,
    book: TaskIntensityBook | None = None,
    max_reject_fraction: float = 0.5,
    year_range: tuple[int, int] = YEAR_RANGE,
) -> tuple[list[ParticipationRecord], IngestReport]:
    """Read a record CSV. Rejected rows are counted by reason, never silently dropped."""
    path = Path(path)
    mapping = {c: c for c in CANONICAL_COLUMNS}
    mapping.update(schema_config or {})
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise IngestError(f"cannot read {path}: {exc}") from exc
    report = IngestReport()
    records: list[ParticipationRecord] = []
    seen: set[str] = set()
    with fh:
        reader = csv.DictReader(fh)
        header = set(reader.fieldnames or [])
        missing = [c for c in REQUIRED_COLUMNS if mapping[c] not in header]
        if missing:
            raise IngestError(f"missing required columns: {', '.join(missing)}")
        present = {c: s for c, s in mapping.items() if s in header}
        for raw in reader:
            report.n_rows += 1
            row = {c: raw.get(s) for c, s in present.items()}
            try:
                rec = parse_row(row, book, report.warnings, year_range)
                if rec.record_id in seen:
                    raise RowError("duplicate_record_id")
            except RowError as err:
                report.rejections[err.reason] += 1
                continue
            seen.add(rec.record_id)
            records.append(rec)
    report.n_emitted = len(records)
    rejected = report.n_rows - report.n_emitted
    if report.rejections:
        log.warning("rejected %d of %d rows: %s", rejected, report.n_rows, dict(report.rejections))
    if report.n_rows and rejected / report.n_rows > max_reject_fraction:
        raise IngestError(
            f"{rejected} of {report.n_rows} rows rejected (limit {max_reject_fraction:.0%}); "
            f"check the schema mapping: {dict(report.rejections)}"
        )
    return records, report


# --------------------------------------------------------------------------
# restriction, code resolution, deflation
# --------------------------------------------------------------------------


def restrict_sample(records: Iterable[ParticipationRecord]) -> tuple[list[ParticipationRecord], dict[str, int]]:
    """Drop reportable individuals and periods without an observed exit date."""
    kept = []
    counts = {"reportable_individual": 0, "missing_exit_date": 0}
    for r in records:
        if r.reportable_individual:
            counts["reportable_individual"] += 1
        elif r.exit_date is None:
            counts["missing_exit_date"] += 1
        else:
            kept.append(r)
    if not kept:
        log.warning("sample restriction left no records")
    return kept, counts


def pick_closest(candidates: Iterable[CodeObservation]) -> str | None:
    """Code observed nearest the participation window; ties go to the later quarter."""
    best = None
    for c in candidates:
        if best is None or (abs(c.offset), -c.offset) < (abs(best.offset), -best.offset):
            best = c
    return None if best is None else best.code


def resolve_codes(record: ParticipationRecord, book: TaskIntensityBook | None = None) -> ParticipationRecord:
    pre_occ = pick_closest(record.pre_occ_candidates)
    post_occ = pick_closest(record.post_occ_candidates)
    pre_n = pick_closest(record.pre_naics_candidates)
    post_n = pick_closest(record.post_naics_candidates)
    pre_n = pre_n[:3] if pre_n else None
    post_n = post_n[:3] if post_n else None
    if book is not None:
        pre_occ = pre_occ if pre_occ in book.soc_codes else None
        post_occ = post_occ if post_occ in book.soc_codes else None
        pre_n = pre_n if pre_n in book.subsectors else None
        post_n = post_n if post_n in book.subsectors else None
    return replace(record, pre_occ=pre_occ, post_occ=post_occ, pre_naics3=pre_n, post_naics3=post_n)


def _quarter_index(d: dt.date) -> int:
    return d.year * 4 + (d.month - 1) // 3


def wage_years(record: ParticipationRecord) -> tuple[list[int], list[int]]:
    """Calendar year of each pre and post wage quarter.

    Pre quarters count back from the entry quarter, post quarters forward
    from the exit quarter. Without an entry date the exit quarter anchors both.
    """
    if record.exit_date is None:
        raise ValueError(f"record {record.record_id} has no exit date")
    exit_q = _quarter_index(record.exit_date)
    entry_q = _quarter_index(record.entry_date) if record.entry_date else exit_q
    pre = [(entry_q + o) // 4 for o in PRE_OFFSETS]
    post = [(exit_q + o) // 4 for o in POST_OFFSETS]
    return pre, post


def deflate_wages(record: ParticipationRecord, cpi: CpiTable) -> ParticipationRecord:
    pre_years, post_years = wage_years(record)

    def deflate(wages, years):
        out = []
        for w, y in zip(wages, years):
            if w is None:
                out.append(None)
            elif y not in cpi.values:
                raise KeyError(y)
            else:
                out.append(w * cpi.factor(y))
        return tuple(out)

    try:
        return replace(
            record,
            real_pre_wages=deflate(record.pre_wages, pre_years),
            real_post_wages=deflate(record.post_wages, post_years),
        )
    except KeyError as exc:
        return replace(record, real_pre_wages=None, real_post_wages=None,
                       exclusion=f"cpi_year_missing:{exc.args[0]}")


def prepare(
    records: Iterable[ParticipationRecord], book: TaskIntensityBook, cpi: CpiTable
) -> tuple[list[ParticipationRecord], dict[str, int]]:
    """Restrict, resolve and deflate in one pass; returns records and restriction counts."""
    kept, counts = restrict_sample(records)
    out = [deflate_wages(resolve_codes(r, book), cpi) for r in kept]
    counts["cpi_year_missing"] = sum(1 for r in out if r.exclusion)
    return out, counts


# --------------------------------------------------------------------------
# tabular view
# --------------------------------------------------------------------------

FRAME_COLUMNS = (
    "record_id", "program_year", "state", "wdb_id", "funding_stream", "received_training",
    "training_service_type", "employment_status_at_entry", "age", "sex", "race_ethnicity",
    "education_level", "low_income", "entry_date", "exit_date",
    "pre_occ", "post_occ", "pre_naics3", "post_naics3",
) + tuple(f"real_{c}" for c in WAGE_COLUMNS) + ("exclusion",)


def records_to_frame(records: Iterable[ParticipationRecord]) -> pd.DataFrame:
    """Flatten prepared records into one row per period (real wages, resolved codes)."""
    rows = []
    n_pre = len(PRE_OFFSETS)
    for r in records:
        real = (r.real_pre_wages or (None,) * n_pre) + (r.real_post_wages or (None,) * len(POST_OFFSETS))
        row = {
            "record_id": r.record_id,
            "program_year": r.program_year,
            "state": r.state,
            "wdb_id": r.wdb_id,
            "funding_stream": r.funding_stream,
            "received_training": r.received_training,
            "training_service_type": r.training_service_type,
            "employment_status_at_entry": r.employment_status_at_entry,
            "age": r.age,
            "sex": r.sex,
            "race_ethnicity": r.race_ethnicity,
            "education_level": r.education_level,
            "low_income": r.low_income,
            "entry_date": r.entry_date.isoformat() if r.entry_date else None,
            "exit_date": r.exit_date.isoformat() if r.exit_date else None,
            "pre_occ": r.pre_occ,
            "post_occ": r.post_occ,
            "pre_naics3": r.pre_naics3,
            "post_naics3": r.post_naics3,
            "exclusion": r.exclusion,
        }
        for c, v in zip(WAGE_COLUMNS, real):
            row[f"real_{c}"] = np.nan if v is None else v
        rows.append(row)
    return pd.DataFrame(rows, columns=list(FRAME_COLUMNS))


_STR_COLUMNS = ("record_id", "state", "wdb_id", "funding_stream", "training_service_type",
                "employment_status_at_entry", "sex", "race_ethnicity", "education_level",
                "entry_date", "exit_date", "pre_occ", "post_occ", "pre_naics3", "post_naics3",
                "exclusion")


def read_frame(path) -> pd.DataFrame:
    """Read a frame written by ``write_frame`` with the same dtypes."""
    df = pd.read_csv(path, dtype={c: "string" for c in _STR_COLUMNS}, float_precision="round_trip",
                     keep_default_na=True)
    df = df.astype({c: object for c in _STR_COLUMNS if c in df.columns})
    for c in _STR_COLUMNS:
        if c in df.columns:
            df[c] = df[c].where(df[c].notna(), None)
    for c in ("received_training", "low_income"):
        if c in df.columns:
            df[c] = df[c].map(lambda v: None if pd.isna(v) else str(v).lower() == "true").astype(object)
    return df


def write_frame(df: pd.DataFrame, path) -> None:
    df.to_csv(path, index=False, lineterminator="\n")
