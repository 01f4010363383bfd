import csv
import datetime as dt
import logging

import numpy as np
import pandas as pd
import pytest

from retrain_index import ingest, synth
from retrain_index.errors import IngestError
from retrain_index.ingest import CodeObservation, CpiTable, TaskIntensityBook

TOY_SOCS = ("11-1011", "29-1141", "41-2011", "43-4051", "53-3032")


def toy_book():
    rti = {s: (float(i) - 2, 2 - float(i)) for i, s in enumerate(TOY_SOCS)}
    emp = {(s, "445"): 100.0 for s in TOY_SOCS} | {("29-1141", "622"): 50.0}
    return TaskIntensityBook(rti, emp, frozenset(TOY_SOCS))


def base_row(rid="A1", **over):
    row = {c: "" for c in ingest.CANONICAL_COLUMNS}
    row.update({
        "record_id": rid, "program_year": "2019", "state": "AL", "wdb_id": "AL-01",
        "funding_stream": "Adult", "received_training": "true", "employment_status_at_entry": "Unemployed",
        "reportable_individual": "false", "entry_date": "2019-08-15", "exit_date": "2020-03-01",
        "wage_pre3": "5000", "wage_pre2": "5100", "wage_pre1": "4000",
        "wage_post1": "6000", "wage_post2": "", "wage_post3": "6100", "wage_post4": "6200",
        "occ_pre1": "41-2011", "occ_post1": "29-1141", "naics_pre1": "445110", "naics_post2": "622110",
    })
    row.update(over)
    return row


def write_rows(path, rows, columns=ingest.CANONICAL_COLUMNS):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(columns), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({c: r.get(c, "") for c in columns})
    return path


def test_clean_three_rows(tmp_path):
    p = write_rows(tmp_path / "r.csv", [base_row(f"A{i}") for i in range(3)])
    recs, rep = ingest.load_records(p, None, toy_book())
    assert len(recs) == 3 and not rep.rejections
    r = recs[0]
    assert r.pre_wages == (5000.0, 5100.0, 4000.0)
    assert r.post_wages == (6000.0, None, 6100.0, 6200.0)
    assert r.exit_date == dt.date(2020, 3, 1)


def test_negative_wage_rejected(tmp_path):
    p = write_rows(tmp_path / "r.csv", [base_row("A1"), base_row("A2", wage_pre2="-3")])
    recs, rep = ingest.load_records(p, None, toy_book())
    assert [r.record_id for r in recs] == ["A1"]
    assert rep.rejections == {"negative_wage": 1}


@pytest.mark.parametrize("field,value,reason", [
    ("state", "Alabama", "bad_state"),
    ("program_year", "2010", "program_year_out_of_range"),
    ("funding_stream", "Lottery", "bad_funding_stream"),
    ("exit_date", "2020-13-40", "bad_date_exit"),
    ("received_training", "maybe", "bad_boolean_received_training"),
    ("age", "-4", "bad_age"),
    ("wage_post1", "abc", "bad_wage"),
])
def test_invariant_violations(tmp_path, field, value, reason):
    p = write_rows(tmp_path / "r.csv", [base_row("A1"), base_row("A2", **{field: value})])
    _, rep = ingest.load_records(p, None, toy_book())
    assert rep.rejections == {reason: 1}


def test_unknown_soc_kept_with_warning(tmp_path):
    p = write_rows(tmp_path / "r.csv", [base_row("A1", occ_pre1="99-9999")])
    recs, rep = ingest.load_records(p, None, toy_book())
    assert len(recs) == 1 and rep.warnings["unknown_soc"] == 1
    assert ingest.resolve_codes(recs[0], toy_book()).pre_occ is None


def test_duplicate_ids_and_reject_limit(tmp_path):
    p = write_rows(tmp_path / "r.csv", [base_row("A1"), base_row("A1")])
    recs, rep = ingest.load_records(p, None, toy_book())
    assert len(recs) == 1 and rep.rejections == {"duplicate_record_id": 1}
    bad = write_rows(tmp_path / "b.csv", [base_row("A1", state="X"), base_row("A2", state="Y"), base_row("A3")])
    with pytest.raises(IngestError, match="rejected"):
        ingest.load_records(bad, None, toy_book())


def test_missing_required_column(tmp_path):
    cols = [c for c in ingest.CANONICAL_COLUMNS if c != "exit_date"]
    p = write_rows(tmp_path / "r.csv", [base_row()], cols)
    with pytest.raises(IngestError, match="exit_date"):
        ingest.load_records(p)


def test_schema_mapping_and_primary_board(tmp_path):
    row = base_row("A1", wdb_id="AL-01; AL-07*")
    row["ID"] = row.pop("record_id")
    cols = ["ID"] + [c for c in ingest.CANONICAL_COLUMNS if c != "record_id"]
    p = write_rows(tmp_path / "r.csv", [row], cols)
    schema = tmp_path / "schema.yaml"
    schema.write_text("record_id: ID\n")
    recs, _ = ingest.load_records(p, ingest.load_schema_config(schema))
    assert recs[0].record_id == "A1" and recs[0].wdb_id == "AL-07"


def _rec(rid, reportable=False, exit_date=dt.date(2020, 1, 1)):
    return ingest.ParticipationRecord(rid, 2019, "AL", "W", "Adult", False, "Employed", reportable, exit_date,
                                      (1.0, 1.0, 1.0), (1.0, 1.0, 1.0, 1.0))


def test_restrict_counts():
    recs = [_rec(str(i), reportable=i < 2, exit_date=None if i == 2 else dt.date(2020, 1, 1)) for i in range(10)]
    kept, counts = ingest.restrict_sample(recs)
    assert len(kept) == 7
    assert counts == {"reportable_individual": 2, "missing_exit_date": 1}


def test_restrict_all_reportable_warns(caplog):
    with caplog.at_level(logging.WARNING):
        kept, _ = ingest.restrict_sample([_rec("a", True), _rec("b", True)])
    assert kept == [] and "no records" in caplog.text


def test_restriction_counts_match_planted(small_ds):
    _, counts = ingest.restrict_sample(small_ds.records)
    truth = small_ds.truth
    assert counts["reportable_individual"] == int(truth.reportable.sum())
    assert counts["missing_exit_date"] == int((truth.missing_exit & ~truth.reportable).sum())


def test_pick_closest_rules():
    assert ingest.pick_closest([CodeObservation("A", -3), CodeObservation("B", -1)]) == "B"
    assert ingest.pick_closest([CodeObservation("A", -2)]) == "A"
    assert ingest.pick_closest([CodeObservation("A", -1), CodeObservation("B", 1)]) == "B"
    assert ingest.pick_closest([CodeObservation("B", 1), CodeObservation("A", -1)]) == "B"
    assert ingest.pick_closest([]) is None


def test_resolve_truncates_naics():
    r = ingest.resolve_codes(ingest.parse_row(base_row(), toy_book()), toy_book())
    assert (r.pre_occ, r.post_occ, r.pre_naics3, r.post_naics3) == ("41-2011", "29-1141", "445", "622")


def test_deflate_arithmetic():
    cpi = CpiTable({2010: 100.0, 2019: 110.0, 2020: 110.0, 2021: 110.0})
    r = _rec("a", exit_date=dt.date(2020, 1, 15))
    r = ingest.ParticipationRecord(**{**r.__dict__, "pre_wages": (110.0, None, 110.0),
                                      "post_wages": (110.0, 110.0, 110.0, 110.0)})
    out = ingest.deflate_wages(r, cpi)
    assert out.real_pre_wages == (100.0, None, 100.0)
    assert out.real_post_wages == (100.0,) * 4
    base = CpiTable({2010: 100.0, 2019: 100.0, 2020: 100.0, 2021: 100.0})
    assert ingest.deflate_wages(r, base).real_post_wages[0] == 110.0


def test_missing_cpi_year_excludes():
    cpi = CpiTable({2010: 100.0, 2020: 105.0})
    out = ingest.deflate_wages(_rec("a", exit_date=dt.date(2020, 1, 15)), cpi)
    assert out.exclusion == "cpi_year_missing:2019" and out.real_pre_wages is None


def test_wage_years_anchor_on_entry_and_exit():
    r = base_row()
    rec = ingest.parse_row(r)
    pre, post = ingest.wage_years(rec)
    assert pre == [2018, 2019, 2019]  # entry in Q3 2019: Q4 2018, Q1 2019, Q2 2019
    assert post == [2020, 2020, 2020, 2021]


def test_synth_roundtrip_zero_rejections_and_real_means(small_ds, small_written):
    book = ingest.load_codebooks(small_written["soc"], small_written["employment"], small_written["rti"])
    cpi = ingest.load_cpi(small_written["cpi"])
    recs, rep = ingest.load_records(small_written["records"], None, book)
    assert rep.n_emitted == small_ds.config.n and not rep.rejections and not rep.warnings
    prepared, counts = ingest.prepare(recs, book, cpi)
    pre = [w for r in prepared for w in r.real_pre_wages if w is not None]
    post = [w for r in prepared for w in r.real_post_wages if w is not None]
    assert abs(np.mean(pre) - small_ds.truth.real_means["pre"]) < 1e-9
    assert abs(np.mean(post) - small_ds.truth.real_means["post"]) < 1e-9
    assert counts["cpi_year_missing"] == 0


def test_frame_roundtrip(tmp_path, small_frame):
    p = tmp_path / "f.csv"
    ingest.write_frame(small_frame, p)
    back = ingest.read_frame(p)
    pd.testing.assert_frame_equal(back.reset_index(drop=True), small_frame.reset_index(drop=True),
                                  check_dtype=False)


def test_subsector_shares_normalised():
    book = toy_book()
    for j in ("445", "622"):
        assert sum(p for (s, k), p in book.emp_shares.items() if k == j) == pytest.approx(1.0)
    assert book.subsector_rti["622"] == book.occ_rti["29-1141"]


def test_record_row_roundtrip(small_ds):
    r = small_ds.records[0]
    parsed = ingest.parse_row(synth.record_row(r), small_ds.book)
    assert parsed == r
