import json
import os

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from records import AXES, random_records
from sweepspice.errors import ResultsFormatError
from sweepspice.metrics import MetricsRecord
from sweepspice.ranker import RankedReport, rank
from sweepspice.results import CaseResult
from sweepspice.store import (
    columns,
    format_si_length,
    load_results,
    make_header,
    merge_result_files,
    render_table,
    solution_label,
    spec_fingerprint,
    write_results,
)
from sweepspice.sweep import CaseAssignment
from tables import table_results

HEADER = {"axes": list(AXES), "fingerprint": "f" * 64}


def same(a, b):
    """Value identity of persisted fields (diagnostics are not stored)."""
    return [(r.case, r.status, r.metrics) for r in a] == [(r.case, r.status, r.metrics) for r in b]


@pytest.mark.parametrize("fmt", ["csv", "jsonl"])
def test_round_trip_1000_records(tmp_path, rng, fmt):
    rs = random_records(rng, 1000, statuses=True)
    p = tmp_path / f"r.{fmt}"
    write_results(rs, p, fmt, HEADER)
    header, back = load_results(p)
    assert same(back, rs) and header["fingerprint"] == "f" * 64


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(allow_nan=False, allow_infinity=False, width=64), min_size=7, max_size=7), st.sampled_from(["csv", "jsonl"]))
def test_round_trip_arbitrary_floats(tmp_path_factory, vals, fmt):
    p = tmp_path_factory.mktemp("rt") / "r"
    m = MetricsRecord(0, vals[0], vals[1], vals[2], vals[3], vals[4], vals[5], vals[6], False)
    r = CaseResult(CaseAssignment(0, {"L": 4e-8, "WN": 1e-7, "WP": 1.6e-7}, "v"), "ok", m)
    write_results([r], p, fmt, HEADER)
    assert load_results(p)[1][0].metrics == m


def test_csv_column_order_and_float_format(tmp_path):
    m = MetricsRecord.build(0, 0.1, 1e-9, 2e-9, 3e-9, 0.8, True)
    r = CaseResult(CaseAssignment(0, {"L": 4e-8, "WN": 1e-7, "WP": 1.6e-7}, "v"), "ok", m)
    p = tmp_path / "r.csv"
    write_results([r], p, "csv", HEADER)
    lines = p.read_text().splitlines()
    assert lines[1] == ("index,variant,L,WN,WP,status,p_avg_w,t_d_lh_s,t_d_hl_s,t_dmax_s,"
                        "pdp_j,v_out_low_v,v_out_high_v,full_swing")
    assert lines[2].split(",")[6] == "0.10000000000000001"
    assert lines[1].split(",") == columns(AXES)


def test_jsonl_field_names_match_csv(tmp_path, rng):
    p = tmp_path / "r.jsonl"
    write_results(random_records(rng, 3), p, "jsonl", HEADER)
    rows = [json.loads(l) for l in p.read_text().splitlines()]
    assert rows[0]["format"] == "sweepspice-results" and rows[0]["version"] == 1
    assert list(rows[1]) == columns(AXES)


@pytest.mark.parametrize("fmt", ["csv", "jsonl"])
def test_empty_record_set(tmp_path, fmt):
    p = tmp_path / "e"
    write_results([], p, fmt, HEADER)
    assert load_results(p)[1] == []


def test_unwritable_path(tmp_path):
    target = tmp_path / "missing-dir" / "r.csv"
    with pytest.raises(OSError, match="missing-dir"):
        write_results([], target, "csv", HEADER)


def test_version_mismatch(tmp_path):
    p = tmp_path / "r.jsonl"
    write_results([], p, "jsonl", {**HEADER, "version": 2})
    with pytest.raises(ResultsFormatError, match="version 2"):
        load_results(p)


def test_malformed_row_reports_line(tmp_path, rng):
    p = tmp_path / "r.csv"
    write_results(random_records(rng, 5), p, "csv", HEADER)
    lines = p.read_text().splitlines()
    lines[4] = lines[4].replace("ok", "okk", 1) if ",ok," in lines[4] else lines[4][:-3]
    p.write_text("\n".join(lines) + "\n")
    with pytest.raises(ResultsFormatError, match="line 5"):
        load_results(p)


def test_duplicate_indices_rejected(tmp_path, rng):
    rs = random_records(rng, 2)
    with pytest.raises(ValueError, match="duplicate"):
        write_results([rs[0], rs[0]], tmp_path / "d.csv", "csv", HEADER)


def test_rows_sorted_by_index(tmp_path, rng):
    rs = random_records(rng, 20)
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    write_results(rs, p1, "csv", HEADER)
    write_results(rs[::-1], p2, "csv", HEADER)
    assert p1.read_bytes() == p2.read_bytes()


def test_merge_shards(tmp_path, rng):
    rs = random_records(rng, 30)
    write_results(rs[:10], tmp_path / "a.csv", "csv", HEADER)
    write_results(rs[10:], tmp_path / "b.jsonl", "jsonl", HEADER)
    _, merged = merge_result_files([tmp_path / "a.csv", tmp_path / "b.jsonl"])
    assert same(merged, rs)
    write_results(rs[:3], tmp_path / "c.csv", "csv", {**HEADER, "fingerprint": "0" * 64})
    with pytest.raises(ResultsFormatError, match="fingerprint"):
        merge_result_files([tmp_path / "a.csv", tmp_path / "c.csv"])


def test_fingerprint_and_timestamp(toy_spec, toy_template, monkeypatch):
    fp = spec_fingerprint(toy_spec, toy_template.body)
    assert fp != spec_fingerprint(toy_spec, toy_template.body + "\n* edit")
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "86400")
    assert make_header(toy_spec, toy_template.body)["timestamp"] == "1970-01-02T00:00:00Z"


def test_render_table_iii_row_1():
    # record carrying the printed values
    m = MetricsRecord(0, 36.5228e-9, 1.086e-9, 1.086e-9, 1.086e-9, 39.663e-18, 346.467e-9, 0.799991, True)
    r = CaseResult(CaseAssignment(0, {"L": 9e-8}, "default"), "ok", m)
    cells = render_table(RankedReport("p_avg", "x", (r,), 1)).splitlines()[3].split()
    assert cells[-5:] == ["36.5228", "1.086", "39.663", "346.467", "799.991"]
    # the fixture recomputes pdp from the printed power and delay
    _, _, rows = table_results("III")
    cells = render_table(rank(rows, "p_avg", 1)).splitlines()[3].split()
    assert cells[-5:] == ["36.5228", "1.086", "39.6638", "346.467", "799.991"]


def test_render_unit_conversion():
    m = MetricsRecord.build(0, 26.5866e-9, 0.624e-9, 0.5e-9, 408.923e-9, 0.799984, True)
    r = CaseResult(CaseAssignment(0, {"L": 9e-8, "WP1": 1.6e-7}, "vgn2_vddh"), "ok", m)
    text = render_table(RankedReport("p_avg", "status=ok", (r,), 1))
    row = text.splitlines()[3].split()
    assert row[1:3] == ["L=90n", "WP1=160n"]
    assert row[-5:] == ["26.5866", "0.624", "16.59", "408.923", "799.984"]


def test_render_empty_report():
    text = render_table(RankedReport("pdp", "none", (), 0))
    assert len(text.splitlines()) == 3 and "PDP (aJ)" in text


def test_length_labels():
    assert format_si_length(9e-08) == "90n"
    assert format_si_length(1.72e-06) == "1.72u"
    assert solution_label(CaseAssignment(0, {"L": 4e-8, "WN": 1e-6}, "d")) == "L=40n WN=1u"
