"""Results persistence (CSV / JSONL) and fixed-width ranked tables.

Both formats start with a header record carrying the format version and the
spec fingerprint.  All numbers are stored in SI units; display units only
appear in :func:`render_table`.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import time
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from .errors import ResultsFormatError
from .metrics import MetricsRecord
from .ranker import RankedReport
from .results import STATUSES, CaseResult
from .sweep import CaseAssignment, SweepSpec

FORMAT_NAME = "sweepspice-results"
FORMAT_VERSION = 1
METRIC_COLUMNS = (
    ("p_avg_w", "p_avg"),
    ("t_d_lh_s", "t_d_lh"),
    ("t_d_hl_s", "t_d_hl"),
    ("t_dmax_s", "t_dmax"),
    ("pdp_j", "pdp"),
    ("v_out_low_v", "v_out_low"),
    ("v_out_high_v", "v_out_high"),
)


def columns(axes: Sequence[str]) -> list[str]:
    return ["index", "variant", *axes, "status", *(c for c, _ in METRIC_COLUMNS), "full_swing"]


def spec_fingerprint(spec: SweepSpec, template_body: str) -> str:
    doc = json.dumps(spec.to_dict(), sort_keys=True, separators=(",", ":"))
    h = hashlib.sha256()
    h.update(doc.encode())
    h.update(b"\0")
    h.update(template_body.encode())
    return h.hexdigest()


def make_header(
    spec: SweepSpec,
    template_body: str,
    stimulus: Optional[Mapping] = None,
    engine: str = "",
    timestamp: Optional[str] = None,
) -> dict:
    """Header record.  ``SOURCE_DATE_EPOCH`` pins the timestamp for reproducible files."""
    if timestamp is None:
        epoch = os.environ.get("SOURCE_DATE_EPOCH")
        secs = int(epoch) if epoch else time.time()
        timestamp = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(secs))
    return {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "fingerprint": spec_fingerprint(spec, template_body),
        "axes": spec.axis_names,
        "stimulus": dict(stimulus or {}),
        "engine": engine,
        "timestamp": timestamp,
    }


def _num(x: float) -> str:
    return f"{x:.17g}"


def row_dict(result: CaseResult, axes: Sequence[str]) -> dict:
    row = {"index": result.index, "variant": result.case.variant}
    for a in axes:
        row[a] = result.case.axis_values[a]
    row["status"] = result.status
    m = result.metrics
    for col, attr in METRIC_COLUMNS:
        row[col] = getattr(m, attr) if m else None
    row["full_swing"] = m.full_swing if m else None
    return row


def format_jsonl_row(result: CaseResult, axes: Sequence[str]) -> str:
    return json.dumps(row_dict(result, axes), allow_nan=True)


def _csv_cells(row: dict) -> list[str]:
    out = []
    for key, v in row.items():
        if v is None:
            out.append("")
        elif isinstance(v, bool):
            out.append("true" if v else "false")
        elif isinstance(v, float):
            out.append(_num(v))
        else:
            out.append(str(v))
    return out


def write_results(results: Iterable[CaseResult], path: str | Path, format: str = "csv", header: Optional[dict] = None) -> None:
    if format not in ("csv", "jsonl"):
        raise ValueError(f"unknown results format {format!r}")
    header = dict(header or {"format": FORMAT_NAME, "version": FORMAT_VERSION, "axes": []})
    header.setdefault("format", FORMAT_NAME)
    header.setdefault("version", FORMAT_VERSION)
    results = sorted(results, key=lambda r: r.index)
    axes = list(header.get("axes") or (results[0].case.axis_values if results else []))
    header["axes"] = axes
    indices = [r.index for r in results]
    if len(set(indices)) != len(indices):
        raise ValueError("duplicate case indices in result set")
    buf = io.StringIO()
    if format == "csv":
        buf.write("# " + json.dumps(header, sort_keys=True) + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns(axes))
        for r in results:
            w.writerow(_csv_cells(row_dict(r, axes)))
    else:
        buf.write(json.dumps(header, sort_keys=True) + "\n")
        for r in results:
            buf.write(format_jsonl_row(r, axes) + "\n")
    Path(path).write_text(buf.getvalue())


def _check_header(header: dict, path) -> None:
    if not isinstance(header, dict) or header.get("format") != FORMAT_NAME:
        raise ResultsFormatError(f"{path}: not a {FORMAT_NAME} file")
    if header.get("version") != FORMAT_VERSION:
        raise ResultsFormatError(
            f"{path}: results format version {header.get('version')!r}, expected {FORMAT_VERSION}"
        )


def result_from_row(row: Mapping, axes: Sequence[str]) -> CaseResult:
    """Rebuild a :class:`CaseResult` from a row mapping (values typed or strings)."""

    def fnum(v):
        return float(v) if not isinstance(v, float) else v

    status = row["status"]
    if status not in STATUSES:
        raise ValueError(f"unknown status {status!r}")
    case = CaseAssignment(int(row["index"]), {a: fnum(row[a]) for a in axes}, str(row["variant"]))
    metrics = None
    if status == "ok":
        fs = row["full_swing"]
        if isinstance(fs, str):
            if fs not in ("true", "false"):
                raise ValueError(f"bad full_swing value {fs!r}")
            fs = fs == "true"
        vals = {attr: fnum(row[col]) for col, attr in METRIC_COLUMNS}
        metrics = MetricsRecord(case.index, full_swing=bool(fs), **vals)
    return CaseResult(case, status, metrics)


def load_results(path: str | Path) -> tuple[dict, list[CaseResult]]:
    path = Path(path)
    text = path.read_text()
    lines = text.splitlines()
    if not lines:
        raise ResultsFormatError(f"{path}: empty file")
    try:
        if lines[0].startswith("# "):
            header = json.loads(lines[0][2:])
            fmt = "csv"
        else:
            header = json.loads(lines[0])
            fmt = "jsonl"
    except json.JSONDecodeError:
        raise ResultsFormatError(f"{path}: unreadable header record") from None
    _check_header(header, path)
    axes = header.get("axes") or []
    results = []
    seen = set()
    if fmt == "csv":
        reader = csv.reader(lines[1:])
        cols = next(reader, None)
        if cols != columns(axes):
            raise ResultsFormatError(f"{path}: column header does not match {columns(axes)}")
        rows = ((n, dict(zip(cols, cells)) if len(cells) == len(cols) else None) for n, cells in enumerate(reader, 3))
    else:
        rows = ((n, _json_row(line)) for n, line in enumerate(lines[1:], 2) if line.strip())
    for lineno, row in rows:
        try:
            if row is None:
                raise ValueError("wrong number of fields")
            r = result_from_row(row, axes)
        except (KeyError, ValueError, TypeError) as exc:
            raise ResultsFormatError(f"{path}: malformed row at line {lineno}: {exc}") from None
        if r.index in seen:
            raise ResultsFormatError(f"{path}: duplicate case index {r.index} at line {lineno}")
        seen.add(r.index)
        results.append(r)
    return header, results


def _json_row(line: str):
    try:
        row = json.loads(line)
    except json.JSONDecodeError:
        return None
    return row if isinstance(row, dict) else None


# ------------------------------------------------------------------ tables

DISPLAY_UNITS = {
    "p_avg": ("P_avg (nW)", 1e9),
    "t_dmax": ("T_dmax (ns)", 1e9),
    "pdp": ("PDP (aJ)", 1e18),
    "v_out_low": ("V_out_low (nV)", 1e9),
    "v_out_high": ("V_out_high (mV)", 1e3),
}
TABLE_COLUMNS = ("p_avg", "t_dmax", "pdp", "v_out_low", "v_out_high")


def format_si_length(x: float) -> str:
    """Lengths for the solution column, e.g. 9e-08 -> '90n'."""
    for scale, suffix in ((1e-6, "u"), (1e-9, "n")):
        v = x / scale
        if v >= 1 or suffix == "n":
            return f"{v:.6g}{suffix}"
    return f"{x:.6g}"


def solution_label(case: CaseAssignment) -> str:
    return " ".join(f"{k}={format_si_length(v)}" for k, v in case.axis_values.items())


def render_table(report: RankedReport, columns: Sequence[str] = TABLE_COLUMNS) -> str:
    """Fixed-width text table, 6 significant digits in display units."""
    head = ["#", "Solution set", "Variant"] + [DISPLAY_UNITS[c][0] for c in columns]
    body = []
    for n, r in enumerate(report.rows, 1):
        cells = [str(n), solution_label(r.case), r.case.variant]
        for c in columns:
            cells.append(f"{getattr(r.metrics, c) * DISPLAY_UNITS[c][1]:.6g}")
        body.append(cells)
    widths = [max(len(row[i]) for row in [head] + body) for i in range(len(head))]

    def line(cells):
        left = [c.ljust(w) for c, w in zip(cells[:3], widths[:3])]
        right = [c.rjust(w) for c, w in zip(cells[3:], widths[3:])]
        return "  ".join(left + right).rstrip()

    out = [f"Ranked by {report.criterion} (filter: {report.filter}; k={report.k})", line(head)]
    out.append("-" * len(out[1]))
    out.extend(line(cells) for cells in body)
    return "\n".join(out) + "\n"


def merge_result_files(paths: Sequence[str | Path]) -> tuple[dict, list[CaseResult]]:
    """Load several result files (e.g. shards) of the same sweep into one list.

    All headers must carry the same fingerprint.  A case present in more than
    one file must have identical rows.
    """
    if not paths:
        raise ValueError("no result files given")
    merged: dict[int, CaseResult] = {}
    first = None
    for p in paths:
        header, rows = load_results(p)
        if first is None:
            first = header
        elif header.get("fingerprint") != first.get("fingerprint"):
            raise ResultsFormatError(f"{p}: fingerprint differs from {paths[0]}; files come from different sweeps")
        for r in rows:
            old = merged.get(r.index)
            if old is not None and row_dict(old, first["axes"]) != row_dict(r, first["axes"]):
                raise ResultsFormatError(f"{p}: case {r.index} conflicts with an earlier file")
            merged[r.index] = r
    return first, [merged[i] for i in sorted(merged)]
