"""Reader and writer for Berkeley/ngspice style rawfiles.

Both the ASCII (``Values:``) and binary (``Binary:``) flavours are handled;
binary data is little-endian float64, point-major (all variables of point 0,
then point 1, ...).  A file may hold several plots back to back.  See
``docs/rawfile.md`` for the exact grammar.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .errors import RawfileError, TraceNotFoundError

_KINDS = {"time": "time", "voltage": "voltage", "current": "current"}


@dataclass(frozen=True)
class Variable:
    index: int
    name: str
    type: str = "voltage"

    @property
    def kind(self) -> str:
        return _KINDS.get(self.type.lower(), "other")


@dataclass(eq=False)
class RawPlot:
    title: str
    plotname: str
    variables: list[Variable]
    values: np.ndarray  # (n_points, n_variables), float64 or complex128
    flags: str = "real"
    date: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.ndim != 2 or self.values.shape[1] != len(self.variables):
            raise RawfileError(
                f"values shape {self.values.shape} does not match {len(self.variables)} variables"
            )

    @property
    def n_points(self) -> int:
        return self.values.shape[0]

    @property
    def is_complex(self) -> bool:
        return self.flags == "complex"

    @property
    def names(self) -> list[str]:
        return [v.name for v in self.variables]

    @property
    def is_transient(self) -> bool:
        return bool(self.variables) and self.variables[0].kind == "time"

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self._find(name)]

    def _find(self, name: str) -> int:
        key = name.lower()
        hits = [i for i, v in enumerate(self.variables) if v.name.lower() == key]
        if not hits:
            raise TraceNotFoundError(
                f"trace {name!r} not found; available: {', '.join(self.names)}"
            )
        if len(hits) > 1:
            raise TraceNotFoundError(
                f"trace {name!r} is ambiguous: {', '.join(self.variables[i].name for i in hits)}"
            )
        return hits[0]

    def __eq__(self, other):
        if not isinstance(other, RawPlot):
            return NotImplemented
        return (
            (self.title, self.plotname, self.flags, self.variables)
            == (other.title, other.plotname, other.flags, other.variables)
            and self.values.dtype == other.values.dtype
            and self.values.shape == other.values.shape
            and self.values.tobytes() == other.values.tobytes()
        )


@dataclass(frozen=True)
class Waveform:
    name: str
    t: np.ndarray = field(repr=False)
    v: np.ndarray = field(repr=False)

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        v = np.asarray(self.v, dtype=float)
        if t.ndim != 1 or t.shape != v.shape:
            raise ValueError(f"{self.name}: t and v must be 1-D arrays of equal length")
        if len(t) < 2:
            raise ValueError(f"{self.name}: need at least 2 samples")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(v))):
            raise ValueError(f"{self.name}: non-finite samples")
        if np.any(np.diff(t) <= 0):
            raise ValueError(f"{self.name}: time must be strictly increasing")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "v", v)

    def at(self, times) -> np.ndarray:
        """Linearly interpolated values at *times* (must lie within the span)."""
        return np.interp(times, self.t, self.v)

    def shifted(self, dt: float) -> "Waveform":
        return Waveform(self.name, self.t + dt, self.v)


def get_trace(plot: RawPlot, name: str) -> Waveform:
    if not plot.is_transient:
        raise RawfileError(f"plot {plot.plotname!r} has no time scale")
    col = plot._find(name)
    return Waveform(plot.variables[col].name, plot.values[:, 0].real, plot.values[:, col].real)


# ---------------------------------------------------------------- parsing


def parse_rawfile(data: bytes) -> list[RawPlot]:
    """Parse every plot in *data*.  Any defect raises :class:`RawfileError`."""
    if isinstance(data, str):
        data = data.encode("utf-8")
    try:
        return _parse_all(bytes(data))
    except RawfileError:
        raise
    except (ValueError, IndexError, KeyError, OverflowError, struct.error, MemoryError) as exc:
        raise RawfileError(f"unparseable rawfile: {exc}") from None


def _next_line(data: bytes, pos: int) -> tuple[str, int]:
    end = data.find(b"\n", pos)
    if end < 0:
        end = len(data)
    return data[pos:end].decode("latin-1").rstrip("\r"), end + 1


def _parse_all(data: bytes) -> list[RawPlot]:
    plots = []
    pos = 0
    while pos < len(data):
        if not data[pos:].strip():
            break
        plot, pos = _parse_plot(data, pos, len(plots))
        plots.append(plot)
    if not plots:
        raise RawfileError("no plots found")
    return plots


def _parse_plot(data: bytes, pos: int, plot_no: int) -> tuple[RawPlot, int]:
    where = f"plot {plot_no}"
    header: dict[str, str] = {}
    variables: list[Variable] = []
    n_vars: Optional[int] = None
    reading_vars = False
    section = None
    while pos < len(data):
        line, pos = _next_line(data, pos)
        if not line.strip():
            continue
        key, colon, rest = line.partition(":")
        key_l = key.strip().lower()
        if reading_vars and not (colon and key_l in ("values", "binary")):
            if n_vars is not None and len(variables) >= n_vars:
                reading_vars = False
            else:
                variables.append(_parse_variable(line, len(variables), where))
                continue
        if not colon:
            raise RawfileError(f"{where}: unexpected header line {line.strip()!r}")
        if key_l in ("values", "binary"):
            section = key_l
            break
        if key_l == "variables":
            if n_vars is None:
                raise RawfileError(f"{where}: 'Variables:' before 'No. Variables:'")
            reading_vars = True
            if rest.strip():
                variables.append(_parse_variable(rest, 0, where))
            continue
        header[key_l] = rest.strip()
        if key_l == "no. variables":
            n_vars = _parse_count(rest, "No. Variables", where)
    if section is None:
        raise RawfileError(f"{where}: header ends without 'Values:' or 'Binary:' section")
    for required in ("no. variables", "no. points"):
        if required not in header:
            raise RawfileError(f"{where}: missing '{required.title()}' in header")
    n_pts = _parse_count(header["no. points"], "No. Points", where)
    if len(variables) != n_vars:
        raise RawfileError(f"{where}: declared {n_vars} variables, found {len(variables)}")
    if n_vars < 1:
        raise RawfileError(f"{where}: plot has no variables")

    flag_words = header.get("flags", "").lower().split()
    is_complex = "complex" in flag_words
    transient = variables[0].kind == "time"
    if transient and is_complex:
        raise RawfileError(f"{where}: complex flag on transient data")
    if transient and "real" not in flag_words:
        raise RawfileError(f"{where}: transient data requires 'Flags: real'")

    if section == "binary":
        values, pos = _read_binary(data, pos, n_pts, n_vars, is_complex, where)
    else:
        values, pos = _read_ascii(data, pos, n_pts, n_vars, is_complex, where)

    if transient:
        values = _clean_time(values, where)
    plot = RawPlot(
        title=header.get("title", ""),
        plotname=header.get("plotname", ""),
        variables=variables,
        values=values,
        flags="complex" if is_complex else "real",
        date=header.get("date", ""),
    )
    return plot, pos


def _parse_count(text: str, label: str, where: str) -> int:
    try:
        n = int(text.strip())
    except ValueError:
        raise RawfileError(f"{where}: bad {label} value {text.strip()!r}") from None
    if n < 0:
        raise RawfileError(f"{where}: negative {label}")
    return n


def _parse_variable(line: str, expected: int, where: str) -> Variable:
    parts = line.split()
    if len(parts) < 3:
        raise RawfileError(f"{where}: malformed variable line {line.strip()!r}")
    try:
        index = int(parts[0])
    except ValueError:
        raise RawfileError(f"{where}: malformed variable line {line.strip()!r}") from None
    if index != expected:
        raise RawfileError(f"{where}: variable index {index}, expected {expected}")
    return Variable(index, parts[1], parts[2])


def _read_binary(data, pos, n_pts, n_vars, is_complex, where):
    width = 16 if is_complex else 8
    expected = n_pts * n_vars * width
    available = len(data) - pos
    if available < expected:
        raise RawfileError(
            f"{where}: truncated binary section: expected {expected} bytes, got {available}"
        )
    dtype = "<c16" if is_complex else "<f8"
    values = np.frombuffer(data, dtype=dtype, count=n_pts * n_vars, offset=pos)
    values = values.reshape(n_pts, n_vars).astype(dtype[1:], copy=True)
    return values, pos + expected


def _read_ascii(data, pos, n_pts, n_vars, is_complex, where):
    tokens: list[tuple[str, int]] = []
    lineno = 0
    while pos < len(data):
        line, nxt = _next_line(data, pos)
        if ":" in line:
            break
        pos = nxt
        lineno += 1
        tokens.extend((tok, lineno) for tok in line.split())
    per_point = n_vars + 1
    if len(tokens) != n_pts * per_point:
        got = len(tokens) / per_point
        raise RawfileError(
            f"{where}: point-count mismatch: header declares {n_pts} points, "
            f"Values section holds {got:g}"
        )
    values = np.empty((n_pts, n_vars), dtype=complex if is_complex else float)
    for p in range(n_pts):
        tok, line_at = tokens[p * per_point]
        if tok != str(p):
            raise RawfileError(f"{where}: expected point index {p}, got {tok!r} (values line {line_at})")
        for j in range(n_vars):
            tok, line_at = tokens[p * per_point + 1 + j]
            try:
                if is_complex:
                    re_s, _, im_s = tok.partition(",")
                    values[p, j] = complex(float(re_s), float(im_s))
                else:
                    values[p, j] = float(tok)
            except ValueError:
                raise RawfileError(f"{where}: bad number {tok!r} (values line {line_at})") from None
    return values, pos


def _clean_time(values: np.ndarray, where: str) -> np.ndarray:
    t = values[:, 0]
    if not np.all(np.isfinite(t)):
        raise RawfileError(f"{where}: non-finite time value")
    dt = np.diff(t)
    bad = np.flatnonzero(dt < 0)
    if bad.size:
        i = int(bad[0]) + 1
        raise RawfileError(f"{where}: time decreases at point {i} ({t[i - 1]!r} -> {t[i]!r})")
    dup = np.flatnonzero(dt == 0)
    if dup.size:
        # keep the last sample of each run of equal times
        values = np.delete(values, dup, axis=0)
    return values


# ---------------------------------------------------------------- writing


def write_rawfile(plots: Iterable[RawPlot] | RawPlot, format: str = "binary") -> bytes:
    if isinstance(plots, RawPlot):
        plots = [plots]
    if format not in ("ascii", "binary"):
        raise ValueError(f"unknown rawfile format {format!r}")
    chunks = []
    for plot in plots:
        _check_writable(plot)
        head = [
            f"Title: {_one_line(plot.title)}",
            f"Date: {_one_line(plot.date)}",
            f"Plotname: {_one_line(plot.plotname)}",
            f"Flags: {plot.flags}",
            f"No. Variables: {len(plot.variables)}",
            f"No. Points: {plot.n_points}",
            "Variables:",
        ]
        head += [f"\t{v.index}\t{v.name}\t{v.type}" for v in plot.variables]
        if format == "binary":
            head.append("Binary:")
            dtype = "<c16" if plot.is_complex else "<f8"
            body = np.ascontiguousarray(plot.values, dtype=dtype).tobytes()
            chunks.append(("\n".join(head) + "\n").encode("latin-1") + body)
        else:
            head.append("Values:")
            lines = []
            for p, row in enumerate(plot.values):
                cells = [_fmt(x, plot.is_complex) for x in row]
                lines.append(f" {p}\t{cells[0]}")
                lines.extend(f"\t{c}" for c in cells[1:])
            chunks.append(("\n".join(head + lines) + "\n").encode("latin-1"))
    return b"".join(chunks)


def _fmt(x, is_complex: bool) -> str:
    if is_complex:
        return f"{x.real:.16e},{x.imag:.16e}"
    return f"{x:.16e}"


def _one_line(text: str) -> str:
    return " ".join(str(text).split())


def _check_writable(plot: RawPlot) -> None:
    if plot.flags not in ("real", "complex"):
        raise ValueError(f"unsupported flags {plot.flags!r}")
    for i, v in enumerate(plot.variables):
        if v.index != i or not v.name or any(c.isspace() for c in v.name + v.type) or not v.type:
            raise ValueError(f"variable {v!r} cannot be written")
    if plot.is_transient:
        if plot.is_complex:
            raise ValueError("transient plots must be real")
        if np.any(np.diff(plot.values[:, 0]) <= 0):
            raise ValueError("time scale must be strictly increasing")
