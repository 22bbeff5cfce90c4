"""Transient measurements: crossings, delays, dual-supply power, output levels.

Sign convention for supply currents follows SPICE: the reported current flows
into the positive terminal of the source, so a source delivering power shows
a negative current and the power it delivers is ``-V * i``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np

from .errors import MetricError, TraceNotFoundError
from .netlist import Stimulus
from .rawfile import RawPlot, Waveform, get_trace

log = logging.getLogger(__name__)

DEFAULT_EPS_LOW = 10e-6
DEFAULT_EPS_HIGH = 1e-3


@dataclass(frozen=True)
class MeasureWindow:
    t_start: float
    t_end: float
    n_periods: int

    def __post_init__(self):
        if self.n_periods < 1:
            raise ValueError("n_periods must be >= 1")
        if not self.t_end > self.t_start:
            raise ValueError("t_end must exceed t_start")

    @classmethod
    def for_stimulus(cls, stim: Stimulus, settle_periods: int = 1, n_periods: int = 2) -> "MeasureWindow":
        """Skip *settle_periods* after the stimulus delay, then measure *n_periods*."""
        if settle_periods < 0:
            raise ValueError("settle_periods must be >= 0")
        t0 = stim.delay + settle_periods * stim.period
        return cls(t0, t0 + n_periods * stim.period, n_periods)

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start

    def shifted(self, dt: float) -> "MeasureWindow":
        return MeasureWindow(self.t_start + dt, self.t_end + dt, self.n_periods)


@dataclass(frozen=True)
class MeasureConfig:
    """Knobs for turning a transient plot into a :class:`MetricsRecord`."""

    settle_periods: int = 1
    window_periods: int = 2
    eps_low: float = DEFAULT_EPS_LOW
    eps_high: float = DEFAULT_EPS_HIGH
    inverting: Optional[bool] = None  # None: take it from the template

    def window(self, stim: Stimulus) -> MeasureWindow:
        return MeasureWindow.for_stimulus(stim, self.settle_periods, self.window_periods)


@dataclass(frozen=True)
class MetricsRecord:
    case_index: int
    p_avg: float
    t_d_lh: float
    t_d_hl: float
    t_dmax: float
    pdp: float
    v_out_low: float
    v_out_high: float
    full_swing: bool

    @classmethod
    def build(cls, case_index, p_avg, t_d_lh, t_d_hl, v_out_low, v_out_high, full_swing) -> "MetricsRecord":
        t_dmax = max(t_d_lh, t_d_hl)
        if p_avg < 0:
            log.warning("case %s: negative average power %g W", case_index, p_avg)
        return cls(
            int(case_index),
            float(p_avg),
            float(t_d_lh),
            float(t_d_hl),
            float(t_dmax),
            float(p_avg) * float(t_dmax),
            float(v_out_low),
            float(v_out_high),
            bool(full_swing),
        )


# ----------------------------------------------------------------- crossings


def crossing_times(w: Waveform, threshold: float, direction: str = "both") -> list[float]:
    """Times at which *w* passes through *threshold*, by linear interpolation."""
    if direction not in ("rising", "falling", "both"):
        raise ValueError(f"bad direction {direction!r}")
    return [t for t, d in _crossings(w, threshold) if direction == "both" or d == direction]


def _crossings(w: Waveform, threshold: float) -> list[tuple[float, str]]:
    s = w.v - threshold
    sign = np.sign(s)
    out = []
    i = np.flatnonzero(sign[:-1] * sign[1:] < 0)
    t0, t1, v0, v1 = w.t[i], w.t[i + 1], w.v[i], w.v[i + 1]
    times = t0 + (threshold - v0) * (t1 - t0) / (v1 - v0)
    out.extend(zip(times.tolist(), np.where(v1 > v0, "rising", "falling").tolist()))
    # samples sitting exactly on the threshold
    zeros = np.flatnonzero(sign == 0)
    if zeros.size:
        runs = np.split(zeros, np.flatnonzero(np.diff(zeros) > 1) + 1)
        for run in runs:
            a, b = run[0] - 1, run[-1] + 1
            if a < 0 or b >= len(s) or sign[a] == sign[b]:
                continue
            out.append((float(w.t[run[0]]), "rising" if sign[b] > 0 else "falling"))
        out.sort()
    return out


# ------------------------------------------------------------------ delays


def propagation_delay(
    vin: Waveform, vout: Waveform, stim: Stimulus, window: MeasureWindow, inverting: bool = False
) -> tuple[float, float]:
    """Worst-case (t_d_lh, t_d_hl) over the input edges inside *window*.

    Input is referenced at 50% of its swing, output at 50% of ``v_ddH``.  Each
    input crossing is paired with the first output crossing of the expected
    polarity at or after it.
    """
    _check_span(vin, window, stim)
    _check_span(vout, window, stim)
    tol = 1e-9 * stim.period
    in_th = 0.5 * (stim.v_in_low + stim.v_in_high)
    out_th = 0.5 * stim.v_ddH
    out_edges = _crossings(vout, out_th)
    delays = {"rising": [], "falling": []}
    flip = {"rising": "falling", "falling": "rising"}
    for t_in, d_in in _crossings(vin, in_th):
        if t_in < window.t_start - tol or t_in > window.t_end + tol:
            continue
        want = flip[d_in] if inverting else d_in
        t_out = next(
            (t for t, d in out_edges if d == want and t >= t_in - tol and t <= window.t_end + tol),
            None,
        )
        if t_out is None:
            raise MetricError(f"incomplete switching: no {want} output edge after input edge at {t_in:.6g} s")
        delays[want].append(max(t_out - t_in, 0.0))
    for polarity, label in (("rising", "low-to-high"), ("falling", "high-to-low")):
        if not delays[polarity]:
            raise MetricError(f"incomplete switching: no {label} output transition in window")
    return max(delays["rising"]), max(delays["falling"])


# ------------------------------------------------------------------- power


def average_power(i_vddH: Waveform, i_vddL: Waveform, stim: Stimulus, window: MeasureWindow) -> float:
    """Mean power delivered by both supplies over *window* (trapezoidal rule)."""
    _check_span(i_vddH, window, stim)
    _check_span(i_vddL, window, stim)
    t = np.union1d(i_vddH.t, i_vddL.t)
    t = t[(t > window.t_start) & (t < window.t_end)]
    t = np.concatenate(([window.t_start], t, [window.t_end]))
    p = stim.v_ddH * -i_vddH.at(t) + stim.v_ddL * -i_vddL.at(t)
    return float(np.trapezoid(p, t) / window.duration)


# ------------------------------------------------------------------ levels


def output_levels(
    vout: Waveform, stim: Stimulus, window: MeasureWindow, inverting: bool = False
) -> tuple[float, float]:
    """(v_out_low, v_out_high) sampled at the input edge-start instants.

    The settled high level is read just before each input falling edge starts
    and the low level just before each rising edge (swapped when inverting),
    then averaged over the window.
    """
    if window.duration < stim.period * (1 - 1e-9):
        raise MetricError("measurement window is shorter than one period")
    _check_span(vout, window, stim)
    tol = 1e-6 * stim.period
    k_lo = math.floor((window.t_start - stim.delay) / stim.period) - 1
    k_hi = math.ceil((window.t_end - stim.delay) / stim.period) + 1

    def instants(start):
        ts = [start(k) for k in range(k_lo, k_hi + 1)]
        return [t for t in ts if window.t_start - tol <= t < window.t_end - tol]

    before_rise = instants(stim.rise_start)
    before_fall = instants(stim.fall_start)
    if not before_rise or not before_fall:
        raise MetricError("measurement window does not contain both edge types")
    t_low, t_high = (before_fall, before_rise) if inverting else (before_rise, before_fall)
    lo = vout.at(np.clip(t_low, vout.t[0], vout.t[-1]))
    hi = vout.at(np.clip(t_high, vout.t[0], vout.t[-1]))
    return float(np.mean(lo)), float(np.mean(hi))


def full_swing(
    v_out_low: float,
    v_out_high: float,
    stim: Stimulus,
    eps_low: float = DEFAULT_EPS_LOW,
    eps_high: float = DEFAULT_EPS_HIGH,
) -> bool:
    return v_out_low <= eps_low and abs(v_out_high - stim.v_ddH) <= eps_high


# --------------------------------------------------------------- composition


def resolve_trace(plot: RawPlot, name: str) -> Waveform:
    """:func:`get_trace` with fallbacks for engine naming dialects.

    ``i(vdd)`` also matches ``vdd#branch`` and ``v(out)`` also matches a bare
    ``out``; the literal name always wins.
    """
    try:
        return get_trace(plot, name)
    except TraceNotFoundError as first:
        low = name.strip().lower()
        alias = None
        if low.startswith("i(") and low.endswith(")"):
            alias = low[2:-1] + "#branch"
        elif low.startswith("v(") and low.endswith(")"):
            alias = low[2:-1]
        if alias:
            try:
                return get_trace(plot, alias)
            except TraceNotFoundError:
                pass
        raise first


def evaluate_case(
    plot: RawPlot,
    probes: Mapping[str, str],
    stim: Stimulus,
    window: MeasureWindow,
    inverting: bool = False,
    eps_low: float = DEFAULT_EPS_LOW,
    eps_high: float = DEFAULT_EPS_HIGH,
    case_index: int = -1,
) -> MetricsRecord:
    vin = resolve_trace(plot, probes["vin"])
    vout = resolve_trace(plot, probes["vout"])
    i_h = resolve_trace(plot, probes["ivddh"])
    i_l = resolve_trace(plot, probes["ivddl"])
    t_lh, t_hl = propagation_delay(vin, vout, stim, window, inverting)
    p_avg = average_power(i_h, i_l, stim, window)
    lo, hi = output_levels(vout, stim, window, inverting)
    swing = full_swing(lo, hi, stim, eps_low, eps_high)
    return MetricsRecord.build(case_index, p_avg, t_lh, t_hl, lo, hi, swing)


def _check_span(w: Waveform, window: MeasureWindow, stim: Stimulus) -> None:
    slack = 1e-9 * stim.period
    if window.t_start < w.t[0] - slack or window.t_end > w.t[-1] + slack:
        raise MetricError(
            f"window [{window.t_start:.6g}, {window.t_end:.6g}] s exceeds {w.name} span "
            f"[{w.t[0]:.6g}, {w.t[-1]:.6g}] s"
        )
