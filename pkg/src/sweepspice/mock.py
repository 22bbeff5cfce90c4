"""Deterministic stand-in for a SPICE engine.

The mock reads the parameter block written by
:func:`sweepspice.netlist.render_netlist` and synthesises a transient
rawfile from a closed-form model (see ``docs/mock_engine.md``):

* ``v(out)`` is the first-order RC response, time constant
  ``tau = K_TAU * (L_sum / W_sum) * C_load``, to the input pulse rescaled
  from the input swing to ``[0, v_ddH]``.
* ``i(vddh)`` / ``i(vddl)`` are a DC draw plus one triangular charge pulse
  per output edge (rising edges on VddH, falling edges on VddL).  The pulses
  start with the input edge and last one input transition time, so the
  average power over whole periods has the closed form of :func:`mock_model`.

``L_sum`` sums every parameter whose name starts with ``L``; ``W_sum`` every
parameter starting with ``W``.  ``WN*`` and ``WP*`` parameters are also
summed separately for the contention term.

It can also run as an external engine::

    python -m sweepspice.mock NETLIST RAWFILE
"""

from __future__ import annotations

import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import TemplateError
from .netlist import read_param_block
from .rawfile import RawPlot, Variable, write_rawfile

K_TAU = 1.14e5  # ohm
I_LEAK = 6.5e-9  # A, at W_sum = L = 40 nm
I_SQUARE = 1.6e-10  # A, width-squared draw at W_sum = 40 nm
C_PAR = 4.1e-19  # F per (W_sum / 40 nm) * (L_sum / 40 nm)
Q_CONTENTION = 5.1e-16  # C per falling edge at WN/WP = RATIO
RATIO = 2.0
I_SHORT = 1.66e-5  # A; short-circuit charge per rising edge is I_SHORT * tau
L_REF = 40e-9
W_REF = 40e-9
DC_SPLIT_L = 0.5  # VddL DC draw as a fraction of the VddH one

TRACES = ("v(in)", "v(out)", "i(vddh)", "i(vddl)")

_STIMULUS_KEYS = ("VDDH", "VDDL", "VIN_LOW", "VIN_HIGH", "TRISE", "TFALL", "TDELAY", "PERIOD", "CLOAD", "TSTOP")


@dataclass(frozen=True)
class MockModel:
    tau: float
    i_dc_h: float
    i_dc_l: float
    q_h: float  # charge drawn from VddH per rising output edge
    q_l: float  # charge drawn from VddL per falling output edge
    p_avg: float  # exact average power over whole periods


def _sizes(params: dict[str, float]) -> tuple[float, float, float, float]:
    l_sum = sum(v for k, v in params.items() if k.startswith("L"))
    w_sum = sum(v for k, v in params.items() if k.startswith("W"))
    wn = sum(v for k, v in params.items() if k.startswith("WN"))
    wp = sum(v for k, v in params.items() if k.startswith("WP"))
    if l_sum <= 0 or wn <= 0 or wp <= 0:
        raise TemplateError("mock engine needs positive L*, WN* and WP* parameters")
    return l_sum, w_sum, wn, wp


def mock_model(params: dict[str, float]) -> MockModel:
    """Closed-form quantities for one parameter set (SI units)."""
    l_sum, w_sum, wn, wp = _sizes(params)
    v_h, v_l, c_load, period = params["VDDH"], params["VDDL"], params["CLOAD"], params["PERIOD"]
    tau = K_TAU * (l_sum / w_sum) * c_load
    i_dc_h = I_LEAK * (w_sum / W_REF) * (L_REF / l_sum) ** 3 + I_SQUARE * (w_sum / W_REF) ** 2
    i_dc_l = DC_SPLIT_L * i_dc_h
    q_h = (c_load + C_PAR * (w_sum / W_REF) * (l_sum / L_REF)) * v_h + I_SHORT * tau
    ratio = wn / wp
    q_l = Q_CONTENTION * (ratio / RATIO + RATIO / ratio)
    p_avg = v_h * i_dc_h + v_l * i_dc_l + (v_h * q_h + v_l * q_l) / period
    return MockModel(tau, i_dc_h, i_dc_l, q_h, q_l, p_avg)


def parse_params(netlist: str) -> dict[str, float]:
    raw = read_param_block(netlist)
    params = {}
    for key, value in raw.items():
        if key in ("case_index", "variant"):
            continue
        try:
            params[key] = float(value)
        except ValueError:
            raise TemplateError(f"parameter {key}={value!r} is not a number") from None
    missing = [k for k in _STIMULUS_KEYS if k not in params]
    if missing:
        raise TemplateError(f"parameter block lacks {', '.join(missing)}")
    return params


def _edges(p: dict[str, float]):
    """Start times of input rising and falling edges up to the stop time."""
    period, delay, t_stop = p["PERIOD"], p["TDELAY"], p["TSTOP"]
    n = int(np.ceil((t_stop - delay) / period)) + 1
    rises = [delay + k * period for k in range(n) if delay + k * period < t_stop]
    falls = [delay + k * period + period / 2 for k in range(n) if delay + k * period + period / 2 < t_stop]
    return rises, falls


def _time_grid(p: dict[str, float], rises, falls) -> np.ndarray:
    t_stop = p["TSTOP"]
    step = min(p["PERIOD"] / 1000, p["TRISE"] / 100, p["TFALL"] / 100)
    grid = np.linspace(0.0, t_stop, int(round(t_stop / step)) + 1)
    marks = []
    for a in rises:
        marks += [a, a + p["TRISE"] / 2, a + p["TRISE"]]
    for b in falls:
        marks += [b, b + p["TFALL"] / 2, b + p["TFALL"]]
    marks = [m for m in marks if 0.0 <= m <= t_stop]
    t = np.union1d(grid, marks)
    # drop near-duplicates introduced by rounding of the uniform grid
    keep = np.concatenate(([True], np.diff(t) > step * 1e-6))
    return t[keep]


def _triangle(t: np.ndarray, start: float, width: float) -> np.ndarray:
    """Unit-area triangular pulse on [start, start + width]."""
    peak = 2.0 / width
    x = (t - start) / width
    return np.where((x > 0) & (x < 1), peak * (1 - np.abs(2 * x - 1)), 0.0)


def mock_waveforms(params: dict[str, float]) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    m = mock_model(params)
    rises, falls = _edges(params)
    t = _time_grid(params, rises, falls)
    tr, tf = params["TRISE"], params["TFALL"]
    swing = params["VIN_HIGH"] - params["VIN_LOW"]

    # input as a sum of ramps; knots carry the slope changes
    knots, slopes = [], []
    for a in rises:
        knots += [a, a + tr]
        slopes += [swing / tr, -swing / tr]
    for b in falls:
        knots += [b, b + tf]
        slopes += [-swing / tf, swing / tf]
    u = np.zeros_like(t)
    lag = np.zeros_like(t)
    for tk, sk in zip(knots, slopes):
        dt = np.clip(t - tk, 0.0, None)
        u += sk * dt
        lag += sk * m.tau * -np.expm1(-dt / m.tau)
    vin = params["VIN_LOW"] + u
    vout = (u - lag) * (params["VDDH"] / swing)

    i_h = np.full_like(t, -m.i_dc_h)
    for a in rises:
        i_h -= m.q_h * _triangle(t, a, tr)
    i_l = np.full_like(t, -m.i_dc_l)
    for b in falls:
        i_l -= m.q_l * _triangle(t, b, tf)
    return t, dict(zip(TRACES, (vin, vout, i_h, i_l)))


def mock_engine(netlist: str) -> bytes:
    """Binary rawfile for *netlist*, deterministic in its parameter block."""
    params = parse_params(netlist)
    t, traces = mock_waveforms(params)
    variables = [Variable(0, "time", "time")]
    variables += [
        Variable(i, name, "voltage" if name.startswith("v(") else "current")
        for i, name in enumerate(TRACES, 1)
    ]
    values = np.column_stack([t] + [traces[n] for n in TRACES])
    plot = RawPlot("sweepspice mock engine", "Transient Analysis", variables, values, "real")
    return write_rawfile([plot], "binary")


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    if len(argv) != 2:
        print("usage: python -m sweepspice.mock NETLIST RAWFILE", file=sys.stderr)
        return 2
    try:
        data = mock_engine(Path(argv[0]).read_text())
    except (OSError, TemplateError) as exc:
        print(f"mock engine: {exc}", file=sys.stderr)
        return 1
    Path(argv[1]).write_bytes(data)
    return 0


if __name__ == "__main__":
    sys.exit(main())
