"""Delay, dual-supply power and output levels on a synthetic RC response."""

import numpy as np

from sweepspice.metrics import MeasureWindow, average_power, full_swing, output_levels, propagation_delay
from sweepspice.netlist import Stimulus
from sweepspice.rawfile import Waveform

stim = Stimulus()
win = MeasureWindow.for_stimulus(stim)
tau = 1e-9

t = np.linspace(0, 3 * stim.period, 30_001)
phase = np.mod(t, stim.period)
u = np.interp(phase, [0, stim.t_rise, stim.t_rise + stim.pulse_width, stim.t_rise + stim.pulse_width + stim.t_fall], [0, 1, 1, 0])

# exact-enough RC response by small-step integration of dv/dt = (vH*u - v)/tau
v = np.zeros_like(t)
h = t[1] - t[0]
a = np.exp(-h / tau)
for k in range(1, len(t)):
    v[k] = a * v[k - 1] + (1 - a) * stim.v_ddH * 0.5 * (u[k] + u[k - 1])

vin = Waveform("v(in)", t, stim.v_in_high * u)
vout = Waveform("v(out)", t, v)
# leakage plus the charge delivered to the load while the output rises
i_h = Waveform("i(vddh)", t, -1e-9 - stim.c_load * np.clip(np.gradient(v, t), 0, None))
i_l = Waveform("i(vddl)", t, np.full_like(t, -5e-10))

t_lh, t_hl = propagation_delay(vin, vout, stim, win)
p = average_power(i_h, i_l, stim, win)
lo, hi = output_levels(vout, stim, win)
print(f"t_d_lh {t_lh * 1e9:.4f} ns  t_d_hl {t_hl * 1e9:.4f} ns  (tau = {tau * 1e9:g} ns)")
print(f"P_avg {p * 1e9:.4f} nW  PDP {p * max(t_lh, t_hl) * 1e18:.4f} aJ")
print(f"V_out_low {lo * 1e9:.3f} nV  V_out_high {hi * 1e3:.4f} mV  full swing: {full_swing(lo, hi, stim)}")
