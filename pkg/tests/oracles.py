"""Independent reference computations for the metric tests.

The RC oracle integrates dv/dt = (u(t) - v) / tau with classical RK4 on a
fixed grid.  Because the ODE is linear, every RK4 step is an affine map
v[n+1] = A v[n] + B[n]; that recurrence is evaluated with an IIR filter so a
million steps cost milliseconds.  Knots of the piecewise-linear forcing sit on
grid points, so RK4 keeps its fourth order.
"""

import numpy as np
from scipy.integrate import simpson
from scipy.signal import lfilter

V_H, V_L = 0.8, 0.6
I0, R, K_L = 1e-9, 1e7, 1e-6  # synthetic supply-current model


def pulse(t, stim, n_periods):
    """Ideal PULSE input (vin) evaluated at *t*; independent of sweepspice."""
    lo, hi, tr, tf, per = stim.v_in_low, stim.v_in_high, stim.t_rise, stim.t_fall, stim.period
    x = np.mod(np.asarray(t, float) - stim.delay, per)
    high_end = tr + (per / 2 - tr)
    y = np.where(x < tr, x / tr, np.where(x < high_end, 1.0, np.where(x < high_end + tf, 1 - (x - high_end) / tf, 0.0)))
    y = np.where(np.asarray(t) < stim.delay, 0.0, y)
    return lo + (hi - lo) * y


def drive(t, stim, n_periods):
    """Input rescaled to [0, V_H], the forcing of the RC stage."""
    return V_H * (pulse(t, stim, n_periods) - stim.v_in_low) / (stim.v_in_high - stim.v_in_low)


def rk4_rc(stim, tau, n_periods, steps):
    h = n_periods * stim.period / steps
    t = np.arange(steps + 1) * h
    lam = -1.0 / tau
    g0 = drive(t[:-1], stim, n_periods) / tau
    gm = drive(t[:-1] + h / 2, stim, n_periods) / tau
    g1 = drive(t[1:], stim, n_periods) / tau
    a1, b1 = lam, g0
    a2, b2 = lam * (1 + h / 2 * a1), lam * h / 2 * b1 + gm
    a3, b3 = lam * (1 + h / 2 * a2), lam * h / 2 * b2 + gm
    a4, b4 = lam * (1 + h * a3), lam * h * b3 + g1
    A = 1 + h / 6 * (a1 + 2 * a2 + 2 * a3 + a4)
    B = h / 6 * (b1 + 2 * b2 + 2 * b3 + b4)
    v = np.concatenate(([0.0], lfilter([1.0], [1.0, -A], B)))
    return t, v


def supply_currents(u, v):
    """Reported (negative) supply currents for output v under forcing u."""
    i_h = -(I0 + v / R)
    i_l = -(0.5 * I0 + K_L * (u - v) ** 2)
    return i_h, i_l


def oracle_power(t, u, v, t0, t1):
    i_h, i_l = supply_currents(u, v)
    p = V_H * -i_h + V_L * -i_l
    sel = (t >= t0 - 1e-21) & (t <= t1 + 1e-21)
    return simpson(p[sel], x=t[sel]) / (t1 - t0)


def oracle_crossings(t, v, th):
    s = v - th
    i = np.flatnonzero(s[:-1] * s[1:] < 0)
    tc = t[i] - s[i] * (t[i + 1] - t[i]) / (s[i + 1] - s[i])
    return tc, np.where(s[i + 1] > s[i], 1, -1)


def oracle_delays(t, vin, vout, stim, t0, t1):
    tin, din = oracle_crossings(t, vin, 0.5 * (stim.v_in_low + stim.v_in_high))
    tout, dout = oracle_crossings(t, vout, 0.5 * V_H)
    lh, hl = [], []
    for ti, di in zip(tin, din):
        if not t0 <= ti <= t1:
            continue
        k = np.flatnonzero((tout >= ti) & (dout == di))[0]
        (lh if di > 0 else hl).append(tout[k] - ti)
    return max(lh), max(hl)


def analytic_rc(t, stim, tau, n_periods):
    """Closed-form RC response to the rescaled pulse, sampled at *t*."""
    t = np.asarray(t, float)
    out = np.zeros_like(t)
    swing = V_H
    for k in range(n_periods + 1):
        a = stim.delay + k * stim.period
        b = a + stim.period / 2
        for t_k, slope in ((a, swing / stim.t_rise), (a + stim.t_rise, -swing / stim.t_rise),
                           (b, -swing / stim.t_fall), (b + stim.t_fall, swing / stim.t_fall)):
            dt = np.clip(t - t_k, 0.0, None)
            out += slope * (dt + tau * np.expm1(-dt / tau))
    return out
