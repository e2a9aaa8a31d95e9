"""Independent reference implementations used as test oracles.

Everything here is written from the model definitions directly, without
touching the package's kernels, so numerical agreement is evidence rather
than tautology.
"""

from __future__ import annotations

import math

import numpy as np


def fine_step_drag(
    surf_v_of_t,
    duration: float,
    mu_s: float,
    mu_k: float,
    g: float = 9.8,
    v_stick: float = 1e-4,
    bed_angle: float = 0.0,
    dt: float = 1e-5,
):
    """Explicit fine-step integration of the head/surface friction model.

    Returns (final position, final velocity, peak |velocity|).
    """
    cos_b, sin_b = math.cos(bed_angle), math.sin(bed_angle)
    pos, vel = 0.0, 0.0
    peak = 0.0
    n = round(duration / dt)
    for i in range(n):
        surf = surf_v_of_t(i * dt)
        u = vel - surf
        if abs(u) < v_stick:
            req = (surf - vel) / dt
            if abs(req - g * sin_b) <= mu_s * g * cos_b:
                vel = surf
            else:
                direction = 1.0 if req > 0 else -1.0
                vel += (direction * mu_k * g * cos_b + g * sin_b) * dt
        else:
            direction = 1.0 if u > 0 else -1.0
            v_new = vel + (-direction * mu_k * g * cos_b + g * sin_b) * dt
            if (v_new - surf) * u < 0 and abs(g * sin_b) <= mu_s * g * cos_b:
                vel = surf
            else:
                vel = v_new
        pos += vel * dt
        peak = max(peak, abs(vel))
    return pos, vel, peak


def fine_step_sync_loop(
    v_cmd: float,
    duration: float,
    kp: float,
    ki: float,
    integral_limit: float,
    tau_base: float,
    tau_belt: float,
    belt_gain: float,
    control_dt: float = 0.01,
    counts_per_rev: int = 1024,
    radius: float = 0.05,
    dt: float = 1e-5,
):
    """Fine-step closed-loop simulation of the belt/base speed sync.

    The plant (two first-order lags) integrates at dt; the PI controller
    and quantized encoders run on the control grid. Returns the true sync
    error sampled at each control tick.
    """
    v_base = 0.0
    v_belt = 0.0
    integral = 0.0
    duty = 0.0
    angle_floor = 0.0
    angle_pulley = 0.0
    count_floor = 0
    count_pulley = 0
    quant = 2.0 * math.pi / counts_per_rev
    per_ctl = round(control_dt / dt)
    n_ctl = round(duration / control_dt)
    errors = []
    bases = []
    belts = []
    for _ in range(n_ctl):
        # encoder measurement over the elapsed window (instantaneous speed
        # feed, quantized to whole counts, matching the plant model)
        angle_floor += v_base / radius * control_dt
        total = math.floor(angle_floor / quant)
        v_base_meas = (total - count_floor) * quant * radius / control_dt
        count_floor = total
        angle_pulley += v_belt / radius * control_dt
        total = math.floor(angle_pulley / quant)
        v_belt_meas = (total - count_pulley) * quant * radius / control_dt
        count_pulley = total

        e = (-v_base_meas) - v_belt_meas
        integral = min(max(integral + e * control_dt, -integral_limit), integral_limit)
        duty = min(max(kp * e + ki * integral, -1.0), 1.0)

        for _ in range(per_ctl):
            v_base += (v_cmd - v_base) * dt / tau_base
            v_belt += (duty * belt_gain - v_belt) * dt / tau_belt
        errors.append(v_base + v_belt)
        bases.append(v_base)
        belts.append(v_belt)
    return np.asarray(errors), np.asarray(bases), np.asarray(belts)


def quantile_r6(sorted_x, p: float) -> float:
    """Type-6 (Weibull) quantile by the textbook position formula."""
    n = len(sorted_x)
    h = p * (n + 1)
    if h <= 1.0:
        return float(sorted_x[0])
    if h >= n:
        return float(sorted_x[-1])
    k = math.floor(h)
    frac = h - k
    return float(sorted_x[k - 1] + frac * (sorted_x[k] - sorted_x[k - 1]))


def box_summary_oracle(values):
    """Sort-based five-number summary with 1.5*IQR whiskers."""
    x = sorted(float(v) for v in values)
    q1 = quantile_r6(x, 0.25)
    med = quantile_r6(x, 0.50)
    q3 = quantile_r6(x, 0.75)
    iqr = q3 - q1
    lo, hi = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = [v for v in x if lo <= v <= hi]
    return {
        "min": x[0],
        "q1": q1,
        "median": med,
        "q3": q3,
        "max": x[-1],
        "whisker_lo": inside[0] if inside else q1,
        "whisker_hi": inside[-1] if inside else q3,
        "outliers": [v for v in x if v < lo or v > hi],
    }


def rect_pulse_kinematics(a: float, pulse: float, window: float):
    """Closed-form peak velocity and displacement for a rectangular
    acceleration pulse followed by coasting."""
    v_max = a * pulse
    displacement = 0.5 * a * pulse**2 + v_max * (window - pulse)
    return v_max, displacement
