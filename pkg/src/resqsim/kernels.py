"""Hot-loop numeric kernels for the fixed-step planar simulation.

`advance` integrates a packed float64 state vector through N physics
substeps under a zero-order-hold actuation command; `coupling` is the
stick/slip interaction between the casualty's head and whichever surface
carries it (ground or belt). When numba is importable and RESQSIM_NO_NUMBA
is unset, both are compiled with @njit; otherwise the identical Python
definitions run directly on the same numpy arrays. Both paths stay
importable (`py_advance` is always the plain one) so the test suite can
assert bit-identical trajectories and benchmarks/bench_kernels.py can
compare throughput in a single process.

Model notes. The base and belt respond to commands through first-order
lags. The loading axis is a world-frame line through the casualty's head;
positive s points from the head toward the feet, the direction the robot
travels while sliding the bed under the body. The belt surface world speed
is v_axis + v_belt, zero when belt and base are perfectly synchronized, in
which case a body resting on the belt is never dragged. Head/surface
coupling is Coulomb friction with a small stick deadband: inside the
deadband the head rides the surface exactly (so perfect sync holds the
head world-stationary to the bit), outside it kinetic friction drives the
head toward the surface speed, clamped so a step never overshoots it. The
bed ramp folds gravity into a constant down-axis term while the head is on
the belt. First bed-edge contact applies a single-step inelastic impulse
proportional to the closing speed.
"""

from __future__ import annotations

import math
import os

import numpy as np

# State vector layout.
S_X = 0          # robot x (m)
S_Y = 1          # robot y (m)
S_THETA = 2      # robot heading (rad)
S_V_BASE = 3     # body longitudinal speed (m/s)
S_OMEGA = 4      # yaw rate (rad/s)
S_V_BELT = 5     # belt surface speed relative to robot (m/s)
S_HEAD_POS = 6   # head coordinate along the loading axis (m)
S_HEAD_VEL = 7   # head axis velocity (m/s)
S_HEAD_ACC = 8   # head axis acceleration over the last substep (m/s^2)
S_ONBOARD = 9    # fraction of the upper body on the bed [0, 1]
S_CONTACTED = 10  # 0/1 latch: bed edge has reached the head
S_EDGE = 11      # bed edge coordinate along the loading axis (m)
N_STATE = 12

# Parameter vector layout.
P_DT = 0
P_ALPHA_BASE = 1   # 1 - exp(-dt/tau_base): exact discrete lag step
P_ALPHA_BELT = 2   # 1 - exp(-dt/tau_belt)
P_BELT_GAIN = 3
P_MU_S = 4
P_MU_K = 5
P_G = 6
P_V_STICK = 7
P_IMPULSE_GAIN = 8
P_UPPER_LEN = 9
P_AX_OX = 10
P_AX_OY = 11
P_AX_C = 12
P_AX_S = 13
P_BED_OFF = 14
P_HALFWIDTH = 15
P_V_BASE_MAX = 16
P_OMEGA_MAX = 17
P_COS_BED = 18
P_SIN_BED = 19
N_PARAMS = 20

# Contact event output layout: [fired, time offset within call, closing speed].
EV_FIRED = 0
EV_T_OFFSET = 1
EV_REL_SPEED = 2
N_EVENT = 3


def numba_enabled() -> bool:
    flag = os.environ.get("RESQSIM_NO_NUMBA", "").strip().lower()
    if flag in ("1", "true", "yes"):
        return False
    if os.environ.get("NUMBA_DISABLE_JIT", "").strip() == "1":
        return False
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


USE_NUMBA = numba_enabled()


def _norm_angle_impl(theta: float) -> float:
    two_pi = 2.0 * math.pi
    t = theta % two_pi
    if t > math.pi:
        t -= two_pi
    return t


def _coupling_impl(head_vel, surf_v, dt, mu_s, mu_k, g, v_stick, cos_b, sin_b):
    """One friction substep of the head against a surface moving at surf_v.

    cos_b/sin_b describe the surface inclination (1, 0 on flat ground).
    The bed ramp rises from its ground-touching lip toward the robot, i.e.
    height falls along +s, so gravity pulls at +g*sin_b down-ramp toward
    the lip. Returns the new head velocity.
    """
    breakaway = mu_s * g * cos_b
    kinetic = mu_k * g * cos_b
    slope = g * sin_b
    u = head_vel - surf_v
    if abs(u) < v_stick:
        req = (surf_v - head_vel) / dt
        if abs(req - slope) <= breakaway:
            return surf_v
        # Surface accelerating out from under the head: slip starts against it.
        direction = 1.0 if req > 0.0 else -1.0
        return head_vel + (direction * kinetic + slope) * dt
    direction = 1.0 if u > 0.0 else -1.0
    v_new = head_vel + (-direction * kinetic + slope) * dt
    if (v_new - surf_v) * u < 0.0:
        # Crossed the surface speed inside the step; latch onto it if static
        # friction can then hold against the slope.
        if abs(slope) <= breakaway:
            return surf_v
    return v_new


def _make_advance(norm_angle_fn, coupling_fn):
    def advance_impl(state, params, v_des, omega_des, duty, exact_sync, n_sub, event_out):
        dt = params[P_DT]
        alpha_base = params[P_ALPHA_BASE]
        alpha_belt = params[P_ALPHA_BELT]
        belt_gain = params[P_BELT_GAIN]
        mu_s = params[P_MU_S]
        mu_k = params[P_MU_K]
        g = params[P_G]
        v_stick = params[P_V_STICK]
        impulse_gain = params[P_IMPULSE_GAIN]
        upper_len = params[P_UPPER_LEN]
        ax_ox = params[P_AX_OX]
        ax_oy = params[P_AX_OY]
        ax_c = params[P_AX_C]
        ax_s = params[P_AX_S]
        bed_off = params[P_BED_OFF]
        halfwidth = params[P_HALFWIDTH]
        v_base_max = params[P_V_BASE_MAX]
        omega_max = params[P_OMEGA_MAX]
        cos_bed = params[P_COS_BED]
        sin_bed = params[P_SIN_BED]

        x = state[S_X]
        y = state[S_Y]
        theta = state[S_THETA]
        v_base = state[S_V_BASE]
        omega = state[S_OMEGA]
        v_belt = state[S_V_BELT]
        head_pos = state[S_HEAD_POS]
        head_vel = state[S_HEAD_VEL]
        head_acc = state[S_HEAD_ACC]
        onboard = state[S_ONBOARD]
        contacted = state[S_CONTACTED]
        s_edge = state[S_EDGE]

        event_out[EV_FIRED] = 0.0
        event_out[EV_T_OFFSET] = 0.0
        event_out[EV_REL_SPEED] = 0.0

        for i in range(n_sub):
            # Actuators: first-order lags (exact discrete step), saturated.
            v_base += (v_des - v_base) * alpha_base
            if v_base > v_base_max:
                v_base = v_base_max
            elif v_base < -v_base_max:
                v_base = -v_base_max
            omega += (omega_des - omega) * alpha_base
            if omega > omega_max:
                omega = omega_max
            elif omega < -omega_max:
                omega = -omega_max
            theta = norm_angle_fn(theta + omega * dt)
            x += v_base * math.cos(theta) * dt
            y += v_base * math.sin(theta) * dt
            v_belt += (duty * belt_gain - v_belt) * alpha_belt
            if v_belt > belt_gain:
                v_belt = belt_gain
            elif v_belt < -belt_gain:
                v_belt = -belt_gain

            heading_dot_axis = math.cos(theta) * ax_c + math.sin(theta) * ax_s
            v_axis = v_base * heading_dot_axis
            if exact_sync == 1:
                v_belt = -v_axis

            lip_x = x + math.cos(theta) * bed_off
            lip_y = y + math.sin(theta) * bed_off
            s_prev = s_edge
            s_edge = (lip_x - ax_ox) * ax_c + (lip_y - ax_oy) * ax_s
            lat = -(lip_x - ax_ox) * ax_s + (lip_y - ax_oy) * ax_c

            v0 = head_vel
            if (
                contacted == 0.0
                and s_prev < head_pos
                and s_edge >= head_pos
                and abs(lat) <= halfwidth
            ):
                contacted = 1.0
                edge_vel = (s_edge - s_prev) / dt
                rel = edge_vel - head_vel
                if s_edge > s_prev:
                    frac = (head_pos - s_prev) / (s_edge - s_prev)
                else:
                    frac = 0.0
                event_out[EV_FIRED] = 1.0
                event_out[EV_T_OFFSET] = (i + frac) * dt
                event_out[EV_REL_SPEED] = rel
                head_vel += impulse_gain * rel

            if contacted == 1.0:
                onboard = (s_edge - head_pos) / upper_len
                if onboard < 0.0:
                    onboard = 0.0
                elif onboard > 1.0:
                    onboard = 1.0
            else:
                onboard = 0.0

            if contacted == 1.0 and onboard > 0.0:
                surf_v = v_axis + v_belt
                head_vel = coupling_fn(
                    head_vel, surf_v, dt, mu_s, mu_k, g, v_stick, cos_bed, sin_bed
                )
            else:
                head_vel = coupling_fn(head_vel, 0.0, dt, mu_s, mu_k, g, v_stick, 1.0, 0.0)
            head_acc = (head_vel - v0) / dt
            head_pos += head_vel * dt

        state[S_X] = x
        state[S_Y] = y
        state[S_THETA] = theta
        state[S_V_BASE] = v_base
        state[S_OMEGA] = omega
        state[S_V_BELT] = v_belt
        state[S_HEAD_POS] = head_pos
        state[S_HEAD_VEL] = head_vel
        state[S_HEAD_ACC] = head_acc
        state[S_ONBOARD] = onboard
        state[S_CONTACTED] = contacted
        state[S_EDGE] = s_edge

    return advance_impl


# The plain-Python path is always available; the numba path shadows it as
# the active `advance`/`coupling` when enabled.
py_norm_angle = _norm_angle_impl
py_coupling = _coupling_impl
py_advance = _make_advance(_norm_angle_impl, _coupling_impl)

if USE_NUMBA:
    from numba import njit

    norm_angle = njit(cache=True)(_norm_angle_impl)
    coupling = njit(cache=True)(_coupling_impl)
    advance = njit(cache=True)(_make_advance(norm_angle, coupling))
else:
    norm_angle = py_norm_angle
    coupling = py_coupling
    advance = py_advance


def new_event_buffer() -> np.ndarray:
    return np.zeros(N_EVENT, dtype=np.float64)
