"""Planar world model: domain types and the fixed-step physics facade.

The robot navigates in the plane (unicycle base) while the casualty lives
on a 1-D loading axis anchored at its initial head point; positive s runs
from the head toward the feet, the direction the bed slides under the
body. State is packed into the float64 vectors documented in `kernels`
for the hot loop; the dataclasses here are immutable snapshots safe to
hand across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum, IntEnum

import numpy as np

from . import kernels
from .errors import SimulationDiverged
from .kernels import norm_angle


class PhaseId(IntEnum):
    PoseAdjustment = 0
    Approaching = 1
    Loading = 2
    Fastening = 3
    Done = 4


class StrapState(Enum):
    OPEN = "Open"
    FASTENING = "Fastening"
    FASTENED = "Fastened"


@dataclass(frozen=True)
class Pose2D:
    x: float
    y: float
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "theta", norm_angle(self.theta))


@dataclass(frozen=True)
class RobotState:
    pose: Pose2D
    v_base: float
    omega: float
    v_belt: float
    strap: StrapState
    bed_angle: float


@dataclass(frozen=True)
class CasualtyState:
    upper_pos: float
    lower_pos: float
    head_pos: float
    head_vel: float
    head_acc: float
    onboard_fraction: float
    m_head: float
    m_upper: float
    mu_s: float
    mu_k: float

    def __post_init__(self):
        if not (0.0 < self.mu_k <= self.mu_s):
            raise ValueError("require 0 < mu_k <= mu_s")
        if not (0.0 <= self.onboard_fraction <= 1.0):
            raise ValueError("onboard_fraction outside [0, 1]")


@dataclass(frozen=True)
class ContactEvent:
    t_contact: float
    relative_speed: float


@dataclass(frozen=True)
class WorldState:
    time: float
    robot: RobotState
    casualty: CasualtyState
    phase: PhaseId
    rng_seed: int
    contacted: bool = False


@dataclass(frozen=True)
class ActuationInput:
    v: float
    omega: float
    duty: float
    exact_sync: bool = False


def params_from_config(cfg: dict) -> np.ndarray:
    p = np.zeros(kernels.N_PARAMS, dtype=np.float64)
    ax = cfg["casualty"]["axis"]
    dt = cfg["sim"]["dt"]
    p[kernels.P_DT] = dt
    p[kernels.P_ALPHA_BASE] = -math.expm1(-dt / cfg["robot"]["base_tau"])
    p[kernels.P_ALPHA_BELT] = -math.expm1(-dt / cfg["belt"]["tau"])
    p[kernels.P_BELT_GAIN] = cfg["belt"]["ss_gain"]
    p[kernels.P_MU_S] = cfg["casualty"]["mu_s"]
    p[kernels.P_MU_K] = cfg["casualty"]["mu_k"]
    p[kernels.P_G] = cfg["sim"]["gravity"]
    p[kernels.P_V_STICK] = cfg["contact"]["v_stick"]
    p[kernels.P_IMPULSE_GAIN] = cfg["contact"]["impulse_gain"]
    p[kernels.P_UPPER_LEN] = cfg["casualty"]["upper_length"]
    p[kernels.P_AX_OX] = ax["x"]
    p[kernels.P_AX_OY] = ax["y"]
    p[kernels.P_AX_C] = math.cos(ax["theta"])
    p[kernels.P_AX_S] = math.sin(ax["theta"])
    p[kernels.P_BED_OFF] = cfg["robot"]["bed_edge_offset"]
    p[kernels.P_HALFWIDTH] = cfg["casualty"]["body_halfwidth"]
    p[kernels.P_V_BASE_MAX] = cfg["robot"]["v_base_max"]
    p[kernels.P_OMEGA_MAX] = cfg["robot"]["omega_max"]
    p[kernels.P_COS_BED] = math.cos(cfg["robot"]["bed_angle"])
    p[kernels.P_SIN_BED] = math.sin(cfg["robot"]["bed_angle"])
    return p


def edge_projection(x: float, y: float, theta: float, params: np.ndarray) -> tuple[float, float]:
    """Axis coordinate and lateral offset of the bed edge for a robot pose."""
    lip_x = x + math.cos(theta) * params[kernels.P_BED_OFF]
    lip_y = y + math.sin(theta) * params[kernels.P_BED_OFF]
    dx = lip_x - params[kernels.P_AX_OX]
    dy = lip_y - params[kernels.P_AX_OY]
    s = dx * params[kernels.P_AX_C] + dy * params[kernels.P_AX_S]
    lat = -dx * params[kernels.P_AX_S] + dy * params[kernels.P_AX_C]
    return s, lat


def initial_state(cfg: dict, params: np.ndarray | None = None) -> np.ndarray:
    if params is None:
        params = params_from_config(cfg)
    start = cfg["robot"]["start"]
    s = np.zeros(kernels.N_STATE, dtype=np.float64)
    s[kernels.S_X] = start["x"]
    s[kernels.S_Y] = start["y"]
    s[kernels.S_THETA] = norm_angle(start["theta"])
    s[kernels.S_EDGE], _ = edge_projection(s[kernels.S_X], s[kernels.S_Y], s[kernels.S_THETA], params)
    return s


def pack_world(world: WorldState, params: np.ndarray) -> np.ndarray:
    s = np.zeros(kernels.N_STATE, dtype=np.float64)
    r, c = world.robot, world.casualty
    s[kernels.S_X] = r.pose.x
    s[kernels.S_Y] = r.pose.y
    s[kernels.S_THETA] = r.pose.theta
    s[kernels.S_V_BASE] = r.v_base
    s[kernels.S_OMEGA] = r.omega
    s[kernels.S_V_BELT] = r.v_belt
    s[kernels.S_HEAD_POS] = c.head_pos
    s[kernels.S_HEAD_VEL] = c.head_vel
    s[kernels.S_HEAD_ACC] = c.head_acc
    s[kernels.S_ONBOARD] = c.onboard_fraction
    s[kernels.S_CONTACTED] = 1.0 if world.contacted else 0.0
    s[kernels.S_EDGE], _ = edge_projection(r.pose.x, r.pose.y, r.pose.theta, params)
    return s


def unpack_world(
    time: float, state: np.ndarray, phase: PhaseId, rng_seed: int, cfg: dict,
    strap: StrapState = StrapState.OPEN,
) -> WorldState:
    c = cfg["casualty"]
    head_pos = state[kernels.S_HEAD_POS]
    return WorldState(
        time=time,
        robot=RobotState(
            pose=Pose2D(state[kernels.S_X], state[kernels.S_Y], state[kernels.S_THETA]),
            v_base=state[kernels.S_V_BASE],
            omega=state[kernels.S_OMEGA],
            v_belt=state[kernels.S_V_BELT],
            strap=strap,
            bed_angle=cfg["robot"]["bed_angle"],
        ),
        casualty=CasualtyState(
            upper_pos=head_pos,
            lower_pos=head_pos + c["upper_length"],
            head_pos=head_pos,
            head_vel=state[kernels.S_HEAD_VEL],
            head_acc=state[kernels.S_HEAD_ACC],
            onboard_fraction=state[kernels.S_ONBOARD],
            m_head=c["m_head"],
            m_upper=c["m_upper"],
            mu_s=c["mu_s"],
            mu_k=c["mu_k"],
        ),
        phase=phase,
        rng_seed=rng_seed,
        contacted=state[kernels.S_CONTACTED] == 1.0,
    )


def step(
    world: WorldState, actuation: ActuationInput, dt: float, cfg: dict
) -> tuple[WorldState, ContactEvent | None]:
    """Advance exactly one physics step of the configured size.

    Pure with respect to `world`: returns a fresh snapshot and the contact
    event if the bed edge reached the head during this step.
    """
    if abs(dt - cfg["sim"]["dt"]) > 1e-12:
        raise ValueError(f"dt {dt} does not match configured fixed step {cfg['sim']['dt']}")
    params = params_from_config(cfg)
    state = pack_world(world, params)
    event = kernels.new_event_buffer()
    kernels.advance(
        state, params, actuation.v, actuation.omega, actuation.duty,
        1 if actuation.exact_sync else 0, 1, event,
    )
    if not np.all(np.isfinite(state)):
        raise SimulationDiverged("non-finite state after step", last_state=world)
    k = round(world.time / dt)
    new_world = unpack_world((k + 1) * dt, state, world.phase, world.rng_seed, cfg,
                             strap=world.robot.strap)
    contact = None
    if event[kernels.EV_FIRED] == 1.0:
        contact = ContactEvent(
            t_contact=world.time + event[kernels.EV_T_OFFSET],
            relative_speed=event[kernels.EV_REL_SPEED],
        )
    return new_world, contact


def friction_force(
    normal_load: float,
    mu_s: float,
    mu_k: float,
    applied_force: float,
    rel_vel: float,
    v_stick: float = 1e-4,
) -> float:
    """Coulomb friction reaction on a body pressed onto a surface.

    Sticking (slip below the deadband and the applied force within the
    breakaway limit) cancels the applied force; otherwise kinetic friction
    opposes the slip, or the incipient slip when starting from rest.
    """
    if normal_load < 0.0:
        raise ValueError("normal_load must be >= 0")
    if abs(rel_vel) < v_stick:
        if abs(applied_force) <= mu_s * normal_load:
            return -applied_force
        return -math.copysign(mu_k * normal_load, applied_force)
    return -math.copysign(mu_k * normal_load, rel_vel)


def loading_dynamics(
    casualty: CasualtyState,
    robot: RobotState,
    contact: bool,
    dt: float,
    gravity: float = 9.8,
    v_stick: float = 1e-4,
) -> CasualtyState:
    """One step of the head/surface coupling along the loading axis.

    Assumes the robot is aligned with the axis (its longitudinal speed is
    the axis speed), which is the regime in which the loading phase runs;
    the full simulator projects onto the axis instead. While any of the
    upper body rests on the bed the head rides the belt surface (world
    speed v_base + v_belt, zero under perfect sync); otherwise it drags on
    flat ground.
    """
    on_belt = contact and casualty.onboard_fraction > 0.0
    if on_belt:
        surf_v = robot.v_base + robot.v_belt
        cos_b = math.cos(robot.bed_angle)
        sin_b = math.sin(robot.bed_angle)
    else:
        surf_v, cos_b, sin_b = 0.0, 1.0, 0.0
    v_new = kernels.coupling(
        casualty.head_vel, surf_v, dt, casualty.mu_s, casualty.mu_k,
        gravity, v_stick, cos_b, sin_b,
    )
    acc = (v_new - casualty.head_vel) / dt
    pos = casualty.head_pos + v_new * dt
    return replace(
        casualty,
        head_pos=pos,
        upper_pos=pos,
        lower_pos=pos + (casualty.lower_pos - casualty.upper_pos),
        head_vel=v_new,
        head_acc=acc,
    )
