"""Mission control: extraction phase machine, belt/base speed
synchronization, and the scripted operator models used for batch trials.

The sync controller is a PI loop whose setpoint is the negated measured
base speed, so zero error means the belt surface is world-stationary and
the casualty is not dragged. Scripted operators emulate the three
teleperception modes purely through a (reaction delay, command noise)
pair; the shipped table is synthetic and fully configurable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .errors import PrematureContactError
from .kernels import norm_angle
from .world import PhaseId, Pose2D, StrapState, WorldState


class SetpointSource(Enum):
    BASE_SPEED_MEASURED = "BaseSpeedMeasured"


@dataclass(frozen=True)
class SyncControllerState:
    kp: float
    ki: float
    integral: float = 0.0
    integral_limit: float = 1.5
    last_error: float = 0.0
    setpoint_source: SetpointSource = SetpointSource.BASE_SPEED_MEASURED


@dataclass(frozen=True)
class OperatorCommand:
    v_cmd: float = 0.0
    omega_cmd: float = 0.0
    belt_enable: bool = False
    strap_trigger: bool = False
    stamp: float = 0.0


@dataclass
class ScriptedOperator:
    """Deterministic operator policy with mode-dependent delay and noise."""

    mode: str
    reaction_delay: float
    command_noise_std: float
    approach_speed: float
    loading_speed: float
    align_speed: float
    lat_tol: float
    ang_tol: float
    steer_kp_ang: float
    steer_kp_lat: float
    strap_sent: bool = field(default=False)


@dataclass(frozen=True)
class OperatorView:
    """What the operator perceives: a possibly delayed world snapshot."""

    time: float
    phase: PhaseId
    lateral_error: float
    angular_error: float
    cross_track: float  # signed offset of the robot from the loading line
    contact: bool
    onboard_fraction: float
    strap: StrapState


def alignment_error(robot_pose: Pose2D, casualty_axis: Pose2D) -> tuple[float, float]:
    """Lateral and angular misalignment of the robot's loading line.

    Lateral is the signed perpendicular offset of the head point from the
    line through the robot along its heading (positive when the head lies
    to the robot's left); angular is the normalized heading difference.
    """
    dx = casualty_axis.x - robot_pose.x
    dy = casualty_axis.y - robot_pose.y
    hx, hy = math.cos(robot_pose.theta), math.sin(robot_pose.theta)
    lateral = hx * dy - hy * dx
    angular = norm_angle(robot_pose.theta - casualty_axis.theta)
    return lateral, angular


def phase_update(phase: PhaseId, world: WorldState, cfg: dict) -> PhaseId:
    """Advance the extraction phase machine; Done is absorbing.

    Contact while still adjusting pose is a trial-aborting fault; the
    procedure gives no safe way to recover from an unplanned collision.
    """
    if phase is PhaseId.Done:
        return phase
    if phase is PhaseId.PoseAdjustment:
        if world.contacted:
            raise PrematureContactError(
                f"contact at t={world.time:.3f}s before alignment finished"
            )
        axis = cfg["casualty"]["axis"]
        lat, ang = alignment_error(
            world.robot.pose, Pose2D(axis["x"], axis["y"], axis["theta"])
        )
        if abs(lat) <= cfg["control"]["lat_tol"] and abs(ang) <= cfg["control"]["ang_tol"]:
            return PhaseId.Approaching
        return phase
    if phase is PhaseId.Approaching:
        return PhaseId.Loading if world.contacted else phase
    if phase is PhaseId.Loading:
        return PhaseId.Fastening if world.casualty.onboard_fraction >= 1.0 else phase
    # Fastening
    return PhaseId.Done if world.robot.strap is StrapState.FASTENED else phase


def sync_control(
    ctl: SyncControllerState, v_base_meas: float, v_belt_meas: float, dt: float
) -> tuple[SyncControllerState, float]:
    """One PI update toward belt speed = -(measured base speed).

    The integral is clamped to fixed anti-windup bounds and the duty to
    [-1, 1].
    """
    if dt <= 0.0:
        raise ValueError("dt must be > 0")
    e = (-v_base_meas) - v_belt_meas
    integral = ctl.integral + e * dt
    if integral > ctl.integral_limit:
        integral = ctl.integral_limit
    elif integral < -ctl.integral_limit:
        integral = -ctl.integral_limit
    duty = ctl.kp * e + ctl.ki * integral
    if duty > 1.0:
        duty = 1.0
    elif duty < -1.0:
        duty = -1.0
    return replace(ctl, integral=integral, last_error=e), duty


def operator_from_config(cfg: dict, mode: str) -> ScriptedOperator:
    table = cfg["control"]["operator_table"]
    if mode not in table:
        raise ValueError(f"unknown operator mode {mode!r}; expected one of {sorted(table)}")
    ctl = cfg["control"]
    return ScriptedOperator(
        mode=mode,
        reaction_delay=table[mode]["reaction_delay"],
        command_noise_std=table[mode]["command_noise_std"],
        approach_speed=ctl["approach_speed"],
        loading_speed=ctl["loading_speed"],
        align_speed=ctl["align_speed"],
        lat_tol=ctl["lat_tol"],
        ang_tol=ctl["ang_tol"],
        steer_kp_ang=ctl["steer_kp_ang"],
        steer_kp_lat=ctl["steer_kp_lat"],
    )


def operator_policy(
    op: ScriptedOperator, view: OperatorView, rng: np.random.Generator
) -> OperatorCommand:
    """Command for the current (delayed) view of the world.

    Steering acquires the loading line during pose adjustment and keeps
    tracking it through the approach; the drive speed is constant per
    phase. Gaussian noise on the speed command models the operator's
    perception-dependent imprecision. The strap trigger fires once.
    """
    v_cmd = 0.0
    omega_cmd = 0.0
    belt_enable = False
    strap_trigger = False

    phase = view.phase
    if phase in (PhaseId.PoseAdjustment, PhaseId.Approaching):
        # Line acquisition: head for the loading line, then settle parallel.
        heading_target = -math.atan(op.steer_kp_lat * view.cross_track)
        omega_cmd = op.steer_kp_ang * norm_angle(heading_target - view.angular_error)
        if phase is PhaseId.PoseAdjustment:
            # Turn first, creep once the steering demand is modest.
            v_cmd = op.align_speed * max(0.0, 1.0 - abs(omega_cmd))
        else:
            v_cmd = op.approach_speed
        belt_enable = phase is PhaseId.Approaching
    elif phase is PhaseId.Loading:
        v_cmd = op.loading_speed
        belt_enable = True
    elif phase is PhaseId.Fastening:
        if not op.strap_sent and view.strap is StrapState.OPEN:
            strap_trigger = True
            op.strap_sent = True

    if op.command_noise_std > 0.0 and phase is not PhaseId.Done:
        v_cmd += rng.normal(0.0, op.command_noise_std)

    return OperatorCommand(
        v_cmd=v_cmd,
        omega_cmd=omega_cmd,
        belt_enable=belt_enable,
        strap_trigger=strap_trigger,
        stamp=view.time,
    )


def clamp_command(cmd: OperatorCommand, cfg: dict) -> OperatorCommand:
    """Clip a command to the actuator limits before application."""
    v_max = cfg["robot"]["v_base_max"]
    w_max = cfg["robot"]["omega_max"]
    return replace(
        cmd,
        v_cmd=min(max(cmd.v_cmd, -v_max), v_max),
        omega_cmd=min(max(cmd.omega_cmd, -w_max), w_max),
    )
