"""Actuator and proprioceptive sensor models.

Differential-drive kinematics, the belt motor behind its PWM duty command,
the strap motor sequencing, and the two incremental encoders (conveyor
pulley and floor wheel). Everything here is a pure state-transition
function over small immutable dataclasses, callable from the single
stepping thread.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

from .errors import RejectedCommandError
from .world import StrapState


@dataclass(frozen=True)
class WheelSpeeds:
    v_left: float
    v_right: float


@dataclass(frozen=True)
class Twist:
    v: float
    omega: float


@dataclass(frozen=True)
class EncoderModel:
    counts_per_rev: int
    radius: float
    accumulated_count: int = 0
    angle: float = 0.0  # exact accumulated shaft angle, radians


@dataclass(frozen=True)
class BeltMotorModel:
    duty: float = 0.0
    v_belt_ss_gain: float = 0.5
    tau: float = 0.2
    v_belt: float = 0.0
    clamp_warning: bool = False


class StrapCommand(Enum):
    FASTEN = "Fasten"
    RELEASE = "Release"
    HOLD = "Hold"


@dataclass(frozen=True)
class StrapActuator:
    state: StrapState = StrapState.OPEN
    progress: float = 0.0  # 0 = open end, 1 = fastened end
    duration: float = 2.0
    direction: int = 0  # +1 fastening, -1 releasing, 0 idle


def diff_drive_forward(ws: WheelSpeeds, track_width: float) -> Twist:
    """Wheel speeds to body twist."""
    if track_width <= 0.0:
        raise ValueError("track_width must be > 0")
    return Twist(v=(ws.v_left + ws.v_right) / 2.0, omega=(ws.v_right - ws.v_left) / track_width)


def diff_drive_inverse(twist: Twist, track_width: float) -> WheelSpeeds:
    """Body twist to wheel speeds; exact inverse of diff_drive_forward."""
    if track_width <= 0.0:
        raise ValueError("track_width must be > 0")
    half = twist.omega * track_width / 2.0
    return WheelSpeeds(v_left=twist.v - half, v_right=twist.v + half)


def encoder_tick(enc: EncoderModel, true_speed: float, dt: float) -> tuple[EncoderModel, float]:
    """Accumulate one measurement window; returns the quantized speed.

    The shaft angle integrates exactly; only whole counts are reported, so
    the per-window error is bounded by one count and averages out over
    many windows.
    """
    if dt <= 0.0:
        raise ValueError("dt must be > 0")
    angle = enc.angle + true_speed / enc.radius * dt
    step = 2.0 * math.pi / enc.counts_per_rev
    total = math.floor(angle / step)
    delta = total - enc.accumulated_count
    measured = delta * step * enc.radius / dt
    return replace(enc, angle=angle, accumulated_count=total), measured


def encoder_quantum(enc: EncoderModel, dt: float) -> float:
    """Speed represented by a single count over one window."""
    return 2.0 * math.pi * enc.radius / enc.counts_per_rev / dt


def belt_motor_step(m: BeltMotorModel, duty: float, dt: float) -> BeltMotorModel:
    """First-order response of the belt to a PWM duty in [-1, 1].

    Uses the exact discrete step of the lag, so trajectories do not depend
    on dt. Out-of-range duty is clamped and flagged so the trial log can
    record the violation.
    """
    clamped = False
    if duty > 1.0:
        duty, clamped = 1.0, True
    elif duty < -1.0:
        duty, clamped = -1.0, True
    target = duty * m.v_belt_ss_gain
    v = target + (m.v_belt - target) * math.exp(-dt / m.tau)
    v = min(max(v, -m.v_belt_ss_gain), m.v_belt_ss_gain)
    return replace(m, duty=duty, v_belt=v, clamp_warning=clamped)


def strap_step(
    actuator: StrapActuator,
    command: StrapCommand,
    dt: float,
    onboard_fraction: float = 1.0,
) -> StrapActuator:
    """Advance the strap mechanism one step.

    Fastening from fully open requires the upper body to be fully onboard;
    the phase machine guarantees that, and a direct violation is rejected.
    Transitions always pass through the intermediate state, in either
    direction.
    """
    direction = actuator.direction
    if command is StrapCommand.FASTEN:
        if actuator.state is StrapState.OPEN and onboard_fraction < 1.0:
            raise RejectedCommandError("fasten refused: upper body not fully onboard")
        direction = 1
    elif command is StrapCommand.RELEASE:
        direction = -1

    progress = actuator.progress
    state = actuator.state
    if direction != 0:
        progress = progress + direction * dt / actuator.duration
        if progress >= 1.0:
            progress, state, direction = 1.0, StrapState.FASTENED, 0
        elif progress <= 0.0:
            progress, state, direction = 0.0, StrapState.OPEN, 0
        else:
            state = StrapState.FASTENING
    return replace(actuator, state=state, progress=progress, direction=direction)
