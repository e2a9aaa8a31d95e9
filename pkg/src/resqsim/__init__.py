"""resqsim: deterministic planar simulator of a conveyor-bed rescue robot.

Loading a casualty happens through coordinated locomotion alone: the base
slides the stretcher-bed conveyor under the body while the belt runs in
counter-sync so the belt surface, and the person on it, stays
world-stationary. The package simulates that procedure end to end with
actuator and encoder models, a belt/base speed-sync controller, a
head-mounted IMU and safety metric pipeline, a seeded batch harness, and
a live WebSocket teleoperation bridge.
"""

from .control import (
    OperatorCommand,
    ScriptedOperator,
    SyncControllerState,
    alignment_error,
    operator_policy,
    phase_update,
    sync_control,
)
from .errors import (
    ConfigError,
    NoContactError,
    PrematureContactError,
    ProtocolError,
    RejectedCommandError,
    ReplayError,
    ResqsimError,
    SchemaVersionError,
    SimulationDiverged,
    TrialTimeoutError,
)
from .harness import SimSession, TrialConfig, TrialResult, run_batch, run_trial
from .logs import TrialLog, load_trial_log, replay_states
from .scenario import default_scenario, load_scenario, rough_scenario
from .sensing import (
    DistributionStats,
    ImuModel,
    ImuSample,
    SafetyReport,
    ThresholdTable,
    aggregate_reports,
    derive_head_params,
    estimate_force,
    extract_metrics,
)
from .vehicle import (
    BeltMotorModel,
    EncoderModel,
    StrapCommand,
    Twist,
    WheelSpeeds,
    belt_motor_step,
    diff_drive_forward,
    diff_drive_inverse,
    encoder_tick,
    strap_step,
)
from .world import (
    ActuationInput,
    CasualtyState,
    ContactEvent,
    PhaseId,
    Pose2D,
    RobotState,
    StrapState,
    WorldState,
    friction_force,
    loading_dynamics,
    step,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
