"""Trial execution: the tick-level engine, scripted trial runner, batch
harness, and log replay.

`SimSession` owns the packed physics state and advances one control tick
at a time (several physics substeps per tick), running encoders, the sync
controller, the strap sequencer, the IMU, and the phase machine in a fixed
order so a (scenario, seed) pair fully determines every output byte.
`run_trial` drives a session with a scripted operator; the bridge drives
one from network commands. Batches run trials at seeds base_seed + index
and aggregate per-mode force distributions.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable

import numpy as np

from . import kernels
from .control import (
    OperatorCommand,
    OperatorView,
    ScriptedOperator,
    SyncControllerState,
    alignment_error,
    clamp_command,
    operator_from_config,
    operator_policy,
    phase_update,
    sync_control,
)
from .errors import (
    NoContactError,
    PrematureContactError,
    RejectedCommandError,
    ResqsimError,
    SimulationDiverged,
    TrialTimeoutError,
)
from .logs import TrialLog, TrialLogWriter, dumps_record, load_trial_log
from .scenario import config_hash
from .sensing import (
    ImuModel,
    SafetyReport,
    ThresholdTable,
    aggregate_reports,
    estimate_force,
    extract_metrics,
)
from .vehicle import (
    EncoderModel,
    StrapActuator,
    StrapCommand,
    Twist,
    diff_drive_forward,
    diff_drive_inverse,
    strap_step,
)
from .world import (
    ContactEvent,
    PhaseId,
    Pose2D,
    StrapState,
    WorldState,
    initial_state,
    params_from_config,
    unpack_world,
)

log = logging.getLogger(__name__)

MODES = ("direct", "conventional", "immersive")
STATUS_DONE = "done"
STATUS_PREMATURE = "premature_contact"
STATUS_NO_CONTACT = "no_contact"
STATUS_TIMEOUT = "timeout"
STATUS_DIVERGED = "diverged"
FAULT_STATUSES = (STATUS_PREMATURE, STATUS_NO_CONTACT, STATUS_TIMEOUT, STATUS_DIVERGED)


class SimSession:
    """One live trial: physics, sensing, control, phases, logging."""

    def __init__(self, cfg: dict, mode: str, seed: int, writer: TrialLogWriter | None = None):
        self.cfg = cfg
        self.mode = mode
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self.params = params_from_config(cfg)
        self.state = initial_state(cfg, self.params)
        self.event_buf = kernels.new_event_buffer()

        sim = cfg["sim"]
        self.dt = sim["dt"]
        self.ctl_dt = 1.0 / sim["control_rate_hz"]
        self.n_sub = round(self.ctl_dt / self.dt)
        self.timeout = sim["trial_timeout"]

        self.phase = PhaseId.PoseAdjustment
        self.strap = StrapActuator(duration=cfg["strap"]["duration"])
        self.sync = SyncControllerState(
            kp=cfg["sync"]["kp"],
            ki=cfg["sync"]["ki"],
            integral_limit=cfg["sync"]["integral_limit"],
        )
        self.sync_mode = cfg["sync"]["mode"]
        self.fixed_duty = cfg["sync"]["fixed_duty"]
        enc = cfg["encoders"]
        self.enc_pulley = EncoderModel(enc["pulley"]["counts_per_rev"], enc["pulley"]["radius"])
        self.enc_floor = EncoderModel(enc["floor"]["counts_per_rev"], enc["floor"]["radius"])
        imu = cfg["imu"]
        self.imu = ImuModel(
            sample_rate=imu["rate_hz"],
            resolution=imu["resolution"],
            bias_instability=imu["bias_instability"],
            bias_walk_std=imu["bias_walk_std"],
            noise_std=imu["noise_std"],
        )
        self.imu_every = sim["control_rate_hz"] // imu["rate_hz"]
        self.imu_t: list[float] = []
        self.imu_a: list[float] = []
        self._head_vel_at_last_sample = 0.0

        self.tick_index = 0
        self.t = 0.0
        self.contact: ContactEvent | None = None
        self.status = "running"
        self.fault: str | None = None
        self.duty = 0.0
        self.live_a = 0.0
        self.live_a_max = 0.0
        self.live_f_max = cfg["safety"]["f_static"]
        self._held = OperatorCommand()
        self.events: list[dict] = []
        self.writer = writer
        self.world = unpack_world(0.0, self.state, self.phase, seed, cfg, self.strap.state)

        self.init_warnings: list[str] = []
        if cfg["casualty"]["m_upper"] > cfg["robot"]["payload_limit_kg"]:
            self.init_warnings.append(
                f"payload {cfg['casualty']['m_upper']} kg exceeds "
                f"{cfg['robot']['payload_limit_kg']} kg limit"
            )
            log.warning(self.init_warnings[-1])

    @property
    def running(self) -> bool:
        return self.status == "running"

    def tick(self, cmd: OperatorCommand | None = None) -> None:
        """Advance one control tick; None holds the previous command."""
        if not self.running:
            return
        warnings: list[str] = []
        if cmd is not None:
            self._held = replace(clamp_command(cmd, self.cfg), strap_trigger=cmd.strap_trigger)
        cmd_now = self._held
        # Discrete triggers are consumed on the tick they apply.
        self._held = replace(self._held, strap_trigger=False)

        # Wheel-level saturation, then back to a body twist.
        ws = diff_drive_inverse(
            Twist(cmd_now.v_cmd, cmd_now.omega_cmd), self.cfg["robot"]["track_width"]
        )
        wmax = self.cfg["robot"]["wheel_speed_max"]
        ws = replace(
            ws,
            v_left=min(max(ws.v_left, -wmax), wmax),
            v_right=min(max(ws.v_right, -wmax), wmax),
        )
        tw = diff_drive_forward(ws, self.cfg["robot"]["track_width"])

        # Proprioception over the window just ended.
        self.enc_floor, v_base_meas = self._enc_tick(self.enc_floor, self.state[kernels.S_V_BASE])
        self.enc_pulley, v_belt_meas = self._enc_tick(self.enc_pulley, self.state[kernels.S_V_BELT])

        exact = 0
        if cmd_now.belt_enable:
            if self.sync_mode == "pi":
                self.sync, self.duty = sync_control(self.sync, v_base_meas, v_belt_meas, self.ctl_dt)
            elif self.sync_mode == "fixed":
                self.duty = self.fixed_duty
            else:  # exact: encoders bypassed, belt slaved to the true base speed
                self.duty = 0.0
                exact = 1
        else:
            self.duty = 0.0
            self.sync = replace(self.sync, integral=0.0)

        if cmd_now.strap_trigger:
            try:
                self.strap = strap_step(
                    self.strap, StrapCommand.FASTEN, self.ctl_dt, self.state[kernels.S_ONBOARD]
                )
            except RejectedCommandError as exc:
                warnings.append(str(exc))
        else:
            self.strap = strap_step(self.strap, StrapCommand.HOLD, self.ctl_dt)

        tick_start = self.t
        kernels.advance(
            self.state, self.params, tw.v, tw.omega, self.duty, exact, self.n_sub, self.event_buf
        )
        if not np.all(np.isfinite(self.state)):
            self.status = STATUS_DIVERGED
            self.fault = "non-finite state"
            self._log_event({"t": self.t, "kind": "fault", "fault": self.fault})
            raise SimulationDiverged("non-finite state", last_state=self.world)

        self.tick_index += 1
        self.t = self.tick_index * self.ctl_dt

        if self.event_buf[kernels.EV_FIRED] == 1.0 and self.contact is None:
            self.contact = ContactEvent(
                t_contact=tick_start + self.event_buf[kernels.EV_T_OFFSET],
                relative_speed=self.event_buf[kernels.EV_REL_SPEED],
            )
            self._log_event(
                {
                    "t": self.t,
                    "kind": "contact",
                    "t_contact": self.contact.t_contact,
                    "relative_speed": self.contact.relative_speed,
                }
            )

        if self.tick_index % self.imu_every == 0:
            self._imu_sample()

        self.world = unpack_world(self.t, self.state, self.phase, self.seed, self.cfg,
                                  self.strap.state)
        try:
            new_phase = phase_update(self.phase, self.world, self.cfg)
        except PrematureContactError as exc:
            self.status = STATUS_PREMATURE
            self.fault = str(exc)
            self._log_event({"t": self.t, "kind": "fault", "fault": self.fault})
            self._log_tick(cmd_now, warnings)
            raise
        if new_phase is not self.phase:
            self.phase = new_phase
            self.world = replace(self.world, phase=new_phase)
            self._log_event({"t": self.t, "kind": "phase", "phase": new_phase.name})

        self._log_tick(cmd_now, warnings)

        if self.phase is PhaseId.Done:
            self.status = STATUS_DONE
        elif self.t > self.timeout:
            if self.contact is None:
                self.status = STATUS_NO_CONTACT
                self.fault = f"no contact within {self.timeout}s budget"
                self._log_event({"t": self.t, "kind": "fault", "fault": self.fault})
                raise NoContactError(self.fault)
            self.status = STATUS_TIMEOUT
            self.fault = f"trial exceeded {self.timeout}s budget"
            self._log_event({"t": self.t, "kind": "fault", "fault": self.fault})
            raise TrialTimeoutError(self.fault)

    def _enc_tick(self, enc: EncoderModel, true_speed: float) -> tuple[EncoderModel, float]:
        from .vehicle import encoder_tick

        return encoder_tick(enc, true_speed, self.ctl_dt)

    def _imu_sample(self) -> None:
        head_vel = self.state[kernels.S_HEAD_VEL]
        window = self.imu_every * self.ctl_dt
        true_acc = (head_vel - self._head_vel_at_last_sample) / window
        self._head_vel_at_last_sample = head_vel
        sample = self.imu.sample(true_acc, self.t, self.rng)
        self.imu_t.append(sample.t)
        self.imu_a.append(sample.a)
        if self.writer is not None:
            self.writer.imu(sample.t, sample.a)
        self.live_a = abs(sample.a)
        if self.contact is not None and sample.t >= self.contact.t_contact:
            if self.live_a > self.live_a_max:
                self.live_a_max = self.live_a
                self.live_f_max = estimate_force(
                    self.live_a_max, self.cfg["casualty"]["m_head"], self.cfg["safety"]["f_static"]
                )

    def operator_view(self) -> OperatorView:
        axis = self.cfg["casualty"]["axis"]
        pose = self.world.robot.pose
        lat, ang = alignment_error(pose, Pose2D(axis["x"], axis["y"], axis["theta"]))
        cross = -(pose.x - axis["x"]) * math.sin(axis["theta"]) + (
            pose.y - axis["y"]
        ) * math.cos(axis["theta"])
        return OperatorView(
            time=self.t,
            phase=self.phase,
            lateral_error=lat,
            angular_error=ang,
            cross_track=cross,
            contact=self.contact is not None,
            onboard_fraction=self.state[kernels.S_ONBOARD],
            strap=self.strap.state,
        )

    def _log_event(self, rec: dict) -> None:
        self.events.append(rec)
        if self.writer is not None:
            self.writer.event(rec)

    def _log_tick(self, cmd: OperatorCommand, warnings: list[str]) -> None:
        if self.writer is None:
            return
        s = self.state
        rec = {
            "t": self.t,
            "phase": self.phase.name,
            "cmd": {
                "v": cmd.v_cmd,
                "omega": cmd.omega_cmd,
                "belt": cmd.belt_enable,
                "strap": cmd.strap_trigger,
            },
            "duty": self.duty,
            "robot": {
                "x": s[kernels.S_X],
                "y": s[kernels.S_Y],
                "theta": s[kernels.S_THETA],
                "v_base": s[kernels.S_V_BASE],
                "omega": s[kernels.S_OMEGA],
                "v_belt": s[kernels.S_V_BELT],
                "strap": self.strap.state.value,
            },
            "head": {
                "pos": s[kernels.S_HEAD_POS],
                "vel": s[kernels.S_HEAD_VEL],
                "acc": s[kernels.S_HEAD_ACC],
            },
            "onboard": s[kernels.S_ONBOARD],
        }
        if warnings:
            rec["warn"] = warnings
        self.writer.tick(rec)

    def report(self, collected: TrialLog | None = None) -> SafetyReport:
        src = collected if collected is not None else self.as_trial_log()
        return extract_metrics(
            src,
            window=self.cfg["safety"]["window"],
            m_head=self.cfg["casualty"]["m_head"],
            f_static=self.cfg["safety"]["f_static"],
            thresholds=ThresholdTable.from_config(self.cfg["safety"]["thresholds"]),
        )

    def as_trial_log(self) -> TrialLog:
        return TrialLog(
            header={"seed": self.seed, "mode": self.mode},
            events=list(self.events),
            imu_t=np.asarray(self.imu_t),
            imu_a=np.asarray(self.imu_a),
        )


@dataclass(frozen=True)
class TrialConfig:
    scenario: dict
    mode: str = "direct"
    seed: int = 0
    out_dir: Path | None = None
    trial_id: str = "trial"


@dataclass
class TrialResult:
    status: str
    report: SafetyReport | None
    log_path: Path | None
    imu_path: Path | None
    report_path: Path | None
    trial_log: TrialLog | None
    fault: str | None = None


def _log_header(cfg: dict, mode: str, seed: int, warnings: list[str]) -> dict:
    return {
        "scenario_hash": config_hash(cfg),
        "seed": seed,
        "mode": mode,
        "dt": cfg["sim"]["dt"],
        "control_dt": 1.0 / cfg["sim"]["control_rate_hz"],
        "m_head": cfg["casualty"]["m_head"],
        "f_static": cfg["safety"]["f_static"],
        "window": cfg["safety"]["window"],
        "warnings": warnings,
    }


def run_trial(trial: TrialConfig) -> TrialResult:
    """Run one scripted trial to completion or fault; write log and report."""
    cfg = trial.scenario
    out = trial.out_dir
    writer = None
    log_path = imu_path = report_path = None
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        log_path = out / f"{trial.trial_id}.jsonl"
        imu_path = out / f"{trial.trial_id}.imu.csv"
        report_path = out / f"{trial.trial_id}.report.json"

    op = operator_from_config(cfg, trial.mode)
    session = SimSession(cfg, trial.mode, trial.seed, writer=None)
    if out is not None:
        writer = TrialLogWriter(
            log_path, imu_path, _log_header(cfg, trial.mode, trial.seed, session.init_warnings)
        )
        session.writer = writer

    cadence_ticks = max(1, round(cfg["sim"]["control_rate_hz"] / cfg["control"]["cadence_hz"]))
    delay_ticks = round(op.reaction_delay * cfg["sim"]["control_rate_hz"])
    history: deque[OperatorView] = deque(maxlen=delay_ticks + 1)

    fault: str | None = None
    try:
        while session.running:
            history.append(session.operator_view())
            if session.tick_index % cadence_ticks == 0:
                # history[0] is the view from reaction_delay ago (deque maxlen),
                # or the oldest available during the first moments.
                cmd = operator_policy(op, history[0], session.rng)
                session.tick(cmd)
            else:
                session.tick(None)
    except (PrematureContactError, NoContactError, TrialTimeoutError, SimulationDiverged) as exc:
        fault = str(exc)
    finally:
        if writer is not None:
            writer.close()

    trial_log = session.as_trial_log()
    report = None
    if session.status == STATUS_DONE:
        report = session.report(trial_log)
        if report_path is not None:
            report_path.write_text(dumps_record(report.to_dict()) + "\n")
    return TrialResult(
        status=session.status,
        report=report,
        log_path=log_path,
        imu_path=imu_path,
        report_path=report_path,
        trial_log=trial_log,
        fault=fault,
    )


def expand_modes(modes) -> list[str]:
    if modes in ("all", ["all"], ("all",)):
        return list(MODES)
    out = list(modes)
    for m in out:
        if m not in MODES:
            raise ValueError(f"unknown mode {m!r}")
    return out


def run_batch(
    cfg: dict,
    modes,
    trials_per_mode: int,
    base_seed: int,
    out_dir: Path,
    progress: Callable[[str], None] | None = None,
) -> dict:
    """Run modes x trials_per_mode seeded trials; write per-trial outputs
    and a manifest with per-mode force distributions. Faulted trials are
    recorded and skipped in the stats; they never disturb other trials."""
    if trials_per_mode < 1:
        raise ValueError("trials_per_mode must be >= 1")
    modes = expand_modes(modes)
    out_dir = Path(out_dir)
    trials_dir = out_dir / "trials"
    trials_dir.mkdir(parents=True, exist_ok=True)

    entries: list[dict] = []
    mode_reports: list[tuple[str, SafetyReport]] = []
    idx = 0
    for mode in modes:
        for i in range(trials_per_mode):
            seed = base_seed + idx
            trial_id = f"{mode}-{i:03d}"
            result = run_trial(
                TrialConfig(
                    scenario=cfg, mode=mode, seed=seed, out_dir=trials_dir, trial_id=trial_id
                )
            )
            entry = {
                "trial_id": trial_id,
                "mode": mode,
                "seed": seed,
                "status": result.status,
                "log": str(result.log_path.relative_to(out_dir)),
                "imu": str(result.imu_path.relative_to(out_dir)),
                "report": (
                    str(result.report_path.relative_to(out_dir))
                    if result.report is not None
                    else None
                ),
            }
            if result.fault:
                entry["fault"] = result.fault
            entries.append(entry)
            if result.report is not None:
                mode_reports.append((mode, result.report))
            if progress is not None:
                progress(f"{trial_id}: {result.status}")
            idx += 1

    stats = aggregate_reports(mode_reports) if mode_reports else {}
    manifest = {
        "schema_version": 1,
        "config_hash": config_hash(cfg),
        "base_seed": base_seed,
        "modes": modes,
        "trials_per_mode": trials_per_mode,
        "entries": entries,
        "stats": {mode: s.to_dict() for mode, s in stats.items()},
    }
    (out_dir / "manifest.json").write_text(dumps_record(manifest) + "\n")
    return manifest


def replay_trial(log_path: Path):
    """Load and re-emit a recorded trial's state stream."""
    trial_log = load_trial_log(log_path)
    return trial_log, (rec for rec in trial_log.ticks)
