"""Live teleoperation bridge: one operator, one simulation, over WebSocket.

The stepping loop owns the world state; network I/O only exchanges values
with it through queues. Snapshots go out at the configured rate (frames
are dropped under load, physics steps never are); inbound commands latch
at the first control tick strictly after their effective stamp, which is
the receive time for live operators and the declared stamp for scripted
clients replaying a recorded session. Operator disconnect forces a zero
velocity command within one tick and ends the session as interrupted once
the base halts.
"""

from __future__ import annotations

import asyncio
import itertools
import logging
import math
import time
from dataclasses import dataclass, replace
from pathlib import Path

from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from . import kernels, protocol
from .control import OperatorCommand
from .errors import ProtocolError, ResqsimError, SchemaVersionError
from .harness import STATUS_DONE, SimSession, _log_header
from .logs import TrialLogWriter, dumps_record
from .scenario import config_hash
from .sensing import ThresholdTable
from .world import PhaseId

log = logging.getLogger(__name__)

MAX_CONSECUTIVE_FAULTS = 3
COMMAND_QUEUE_LIMIT = 256
HALT_SPEED = 1e-3


def full_snapshot_data(session: SimSession) -> dict:
    """Unmasked world snapshot; apply_visibility prunes it per mode."""
    s = session.state
    cfg = session.cfg
    axis = cfg["casualty"]["axis"]
    c, si = math.cos(axis["theta"]), math.sin(axis["theta"])
    head_s = s[kernels.S_HEAD_POS]
    upper = cfg["casualty"]["upper_length"]
    lower = cfg["casualty"]["lower_length"]

    def on_axis(dist: float) -> tuple[float, float]:
        return axis["x"] + c * dist, axis["y"] + si * dist

    hx, hy = on_axis(head_s)
    mx, my = on_axis(head_s + upper)
    fx, fy = on_axis(head_s + upper + lower)
    return {
        "t": session.t,
        "phase": session.phase.name,
        "contact": session.contact is not None,
        "robot": {
            "v_base": s[kernels.S_V_BASE],
            "v_belt": s[kernels.S_V_BELT],
            "omega": s[kernels.S_OMEGA],
            "duty": session.duty,
            "strap": session.strap.state.value,
        },
        "pose": {"x": s[kernels.S_X], "y": s[kernels.S_Y], "theta": s[kernels.S_THETA]},
        "casualty": {
            "head": [hx, hy],
            "segments": [[hx, hy, mx, my], [mx, my, fx, fy]],
        },
        "onboard": s[kernels.S_ONBOARD],
        "safety": {"a": session.live_a, "a_max": session.live_a_max, "f_max": session.live_f_max},
    }


@dataclass(frozen=True)
class PendingCommand:
    effective_t: float
    cmd: OperatorCommand


class SessionRecorder:
    """Writes the session record: applied commands plus the trial outputs."""

    def __init__(self, directory: Path, session_id: str):
        self.dir = Path(directory) / session_id
        self.dir.mkdir(parents=True, exist_ok=True)
        self._commands = (self.dir / "commands.jsonl").open("w")

    def command(self, applied_t: float, cmd: OperatorCommand) -> None:
        self._commands.write(
            dumps_record(
                {
                    "applied_t": applied_t,
                    "v_cmd": cmd.v_cmd,
                    "omega_cmd": cmd.omega_cmd,
                    "belt_enable": cmd.belt_enable,
                    "strap_trigger": cmd.strap_trigger,
                    "stamp": cmd.stamp,
                }
            )
            + "\n"
        )

    def finish(self, summary: dict) -> None:
        self._commands.close()
        (self.dir / "session.json").write_text(dumps_record(summary) + "\n")


class BridgeState:
    def __init__(self, cfg: dict, mode: str, seed: int, record_dir: Path | None,
                 speed: float, realtime: bool):
        self.cfg = cfg
        self.mode = mode
        self.seed = seed
        self.record_dir = Path(record_dir) if record_dir else None
        self.speed = speed
        self.realtime = realtime
        self.busy = False
        self.session_counter = itertools.count(1)


async def _receiver(ws: WebSocket, state: "LiveSession") -> None:
    faults = 0
    while True:
        try:
            text = await ws.receive_text()
        except WebSocketDisconnect:
            state.disconnected = True
            return
        try:
            msg = protocol.decode(text)
        except ProtocolError as exc:
            faults += 1
            state.fault_count += 1
            try:
                await ws.send_text(protocol.encode(protocol.error_frame("bad_frame", str(exc))))
            except Exception:
                state.disconnected = True
                return
            if faults >= MAX_CONSECUTIVE_FAULTS:
                state.disconnected = True
                state.kicked = True
                return
            continue
        faults = 0
        if msg["type"] == "command":
            if len(state.pending) >= COMMAND_QUEUE_LIMIT:
                state.fault_count += 1
                try:
                    await ws.send_text(
                        protocol.encode(protocol.error_frame("overflow", "command queue full"))
                    )
                except Exception:
                    state.disconnected = True
                    return
                continue
            recv_t = state.session.t
            latency = state.session.cfg["teleop"]["command_latency"]
            effective = max(msg["stamp"], recv_t) + latency
            cmd = OperatorCommand(
                v_cmd=msg["v_cmd"],
                omega_cmd=msg["omega_cmd"],
                belt_enable=msg["belt_enable"],
                strap_trigger=msg["strap_trigger"],
                stamp=msg["stamp"],
            )
            state.pending.append(PendingCommand(effective, cmd))
        elif msg["type"] == "bye":
            state.disconnected = True
            return
        else:
            state.fault_count += 1
            try:
                await ws.send_text(
                    protocol.encode(
                        protocol.error_frame("unexpected", f"unexpected {msg['type']} frame")
                    )
                )
            except Exception:
                state.disconnected = True
                return


class LiveSession:
    """State shared between the stepping loop and the receiver task."""

    def __init__(self, session: SimSession):
        self.session = session
        self.pending: list[PendingCommand] = []
        self.disconnected = False
        self.kicked = False
        self.fault_count = 0
        self.interrupted = False

    def take_due(self, now_t: float) -> OperatorCommand | None:
        """Latest-wins continuous command among those due strictly before
        now_t; discrete strap triggers are never lost."""
        due = [p for p in self.pending if p.effective_t < now_t]
        if not due:
            return None
        self.pending = [p for p in self.pending if p.effective_t >= now_t]
        latest = max(due, key=lambda p: p.effective_t)
        trigger = any(p.cmd.strap_trigger for p in due)
        return replace(latest.cmd, strap_trigger=trigger)


async def run_session(ws: WebSocket, bstate: BridgeState, hello: dict) -> None:
    cfg = bstate.cfg
    mode = bstate.mode
    session_id = f"session-{next(bstate.session_counter):04d}"
    ctl_rate = cfg["sim"]["control_rate_hz"]
    ctl_dt = 1.0 / ctl_rate
    snap_every = max(1, round(ctl_rate / cfg["teleop"]["snapshot_rate_hz"]))

    recorder = None
    writer = None
    session = SimSession(cfg, mode, bstate.seed)
    if bstate.record_dir is not None:
        recorder = SessionRecorder(bstate.record_dir, session_id)
        writer = TrialLogWriter(
            recorder.dir / "log.jsonl",
            recorder.dir / "log.imu.csv",
            _log_header(cfg, mode, bstate.seed, session.init_warnings),
        )
        session.writer = writer

    live = LiveSession(session)
    await ws.send_text(
        protocol.encode(
            protocol.make(
                "hello_ack",
                ok=True,
                scenario_id=config_hash(cfg)[:12],
                mode=mode,
                snapshot_rate=cfg["teleop"]["snapshot_rate_hz"],
            )
        )
    )

    receiver = asyncio.create_task(_receiver(ws, live))
    thresholds = ThresholdTable.from_config(cfg["safety"]["thresholds"])
    fired_thresholds: set[str] = set()
    seq = 0
    last_phase = session.phase
    stop_cmd_sent = False
    halt_deadline: float | None = None
    fault_reason: str | None = None
    dropped = 0
    wall_start = time.monotonic()

    async def send(msg: dict) -> bool:
        try:
            await ws.send_text(protocol.encode(msg))
            return True
        except Exception:
            live.disconnected = True
            return False

    try:
        while session.running:
            if live.disconnected and not stop_cmd_sent:
                # Safety stop: zero velocities, keep the belt sync holding.
                cmd = OperatorCommand(
                    v_cmd=0.0,
                    omega_cmd=0.0,
                    belt_enable=session._held.belt_enable,
                    strap_trigger=False,
                    stamp=session.t,
                )
                stop_cmd_sent = True
                live.interrupted = True
                halt_deadline = session.t + 2.0
            else:
                cmd = live.take_due(session.t)
            if cmd is not None and recorder is not None:
                recorder.command(session.t, cmd)
            try:
                session.tick(cmd)
            except ResqsimError as exc:
                fault_reason = str(exc)
                break

            if session.phase is not last_phase:
                last_phase = session.phase
                if not live.disconnected:
                    await send(protocol.make("phase_event", t=session.t, phase=session.phase.name))
            if session.contact is not None:
                live_values = {
                    "acceleration": session.live_a_max,
                    "force": session.live_f_max,
                }
                for verdict in thresholds.judge(live_values):
                    if not verdict.passed and verdict.name not in fired_thresholds:
                        fired_thresholds.add(verdict.name)
                        if not live.disconnected:
                            await send(
                                protocol.make(
                                    "safety_event",
                                    t=session.t,
                                    name=verdict.name,
                                    value=verdict.value,
                                    limit=verdict.limit,
                                )
                            )

            behind = False
            if bstate.realtime and bstate.speed > 0:
                target = wall_start + session.tick_index * ctl_dt / bstate.speed
                now = time.monotonic()
                if now < target:
                    await asyncio.sleep(target - now)
                else:
                    behind = now - target > ctl_dt / bstate.speed
                    await asyncio.sleep(0)  # keep the receiver task fed
            else:
                await asyncio.sleep(0)

            if session.tick_index % snap_every == 0 and not live.disconnected:
                # Shed frames when behind the wall clock, but never starve the
                # stream: scripted clients pace themselves on snapshots.
                if behind and dropped < 2:
                    dropped += 1
                else:
                    dropped = 0
                    seq += 1
                    data = protocol.apply_visibility(
                        full_snapshot_data(session), mode, cfg["teleop"]["fov"]
                    )
                    await send(protocol.make("snapshot", seq=seq, data=data))

            if halt_deadline is not None:
                if abs(session.state[kernels.S_V_BASE]) < HALT_SPEED or session.t >= halt_deadline:
                    break
    finally:
        receiver.cancel()

    status = "interrupted" if session.status == "running" else session.status
    report = None
    if session.status == STATUS_DONE:
        report = session.report()
    if writer is not None:
        writer.close()
    if recorder is not None:
        summary = {
            "session_id": session_id,
            "mode": mode,
            "seed": bstate.seed,
            "scenario_hash": config_hash(cfg),
            "status": status,
            "interrupted": live.interrupted,
            "fault": fault_reason,
            "protocol_faults": live.fault_count,
        }
        if report is not None:
            (recorder.dir / "report.json").write_text(dumps_record(report.to_dict()) + "\n")
            summary["report"] = "report.json"
        recorder.finish(summary)
    if not live.disconnected:
        if report is not None:
            await send(
                protocol.make("snapshot", seq=seq + 1,
                              data={"final_report": report.to_dict(), "t": session.t,
                                    "phase": session.phase.name, "mode": mode})
            )
        await send(protocol.make("bye", reason=fault_reason or status))
        try:
            await ws.close()
        except Exception:
            pass


def create_app(
    cfg: dict,
    mode: str,
    seed: int = 0,
    record_dir: str | Path | None = None,
    speed: float = 1.0,
    realtime: bool = True,
    frontend_dir: str | Path | None = None,
) -> FastAPI:
    app = FastAPI(title="resqsim teleop bridge")
    bstate = BridgeState(cfg, mode, seed, record_dir, speed, realtime)
    app.state.bridge = bstate

    @app.get("/healthz")
    async def healthz():
        return {"ok": True}

    @app.get("/scenario")
    async def scenario():
        return JSONResponse(cfg)

    @app.websocket("/session")
    async def session_endpoint(ws: WebSocket):
        await ws.accept()
        try:
            text = await ws.receive_text()
        except WebSocketDisconnect:
            return
        try:
            hello = protocol.decode(text)
            if hello["type"] != "hello":
                raise ProtocolError("expected hello frame")
        except SchemaVersionError as exc:
            await ws.send_text(
                protocol.encode(
                    protocol.error_frame(
                        "version", f"supported versions: {list(exc.supported)}"
                    )
                )
            )
            await ws.close()
            return
        except ProtocolError as exc:
            await ws.send_text(protocol.encode(protocol.error_frame("bad_handshake", str(exc))))
            await ws.close()
            return
        if bstate.busy:
            await ws.send_text(
                protocol.encode(protocol.error_frame("busy", "another operator is connected"))
            )
            await ws.close()
            return
        bstate.busy = True
        try:
            await run_session(ws, bstate, hello)
        except WebSocketDisconnect:
            pass
        finally:
            bstate.busy = False

    if frontend_dir is not None and Path(frontend_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(frontend_dir), html=True), name="cockpit")
    return app


def serve(
    cfg: dict,
    mode: str,
    port: int,
    seed: int = 0,
    record_dir: str | Path | None = None,
    speed: float = 1.0,
    frontend_dir: str | Path | None = None,
) -> None:
    import uvicorn

    app = create_app(
        cfg, mode, seed=seed, record_dir=record_dir, speed=speed, frontend_dir=frontend_dir
    )
    uvicorn.run(app, host="127.0.0.1", port=port, log_level="warning")


def create_replay_app(trial_log, speed: float = 1.0) -> FastAPI:
    """Read-only session that streams a recorded trial as snapshots."""
    app = FastAPI(title="resqsim replay")
    ctl_dt = trial_log.header.get("control_dt", 0.01)

    @app.get("/healthz")
    async def healthz():
        return {"ok": True}

    @app.websocket("/session")
    async def session_endpoint(ws: WebSocket):
        await ws.accept()
        try:
            hello = protocol.decode(await ws.receive_text())
            if hello["type"] != "hello":
                raise ProtocolError("expected hello frame")
        except ProtocolError as exc:
            await ws.send_text(protocol.encode(protocol.error_frame("bad_handshake", str(exc))))
            await ws.close()
            return
        await ws.send_text(
            protocol.encode(
                protocol.make(
                    "hello_ack",
                    ok=True,
                    scenario_id=str(trial_log.header.get("scenario_hash", ""))[:12],
                    mode=str(trial_log.header.get("mode", "direct")),
                    snapshot_rate=1.0 / ctl_dt,
                )
            )
        )
        seq = 0
        try:
            for rec in trial_log.ticks:
                seq += 1
                await ws.send_text(
                    protocol.encode(protocol.make("snapshot", seq=seq, data={"replay": rec}))
                )
                if speed > 0:
                    await asyncio.sleep(ctl_dt / speed)
            await ws.send_text(protocol.encode(protocol.make("bye", reason="replay complete")))
            await ws.close()
        except WebSocketDisconnect:
            pass

    return app


def serve_replay(trial_log, port: int, speed: float = 1.0) -> None:
    import uvicorn

    uvicorn.run(create_replay_app(trial_log, speed), host="127.0.0.1", port=port,
                log_level="warning")


class ScriptedReplayClient:
    """Drives a recorded command stream through an open websocket.

    Works against any socket exposing send_text/receive_text (the test
    client or a real connection). Each recorded command is re-sent ahead
    of time, stamped half a control tick before its recorded application
    time, so the bridge latches it on exactly the recorded tick.
    """

    def __init__(self, commands: list[dict], ctl_dt: float, lead: float = 0.2):
        self.commands = sorted(commands, key=lambda c: c["applied_t"])
        self.ctl_dt = ctl_dt
        self.lead = lead

    def run(self, send_text, receive_text, mode: str, scenario_id: str = "") -> list[dict]:
        """Handshake, pump commands keyed to snapshot times, return all
        frames received (the caller digs out the final report)."""
        send_text(protocol.encode(protocol.make("hello", mode=mode, scenario_id=scenario_id)))
        frames: list[dict] = []
        pending = list(self.commands)
        while True:
            msg = protocol.decode(receive_text())
            frames.append(msg)
            if msg["type"] == "bye":
                return frames
            if msg["type"] == "error":
                raise ProtocolError(f"server error: {msg['detail']}")
            if msg["type"] != "snapshot":
                continue
            now = msg["data"].get("t")
            if now is None:
                continue
            while pending and pending[0]["applied_t"] <= now + self.lead:
                rec = pending.pop(0)
                send_text(
                    protocol.encode(
                        protocol.command_message(
                            v_cmd=rec["v_cmd"],
                            omega_cmd=rec["omega_cmd"],
                            belt_enable=rec["belt_enable"],
                            strap_trigger=rec["strap_trigger"],
                            stamp=rec["applied_t"] - self.ctl_dt / 2.0,
                        )
                    )
                )
