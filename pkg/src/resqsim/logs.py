"""Trial log persistence: JSONL tick stream plus an IMU CSV sidecar.

One JSONL record per control tick (time, phase, command, robot state,
true head kinematics), with event records interleaved in time order and a
header first line. Floats are serialized with full shortest-roundtrip
precision and sorted keys, so identical trials produce byte-identical
files. The IMU sidecar is a two-column CSV, `t,a`, in sample order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import ReplayError
from .world import ContactEvent

LOG_SCHEMA_VERSION = 1
IMU_CSV_HEADER = "t,a"


def dumps_record(rec: dict) -> str:
    return json.dumps(rec, sort_keys=True, separators=(",", ":"))


class TrialLogWriter:
    """Streams tick/event records to disk as a trial runs."""

    def __init__(self, log_path: str | Path, imu_path: str | Path, header: dict):
        self.log_path = Path(log_path)
        self.imu_path = Path(imu_path)
        self._log = self.log_path.open("w")
        self._imu = self.imu_path.open("w")
        self._imu.write(IMU_CSV_HEADER + "\n")
        head = {"record": "header", "schema_version": LOG_SCHEMA_VERSION}
        head.update(header)
        self._log.write(dumps_record(head) + "\n")

    def tick(self, rec: dict) -> None:
        rec = {"record": "tick", **rec}
        self._log.write(dumps_record(rec) + "\n")

    def event(self, rec: dict) -> None:
        rec = {"record": "event", **rec}
        self._log.write(dumps_record(rec) + "\n")

    def imu(self, t: float, a: float) -> None:
        self._imu.write(f"{t!r},{a!r}\n")

    def close(self) -> None:
        self._log.close()
        self._imu.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


@dataclass
class TrialLog:
    """In-memory view of a recorded trial."""

    header: dict
    ticks: list[dict] = field(default_factory=list)
    events: list[dict] = field(default_factory=list)
    imu_t: np.ndarray = field(default_factory=lambda: np.zeros(0))
    imu_a: np.ndarray = field(default_factory=lambda: np.zeros(0))
    truncated: bool = False

    @property
    def contact(self) -> ContactEvent | None:
        for ev in self.events:
            if ev.get("kind") == "contact":
                return ContactEvent(ev["t_contact"], ev["relative_speed"])
        return None

    @property
    def final_tick(self) -> dict | None:
        return self.ticks[-1] if self.ticks else None


def load_trial_log(log_path: str | Path, imu_path: str | Path | None = None) -> TrialLog:
    """Parse a trial log; an incomplete trailing line marks truncation."""
    log_path = Path(log_path)
    header: dict | None = None
    ticks: list[dict] = []
    events: list[dict] = []
    truncated = False
    with log_path.open() as fh:
        for line in fh:
            if not line.endswith("\n"):
                truncated = True
                break
            try:
                rec = json.loads(line)
            except json.JSONDecodeError:
                truncated = True
                break
            kind = rec.get("record")
            if kind == "header":
                if rec.get("schema_version") != LOG_SCHEMA_VERSION:
                    raise ReplayError(
                        f"unsupported log schema_version {rec.get('schema_version')}"
                    )
                header = rec
            elif kind == "tick":
                ticks.append(rec)
            elif kind == "event":
                events.append(rec)
            else:
                raise ReplayError(f"unknown record kind {kind!r}")
    if header is None:
        raise ReplayError(f"{log_path}: missing header record")

    if imu_path is None:
        imu_path = _sidecar_path(log_path)
    imu_t: list[float] = []
    imu_a: list[float] = []
    imu_path = Path(imu_path)
    if imu_path.exists():
        with imu_path.open() as fh:
            first = fh.readline().strip()
            if first != IMU_CSV_HEADER:
                raise ReplayError(f"{imu_path}: unexpected CSV header {first!r}")
            for line in fh:
                if not line.endswith("\n"):
                    truncated = True
                    break
                t_str, a_str = line.rstrip("\n").split(",")
                imu_t.append(float(t_str))
                imu_a.append(float(a_str))
    return TrialLog(
        header=header,
        ticks=ticks,
        events=events,
        imu_t=np.asarray(imu_t),
        imu_a=np.asarray(imu_a),
        truncated=truncated,
    )


def _sidecar_path(log_path: Path) -> Path:
    name = log_path.name
    if name.endswith(".jsonl"):
        name = name[: -len(".jsonl")]
    return log_path.with_name(name + ".imu.csv")


def replay_states(log: TrialLog) -> Iterator[dict]:
    """Re-emit the recorded tick stream without re-simulation.

    Pacing (wall-clock speed factors) is the caller's concern; the content
    of the stream never depends on it.
    """
    for rec in log.ticks:
        yield rec
