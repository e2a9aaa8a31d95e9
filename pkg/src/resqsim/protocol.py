"""Teleoperation wire protocol: versioned JSON text frames over WebSocket.

Message families: hello (handshake), snapshot (server state broadcast),
command (operator input), phase_event / safety_event (server notices),
error, bye. Snapshots are visibility-masked per perception mode before
they leave the server: masked fields are absent, never zeroed. Unknown
message types are a protocol error; unknown fields inside a known type are
tolerated for forward compatibility.
"""

from __future__ import annotations

import json
import math
from typing import Any

from .errors import ProtocolError, SchemaVersionError

PROTOCOL_VERSION = 1
SUPPORTED_VERSIONS = (1,)

MODES = ("direct", "conventional", "immersive")

_NUM = (int, float)
# required fields per message type: name -> allowed python types
_FIELDS: dict[str, dict[str, tuple]] = {
    "hello": {"mode": (str,), "scenario_id": (str,)},
    "hello_ack": {"ok": (bool,), "scenario_id": (str,), "mode": (str,), "snapshot_rate": _NUM},
    "snapshot": {"seq": (int,), "data": (dict,)},
    "command": {
        "v_cmd": _NUM,
        "omega_cmd": _NUM,
        "belt_enable": (bool,),
        "strap_trigger": (bool,),
        "stamp": _NUM,
    },
    "phase_event": {"t": _NUM, "phase": (str,)},
    "safety_event": {"t": _NUM, "name": (str,), "value": _NUM, "limit": _NUM},
    "error": {"code": (str,), "detail": (str,)},
    "bye": {"reason": (str,)},
}


def validate_message(msg: Any) -> dict:
    if not isinstance(msg, dict):
        raise ProtocolError("frame is not a JSON object")
    mtype = msg.get("type")
    if mtype not in _FIELDS:
        raise ProtocolError(f"unknown message type {mtype!r}")
    version = msg.get("v")
    if version not in SUPPORTED_VERSIONS:
        raise SchemaVersionError(
            f"unsupported protocol version {version!r}", supported=SUPPORTED_VERSIONS
        )
    for name, types in _FIELDS[mtype].items():
        if name not in msg:
            raise ProtocolError(f"{mtype}: missing field {name!r}")
        value = msg[name]
        if bool in types:
            ok = isinstance(value, bool)
        else:
            ok = isinstance(value, types) and not isinstance(value, bool)
        if not ok:
            raise ProtocolError(f"{mtype}: field {name!r} has wrong type")
    return msg


def encode(msg: dict) -> str:
    validate_message(msg)
    return json.dumps(msg, sort_keys=True, separators=(",", ":"))


def decode(text: str | bytes) -> dict:
    try:
        msg = json.loads(text)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ProtocolError(f"malformed frame: {exc}") from exc
    return validate_message(msg)


def make(mtype: str, **fields) -> dict:
    msg = {"type": mtype, "v": PROTOCOL_VERSION}
    msg.update(fields)
    return validate_message(msg)


def error_frame(code: str, detail: str) -> dict:
    return make("error", code=code, detail=detail)


def command_message(
    v_cmd: float = 0.0,
    omega_cmd: float = 0.0,
    belt_enable: bool = False,
    strap_trigger: bool = False,
    stamp: float = 0.0,
) -> dict:
    return make(
        "command",
        v_cmd=v_cmd,
        omega_cmd=omega_cmd,
        belt_enable=belt_enable,
        strap_trigger=strap_trigger,
        stamp=stamp,
    )


def to_robot_frame(pose: dict, wx: float, wy: float) -> tuple[float, float]:
    """World point into the robot body frame (x forward, y left)."""
    dx, dy = wx - pose["x"], wy - pose["y"]
    c, s = math.cos(pose["theta"]), math.sin(pose["theta"])
    return c * dx + s * dy, -s * dx + c * dy


def apply_visibility(full: dict, mode: str, fov_cfg: dict) -> dict:
    """Mask a full snapshot down to what the given perception mode shows.

    Direct passes the whole world through. Conventional keeps robot-frame
    quantities plus entities inside a narrow cone and range, with world
    poses removed. Immersive widens the cone and attaches a depth per
    visible entity (feeding the cockpit's stereo disparity rendering).
    """
    if mode not in MODES:
        raise ValueError(f"unknown perception mode {mode!r}")
    if mode == "direct":
        out = dict(full)
        out["mode"] = mode
        out["visible"] = ["casualty"] if "casualty" in full else []
        return out

    out = {
        "t": full["t"],
        "phase": full["phase"],
        "contact": full["contact"],
        "mode": mode,
        "robot": dict(full["robot"]),
        "onboard": full["onboard"],
        "safety": dict(full["safety"]),
        "visible": [],
    }
    casualty = full.get("casualty")
    pose = full.get("pose")
    if casualty is None or pose is None:
        return out
    hx, hy = casualty["head"]
    rel_x, rel_y = to_robot_frame(pose, hx, hy)
    bearing = math.atan2(rel_y, rel_x)
    dist = math.hypot(rel_x, rel_y)
    fov_deg = fov_cfg["conventional_deg"] if mode == "conventional" else fov_cfg["immersive_deg"]
    half = math.radians(fov_deg) / 2.0
    if abs(bearing) <= half and dist <= fov_cfg["range_m"]:
        entity: dict = {"rel": [rel_x, rel_y]}
        segs = casualty.get("segments")
        if segs:
            entity["rel_segments"] = [
                list(to_robot_frame(pose, x0, y0)) + list(to_robot_frame(pose, x1, y1))
                for x0, y0, x1, y1 in segs
            ]
        if mode == "immersive":
            entity["depth"] = dist
        out["casualty"] = entity
        out["visible"] = ["casualty"]
    return out
