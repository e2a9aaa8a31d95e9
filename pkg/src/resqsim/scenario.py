"""Scenario configuration: strict JSON schema, defaults, overrides, hashing.

A scenario file fully determines a trial given a seed. Every field is
required and unknown fields are rejected, so a hash of the canonical JSON
identifies the configuration exactly.
"""

from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path
from typing import Any

from .errors import ConfigError

SCHEMA_VERSION = 1

# Expected tree: leaves are the python types a field must carry.
_NUM = (int, float)
_SCHEMA: dict[str, Any] = {
    "schema_version": int,
    "sim": {
        "dt": _NUM,
        "control_rate_hz": int,
        "gravity": _NUM,
        "trial_timeout": _NUM,
    },
    "robot": {
        "start": {"x": _NUM, "y": _NUM, "theta": _NUM},
        "track_width": _NUM,
        "bed_edge_offset": _NUM,
        "bed_angle": _NUM,
        "v_base_max": _NUM,
        "omega_max": _NUM,
        "wheel_speed_max": _NUM,
        "base_tau": _NUM,
        "payload_limit_kg": _NUM,
    },
    "belt": {"ss_gain": _NUM, "tau": _NUM},
    "strap": {"duration": _NUM},
    "encoders": {
        "pulley": {"counts_per_rev": int, "radius": _NUM},
        "floor": {"counts_per_rev": int, "radius": _NUM},
    },
    "casualty": {
        "axis": {"x": _NUM, "y": _NUM, "theta": _NUM},
        "upper_length": _NUM,
        "lower_length": _NUM,
        "m_head": _NUM,
        "m_upper": _NUM,
        "mu_s": _NUM,
        "mu_k": _NUM,
        "body_halfwidth": _NUM,
    },
    "contact": {"impulse_gain": _NUM, "v_stick": _NUM},
    "imu": {
        "rate_hz": int,
        "resolution": _NUM,
        "bias_instability": _NUM,
        "bias_walk_std": _NUM,
        "noise_std": _NUM,
    },
    "sync": {
        "mode": str,
        "kp": _NUM,
        "ki": _NUM,
        "integral_limit": _NUM,
        "fixed_duty": _NUM,
    },
    "control": {
        "lat_tol": _NUM,
        "ang_tol": _NUM,
        "align_speed": _NUM,
        "approach_speed": _NUM,
        "loading_speed": _NUM,
        "steer_kp_ang": _NUM,
        "steer_kp_lat": _NUM,
        "cadence_hz": _NUM,
        "operator_table": {
            "direct": {"reaction_delay": _NUM, "command_noise_std": _NUM},
            "conventional": {"reaction_delay": _NUM, "command_noise_std": _NUM},
            "immersive": {"reaction_delay": _NUM, "command_noise_std": _NUM},
        },
    },
    "safety": {
        "window": _NUM,
        "f_static": _NUM,
        "thresholds": {
            "acceleration": {"limit": _NUM, "source": str},
            "velocity": {"limit": _NUM, "source": str},
            "displacement": {"limit": _NUM, "source": str},
            "force": {"limit": _NUM, "source": str},
        },
    },
    "teleop": {
        "snapshot_rate_hz": _NUM,
        "command_latency": _NUM,
        "fov": {"conventional_deg": _NUM, "immersive_deg": _NUM, "range_m": _NUM},
    },
}

_SYNC_MODES = ("pi", "fixed", "exact")


def default_scenario() -> dict:
    """Fully-populated default scenario (smooth operation, sync controller on)."""
    return {
        "schema_version": SCHEMA_VERSION,
        "sim": {"dt": 0.001, "control_rate_hz": 100, "gravity": 9.8, "trial_timeout": 60.0},
        "robot": {
            "start": {"x": -0.55, "y": 0.03, "theta": 0.035},
            "track_width": 0.6,
            "bed_edge_offset": 0.45,
            "bed_angle": 0.12,
            "v_base_max": 0.5,
            "omega_max": 1.0,
            "wheel_speed_max": 0.6,
            "base_tau": 0.1,
            "payload_limit_kg": 100.0,
        },
        "belt": {"ss_gain": 0.5, "tau": 0.2},
        "strap": {"duration": 2.0},
        "encoders": {
            "pulley": {"counts_per_rev": 1024, "radius": 0.05},
            "floor": {"counts_per_rev": 1024, "radius": 0.05},
        },
        "casualty": {
            "axis": {"x": 0.0, "y": 0.0, "theta": 0.0},
            "upper_length": 0.7,
            "lower_length": 0.9,
            "m_head": 4.5,
            "m_upper": 40.0,
            "mu_s": 0.52,
            "mu_k": 0.45,
            "body_halfwidth": 0.25,
        },
        "contact": {"impulse_gain": 0.15, "v_stick": 1e-4},
        "imu": {
            "rate_hz": 100,
            "resolution": 9.80665e-4,
            "bias_instability": 3.92266e-4,
            "bias_walk_std": 4e-6,
            "noise_std": 0.002,
        },
        "sync": {"mode": "pi", "kp": 4.0, "ki": 25.0, "integral_limit": 1.5, "fixed_duty": 0.0},
        "control": {
            "lat_tol": 0.02,
            "ang_tol": 0.0349,
            "align_speed": 0.03,
            "approach_speed": 0.05,
            "loading_speed": 0.05,
            "steer_kp_ang": 2.5,
            "steer_kp_lat": 12.0,
            "cadence_hz": 10.0,
            "operator_table": {
                "direct": {"reaction_delay": 0.10, "command_noise_std": 0.005},
                "conventional": {"reaction_delay": 0.30, "command_noise_std": 0.020},
                "immersive": {"reaction_delay": 0.15, "command_noise_std": 0.010},
            },
        },
        "safety": {
            "window": 2.0,
            "f_static": 22.94,
            "thresholds": {
                "acceleration": {"limit": 10.0, "source": "placeholder"},
                "velocity": {"limit": 0.5, "source": "placeholder"},
                "displacement": {"limit": 0.1, "source": "placeholder"},
                "force": {"limit": 100.0, "source": "placeholder"},
            },
        },
        "teleop": {
            "snapshot_rate_hz": 30.0,
            "command_latency": 0.0,
            "fov": {"conventional_deg": 60.0, "immersive_deg": 110.0, "range_m": 6.0},
        },
    }


def rough_scenario() -> dict:
    """Sync controller disabled, belt at a fixed duty, faster loading drive.

    The fixed duty grossly overruns the approach speed, so the belt surface
    is already moving when the bed edge meets the head and the head is
    yanked through a kinetic-slip episode before settling.
    """
    cfg = default_scenario()
    cfg["sync"]["mode"] = "fixed"
    cfg["sync"]["fixed_duty"] = -0.45
    cfg["control"]["loading_speed"] = 0.21
    return cfg


def _walk(expected, actual, path: str, problems: list[str]) -> None:
    if isinstance(expected, dict):
        if not isinstance(actual, dict):
            problems.append(f"{path or '<root>'}: expected an object")
            return
        for key in expected:
            if key not in actual:
                problems.append(f"{path}{key}: missing required field")
        for key in actual:
            where = f"{path}{key}"
            if key not in expected:
                problems.append(f"{where}: unknown field")
            else:
                _walk(expected[key], actual[key], where + ".", problems)
    else:
        if isinstance(actual, bool) or not isinstance(actual, expected):
            problems.append(f"{path[:-1]}: wrong type {type(actual).__name__}")


def validate(cfg: dict) -> dict:
    """Check the full schema plus the handful of semantic constraints."""
    problems: list[str] = []
    _walk(_SCHEMA, cfg, "", problems)
    if problems:
        raise ConfigError("invalid scenario: " + "; ".join(problems[:8]))
    if cfg["schema_version"] != SCHEMA_VERSION:
        raise ConfigError(f"unsupported scenario schema_version {cfg['schema_version']}")
    if cfg["sync"]["mode"] not in _SYNC_MODES:
        raise ConfigError(f"sync.mode must be one of {_SYNC_MODES}")
    c = cfg["casualty"]
    if not (0 < c["mu_k"] <= c["mu_s"]):
        raise ConfigError("require 0 < mu_k <= mu_s")
    if cfg["sim"]["dt"] <= 0 or cfg["sim"]["control_rate_hz"] <= 0:
        raise ConfigError("sim.dt and sim.control_rate_hz must be positive")
    n_sub = 1.0 / (cfg["sim"]["dt"] * cfg["sim"]["control_rate_hz"])
    if abs(n_sub - round(n_sub)) > 1e-9 or round(n_sub) < 1:
        raise ConfigError("control period must be an integer multiple of sim.dt")
    if cfg["sim"]["control_rate_hz"] % cfg["imu"]["rate_hz"] != 0:
        raise ConfigError("control_rate_hz must be a multiple of imu.rate_hz")
    for name, entry in cfg["control"]["operator_table"].items():
        if entry["command_noise_std"] < 0:
            raise ConfigError(f"operator_table.{name}: noise std must be >= 0")
    for name, t in cfg["safety"]["thresholds"].items():
        if t["limit"] <= 0:
            raise ConfigError(f"safety.thresholds.{name}: limit must be > 0")
        if not t["source"]:
            raise ConfigError(f"safety.thresholds.{name}: source tag is mandatory")
    return cfg


def apply_overrides(cfg: dict, overrides: dict[str, Any]) -> dict:
    """Apply dotted-key overrides ('sync.kp' -> 5.0) to a copy of cfg."""
    out = copy.deepcopy(cfg)
    for dotted, value in overrides.items():
        node = out
        parts = dotted.split(".")
        for part in parts[:-1]:
            if not isinstance(node, dict) or part not in node:
                raise ConfigError(f"override {dotted}: no such field")
            node = node[part]
        if not isinstance(node, dict) or parts[-1] not in node:
            raise ConfigError(f"override {dotted}: no such field")
        node[parts[-1]] = value
    return out


def canonical_json(cfg: dict) -> str:
    return json.dumps(cfg, sort_keys=True, separators=(",", ":"))


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(canonical_json(cfg).encode()).hexdigest()


def load_scenario(path: str | Path, overrides: dict[str, Any] | None = None) -> dict:
    try:
        raw = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read scenario {path}: {exc}") from exc
    try:
        cfg = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"scenario {path} is not valid JSON: {exc}") from exc
    if overrides:
        cfg = apply_overrides(cfg, overrides)
    return validate(cfg)


def save_scenario(cfg: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n")


def pose_variants() -> dict[str, dict]:
    """Five synthetic casualty placements inside the workable approach zone.

    Start poses are derived from the casualty axis: the robot sits behind
    the head with a clear standoff, a small lateral offset, and a small
    heading mismatch, so pose adjustment has room to finish before the bed
    edge arrives.
    """
    import math

    placements = {
        "pose_1": {"axis": (0.0, 0.0, 0.0), "gap": 0.10, "lat": 0.03, "dtheta": 0.035},
        "pose_2": {"axis": (0.2, 0.3, 0.3), "gap": 0.40, "lat": 0.05, "dtheta": 0.08},
        "pose_3": {"axis": (0.0, -0.2, -0.25), "gap": 0.35, "lat": -0.04, "dtheta": -0.06},
        "pose_4": {"axis": (0.4, 0.1, 0.1), "gap": 0.45, "lat": 0.06, "dtheta": -0.05},
        "pose_5": {"axis": (-0.1, 0.4, 0.5), "gap": 0.40, "lat": -0.05, "dtheta": 0.07},
    }
    out = {}
    for name, p in placements.items():
        cfg = default_scenario()
        ax, ay, ath = p["axis"]
        standoff = cfg["robot"]["bed_edge_offset"] + p["gap"]
        c, s = math.cos(ath), math.sin(ath)
        sx = ax - standoff * c - p["lat"] * s
        sy = ay - standoff * s + p["lat"] * c
        cfg["casualty"]["axis"] = {"x": ax, "y": ay, "theta": ath}
        cfg["robot"]["start"] = {"x": sx, "y": sy, "theta": ath + p["dtheta"]}
        out[name] = cfg
    return out
