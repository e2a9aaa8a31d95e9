"""Head-mounted IMU model, safety metric extraction, and cross-trial stats.

The IMU reports the mean head acceleration over each sample window (its
internal decimation from a much faster front end), corrupted by a bounded
random-walk bias and white noise, then quantized to its resolution.
Velocity comes from accumulating that signal window by window, re-zeroed
at contact to curb drift (exact inverse of the window-mean decimation);
displacement is its trapezoidal integral. The impact force estimate is
linear in the peak acceleration with the ground breakaway friction as
offset: f = m_head * a_max + f_static.

The default m_head / f_static pair is fitted from two reference trial
measurements (REFERENCE_TRIALS below) by solving the 2x2 linear system
the force model implies; see README "Calibration defaults".
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import MissingGroupError, NoContactError

# (peak acceleration m/s^2, estimated peak force N) for the two reference
# trials used to calibrate the force model defaults.
REFERENCE_TRIALS = {
    "smooth": {"a_max": 0.154, "f_max": 23.63, "v_max": 0.015, "displacement": 0.004},
    "rough": {"a_max": 4.042, "f_max": 41.12, "v_max": 0.16, "displacement": 0.051},
}

DEFAULT_M_HEAD = 4.50       # kg, fitted (see derive_head_params)
DEFAULT_F_STATIC = 22.94    # N, fitted (see derive_head_params)

MILLI_G = 9.80665e-3        # m/s^2 per milli-g


@dataclass
class ImuModel:
    """100 Hz accelerometer on the casualty's head (longitudinal axis)."""

    sample_rate: float = 100.0
    resolution: float = 0.1 * MILLI_G
    bias_instability: float = 0.04 * MILLI_G
    bias_walk_std: float = 4e-6
    noise_std: float = 2e-3
    bias: float = field(default=0.0)

    def sample(self, true_acc: float, t: float, rng: np.random.Generator) -> "ImuSample":
        """Measure at time t, which must lie on the sample grid."""
        k = t * self.sample_rate
        if abs(k - round(k)) > 1e-6:
            raise ValueError(f"sample time {t} is off the {self.sample_rate} Hz grid")
        if self.bias_walk_std > 0.0:
            self.bias += self.bias_walk_std * rng.standard_normal()
            limit = self.bias_instability
            self.bias = min(max(self.bias, -limit), limit)
        a = true_acc + self.bias
        if self.noise_std > 0.0:
            a += self.noise_std * rng.standard_normal()
        if self.resolution > 0.0:
            # round-half-to-even on the quantization grid
            a = float(np.rint(a / self.resolution)) * self.resolution
        return ImuSample(t=t, a=a)


@dataclass(frozen=True)
class ImuSample:
    t: float
    a: float


@dataclass(frozen=True)
class Verdict:
    name: str
    limit: float
    value: float
    passed: bool


@dataclass(frozen=True)
class SafetyReport:
    a_max: float
    v_max_contact: float
    head_displacement: float
    f_max: float
    t_contact: float
    verdicts: tuple[Verdict, ...] = ()
    warnings: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "a_max": self.a_max,
            "v_max_contact": self.v_max_contact,
            "head_displacement": self.head_displacement,
            "f_max": self.f_max,
            "t_contact": self.t_contact,
            "verdicts": [
                {"name": v.name, "limit": v.limit, "value": v.value, "passed": v.passed}
                for v in self.verdicts
            ],
            "warnings": list(self.warnings),
        }

    @staticmethod
    def from_dict(d: dict) -> "SafetyReport":
        return SafetyReport(
            a_max=d["a_max"],
            v_max_contact=d["v_max_contact"],
            head_displacement=d["head_displacement"],
            f_max=d["f_max"],
            t_contact=d["t_contact"],
            verdicts=tuple(
                Verdict(v["name"], v["limit"], v["value"], v["passed"]) for v in d["verdicts"]
            ),
            warnings=tuple(d.get("warnings", ())),
        )


@dataclass(frozen=True)
class ThresholdTable:
    """Named injury limits with a mandatory provenance tag per entry.

    The shipped placeholders sit above both reference trials; real
    literature values are expected from the user's configuration.
    """

    limits: tuple[tuple[str, float, str], ...]  # (name, limit, source)

    def __post_init__(self):
        for name, limit, source in self.limits:
            if limit <= 0:
                raise ValueError(f"threshold {name}: limit must be > 0")
            if not source:
                raise ValueError(f"threshold {name}: source tag is mandatory")

    @staticmethod
    def from_config(thresholds: dict) -> "ThresholdTable":
        return ThresholdTable(
            limits=tuple((name, t["limit"], t["source"]) for name, t in sorted(thresholds.items()))
        )

    def judge(self, values: dict[str, float]) -> tuple[Verdict, ...]:
        out = []
        for name, limit, _source in self.limits:
            if name in values:
                value = values[name]
                out.append(Verdict(name=name, limit=limit, value=value, passed=value <= limit))
        return tuple(out)


def estimate_force(a_max: float, m_head: float, f_static: float) -> float:
    """Peak force on the head from its peak acceleration magnitude."""
    if m_head <= 0.0:
        raise ValueError("m_head must be > 0")
    if f_static < 0.0 or a_max < 0.0:
        raise ValueError("a_max and f_static must be >= 0")
    return m_head * a_max + f_static


def derive_head_params(
    trial_a: tuple[float, float], trial_f: tuple[float, float]
) -> tuple[float, float]:
    """Solve f = m*a + f_static exactly from two (a, f) measurements."""
    (a1, a2), (f1, f2) = trial_a, trial_f
    if a1 == a2:
        raise ValueError("need two distinct accelerations to fit the force model")
    m = (f2 - f1) / (a2 - a1)
    return m, f1 - m * a1


def extract_metrics(
    log,
    window: float = 2.0,
    m_head: float = DEFAULT_M_HEAD,
    f_static: float = DEFAULT_F_STATIC,
    thresholds: ThresholdTable | None = None,
) -> SafetyReport:
    """Safety metrics over the post-contact window of a trial log.

    Peak |acceleration| is read directly from the IMU trace. Velocity is
    re-zeroed at the last sample at or before contact and accumulated per
    sample window (each sample reports the mean acceleration over its
    window, so this telescopes back to the true velocity; trapezoidal
    weighting would half-count impulsive first samples). Displacement is
    the trapezoidal integral of that velocity. A log shorter than the
    window yields best-effort metrics plus a warning.
    """
    if log.contact is None:
        raise NoContactError("trial log carries no contact event")
    t = np.asarray(log.imu_t, dtype=np.float64)
    a = np.asarray(log.imu_a, dtype=np.float64)
    t0 = log.contact.t_contact
    warnings: list[str] = []
    mask = (t >= t0) & (t <= t0 + window)
    if t.size == 0 or not mask.any():
        raise NoContactError("no samples at or after the contact event")
    if t[-1] < t0 + window:
        warnings.append(
            f"window truncated: log ends {t0 + window - t[-1]:.3f}s early; metrics are best-effort"
        )
    a_max = float(np.max(np.abs(a[mask])))
    first = int(np.argmax(mask))
    anchor = first - 1 if first > 0 else first
    span = slice(anchor, int(np.nonzero(mask)[0][-1]) + 1)
    ts, as_ = t[span], a[span]
    v = np.zeros_like(as_)
    if as_.size > 1:
        v[1:] = np.cumsum(as_[1:] * np.diff(ts))
    v_max = float(np.max(np.abs(v))) if v.size else 0.0
    x = _cumtrapz(v, ts)
    displacement = float(np.max(np.abs(x))) if x.size else 0.0
    f_max = estimate_force(a_max, m_head, f_static)
    values = {
        "acceleration": a_max,
        "velocity": v_max,
        "displacement": displacement,
        "force": f_max,
    }
    verdicts = thresholds.judge(values) if thresholds is not None else ()
    return SafetyReport(
        a_max=a_max,
        v_max_contact=v_max,
        head_displacement=displacement,
        f_max=f_max,
        t_contact=t0,
        verdicts=verdicts,
        warnings=tuple(warnings),
    )


def _cumtrapz(y: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Cumulative trapezoidal integral starting at zero."""
    out = np.zeros_like(y)
    if y.size > 1:
        out[1:] = np.cumsum((y[1:] + y[:-1]) * 0.5 * np.diff(t))
    return out


@dataclass(frozen=True)
class DistributionStats:
    n: int
    minimum: float
    q1: float
    median: float
    q3: float
    maximum: float
    whisker_lo: float
    whisker_hi: float
    outliers: tuple[float, ...]

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "min": self.minimum,
            "q1": self.q1,
            "median": self.median,
            "q3": self.q3,
            "max": self.maximum,
            "whisker_lo": self.whisker_lo,
            "whisker_hi": self.whisker_hi,
            "outliers": list(self.outliers),
        }


def five_number_summary(values) -> DistributionStats:
    """Box-plot summary: Weibull-type linear-interpolation quartiles and
    1.5*IQR whiskers clipped to observed points."""
    x = np.asarray(sorted(values), dtype=np.float64)
    if x.size == 0:
        raise MissingGroupError("cannot summarize an empty group")
    q1, med, q3 = (float(v) for v in np.percentile(x, [25.0, 50.0, 75.0], method="weibull"))
    iqr = q3 - q1
    lo_fence, hi_fence = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = x[(x >= lo_fence) & (x <= hi_fence)]
    whisker_lo = float(inside[0]) if inside.size else q1
    whisker_hi = float(inside[-1]) if inside.size else q3
    outliers = tuple(float(v) for v in x[(x < lo_fence) | (x > hi_fence)])
    return DistributionStats(
        n=int(x.size),
        minimum=float(x[0]),
        q1=q1,
        median=med,
        q3=q3,
        maximum=float(x[-1]),
        whisker_lo=whisker_lo,
        whisker_hi=whisker_hi,
        outliers=outliers,
    )


def aggregate_reports(
    reports: list[tuple[str, SafetyReport]]
) -> dict[str, DistributionStats]:
    """Per-mode distribution of peak estimated force.

    Groups with fewer than five reports still aggregate (degenerate
    summaries are meaningful for single trials) but are flagged upstream.
    """
    groups: dict[str, list[float]] = {}
    for mode, report in reports:
        groups.setdefault(mode, []).append(report.f_max)
    if not groups:
        raise MissingGroupError("no reports to aggregate")
    return {mode: five_number_summary(vals) for mode, vals in sorted(groups.items())}


def placeholder_thresholds() -> ThresholdTable:
    return ThresholdTable(
        limits=(
            ("acceleration", 10.0, "placeholder"),
            ("displacement", 0.1, "placeholder"),
            ("force", 100.0, "placeholder"),
            ("velocity", 0.5, "placeholder"),
        )
    )


def windowed_acceleration(v_now: float, v_prev: float, dt_sample: float) -> float:
    """Mean acceleration over one IMU window from bracketing velocities."""
    return (v_now - v_prev) / dt_sample


def imu_true_signal(head_vel: np.ndarray, dt_sample: float) -> np.ndarray:
    """Window-mean acceleration sequence from a head-velocity trace."""
    v = np.asarray(head_vel, dtype=np.float64)
    out = np.zeros_like(v)
    out[1:] = np.diff(v) / dt_sample
    return out
