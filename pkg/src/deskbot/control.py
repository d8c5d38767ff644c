"""Wheel speed controllers: discrete PID and segmented (lookup) control.

Both controllers emit integer PWM commands in [-255, 255]. The PID runs at a
fixed sampling period with output saturation and conditional anti-windup (the
integral is frozen on any tick whose unsaturated output exceeds the limits).
Segmented control interpolates a calibrated PWM-to-steady-speed table, built
by sweeping each wheel through the PWM range while the other wheel is held at
zero.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

PWM_LIMIT = 255


class ControlError(Exception):
    pass


class InvalidTableError(ControlError):
    """Calibration table is empty or not monotone."""


class CalibrationError(ControlError):
    """The plant rejected commands mid-sweep."""


def _round_away(x: float) -> int:
    """Round to nearest integer, halves away from zero (sign-symmetric)."""
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


def clamp_pwm(value: float) -> int:
    return max(-PWM_LIMIT, min(PWM_LIMIT, _round_away(value)))


@dataclass(frozen=True)
class PwmPair:
    """Signed 8-bit motor commands for both wheels."""

    left: int = 0
    right: int = 0

    def __post_init__(self):
        for v in (self.left, self.right):
            if not -PWM_LIMIT <= v <= PWM_LIMIT:
                raise ValueError(f"pwm out of range [-255, 255]: {v}")


@dataclass(frozen=True)
class PidGains:
    """PID gains in PWM counts per (m/s), per (m/s*s) and per (m/s / s).

    Defaults are tuned for the reference motor model (tau 0.15 s, 0.7 m/s at
    full PWM) to give a sub-second rise and under 10% overshoot on a speed
    step at the 0.1 s sampling period.
    """

    kp: float = 250.0
    ki: float = 2000.0
    kd: float = 5.0
    sample_time: float = 0.1

    def __post_init__(self):
        if self.sample_time <= 0:
            raise ValueError("sample_time must be positive")
        if self.kp < 0 or self.ki < 0 or self.kd < 0:
            raise ValueError("gains must be non-negative")


@dataclass(frozen=True)
class PidState:
    integral: float = 0.0
    prev_error: float = 0.0
    saturated: bool = False


def pid_step(
    state: PidState, gains: PidGains, target: float, measured: float
) -> tuple[int, PidState]:
    """One controller update at the fixed sampling period.

    raw = kp*e + ki*I + kd*(e - e_prev)/Ts with I including the current
    error sample; the output is clamped to [-255, 255] and rounded. If the
    raw output saturates, the integral keeps its previous value (conditional
    anti-windup) and the saturated flag is set.
    """
    if not (math.isfinite(target) and math.isfinite(measured)):
        raise ValueError("pid inputs must be finite")
    error = target - measured
    integral = state.integral + error * gains.sample_time
    raw = (
        gains.kp * error
        + gains.ki * integral
        + gains.kd * (error - state.prev_error) / gains.sample_time
    )
    saturated = abs(raw) > PWM_LIMIT
    if saturated:
        integral = state.integral
    pwm = clamp_pwm(raw)
    return pwm, PidState(integral=integral, prev_error=error, saturated=saturated)


@dataclass(frozen=True)
class SpeedTable:
    """Monotone PWM -> steady-state speed map for one wheel.

    points are (pwm, speed) pairs with strictly increasing pwm and
    non-decreasing speed; (0, 0) must be present.
    """

    points: tuple[tuple[int, float], ...]

    def __post_init__(self):
        if not self.points:
            raise InvalidTableError("empty table")
        pwms = [p for p, _ in self.points]
        speeds = [s for _, s in self.points]
        if any(b <= a for a, b in zip(pwms, pwms[1:])):
            raise InvalidTableError("pwm values must be strictly increasing")
        if any(b < a for a, b in zip(speeds, speeds[1:])):
            raise InvalidTableError("speeds must be non-decreasing in pwm")
        if (0, 0.0) not in self.points:
            raise InvalidTableError("table must contain the (0, 0) anchor")


def monotonize(points: list[tuple[int, float]]) -> tuple[tuple[int, float], ...]:
    """Isotonic pass over raw sweep data: sort by pwm, then force speeds
    non-decreasing (cumulative max above zero pwm, cumulative min below)."""
    pts = sorted(points)
    out: list[tuple[int, float]] = []
    for pwm, speed in pts:
        if pwm >= 0 and out and out[-1][0] >= 0:
            speed = max(speed, out[-1][1])
        out.append((pwm, speed))
    # negative side: walk down from zero so speeds stay non-decreasing in pwm
    neg = [i for i, (p, _) in enumerate(out) if p < 0]
    for j in range(len(neg) - 1, -1, -1):
        i = neg[j]
        ceiling = out[i + 1][1] if i + 1 < len(out) else 0.0
        out[i] = (out[i][0], min(out[i][1], ceiling))
    return tuple(out)


def segmented_lookup(table: SpeedTable, target: float) -> int:
    """PWM for a target speed by linear interpolation of the table.

    Exact table speeds return that entry's pwm (the lowest-pwm entry on
    ties, so a zero target maps to pwm 0). Targets inside the deadband
    interpolate against the last zero-speed entry; targets beyond the table
    clamp to +-255. Odd-symmetric for mirrored tables.
    """
    pts = table.points
    if target < 0:
        mirrored = SpeedTable(tuple((-p, -s) for p, s in reversed(pts)))
        return -segmented_lookup(mirrored, -target)
    if target > pts[-1][1]:
        return PWM_LIMIT
    # first entry reaching the target
    for i, (pwm, speed) in enumerate(pts):
        if speed >= target:
            if speed == target:
                return pwm
            prev_pwm, prev_speed = pts[i - 1]
            frac = (target - prev_speed) / (speed - prev_speed)
            return clamp_pwm(prev_pwm + frac * (pwm - prev_pwm))
    return PWM_LIMIT


@dataclass(frozen=True)
class CalibrationTable:
    """Per-wheel speed tables produced by a calibration sweep."""

    left: SpeedTable
    right: SpeedTable

    def lookup(self, target_left: float, target_right: float) -> PwmPair:
        return PwmPair(
            left=segmented_lookup(self.left, target_left),
            right=segmented_lookup(self.right, target_right),
        )


@dataclass
class _WindowMeasure:
    """Accumulates encoder ticks over the measurement window."""

    ticks: int = 0
    time: float = 0.0


def calibrate(
    plant,
    step: int = 15,
    settle_time: float = 1.0,
    window: float = 0.5,
    signed_sweep: bool = False,
) -> CalibrationTable:
    """Sweep PWM levels on each wheel in turn and record steady-state speeds.

    For every level the swept wheel is driven at that PWM with the other
    wheel at zero; after settle_time the mean speed over the measurement
    window is recorded from the encoders. The resulting tables are
    monotonized and the negative side is mirrored from the positive sweep
    unless signed_sweep is set (then negative levels are measured too).

    The plant handle must expose dt, encoder_config and
    drive(pwm_left, pwm_right) -> EncoderSample.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    levels = list(range(0, PWM_LIMIT + 1, step))
    if levels[-1] != PWM_LIMIT:
        levels.append(PWM_LIMIT)
    if signed_sweep:
        levels = [-v for v in levels[1:]][::-1] + levels

    cfg = plant.encoder_config
    dt = plant.dt
    meters_per_tick = 2.0 * math.pi * cfg.wheel_radius / cfg.ticks_per_rev
    settle_ticks = max(1, round(settle_time / dt))
    window_ticks = max(1, round(window / dt))

    tables = []
    for wheel in ("left", "right"):
        points: list[tuple[int, float]] = []
        for level in levels:
            if level == 0:
                # pin the anchor; still settle so the wheel is at rest
                # before the next level
                level_cmd = (0, 0)
                measure = False
            else:
                level_cmd = (level, 0) if wheel == "left" else (0, level)
                measure = True
            try:
                for _ in range(settle_ticks):
                    plant.drive(*level_cmd)
                if measure:
                    acc = _WindowMeasure()
                    for _ in range(window_ticks):
                        sample = plant.drive(*level_cmd)
                        acc.ticks += (
                            sample.delta_ticks_left
                            if wheel == "left"
                            else sample.delta_ticks_right
                        )
                        acc.time += sample.dt
                    points.append((level, acc.ticks * meters_per_tick / acc.time))
            except (ValueError, RuntimeError) as exc:
                raise CalibrationError(
                    f"plant rejected pwm {level} on {wheel} wheel: {exc}"
                ) from exc
        points.append((0, 0.0))
        if not signed_sweep:
            points.extend((-p, -s) for p, s in points if p > 0)
        tables.append(SpeedTable(monotonize(points)))
    return CalibrationTable(left=tables[0], right=tables[1])


def write_table_csv(table: CalibrationTable, path) -> None:
    """Write `wheel,pwm,speed_mps` rows sorted by wheel then pwm."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["wheel", "pwm", "speed_mps"])
        for wheel, side in (("left", table.left), ("right", table.right)):
            for pwm, speed in side.points:
                writer.writerow([wheel, pwm, repr(speed)])


def read_table_csv(path) -> CalibrationTable:
    sides: dict[str, list[tuple[int, float]]] = {"left": [], "right": []}
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != ["wheel", "pwm", "speed_mps"]:
            raise InvalidTableError(f"bad calibration header in {path}")
        for row in reader:
            wheel = row["wheel"]
            if wheel not in sides:
                raise InvalidTableError(f"unknown wheel {wheel!r} in {path}")
            sides[wheel].append((int(row["pwm"]), float(row["speed_mps"])))
    return CalibrationTable(
        left=SpeedTable(tuple(sorted(sides["left"]))),
        right=SpeedTable(tuple(sorted(sides["right"]))),
    )
