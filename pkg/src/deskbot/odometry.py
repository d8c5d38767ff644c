"""Wheel-encoder dead reckoning.

Encoder tick deltas are converted to wheel speeds and the global pose is
accumulated by explicit Euler integration of the discrete forward-kinematics
sum: the heading used in the trigonometric terms is the pre-update heading of
each step. Error therefore accumulates over time; correct() resets the pose
from an external reference.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable

from .kinematics import ChassisGeometry, Pose2D, WheelSpeeds


@dataclass(frozen=True)
class EncoderSample:
    """Tick deltas for both wheels over an interval dt (seconds, > 0)."""

    delta_ticks_left: int
    delta_ticks_right: int
    dt: float


@dataclass(frozen=True)
class EncoderConfig:
    ticks_per_rev: int = 1024
    wheel_radius: float = 0.034

    def __post_init__(self):
        if self.ticks_per_rev <= 0 or self.wheel_radius <= 0:
            raise ValueError("encoder config must be strictly positive")


@dataclass(frozen=True)
class OdometryState:
    """Dead-reckoned pose plus the fixed sampling interval of the run."""

    pose: Pose2D = Pose2D()
    sample_time: float = 0.02


def ticks_to_wheel_speed(sample: EncoderSample, cfg: EncoderConfig) -> WheelSpeeds:
    """Convert tick deltas to rim speeds: ticks/rev -> revolutions -> arc length / dt."""
    if sample.dt <= 0:
        raise ValueError(f"encoder sample dt must be positive, got {sample.dt}")
    circumference = 2.0 * math.pi * cfg.wheel_radius
    scale = circumference / (cfg.ticks_per_rev * sample.dt)
    return WheelSpeeds(
        left=sample.delta_ticks_left * scale,
        right=sample.delta_ticks_right * scale,
    )


def step(pose: Pose2D, wheels: WheelSpeeds, geom: ChassisGeometry, dt: float) -> Pose2D:
    """Advance the pose by one explicit-Euler step.

    x += cos(theta) * (V_R+V_L)/2 * dt
    y += sin(theta) * (V_R+V_L)/2 * dt
    theta += (V_R-V_L)/d * dt

    using the pre-update theta in the cos/sin terms. theta is not normalized.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    v = (wheels.right + wheels.left) / 2.0
    w = (wheels.right - wheels.left) / geom.track_width
    return Pose2D(
        x=pose.x + math.cos(pose.theta) * v * dt,
        y=pose.y + math.sin(pose.theta) * v * dt,
        theta=pose.theta + w * dt,
    )


def integrate(
    initial: Pose2D,
    samples: Iterable[tuple[WheelSpeeds, float]],
    geom: ChassisGeometry,
) -> Pose2D:
    """Left fold of step() over (wheel speeds, dt) samples."""
    pose = initial
    for wheels, dt in samples:
        pose = step(pose, wheels, geom, dt)
    return pose


def correct(state: OdometryState, reference_pose: Pose2D) -> OdometryState:
    """Reset the dead-reckoned pose from an external reference, discarding
    accumulated error."""
    return replace(state, pose=reference_pose)
