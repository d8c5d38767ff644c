"""Differential-drive geometry: frames, speed synthesis/decomposition, ICC.

All angles are radians, lengths meters, speeds m/s. Everything here is a pure
function of its arguments and safe to call from anywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Pose2D:
    """Planar pose (x, y, heading) in the global frame.

    theta accumulates unbounded during integration; use normalize_angle()
    when a wrapped value is needed.
    """

    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0


@dataclass(frozen=True)
class Twist2D:
    """Planar body velocity: linear x/y in m/s, angular z in rad/s."""

    vx: float = 0.0
    vy: float = 0.0
    omega: float = 0.0


@dataclass(frozen=True)
class WheelSpeeds:
    """Left/right wheel rim speeds in m/s (positive = forward)."""

    left: float = 0.0
    right: float = 0.0


@dataclass(frozen=True)
class ChassisGeometry:
    """Physical chassis constants.

    track_width is the centre distance between the two driving wheels.
    """

    track_width: float = 0.2
    wheel_radius: float = 0.034

    def __post_init__(self):
        if self.track_width <= 0 or self.wheel_radius <= 0:
            raise ValueError("chassis geometry must be strictly positive")


@dataclass(frozen=True)
class IccResult:
    """Instantaneous centre of curvature: signed radius and turn rate.

    radius * omega equals the forward speed of the chassis.
    """

    radius: float
    omega: float


class StraightLine:
    """Distinguished ICC outcome for equal wheel speeds (infinite radius)."""

    def __repr__(self):
        return "StraightLine"


STRAIGHT_LINE = StraightLine()


def normalize_angle(theta: float) -> float:
    """Map an angle into (-pi, pi]."""
    a = math.fmod(theta + math.pi, 2.0 * math.pi)
    if a <= 0.0:
        a += 2.0 * math.pi
    return a - math.pi


def rotation_matrix(theta: float) -> np.ndarray:
    """Planar rotation matrix mapping global rates into the body frame.

    Returns the 3x3 matrix
        [[ cos(theta), sin(theta), 0],
         [-sin(theta), cos(theta), 0],
         [          0,          0, 1]]
    which is orthonormal with determinant 1.
    """
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])


def global_to_local(theta: float, xi_dot_global: Twist2D) -> Twist2D:
    """Rotate a global-frame velocity into the body frame at heading theta.

    The angular rate is frame-independent and passes through unchanged.
    """
    c, s = math.cos(theta), math.sin(theta)
    return Twist2D(
        vx=c * xi_dot_global.vx + s * xi_dot_global.vy,
        vy=-s * xi_dot_global.vx + c * xi_dot_global.vy,
        omega=xi_dot_global.omega,
    )


def local_to_global(theta: float, xi_dot_local: Twist2D) -> Twist2D:
    """Rotate a body-frame velocity into the global frame; exact inverse of
    global_to_local."""
    c, s = math.cos(theta), math.sin(theta)
    return Twist2D(
        vx=c * xi_dot_local.vx - s * xi_dot_local.vy,
        vy=s * xi_dot_local.vx + c * xi_dot_local.vy,
        omega=xi_dot_local.omega,
    )


def synthesize(wheels: WheelSpeeds, geom: ChassisGeometry) -> Twist2D:
    """Combine wheel speeds into the body twist.

    vx = (V_R + V_L) / 2, omega = (V_R - V_L) / d. The lateral component is
    identically zero (non-holonomic constraint).
    """
    return Twist2D(
        vx=(wheels.right + wheels.left) / 2.0,
        vy=0.0,
        omega=(wheels.right - wheels.left) / geom.track_width,
    )


def decompose(twist: Twist2D, geom: ChassisGeometry) -> WheelSpeeds:
    """Split a body twist into wheel speeds.

    V_L = vx - omega*d/2, V_R = vx + omega*d/2. Any vy is ignored (treated as
    zero); clamping against wheel speed limits is the caller's job.
    """
    half = twist.omega * geom.track_width / 2.0
    return WheelSpeeds(left=twist.vx - half, right=twist.vx + half)


def icc(wheels: WheelSpeeds, geom: ChassisGeometry) -> IccResult | StraightLine:
    """Instantaneous centre of curvature for the given wheel speeds.

    Returns STRAIGHT_LINE when both wheels run at the same speed; otherwise
    an IccResult with omega = (V_R - V_L) / d and radius = vx / omega, so
    radius * omega recovers the forward speed.
    """
    if wheels.left == wheels.right:
        return STRAIGHT_LINE
    twist = synthesize(wheels, geom)
    return IccResult(radius=twist.vx / twist.omega, omega=twist.omega)
