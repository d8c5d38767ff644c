"""Simulated plant: motors, encoders, world geometry and range sensors.

The motor is a first-order lag from PWM to wheel speed, advanced with the
exact exponential update so results are step-size independent. Ground truth
pose follows the exact arc for constant wheel speeds within a tick, which
makes the truth integrator a reference the Euler dead-reckoning can be
compared against. Encoders quantize ideal ticks with a carried remainder so
no tick is ever lost.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .kinematics import ChassisGeometry, Pose2D, WheelSpeeds
from .odometry import EncoderConfig, EncoderSample

_EPS = 1e-12


@dataclass(frozen=True)
class MotorParams:
    """First-order PWM-to-speed model for one wheel.

    Steady-state speed is linear in PWM above the deadband, reaching v_max
    at 255. noise_std is the std-dev of speed noise per sqrt-second.
    """

    tau: float = 0.15
    v_max: float = 0.7
    deadband_pwm: int = 0
    noise_std: float = 0.0

    def __post_init__(self):
        if self.tau <= 0 or self.v_max <= 0:
            raise ValueError("tau and v_max must be positive")
        if not 0 <= self.deadband_pwm < 255:
            raise ValueError("deadband_pwm must be in [0, 255)")
        if self.noise_std < 0:
            raise ValueError("noise_std must be non-negative")


def motor_step(
    speed: float, pwm: int, params: MotorParams, dt: float, rng=None
) -> float:
    """Advance the wheel speed one step toward the commanded speed.

    v' = v + (v_cmd - v) * (1 - exp(-dt/tau)), exact for the first-order
    lag, plus optional Gaussian noise scaled by sqrt(dt).
    """
    if not -255 <= pwm <= 255:
        raise ValueError(f"pwm out of range [-255, 255]: {pwm}")
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    magnitude = max(0, abs(pwm) - params.deadband_pwm)
    v_cmd = math.copysign(
        magnitude / (255 - params.deadband_pwm) * params.v_max, pwm
    )
    out = speed + (v_cmd - speed) * (1.0 - math.exp(-dt / params.tau))
    if params.noise_std > 0 and rng is not None:
        out += rng.normal(0.0, params.noise_std) * math.sqrt(dt)
    return out


class World:
    """Static 2D world: wall segments, cliff polygons and an outer bound."""

    def __init__(self, walls, cliffs=(), bounds=None, name="world"):
        self.name = name
        self.walls = tuple(
            ((float(a[0]), float(a[1])), (float(b[0]), float(b[1])))
            for a, b in walls
        )
        for (x1, y1), (x2, y2) in self.walls:
            if math.hypot(x2 - x1, y2 - y1) <= _EPS:
                raise ValueError(f"degenerate wall segment at ({x1}, {y1})")
        self.cliffs = tuple(
            tuple((float(x), float(y)) for x, y in poly) for poly in cliffs
        )
        for poly in self.cliffs:
            if len(poly) < 3:
                raise ValueError("cliff polygons need at least 3 vertices")
        if bounds is None:
            xs = [p[0] for w in self.walls for p in w] or [0.0, 1.0]
            ys = [p[1] for w in self.walls for p in w] or [0.0, 1.0]
            bounds = (min(xs), min(ys), max(xs), max(ys))
        self.bounds = tuple(float(v) for v in bounds)
        if self.bounds[0] >= self.bounds[2] or self.bounds[1] >= self.bounds[3]:
            raise ValueError(f"invalid bounds {self.bounds}")
        if self.walls:
            pts = np.array([w[0] for w in self.walls])
            ends = np.array([w[1] for w in self.walls])
            self._seg_p = pts
            self._seg_d = ends - pts
        else:
            self._seg_p = np.zeros((0, 2))
            self._seg_d = np.zeros((0, 2))

    @classmethod
    def from_dict(cls, data: dict) -> "World":
        try:
            return cls(
                walls=data.get("walls", ()),
                cliffs=data.get("cliffs", ()),
                bounds=data.get("bounds"),
                name=data.get("name", "world"),
            )
        except (TypeError, IndexError) as exc:
            raise ValueError(f"malformed world definition: {exc}") from exc

    @classmethod
    def load(cls, path) -> "World":
        with open(path) as f:
            return cls.from_dict(json.load(f))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "bounds": list(self.bounds),
            "walls": [[list(a), list(b)] for a, b in self.walls],
            "cliffs": [[list(p) for p in poly] for poly in self.cliffs],
        }

    def raycast(self, origin, angles) -> np.ndarray:
        """Distance from origin to the nearest wall along each angle.

        Returns inf where no wall is hit. Vectorized over beams and
        segments.
        """
        angles = np.atleast_1d(np.asarray(angles, dtype=float))
        if self._seg_p.shape[0] == 0:
            return np.full(angles.shape, np.inf)
        dirs = np.stack([np.cos(angles), np.sin(angles)], axis=1)  # (B, 2)
        rel = self._seg_p[None, :, :] - np.asarray(origin, dtype=float)  # (B?, S, 2)
        d = self._seg_d
        denom = dirs[:, None, 0] * d[None, :, 1] - dirs[:, None, 1] * d[None, :, 0]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (rel[..., 0] * d[None, :, 1] - rel[..., 1] * d[None, :, 0]) / denom
            u = (
                rel[..., 0] * dirs[:, None, 1] - rel[..., 1] * dirs[:, None, 0]
            ) / denom
        valid = (np.abs(denom) > _EPS) & (t >= 0.0) & (u >= -_EPS) & (u <= 1.0 + _EPS)
        t = np.where(valid, t, np.inf)
        return t.min(axis=1)


@dataclass(frozen=True)
class LidarConfig:
    beams: int = 360
    max_range: float = 8.0
    rate_hz: float = 5.5

    def __post_init__(self):
        if self.beams < 1 or self.max_range <= 0 or self.rate_hz <= 0:
            raise ValueError("lidar parameters must be positive")


def lidar_scan(world: World, pose: Pose2D, cfg: LidarConfig) -> np.ndarray:
    """One full planar scan. Beam i points at theta + 2*pi*i/beams
    (counter-clockwise, beam 0 along the heading); returns range per beam
    with inf past max_range."""
    angles = pose.theta + 2.0 * math.pi * np.arange(cfg.beams) / cfg.beams
    ranges = world.raycast((pose.x, pose.y), angles)
    return np.where(ranges <= cfg.max_range, ranges, np.inf)


def point_in_polygon(point, polygon) -> bool:
    """Even-odd rule; points on the boundary may land either side."""
    x, y = point
    inside = False
    n = len(polygon)
    for i in range(n):
        x1, y1 = polygon[i]
        x2, y2 = polygon[(i + 1) % n]
        if (y1 > y) != (y2 > y):
            x_cross = x1 + (y - y1) / (y2 - y1) * (x2 - x1)
            if x < x_cross:
                inside = not inside
    return inside


def cliff_check(world: World, pose: Pose2D, probe_distance: float = 0.05) -> bool:
    """True when the downward probe just ahead of the robot is over a cliff."""
    probe = (
        pose.x + probe_distance * math.cos(pose.theta),
        pose.y + probe_distance * math.sin(pose.theta),
    )
    return any(point_in_polygon(probe, poly) for poly in world.cliffs)


def ultrasonic_range(
    world: World,
    pose: Pose2D,
    max_range: float = 3.0,
    half_angle: float = math.radians(15.0),
    rays: int = 5,
) -> float:
    """Forward obstacle distance over a narrow cone; inf when clear."""
    angles = pose.theta + np.linspace(-half_angle, half_angle, rays)
    nearest = world.raycast((pose.x, pose.y), angles).min()
    return float(nearest) if nearest <= max_range else math.inf


def _segments_cross(p1, p2, q1, q2) -> bool:
    rx, ry = p2[0] - p1[0], p2[1] - p1[1]
    sx, sy = q2[0] - q1[0], q2[1] - q1[1]
    denom = rx * sy - ry * sx
    relx, rely = q1[0] - p1[0], q1[1] - p1[1]
    if abs(denom) <= _EPS:
        return False  # parallel; sliding along a wall is not a crossing
    t = (relx * sy - rely * sx) / denom
    u = (relx * ry - rely * rx) / denom
    return 0.0 <= t <= 1.0 and 0.0 <= u <= 1.0


@dataclass(frozen=True)
class GroundTruth:
    """Exact simulator state: pose, current wheel speeds, elapsed time."""

    pose: Pose2D = Pose2D()
    wheels: WheelSpeeds = WheelSpeeds()
    time: float = 0.0
    collision: bool = False


def true_pose_step(
    truth: GroundTruth, geom: ChassisGeometry, dt: float, world: World | None = None
) -> GroundTruth:
    """Advance the true pose one tick along the exact arc.

    Equal wheel speeds reduce to the same straight-line expression the
    Euler dead-reckoning uses, so the two match bit-for-bit in that case.
    A move whose path crosses a wall freezes translation for the tick
    (rotation proceeds) and flags the collision.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    pose = truth.pose
    v = (truth.wheels.right + truth.wheels.left) / 2.0
    w = (truth.wheels.right - truth.wheels.left) / geom.track_width
    if abs(w) < _EPS:
        theta = pose.theta + w * dt
        x = pose.x + math.cos(pose.theta) * v * dt
        y = pose.y + math.sin(pose.theta) * v * dt
    else:
        radius = v / w
        theta = pose.theta + w * dt
        x = pose.x + radius * (math.sin(theta) - math.sin(pose.theta))
        y = pose.y - radius * (math.cos(theta) - math.cos(pose.theta))
    collision = False
    if world is not None and math.hypot(x - pose.x, y - pose.y) > _EPS:
        start, end = (pose.x, pose.y), (x, y)
        if any(_segments_cross(start, end, a, b) for a, b in world.walls):
            x, y = pose.x, pose.y
            collision = True
    return GroundTruth(
        pose=Pose2D(x=x, y=y, theta=theta),
        wheels=truth.wheels,
        time=truth.time + dt,
        collision=collision,
    )


class _WheelEncoder:
    """Quantizes ideal tick flow; the fractional remainder carries over."""

    def __init__(self, ticks_per_meter: float):
        self.ticks_per_meter = ticks_per_meter
        self._ideal = 0.0
        self._emitted = 0

    def advance(self, distance: float) -> int:
        self._ideal += distance * self.ticks_per_meter
        total = math.floor(self._ideal)
        delta = total - self._emitted
        self._emitted = total
        return delta


class Plant:
    """Mutable simulation entity driven one tick at a time.

    drive() applies a PWM pair, advances both motors and the true pose,
    and returns the tick's encoder sample. Sensors read the current state.
    """

    def __init__(
        self,
        world: World,
        geom: ChassisGeometry = ChassisGeometry(),
        encoder_config: EncoderConfig = EncoderConfig(),
        motor_left: MotorParams = MotorParams(),
        motor_right: MotorParams = MotorParams(),
        lidar_config: LidarConfig = LidarConfig(),
        start_pose: Pose2D = Pose2D(),
        dt: float = 0.02,
        seed: int = 0,
    ):
        if dt <= 0:
            raise ValueError(f"dt must be positive, got {dt}")
        self.world = world
        self.geom = geom
        self.encoder_config = encoder_config
        self.motor_left = motor_left
        self.motor_right = motor_right
        self.lidar_config = lidar_config
        self.dt = dt
        self.rng = np.random.default_rng(seed)
        self.truth = GroundTruth(pose=start_pose)
        self.collided = False
        # Encoders count shaft rotations, so tick generation depends on the
        # *actual* wheel radius; encoder_config.wheel_radius is what the
        # odometry side believes. They differ on an uncalibrated robot.
        ticks_per_meter = encoder_config.ticks_per_rev / (
            2.0 * math.pi * geom.wheel_radius
        )
        self._enc_left = _WheelEncoder(ticks_per_meter)
        self._enc_right = _WheelEncoder(ticks_per_meter)
        self.last_pwm = (0, 0)

    def drive(self, pwm_left: int, pwm_right: int) -> EncoderSample:
        self.last_pwm = (pwm_left, pwm_right)
        left = motor_step(
            self.truth.wheels.left, pwm_left, self.motor_left, self.dt, self.rng
        )
        right = motor_step(
            self.truth.wheels.right, pwm_right, self.motor_right, self.dt, self.rng
        )
        self.truth = replace(self.truth, wheels=WheelSpeeds(left=left, right=right))
        self.truth = true_pose_step(self.truth, self.geom, self.dt, self.world)
        if self.truth.collision:
            self.collided = True
        return EncoderSample(
            delta_ticks_left=self._enc_left.advance(left * self.dt),
            delta_ticks_right=self._enc_right.advance(right * self.dt),
            dt=self.dt,
        )

    def lidar(self) -> np.ndarray:
        return lidar_scan(self.world, self.truth.pose, self.lidar_config)

    def cliff(self) -> bool:
        return cliff_check(self.world, self.truth.pose)

    def ultrasonic(self) -> float:
        return ultrasonic_range(self.world, self.truth.pose)
