"""Nodes of the control graph.

Each node owns a small piece of state, subscribes to the topics it needs
and publishes during its step() slot. The scheduler steps nodes in a fixed
order every tick (a node with period k only acts on every k-th tick) and
flushes the bus after each slot, so downstream nodes see messages published
earlier in the same tick.

Graph order: key sources -> estop -> tele_converter -> goto planner ->
wheel_speed -> controller -> launchpad (plant boundary) -> odom -> lidar ->
mapper.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from . import bus, odometry
from .autonomy import (
    GoalSpec,
    GoToPoseParams,
    MappingConfig,
    OccupancyGrid,
    classify_cells,
    go_to_pose,
    goal_reached,
    grid_update,
)
from .bus import Envelope, Flag, KeyPress, LidarScan, MapSnapshot, Odom, StatusLed, TopicRegistry, WheelTarget
from .control import CalibrationTable, PidGains, PidState, PwmPair, pid_step
from .kinematics import (
    ChassisGeometry,
    Pose2D,
    Twist2D,
    WheelSpeeds,
    decompose,
    synthesize,
)
from .odometry import EncoderConfig, OdometryState
from .plant import Plant


@dataclass(frozen=True)
class TeleopConfig:
    v_step: float = 0.3
    omega_step: float = 1.0


def tele_convert(key: str, cfg: TeleopConfig = TeleopConfig()) -> Twist2D | None:
    """w/s drive forward/back, a/d turn left/right, space or x stops."""
    if key == "w":
        return Twist2D(vx=cfg.v_step)
    if key == "s":
        return Twist2D(vx=-cfg.v_step)
    if key == "a":
        return Twist2D(omega=cfg.omega_step)
    if key == "d":
        return Twist2D(omega=-cfg.omega_step)
    if key in (" ", "x", "space"):
        return Twist2D()
    return None


def estop_logic(cliff: bool, latched: bool, reset: bool) -> tuple[bool, bool]:
    """(override, new_latch): a reset clears the latch only while no cliff
    is detected; a detected cliff always (re)latches."""
    new_latch = cliff or (latched and not reset)
    return new_latch, new_latch


def clamp_wheels(wheels: WheelSpeeds, v_max: float) -> WheelSpeeds:
    """Scale both wheels down together so |speed| <= v_max, preserving the
    left/right ratio (and therefore the turning radius)."""
    peak = max(abs(wheels.left), abs(wheels.right))
    if peak <= v_max:
        return wheels
    scale = v_max / peak
    return WheelSpeeds(left=wheels.left * scale, right=wheels.right * scale)


class Node:
    name: str = "node"
    period: int = 1  # act every period-th tick

    def wire(self, registry: TopicRegistry) -> None:
        self.registry = registry

    def step(self, tick: int) -> None:
        raise NotImplementedError


class ScriptTeleopNode(Node):
    """Injects scripted key presses; the stand-in for a keyboard."""

    name = "keyboard_control"

    def __init__(self, script: dict[int, list[str]] | None = None):
        self.script = script or {}

    def step(self, tick: int) -> None:
        for key in self.script.get(tick, []):
            if key == "reset":
                self.registry.publish(bus.ESTOP_RESET, Flag(True), tick)
            else:
                self.registry.publish(bus.TELEOP_KEY, KeyPress(key), tick)


class InboundNode(Node):
    """Publishes externally queued events (the remote-control link)."""

    name = "serial_control"

    def __init__(self, drain):
        self._drain = drain  # callable -> list[(topic, payload)]

    def step(self, tick: int) -> None:
        for topic, payload in self._drain():
            self.registry.publish(topic, payload, tick)


class EStopNode(Node):
    """Latches on cliff detection; publishes the latch state every tick."""

    name = "estop_node"

    def __init__(self, plant: Plant):
        self.plant = plant
        self.latched = False
        self._reset_requested = False
        self._led: str | None = None

    def wire(self, registry: TopicRegistry) -> None:
        super().wire(registry)
        registry.subscribe(bus.ESTOP_RESET, self._on_reset)

    def _on_reset(self, env: Envelope) -> None:
        if env.payload.value:
            self._reset_requested = True

    def step(self, tick: int) -> None:
        cliff = self.plant.cliff()
        _, self.latched = estop_logic(cliff, self.latched, self._reset_requested)
        self._reset_requested = False
        self.registry.publish(bus.ESTOP, Flag(self.latched), tick)
        led = "estop" if self.latched else "ok"
        if led != self._led:
            self._led = led
            self.registry.publish(bus.LED_STATUS, StatusLed(led), tick)


class TeleConverterNode(Node):
    """Maps key presses to commanded twists."""

    name = "tele_converter"

    def __init__(self, cfg: TeleopConfig = TeleopConfig()):
        self.cfg = cfg
        self._keys: list[str] = []

    def wire(self, registry: TopicRegistry) -> None:
        super().wire(registry)
        registry.subscribe(bus.TELEOP_KEY, lambda env: self._keys.append(env.payload.key))

    def step(self, tick: int) -> None:
        for key in self._keys:
            twist = tele_convert(key, self.cfg)
            if twist is not None:
                self.registry.publish(bus.CMD_VEL, twist, tick)
        self._keys.clear()


class GoToPoseNode(Node):
    """Drives toward the latest goal using odometry feedback."""

    name = "goto_planner"

    # settle at 90% of the requested band: odometry error must not be able
    # to push the true pose back outside once arrival is declared
    SETTLE_MARGIN = 0.9

    def __init__(
        self,
        initial_goal: Pose2D | None = None,
        pos_tolerance: float = 0.05,
        heading_tolerance: float = 0.1,
        params: GoToPoseParams = GoToPoseParams(),
    ):
        self.initial_goal = initial_goal
        self.pos_tolerance = pos_tolerance
        self.heading_tolerance = heading_tolerance
        self.params = params
        self.goal: GoalSpec | None = None
        self.pose: Pose2D | None = None

    def wire(self, registry: TopicRegistry) -> None:
        super().wire(registry)
        registry.subscribe(bus.GOAL, self._on_goal)
        registry.subscribe(bus.ODOM, self._on_odom)

    def _on_goal(self, env: Envelope) -> None:
        self.goal = GoalSpec(
            goal=env.payload,
            pos_tolerance=self.pos_tolerance * self.SETTLE_MARGIN,
            heading_tolerance=self.heading_tolerance * self.SETTLE_MARGIN,
        )

    def _on_odom(self, env: Envelope) -> None:
        self.pose = env.payload.pose

    @property
    def arrived(self) -> bool:
        return (
            self.goal is not None
            and self.pose is not None
            and goal_reached(self.pose, self.goal)
        )

    def step(self, tick: int) -> None:
        if tick == 0 and self.initial_goal is not None:
            self.registry.publish(bus.GOAL, self.initial_goal, tick)
        if self.goal is None or self.pose is None:
            return
        self.registry.publish(
            bus.CMD_VEL, go_to_pose(self.pose, self.goal, self.params), tick
        )


class WheelSpeedNode(Node):
    """Decomposes the commanded twist into clamped per-wheel targets."""

    name = "wheel_speed"

    def __init__(self, geom: ChassisGeometry, v_wheel_max: float = 0.5):
        self.geom = geom
        self.v_wheel_max = v_wheel_max
        self.twist = Twist2D()
        self.estopped = False

    def wire(self, registry: TopicRegistry) -> None:
        super().wire(registry)
        registry.subscribe(bus.CMD_VEL, self._on_cmd)
        registry.subscribe(bus.ESTOP, self._on_estop)

    def _on_cmd(self, env: Envelope) -> None:
        self.twist = env.payload

    def _on_estop(self, env: Envelope) -> None:
        self.estopped = env.payload.value
        if self.estopped:
            self.twist = Twist2D()  # held command is dropped, not resumed

    def step(self, tick: int) -> None:
        twist = Twist2D() if self.estopped else self.twist
        wheels = clamp_wheels(decompose(twist, self.geom), self.v_wheel_max)
        self.registry.publish(
            bus.WHEEL_TARGET, WheelTarget(left=wheels.left, right=wheels.right), tick
        )


class ControllerNode(Node):
    """Per-wheel speed controller running on every period-th tick.

    In pid mode the measured speed comes from encoder ticks accumulated
    since the previous control step; in segmented mode the calibration
    table maps the target straight to PWM.
    """

    def __init__(
        self,
        kind: str = "pid",
        gains: PidGains = PidGains(),
        table: CalibrationTable | None = None,
        encoder_config: EncoderConfig = EncoderConfig(),
        period: int = 5,
    ):
        if kind not in ("pid", "segmented"):
            raise ValueError(f"unknown controller kind {kind!r}")
        if kind == "segmented" and table is None:
            raise ValueError("segmented controller needs a calibration table")
        self.kind = kind
        self.name = "pid_control" if kind == "pid" else "sec_control"
        self.gains = gains
        self.table = table
        self.period = period
        self._meters_per_tick = (
            2.0 * math.pi * encoder_config.wheel_radius / encoder_config.ticks_per_rev
        )
        self.target = WheelTarget(0.0, 0.0)
        self.estopped = False
        self._ticks = [0, 0]
        self._window = 0.0
        self._state = [PidState(), PidState()]

    def wire(self, registry: TopicRegistry) -> None:
        super().wire(registry)
        registry.subscribe(bus.WHEEL_TARGET, self._on_target)
        registry.subscribe(bus.ESTOP, self._on_estop)
        registry.subscribe(bus.ENCODER, self._on_encoder)

    def _on_target(self, env: Envelope) -> None:
        self.target = env.payload

    def _on_estop(self, env: Envelope) -> None:
        self.estopped = env.payload.value

    def _on_encoder(self, env: Envelope) -> None:
        self._ticks[0] += env.payload.delta_ticks_left
        self._ticks[1] += env.payload.delta_ticks_right
        self._window += env.payload.dt

    def _clear_window(self) -> None:
        self._ticks = [0, 0]
        self._window = 0.0

    def step(self, tick: int) -> None:
        if self.estopped:
            self._state = [PidState(), PidState()]
            self._clear_window()
            self.registry.publish(bus.PWM, PwmPair(0, 0), tick)
            return
        if self.kind == "segmented":
            pwm = self.table.lookup(self.target.left, self.target.right)
        else:
            if self._window > 0:
                measured = [
                    t * self._meters_per_tick / self._window for t in self._ticks
                ]
            else:
                measured = [0.0, 0.0]
            left, self._state[0] = pid_step(
                self._state[0], self.gains, self.target.left, measured[0]
            )
            right, self._state[1] = pid_step(
                self._state[1], self.gains, self.target.right, measured[1]
            )
            pwm = PwmPair(left=left, right=right)
        self._clear_window()
        self.registry.publish(bus.PWM, pwm, tick)


class LaunchpadNode(Node):
    """Hardware boundary: applies the held PWM to the plant each tick and
    publishes the encoder sample plus the true state.

    While the e-stop latch is up the applied PWM is forced to (0, 0)
    regardless of the held command."""

    name = "launchpad_node"

    def __init__(self, plant: Plant):
        self.plant = plant
        self.pwm = PwmPair(0, 0)
        self.estopped = False

    def wire(self, registry: TopicRegistry) -> None:
        super().wire(registry)
        registry.subscribe(bus.PWM, self._on_pwm)
        registry.subscribe(bus.ESTOP, self._on_estop)

    def _on_pwm(self, env: Envelope) -> None:
        self.pwm = env.payload

    def _on_estop(self, env: Envelope) -> None:
        self.estopped = env.payload.value

    def step(self, tick: int) -> None:
        applied = PwmPair(0, 0) if self.estopped else self.pwm
        sample = self.plant.drive(applied.left, applied.right)
        self.registry.publish(bus.ENCODER, sample, tick)
        truth = self.plant.truth
        self.registry.publish(
            bus.TRUTH,
            Odom(pose=truth.pose, twist=synthesize(truth.wheels, self.plant.geom)),
            tick,
        )


class OdomNode(Node):
    """Dead-reckoning from encoder samples."""

    name = "odom_node"

    def __init__(
        self,
        encoder_config: EncoderConfig,
        geom: ChassisGeometry,
        initial_pose: Pose2D = Pose2D(),
    ):
        self.encoder_config = encoder_config
        self.geom = geom
        self.state = OdometryState(pose=initial_pose)
        self._samples: list = []

    def wire(self, registry: TopicRegistry) -> None:
        super().wire(registry)
        registry.subscribe(bus.ENCODER, lambda env: self._samples.append(env.payload))

    def step(self, tick: int) -> None:
        for sample in self._samples:
            wheels = odometry.ticks_to_wheel_speed(sample, self.encoder_config)
            pose = odometry.step(self.state.pose, wheels, self.geom, sample.dt)
            self.state = OdometryState(pose=pose, sample_time=sample.dt)
            self.registry.publish(
                bus.ODOM, Odom(pose=pose, twist=synthesize(wheels, self.geom)), tick
            )
        self._samples.clear()


class LidarNode(Node):
    """Publishes a full scan every period-th tick."""

    name = "lidar_node"

    def __init__(self, plant: Plant, period: int):
        self.plant = plant
        self.period = period

    def step(self, tick: int) -> None:
        ranges = tuple(float(r) for r in self.plant.lidar())
        self.registry.publish(
            bus.SCAN,
            LidarScan(ranges=ranges, max_range=self.plant.lidar_config.max_range),
            tick,
        )


class MapperNode(Node):
    """Fuses scans into the occupancy grid; snapshots the classified map."""

    name = "mapper"

    def __init__(
        self,
        grid: OccupancyGrid,
        cfg: MappingConfig = MappingConfig(),
        pose_source: str = "odom",
        snapshot_period: int = 0,
    ):
        if pose_source not in ("odom", "truth"):
            raise ValueError(f"unknown pose source {pose_source!r}")
        self.grid = grid
        self.cfg = cfg
        self.pose_source = pose_source
        self.snapshot_period = snapshot_period
        self.pose: Pose2D | None = None
        self._scans: list[LidarScan] = []

    def wire(self, registry: TopicRegistry) -> None:
        super().wire(registry)
        registry.subscribe(bus.SCAN, lambda env: self._scans.append(env.payload))
        topic = bus.ODOM if self.pose_source == "odom" else bus.TRUTH
        registry.subscribe(topic, self._on_pose)

    def _on_pose(self, env: Envelope) -> None:
        self.pose = env.payload.pose

    def step(self, tick: int) -> None:
        for scan in self._scans:
            if self.pose is None:
                continue
            grid_update(self.grid, self.pose, scan.ranges, scan.max_range, self.cfg)
        self._scans.clear()
        if self.snapshot_period and tick % self.snapshot_period == 0 and tick > 0:
            gray = classify_cells(self.grid, self.cfg)
            chars = {0: "#", 254: " ", 205: "."}
            rows = ["".join(chars[v] for v in row) for row in gray]
            self.registry.publish(
                bus.MAP,
                MapSnapshot(
                    width=self.grid.width,
                    height=self.grid.height,
                    resolution=self.grid.resolution,
                    origin_x=self.grid.origin[0],
                    origin_y=self.grid.origin[1],
                    cells="".join(rows),
                ),
                tick,
            )
