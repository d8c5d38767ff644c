"""Scenario configuration, the tick scheduler and trace recording.

A scenario is a JSON config (world, mode, plant parameters, controller,
durations) plus an optional key script. build_simulation() wires the node
graph for the configured mode; Simulation.run() advances it tick by tick.
Runs are deterministic: same config, script and seed give byte-identical
traces.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field
from importlib import resources

from . import bus
from .autonomy import GoToPoseParams, MappingConfig, OccupancyGrid
from .bus import NodeError, TopicRegistry, payload_to_wire
from .control import CalibrationTable, PidGains, read_table_csv
from .kinematics import ChassisGeometry, Pose2D, normalize_angle
from .nodes import (
    ControllerNode,
    EStopNode,
    GoToPoseNode,
    InboundNode,
    LaunchpadNode,
    LidarNode,
    MapperNode,
    Node,
    OdomNode,
    ScriptTeleopNode,
    TeleConverterNode,
    TeleopConfig,
    WheelSpeedNode,
)
from .odometry import EncoderConfig
from .plant import LidarConfig, MotorParams, Plant, World


class ConfigError(Exception):
    pass


MODES = ("teleop", "goto", "map")


@dataclass
class MappingSettings:
    resolution: float = 0.05
    config: MappingConfig = field(default_factory=MappingConfig)
    l_min: float = -10.0
    l_max: float = 10.0
    pose_source: str = "odom"
    snapshot_period_s: float = 1.0
    export: str = "map.pgm"


@dataclass
class GotoSettings:
    goal: Pose2D | None = None
    pos_tolerance: float = 0.05
    heading_tolerance: float = 0.1
    params: GoToPoseParams = field(default_factory=GoToPoseParams)


@dataclass
class ScenarioConfig:
    world: World
    mode: str = "teleop"
    duration_s: float = 10.0
    dt: float = 0.02
    control_period: int = 5
    seed: int = 0
    start_pose: Pose2D = field(default_factory=Pose2D)
    geom: ChassisGeometry = field(default_factory=ChassisGeometry)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    motor_left: MotorParams = field(default_factory=MotorParams)
    motor_right: MotorParams = field(default_factory=MotorParams)
    controller_kind: str = "pid"
    gains: PidGains = field(default_factory=PidGains)
    table: CalibrationTable | None = None
    teleop: TeleopConfig = field(default_factory=TeleopConfig)
    wheel_speed_limit: float = 0.5
    lidar: LidarConfig = field(default_factory=LidarConfig)
    lidar_enabled: bool = False
    goto: GotoSettings = field(default_factory=GotoSettings)
    mapping: MappingSettings = field(default_factory=MappingSettings)
    name: str = "scenario"

    @property
    def ticks(self) -> int:
        return round(self.duration_s / self.dt)


def _require(data: dict, allowed: set[str], where: str) -> None:
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(sorted(unknown))}")


def _number(data: dict, key: str, default, where: str, minimum=None):
    value = data.get(key, default)
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ConfigError(f"{where}.{key} must be a number, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{where}.{key} must be >= {minimum}, got {value}")
    return value


def _pose(value, where: str) -> Pose2D:
    if (
        not isinstance(value, (list, tuple))
        or len(value) != 3
        or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in value)
    ):
        raise ConfigError(f"{where} must be [x, y, theta], got {value!r}")
    return Pose2D(x=float(value[0]), y=float(value[1]), theta=float(value[2]))


def bundled_world(name: str) -> World:
    """Load one of the worlds shipped with the package."""
    ref = resources.files("deskbot").joinpath(f"worlds/{name}.json")
    try:
        with ref.open() as f:
            return World.from_dict(json.load(f))
    except FileNotFoundError:
        raise ConfigError(f"no bundled world named {name!r}") from None


def resolve_world(value: str, base_dir: str) -> World:
    """A value with a path separator or .json suffix is a file relative to
    the config; anything else names a bundled world."""
    if os.sep in value or value.endswith(".json"):
        path = os.path.join(base_dir, value)
        if not os.path.exists(path):
            raise ConfigError(f"world file not found: {path}")
        try:
            return World.load(path)
        except (json.JSONDecodeError, ValueError) as exc:
            raise ConfigError(f"bad world file {path}: {exc}") from exc
    return bundled_world(value)


def _motor(data: dict, where: str) -> MotorParams:
    _require(data, {"tau", "v_max", "deadband_pwm", "noise_std"}, where)
    try:
        return MotorParams(
            tau=_number(data, "tau", 0.15, where),
            v_max=_number(data, "v_max", 0.7, where),
            deadband_pwm=int(_number(data, "deadband_pwm", 0, where, minimum=0)),
            noise_std=_number(data, "noise_std", 0.0, where, minimum=0.0),
        )
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def config_from_dict(data: dict, base_dir: str = ".", name: str = "scenario") -> ScenarioConfig:
    _require(
        data,
        {
            "world", "mode", "duration_s", "dt", "control_period", "seed",
            "start_pose", "chassis", "encoder", "motor", "controller",
            "teleop", "wheel_speed_limit", "lidar", "goto", "mapping",
        },
        "config",
    )
    mode = data.get("mode", "teleop")
    if mode not in MODES:
        raise ConfigError(f"config.mode must be one of {MODES}, got {mode!r}")
    world_name = data.get("world", "square4m")
    if not isinstance(world_name, str):
        raise ConfigError(f"config.world must be a string, got {world_name!r}")
    world = resolve_world(world_name, base_dir)

    dt = _number(data, "dt", 0.02, "config")
    if dt <= 0:
        raise ConfigError(f"config.dt must be positive, got {dt}")
    duration = _number(data, "duration_s", 10.0, "config", minimum=0.0)
    control_period = int(_number(data, "control_period", 5, "config", minimum=1))
    seed = int(_number(data, "seed", 0, "config"))

    chassis = data.get("chassis", {})
    _require(chassis, {"track_width", "wheel_radius"}, "config.chassis")
    try:
        geom = ChassisGeometry(
            track_width=_number(chassis, "track_width", 0.2, "config.chassis"),
            wheel_radius=_number(chassis, "wheel_radius", 0.034, "config.chassis"),
        )
    except ValueError as exc:
        raise ConfigError(f"config.chassis: {exc}") from exc

    enc = data.get("encoder", {})
    _require(enc, {"ticks_per_rev", "wheel_radius"}, "config.encoder")
    try:
        encoder = EncoderConfig(
            ticks_per_rev=int(_number(enc, "ticks_per_rev", 1024, "config.encoder", 1)),
            wheel_radius=_number(enc, "wheel_radius", geom.wheel_radius, "config.encoder"),
        )
    except ValueError as exc:
        raise ConfigError(f"config.encoder: {exc}") from exc

    motor = data.get("motor", {})
    if "left" in motor or "right" in motor:
        _require(motor, {"left", "right"}, "config.motor")
        motor_left = _motor(motor.get("left", {}), "config.motor.left")
        motor_right = _motor(motor.get("right", {}), "config.motor.right")
    else:
        motor_left = motor_right = _motor(motor, "config.motor")

    ctl = data.get("controller", {})
    _require(ctl, {"kind", "kp", "ki", "kd", "table"}, "config.controller")
    kind = ctl.get("kind", "pid")
    if kind not in ("pid", "segmented"):
        raise ConfigError(
            f"config.controller.kind must be 'pid' or 'segmented', got {kind!r}"
        )
    try:
        gains = PidGains(
            kp=_number(ctl, "kp", 250.0, "config.controller", minimum=0.0),
            ki=_number(ctl, "ki", 2000.0, "config.controller", minimum=0.0),
            kd=_number(ctl, "kd", 5.0, "config.controller", minimum=0.0),
            sample_time=control_period * dt,
        )
    except ValueError as exc:
        raise ConfigError(f"config.controller: {exc}") from exc
    table = None
    if kind == "segmented":
        table_path = ctl.get("table")
        if not isinstance(table_path, str):
            raise ConfigError(
                "config.controller.table (a calibration CSV path) is required "
                "for the segmented controller"
            )
        full = os.path.join(base_dir, table_path)
        if not os.path.exists(full):
            raise ConfigError(f"calibration table not found: {full}")
        table = read_table_csv(full)

    tele = data.get("teleop", {})
    _require(tele, {"v_step", "omega_step"}, "config.teleop")
    teleop = TeleopConfig(
        v_step=_number(tele, "v_step", 0.3, "config.teleop"),
        omega_step=_number(tele, "omega_step", 1.0, "config.teleop"),
    )

    lid = data.get("lidar", {})
    _require(lid, {"enabled", "beams", "max_range", "rate_hz"}, "config.lidar")
    try:
        lidar = LidarConfig(
            beams=int(_number(lid, "beams", 360, "config.lidar", minimum=1)),
            max_range=_number(lid, "max_range", 8.0, "config.lidar"),
            rate_hz=_number(lid, "rate_hz", 5.5, "config.lidar"),
        )
    except ValueError as exc:
        raise ConfigError(f"config.lidar: {exc}") from exc
    lidar_enabled = bool(lid.get("enabled", mode == "map"))

    gt = data.get("goto", {})
    _require(
        gt,
        {
            "goal", "pos_tolerance", "heading_tolerance", "k_bearing",
            "k_distance", "bearing_gate", "v_max", "omega_max",
        },
        "config.goto",
    )
    goto = GotoSettings(
        goal=_pose(gt["goal"], "config.goto.goal") if "goal" in gt else None,
        pos_tolerance=_number(gt, "pos_tolerance", 0.05, "config.goto"),
        heading_tolerance=_number(gt, "heading_tolerance", 0.1, "config.goto"),
        params=GoToPoseParams(
            k_bearing=_number(gt, "k_bearing", 2.0, "config.goto"),
            k_distance=_number(gt, "k_distance", 0.5, "config.goto"),
            bearing_gate=_number(gt, "bearing_gate", math.pi / 6, "config.goto"),
            v_max=_number(gt, "v_max", 0.3, "config.goto"),
            omega_max=_number(gt, "omega_max", 1.5, "config.goto"),
        ),
    )
    if mode == "goto" and goto.goal is None:
        raise ConfigError("config.goto.goal is required in goto mode")

    mp = data.get("mapping", {})
    _require(
        mp,
        {
            "resolution", "l_occ", "l_free", "l_min", "l_max",
            "occ_threshold", "free_threshold", "pose_source",
            "snapshot_period_s", "export",
        },
        "config.mapping",
    )
    pose_source = mp.get("pose_source", "odom")
    if pose_source not in ("odom", "truth"):
        raise ConfigError(
            f"config.mapping.pose_source must be 'odom' or 'truth', got {pose_source!r}"
        )
    try:
        mapping = MappingSettings(
            resolution=_number(mp, "resolution", 0.05, "config.mapping"),
            config=MappingConfig(
                l_occ=_number(mp, "l_occ", 0.85, "config.mapping"),
                l_free=_number(mp, "l_free", -0.4, "config.mapping"),
                occ_threshold=_number(mp, "occ_threshold", 2.0, "config.mapping"),
                free_threshold=_number(mp, "free_threshold", -2.0, "config.mapping"),
            ),
            l_min=_number(mp, "l_min", -10.0, "config.mapping"),
            l_max=_number(mp, "l_max", 10.0, "config.mapping"),
            pose_source=pose_source,
            snapshot_period_s=_number(mp, "snapshot_period_s", 1.0, "config.mapping"),
            export=str(mp.get("export", "map.pgm")),
        )
    except ValueError as exc:
        raise ConfigError(f"config.mapping: {exc}") from exc

    start = _pose(data.get("start_pose", [0.0, 0.0, 0.0]), "config.start_pose")

    return ScenarioConfig(
        world=world,
        mode=mode,
        duration_s=duration,
        dt=dt,
        control_period=control_period,
        seed=seed,
        start_pose=start,
        geom=geom,
        encoder=encoder,
        motor_left=motor_left,
        motor_right=motor_right,
        controller_kind=kind,
        gains=gains,
        table=table,
        teleop=teleop,
        wheel_speed_limit=_number(
            data, "wheel_speed_limit", 0.5, "config", minimum=0.0
        ),
        lidar=lidar,
        lidar_enabled=lidar_enabled,
        goto=goto,
        mapping=mapping,
        name=name,
    )


def load_config(path) -> ScenarioConfig:
    try:
        with open(path) as f:
            data = json.load(f)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a JSON object")
    name = os.path.splitext(os.path.basename(os.fspath(path)))[0]
    return config_from_dict(data, base_dir=os.path.dirname(os.fspath(path)) or ".", name=name)


def parse_script(text: str) -> dict[int, list[str]]:
    """Key script: one `tick:key` per line, '#' comments, blanks ignored.
    The key token `space` stands for the space bar; `reset` requests an
    e-stop reset."""
    script: dict[int, list[str]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tick_part, sep, key = line.partition(":")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"script line {lineno}: expected 'tick:key', got {raw!r}")
        try:
            tick = int(tick_part)
        except ValueError:
            raise ConfigError(
                f"script line {lineno}: tick must be an integer, got {tick_part!r}"
            ) from None
        if tick < 0:
            raise ConfigError(f"script line {lineno}: tick must be >= 0")
        script.setdefault(tick, []).append(key)
    return script


def load_script(path) -> dict[int, list[str]]:
    try:
        with open(path) as f:
            return parse_script(f.read())
    except FileNotFoundError:
        raise ConfigError(f"script file not found: {path}") from None


def _csv_cell(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, list):
        return ";".join("inf" if v is None else _csv_cell(v) for v in value)
    if value is None:
        return "inf"
    return str(value)


class TraceRecorder:
    """Bus sink that buffers every envelope for per-topic CSV export."""

    def __init__(self):
        self.rows: dict[str, list[tuple[int, dict]]] = {
            topic: [] for topic in bus.WIRE_FIELDS
        }

    def __call__(self, env) -> None:
        self.rows.setdefault(env.topic, []).append(
            (env.tick, payload_to_wire(env.payload))
        )

    def last(self, topic: str):
        rows = self.rows.get(topic)
        return rows[-1] if rows else None

    def write(self, out_dir) -> None:
        os.makedirs(out_dir, exist_ok=True)
        for topic, rows in self.rows.items():
            fields = bus.WIRE_FIELDS.get(topic)
            if fields is None:
                continue
            with open(os.path.join(out_dir, f"{topic}.csv"), "w", newline="") as f:
                writer = csv.writer(f)
                writer.writerow(["tick"] + fields)
                for tick, wire in rows:
                    writer.writerow([tick] + [_csv_cell(wire[k]) for k in fields])


class Simulation:
    """A wired node graph advanced one tick at a time."""

    def __init__(self, cfg: ScenarioConfig, nodes: list[Node], plant: Plant,
                 registry: TopicRegistry):
        self.cfg = cfg
        self.nodes = nodes
        self.plant = plant
        self.registry = registry
        self.tick = 0
        self.after_tick: list = []  # callables (tick) -> None
        self.by_name = {node.name: node for node in nodes}

    def run_tick(self) -> None:
        for node in self.nodes:
            if self.tick % node.period == 0:
                try:
                    node.step(self.tick)
                except Exception as exc:
                    raise NodeError(node.name, exc) from exc
                self.registry.flush()
        for hook in self.after_tick:
            hook(self.tick)
        self.tick += 1

    def run(self, ticks: int | None = None, until=None) -> int:
        """Advance up to `ticks` ticks (config duration when None); stop
        early when `until(sim)` returns true. Returns ticks executed."""
        if ticks is None:
            ticks = self.cfg.ticks
        start = self.tick
        for _ in range(ticks):
            self.run_tick()
            if until is not None and until(self):
                break
        return self.tick - start

    def report(self) -> dict:
        odom_node = self.by_name.get("odom_node")
        odom = odom_node.state.pose if odom_node else self.cfg.start_pose
        truth = self.plant.truth.pose
        estop = self.by_name.get("estop_node")
        return {
            "ticks": self.tick,
            "duration_s": self.tick * self.cfg.dt,
            "final_odom": {"x": odom.x, "y": odom.y, "theta": odom.theta},
            "final_truth": {"x": truth.x, "y": truth.y, "theta": truth.theta},
            "drift": {
                "position": math.hypot(truth.x - odom.x, truth.y - odom.y),
                "heading": abs(normalize_angle(truth.theta - odom.theta)),
            },
            "collided": self.plant.collided,
            "estop_latched": bool(estop.latched) if estop else False,
        }


def build_simulation(
    cfg: ScenarioConfig,
    script: dict[int, list[str]] | None = None,
    inbound_drain=None,
) -> Simulation:
    registry = TopicRegistry()
    registry.declare_defaults()
    plant = Plant(
        world=cfg.world,
        geom=cfg.geom,
        encoder_config=cfg.encoder,
        motor_left=cfg.motor_left,
        motor_right=cfg.motor_right,
        lidar_config=cfg.lidar,
        start_pose=cfg.start_pose,
        dt=cfg.dt,
        seed=cfg.seed,
    )

    nodes: list[Node] = [ScriptTeleopNode(script)]
    if inbound_drain is not None:
        nodes.append(InboundNode(inbound_drain))
    nodes.append(EStopNode(plant))
    nodes.append(TeleConverterNode(cfg.teleop))
    if cfg.mode == "goto":
        nodes.append(
            GoToPoseNode(
                initial_goal=cfg.goto.goal,
                pos_tolerance=cfg.goto.pos_tolerance,
                heading_tolerance=cfg.goto.heading_tolerance,
                params=cfg.goto.params,
            )
        )
    nodes.append(WheelSpeedNode(cfg.geom, v_wheel_max=cfg.wheel_speed_limit))
    nodes.append(
        ControllerNode(
            kind=cfg.controller_kind,
            gains=cfg.gains,
            table=cfg.table,
            encoder_config=cfg.encoder,
            period=cfg.control_period,
        )
    )
    nodes.append(LaunchpadNode(plant))
    nodes.append(OdomNode(cfg.encoder, cfg.geom, initial_pose=cfg.start_pose))
    if cfg.lidar_enabled or cfg.mode == "map":
        scan_period = max(1, round(1.0 / (cfg.lidar.rate_hz * cfg.dt)))
        nodes.append(LidarNode(plant, period=scan_period))
    if cfg.mode == "map":
        grid = OccupancyGrid.from_world(
            cfg.world,
            cfg.mapping.resolution,
            l_min=cfg.mapping.l_min,
            l_max=cfg.mapping.l_max,
        )
        snapshot_period = max(1, round(cfg.mapping.snapshot_period_s / cfg.dt))
        nodes.append(
            MapperNode(
                grid,
                cfg=cfg.mapping.config,
                pose_source=cfg.mapping.pose_source,
                snapshot_period=snapshot_period,
            )
        )

    for node in nodes:
        node.wire(registry)
    return Simulation(cfg, nodes, plant, registry)
