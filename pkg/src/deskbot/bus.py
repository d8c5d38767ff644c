"""Single-threaded pub/sub message bus with typed topics.

Publishing appends an envelope to a pending FIFO; flush() delivers pending
envelopes to subscribers in publish order, subscribers in registration
order. The scheduler flushes after every node slot, so messages published
during a tick are seen by later nodes on the same tick. There is no
threading anywhere in the bus: a run is a pure function of config, script
and seed.

The module also owns the wire mapping (payload dataclass <-> flat dict)
shared by the CSV trace writer and the websocket bridge.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Callable

from .control import PwmPair
from .kinematics import Pose2D, Twist2D
from .odometry import EncoderSample

TELEOP_KEY = "teleop_key"
CMD_VEL = "cmd_vel"
WHEEL_TARGET = "wheel_target"
PWM = "pwm"
ENCODER = "encoder"
ODOM = "odom"
SCAN = "scan"
ESTOP = "estop"
ESTOP_RESET = "estop_reset"
LED_STATUS = "led_status"
GOAL = "goal"
TRUTH = "truth"
MAP = "map"


class BusError(Exception):
    pass


class UndeclaredTopicError(BusError):
    pass


class SchemaMismatchError(BusError):
    pass


class NodeError(Exception):
    """A node raised during its slot; carries the node name."""

    def __init__(self, node_name: str, cause: BaseException):
        super().__init__(f"node {node_name!r} failed: {cause}")
        self.node_name = node_name
        self.cause = cause


@dataclass(frozen=True)
class KeyPress:
    key: str


@dataclass(frozen=True)
class Flag:
    value: bool


@dataclass(frozen=True)
class StatusLed:
    state: str  # "ok" | "estop"


@dataclass(frozen=True)
class WheelTarget:
    left: float
    right: float


@dataclass(frozen=True)
class Odom:
    pose: Pose2D
    twist: Twist2D


@dataclass(frozen=True)
class LidarScan:
    ranges: tuple  # meters; inf for no return
    max_range: float


@dataclass(frozen=True)
class MapSnapshot:
    width: int
    height: int
    resolution: float
    origin_x: float
    origin_y: float
    cells: str  # one char per cell, row 0 first: '.' unknown, ' ' free, '#' occupied


@dataclass(frozen=True)
class Envelope:
    topic: str
    tick: int
    payload: object


# topic -> wire field order, used for CSV headers (empty traces included)
WIRE_FIELDS: dict[str, list[str]] = {
    TELEOP_KEY: ["key"],
    CMD_VEL: ["vx", "vy", "omega"],
    WHEEL_TARGET: ["left", "right"],
    PWM: ["left", "right"],
    ENCODER: ["left_ticks", "right_ticks", "dt"],
    ODOM: ["x", "y", "theta", "vx", "vy", "omega"],
    SCAN: ["ranges", "max_range"],
    ESTOP: ["value"],
    ESTOP_RESET: ["value"],
    LED_STATUS: ["state"],
    GOAL: ["x", "y", "theta"],
    TRUTH: ["x", "y", "theta", "vx", "vy", "omega"],
    MAP: ["width", "height", "resolution", "origin_x", "origin_y", "cells"],
}

# topic -> payload schema; the default declarations for a simulation bus
TOPIC_SCHEMAS: dict[str, type] = {
    TELEOP_KEY: KeyPress,
    CMD_VEL: Twist2D,
    WHEEL_TARGET: WheelTarget,
    PWM: PwmPair,
    ENCODER: EncoderSample,
    ODOM: Odom,
    SCAN: LidarScan,
    ESTOP: Flag,
    ESTOP_RESET: Flag,
    LED_STATUS: StatusLed,
    GOAL: Pose2D,
    TRUTH: Odom,
    MAP: MapSnapshot,
}


class TopicRegistry:
    """Declared topics, their schemas, subscribers and the pending queue."""

    def __init__(self):
        self._schemas: dict[str, type] = {}
        self._subscribers: dict[str, list[Callable[[Envelope], None]]] = {}
        self._pending: deque[Envelope] = deque()
        self.sinks: list[Callable[[Envelope], None]] = []

    def declare(self, topic: str, schema: type) -> None:
        existing = self._schemas.get(topic)
        if existing is not None and existing is not schema:
            raise SchemaMismatchError(
                f"topic {topic!r} already declared with {existing.__name__}"
            )
        self._schemas[topic] = schema
        self._subscribers.setdefault(topic, [])

    def declare_defaults(self) -> None:
        for topic, schema in TOPIC_SCHEMAS.items():
            self.declare(topic, schema)

    def topics(self) -> list[str]:
        return sorted(self._schemas)

    def schema(self, topic: str) -> type:
        try:
            return self._schemas[topic]
        except KeyError:
            raise UndeclaredTopicError(f"topic {topic!r} is not declared") from None

    def subscribe(self, topic: str, callback: Callable[[Envelope], None]) -> None:
        self.schema(topic)  # raises if undeclared
        self._subscribers[topic].append(callback)

    def publish(self, topic: str, payload, tick: int) -> None:
        schema = self.schema(topic)
        if type(payload) is not schema:
            raise SchemaMismatchError(
                f"topic {topic!r} expects {schema.__name__}, "
                f"got {type(payload).__name__}"
            )
        self._pending.append(Envelope(topic=topic, tick=tick, payload=payload))

    def flush(self) -> None:
        """Deliver pending envelopes in publish order. Messages published
        by subscribers during delivery are processed in the same pass."""
        while self._pending:
            env = self._pending.popleft()
            for callback in self._subscribers[env.topic]:
                callback(env)
            for sink in self.sinks:
                sink(env)


def payload_to_wire(payload) -> dict:
    """Flatten a payload dataclass into the JSON/CSV field dict."""
    if isinstance(payload, KeyPress):
        return {"key": payload.key}
    if isinstance(payload, Twist2D):
        return {"vx": payload.vx, "vy": payload.vy, "omega": payload.omega}
    if isinstance(payload, WheelTarget):
        return {"left": payload.left, "right": payload.right}
    if isinstance(payload, PwmPair):
        return {"left": payload.left, "right": payload.right}
    if isinstance(payload, EncoderSample):
        return {
            "left_ticks": payload.delta_ticks_left,
            "right_ticks": payload.delta_ticks_right,
            "dt": payload.dt,
        }
    if isinstance(payload, Odom):
        return {
            "x": payload.pose.x,
            "y": payload.pose.y,
            "theta": payload.pose.theta,
            "vx": payload.twist.vx,
            "vy": payload.twist.vy,
            "omega": payload.twist.omega,
        }
    if isinstance(payload, LidarScan):
        return {
            "ranges": [r if r != float("inf") else None for r in payload.ranges],
            "max_range": payload.max_range,
        }
    if isinstance(payload, Flag):
        return {"value": payload.value}
    if isinstance(payload, StatusLed):
        return {"state": payload.state}
    if isinstance(payload, Pose2D):
        return {"x": payload.x, "y": payload.y, "theta": payload.theta}
    if isinstance(payload, MapSnapshot):
        return {
            "width": payload.width,
            "height": payload.height,
            "resolution": payload.resolution,
            "origin_x": payload.origin_x,
            "origin_y": payload.origin_y,
            "cells": payload.cells,
        }
    raise TypeError(f"no wire mapping for {type(payload).__name__}")


def wire_to_payload(topic: str, data: dict):
    """Parse an inbound wire dict into the topic's payload. Raises
    ValueError on malformed data."""
    schema = TOPIC_SCHEMAS.get(topic)
    if schema is None:
        raise ValueError(f"unknown topic {topic!r}")
    try:
        if schema is KeyPress:
            return KeyPress(key=str(data["key"]))
        if schema is Flag:
            return Flag(value=bool(data.get("value", True)))
        if schema is Pose2D:
            return Pose2D(
                x=float(data["x"]),
                y=float(data["y"]),
                theta=float(data.get("theta", 0.0)),
            )
        if schema is Twist2D:
            return Twist2D(
                vx=float(data.get("vx", 0.0)),
                vy=float(data.get("vy", 0.0)),
                omega=float(data.get("omega", 0.0)),
            )
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed {topic} payload: {exc}") from exc
    raise ValueError(f"topic {topic!r} does not accept inbound data")
