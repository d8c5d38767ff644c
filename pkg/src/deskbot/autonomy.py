"""Reactive go-to-pose control and log-odds occupancy grid mapping."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from .kinematics import Pose2D, Twist2D, normalize_angle
from .plant import World

UNKNOWN_GRAY = 205
FREE_GRAY = 254
OCCUPIED_GRAY = 0


@dataclass(frozen=True)
class GoalSpec:
    goal: Pose2D
    pos_tolerance: float = 0.05
    heading_tolerance: float = 0.1

    def __post_init__(self):
        if self.pos_tolerance <= 0 or self.heading_tolerance <= 0:
            raise ValueError("tolerances must be positive")


@dataclass(frozen=True)
class GoToPoseParams:
    k_bearing: float = 2.0
    k_distance: float = 0.5
    bearing_gate: float = math.pi / 6
    v_max: float = 0.3
    omega_max: float = 1.5


def go_to_pose(
    current: Pose2D, spec: GoalSpec, params: GoToPoseParams = GoToPoseParams()
) -> Twist2D:
    """Three-phase reactive controller toward a goal pose.

    Far from the goal: turn toward it (omega proportional to bearing
    error) and drive forward only once the bearing error is inside the
    gate, speed proportional to distance. Inside position tolerance:
    rotate in place onto the goal heading. Inside both tolerances: stop.
    Never commands reverse translation.
    """
    dx = spec.goal.x - current.x
    dy = spec.goal.y - current.y
    distance = math.hypot(dx, dy)
    if distance > spec.pos_tolerance:
        bearing = normalize_angle(math.atan2(dy, dx) - current.theta)
        omega = max(-params.omega_max, min(params.omega_max, params.k_bearing * bearing))
        if abs(bearing) > params.bearing_gate:
            v = 0.0
        else:
            v = min(params.v_max, params.k_distance * distance)
        return Twist2D(vx=v, vy=0.0, omega=omega)
    heading_error = normalize_angle(spec.goal.theta - current.theta)
    if abs(heading_error) > spec.heading_tolerance:
        omega = max(
            -params.omega_max, min(params.omega_max, params.k_bearing * heading_error)
        )
        return Twist2D(vx=0.0, vy=0.0, omega=omega)
    return Twist2D()


def goal_reached(current: Pose2D, spec: GoalSpec) -> bool:
    return (
        math.hypot(spec.goal.x - current.x, spec.goal.y - current.y)
        <= spec.pos_tolerance
        and abs(normalize_angle(spec.goal.theta - current.theta))
        <= spec.heading_tolerance
    )


@dataclass(frozen=True)
class MappingConfig:
    """Log-odds increments and classification thresholds."""

    l_occ: float = 0.85
    l_free: float = -0.4
    occ_threshold: float = 2.0
    free_threshold: float = -2.0

    def __post_init__(self):
        if self.l_occ <= 0 or self.l_free >= 0:
            raise ValueError("l_occ must be positive and l_free negative")


class OccupancyGrid:
    """Log-odds occupancy grid. Cells start unknown (0) and are clamped to
    [l_min, l_max]; cells[row, col] with row 0 at the minimum y edge."""

    def __init__(
        self,
        resolution: float,
        origin: tuple[float, float],
        width: int,
        height: int,
        l_min: float = -10.0,
        l_max: float = 10.0,
    ):
        if resolution <= 0:
            raise ValueError("resolution must be positive")
        if width < 1 or height < 1:
            raise ValueError("grid must be at least 1x1")
        if l_min >= 0 or l_max <= 0:
            raise ValueError("clamp bounds must bracket zero")
        self.resolution = resolution
        self.origin = (float(origin[0]), float(origin[1]))
        self.width = width
        self.height = height
        self.l_min = l_min
        self.l_max = l_max
        self.cells = np.zeros((height, width), dtype=float)

    @classmethod
    def from_world(cls, world: World, resolution: float, **kwargs) -> "OccupancyGrid":
        xmin, ymin, xmax, ymax = world.bounds
        return cls(
            resolution=resolution,
            origin=(xmin, ymin),
            width=math.ceil((xmax - xmin) / resolution),
            height=math.ceil((ymax - ymin) / resolution),
            **kwargs,
        )

    def world_to_cell(self, x: float, y: float) -> tuple[int, int]:
        """(col, row) of the cell containing the point; may lie off-grid."""
        return (
            math.floor((x - self.origin[0]) / self.resolution),
            math.floor((y - self.origin[1]) / self.resolution),
        )

    def contains_cell(self, col: int, row: int) -> bool:
        return 0 <= col < self.width and 0 <= row < self.height


def _clip_to_box(p0, p1, xmin, ymin, xmax, ymax):
    """Liang-Barsky clip of segment p0->p1 to the box; None if outside."""
    x0, y0 = p0
    x1, y1 = p1
    dx, dy = x1 - x0, y1 - y0
    t0, t1 = 0.0, 1.0
    for p, q in (
        (-dx, x0 - xmin),
        (dx, xmax - x0),
        (-dy, y0 - ymin),
        (dy, ymax - y0),
    ):
        if p == 0:
            if q < 0:
                return None
            continue
        r = q / p
        if p < 0:
            if r > t1:
                return None
            t0 = max(t0, r)
        else:
            if r < t0:
                return None
            t1 = min(t1, r)
    return ((x0 + t0 * dx, y0 + t0 * dy), (x0 + t1 * dx, y0 + t1 * dy))


def ray_cells(
    grid: OccupancyGrid, start: tuple[float, float], end: tuple[float, float]
) -> list[tuple[int, int]]:
    """Cells (col, row) a ray traverses, in order, each exactly once.

    The segment is clipped to the grid extent first, so off-grid
    endpoints are safe; an entirely off-grid ray yields no cells.
    """
    xmin, ymin = grid.origin
    xmax = xmin + grid.width * grid.resolution
    ymax = ymin + grid.height * grid.resolution
    # shrink the far edge slightly so clipped endpoints index a real cell
    edge = grid.resolution * 1e-6
    clipped = _clip_to_box(start, end, xmin, ymin, xmax - edge, ymax - edge)
    if clipped is None:
        return []
    (x0, y0), (x1, y1) = clipped
    c0 = grid.world_to_cell(x0, y0)
    c1 = grid.world_to_cell(x1, y1)
    return _bresenham(c0, c1)


def _bresenham(c0: tuple[int, int], c1: tuple[int, int]) -> list[tuple[int, int]]:
    x0, y0 = c0
    x1, y1 = c1
    dx = abs(x1 - x0)
    dy = -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    cells = []
    while True:
        cells.append((x0, y0))
        if x0 == x1 and y0 == y1:
            return cells
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x0 += sx
        if e2 <= dx:
            err += dx
            y0 += sy


def grid_update(
    grid: OccupancyGrid,
    pose: Pose2D,
    ranges,
    max_range: float,
    cfg: MappingConfig = MappingConfig(),
) -> None:
    """Fuse one scan into the grid.

    Beam i points at pose.theta + 2*pi*i/len(ranges). Cells along each
    beam up to the return (or max_range for misses) take the free
    increment; the return cell takes the occupied increment unless the
    endpoint fell outside the grid. Increments are batched per scan, then
    clamped.
    """
    ranges = np.asarray(ranges, dtype=float)
    n = len(ranges)
    free_cols: list[int] = []
    free_rows: list[int] = []
    occ_cols: list[int] = []
    occ_rows: list[int] = []
    start = (pose.x, pose.y)
    xmin, ymin = grid.origin
    xmax = xmin + grid.width * grid.resolution
    ymax = ymin + grid.height * grid.resolution
    for i in range(n):
        r = ranges[i]
        hit = math.isfinite(r)
        reach = min(r, max_range) if hit else max_range
        angle = pose.theta + 2.0 * math.pi * i / n
        end = (
            pose.x + reach * math.cos(angle),
            pose.y + reach * math.sin(angle),
        )
        cells = ray_cells(grid, start, end)
        if not cells:
            continue
        # closed bounds: a return exactly on the far grid edge belongs to
        # the last cell, not off-grid
        endpoint_on_grid = xmin <= end[0] <= xmax and ymin <= end[1] <= ymax
        if hit and endpoint_on_grid:
            *free_part, last = cells
            occ_cols.append(last[0])
            occ_rows.append(last[1])
        else:
            free_part = cells
        free_cols.extend(c for c, _ in free_part)
        free_rows.extend(rw for _, rw in free_part)
    if free_cols:
        np.add.at(grid.cells, (np.array(free_rows), np.array(free_cols)), cfg.l_free)
    if occ_cols:
        np.add.at(grid.cells, (np.array(occ_rows), np.array(occ_cols)), cfg.l_occ)
    np.clip(grid.cells, grid.l_min, grid.l_max, out=grid.cells)


def classify_cells(grid: OccupancyGrid, cfg: MappingConfig) -> np.ndarray:
    """Gray level per cell: occupied 0, free 254, unknown 205."""
    gray = np.full(grid.cells.shape, UNKNOWN_GRAY, dtype=np.uint8)
    gray[grid.cells > cfg.occ_threshold] = OCCUPIED_GRAY
    gray[grid.cells < cfg.free_threshold] = FREE_GRAY
    return gray


def export_map(grid: OccupancyGrid, path, cfg: MappingConfig = MappingConfig()) -> None:
    """Write a binary PGM (P5) plus a small text sidecar.

    Image row 0 is the top of the map (maximum y), matching the usual
    image convention. The sidecar (same name, .yaml) records resolution,
    origin and thresholds.
    """
    gray = np.flipud(classify_cells(grid, cfg))
    header = f"P5\n{grid.width} {grid.height}\n255\n".encode("ascii")
    with open(path, "wb") as f:
        f.write(header)
        f.write(gray.tobytes())
    sidecar = os.path.splitext(os.fspath(path))[0] + ".yaml"
    with open(sidecar, "w") as f:
        f.write(f"image: {os.path.basename(os.fspath(path))}\n")
        f.write(f"resolution: {grid.resolution}\n")
        f.write(f"origin: [{grid.origin[0]}, {grid.origin[1]}, 0.0]\n")
        f.write(f"occupied_log_odds: {cfg.occ_threshold}\n")
        f.write(f"free_log_odds: {cfg.free_threshold}\n")
        f.write(f"width: {grid.width}\n")
        f.write(f"height: {grid.height}\n")
