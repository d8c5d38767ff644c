// Canvas rendering. All drawing goes through one world->pixel transform so
// walls, scans, trail and robot stay geometrically consistent; rendering is
// a pure function of the session state.

import { PoseData, ScanData, WorldDef } from "./protocol";
import { SessionState, SpeedSample } from "./state";

export interface Viewport {
  scale: number; // px per meter
  offsetX: number; // px of world x = 0
  offsetY: number; // px of world y = 0 (y axis flipped)
}

const MARGIN_PX = 20;

export function fitViewport(
  bounds: [number, number, number, number],
  width: number,
  height: number,
): Viewport {
  const [minX, minY, maxX, maxY] = bounds;
  const scale = Math.min(
    (width - 2 * MARGIN_PX) / (maxX - minX),
    (height - 2 * MARGIN_PX) / (maxY - minY),
  );
  // center the world in the canvas, y up
  const midX = (minX + maxX) / 2;
  const midY = (minY + maxY) / 2;
  return {
    scale,
    offsetX: width / 2 - midX * scale,
    offsetY: height / 2 + midY * scale,
  };
}

export function toPixel(vp: Viewport, x: number, y: number): [number, number] {
  return [vp.offsetX + x * vp.scale, vp.offsetY - y * vp.scale];
}

export function toWorld(vp: Viewport, px: number, py: number): [number, number] {
  return [(px - vp.offsetX) / vp.scale, (vp.offsetY - py) / vp.scale];
}

/** World-frame lidar endpoints for the beams that returned. */
export function scanPoints(pose: PoseData, scan: ScanData): [number, number][] {
  const pts: [number, number][] = [];
  const n = scan.ranges.length;
  for (let i = 0; i < n; i++) {
    const r = scan.ranges[i];
    if (r === null || !Number.isFinite(r)) continue;
    const ang = pose.theta + (2 * Math.PI * i) / n;
    pts.push([pose.x + r * Math.cos(ang), pose.y + r * Math.sin(ang)]);
  }
  return pts;
}

// colors chosen once so every render issues identical styles
const C = {
  background: "#fafafa",
  wall: "#222222",
  cliff: "rgba(220, 80, 40, 0.25)",
  gridOccupied: "#555555",
  gridFree: "#ffffff",
  gridUnknown: "#d8d8d8",
  trail: "#9dbfdc",
  robot: "#2060c0",
  robotEstop: "#c03030",
  scan: "#d04040",
  goal: "#20a050",
  truth: "rgba(40, 160, 60, 0.7)",
};

export function render(
  ctx: CanvasRenderingContext2D,
  state: SessionState,
  width: number,
  height: number,
): void {
  ctx.fillStyle = C.background;
  ctx.fillRect(0, 0, width, height);
  const world = state.hello?.world;
  if (!world) return;
  const vp = fitViewport(world.bounds, width, height);

  if (state.grid) drawGrid(ctx, vp, state);
  drawWorld(ctx, vp, world);
  drawTrail(ctx, vp, state);
  if (state.scan && state.scanPose) {
    ctx.fillStyle = C.scan;
    for (const [x, y] of scanPoints(state.scanPose, state.scan)) {
      const [px, py] = toPixel(vp, x, y);
      ctx.fillRect(px - 1, py - 1, 2, 2);
    }
  }
  if (state.goal) drawGoal(ctx, vp, state.goal);
  if (state.truth && state.odom) {
    // small cross where the simulator says the robot really is
    const [px, py] = toPixel(vp, state.truth.x, state.truth.y);
    ctx.strokeStyle = C.truth;
    ctx.lineWidth = 1;
    ctx.beginPath();
    ctx.moveTo(px - 4, py);
    ctx.lineTo(px + 4, py);
    ctx.moveTo(px, py - 4);
    ctx.lineTo(px, py + 4);
    ctx.stroke();
  }
  if (state.odom) drawRobot(ctx, vp, state.odom, state.estop, state.hello!.track_width);
  if (state.estop) {
    ctx.fillStyle = "rgba(200, 40, 40, 0.18)";
    ctx.fillRect(0, 0, width, height);
  }
}

function drawWorld(ctx: CanvasRenderingContext2D, vp: Viewport, world: WorldDef): void {
  ctx.fillStyle = C.cliff;
  for (const poly of world.cliffs) {
    ctx.beginPath();
    poly.forEach(([x, y], i) => {
      const [px, py] = toPixel(vp, x, y);
      i === 0 ? ctx.moveTo(px, py) : ctx.lineTo(px, py);
    });
    ctx.closePath();
    ctx.fill();
  }
  ctx.strokeStyle = C.wall;
  ctx.lineWidth = 2;
  ctx.beginPath();
  for (const wall of world.walls) {
    wall.forEach(([x, y], i) => {
      const [px, py] = toPixel(vp, x, y);
      i === 0 ? ctx.moveTo(px, py) : ctx.lineTo(px, py);
    });
  }
  ctx.stroke();
}

function drawGrid(ctx: CanvasRenderingContext2D, vp: Viewport, state: SessionState): void {
  const g = state.grid!;
  const cellPx = g.resolution * vp.scale;
  for (let row = 0; row < g.height; row++) {
    for (let col = 0; col < g.width; col++) {
      const ch = g.cells[row * g.width + col];
      if (ch === ".") continue; // unknown: leave the background
      ctx.fillStyle = ch === "#" ? C.gridOccupied : C.gridFree;
      const [px, py] = toPixel(
        vp,
        g.origin_x + col * g.resolution,
        g.origin_y + (row + 1) * g.resolution,
      );
      ctx.fillRect(px, py, cellPx + 0.5, cellPx + 0.5);
    }
  }
}

function drawTrail(ctx: CanvasRenderingContext2D, vp: Viewport, state: SessionState): void {
  const points = state.trail.toArray();
  if (points.length < 2) return;
  ctx.strokeStyle = C.trail;
  ctx.lineWidth = 1;
  ctx.beginPath();
  points.forEach(([x, y], i) => {
    const [px, py] = toPixel(vp, x, y);
    i === 0 ? ctx.moveTo(px, py) : ctx.lineTo(px, py);
  });
  ctx.stroke();
}

function drawRobot(
  ctx: CanvasRenderingContext2D,
  vp: Viewport,
  pose: PoseData,
  estop: boolean,
  trackWidth: number,
): void {
  // arrow polygon, nose along +x in the robot frame
  const L = trackWidth * 0.7;
  const W = trackWidth * 0.45;
  const body: [number, number][] = [
    [L, 0],
    [-L * 0.6, W],
    [-L * 0.3, 0],
    [-L * 0.6, -W],
  ];
  const cos = Math.cos(pose.theta);
  const sin = Math.sin(pose.theta);
  ctx.fillStyle = estop ? C.robotEstop : C.robot;
  ctx.beginPath();
  body.forEach(([bx, by], i) => {
    const [px, py] = toPixel(
      vp,
      pose.x + bx * cos - by * sin,
      pose.y + bx * sin + by * cos,
    );
    i === 0 ? ctx.moveTo(px, py) : ctx.lineTo(px, py);
  });
  ctx.closePath();
  ctx.fill();
}

function drawGoal(
  ctx: CanvasRenderingContext2D,
  vp: Viewport,
  goal: { x: number; y: number; theta: number },
): void {
  const [px, py] = toPixel(vp, goal.x, goal.y);
  ctx.strokeStyle = C.goal;
  ctx.lineWidth = 2;
  ctx.beginPath();
  ctx.arc(px, py, 6, 0, 2 * Math.PI);
  ctx.stroke();
  ctx.beginPath();
  ctx.moveTo(px, py);
  ctx.lineTo(px + 12 * Math.cos(goal.theta), py - 12 * Math.sin(goal.theta));
  ctx.stroke();
}

/** Target-vs-measured wheel speed over the last 10 s. */
export function drawSparkline(
  ctx: CanvasRenderingContext2D,
  series: SpeedSample[],
  width: number,
  height: number,
): void {
  ctx.fillStyle = "#ffffff";
  ctx.fillRect(0, 0, width, height);
  if (series.length < 2) return;
  const vmax = Math.max(
    0.1,
    ...series.map((s) => Math.max(Math.abs(s.target ?? 0), Math.abs(s.measured ?? 0))),
  );
  const t0 = series[0].tick;
  const t1 = series[series.length - 1].tick;
  const sx = (tick: number) => ((tick - t0) / Math.max(1, t1 - t0)) * width;
  const sy = (v: number) => height / 2 - (v / vmax) * (height / 2 - 2);
  ctx.strokeStyle = "#cccccc";
  ctx.beginPath();
  ctx.moveTo(0, sy(0));
  ctx.lineTo(width, sy(0));
  ctx.stroke();
  for (const [key, color] of [
    ["target", "#888888"],
    ["measured", "#2060c0"],
  ] as const) {
    ctx.strokeStyle = color;
    ctx.lineWidth = 1;
    ctx.beginPath();
    let pen = false;
    for (const s of series) {
      const v = s[key];
      if (v === null) {
        pen = false;
        continue;
      }
      pen ? ctx.lineTo(sx(s.tick), sy(v)) : ctx.moveTo(sx(s.tick), sy(v));
      pen = true;
    }
    ctx.stroke();
  }
}
