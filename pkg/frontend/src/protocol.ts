// Wire types for the bridge: every frame is {topic, tick, data}.

export interface WorldDef {
  name: string;
  bounds: [number, number, number, number]; // min_x, min_y, max_x, max_y
  walls: [number, number][][];
  cliffs: [number, number][][];
}

export interface HelloData {
  world: WorldDef;
  dt: number;
  mode: string;
  track_width: number;
  ticks_per_meter: number;
  speed: number;
}

export interface PoseData {
  x: number;
  y: number;
  theta: number;
  vx: number;
  vy: number;
  omega: number;
}

export interface ScanData {
  ranges: (number | null)[]; // null = no return within max_range
  max_range: number;
}

export interface PairData {
  left: number;
  right: number;
}

export interface EncoderData {
  left_ticks: number;
  right_ticks: number;
  dt: number;
}

export interface MapData {
  width: number;
  height: number;
  resolution: number;
  origin_x: number;
  origin_y: number;
  cells: string; // row-major, '#' occupied / ' ' free / '.' unknown
}

export interface Frame {
  topic: string;
  tick: number;
  data: Record<string, unknown>;
}

export function parseFrame(raw: string): Frame | null {
  try {
    const obj = JSON.parse(raw);
    if (typeof obj !== "object" || obj === null) return null;
    if (typeof obj.topic !== "string" || typeof obj.tick !== "number") return null;
    return obj as Frame;
  } catch {
    return null; // malformed frames are logged by the caller, never fatal
  }
}

export const SUBSCRIBED_TOPICS = [
  "odom",
  "scan",
  "wheel_target",
  "encoder",
  "estop",
  "led_status",
  "truth",
  "map",
  "goal",
];

export function teleopKeyFrame(key: string): string {
  return JSON.stringify({ topic: "teleop_key", data: { key } });
}

export function estopResetFrame(): string {
  return JSON.stringify({ topic: "estop_reset", data: {} });
}

export function goalFrame(x: number, y: number, theta: number): string {
  return JSON.stringify({ topic: "goal", data: { x, y, theta } });
}

export function subscribeFrame(topics: string[]): string {
  return JSON.stringify({ topic: "subscribe", data: { topics } });
}
