// Session state: everything the renderer needs, updated frame by frame.

import {
  EncoderData,
  Frame,
  HelloData,
  MapData,
  PairData,
  PoseData,
  ScanData,
} from "./protocol";

export const TRAIL_CAPACITY = 2000;
export const SERIES_SECONDS = 10;

export class RingBuffer<T> {
  private items: T[] = [];
  constructor(readonly capacity: number) {}

  push(item: T): void {
    this.items.push(item);
    if (this.items.length > this.capacity) this.items.shift();
  }

  get length(): number {
    return this.items.length;
  }

  toArray(): T[] {
    return this.items.slice();
  }

  clear(): void {
    this.items = [];
  }
}

export interface SpeedSample {
  tick: number;
  target: number | null; // held wheel target (mean of both wheels)
  measured: number | null; // encoder-derived speed, same tick
}

export type Status = "connecting" | "connected" | "disconnected";

export class SessionState {
  status: Status = "connecting";
  hello: HelloData | null = null;
  odom: PoseData | null = null;
  truth: PoseData | null = null;
  scan: ScanData | null = null;
  scanPose: PoseData | null = null; // odom pose when the scan arrived
  grid: MapData | null = null;
  goal: { x: number; y: number; theta: number } | null = null;
  estop = false;
  led = "";
  dropped = 0;
  lastTick = -1;
  readonly trail = new RingBuffer<[number, number]>(TRAIL_CAPACITY);

  private lastTarget: number | null = null;
  private series: SpeedSample[] = [];

  get speedSeries(): SpeedSample[] {
    return this.series;
  }

  /** Integrates one bridge frame. Unknown topics are ignored. */
  apply(frame: Frame): void {
    switch (frame.topic) {
      case "_hello":
        this.hello = frame.data as unknown as HelloData;
        this.trail.clear();
        this.series = [];
        break;
      case "_bridge":
        this.dropped += (frame.data as { dropped: number }).dropped;
        break;
      case "odom": {
        const pose = frame.data as unknown as PoseData;
        this.odom = pose;
        this.trail.push([pose.x, pose.y]);
        break;
      }
      case "truth":
        this.truth = frame.data as unknown as PoseData;
        break;
      case "scan":
        this.scan = frame.data as unknown as ScanData;
        this.scanPose = this.odom;
        break;
      case "map":
        this.grid = frame.data as unknown as MapData;
        break;
      case "goal":
        this.goal = frame.data as unknown as { x: number; y: number; theta: number };
        break;
      case "estop":
        this.estop = (frame.data as { value: boolean }).value;
        break;
      case "led_status":
        this.led = (frame.data as { state: string }).state;
        break;
      case "wheel_target": {
        const pair = frame.data as unknown as PairData;
        this.lastTarget = (pair.left + pair.right) / 2;
        break;
      }
      case "encoder": {
        const enc = frame.data as unknown as EncoderData;
        const tpm = this.hello?.ticks_per_meter;
        const measured = tpm
          ? (enc.left_ticks + enc.right_ticks) / 2 / enc.dt / tpm
          : null;
        this.series.push({ tick: frame.tick, target: this.lastTarget, measured });
        const dt = this.hello?.dt ?? 0.02;
        const keep = Math.round(SERIES_SECONDS / dt);
        if (this.series.length > keep) {
          this.series.splice(0, this.series.length - keep);
        }
        break;
      }
    }
    if (frame.tick >= 0) this.lastTick = frame.tick;
  }
}
