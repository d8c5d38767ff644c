import { describe, expect, it } from "vitest";

import { Frame } from "../src/protocol";
import { SessionState, TRAIL_CAPACITY } from "../src/state";

const HELLO: Frame = {
  topic: "_hello",
  tick: -1,
  data: {
    world: { name: "w", bounds: [0, 0, 4, 4], walls: [], cliffs: [] },
    dt: 0.02,
    mode: "teleop",
    track_width: 0.2,
    ticks_per_meter: 4793.7,
    speed: 1.0,
  },
};

function odomFrame(tick: number, x: number): Frame {
  return {
    topic: "odom",
    tick,
    data: { x, y: 0, theta: 0, vx: 0, vy: 0, omega: 0 },
  };
}

describe("SessionState", () => {
  it("stores hello and resets history", () => {
    const s = new SessionState();
    s.apply(odomFrame(0, 1));
    s.apply(HELLO);
    expect(s.hello!.mode).toBe("teleop");
    expect(s.trail.length).toBe(0);
  });

  it("tracks odom and keeps the trail bounded", () => {
    const s = new SessionState();
    s.apply(HELLO);
    for (let i = 0; i < TRAIL_CAPACITY + 500; i++) {
      s.apply(odomFrame(i, i * 0.001));
    }
    expect(s.trail.length).toBe(TRAIL_CAPACITY);
    const pts = s.trail.toArray();
    // oldest 500 points fell off the front
    expect(pts[0][0]).toBeCloseTo(0.5, 9);
    expect(s.lastTick).toBe(TRAIL_CAPACITY + 499);
  });

  it("sets the estop flag on the very frame it arrives", () => {
    const s = new SessionState();
    s.apply({ topic: "estop", tick: 3, data: { value: true } });
    expect(s.estop).toBe(true);
    s.apply({ topic: "estop", tick: 4, data: { value: false } });
    expect(s.estop).toBe(false);
  });

  it("snapshots the pose a scan was taken at", () => {
    const s = new SessionState();
    s.apply(HELLO);
    s.apply(odomFrame(9, 1.5));
    s.apply({ topic: "scan", tick: 9, data: { ranges: [1, null], max_range: 8 } });
    s.apply(odomFrame(10, 1.6)); // robot moved on; scan pose must not
    expect(s.scanPose!.x).toBe(1.5);
    expect(s.scan!.ranges).toEqual([1, null]);
  });

  it("accumulates the bridge drop counter", () => {
    const s = new SessionState();
    s.apply({ topic: "_bridge", tick: -1, data: { dropped: 3 } });
    s.apply({ topic: "_bridge", tick: -1, data: { dropped: 2 } });
    expect(s.dropped).toBe(5);
  });

  it("aligns target and measured speed by tick", () => {
    const s = new SessionState();
    s.apply(HELLO);
    s.apply({ topic: "wheel_target", tick: 5, data: { left: 0.3, right: 0.3 } });
    // 0.3 m/s for dt=0.02 at 4793.7 ticks/m -> ~28.76 ticks per tick
    const ticks = 0.3 * 0.02 * 4793.7;
    s.apply({
      topic: "encoder",
      tick: 5,
      data: { left_ticks: ticks, right_ticks: ticks, dt: 0.02 },
    });
    const sample = s.speedSeries[0];
    expect(sample.tick).toBe(5);
    expect(sample.target).toBeCloseTo(0.3, 12);
    expect(sample.measured).toBeCloseTo(0.3, 9);
  });

  it("keeps only the last 10 seconds of speed samples", () => {
    const s = new SessionState();
    s.apply(HELLO); // dt = 0.02 -> 500 samples
    for (let t = 0; t < 700; t++) {
      s.apply({
        topic: "encoder",
        tick: t,
        data: { left_ticks: 0, right_ticks: 0, dt: 0.02 },
      });
    }
    expect(s.speedSeries.length).toBe(500);
    expect(s.speedSeries[0].tick).toBe(200);
  });

  it("reports no measured speed before hello provides the constant", () => {
    const s = new SessionState();
    s.apply({
      topic: "encoder",
      tick: 0,
      data: { left_ticks: 10, right_ticks: 10, dt: 0.02 },
    });
    expect(s.speedSeries[0].measured).toBeNull();
  });

  it("ignores unknown topics", () => {
    const s = new SessionState();
    s.apply({ topic: "mystery", tick: 1, data: { a: 1 } });
    expect(s.lastTick).toBe(1);
  });
});
