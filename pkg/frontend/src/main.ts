// Entry point: wires the socket, keyboard and canvas together.

import { TeleopClient } from "./net";
import { estopResetFrame, goalFrame, teleopKeyFrame } from "./protocol";
import { SessionState } from "./state";
import { drawSparkline, fitViewport, render, toWorld } from "./view";
import { KeyThrottle } from "./throttle";

const state = new SessionState();
const client = new TeleopClient(`ws://${location.host}/`);
const throttle = new KeyThrottle();

const scene = document.getElementById("scene") as HTMLCanvasElement;
const spark = document.getElementById("spark") as HTMLCanvasElement;
const statusEl = document.getElementById("status")!;
const lampEl = document.getElementById("lamp")!;
const poseEl = document.getElementById("pose")!;
const dropsEl = document.getElementById("drops")!;
const warnEl = document.getElementById("warning")!;
const resetBtn = document.getElementById("reset") as HTMLButtonElement;

let warnTimer: ReturnType<typeof setTimeout> | null = null;

function warn(message: string): void {
  warnEl.textContent = message;
  if (warnTimer !== null) clearTimeout(warnTimer);
  warnTimer = setTimeout(() => (warnEl.textContent = ""), 1500);
}

client.onframe = (frame) => {
  if (frame.topic === "_error") {
    console.warn("bridge:", (frame.data as { message: string }).message);
    return;
  }
  state.apply(frame);
};

client.onstatus = (connected) => {
  state.status = connected ? "connected" : "disconnected";
};

window.addEventListener("keydown", (ev) => {
  if (ev.repeat && ev.key !== "w" && ev.key !== "a" && ev.key !== "s" && ev.key !== "d") {
    return;
  }
  const key = ev.key === " " ? " " : ev.key.toLowerCase();
  if (!throttle.admit(key, performance.now())) return;
  ev.preventDefault();
  if (!client.send(teleopKeyFrame(key))) {
    warn("not connected — key dropped");
  }
});

resetBtn.addEventListener("click", () => {
  if (!client.send(estopResetFrame())) warn("not connected");
});

// click-to-set-goal (goto mode): press sets position, drag sets heading
let press: [number, number] | null = null;
scene.addEventListener("mousedown", (ev) => {
  if (state.hello?.mode !== "goto") return;
  press = [ev.offsetX, ev.offsetY];
});
scene.addEventListener("mouseup", (ev) => {
  if (press === null || !state.hello) return;
  const vp = fitViewport(state.hello.world.bounds, scene.width, scene.height);
  const [gx, gy] = toWorld(vp, press[0], press[1]);
  const dx = ev.offsetX - press[0];
  const dy = ev.offsetY - press[1];
  const theta = Math.hypot(dx, dy) > 4 ? Math.atan2(-dy, dx) : 0.0;
  press = null;
  if (!client.send(goalFrame(gx, gy, theta))) warn("not connected — goal dropped");
});

function tick(): void {
  const ctx = scene.getContext("2d")!;
  render(ctx, state, scene.width, scene.height);
  drawSparkline(spark.getContext("2d")!, state.speedSeries, spark.width, spark.height);

  statusEl.textContent = state.status;
  statusEl.className = state.status;
  lampEl.className = state.estop ? "lamp red" : "lamp green";
  dropsEl.textContent = state.dropped ? `dropped ${state.dropped}` : "";
  if (state.odom) {
    poseEl.textContent =
      `x ${state.odom.x.toFixed(3)}  y ${state.odom.y.toFixed(3)}  ` +
      `θ ${state.odom.theta.toFixed(2)}  tick ${state.lastTick}`;
  }
  requestAnimationFrame(tick);
}

client.start();
requestAnimationFrame(tick);
