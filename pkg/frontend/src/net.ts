// WebSocket session with automatic reconnect.

import { Frame, parseFrame, subscribeFrame, SUBSCRIBED_TOPICS } from "./protocol";

export interface SocketLike {
  send(data: string): void;
  close(): void;
  onopen: ((ev?: unknown) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

const BACKOFF_START_MS = 250;
const BACKOFF_MAX_MS = 4000;

export class TeleopClient {
  onframe: (frame: Frame) => void = () => {};
  onstatus: (connected: boolean) => void = () => {};

  private socket: SocketLike | null = null;
  private backoff = BACKOFF_START_MS;
  private timer: ReturnType<typeof setTimeout> | null = null;
  private closed = false;
  private _connected = false;

  constructor(
    readonly url: string,
    private readonly factory: SocketFactory = (u) =>
      new WebSocket(u) as unknown as SocketLike,
  ) {}

  get connected(): boolean {
    return this._connected;
  }

  get retryDelay(): number {
    return this.backoff;
  }

  start(): void {
    this.closed = false;
    this.open();
  }

  stop(): void {
    this.closed = true;
    if (this.timer !== null) clearTimeout(this.timer);
    this.socket?.close();
  }

  /** Returns false (and drops the frame) when not connected: stale
      teleop commands must never be queued for later delivery. */
  send(payload: string): boolean {
    if (!this._connected || this.socket === null) return false;
    this.socket.send(payload);
    return true;
  }

  private open(): void {
    const sock = this.factory(this.url);
    this.socket = sock;
    sock.onopen = () => {
      this._connected = true;
      this.backoff = BACKOFF_START_MS;
      sock.send(subscribeFrame(SUBSCRIBED_TOPICS));
      this.onstatus(true);
    };
    sock.onmessage = (ev) => {
      const frame = parseFrame(String(ev.data));
      if (frame === null) {
        console.warn("dropping malformed frame", ev.data);
        return;
      }
      this.onframe(frame);
    };
    sock.onerror = () => {
      /* onclose always follows */
    };
    sock.onclose = () => {
      const was = this._connected;
      this._connected = false;
      if (was) this.onstatus(false);
      if (this.closed) return;
      this.timer = setTimeout(() => this.open(), this.backoff);
      this.backoff = Math.min(this.backoff * 2, BACKOFF_MAX_MS);
    };
  }
}
