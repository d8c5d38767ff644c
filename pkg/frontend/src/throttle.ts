// Keyboard capture: maps keys to teleop frames, one per key per 100 ms.

export const TELEOP_KEYS = new Set(["w", "a", "s", "d", " "]);
export const THROTTLE_MS = 100;

export class KeyThrottle {
  private lastSent = new Map<string, number>();

  constructor(private readonly intervalMs: number = THROTTLE_MS) {}

  /** True when this press should go out on the wire. */
  admit(key: string, nowMs: number): boolean {
    if (!TELEOP_KEYS.has(key)) return false;
    const last = this.lastSent.get(key);
    if (last !== undefined && nowMs - last < this.intervalMs) return false;
    this.lastSent.set(key, nowMs);
    return true;
  }

  reset(): void {
    this.lastSent.clear();
  }
}
