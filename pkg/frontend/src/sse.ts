/** Snapshot event subscription over SSE with backoff reconnect.
 *
 * The EventSource constructor is injectable so reconnect behavior is
 * testable without a browser.
 */

import { backoffDelayMs } from './viewmodel.js';

export interface EventSourceLike {
  onopen: ((ev: unknown) => void) | null;
  onerror: ((ev: unknown) => void) | null;
  addEventListener(type: string, handler: (ev: { data: string }) => void): void;
  close(): void;
}

export type EventSourceFactory = (url: string) => EventSourceLike;

export interface SnapshotEvent {
  readonly cycle_time: string;
}

export class SnapshotStream {
  private source: EventSourceLike | null = null;
  private attempt = 0;
  private closed = false;
  private timer: ReturnType<typeof setTimeout> | null = null;
  lastEventMs: number | null = null;

  constructor(private readonly url: string,
              private readonly onSnapshot: (ev: SnapshotEvent) => void,
              private readonly factory: EventSourceFactory =
                (u) => new EventSource(u) as unknown as EventSourceLike,
              private readonly now: () => number = () => Date.now(),
              private readonly schedule: (fn: () => void, ms: number) =>
                ReturnType<typeof setTimeout> = (fn, ms) => setTimeout(fn, ms)) {}

  connect(): void {
    if (this.closed) return;
    const source = this.factory(this.url);
    this.source = source;
    source.onopen = () => {
      this.attempt = 0;
    };
    source.addEventListener('snapshot', (ev) => {
      this.lastEventMs = this.now();
      this.onSnapshot(JSON.parse(ev.data) as SnapshotEvent);
    });
    source.onerror = () => {
      source.close();
      if (this.closed) return;
      const delay = backoffDelayMs(this.attempt);
      this.attempt += 1;
      this.timer = this.schedule(() => this.connect(), delay);
    };
  }

  close(): void {
    this.closed = true;
    if (this.timer !== null) clearTimeout(this.timer);
    this.source?.close();
  }
}
