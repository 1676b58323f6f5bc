import { describe, expect, it } from 'vitest';

import { EventSourceLike, SnapshotStream } from '../src/sse.js';

class FakeEventSource implements EventSourceLike {
  onopen: ((ev: unknown) => void) | null = null;
  onerror: ((ev: unknown) => void) | null = null;
  closed = false;
  private handlers = new Map<string, (ev: { data: string }) => void>();

  addEventListener(type: string, handler: (ev: { data: string }) => void): void {
    this.handlers.set(type, handler);
  }

  close(): void {
    this.closed = true;
  }

  emit(type: string, data: string): void {
    this.handlers.get(type)?.({ data });
  }
}

function makeStream() {
  const sources: FakeEventSource[] = [];
  const scheduled: Array<{ fn: () => void; ms: number }> = [];
  const events: string[] = [];
  let now = 1000;
  const stream = new SnapshotStream(
    '/v1/events',
    (ev) => events.push(ev.cycle_time),
    () => {
      const s = new FakeEventSource();
      sources.push(s);
      return s;
    },
    () => now,
    (fn, ms) => {
      scheduled.push({ fn, ms });
      return 0 as unknown as ReturnType<typeof setTimeout>;
    },
  );
  return { stream, sources, scheduled, events, setNow: (t: number) => { now = t; } };
}

describe('SnapshotStream', () => {
  it('one SSE event triggers exactly one callback and stamps lastEventMs', () => {
    const t = makeStream();
    t.stream.connect();
    t.setNow(5000);
    t.sources[0]!.emit('snapshot', JSON.stringify({ cycle_time: '2013-02-05T08:00:00' }));
    expect(t.events).toEqual(['2013-02-05T08:00:00']);
    expect(t.stream.lastEventMs).toBe(5000);
  });

  it('drops reconnect with exponential backoff', () => {
    const t = makeStream();
    t.stream.connect();
    t.sources[0]!.onerror!(new Error('drop'));
    expect(t.sources[0]!.closed).toBe(true);
    expect(t.scheduled[0]!.ms).toBe(1000);
    t.scheduled[0]!.fn(); // reconnect
    expect(t.sources.length).toBe(2);
    t.sources[1]!.onerror!(new Error('drop again'));
    expect(t.scheduled[1]!.ms).toBe(2000);
  });

  it('a successful open resets the backoff', () => {
    const t = makeStream();
    t.stream.connect();
    t.sources[0]!.onerror!(new Error('drop'));
    t.scheduled[0]!.fn();
    t.sources[1]!.onopen!({});
    t.sources[1]!.onerror!(new Error('drop'));
    expect(t.scheduled[1]!.ms).toBe(1000); // back to the first step
  });

  it('close() stops reconnecting', () => {
    const t = makeStream();
    t.stream.connect();
    t.stream.close();
    t.sources[0]!.onerror!(new Error('drop'));
    expect(t.scheduled.length).toBe(0);
  });

  it('state converges after reconnect: later events still dispatch', () => {
    const t = makeStream();
    t.stream.connect();
    t.sources[0]!.onerror!(new Error('drop'));
    t.scheduled[0]!.fn();
    t.sources[1]!.emit('snapshot', JSON.stringify({ cycle_time: '2013-02-05T08:15:00' }));
    expect(t.events).toEqual(['2013-02-05T08:15:00']);
  });
});
