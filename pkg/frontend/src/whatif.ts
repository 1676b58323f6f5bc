/** Gate-closure what-if form state machine.
 *
 * Pure transition functions; the DOM layer only dispatches and renders.
 * Invariants: at most one request in flight (submits while busy are
 * rejected), and the displayed delta table always comes from exactly one
 * response.
 */

import type { WhatIfPlan, WhatIfResponse } from './types.js';

export type WhatIfPhase = 'idle' | 'inFlight' | 'done' | 'error';

export interface WhatIfState {
  readonly phase: WhatIfPhase;
  readonly plan: WhatIfPlan | null;
  readonly result: WhatIfResponse | null;
  readonly error: string | null;
  /** Monotone id of the request whose result is displayed. */
  readonly requestId: number;
}

export const initialWhatIfState: WhatIfState = {
  phase: 'idle',
  plan: null,
  result: null,
  error: null,
  requestId: 0,
};

export function canSubmit(state: WhatIfState): boolean {
  return state.phase !== 'inFlight';
}

/** Begin a request; returns null when one is already in flight. */
export function beginSubmit(state: WhatIfState, plan: WhatIfPlan): WhatIfState | null {
  if (!canSubmit(state)) return null;
  return {
    phase: 'inFlight',
    plan,
    result: state.result,
    error: null,
    requestId: state.requestId + 1,
  };
}

/** Apply a response; stale responses (wrong id) are ignored. */
export function applyResult(state: WhatIfState, requestId: number,
                            result: WhatIfResponse): WhatIfState {
  if (state.phase !== 'inFlight' || requestId !== state.requestId) return state;
  return { ...state, phase: 'done', result, error: null };
}

/** Record a failure; the submitted plan is preserved for retry. */
export function applyError(state: WhatIfState, requestId: number,
                           message: string): WhatIfState {
  if (state.phase !== 'inFlight' || requestId !== state.requestId) return state;
  return { ...state, phase: 'error', error: message };
}

export interface DeltaRow {
  readonly station: string;
  readonly waitingMax: number;
  readonly leftBehind: number;
}

/** Per-station delta table: changes summed over simulated bins. */
export function deltaTable(result: WhatIfResponse): DeltaRow[] {
  const byStation = new Map<string, { waitingMax: number; leftBehind: number }>();
  for (const d of result.deltas) {
    const row = byStation.get(d.station) ?? { waitingMax: 0, leftBehind: 0 };
    row.waitingMax += d.waiting_max;
    row.leftBehind += d.left_behind;
    byStation.set(d.station, row);
  }
  return [...byStation.entries()]
    .sort((a, b) => a[0].localeCompare(b[0]))
    .map(([station, row]) => ({
      station,
      waitingMax: row.waitingMax,
      leftBehind: row.leftBehind,
    }));
}

/** Validate a closure window against the snapshot's simulation horizon. */
export function validatePlan(plan: WhatIfPlan): string | null {
  const start = Date.parse(plan.start);
  const end = Date.parse(plan.end);
  if (Number.isNaN(start) || Number.isNaN(end)) return 'invalid closure window';
  if (end < start) return 'closure end must not precede start';
  if (!plan.station) return 'pick a station to close';
  if (plan.handling.mode === 'divert'
      && plan.handling.divert_fraction !== undefined
      && (plan.handling.divert_fraction < 0 || plan.handling.divert_fraction > 1)) {
    return 'divert fraction must be between 0 and 1';
  }
  return null;
}
