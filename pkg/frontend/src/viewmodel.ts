/** Pure view-model builders: API responses in, render-ready structures out.
 *
 * Everything here is side-effect free so the rendering convention (series
 * colors, band widths, top-N cutoffs) can be unit tested without a DOM.
 */

import type { ArrivalsResponse, OdResponse } from './types.js';

/** Fixed series color convention: predicted red, observed blue,
 *  historical average green. */
export const SERIES_COLORS = {
  predicted: 'red',
  observed: 'blue',
  baseline: 'green',
} as const;

export const Z_95 = 1.96;

export interface ChartPoint {
  readonly bin: number;
  readonly value: number;
}

export interface PredictionMarker {
  readonly bin: number;
  readonly horizon: number;
  readonly point: number;
  /** 95% interval: point +/- 1.96 * sqrt(variance). */
  readonly lo: number;
  readonly hi: number;
}

export interface StationPanelView {
  readonly station: string;
  readonly fallback: boolean;
  readonly observed: ChartPoint[];
  readonly baseline: ChartPoint[];
  readonly predictions: PredictionMarker[];
  /** True when there is nothing at all to draw. */
  readonly noData: boolean;
}

export function buildStationPanel(resp: ArrivalsResponse): StationPanelView {
  const first = resp.history.first_bin;
  const observed = resp.history.observed.map((v, i) => ({ bin: first + i, value: v }));
  const baseline = resp.history.baseline.map((v, i) => ({ bin: first + i, value: v }));

  const predictions: PredictionMarker[] = [];
  if (!resp.fallback) {
    for (const h of Object.keys(resp.forecasts).sort()) {
      const f = resp.forecasts[h]!;
      const half = Z_95 * Math.sqrt(Math.max(0, f.variance));
      predictions.push({
        bin: f.target_bin,
        horizon: Number(h),
        point: f.clamped,
        lo: Math.max(0, f.point - half),
        hi: f.point + half,
      });
    }
    // forecast targets extend the baseline series so all series share an axis
    for (const p of predictions) {
      const f = resp.forecasts[String(p.horizon)]!;
      baseline.push({ bin: f.target_bin, value: f.baseline });
    }
  } else {
    for (const f of Object.values(resp.forecasts)) {
      baseline.push({ bin: f.target_bin, value: f.baseline });
    }
  }
  baseline.sort((a, b) => a.bin - b.bin);

  return {
    station: resp.station,
    fallback: resp.fallback,
    observed,
    baseline,
    predictions,
    noData: observed.length === 0 && baseline.length === 0,
  };
}

export interface OdBar {
  readonly dest: string;
  readonly flow: number;
  readonly share: number;
}

export interface OdPanelView {
  readonly origin: string;
  readonly horizon: number;
  readonly total: number;
  readonly bars: OdBar[];
  /** Flow mass of destinations hidden by the top-N cut. */
  readonly hiddenFlow: number;
}

export function buildOdPanel(resp: OdResponse, horizon: number,
                             topN = 6): OdPanelView {
  const f = resp.forecasts[String(horizon)];
  if (!f) {
    return { origin: resp.origin, horizon, total: 0, bars: [], hiddenFlow: 0 };
  }
  const entries = Object.entries(f.flows)
    .sort((a, b) => b[1] - a[1] || a[0].localeCompare(b[0]));
  const shown = entries.slice(0, topN);
  const shownFlow = shown.reduce((acc, [, v]) => acc + v, 0);
  const bars = shown.map(([dest, flow]) => ({
    dest,
    flow,
    share: f.total > 0 ? flow / f.total : 0,
  }));
  return {
    origin: resp.origin,
    horizon,
    total: f.total,
    bars,
    hiddenFlow: Math.max(0, f.total - shownFlow),
  };
}

/** Stale when no snapshot event has arrived for more than two cycles. */
export function isStale(lastEventMs: number | null, nowMs: number,
                        binMinutes: number): boolean {
  if (lastEventMs === null) return false; // never connected: "warming", not stale
  return nowMs - lastEventMs > 2 * binMinutes * 60_000;
}

/** Reconnect delay for SSE drops: exponential backoff capped at 30 s. */
export function backoffDelayMs(attempt: number): number {
  return Math.min(30_000, 1000 * 2 ** Math.max(0, attempt));
}
