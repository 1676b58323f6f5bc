/** Minimal SVG chart geometry: pure string/path builders, no DOM. */

import type { ChartPoint, PredictionMarker } from './viewmodel.js';

export interface Viewport {
  readonly width: number;
  readonly height: number;
  readonly padding: number;
}

export interface Scale {
  readonly x: (bin: number) => number;
  readonly y: (value: number) => number;
}

/** Linear scales fitting all given series into the viewport. */
export function fitScale(series: ChartPoint[][], markers: PredictionMarker[],
                         vp: Viewport): Scale {
  let minBin = Infinity;
  let maxBin = -Infinity;
  let maxVal = 0;
  for (const s of series) {
    for (const p of s) {
      minBin = Math.min(minBin, p.bin);
      maxBin = Math.max(maxBin, p.bin);
      maxVal = Math.max(maxVal, p.value);
    }
  }
  for (const m of markers) {
    minBin = Math.min(minBin, m.bin);
    maxBin = Math.max(maxBin, m.bin);
    maxVal = Math.max(maxVal, m.hi);
  }
  if (!Number.isFinite(minBin)) {
    minBin = 0;
    maxBin = 1;
  }
  if (maxBin === minBin) maxBin = minBin + 1;
  if (maxVal <= 0) maxVal = 1;
  const innerW = vp.width - 2 * vp.padding;
  const innerH = vp.height - 2 * vp.padding;
  return {
    x: (bin) => vp.padding + ((bin - minBin) / (maxBin - minBin)) * innerW,
    y: (value) => vp.height - vp.padding - (value / maxVal) * innerH,
  };
}

const fmt = (v: number): string => (Math.round(v * 100) / 100).toString();

/** Polyline path ("M x y L x y ...") for one series. */
export function linePath(points: ChartPoint[], scale: Scale): string {
  if (points.length === 0) return '';
  return points
    .map((p, i) => `${i === 0 ? 'M' : 'L'} ${fmt(scale.x(p.bin))} ${fmt(scale.y(p.value))}`)
    .join(' ');
}

/** Closed polygon for a variance band around the prediction markers. */
export function bandPath(markers: PredictionMarker[], scale: Scale): string {
  if (markers.length === 0) return '';
  const sorted = [...markers].sort((a, b) => a.bin - b.bin);
  const upper = sorted.map(
    (m, i) => `${i === 0 ? 'M' : 'L'} ${fmt(scale.x(m.bin))} ${fmt(scale.y(m.hi))}`);
  const lower = [...sorted].reverse().map(
    (m) => `L ${fmt(scale.x(m.bin))} ${fmt(scale.y(m.lo))}`);
  return `${upper.join(' ')} ${lower.join(' ')} Z`;
}
