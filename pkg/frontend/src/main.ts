/** DOM wiring for the operator dashboard. All rendering logic lives in the
 * pure modules (viewmodel/chart/whatif); this file only fetches and paints.
 */

import { ApiClient } from './api.js';
import { bandPath, fitScale, linePath, Viewport } from './chart.js';
import { SnapshotStream } from './sse.js';
import type { WhatIfPlan } from './types.js';
import {
  buildOdPanel,
  buildStationPanel,
  isStale,
  SERIES_COLORS,
  StationPanelView,
} from './viewmodel.js';
import {
  applyError,
  applyResult,
  beginSubmit,
  deltaTable,
  initialWhatIfState,
  validatePlan,
  WhatIfState,
} from './whatif.js';

const api = new ApiClient('');
const VP: Viewport = { width: 460, height: 180, padding: 24 };
const COLOR_HEX: Record<string, string> = {
  red: '#d62728',
  blue: '#1f77b4',
  green: '#2ca02c',
};

const el = (id: string): HTMLElement => {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node;
};

let binMinutes = 15;
let snapshotId: string | null = null;
let whatIfState: WhatIfState = initialWhatIfState;
const inFlight = new Set<string>(); // one request per panel

function renderStationSvg(view: StationPanelView): string {
  if (view.noData) {
    return '<p class="no-data">no data for this station yet</p>';
  }
  const scale = fitScale([view.observed, view.baseline], view.predictions, VP);
  const band = bandPath(view.predictions, scale);
  const markers = view.predictions
    .map((m) => `<circle cx="${scale.x(m.bin)}" cy="${scale.y(m.point)}" r="4"
        fill="${COLOR_HEX[SERIES_COLORS.predicted]}">
        <title>h=${m.horizon}: ${m.point.toFixed(1)} [${m.lo.toFixed(1)}, ${m.hi.toFixed(1)}]</title>
      </circle>`)
    .join('');
  const fallbackBadge = view.fallback
    ? '<text x="8" y="14" class="badge">fallback</text>' : '';
  return `<svg viewBox="0 0 ${VP.width} ${VP.height}" role="img">
    ${band ? `<path d="${band}" fill="${COLOR_HEX[SERIES_COLORS.predicted]}" opacity="0.15"/>` : ''}
    <path d="${linePath(view.baseline, scale)}" fill="none"
      stroke="${COLOR_HEX[SERIES_COLORS.baseline]}" stroke-width="1.5"/>
    <path d="${linePath(view.observed, scale)}" fill="none"
      stroke="${COLOR_HEX[SERIES_COLORS.observed]}" stroke-width="1.5"/>
    ${markers}${fallbackBadge}
  </svg>`;
}

async function refreshStationPanel(station: string): Promise<void> {
  const key = `arrivals:${station}`;
  if (inFlight.has(key)) return;
  inFlight.add(key);
  try {
    const resp = await api.arrivals(station);
    el('station-chart').innerHTML = renderStationSvg(buildStationPanel(resp));
  } catch (err) {
    el('station-chart').innerHTML = `<p class="error">failed to load: ${err}</p>`;
  } finally {
    inFlight.delete(key);
  }
}

async function refreshOdPanel(origin: string): Promise<void> {
  const key = `od:${origin}`;
  if (inFlight.has(key)) return;
  inFlight.add(key);
  try {
    const resp = await api.od(origin);
    const view = buildOdPanel(resp, 1);
    const maxFlow = Math.max(1, ...view.bars.map((b) => b.flow));
    el('od-bars').innerHTML = view.bars
      .map((b) => `<div class="od-row">
          <span class="od-dest">${b.dest}</span>
          <span class="od-bar" style="width:${(100 * b.flow / maxFlow).toFixed(1)}%"></span>
          <span class="od-num">${b.flow.toFixed(1)} (${(100 * b.share).toFixed(0)}%)</span>
        </div>`)
      .join('')
      + (view.hiddenFlow > 0.05
        ? `<div class="od-hidden">+${view.hiddenFlow.toFixed(1)} to other destinations</div>`
        : '');
  } catch (err) {
    el('od-bars').innerHTML = `<p class="error">failed to load: ${err}</p>`;
  } finally {
    inFlight.delete(key);
  }
}

async function refreshAlerts(): Promise<void> {
  if (inFlight.has('alerts')) return;
  inFlight.add('alerts');
  try {
    const resp = await api.alerts();
    el('alerts').innerHTML = resp.alerts.length === 0
      ? '<p class="ok">no hotspots</p>'
      : resp.alerts
          .map((a) => `<div class="alert">${a.station} bin ${a.bin}:
            ${a.metric} ${a.value.toFixed(0)} / ${a.threshold.toFixed(0)}
            (x${a.severity.toFixed(2)})</div>`)
          .join('');
  } finally {
    inFlight.delete('alerts');
  }
}

function renderWhatIf(): void {
  const btn = el('whatif-submit') as HTMLButtonElement;
  btn.disabled = whatIfState.phase === 'inFlight';
  const out = el('whatif-result');
  if (whatIfState.phase === 'error') {
    out.innerHTML = `<p class="error">${whatIfState.error} — fix and retry</p>`;
    return;
  }
  if (!whatIfState.result) {
    out.innerHTML = whatIfState.phase === 'inFlight'
      ? '<p>evaluating…</p>' : '';
    return;
  }
  const rows = deltaTable(whatIfState.result)
    .map((r) => `<tr><td>${r.station}</td><td>${r.waitingMax}</td><td>${r.leftBehind}</td></tr>`)
    .join('');
  out.innerHTML = `
    <p class="headline">target-station improvement:
      <b>${whatIfState.result.target_station_improvement.toFixed(0)}</b> pax</p>
    <table>
      <thead><tr><th>station</th><th>Δ waiting max</th><th>Δ left behind</th></tr></thead>
      <tbody>${rows}</tbody>
    </table>`;
}

async function submitWhatIf(): Promise<void> {
  const plan: WhatIfPlan = {
    station: (el('wf-station') as HTMLSelectElement).value,
    start: (el('wf-start') as HTMLInputElement).value,
    end: (el('wf-end') as HTMLInputElement).value,
    handling: { mode: (el('wf-mode') as HTMLSelectElement).value as 'defer' | 'divert' | 'drop' },
    target_station: (el('wf-target') as HTMLSelectElement).value || undefined,
  };
  const invalid = validatePlan(plan);
  if (invalid) {
    whatIfState = { ...whatIfState, phase: 'error', error: invalid };
    renderWhatIf();
    return;
  }
  const next = beginSubmit(whatIfState, plan);
  if (next === null) return; // already in flight
  whatIfState = next;
  renderWhatIf();
  const id = whatIfState.requestId;
  try {
    const result = await api.whatIf(plan);
    whatIfState = applyResult(whatIfState, id, result);
  } catch (err) {
    whatIfState = applyError(whatIfState, id, String(err));
  }
  renderWhatIf();
}

function selectedStation(): string {
  return (el('station-select') as HTMLSelectElement).value;
}

async function refreshAll(): Promise<void> {
  const station = selectedStation();
  await Promise.all([
    refreshStationPanel(station),
    refreshOdPanel(station),
    refreshAlerts(),
  ]);
}

function renderFooter(stream: SnapshotStream): void {
  const stale = isStale(stream.lastEventMs, Date.now(), binMinutes);
  el('stale-badge').hidden = !stale;
  el('snapshot-id').textContent = snapshotId
    ? `snapshot ${snapshotId}` : 'no snapshot yet';
}

async function init(): Promise<void> {
  const stations = await api.stations();
  binMinutes = stations.bin_minutes;
  for (const id of ['station-select', 'wf-station', 'wf-target']) {
    const select = el(id) as HTMLSelectElement;
    select.innerHTML = stations.stations
      .map((s) => `<option value="${s}">${s}</option>`).join('');
  }
  (el('wf-target') as HTMLSelectElement).insertAdjacentHTML(
    'afterbegin', '<option value="">(closed station)</option>');

  el('station-select').addEventListener('change', () => void refreshAll());
  el('whatif-submit').addEventListener('click', () => void submitWhatIf());

  const stream = new SnapshotStream('/v1/events', (ev) => {
    snapshotId = ev.cycle_time;
    void refreshAll();
    renderFooter(stream);
  });
  stream.connect();
  setInterval(() => renderFooter(stream), 5000);

  const health = await api.health();
  if (health.status === 'ok' && health.last_cycle) {
    snapshotId = health.last_cycle;
    await refreshAll();
  }
  renderFooter(stream);
}

void init();
