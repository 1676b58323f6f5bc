/** Response shapes of the metroflow /v1 JSON API. */

export interface HealthResponse {
  readonly status: 'warming' | 'ok';
  readonly last_cycle?: string;
}

export interface StationsResponse {
  readonly stations: string[];
  readonly bin_minutes: number;
}

export interface ForecastEntry {
  readonly target_bin: number;
  readonly point: number;
  readonly clamped: number;
  readonly variance: number;
  readonly baseline: number;
}

export interface ArrivalsResponse {
  readonly station: string;
  readonly cluster: number;
  readonly fallback: boolean;
  readonly history: {
    readonly first_bin: number;
    readonly observed: number[];
    readonly baseline: number[];
  };
  readonly forecasts: Record<string, ForecastEntry>;
}

export interface OdResponse {
  readonly origin: string;
  readonly forecasts: Record<string, {
    readonly total: number;
    readonly target_bin: number;
    readonly flows: Record<string, number>;
  }>;
}

export interface Alert {
  readonly station: string;
  readonly bin: number;
  readonly metric: string;
  readonly value: number;
  readonly threshold: number;
  readonly severity: number;
}

export interface AlertsResponse {
  readonly alerts: Alert[];
}

export interface WhatIfPlan {
  readonly station: string;
  readonly start: string;
  readonly end: string;
  readonly handling: {
    readonly mode: 'defer' | 'divert' | 'drop';
    readonly divert_fraction?: number;
    readonly divert_to?: string;
  };
  readonly target_station?: string;
}

export interface WhatIfDelta {
  readonly station: string;
  readonly bin: number;
  readonly waiting_max: number;
  readonly left_behind: number;
}

export interface WhatIfResponse {
  readonly deltas: WhatIfDelta[];
  readonly target_station_improvement: number;
}
