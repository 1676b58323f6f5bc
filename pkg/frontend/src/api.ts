/** Thin typed client over the /v1 JSON API. fetch is injectable for tests. */

import type {
  AlertsResponse,
  ArrivalsResponse,
  HealthResponse,
  OdResponse,
  StationsResponse,
  WhatIfPlan,
  WhatIfResponse,
} from './types.js';

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
    this.name = 'ApiError';
  }
}

export class ApiClient {
  constructor(private readonly base: string = '',
              private readonly fetchFn: FetchLike = (u, i) => fetch(u, i)) {}

  private async get<T>(path: string): Promise<T> {
    const resp = await this.fetchFn(`${this.base}${path}`);
    if (!resp.ok) throw new ApiError(resp.status, `GET ${path}: ${resp.status}`);
    return resp.json() as Promise<T>;
  }

  health(): Promise<HealthResponse> {
    return this.get('/v1/health');
  }

  stations(): Promise<StationsResponse> {
    return this.get('/v1/stations');
  }

  arrivals(station: string, history = 16): Promise<ArrivalsResponse> {
    const q = new URLSearchParams({ station, history: String(history) });
    return this.get(`/v1/forecast/arrivals?${q}`);
  }

  od(origin: string): Promise<OdResponse> {
    const q = new URLSearchParams({ origin });
    return this.get(`/v1/forecast/od?${q}`);
  }

  alerts(): Promise<AlertsResponse> {
    return this.get('/v1/alerts');
  }

  async whatIf(plan: WhatIfPlan): Promise<WhatIfResponse> {
    const resp = await this.fetchFn(`${this.base}/v1/whatif/gate-closure`, {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify(plan),
    });
    if (!resp.ok) {
      throw new ApiError(resp.status, `what-if failed: ${resp.status}`);
    }
    return resp.json() as Promise<WhatIfResponse>;
  }
}
