/**
 * Typed client for the workshop HTTP API.
 *
 * All payloads are passed through untouched apart from the single
 * counts-per-100 to [0, 1] conversion at this boundary; the client performs
 * no distribution math of its own.
 */

import { countsToUnit } from "./scale.js";
import type { ClientSubmissionDraft } from "./state.js";

export type DensityPoint = [number, number];

export interface BetaParamsPayload {
  alpha: number;
  beta: number;
}

export interface SummaryPayload {
  mean: number;
  sd: number;
  mode: number | null;
  median: number;
}

export interface PreviewPayload {
  schema_version: number;
  beta_params: BetaParamsPayload;
  residuals: { lower: number; upper: number };
  summary: SummaryPayload;
  density_grid: DensityPoint[];
}

export interface SubmissionEcho {
  schema_version: number;
  expert_id: string;
  round: number;
  arm: string;
  fitted: BetaParamsPayload;
  summary: SummaryPayload;
  submitted_at: string;
}

export interface BoxplotPayload {
  label: string;
  whisker_low: number;
  q25: number;
  median: number;
  q75: number;
  whisker_high: number;
}

export interface BoxplotsPayload {
  schema_version: number;
  round: number;
  arm: string;
  boxplots: BoxplotPayload[];
}

export interface SessionDescriptor {
  schema_version: number;
  session_id: string;
  state: string;
  experts: number;
  submissions: number;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly payload: unknown,
  ) {
    super(`API error ${status}`);
  }
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private token: string,
    private readonly fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  setToken(token: string): void {
    this.token = token;
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, {
      ...init,
      headers: {
        Authorization: `Bearer ${this.token}`,
        "Content-Type": "application/json",
        ...(init?.headers ?? {}),
      },
    });
    const body = await response.json().catch(() => null);
    if (!response.ok) {
      throw new ApiError(response.status, body);
    }
    return body as T;
  }

  /** Live preview of a draft; slider values convert to [0, 1] here. */
  preview(draft: ClientSubmissionDraft): Promise<PreviewPayload> {
    const params = new URLSearchParams({
      lower: String(countsToUnit(draft.lower)),
      mode: String(countsToUnit(draft.mode)),
      upper: String(countsToUnit(draft.upper)),
    });
    return this.request<PreviewPayload>(`/preview?${params}`);
  }

  submit(sessionId: string, draft: ClientSubmissionDraft): Promise<SubmissionEcho> {
    return this.request<SubmissionEcho>(`/sessions/${sessionId}/submissions`, {
      method: "POST",
      body: JSON.stringify({
        schema_version: 1,
        round: draft.round,
        arm: draft.arm,
        lower: countsToUnit(draft.lower),
        mode: countsToUnit(draft.mode),
        upper: countsToUnit(draft.upper),
      }),
    });
  }

  descriptor(sessionId: string): Promise<SessionDescriptor> {
    return this.request<SessionDescriptor>(`/sessions/${sessionId}`);
  }

  /** Advance carries the state the facilitator saw; stale clicks get a 409. */
  advance(sessionId: string, expectedState: string): Promise<{ state: string }> {
    return this.request<{ state: string }>(`/sessions/${sessionId}/advance`, {
      method: "POST",
      body: JSON.stringify({ schema_version: 1, expected_state: expectedState }),
    });
  }

  boxplots(sessionId: string, round: number, arm: string): Promise<BoxplotsPayload> {
    return this.request<BoxplotsPayload>(
      `/sessions/${sessionId}/rounds/${round}/boxplots?arm=${encodeURIComponent(arm)}`,
    );
  }
}
