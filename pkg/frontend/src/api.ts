// Thin typed client over the scoring service HTTP interface.

import type {
  BatchResponse,
  HealthInfo,
  LabelConflict,
  LabelEvent,
  QueuePage,
  ScoreEntry,
} from './types.js';
import type { LabelSubmission } from './queue.js';

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly body: string,
  ) {
    super(`service returned ${status}: ${body}`);
  }
}

/** A label write lost the optimistic-concurrency race; retry from fresh state. */
export class LabelConflictError extends Error {
  constructor(readonly conflict: LabelConflict) {
    super(`revision already labeled ${conflict.current_class} (revision ${conflict.current_revision})`);
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class PatrolClient {
  private readonly base: string;
  private readonly fetchFn: FetchLike;

  constructor(baseUrl: string, fetchFn: FetchLike = fetch) {
    this.base = baseUrl.replace(/\/+$/, '');
    this.fetchFn = fetchFn;
  }

  private async getJson<T>(path: string): Promise<T> {
    const response = await this.fetchFn(`${this.base}${path}`);
    const text = await response.text();
    if (!response.ok) {
      throw new ApiError(response.status, text);
    }
    return JSON.parse(text) as T;
  }

  health(): Promise<HealthInfo> {
    return this.getJson('/v1/health');
  }

  scoreSingle(revId: number): Promise<ScoreEntry> {
    return this.getJson(`/v1/scores/${revId}`);
  }

  async scoreBatch(revIds: number[]): Promise<BatchResponse> {
    const response = await this.fetchFn(`${this.base}/v1/scores`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ rev_ids: revIds }),
    });
    const text = await response.text();
    if (!response.ok) {
      throw new ApiError(response.status, text);
    }
    return JSON.parse(text) as BatchResponse;
  }

  queue(minScore = 0, page = 0, pageSize = 50): Promise<QueuePage> {
    const params = new URLSearchParams({
      min_score: String(minScore),
      page: String(page),
      page_size: String(pageSize),
    });
    return this.getJson(`/v1/ui/queue?${params}`);
  }

  async submitLabel(submission: LabelSubmission): Promise<LabelEvent> {
    const response = await this.fetchFn(`${this.base}/v1/labels`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(submission),
    });
    const text = await response.text();
    if (response.status === 409) {
      throw new LabelConflictError(JSON.parse(text) as LabelConflict);
    }
    if (!response.ok) {
      throw new ApiError(response.status, text);
    }
    return JSON.parse(text) as LabelEvent;
  }

  async exportLabels(): Promise<string> {
    const response = await this.fetchFn(`${this.base}/v1/labels/export`);
    const text = await response.text();
    if (!response.ok) {
      throw new ApiError(response.status, text);
    }
    return text;
  }

  async curvesCsv(): Promise<string> {
    const response = await this.fetchFn(`${this.base}/v1/curves`);
    const text = await response.text();
    if (!response.ok) {
      throw new ApiError(response.status, text);
    }
    return text;
  }
}
