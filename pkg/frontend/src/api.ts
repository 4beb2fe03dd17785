/** Minimal fetch wrapper for the curation endpoints. */

import type { ApiError, Progress, QueueResponse, ReviewBody, ReviewResponse } from './types.js';

export class RequestFailed extends Error {
  readonly status: number;
  readonly rules: string[];

  constructor(status: number, detail: ApiError) {
    super(detail.error);
    this.status = status;
    this.rules = detail.rules ?? [];
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

async function detailOf(response: Response): Promise<ApiError> {
  try {
    const payload = (await response.json()) as { detail?: ApiError | string };
    if (typeof payload.detail === 'string') {
      return { error: payload.detail };
    }
    if (payload.detail && typeof payload.detail.error === 'string') {
      return payload.detail;
    }
  } catch {
    // fall through to the generic message
  }
  return { error: `request failed with status ${response.status}` };
}

export class ApiClient {
  private readonly base: string;
  private readonly fetchFn: FetchLike;

  constructor(base = '', fetchFn: FetchLike = (input, init) => fetch(input, init)) {
    this.base = base.replace(/\/$/, '');
    this.fetchFn = fetchFn;
  }

  async nextItem(reviewer: string): Promise<QueueResponse> {
    const url = `${this.base}/api/queue/next?reviewer=${encodeURIComponent(reviewer)}`;
    const response = await this.fetchFn(url);
    if (!response.ok) {
      throw new RequestFailed(response.status, await detailOf(response));
    }
    return (await response.json()) as QueueResponse;
  }

  async submitReview(itemId: string, body: ReviewBody): Promise<ReviewResponse> {
    const url = `${this.base}/api/items/${encodeURIComponent(itemId)}/review`;
    const response = await this.fetchFn(url, {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify(body),
    });
    if (!response.ok) {
      throw new RequestFailed(response.status, await detailOf(response));
    }
    return (await response.json()) as ReviewResponse;
  }

  async progress(): Promise<Progress> {
    const response = await this.fetchFn(`${this.base}/api/progress`);
    if (!response.ok) {
      throw new RequestFailed(response.status, await detailOf(response));
    }
    return (await response.json()) as Progress;
  }

  imageUrl(imagePath: string, level: number | null): string {
    const suffix = level === null ? '' : `?p=${level}`;
    return `${this.base}${imagePath}${suffix}`;
  }
}
