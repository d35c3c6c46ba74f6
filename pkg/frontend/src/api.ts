/** Fetch client for the review service. All access to the backend goes
 * through this module; nothing else talks to the network. */

import type {
  CorrectionsRequest,
  CorrectionsResponse,
  MergeResponse,
  QueueResponse,
  TileDetail,
} from './types';

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
    this.name = 'ApiError';
  }
}

/** 409: someone else moved the tile's revision, or the queue is archived. */
export class ConflictError extends ApiError {
  constructor(detail: string) {
    super(409, detail);
    this.name = 'ConflictError';
  }
}

async function raiseForStatus(resp: Response): Promise<void> {
  if (resp.ok) return;
  let detail = resp.statusText;
  try {
    const body = (await resp.json()) as { detail?: unknown };
    if (typeof body.detail === 'string') detail = body.detail;
    else if (body.detail !== undefined) detail = JSON.stringify(body.detail);
  } catch {
    // non-JSON error body; keep the status text
  }
  if (resp.status === 409) throw new ConflictError(detail);
  throw new ApiError(resp.status, detail);
}

export class ReviewApi {
  constructor(readonly baseUrl: string = '') {}

  private url(path: string): string {
    return this.baseUrl.replace(/\/$/, '') + path;
  }

  async getQueue(): Promise<QueueResponse> {
    const resp = await fetch(this.url('/queue'));
    await raiseForStatus(resp);
    return (await resp.json()) as QueueResponse;
  }

  async getTile(tileId: string): Promise<TileDetail> {
    const resp = await fetch(this.url(`/tile/${encodeURIComponent(tileId)}`));
    await raiseForStatus(resp);
    return (await resp.json()) as TileDetail;
  }

  imageUrl(tileId: string): string {
    return this.url(`/tile/${encodeURIComponent(tileId)}/image`);
  }

  async postCorrections(
    tileId: string,
    body: CorrectionsRequest,
  ): Promise<CorrectionsResponse> {
    const resp = await fetch(
      this.url(`/tile/${encodeURIComponent(tileId)}/corrections`),
      {
        method: 'POST',
        headers: { 'Content-Type': 'application/json' },
        body: JSON.stringify(body),
      },
    );
    await raiseForStatus(resp);
    return (await resp.json()) as CorrectionsResponse;
  }

  async merge(mergedAt?: string): Promise<MergeResponse> {
    const resp = await fetch(this.url('/merge'), {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(mergedAt ? { merged_at: mergedAt } : {}),
    });
    await raiseForStatus(resp);
    return (await resp.json()) as MergeResponse;
  }
}
