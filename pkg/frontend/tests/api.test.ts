import { afterEach, describe, expect, it, vi } from 'vitest';

import { ApiError, ConflictError, ReviewApi } from '../src/api';

function jsonResponse(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { 'Content-Type': 'application/json' },
  });
}

afterEach(() => {
  vi.unstubAllGlobals();
});

describe('review api client', () => {
  it('fetches the queue from the configured base url', async () => {
    const fetchMock = vi.fn().mockResolvedValue(
      jsonResponse(200, { tiles: [], total: 0, confirmed: 0, archived: false }),
    );
    vi.stubGlobal('fetch', fetchMock);
    const api = new ReviewApi('http://service:9000/');
    const queue = await api.getQueue();
    expect(queue.total).toBe(0);
    expect(fetchMock).toHaveBeenCalledWith('http://service:9000/queue');
  });

  it('escapes tile ids in paths and exposes image urls', () => {
    const api = new ReviewApi('http://service:9000');
    expect(api.imageUrl('tile/7')).toBe(
      'http://service:9000/tile/tile%2F7/image',
    );
  });

  it('posts corrections as JSON', async () => {
    const fetchMock = vi.fn().mockResolvedValue(
      jsonResponse(200, { tile_id: 't', revision: 1, status: 'confirmed' }),
    );
    vi.stubGlobal('fetch', fetchMock);
    const api = new ReviewApi();
    const body = { revision: 0, status: 'confirmed' as const, boxes: [] };
    const result = await api.postCorrections('t', body);
    expect(result.revision).toBe(1);
    const [url, init] = fetchMock.mock.calls[0];
    expect(url).toBe('/tile/t/corrections');
    expect(init.method).toBe('POST');
    expect(JSON.parse(init.body)).toEqual(body);
  });

  it('raises ConflictError with the server detail on 409', async () => {
    vi.stubGlobal(
      'fetch',
      vi.fn().mockResolvedValue(
        jsonResponse(409, { detail: 'tile t is at revision 2, edit was based on 0' }),
      ),
    );
    const api = new ReviewApi();
    const err = await api
      .postCorrections('t', { revision: 0, status: 'confirmed', boxes: [] })
      .then(() => null)
      .catch((e: unknown) => e);
    expect(err).toBeInstanceOf(ConflictError);
    expect((err as ConflictError).detail).toContain('revision 2');
  });

  it('raises ApiError with status and detail on 422', async () => {
    vi.stubGlobal(
      'fetch',
      vi.fn().mockResolvedValue(jsonResponse(422, { detail: 'bad confidence' })),
    );
    const api = new ReviewApi();
    const err = await api.getTile('t').then(() => null).catch((e: unknown) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err).not.toBeInstanceOf(ConflictError);
    expect((err as ApiError).status).toBe(422);
    expect((err as ApiError).detail).toBe('bad confidence');
  });

  it('keeps the status text when the error body is not JSON', async () => {
    vi.stubGlobal(
      'fetch',
      vi.fn().mockResolvedValue(
        new Response('boom', { status: 500, statusText: 'Internal Server Error' }),
      ),
    );
    const api = new ReviewApi();
    const err = await api.getQueue().then(() => null).catch((e: unknown) => e);
    expect((err as ApiError).detail).toBe('Internal Server Error');
  });

  it('sends merge with an optional provenance timestamp', async () => {
    const fetchMock = vi
      .fn()
      .mockImplementation(() =>
        Promise.resolve(
          jsonResponse(200, { version: 1, merged_tiles: 2, class_counts: {} }),
        ),
      );
    vi.stubGlobal('fetch', fetchMock);
    const api = new ReviewApi();
    await api.merge('2026-08-13T00:00:00Z');
    const [, init] = fetchMock.mock.calls[0];
    expect(JSON.parse(init.body)).toEqual({ merged_at: '2026-08-13T00:00:00Z' });
    await api.merge();
    expect(JSON.parse(fetchMock.mock.calls[1][1].body)).toEqual({});
  });
});
