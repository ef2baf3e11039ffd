import { describe, expect, it } from 'vitest';

import { ApiClient, ApiError } from '../src/api.js';

function jsonResponse(status: number, body: unknown, headers: Record<string, string> = {}) {
  return new Response(JSON.stringify(body), {
    status,
    headers: { 'content-type': 'application/json', ...headers },
  });
}

describe('ApiClient', () => {
  it('parses the error envelope into ApiError', async () => {
    const client = new ApiClient('', async () =>
      jsonResponse(422, { error: { code: 422, message: 'no geometry' } }),
    );
    await expect(client.uploadModel(new Uint8Array([1]))).rejects.toThrowError(ApiError);
    await expect(client.uploadModel(new Uint8Array([1]))).rejects.toThrow('no geometry');
  });

  it('returns ids from happy-path responses', async () => {
    const seen: string[] = [];
    const client = new ApiClient('http://srv', async (url) => {
      seen.push(url);
      if (url.includes('/jobs/')) {
        return jsonResponse(200, { state: 'done', progress: 1, error: null });
      }
      if (url.endsWith('/jobs')) return jsonResponse(202, { job_id: 'j1' });
      return jsonResponse(201, { model_id: 'm1' });
    });
    expect(await client.uploadModel(new Uint8Array([1]))).toBe('m1');
    expect(await client.createJob('m1', { checkpoint: 'default' })).toBe('j1');
    expect((await client.getJob('j1')).state).toBe('done');
    expect(seen[0]).toBe('http://srv/api/models?format=auto');
  });

  it('verifies download length against Content-Length', async () => {
    const ok = new ApiClient('', async () =>
      new Response(new Uint8Array(84), {
        status: 200,
        headers: { 'content-length': '84' },
      }),
    );
    expect((await ok.downloadMesh('m', 'stl')).byteLength).toBe(84);

    const truncated = new ApiClient('', async () =>
      new Response(new Uint8Array(50), {
        status: 200,
        headers: { 'content-length': '84' },
      }),
    );
    await expect(truncated.downloadMesh('m', 'stl')).rejects.toThrow('truncated');
  });

  it('falls back to a generic message on non-JSON errors', async () => {
    const client = new ApiClient('', async () => new Response('boom', { status: 500 }));
    await expect(client.getJob('x')).rejects.toThrow('HTTP 500');
  });
});
