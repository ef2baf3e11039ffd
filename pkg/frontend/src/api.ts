/** Typed client for the estimation service API. */

export interface JobStatus {
  state: 'queued' | 'running' | 'done' | 'error';
  progress: number;
  error: string | null;
}

export interface ExtractStats {
  mesh_id: string;
  voxels_above: number;
  triangles: number;
}

export class ApiError extends Error {
  constructor(public code: number, message: string) {
    super(message);
    this.name = 'ApiError';
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

async function raiseForStatus(res: Response): Promise<Response> {
  if (res.ok) return res;
  let message = `HTTP ${res.status}`;
  try {
    const body = await res.json();
    if (body?.error?.message) message = body.error.message;
  } catch {
    /* non-JSON error body */
  }
  throw new ApiError(res.status, message);
}

export class ApiClient {
  constructor(
    private baseUrl: string = '',
    private fetchFn: FetchLike = (...args) => fetch(...args),
  ) {}

  private url(path: string): string {
    return `${this.baseUrl}${path}`;
  }

  async uploadModel(bytes: ArrayBuffer | Uint8Array, format = 'auto'): Promise<string> {
    const body: ArrayBuffer =
      bytes instanceof Uint8Array
        ? bytes.buffer.slice(bytes.byteOffset, bytes.byteOffset + bytes.byteLength) as ArrayBuffer
        : bytes;
    const res = await raiseForStatus(
      await this.fetchFn(this.url(`/api/models?format=${format}`), {
        method: 'POST',
        headers: { 'content-type': 'application/octet-stream' },
        body,
      }),
    );
    return (await res.json()).model_id as string;
  }

  async createJob(
    modelId: string,
    params: { axis?: string; resolution?: number | null; checkpoint?: string } = {},
  ): Promise<string> {
    const body = {
      axis: params.axis ?? 'z',
      resolution: params.resolution ?? null,
      checkpoint: params.checkpoint ?? 'default',
    };
    const res = await raiseForStatus(
      await this.fetchFn(this.url(`/api/models/${modelId}/jobs`), {
        method: 'POST',
        headers: { 'content-type': 'application/json' },
        body: JSON.stringify(body),
      }),
    );
    return (await res.json()).job_id as string;
  }

  async getJob(jobId: string): Promise<JobStatus> {
    const res = await raiseForStatus(await this.fetchFn(this.url(`/api/jobs/${jobId}`)));
    return (await res.json()) as JobStatus;
  }

  async fetchSlice(jobId: string, k: number): Promise<ArrayBuffer> {
    const res = await raiseForStatus(
      await this.fetchFn(this.url(`/api/jobs/${jobId}/slices/${k}`)),
    );
    return res.arrayBuffer();
  }

  async extract(jobId: string, threshold: number): Promise<ExtractStats> {
    const res = await raiseForStatus(
      await this.fetchFn(this.url(`/api/jobs/${jobId}/extract`), {
        method: 'POST',
        headers: { 'content-type': 'application/json' },
        body: JSON.stringify({ threshold }),
      }),
    );
    return (await res.json()) as ExtractStats;
  }

  /** Download mesh bytes; verifies Content-Length when the server sends one. */
  async downloadMesh(meshId: string, format: 'stl' | 'obj' = 'stl'): Promise<ArrayBuffer> {
    const res = await raiseForStatus(
      await this.fetchFn(this.url(`/api/meshes/${meshId}?format=${format}`)),
    );
    const declared = res.headers.get('content-length');
    const buf = await res.arrayBuffer();
    if (declared !== null && Number(declared) !== buf.byteLength) {
      throw new ApiError(0, `download truncated: ${buf.byteLength} of ${declared} bytes`);
    }
    return buf;
  }
}

export type Api = Pick<
  ApiClient,
  'uploadModel' | 'createJob' | 'getJob' | 'fetchSlice' | 'extract' | 'downloadMesh'
>;
