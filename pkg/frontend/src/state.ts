/**
 * Session state machine: upload -> progress polling -> slice browsing and
 * threshold exploration. All timing and network go through injected
 * dependencies so the logic is testable without a browser.
 *
 * Concurrency rules: at most one in-flight extract; responses for
 * superseded thresholds are discarded by token comparison (latest wins);
 * identical threshold values are served from a client-side cache without
 * a second request; extraction is refused while the job is not done.
 */

import { Api, ApiError, ExtractStats } from './api.js';

export const POLL_INTERVAL_MS = 750;
export const MAX_NETWORK_RETRIES = 3;
export const THRESHOLD_MIN = 0.01;
export const THRESHOLD_MAX = 0.99;

export type Phase = 'idle' | 'uploading' | 'processing' | 'ready' | 'failed';

export interface ViewState {
  phase: Phase;
  modelId: string | null;
  jobId: string | null;
  progress: number;
  error: string | null;
  retrying: boolean;
  sliceCount: number;
  sliceIndex: number;
  slice: ArrayBuffer | null;
  threshold: number;
  stats: ExtractStats | null;
  extracting: boolean;
  downloadReady: boolean;
}

export type Sleeper = (ms: number) => Promise<void>;

const realSleep: Sleeper = (ms) => new Promise((resolve) => setTimeout(resolve, ms));

function initialState(): ViewState {
  return {
    phase: 'idle',
    modelId: null,
    jobId: null,
    progress: 0,
    error: null,
    retrying: false,
    sliceCount: 0,
    sliceIndex: 0,
    slice: null,
    threshold: 0.5,
    stats: null,
    extracting: false,
    downloadReady: false,
  };
}

export class SessionController {
  state: ViewState = initialState();

  private listeners: Array<(s: ViewState) => void> = [];
  private extractToken = 0;
  private extractCache = new Map<number, ExtractStats>();
  private sliceCache = new Map<string, ArrayBuffer>();
  private pollGeneration = 0;

  constructor(
    private api: Api,
    private sleep: Sleeper = realSleep,
    private pollIntervalMs: number = POLL_INTERVAL_MS,
  ) {}

  subscribe(fn: (s: ViewState) => void): () => void {
    this.listeners.push(fn);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== fn);
    };
  }

  private commit(patch: Partial<ViewState>) {
    this.state = { ...this.state, ...patch };
    for (const fn of this.listeners) fn(this.state);
  }

  /** Retry a network call with exponential backoff; API errors (the server
   * answered) are not retried, they surface immediately. */
  private async withRetry<T>(call: () => Promise<T>): Promise<T> {
    let delay = this.pollIntervalMs;
    for (let attempt = 1; ; attempt++) {
      try {
        const result = await call();
        if (this.state.retrying) this.commit({ retrying: false });
        return result;
      } catch (err) {
        if (err instanceof ApiError) throw err;
        if (attempt >= MAX_NETWORK_RETRIES) throw err;
        this.commit({ retrying: true });
        await this.sleep(delay);
        delay *= 2;
      }
    }
  }

  async upload(bytes: ArrayBuffer | Uint8Array, format = 'auto',
               job: { axis?: string; checkpoint?: string } = {}): Promise<void> {
    this.resetSession();
    this.commit({ phase: 'uploading', error: null });
    try {
      const modelId = await this.withRetry(() => this.api.uploadModel(bytes, format));
      this.commit({ modelId });
      const jobId = await this.withRetry(() => this.api.createJob(modelId, job));
      this.commit({ jobId, phase: 'processing', progress: 0 });
      await this.pollUntilDone();
    } catch (err) {
      this.fail(err);
    }
  }

  /** Rebuild the session view from ids (page reload with ids in the URL). */
  async restore(modelId: string, jobId: string): Promise<void> {
    this.resetSession();
    this.commit({ modelId, jobId, phase: 'processing', error: null });
    try {
      await this.pollUntilDone();
    } catch (err) {
      this.fail(err);
    }
  }

  private resetSession() {
    this.pollGeneration++;
    this.extractToken++;
    this.extractCache.clear();
    this.sliceCache.clear();
    this.state = initialState();
  }

  private fail(err: unknown) {
    this.commit({
      phase: 'failed',
      retrying: false,
      error: err instanceof Error ? err.message : String(err),
    });
  }

  private async pollUntilDone(): Promise<void> {
    const generation = this.pollGeneration;
    for (;;) {
      const status = await this.withRetry(() => this.api.getJob(this.state.jobId!));
      if (generation !== this.pollGeneration) return; // superseded session
      // server progress is monotone; never move the bar backwards anyway
      this.commit({ progress: Math.max(this.state.progress, status.progress) });
      if (status.state === 'done') {
        this.commit({ phase: 'ready', progress: 1 });
        await this.loadSlice(0, true);
        return;
      }
      if (status.state === 'error') {
        this.fail(new ApiError(500, status.error ?? 'job failed'));
        return;
      }
      await this.sleep(this.pollIntervalMs);
      if (generation !== this.pollGeneration) return;
    }
  }

  /** Fetch a slice image; index is clamped to [0, sliceCount) and repeated
   * requests for the same index hit the cache. */
  async loadSlice(k: number, firstLoad = false): Promise<void> {
    if (this.state.phase !== 'ready' || this.state.jobId === null) return;
    if (this.state.sliceCount > 0) {
      k = Math.min(Math.max(k, 0), this.state.sliceCount - 1);
    } else if (!firstLoad) {
      return;
    }
    const cacheKey = `${this.state.jobId}:${k}`;
    const cached = this.sliceCache.get(cacheKey);
    if (cached !== undefined) {
      this.commit({ sliceIndex: k, slice: cached });
      return;
    }
    try {
      const buf = await this.withRetry(() => this.api.fetchSlice(this.state.jobId!, k));
      this.sliceCache.set(cacheKey, buf);
      const patch: Partial<ViewState> = { sliceIndex: k, slice: buf };
      if (firstLoad) patch.sliceCount = sliceCountFromPgm(buf);
      this.commit(patch);
    } catch (err) {
      if (err instanceof ApiError && err.code === 422) {
        // stale index after a job change: reset the browser to slice 0
        this.commit({ sliceIndex: 0 });
        if (k !== 0) await this.loadSlice(0, firstLoad);
        return;
      }
      this.fail(err);
    }
  }

  setThreshold(value: number) {
    const clamped = Math.min(Math.max(value, THRESHOLD_MIN), THRESHOLD_MAX);
    this.commit({ threshold: clamped });
  }

  /** Slider release: request an extraction for the current threshold. */
  async requestExtract(): Promise<void> {
    if (this.state.phase !== 'ready' || this.state.jobId === null) return;
    const threshold = this.state.threshold;
    const cached = this.extractCache.get(threshold);
    if (cached !== undefined) {
      this.commit({ stats: cached, downloadReady: true, extracting: false });
      return;
    }
    const token = ++this.extractToken;
    this.commit({ extracting: true });
    try {
      const stats = await this.api.extract(this.state.jobId, threshold);
      this.extractCache.set(threshold, stats);
      if (token !== this.extractToken) return; // superseded: never rendered
      this.commit({ stats, downloadReady: true, extracting: false });
    } catch (err) {
      if (token !== this.extractToken) return;
      if (err instanceof ApiError && (err.code === 409 || err.code === 422)) {
        this.commit({ extracting: false, error: err.message });
        return;
      }
      this.fail(err);
    }
  }

  async download(format: 'stl' | 'obj' = 'stl'): Promise<ArrayBuffer | null> {
    if (!this.state.downloadReady || this.state.stats === null) return null;
    return this.withRetry(() => this.api.downloadMesh(this.state.stats!.mesh_id, format));
  }
}

/** The service volume is cubic: slice count equals the slice image width. */
export function sliceCountFromPgm(buf: ArrayBuffer): number {
  const head = new TextDecoder().decode(buf.slice(0, 64));
  const m = head.match(/^P5\s+(\d+)\s+(\d+)\s+(\d+)\s/);
  if (!m) return 0;
  return Number(m[1]);
}
