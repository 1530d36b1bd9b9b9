// Adaptation job lifecycle: start, poll at a fixed interval, cancel. At most
// one in-flight job is mirrored; progress is reported monotonically.

import type { EditorApi } from "./api.js";
import type { JobPayload } from "./types.js";

export const POLL_INTERVAL_MS = 250;

export interface PollCallbacks {
  onProgress?: (payload: JobPayload) => void;
  onSettled?: (payload: JobPayload) => void;
}

const sleep = (ms: number) => new Promise<void>((resolve) => setTimeout(resolve, ms));

export class JobPoller {
  private startPromise: Promise<string> | null = null;
  private running = false;

  constructor(
    private readonly api: EditorApi,
    private readonly intervalMs: number = POLL_INTERVAL_MS,
    private readonly wait: (ms: number) => Promise<void> = sleep,
  ) {}

  get active(): boolean {
    return this.running;
  }

  /** Start a job and poll it until it settles; resolves with the final state. */
  async run(
    sessionId: string,
    config: Record<string, unknown>,
    callbacks: PollCallbacks = {},
  ): Promise<JobPayload> {
    if (this.running) throw new Error("a job is already being polled");
    this.running = true;
    this.startPromise = this.api
      .startAdaptation(sessionId, config)
      .then((started) => started.job_id);
    let lastIteration = -1;
    try {
      const jobId = await this.startPromise;
      for (;;) {
        const payload = await this.api.jobStatus(jobId);
        // the iteration counter from the server never goes backwards; keep
        // the rendered progress monotone regardless of response ordering
        if (payload.iteration >= lastIteration) {
          lastIteration = payload.iteration;
          callbacks.onProgress?.(payload);
        }
        if (payload.state === "done" || payload.state === "failed"
            || payload.state === "cancelled") {
          callbacks.onSettled?.(payload);
          return payload;
        }
        await this.wait(this.intervalMs);
      }
    } finally {
      this.running = false;
      this.startPromise = null;
    }
  }

  /** Request cancellation of the job currently being polled. */
  async cancel(): Promise<JobPayload | null> {
    if (this.startPromise === null) return null;
    const jobId = await this.startPromise;
    return this.api.cancelJob(jobId);
  }
}
