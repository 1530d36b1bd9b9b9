// Editor state store: slider values clamped to server-reported ranges, render
// toggles, and a mirror of the active job. The store owns no geometry — scene
// content always comes from the latest server payload.

import type { ControlRanges, JobPayload, SessionPayload } from "./types.js";

export interface RenderToggles {
  skullSpheres: boolean;
  tissueSticks: boolean;
  targetLandmarks: boolean;
  faceMesh: boolean;
  residualOverlay: boolean;
}

export interface JobMirror {
  id: string | null;
  state: JobPayload["state"] | "idle";
  iteration: number;
  totalIterations: number;
  lossHistory: number[][];
}

export const clamp = (value: number, [lo, hi]: [number, number]): number =>
  Math.min(Math.max(value, lo), hi);

export class EditorState {
  session: SessionPayload | null = null;
  toggles: RenderToggles = {
    skullSpheres: true,
    tissueSticks: true,
    targetLandmarks: true,
    faceMesh: true,
    residualOverlay: false,
  };
  job: JobMirror = {
    id: null,
    state: "idle",
    iteration: 0,
    totalIterations: 0,
    lossHistory: [],
  };

  get ranges(): ControlRanges | null {
    return this.session?.ranges ?? null;
  }

  applySession(payload: SessionPayload): void {
    this.session = payload;
  }

  /** Clamped control request for a global slider move. */
  globalControlRequest(value: number): { c: number } {
    if (!this.ranges) throw new Error("no session loaded");
    return { c: clamp(value, this.ranges.global) };
  }

  /** Clamped control request for a regional slider move. */
  regionalControlRequest(region: string, value: number): { region: string; c_local: number } {
    const range = this.ranges?.regions[region];
    if (!range) throw new Error(`unknown region ${region}`);
    return { region, c_local: clamp(value, range) };
  }

  applyJob(payload: JobPayload): void {
    this.job = {
      id: payload.id,
      state: payload.state,
      iteration: payload.iteration,
      totalIterations: payload.total_iterations,
      lossHistory: payload.loss_history,
    };
  }

  /** Progress in [0, 1]; never decreases for a single job's poll sequence. */
  get progress(): number {
    if (this.job.totalIterations === 0) return 0;
    return this.job.iteration / this.job.totalIterations;
  }

  get jobRunning(): boolean {
    return this.job.state === "queued" || this.job.state === "running";
  }
}

/** Trailing-edge debounce used for slider -> PUT control calls. */
export function debounce<A extends unknown[]>(
  fn: (...args: A) => void,
  waitMs: number,
  timers: { set: typeof setTimeout; clear: typeof clearTimeout } = {
    set: setTimeout,
    clear: clearTimeout,
  },
): (...args: A) => void {
  let handle: ReturnType<typeof setTimeout> | null = null;
  return (...args: A) => {
    if (handle !== null) timers.clear(handle);
    handle = timers.set(() => {
      handle = null;
      fn(...args);
    }, waitMs);
  };
}
