// Recorded-response server stub: replays genuine backend payloads and logs
// every request so contract tests can assert on what the client sent.

import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import type { JobPayload, SessionPayload } from "../src/types.js";

const here = dirname(fileURLToPath(import.meta.url));
const recorded = JSON.parse(readFileSync(join(here, "recorded.json"), "utf-8")) as {
  session: SessionPayload;
  job_done: JobPayload;
  residuals: { landmark_residuals: number[]; final_loss: number[] };
};

export interface LoggedRequest {
  method: string;
  path: string;
  body: unknown;
}

export interface StubOptions {
  /** job poll responses served in order before the final settled payload */
  pollIterations?: number[];
  jobFinalState?: JobPayload["state"];
}

export class ServerStub {
  readonly requests: LoggedRequest[] = [];
  session: SessionPayload;
  private polls: JobPayload[];
  private pollCursor = 0;

  constructor(options: StubOptions = {}) {
    this.session = structuredClone(recorded.session);
    const iterations = options.pollIterations ?? [3, 7, 12];
    const finalState = options.jobFinalState ?? "done";
    const done = structuredClone(recorded.job_done);
    this.polls = iterations.map((iteration, idx) => ({
      ...structuredClone(done),
      state: "running" as const,
      iteration,
      loss_history: done.loss_history.slice(0, iteration),
      latest_loss: done.loss_history[Math.max(iteration - 1, 0)] as JobPayload["latest_loss"],
    }));
    this.polls.push({ ...done, state: finalState });
  }

  get recordedSession(): SessionPayload {
    return structuredClone(recorded.session);
  }

  get recordedResiduals(): number[] {
    return [...recorded.residuals.landmark_residuals];
  }

  /** install as global fetch */
  install(): void {
    globalThis.fetch = this.fetch.bind(this) as typeof fetch;
  }

  private respond(status: number, payload: unknown, contentType = "application/json"): Response {
    const body = contentType === "application/json"
      ? JSON.stringify(payload) : String(payload);
    return new Response(body, { status, headers: { "content-type": contentType } });
  }

  async fetch(input: string | URL | Request, init?: RequestInit): Promise<Response> {
    const url = typeof input === "string" ? input : input.toString();
    const path = url.replace(/^https?:\/\/[^/]+/, "");
    const method = init?.method ?? "GET";
    const body = init?.body ? JSON.parse(String(init.body)) : null;
    this.requests.push({ method, path, body });

    if (method === "POST" && path === "/sessions") {
      return this.respond(201, this.session);
    }
    if (method === "GET" && path === `/sessions/${this.session.id}`) {
      return this.respond(200, this.session);
    }
    if (method === "PUT" && path === `/sessions/${this.session.id}/control`) {
      const ranges = this.session.ranges;
      if (body.c !== undefined) {
        if (body.c < ranges.global[0] || body.c > ranges.global[1]) {
          return this.respond(422, {
            code: "RangeError",
            message: "out of range",
            detail: { allowed: ranges.global },
          });
        }
        this.session.control.global_c = body.c;
      } else if (body.region !== undefined) {
        const range = ranges.regions[body.region];
        if (!range) {
          return this.respond(400, { code: "InvalidInputError", message: "unknown region" });
        }
        if (body.c_local < range[0] || body.c_local > range[1]) {
          return this.respond(422, {
            code: "RangeError", message: "out of range", detail: { allowed: range },
          });
        }
        this.session.control.regional_c[body.region] = body.c_local;
      }
      return this.respond(200, this.session);
    }
    if (method === "POST" && path === `/sessions/${this.session.id}/adapt`) {
      return this.respond(202, { job_id: "job0001", poll: "/jobs/job0001" });
    }
    if (method === "GET" && path === "/jobs/job0001") {
      const payload = this.polls[Math.min(this.pollCursor, this.polls.length - 1)];
      this.pollCursor += 1;
      return this.respond(200, payload);
    }
    if (method === "DELETE" && path === "/jobs/job0001") {
      const cancelled = { ...this.polls[this.polls.length - 1], state: "cancelled" };
      this.polls = [cancelled as JobPayload];
      this.pollCursor = 0;
      return this.respond(200, cancelled);
    }
    if (method === "GET" && path === `/sessions/${this.session.id}/residuals`) {
      return this.respond(200, recorded.residuals);
    }
    if (method === "GET" && path === `/sessions/${this.session.id}/mesh`) {
      return this.respond(200, "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n", "model/obj");
    }
    return this.respond(404, { code: "NotFound", message: path });
  }
}
