import type {
  ApiError,
  JobPayload,
  ResidualsPayload,
  SessionPayload,
  StartJobPayload,
} from "./types.js";

export class ServiceError extends Error {
  constructor(
    readonly status: number,
    readonly payload: ApiError,
  ) {
    super(payload.message);
  }
}

async function request<T>(base: string, path: string, init?: RequestInit): Promise<T> {
  const response = await fetch(`${base}${path}`, init);
  if (!response.ok) {
    const payload = (await response.json().catch(() => ({
      code: "Unknown",
      message: response.statusText,
    }))) as ApiError;
    throw new ServiceError(response.status, payload);
  }
  return (await response.json()) as T;
}

const json = (body: unknown): RequestInit => ({
  method: "POST",
  headers: { "Content-Type": "application/json" },
  body: JSON.stringify(body),
});

export class EditorApi {
  constructor(readonly base: string = "") {}

  createSession(body: { dataset_id?: string; skull?: unknown; seed?: number }) {
    return request<SessionPayload>(this.base, "/sessions", json(body));
  }

  getSession(id: string) {
    return request<SessionPayload>(this.base, `/sessions/${id}`);
  }

  setControl(id: string, control: { c?: number; region?: string; c_local?: number }) {
    return request<SessionPayload>(this.base, `/sessions/${id}/control`, {
      ...json(control),
      method: "PUT",
    });
  }

  startAdaptation(id: string, config: Record<string, unknown> = {}) {
    return request<StartJobPayload>(this.base, `/sessions/${id}/adapt`, json({ config }));
  }

  jobStatus(jobId: string) {
    return request<JobPayload>(this.base, `/jobs/${jobId}`);
  }

  cancelJob(jobId: string) {
    return request<JobPayload>(this.base, `/jobs/${jobId}`, { method: "DELETE" });
  }

  residuals(id: string) {
    return request<ResidualsPayload>(this.base, `/sessions/${id}/residuals`);
  }

  async meshObj(id: string): Promise<string> {
    const response = await fetch(`${this.base}/sessions/${id}/mesh`);
    if (!response.ok) {
      throw new ServiceError(response.status, {
        code: "MeshUnavailable",
        message: response.statusText,
      });
    }
    return response.text();
  }
}
