// Payload shapes of the editing service. The client never invents geometry:
// every coordinate rendered comes verbatim from one of these responses.

export type Vec3 = [number, number, number];

export interface ControlRanges {
  global: [number, number];
  regions: Record<string, [number, number]>;
}

export interface SessionPayload {
  id: string;
  landmark_count: number;
  skull_landmarks: Vec3[];
  normals: Vec3[];
  depths: number[];
  facial_landmarks: Vec3[];
  control: { global_c: number; regional_c: Record<string, number> };
  ranges: ControlRanges;
  active_job: string | null;
  has_result: boolean;
}

export interface JobPayload {
  id: string;
  session_id: string;
  state: "queued" | "running" | "done" | "failed" | "cancelled";
  iteration: number;
  total_iterations: number;
  latest_loss: [number, number, number, number] | null;
  loss_history: number[][];
  error: string | null;
}

export interface StartJobPayload {
  job_id: string;
  poll: string;
}

export interface ResidualsPayload {
  landmark_residuals: number[] | null;
  final_loss?: number[];
}

export interface ApiError {
  code: string;
  message: string;
  detail?: { allowed?: [number, number] } | null;
}
