// DOM bootstrap: session loading, the global slider plus five regional
// sliders, the adapt/cancel buttons, progress bar, and loss sparkline.

import { EditorApi, ServiceError } from "./api.js";
import { parseObj } from "./obj.js";
import { JobPoller } from "./polling.js";
import { EditorScene } from "./scene.js";
import { EditorState, debounce } from "./state.js";
import type { JobPayload, SessionPayload } from "./types.js";

const api = new EditorApi("");
const state = new EditorState();
const poller = new JobPoller(api);

const canvas = document.getElementById("scene") as HTMLCanvasElement;
const scene = new EditorScene(canvas);

const el = <T extends HTMLElement>(id: string): T =>
  document.getElementById(id) as T;

function toast(message: string): void {
  const box = el<HTMLDivElement>("toast");
  box.textContent = message;
  box.classList.add("visible");
  setTimeout(() => box.classList.remove("visible"), 4000);
}

function renderSession(payload: SessionPayload): void {
  state.applySession(payload);
  scene.renderSession(payload);
  const [lo, hi] = payload.ranges.global;
  const slider = el<HTMLInputElement>("global-slider");
  slider.min = String(lo);
  slider.max = String(hi);
  slider.step = "0.01";
  slider.value = String(payload.control.global_c);
  const regions = el<HTMLDivElement>("region-sliders");
  regions.innerHTML = "";
  for (const [region, range] of Object.entries(payload.ranges.regions)) {
    const row = document.createElement("label");
    row.className = "slider-row";
    const input = document.createElement("input");
    input.type = "range";
    input.min = String(range[0]);
    input.max = String(range[1]);
    input.step = "0.01";
    input.value = String(payload.control.regional_c[region] ?? 0);
    input.addEventListener("input", () => pushRegional(region, Number(input.value)));
    row.append(`${region} `, input);
    regions.append(row);
  }
  el<HTMLSpanElement>("session-label").textContent = payload.id;
}

const pushGlobal = debounce(async (value: number) => {
  if (!state.session) return;
  try {
    renderSession(await api.setControl(state.session.id,
                                       state.globalControlRequest(value)));
  } catch (error) {
    handleControlError(error);
  }
}, 100);

const pushRegional = debounce(async (region: string, value: number) => {
  if (!state.session) return;
  try {
    renderSession(await api.setControl(
      state.session.id, state.regionalControlRequest(region, value),
    ));
  } catch (error) {
    handleControlError(error);
  }
}, 100);

function handleControlError(error: unknown): void {
  if (error instanceof ServiceError && error.status === 422) {
    const allowed = error.payload.detail?.allowed;
    toast(`value clamped to [${allowed?.[0]?.toFixed(2)}, ${allowed?.[1]?.toFixed(2)}]`);
  } else if (error instanceof ServiceError) {
    toast(error.payload.message);
  } else {
    toast(String(error));
  }
}

function drawSparkline(history: number[][]): void {
  const spark = el<HTMLCanvasElement>("sparkline");
  const ctx = spark.getContext("2d");
  if (!ctx || history.length === 0) return;
  ctx.clearRect(0, 0, spark.width, spark.height);
  const totals = history.map((row) => Math.log10(Math.max(row[0], 1e-12)));
  const lo = Math.min(...totals);
  const hi = Math.max(...totals);
  ctx.strokeStyle = "#7fd4ff";
  ctx.beginPath();
  totals.forEach((value, i) => {
    const x = (i / Math.max(totals.length - 1, 1)) * spark.width;
    const y = spark.height - ((value - lo) / Math.max(hi - lo, 1e-9)) * spark.height;
    if (i === 0) ctx.moveTo(x, y);
    else ctx.lineTo(x, y);
  });
  ctx.stroke();
}

function onJobProgress(payload: JobPayload): void {
  state.applyJob(payload);
  const bar = el<HTMLProgressElement>("progress");
  bar.max = payload.total_iterations;
  bar.value = payload.iteration;
  el<HTMLSpanElement>("progress-label").textContent =
    `${payload.iteration}/${payload.total_iterations}`;
  drawSparkline(payload.loss_history);
}

async function onAdapt(): Promise<void> {
  if (!state.session || poller.active) {
    toast("adaptation already running");
    return;
  }
  try {
    const settled = await poller.run(state.session.id, {}, {
      onProgress: onJobProgress,
    });
    state.applyJob(settled);
    if (settled.state === "done") {
      const [session, objText, residuals] = await Promise.all([
        api.getSession(state.session.id),
        api.meshObj(state.session.id),
        api.residuals(state.session.id),
      ]);
      renderSession(session);
      scene.swapFaceMesh(parseObj(objText));
      if (state.toggles.residualOverlay && residuals.landmark_residuals) {
        scene.showResidualOverlay(session.facial_landmarks,
                                  residuals.landmark_residuals);
      }
    } else if (settled.state === "failed") {
      toast(`adaptation failed: ${settled.error}`);
    }
  } catch (error) {
    if (error instanceof ServiceError && error.status === 409) {
      toast("adaptation already running");
    } else {
      handleControlError(error);
    }
  }
}

async function onLoad(): Promise<void> {
  const datasetId = el<HTMLInputElement>("dataset-id").value.trim();
  try {
    renderSession(await api.createSession({ dataset_id: datasetId, seed: 0 }));
    const objText = await api.meshObj(state.session!.id);
    scene.swapFaceMesh(parseObj(objText));
  } catch (error) {
    handleControlError(error);
  }
}

el<HTMLButtonElement>("load").addEventListener("click", onLoad);
el<HTMLButtonElement>("adapt").addEventListener("click", onAdapt);
el<HTMLButtonElement>("cancel").addEventListener("click", () => poller.cancel());
el<HTMLInputElement>("global-slider").addEventListener("input", (event) =>
  pushGlobal(Number((event.target as HTMLInputElement).value)),
);
for (const name of ["skullSpheres", "tissueSticks", "targetLandmarks", "faceMesh",
                    "residualOverlay"] as const) {
  el<HTMLInputElement>(`toggle-${name}`).addEventListener("change", (event) => {
    state.toggles[name] = (event.target as HTMLInputElement).checked;
    scene.applyToggles(state.toggles);
  });
}

function loop(): void {
  scene.draw();
  requestAnimationFrame(loop);
}
loop();
