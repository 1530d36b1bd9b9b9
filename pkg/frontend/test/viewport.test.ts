import { describe, expect, it } from "vitest";

import { EditorApi } from "../src/api.js";
import {
  framedViewport,
  pixelSnapToleranceMm,
  project,
  unproject,
} from "../src/viewport.js";
import { parseObj } from "../src/obj.js";
import { ServerStub } from "./stub.js";
import type { Vec3 } from "../src/types.js";

describe("viewport transform against recorded payloads", () => {
  it("landmark render positions equal stub coordinates within pixel snap", async () => {
    const stub = new ServerStub();
    stub.install();
    const api = new EditorApi();
    const session = await api.createSession({ dataset_id: "pair0000" });

    const view = framedViewport(900, 700);
    view.yaw = 0.4;
    view.pitch = -0.2;
    const tolerance = pixelSnapToleranceMm(view);

    // the client performs no geometry math: the rendered position of each
    // landmark is the payload coordinate itself, so mapping it through the
    // viewport transform and back must reproduce the payload coordinate to
    // within what one pixel subtends
    for (const p of session.facial_landmarks as Vec3[]) {
      const screen = project(view, p);
      const snapped: [number, number] = [Math.round(screen.x), Math.round(screen.y)];
      const back = unproject(view, snapped[0], snapped[1], screen.depth);
      const err = Math.hypot(back[0] - p[0], back[1] - p[1], back[2] - p[2]);
      expect(err).toBeLessThanOrEqual(tolerance);
    }
  });

  it("round-trips exactly without pixel snapping", () => {
    const view = framedViewport(640, 480);
    view.yaw = 1.1;
    view.pitch = 0.7;
    const points: Vec3[] = [
      [0, 0, 0],
      [100, -50, 80],
      [-100, 120, -90],
    ];
    for (const p of points) {
      const s = project(view, p);
      const back = unproject(view, s.x, s.y, s.depth);
      expect(Math.hypot(back[0] - p[0], back[1] - p[1], back[2] - p[2]))
        .toBeLessThan(1e-9);
    }
  });

  it("frames the 200 mm head inside the canvas", async () => {
    const stub = new ServerStub();
    stub.install();
    const api = new EditorApi();
    const session = await api.createSession({ dataset_id: "pair0000" });
    const view = framedViewport(800, 600);
    for (const p of session.facial_landmarks as Vec3[]) {
      const s = project(view, p);
      expect(s.x).toBeGreaterThanOrEqual(0);
      expect(s.x).toBeLessThanOrEqual(view.width);
      expect(s.y).toBeGreaterThanOrEqual(0);
      expect(s.y).toBeLessThanOrEqual(view.height);
    }
  });

  it("tissue sticks derive only from payload values", async () => {
    const stub = new ServerStub();
    stub.install();
    const api = new EditorApi();
    const session = await api.createSession({ dataset_id: "pair0000" });
    // stick endpoints = skull + depth * normal, all payload-sourced; they must
    // land exactly on the facial landmark payload coordinates
    for (let i = 0; i < session.landmark_count; i += 1) {
      const s = session.skull_landmarks[i];
      const n = session.normals[i];
      const d = session.depths[i];
      const tip: Vec3 = [s[0] + n[0] * d, s[1] + n[1] * d, s[2] + n[2] * d];
      const f = session.facial_landmarks[i];
      expect(Math.hypot(tip[0] - f[0], tip[1] - f[1], tip[2] - f[2]))
        .toBeLessThan(1e-4);
    }
  });
});

describe("obj parsing", () => {
  it("reads the mesh endpoint format", async () => {
    const stub = new ServerStub();
    stub.install();
    const api = new EditorApi();
    const session = await api.createSession({ dataset_id: "pair0000" });
    const mesh = parseObj(await api.meshObj(session.id));
    expect(mesh.positions.length).toBe(9);
    expect(Array.from(mesh.indices)).toEqual([0, 1, 2]);
  });
});
