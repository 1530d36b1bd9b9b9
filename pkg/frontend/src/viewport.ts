// Orthographic viewport transform shared by the renderer and the contract
// tests: world coordinates (mm, canonical head frame) to screen pixels. This
// is the only coordinate math the client performs on server geometry.

import type { Vec3 } from "./types.js";

export interface Viewport {
  /** canvas size in pixels */
  width: number;
  height: number;
  /** world-space center of the view (mm) */
  center: Vec3;
  /** pixels per millimeter */
  scale: number;
  /** camera yaw about +y then pitch about +x, radians */
  yaw: number;
  pitch: number;
}

export function framedViewport(width: number, height: number): Viewport {
  // frame the 200 mm head with a small margin
  return {
    width,
    height,
    center: [0, 0, 0],
    scale: Math.min(width, height) / 260,
    yaw: 0,
    pitch: 0,
  };
}

function rotate([x, y, z]: Vec3, yaw: number, pitch: number): Vec3 {
  const cy = Math.cos(yaw);
  const sy = Math.sin(yaw);
  const x1 = cy * x + sy * z;
  const z1 = -sy * x + cy * z;
  const cp = Math.cos(pitch);
  const sp = Math.sin(pitch);
  const y2 = cp * y - sp * z1;
  const z2 = sp * y + cp * z1;
  return [x1, y2, z2];
}

/** World point to screen pixels (origin top-left, +x right, +y down). */
export function project(view: Viewport, p: Vec3): { x: number; y: number; depth: number } {
  const local: Vec3 = [p[0] - view.center[0], p[1] - view.center[1], p[2] - view.center[2]];
  const [x, y, depth] = rotate(local, view.yaw, view.pitch);
  return {
    x: view.width / 2 + x * view.scale,
    y: view.height / 2 - y * view.scale,
    depth,
  };
}

/** Inverse of {@link project} on the screen plane (depth supplied). */
export function unproject(view: Viewport, x: number, y: number, depth: number): Vec3 {
  const lx = (x - view.width / 2) / view.scale;
  const ly = (view.height / 2 - y) / view.scale;
  const rotated = rotate([lx, ly, depth], 0, -view.pitch);
  const [rx, ry, rz] = rotate(rotated, -view.yaw, 0);
  return [rx + view.center[0], ry + view.center[1], rz + view.center[2]];
}

/** Size one pixel subtends in world millimeters: the pixel-snap tolerance. */
export function pixelSnapToleranceMm(view: Viewport): number {
  return 1.0 / view.scale;
}
