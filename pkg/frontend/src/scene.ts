// Three.js scene: skull landmark spheres, tissue-depth sticks, target
// landmark markers, the adapted face mesh, and the residual heat overlay.
// Pure display layer: all geometry arrives verbatim from server payloads.

import * as THREE from "three";
import { OrbitControls } from "three/examples/jsm/controls/OrbitControls.js";

import { residualColor } from "./colormap.js";
import type { ParsedMesh } from "./obj.js";
import type { RenderToggles } from "./state.js";
import type { SessionPayload, Vec3 } from "./types.js";

const SKULL_COLOR = 0xd8cfc0;
const STICK_COLOR = 0x3377ff; // tissue sticks render blue
const TARGET_COLOR = 0x2ecc40; // facial landmarks render green
const FACE_COLOR = 0xc9a58c;

export class EditorScene {
  readonly renderer: THREE.WebGLRenderer;
  readonly scene = new THREE.Scene();
  readonly camera: THREE.OrthographicCamera;
  readonly controls: OrbitControls;

  private skullSpheres = new THREE.Group();
  private sticks = new THREE.Group();
  private targets = new THREE.Group();
  private faceMesh: THREE.Mesh | null = null;

  constructor(canvas: HTMLCanvasElement) {
    this.renderer = new THREE.WebGLRenderer({ canvas, antialias: true });
    const aspect = canvas.clientWidth / Math.max(canvas.clientHeight, 1);
    // frame the 200 mm head with margin
    const half = 130;
    this.camera = new THREE.OrthographicCamera(
      -half * aspect, half * aspect, half, -half, 0.1, 2000,
    );
    this.camera.position.set(0, 0, 600);
    this.controls = new OrbitControls(this.camera, canvas);
    this.scene.background = new THREE.Color(0x11151a);
    this.scene.add(new THREE.AmbientLight(0xffffff, 0.65));
    const key = new THREE.DirectionalLight(0xffffff, 1.1);
    key.position.set(150, 220, 400);
    this.scene.add(key);
    this.scene.add(this.skullSpheres, this.sticks, this.targets);
  }

  renderSession(payload: SessionPayload): void {
    this.rebuildSpheres(payload.skull_landmarks);
    this.rebuildSticks(payload.skull_landmarks, payload.normals, payload.depths);
    this.rebuildTargets(payload.facial_landmarks);
    this.draw();
  }

  private rebuildSpheres(points: Vec3[]): void {
    this.skullSpheres.clear();
    const geometry = new THREE.SphereGeometry(1.8, 12, 12);
    const material = new THREE.MeshLambertMaterial({ color: SKULL_COLOR });
    for (const p of points) {
      const sphere = new THREE.Mesh(geometry, material);
      sphere.position.set(p[0], p[1], p[2]);
      this.skullSpheres.add(sphere);
    }
  }

  private rebuildSticks(points: Vec3[], normals: Vec3[], depths: number[]): void {
    this.sticks.clear();
    const positions = new Float32Array(points.length * 6);
    for (let i = 0; i < points.length; i += 1) {
      const [x, y, z] = points[i];
      const [nx, ny, nz] = normals[i];
      const d = depths[i];
      positions.set([x, y, z, x + nx * d, y + ny * d, z + nz * d], i * 6);
    }
    const geometry = new THREE.BufferGeometry();
    geometry.setAttribute("position", new THREE.BufferAttribute(positions, 3));
    this.sticks.add(new THREE.LineSegments(
      geometry, new THREE.LineBasicMaterial({ color: STICK_COLOR }),
    ));
  }

  private rebuildTargets(points: Vec3[]): void {
    this.targets.clear();
    const geometry = new THREE.SphereGeometry(1.4, 10, 10);
    const material = new THREE.MeshLambertMaterial({ color: TARGET_COLOR });
    for (const p of points) {
      const sphere = new THREE.Mesh(geometry, material);
      sphere.position.set(p[0], p[1], p[2]);
      this.targets.add(sphere);
    }
  }

  swapFaceMesh(mesh: ParsedMesh): void {
    if (this.faceMesh) this.scene.remove(this.faceMesh);
    const geometry = new THREE.BufferGeometry();
    geometry.setAttribute("position", new THREE.BufferAttribute(mesh.positions, 3));
    geometry.setIndex(new THREE.BufferAttribute(mesh.indices, 1));
    geometry.computeVertexNormals();
    this.faceMesh = new THREE.Mesh(
      geometry,
      new THREE.MeshLambertMaterial({
        color: FACE_COLOR, transparent: true, opacity: 0.92,
      }),
    );
    this.scene.add(this.faceMesh);
    this.draw();
  }

  /** Per-landmark residual heat markers on a fixed 0-5 mm ramp. */
  showResidualOverlay(targets: Vec3[], residualsMm: number[]): void {
    for (let i = 0; i < this.targets.children.length; i += 1) {
      const marker = this.targets.children[i] as THREE.Mesh;
      const [r, g, b] = residualColor(residualsMm[i] ?? 0);
      (marker.material as THREE.MeshLambertMaterial) = new THREE.MeshLambertMaterial({
        color: new THREE.Color(r, g, b),
      });
      marker.material = marker.material;
    }
    this.draw();
  }

  applyToggles(toggles: RenderToggles): void {
    this.skullSpheres.visible = toggles.skullSpheres;
    this.sticks.visible = toggles.tissueSticks;
    this.targets.visible = toggles.targetLandmarks;
    if (this.faceMesh) this.faceMesh.visible = toggles.faceMesh;
    this.draw();
  }

  draw(): void {
    this.controls.update();
    this.renderer.render(this.scene, this.camera);
  }
}
