"""Anatomy-guided face adaptation.

Optimizes a face latent code against aligned facial-landmark constraints by
minimizing a weighted sum of a landmark loss (correspondence-based squared
deviation), a projection loss (squared distance from each target to its
nearest mesh vertex), and a symmetry loss (midpoint deviation of left/right
partners about the least-squares mid-plane).

Gradients are analytic through the linear decoder. Nearest-vertex
correspondences and the fitted mid-plane are treated as fixed at the current
iterate (a sub-gradient convention): with them frozen the objective is exactly
quadratic in the latent, so the gradient is exact for the frozen functional
and both references are refreshed every iteration.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateGeometryError, InvalidInputError, SchemaError
from .facemodel import FaceLatent, MorphableFaceModel, decode, decode_landmarks
from .landmarks import (
    FacialLandmarkSet,
    SkullLandmarkSet,
    SymmetryPairing,
    extend_landmarks,
    implied_depths,
)
from .mesh import Plane, TriMesh, nearest_vertices, vertex_normals
from .registration import SimilarityTransform, apply_transform, estimate_similarity
from .tdd import (
    RegionalTddModel,
    TddModel,
    TissueDepthVector,
    project_c,
    sample_global,
    sample_regional,
)

# Second-moment memory is short because these gradients are exact (full-batch,
# no sampling noise): a long average only throttles steps while the gradient
# decays along the approach, which the fixed step schedule cannot afford.
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.95
ADAM_EPS = 1e-8

_CONFIG_FIELDS = (
    "alpha_lmk", "alpha_proj", "alpha_sym", "learning_rate", "decay_factor",
    "decay_every", "total_iterations", "weight_decay",
    "enable_lmk", "enable_proj", "enable_sym",
    "normalize_losses", "early_stop", "early_stop_window", "early_stop_delta",
)


@dataclass(frozen=True)
class AdaptationConfig:
    alpha_lmk: float = 5.0
    alpha_proj: float = 1.0
    alpha_sym: float = 1.0
    learning_rate: float = 1e-2
    decay_factor: float = 0.2
    decay_every: int = 200
    total_iterations: int = 1000
    weight_decay: float = 0.0
    enable_lmk: bool = True
    enable_proj: bool = True
    enable_sym: bool = True
    normalize_losses: bool = False
    early_stop: bool = False
    early_stop_window: int = 20
    early_stop_delta: float = 1e-9

    def __post_init__(self):
        if self.alpha_lmk < 0 or self.alpha_proj < 0 or self.alpha_sym < 0:
            raise InvalidInputError("loss weights must be >= 0")
        if self.total_iterations < 1:
            raise InvalidInputError("total_iterations must be >= 1")
        if not (0.0 < self.decay_factor <= 1.0):
            raise InvalidInputError("decay_factor must be in (0, 1]")
        if self.decay_every < 1:
            raise InvalidInputError("decay_every must be >= 1")
        if self.learning_rate <= 0:
            raise InvalidInputError("learning_rate must be positive")
        if self.weight_decay < 0:
            raise InvalidInputError("weight_decay must be >= 0")

    def weights(self) -> tuple[float, float, float]:
        return (
            self.alpha_lmk if self.enable_lmk else 0.0,
            self.alpha_proj if self.enable_proj else 0.0,
            self.alpha_sym if self.enable_sym else 0.0,
        )

    def to_json(self) -> dict:
        return {name: getattr(self, name) for name in _CONFIG_FIELDS}

    @classmethod
    def from_json(cls, obj: dict) -> "AdaptationConfig":
        unknown = set(obj) - set(_CONFIG_FIELDS)
        if unknown:
            raise SchemaError(f"unknown adaptation config keys: {sorted(unknown)}")
        return cls(**obj)

    @classmethod
    def from_file(cls, path) -> "AdaptationConfig":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class FrozenRefs:
    """Correspondence indices and mid-plane pinned at a reference iterate."""

    proj_indices: np.ndarray | None
    plane: Plane | None


@dataclass
class AdaptationResult:
    latent: FaceLatent
    final_mesh: TriMesh                  # in the face model's canonical frame
    aligned_targets: FacialLandmarkSet   # targets after the coarse alignment
    transform: SimilarityTransform       # maps raw targets into the model frame
    loss_history: np.ndarray             # (iterations, 4): total, lmk, proj, sym
    landmark_residuals: np.ndarray       # (n,) final |Q - P~| in mm
    midplane: Plane
    initial_loss: tuple[float, float, float, float]
    initial_residuals: np.ndarray
    completed_iterations: int
    cancelled: bool = False

    @property
    def final_loss(self) -> tuple[float, float, float, float]:
        if len(self.loss_history):
            return tuple(self.loss_history[-1])
        return self.initial_loss

    def mesh_in_target_frame(self) -> TriMesh:
        """Final mesh mapped back into the frame the raw targets came from."""
        inv = self.transform.inverse()
        return self.final_mesh.with_vertices(
            apply_transform(inv, self.final_mesh.vertices)
        )

    def diagnostics_json(self) -> dict:
        return {
            "loss_history": self.loss_history.tolist(),
            "initial_loss": list(self.initial_loss),
            "final_loss": list(self.final_loss),
            "landmark_residuals": self.landmark_residuals.tolist(),
            "initial_residuals": self.initial_residuals.tolist(),
            "transform": self.transform.to_json(),
            "midplane": {"normal": self.midplane.normal.tolist(),
                         "offset": self.midplane.offset},
            "completed_iterations": self.completed_iterations,
            "cancelled": self.cancelled,
            "latent": self.latent.coefficients.tolist(),
        }


def _positions(points) -> np.ndarray:
    if isinstance(points, FacialLandmarkSet):
        return points.positions
    return np.asarray(points, dtype=np.float64)


def loss_landmark(landmarks, targets) -> float:
    """Sum of squared deviations between paired landmark positions (mm^2)."""
    q = _positions(landmarks)
    p = _positions(targets)
    if q.shape != p.shape:
        raise SchemaError(f"landmark sets differ in shape: {q.shape} vs {p.shape}")
    diff = q - p
    return float(np.einsum("ij,ij->", diff, diff))


def loss_projection(mesh, targets) -> float:
    """Sum over targets of the squared distance to the nearest mesh vertex (mm^2)."""
    verts = mesh.vertices if isinstance(mesh, TriMesh) else np.asarray(mesh, float)
    p = _positions(targets)
    _, d2 = nearest_vertices(verts, p)
    return float(d2.sum())


def fit_midplane(points) -> Plane:
    """Total-least-squares plane through the mid landmarks.

    Normal is the smallest-eigenvalue direction of the covariance, sign-fixed
    toward +x (ties toward +y, then +z).
    """
    p = _positions(points)
    if len(p) < 3:
        raise DegenerateGeometryError(f"mid-plane fit needs >= 3 points, got {len(p)}")
    centroid = p.mean(axis=0)
    centered = p - centroid
    cov = centered.T @ centered
    evals, evecs = np.linalg.eigh(cov)
    if evals[1] <= 1e-12 * max(evals[2], 1e-30):
        raise DegenerateGeometryError("mid landmarks are collinear; mid-plane is undefined")
    normal = evecs[:, 0]
    for axis in range(3):
        if normal[axis] > 1e-12:
            break
        if normal[axis] < -1e-12:
            normal = -normal
            break
    return Plane(normal=normal, offset=float(-normal @ centroid))


def loss_symmetry(landmarks, pairing: SymmetryPairing, plane: Plane | None = None) -> float:
    """Squared deviation between actual and mirror-expected left/right midpoints."""
    q = _positions(landmarks)
    if len(q) != pairing.size:
        raise SchemaError(f"{len(q)} landmarks for a pairing of size {pairing.size}")
    if plane is None:
        plane = fit_midplane(q[pairing.mid])
    left = q[pairing.left]
    right = q[pairing.right]
    dist = left @ plane.normal + plane.offset
    reflected = left - 2.0 * dist[:, None] * plane.normal[None, :]
    h = 0.5 * (right - reflected)
    return float(np.einsum("ij,ij->", h, h))


class _Objective:
    """Loss/gradient engine for one adaptation problem (fixed aligned targets)."""

    def __init__(self, model: MorphableFaceModel, aligned_targets: np.ndarray,
                 pairing: SymmetryPairing, config: AdaptationConfig):
        n = model.landmark_count
        if aligned_targets.shape != (n, 3):
            raise SchemaError(
                f"targets must be ({n}, 3), got {aligned_targets.shape}"
            )
        if pairing.size != n:
            raise SchemaError("symmetry pairing does not match the landmark schema")
        self.model = model
        self.targets = aligned_targets
        self.pairing = pairing
        self.a0, self.a1, self.a2 = config.weights()
        if config.normalize_losses:
            self.lmk_norm = 1.0 / n
            self.proj_norm = 1.0 / n
            self.sym_norm = 1.0 / max(len(pairing.left), 1)
        else:
            self.lmk_norm = self.proj_norm = self.sym_norm = 1.0
        self.lmk_base = model.template.vertices[model.landmark_indices]
        self.lmk_basis = model.landmark_basis          # (K, n, 3)
        self.template = model.template.vertices
        self.basis = model.scaled_basis                # (K, V, 3)
        self.need_mesh = self.a1 > 0.0

    def landmarks_at(self, f: np.ndarray) -> np.ndarray:
        return self.lmk_base + np.tensordot(f, self.lmk_basis, axes=(0, 0))

    def vertices_at(self, f: np.ndarray) -> np.ndarray:
        return self.template + np.tensordot(f, self.basis, axes=(0, 0))

    def refs_at(self, f: np.ndarray) -> FrozenRefs:
        """Correspondences and mid-plane as chosen at iterate ``f``."""
        q = self.landmarks_at(f)
        proj_idx = None
        if self.need_mesh:
            proj_idx, _ = nearest_vertices(self.vertices_at(f), self.targets)
        plane = fit_midplane(q[self.pairing.mid]) if self.a2 > 0.0 else None
        return FrozenRefs(proj_indices=proj_idx, plane=plane)

    def evaluate(self, f: np.ndarray, frozen: FrozenRefs | None = None,
                 with_grad: bool = True):
        """Losses (and optionally the gradient) at ``f``.

        When ``frozen`` is None the correspondences/plane are taken at ``f``
        itself, which is what the optimizer does each step.
        """
        q = self.landmarks_at(f)
        grad = np.zeros(self.model.k) if with_grad else None

        l_lmk = 0.0
        if self.a0 > 0.0:
            r = q - self.targets
            l_lmk = float(np.einsum("ij,ij->", r, r)) * self.lmk_norm
            if with_grad:
                grad += (2.0 * self.a0 * self.lmk_norm) * np.einsum(
                    "nc,knc->k", r, self.lmk_basis
                )

        l_proj = 0.0
        if self.a1 > 0.0:
            verts = self.vertices_at(f)
            if frozen is not None and frozen.proj_indices is not None:
                idx = frozen.proj_indices
            else:
                idx, _ = nearest_vertices(verts, self.targets)
            rp = verts[idx] - self.targets
            l_proj = float(np.einsum("ij,ij->", rp, rp)) * self.proj_norm
            if with_grad:
                grad += (2.0 * self.a1 * self.proj_norm) * np.einsum(
                    "pc,kpc->k", rp, self.basis[:, idx, :]
                )

        l_sym = 0.0
        if self.a2 > 0.0:
            if frozen is not None and frozen.plane is not None:
                plane = frozen.plane
            else:
                plane = fit_midplane(q[self.pairing.mid])
            nrm = plane.normal
            left = q[self.pairing.left]
            right = q[self.pairing.right]
            dist = left @ nrm + plane.offset
            reflected = left - 2.0 * dist[:, None] * nrm[None, :]
            h = 0.5 * (right - reflected)
            l_sym = float(np.einsum("ij,ij->", h, h)) * self.sym_norm
            if with_grad:
                # dL/dq_right = h ; dL/dq_left = -(I - 2 n n^T) h
                g_left = -(h - 2.0 * np.outer(h @ nrm, nrm))
                grad += (self.a2 * self.sym_norm) * (
                    np.einsum("pc,kpc->k", h, self.lmk_basis[:, self.pairing.right, :])
                    + np.einsum("pc,kpc->k", g_left,
                                self.lmk_basis[:, self.pairing.left, :])
                )

        total = self.a0 * l_lmk + self.a1 * l_proj + self.a2 * l_sym
        return total, (l_lmk, l_proj, l_sym), grad


def total_loss(model: MorphableFaceModel, latent: FaceLatent, targets, pairing,
               config: AdaptationConfig, frozen: FrozenRefs | None = None):
    """Weighted objective at a latent. Returns (total, {lmk, proj, sym})."""
    obj = _Objective(model, _positions(targets), pairing, config)
    total, (l_lmk, l_proj, l_sym), _ = obj.evaluate(
        np.asarray(latent.coefficients, dtype=np.float64), frozen=frozen, with_grad=False
    )
    return total, {"lmk": l_lmk, "proj": l_proj, "sym": l_sym}


def gradient(model: MorphableFaceModel, latent: FaceLatent, targets, pairing,
             config: AdaptationConfig) -> np.ndarray:
    """Exact gradient of the frozen-reference objective at the latent."""
    obj = _Objective(model, _positions(targets), pairing, config)
    _, _, grad = obj.evaluate(np.asarray(latent.coefficients, dtype=np.float64))
    return grad


def frozen_refs(model: MorphableFaceModel, latent: FaceLatent, targets, pairing,
                config: AdaptationConfig) -> FrozenRefs:
    """References (correspondences, plane) pinned at the given latent."""
    obj = _Objective(model, _positions(targets), pairing, config)
    return obj.refs_at(np.asarray(latent.coefficients, dtype=np.float64))


def adapt_face(model: MorphableFaceModel, f_init: FaceLatent, targets: FacialLandmarkSet,
               pairing: SymmetryPairing, config: AdaptationConfig | None = None,
               progress=None, cancel=None) -> AdaptationResult:
    """Two-step adaptation: coarse Procrustes alignment, then AdamW refinement.

    The constraints are transformed toward the initial face's landmarks so the
    face model stays in its own canonical frame. Deterministic for identical
    inputs. ``progress(iteration, losses)`` is invoked once per iteration and
    ``cancel`` (an object with ``is_set()``) is honored between iterations.
    """
    config = config or AdaptationConfig()
    q_init = decode_landmarks(model, f_init)
    transform = estimate_similarity(_positions(targets), q_init)
    p_tilde = apply_transform(transform, _positions(targets))

    obj = _Objective(model, p_tilde, pairing, config)
    fit_midplane(q_init[pairing.mid])  # fail fast on a degenerate mid set

    f = f_init.coefficients.astype(np.float64).copy()
    m = np.zeros_like(f)
    v = np.zeros_like(f)

    total, comps, grad = obj.evaluate(f)
    initial_loss = (total, *comps)
    initial_residuals = np.linalg.norm(obj.landmarks_at(f) - p_tilde, axis=1)

    history = np.zeros((config.total_iterations, 4))
    completed = 0
    cancelled = False

    for t in range(1, config.total_iterations + 1):
        lr = config.learning_rate * config.decay_factor ** ((t - 1) // config.decay_every)
        m = ADAM_BETA1 * m + (1.0 - ADAM_BETA1) * grad
        v = ADAM_BETA2 * v + (1.0 - ADAM_BETA2) * grad * grad
        m_hat = m / (1.0 - ADAM_BETA1 ** t)
        v_hat = v / (1.0 - ADAM_BETA2 ** t)
        f = f - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS) - lr * config.weight_decay * f

        total, comps, grad = obj.evaluate(f)
        history[t - 1] = (total, *comps)
        completed = t
        if progress is not None:
            progress(t, (total, *comps))
        if cancel is not None and cancel.is_set():
            cancelled = True
            break
        if config.early_stop and t >= config.early_stop_window:
            window = history[t - config.early_stop_window:t, 0]
            if window.max() - window.min() < config.early_stop_delta:
                break

    final_latent = FaceLatent(f)
    final_mesh = decode(model, final_latent)
    q_final = obj.landmarks_at(f)
    return AdaptationResult(
        latent=final_latent,
        final_mesh=final_mesh,
        aligned_targets=FacialLandmarkSet(p_tilde),
        transform=transform,
        loss_history=history[:completed],
        landmark_residuals=np.linalg.norm(q_final - p_tilde, axis=1),
        midplane=fit_midplane(q_final[pairing.mid]),
        initial_loss=initial_loss,
        initial_residuals=initial_residuals,
        completed_iterations=completed,
        cancelled=cancelled,
    )


def _clamp(value: float, interval: tuple[float, float]) -> float:
    return min(max(value, interval[0]), interval[1])


def edit_shape(model: MorphableFaceModel, f_current: FaceLatent, tdd, control: dict,
               pairing: SymmetryPairing, config: AdaptationConfig | None = None,
               skull: SkullLandmarkSet | None = None,
               current_depths: TissueDepthVector | None = None,
               progress=None, cancel=None) -> AdaptationResult:
    """Re-target the current face to depths sampled at a new control value.

    The current face's landmarks and a depth estimate define (proxy) skull
    landmarks; resampled depths extend them back out to new targets and the
    face is re-adapted from its current latent. Regional controls leave all
    out-of-region targets exactly where the current landmarks are.
    """
    global_model = tdd if isinstance(tdd, TddModel) else None
    regional_model = tdd if isinstance(tdd, RegionalTddModel) else None
    if global_model is None and regional_model is None:
        raise InvalidInputError("tdd must be a TddModel or RegionalTddModel")

    q = decode_landmarks(model, f_current)

    if skull is not None:
        normals = skull.normals
        base_positions = skull.positions
        d0 = (current_depths if current_depths is not None
              else implied_depths(skull, FacialLandmarkSet(q)))
    else:
        mesh_normals = vertex_normals(decode(model, f_current))
        normals = mesh_normals[model.landmark_indices]
        if current_depths is not None:
            d0 = current_depths
        elif global_model is not None:
            d0 = sample_global(global_model, 0.0)
        else:
            d0 = TissueDepthVector(np.maximum(regional_model.mean_vector, 0.5))
        if global_model is not None and current_depths is not None:
            c0 = _clamp(project_c(global_model, current_depths),
                        global_model.inflated_range())
            d0 = sample_global(global_model, c0)
        base_positions = q - d0.depths[:, None] * normals
        skull = SkullLandmarkSet(positions=base_positions, normals=normals)

    if "c" in control:
        if global_model is None:
            raise InvalidInputError("global control requires a TddModel")
        d_new = sample_global(global_model, float(control["c"]))
    elif "region" in control:
        if regional_model is None:
            raise InvalidInputError("regional control requires a RegionalTddModel")
        d_new = sample_regional(regional_model, d0, control["region"],
                                float(control["c_local"]))
    else:
        raise InvalidInputError("control must carry either 'c' or 'region'+'c_local'")

    targets = extend_landmarks(skull, d_new)
    return adapt_face(model, f_current, targets, pairing, config,
                      progress=progress, cancel=cancel)
