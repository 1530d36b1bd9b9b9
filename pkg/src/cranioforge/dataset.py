"""Synthetic skull-face pair generation, canonical normalization, and splits.

Pairs are constructed so the tissue-depth distribution has a dominant first
mode: depths are a per-landmark mean profile plus a one-dimensional thickness
mode plus small orthogonal noise, with the mode carrying at least half the
variance. Skull landmarks are the face's landmark vertices pulled inward by
the drawn depths, so every pair satisfies the extension round trip exactly.

Canonical frame: ear midpoint at the origin, ear axis along +x (left ear on
the +x side), nose direction along +z, ear-to-ear distance 200 mm. This
stands in for the Frankfurt normalization of CT data: it removes pose and
scale the same way without needing orbital anatomy.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateGeometryError, GenerationError, InvalidInputError, SchemaError
from .facemodel import EAR_DISTANCE_MM, FaceLatent, MorphableFaceModel, decode
from .landmarks import (
    LandmarkSchema,
    SkullLandmarkSet,
    default_schema,
    extend_landmarks,
    load_skull_landmarks,
    save_skull_landmarks,
)
from .mesh import TriMesh, read_obj, vertex_normals, write_obj
from .registration import SimilarityTransform, apply_transform
from .tdd import TissueDepthVector


@dataclass(frozen=True)
class SkullFacePair:
    id: str
    skull_landmarks: SkullLandmarkSet
    face_mesh: TriMesh            # ground truth face
    gt_depths: TissueDepthVector
    gt_latent: FaceLatent | None = None  # generator-only; withheld from fitting


@dataclass(frozen=True)
class DatasetSplit:
    train: tuple[str, ...]
    test: tuple[str, ...]
    folds: tuple[tuple[str, ...], ...]

    def to_json(self) -> dict:
        return {
            "train": list(self.train),
            "test": list(self.test),
            "folds": [list(f) for f in self.folds],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "DatasetSplit":
        return cls(
            train=tuple(obj["train"]),
            test=tuple(obj["test"]),
            folds=tuple(tuple(f) for f in obj["folds"]),
        )


@dataclass(frozen=True)
class DepthSpec:
    """Controls for the synthetic depth generator.

    ``c_std`` is the standard deviation of the dominant thickness-mode
    coordinate. The orthogonal variation is mostly structured: smooth depth
    patterns derived from the face basis itself (normal projections of its
    displacement fields), so that sampled depth combinations correspond to
    reachable face shapes; ``noise_std`` adds a little unstructured jitter on
    top. Keeping ``c_std**2`` above the combined orthogonal variance preserves
    the first-mode dominance.
    """

    c_std: float = 4.5
    mode_count: int = 8
    mode_std: float = 1.4
    mode_decay: float = 0.9
    noise_std: float = 0.01
    latent_std: float = 0.25

    def mode_direction(self, schema: LandmarkSchema) -> np.ndarray:
        u = schema.thickness_weights.astype(np.float64)
        return u / np.linalg.norm(u)


def _structured_depth_modes(model: MorphableFaceModel, u1: np.ndarray,
                            count: int) -> np.ndarray:
    """Unit depth patterns from the basis fields' normal projections at the
    landmarks, orthogonalized against the thickness mode and each other."""
    if count <= 0:
        return np.zeros((0, len(u1)))
    normals = vertex_normals(model.template)[model.landmark_indices]
    modes = []
    basis = [u1]
    for comp in range(model.k):
        w = np.einsum("ic,ic->i", model.shape_basis[comp, model.landmark_indices, :],
                      normals)
        raw_norm = np.linalg.norm(w)
        full_norm = np.linalg.norm(
            model.shape_basis[comp, model.landmark_indices, :]
        )
        # only components whose landmark action is essentially along the
        # normals yield depth patterns the adaptation can absorb exactly
        if full_norm < 1e-9 or raw_norm / full_norm < 0.8:
            continue
        for b in basis:
            w = w - (w @ b) * b
        norm = np.linalg.norm(w)
        if norm < 0.3:  # already covered
            continue
        w = w / norm
        basis.append(w)
        modes.append(w)
        if len(modes) == count:
            break
    return np.asarray(modes)


def generate_pairs(model: MorphableFaceModel, count: int, seed: int,
                   depth_spec: DepthSpec | None = None,
                   schema: LandmarkSchema | None = None) -> list[SkullFacePair]:
    """Deterministic synthetic pairs: decode prior faces, attach drawn depths."""
    if count < 2:
        raise InvalidInputError(f"a dataset needs at least 2 pairs, got {count}")
    schema = schema or default_schema()
    spec = depth_spec or DepthSpec()
    if len(schema) != model.landmark_count:
        raise SchemaError("schema length does not match the model's landmark table")

    mean_profile = schema.mean_depths
    u1 = spec.mode_direction(schema)
    modes = _structured_depth_modes(model, u1, spec.mode_count)
    mode_stds = spec.mode_std * spec.mode_decay ** np.arange(len(modes))
    rng = np.random.default_rng(seed)

    pairs = []
    for i in range(count):
        latent = FaceLatent(spec.latent_std * rng.standard_normal(model.k))
        # draws truncated at 3 sigma keep depths positive without rejection
        c = np.clip(rng.normal(0.0, spec.c_std), -3 * spec.c_std, 3 * spec.c_std)
        amp = np.clip(rng.standard_normal(len(modes)), -3.0, 3.0) * mode_stds
        noise = rng.normal(0.0, spec.noise_std, len(schema))
        noise = noise - (noise @ u1) * u1
        depths = mean_profile + c * u1 + amp @ modes + noise
        if np.any(depths <= 0.0):
            bad = int(np.argmin(depths))
            raise GenerationError(
                f"depth spec produced a non-positive depth at landmark {bad} "
                f"({depths[bad]:.3f} mm); reduce the variation scales or raise "
                f"the mean profile"
            )

        face = decode(model, latent)
        normals = vertex_normals(face)[model.landmark_indices]
        face_lmk = face.vertices[model.landmark_indices]
        skull = SkullLandmarkSet(
            positions=face_lmk - depths[:, None] * normals,
            normals=normals,
        )
        pair = SkullFacePair(
            id=f"pair{i:04d}",
            skull_landmarks=skull,
            face_mesh=face,
            gt_depths=TissueDepthVector(depths),
            gt_latent=latent,
        )
        pairs.append(normalize_pair(pair, schema=schema))
    return pairs


def canonical_frame_transform(ear_left: np.ndarray, ear_right: np.ndarray,
                              nose: np.ndarray) -> SimilarityTransform:
    """Similarity transform into the ear/nose canonical frame."""
    axis = ear_left - ear_right
    ear_dist = np.linalg.norm(axis)
    if ear_dist < 1e-9:
        raise DegenerateGeometryError("ear landmarks coincide; cannot normalize")
    x_hat = axis / ear_dist
    mid = 0.5 * (ear_left + ear_right)
    w = nose - mid
    z_hat = w - (w @ x_hat) * x_hat
    z_len = np.linalg.norm(z_hat)
    if z_len < 1e-9:
        raise DegenerateGeometryError("nose landmark lies on the ear axis; cannot normalize")
    z_hat = z_hat / z_len
    y_hat = np.cross(z_hat, x_hat)
    rotation = np.stack([x_hat, y_hat, z_hat])
    scale = EAR_DISTANCE_MM / ear_dist
    translation = -scale * (rotation @ mid)
    return SimilarityTransform(scale=scale, rotation=rotation, translation=translation)


def normalize_pair(pair: SkullFacePair, schema: LandmarkSchema | None = None) -> SkullFacePair:
    """Map a pair into the canonical frame (and scale its depths consistently)."""
    schema = schema or default_schema()
    facial = extend_landmarks(pair.skull_landmarks, pair.gt_depths)
    tf = canonical_frame_transform(
        facial.positions[schema.ear_left],
        facial.positions[schema.ear_right],
        facial.positions[schema.nose_tip],
    )
    skull = SkullLandmarkSet(
        positions=apply_transform(tf, pair.skull_landmarks.positions),
        normals=pair.skull_landmarks.normals @ tf.rotation.T,
    )
    mesh = pair.face_mesh.with_vertices(apply_transform(tf, pair.face_mesh.vertices))
    depths = TissueDepthVector(pair.gt_depths.depths * tf.scale,
                               warnings=pair.gt_depths.warnings)
    return SkullFacePair(
        id=pair.id,
        skull_landmarks=skull,
        face_mesh=mesh,
        gt_depths=depths,
        gt_latent=pair.gt_latent,
    )


def ear_distance(pair: SkullFacePair, schema: LandmarkSchema | None = None) -> float:
    """Ear-to-ear distance of the pair's ground-truth face."""
    schema = schema or default_schema()
    facial = extend_landmarks(pair.skull_landmarks, pair.gt_depths)
    return float(np.linalg.norm(
        facial.positions[schema.ear_left] - facial.positions[schema.ear_right]
    ))


def kfold_split(ids, k: int, seed: int) -> DatasetSplit:
    """Shuffled partition into k folds (sizes within one); fold 0 is the holdout."""
    ids = list(ids)
    if k < 2:
        raise InvalidInputError("k must be >= 2")
    if k > len(ids):
        raise InvalidInputError(f"cannot split {len(ids)} ids into {k} folds")
    order = np.random.default_rng(seed).permutation(len(ids))
    folds = tuple(tuple(ids[i] for i in chunk) for chunk in np.array_split(order, k))
    test = folds[0]
    train = tuple(i for fold in folds[1:] for i in fold)
    return DatasetSplit(train=train, test=test, folds=folds)


# ---------------------------------------------------------------------------
# on-disk layout: {root}/{id}/skull_landmarks.json, face.obj, gt_depths.json,
# optional gt_latent.json; split file at {root}/split.json


def save_pair(pair: SkullFacePair, root) -> Path:
    d = Path(root) / pair.id
    d.mkdir(parents=True, exist_ok=True)
    save_skull_landmarks(pair.skull_landmarks, d / "skull_landmarks.json")
    write_obj(pair.face_mesh, d / "face.obj")
    (d / "gt_depths.json").write_text(
        json.dumps(pair.gt_depths.to_json(), indent=2) + "\n", encoding="utf-8"
    )
    if pair.gt_latent is not None:
        (d / "gt_latent.json").write_text(
            json.dumps({"coefficients": pair.gt_latent.coefficients.tolist()}, indent=2) + "\n",
            encoding="utf-8",
        )
    return d


def load_pair(root, pair_id: str) -> SkullFacePair:
    d = Path(root) / pair_id
    latent = None
    latent_path = d / "gt_latent.json"
    if latent_path.exists():
        latent = FaceLatent(np.asarray(
            json.loads(latent_path.read_text(encoding="utf-8"))["coefficients"],
            dtype=np.float64,
        ))
    return SkullFacePair(
        id=pair_id,
        skull_landmarks=load_skull_landmarks(d / "skull_landmarks.json"),
        face_mesh=read_obj(d / "face.obj"),
        gt_depths=TissueDepthVector.from_json(
            json.loads((d / "gt_depths.json").read_text(encoding="utf-8"))
        ),
        gt_latent=latent,
    )


def save_split(split: DatasetSplit, path) -> None:
    Path(path).write_text(json.dumps(split.to_json(), indent=2) + "\n", encoding="utf-8")


def load_split(path) -> DatasetSplit:
    return DatasetSplit.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def list_pair_ids(root) -> list[str]:
    root = Path(root)
    return sorted(
        p.name for p in root.iterdir()
        if p.is_dir() and (p / "skull_landmarks.json").exists()
    )
