"""Closed-form similarity-transform (Procrustes) alignment between point sets."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGeometryError, SchemaError


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SimilarityTransform:
    """x -> scale * rotation @ x + translation, with det(rotation) = +1."""

    scale: float
    rotation: np.ndarray     # (3, 3)
    translation: np.ndarray  # (3,)

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        s = float(self.scale)
        if s <= 0.0:
            raise SchemaError(f"scale must be positive, got {s}")
        if np.max(np.abs(R.T @ R - np.eye(3))) > 1e-9:
            raise SchemaError("rotation must be orthonormal within 1e-9")
        if abs(np.linalg.det(R) - 1.0) > 1e-9:
            raise SchemaError("rotation must have determinant +1 within 1e-9")
        object.__setattr__(self, "scale", s)
        object.__setattr__(self, "rotation", _readonly(R))
        object.__setattr__(self, "translation", _readonly(t))

    @classmethod
    def identity(cls) -> "SimilarityTransform":
        return cls(scale=1.0, rotation=np.eye(3), translation=np.zeros(3))

    def inverse(self) -> "SimilarityTransform":
        Rinv = self.rotation.T
        return SimilarityTransform(
            scale=1.0 / self.scale,
            rotation=Rinv,
            translation=-(Rinv @ self.translation) / self.scale,
        )

    def compose(self, other: "SimilarityTransform") -> "SimilarityTransform":
        """Transform equal to applying ``other`` first, then ``self``."""
        return SimilarityTransform(
            scale=self.scale * other.scale,
            rotation=self.rotation @ other.rotation,
            translation=self.scale * (self.rotation @ other.translation) + self.translation,
        )

    def to_json(self) -> dict:
        return {
            "scale": self.scale,
            "rotation": self.rotation.ravel().tolist(),
            "translation": self.translation.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SimilarityTransform":
        return cls(
            scale=obj["scale"],
            rotation=np.asarray(obj["rotation"], dtype=np.float64).reshape(3, 3),
            translation=np.asarray(obj["translation"], dtype=np.float64),
        )


def apply_transform(transform: SimilarityTransform, points: np.ndarray) -> np.ndarray:
    """s * R @ x + t for each row of ``points``."""
    p = np.asarray(points, dtype=np.float64)
    return transform.scale * (p @ transform.rotation.T) + transform.translation


def estimate_similarity(source: np.ndarray, target: np.ndarray) -> SimilarityTransform:
    """Least-squares similarity transform taking ``source`` onto ``target``.

    Closed-form solution via the SVD of the cross-covariance; reflections are
    excluded by flipping the sign of the smallest singular direction when the
    determinant would come out negative.
    """
    X = np.asarray(source, dtype=np.float64)
    Y = np.asarray(target, dtype=np.float64)
    if X.shape != Y.shape:
        raise SchemaError(f"point counts differ: {X.shape} vs {Y.shape}")
    n = len(X)
    if n < 3:
        raise DegenerateGeometryError(f"similarity estimation needs >= 3 points, got {n}")

    mu_x = X.mean(axis=0)
    mu_y = Y.mean(axis=0)
    Xc = X - mu_x
    Yc = Y - mu_y

    spread = np.linalg.svd(Xc, compute_uv=False)
    if spread[0] < 1e-12 or spread[1] < 1e-9 * spread[0]:
        raise DegenerateGeometryError(
            "source points are coincident or collinear; similarity transform is not unique"
        )

    cov = (Yc.T @ Xc) / n
    U, D, Vt = np.linalg.svd(cov)
    sign = np.sign(np.linalg.det(U) * np.linalg.det(Vt))
    S = np.diag([1.0, 1.0, sign if sign != 0 else 1.0])
    R = U @ S @ Vt
    var_x = np.einsum("ij,ij->", Xc, Xc) / n
    scale = float(np.trace(np.diag(D) @ S) / var_x)
    t = mu_y - scale * (R @ mu_x)
    return SimilarityTransform(scale=scale, rotation=R, translation=t)
