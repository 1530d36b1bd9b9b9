"""Tissue-depth distribution models.

The global model is a PCA of the joint depth vectors across training subjects;
its first-component coordinate is the one-parameter thickness control. The
regional model runs the same PCA independently inside each of the facial
regions so depths can be tuned locally without disturbing the rest.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    InsufficientDataError,
    InvalidInputError,
    PartitionError,
    RangeError,
    SchemaError,
)

DEPTH_FLOOR_MM = 0.5
RANGE_INFLATION = 0.25  # fraction of the training range added to each side


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TissueDepthVector:
    """One person's tissue depths (mm) over the landmark schema.

    ``warnings`` lists indices where a non-positive depth was produced by an
    inverse computation; such vectors are flagged, not rejected, because the
    editor may legitimately probe them.
    """

    depths: np.ndarray
    warnings: tuple[int, ...] = ()

    def __post_init__(self):
        d = np.ascontiguousarray(np.asarray(self.depths, dtype=np.float64)).reshape(-1)
        object.__setattr__(self, "depths", _readonly(d))
        object.__setattr__(self, "warnings", tuple(int(i) for i in self.warnings))

    def __len__(self) -> int:
        return len(self.depths)

    def to_json(self) -> dict:
        return {"depths": self.depths.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "TissueDepthVector":
        return cls(depths=np.asarray(obj["depths"], dtype=np.float64))


@dataclass(frozen=True)
class TddModel:
    """PCA statistics of training depths plus the first-component control range."""

    landmark_count: int
    sample_count: int
    mean: np.ndarray          # (n,)
    components: np.ndarray    # (r, n), orthonormal rows, non-increasing eigenvalues
    eigenvalues: np.ndarray   # (r,)
    c_range: tuple[float, float]

    def __post_init__(self):
        object.__setattr__(self, "mean", _readonly(np.asarray(self.mean, dtype=np.float64)))
        object.__setattr__(self, "components",
                           _readonly(np.asarray(self.components, dtype=np.float64)))
        object.__setattr__(self, "eigenvalues",
                           _readonly(np.asarray(self.eigenvalues, dtype=np.float64)))
        object.__setattr__(self, "c_range",
                           (float(self.c_range[0]), float(self.c_range[1])))

    @property
    def variance_ratios(self) -> np.ndarray:
        total = self.eigenvalues.sum()
        if total <= 0.0:
            out = np.zeros_like(self.eigenvalues)
            if len(out):
                out[0] = 1.0
            return out
        return self.eigenvalues / total

    def variance_ratio(self, k: int) -> float:
        """Fraction of training variance on component ``k`` (1-based)."""
        return float(self.variance_ratios[k - 1])

    def inflated_range(self) -> tuple[float, float]:
        lo, hi = self.c_range
        margin = RANGE_INFLATION * (hi - lo)
        return lo - margin, hi + margin

    def to_json(self) -> dict:
        return {
            "landmark_count": self.landmark_count,
            "sample_count": self.sample_count,
            "mean": self.mean.tolist(),
            "components": self.components.tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
            "c_range": [self.c_range[0], self.c_range[1]],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TddModel":
        return cls(
            landmark_count=int(obj["landmark_count"]),
            sample_count=int(obj["sample_count"]),
            mean=np.asarray(obj["mean"], dtype=np.float64),
            components=np.asarray(obj["components"], dtype=np.float64),
            eigenvalues=np.asarray(obj["eigenvalues"], dtype=np.float64),
            c_range=tuple(obj["c_range"]),
        )


@dataclass(frozen=True)
class RegionalTddModel:
    """Independent depth PCA per facial region over a partition of the schema."""

    landmark_count: int
    partition: dict[str, np.ndarray]
    models: dict[str, TddModel]

    def __post_init__(self):
        part = {name: _readonly(np.asarray(idx, dtype=np.int64))
                for name, idx in self.partition.items()}
        object.__setattr__(self, "partition", part)

    @property
    def region_names(self) -> list[str]:
        return list(self.partition.keys())

    @property
    def mean_vector(self) -> np.ndarray:
        """Region means composed back into a full-length depth vector."""
        out = np.zeros(self.landmark_count)
        for name, idx in self.partition.items():
            out[idx] = self.models[name].mean
        return out

    def to_json(self) -> dict:
        return {
            "landmark_count": self.landmark_count,
            "partition": {k: v.tolist() for k, v in self.partition.items()},
            "models": {k: m.to_json() for k, m in self.models.items()},
        }

    @classmethod
    def from_json(cls, obj: dict) -> "RegionalTddModel":
        return cls(
            landmark_count=int(obj["landmark_count"]),
            partition={k: np.asarray(v, dtype=np.int64) for k, v in obj["partition"].items()},
            models={k: TddModel.from_json(m) for k, m in obj["models"].items()},
        )


def _stack_training(training) -> np.ndarray:
    if len(training) < 2:
        raise InsufficientDataError(
            f"PCA fitting needs at least 2 samples, got {len(training)}"
        )
    rows = []
    n = None
    for i, t in enumerate(training):
        d = t.depths if isinstance(t, TissueDepthVector) else np.asarray(t, dtype=np.float64)
        if n is None:
            n = len(d)
        elif len(d) != n:
            raise SchemaError(f"sample {i} has length {len(d)}, expected {n}")
        rows.append(d)
    X = np.asarray(rows, dtype=np.float64)
    if np.any(X <= 0.0):
        raise InvalidInputError("training depths must all be positive")
    return X


def _fix_signs(components: np.ndarray) -> np.ndarray:
    """Deterministic sign convention.

    Component 1 points so larger C means thicker tissue (positive dot with the
    all-ones vector); later components make their largest-magnitude entry
    positive so refits reproduce identical model files.
    """
    comps = components.copy()
    if len(comps):
        ones = np.ones(comps.shape[1])
        s = comps[0] @ ones
        if abs(s) < 1e-12:
            nz = np.flatnonzero(np.abs(comps[0]) > 1e-12)
            s = comps[0][nz[0]] if len(nz) else 1.0
        if s < 0:
            comps[0] = -comps[0]
    for k in range(1, len(comps)):
        j = int(np.argmax(np.abs(comps[k])))
        if comps[k][j] < 0:
            comps[k] = -comps[k]
    return comps


def fit_tdd_global(training) -> TddModel:
    """Exact PCA of the centered training depths, all min(m-1, n) components kept."""
    X = _stack_training(training)
    m, n = X.shape
    mean = X.mean(axis=0)
    centered = X - mean
    _, svals, vt = np.linalg.svd(centered, full_matrices=False)
    r = min(m - 1, n)
    components = _fix_signs(vt[:r])
    eigenvalues = (svals[:r] ** 2) / (m - 1)
    projections = centered @ components[0]
    return TddModel(
        landmark_count=n,
        sample_count=m,
        mean=mean,
        components=components,
        eigenvalues=eigenvalues,
        c_range=(float(projections.min()), float(projections.max())),
    )


def project_c(model: TddModel, depths) -> float:
    """Coordinate of a depth vector along the first component axis."""
    d = depths.depths if isinstance(depths, TissueDepthVector) else np.asarray(depths, float)
    if len(d) != model.landmark_count:
        raise SchemaError(
            f"depth vector has length {len(d)}, model expects {model.landmark_count}"
        )
    return float(model.components[0] @ (d - model.mean))


def sample_global(model: TddModel, c: float) -> TissueDepthVector:
    """Depths at coordinate ``c`` along the thickness axis, positive-floored."""
    lo, hi = model.inflated_range()
    if not (lo <= c <= hi):
        raise RangeError(
            f"C={c} outside the allowed interval [{lo}, {hi}]", allowed=(lo, hi)
        )
    depths = model.mean + c * model.components[0]
    return TissueDepthVector(np.maximum(depths, DEPTH_FLOOR_MM))


def representative_depths(model: TddModel, training):
    """(thin, normal, fat) mean depth vectors of the C-sorted training terciles."""
    X = _stack_training(training)
    if len(X) < 3:
        raise InsufficientDataError("representative depths need at least 3 samples")
    proj = (X - model.mean) @ model.components[0]
    order = np.argsort(proj, kind="stable")
    groups = np.array_split(order, 3)
    thin, normal, fat = (TissueDepthVector(X[g].mean(axis=0)) for g in groups)
    return thin, normal, fat


def validate_partition(partition: dict, landmark_count: int) -> dict[str, np.ndarray]:
    """Check a region map is a true partition of {0..n-1}; return index arrays."""
    clean: dict[str, np.ndarray] = {}
    seen: dict[int, str] = {}
    duplicates: set[int] = set()
    out_of_range: set[int] = set()
    for name, idx in partition.items():
        arr = np.asarray(sorted(int(i) for i in idx), dtype=np.int64)
        for i in arr.tolist():
            if not (0 <= i < landmark_count):
                out_of_range.add(i)
            elif i in seen:
                duplicates.add(i)
            else:
                seen[i] = name
        clean[name] = arr
    if out_of_range:
        raise PartitionError(
            f"partition indices out of range: {sorted(out_of_range)}", out_of_range
        )
    if duplicates:
        raise PartitionError(
            f"partition regions overlap on indices: {sorted(duplicates)}", duplicates
        )
    missing = set(range(landmark_count)) - set(seen)
    if missing:
        raise PartitionError(
            f"partition does not cover indices: {sorted(missing)}", missing
        )
    return clean


def fit_tdd_regional(training, partition: dict) -> RegionalTddModel:
    """Independent TddModel per region over the region's columns."""
    X = _stack_training(training)
    n = X.shape[1]
    clean = validate_partition(partition, n)
    models = {name: fit_tdd_global(X[:, idx]) for name, idx in clean.items()}
    return RegionalTddModel(landmark_count=n, partition=clean, models=models)


def sample_regional(model: RegionalTddModel, base, region: str, c_local: float) -> TissueDepthVector:
    """Copy ``base`` with the named region replaced by its model at ``c_local``."""
    if region not in model.partition:
        raise InvalidInputError(
            f"unknown region {region!r}; known regions: {sorted(model.partition)}"
        )
    b = base.depths if isinstance(base, TissueDepthVector) else np.asarray(base, float)
    if len(b) != model.landmark_count:
        raise SchemaError(
            f"base vector has length {len(b)}, model expects {model.landmark_count}"
        )
    sub = model.models[region]
    lo, hi = sub.inflated_range()
    if not (lo <= c_local <= hi):
        raise RangeError(
            f"C={c_local} outside region {region!r} interval [{lo}, {hi}]",
            allowed=(lo, hi),
        )
    out = b.copy()
    out[model.partition[region]] = np.maximum(
        sub.mean + c_local * sub.components[0], DEPTH_FLOOR_MM
    )
    return TissueDepthVector(out)


def save_tdd(model, path) -> None:
    Path(path).write_text(json.dumps(model.to_json(), indent=2) + "\n", encoding="utf-8")


def load_tdd_global(path) -> TddModel:
    return TddModel.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def load_tdd_regional(path) -> RegionalTddModel:
    return RegionalTddModel.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def load_partition_file(path, landmark_count: int) -> dict[str, np.ndarray]:
    """Read a {region: [indices]} JSON file and validate it."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    return validate_partition(raw, landmark_count)
