"""Skull landmark schema, depth extension to facial landmarks, and symmetry pairing.

The shipped schema names 78 landmarks on a canonical head frame (+x toward the
left tragion, +y up, +z out the nose) with a left/right/mid classification and
a five-region assignment. Schema length is configurable; 78 is the default.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import SchemaError
from .tdd import TissueDepthVector

UNIT_TOL = 1e-6


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SkullLandmarkSet:
    """Skull landmark positions with outward unit normals."""

    positions: np.ndarray  # (n, 3) mm
    normals: np.ndarray    # (n, 3) unit outward

    def __post_init__(self):
        pos = np.ascontiguousarray(np.asarray(self.positions, dtype=np.float64))
        nrm = np.ascontiguousarray(np.asarray(self.normals, dtype=np.float64))
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise SchemaError(f"positions must be (n, 3), got {pos.shape}")
        if nrm.shape != pos.shape:
            raise SchemaError("normals must match positions in shape")
        lengths = np.linalg.norm(nrm, axis=1)
        if np.any(np.abs(lengths - 1.0) > UNIT_TOL):
            bad = int(np.argmax(np.abs(lengths - 1.0)))
            raise SchemaError(f"normal {bad} is not unit length (|n|={lengths[bad]!r})")
        object.__setattr__(self, "positions", _readonly(pos))
        object.__setattr__(self, "normals", _readonly(nrm))

    def __len__(self) -> int:
        return len(self.positions)

    def to_json(self, schema_name: str = "cranioforge-78") -> dict:
        return {
            "schema": schema_name,
            "positions": self.positions.tolist(),
            "normals": self.normals.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SkullLandmarkSet":
        return cls(
            positions=np.asarray(obj["positions"], dtype=np.float64),
            normals=np.asarray(obj["normals"], dtype=np.float64),
        )


@dataclass(frozen=True)
class FacialLandmarkSet:
    """Facial landmark positions (skull landmarks pushed out by tissue depth)."""

    positions: np.ndarray  # (n, 3) mm

    def __post_init__(self):
        pos = np.ascontiguousarray(np.asarray(self.positions, dtype=np.float64))
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise SchemaError(f"positions must be (n, 3), got {pos.shape}")
        object.__setattr__(self, "positions", _readonly(pos))

    def __len__(self) -> int:
        return len(self.positions)


@dataclass(frozen=True)
class SymmetryPairing:
    """Left/right landmark index pairing plus the midline indices.

    ``left[i]`` and ``right[i]`` are positional partners; together with ``mid``
    the three lists partition the schema.
    """

    left: np.ndarray
    right: np.ndarray
    mid: np.ndarray

    def __post_init__(self):
        left = np.asarray(self.left, dtype=np.int64)
        right = np.asarray(self.right, dtype=np.int64)
        mid = np.asarray(self.mid, dtype=np.int64)
        if len(left) != len(right):
            raise SchemaError("left and right index lists must have equal length")
        alln = np.sort(np.concatenate([left, right, mid]))
        if not np.array_equal(alln, np.arange(len(alln))):
            raise SchemaError("left/right/mid must partition the landmark indices")
        object.__setattr__(self, "left", _readonly(left))
        object.__setattr__(self, "right", _readonly(right))
        object.__setattr__(self, "mid", _readonly(mid))

    @property
    def size(self) -> int:
        return len(self.left) * 2 + len(self.mid)

    def to_json(self) -> dict:
        return {"left": self.left.tolist(), "right": self.right.tolist(),
                "mid": self.mid.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "SymmetryPairing":
        return cls(left=obj["left"], right=obj["right"], mid=obj["mid"])


class LandmarkSchema:
    """Named landmark slots with sides, regions, and canonical directions."""

    def __init__(self, obj: dict):
        self.name = obj["name"]
        self.landmark_names = [lm["name"] for lm in obj["landmarks"]]
        self.sides = [lm["side"] for lm in obj["landmarks"]]
        self.regions = [lm["region"] for lm in obj["landmarks"]]
        theta = np.radians([lm["theta_deg"] for lm in obj["landmarks"]])
        phi = np.radians([lm["phi_deg"] for lm in obj["landmarks"]])
        # canonical frame: +x left, +y up, +z out the nose
        self.directions = _readonly(np.column_stack([
            np.sin(phi) * np.sin(theta),
            np.cos(phi),
            np.sin(phi) * np.cos(theta),
        ]))
        self.mean_depths = _readonly(np.asarray(
            [lm["mean_depth_mm"] for lm in obj["landmarks"]], dtype=np.float64))
        self.thickness_weights = _readonly(np.asarray(
            [lm["thickness_weight"] for lm in obj["landmarks"]], dtype=np.float64))
        self.ear_left = self.landmark_names.index(obj["ear_left"])
        self.ear_right = self.landmark_names.index(obj["ear_right"])
        self.nose_tip = self.landmark_names.index(obj["nose_tip"])

    def __len__(self) -> int:
        return len(self.landmark_names)

    def index_of(self, name: str) -> int:
        return self.landmark_names.index(name)

    def pairing(self) -> SymmetryPairing:
        return SymmetryPairing(
            left=[i for i, s in enumerate(self.sides) if s == "left"],
            right=[i for i, s in enumerate(self.sides) if s == "right"],
            mid=[i for i, s in enumerate(self.sides) if s == "mid"],
        )

    def partition(self) -> dict[str, list[int]]:
        part: dict[str, list[int]] = {}
        for i, region in enumerate(self.regions):
            part.setdefault(region, []).append(i)
        return part


def _config_text(filename: str) -> str:
    return resources.files("cranioforge.config").joinpath(filename).read_text("utf-8")


def default_schema() -> LandmarkSchema:
    return LandmarkSchema(json.loads(_config_text("schema78.json")))


def default_pairing() -> SymmetryPairing:
    return SymmetryPairing.from_json(json.loads(_config_text("symmetry_pairing.json")))


def default_partition() -> dict:
    return json.loads(_config_text("region_partition.json"))


def extend_landmarks(skull: SkullLandmarkSet, depths) -> FacialLandmarkSet:
    """Push each skull landmark outward along its normal by its tissue depth."""
    d = depths.depths if isinstance(depths, TissueDepthVector) else np.asarray(depths, float)
    if len(d) != len(skull):
        raise SchemaError(f"{len(d)} depths for {len(skull)} landmarks")
    return FacialLandmarkSet(skull.positions + d[:, None] * skull.normals)


def implied_depths(skull: SkullLandmarkSet, facial: FacialLandmarkSet) -> TissueDepthVector:
    """Signed projection of facial-minus-skull displacement onto the normals.

    Non-positive depths are recorded on the result's ``warnings`` rather than
    raised; editing workflows may legitimately probe them.
    """
    if len(facial) != len(skull):
        raise SchemaError(f"{len(facial)} facial landmarks for {len(skull)} skull landmarks")
    d = np.einsum("ij,ij->i", facial.positions - skull.positions, skull.normals)
    bad = np.flatnonzero(d <= 0.0)
    return TissueDepthVector(d, warnings=tuple(int(i) for i in bad))


def save_skull_landmarks(skull: SkullLandmarkSet, path, schema_name="cranioforge-78") -> None:
    Path(path).write_text(json.dumps(skull.to_json(schema_name), indent=2) + "\n",
                          encoding="utf-8")


def load_skull_landmarks(path) -> SkullLandmarkSet:
    return SkullLandmarkSet.from_json(json.loads(Path(path).read_text(encoding="utf-8")))
