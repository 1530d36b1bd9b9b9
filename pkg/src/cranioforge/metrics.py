"""Reconstruction-error evaluation: normalized mean error and set summaries."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .errors import InvalidInputError
from .mesh import TriMesh


def nme(reconstructed: TriMesh, ground_truth: TriMesh, ear_distance: float) -> float:
    """Mean distance from each ground-truth vertex to its nearest reconstructed
    vertex, normalized by the ground-truth ear-to-ear distance (dimensionless).

    Directional by definition: nme(F, G, d) != nme(G, F, d) in general.
    """
    if reconstructed.num_vertices == 0 or ground_truth.num_vertices == 0:
        raise InvalidInputError("nme requires non-empty meshes")
    if ear_distance <= 0.0:
        raise InvalidInputError(f"ear distance must be positive, got {ear_distance}")
    tree = cKDTree(reconstructed.vertices)
    dists, _ = tree.query(ground_truth.vertices)
    return float(dists.sum() / (ear_distance * ground_truth.num_vertices))


def nme_to_mm(error: float, ear_distance: float) -> float:
    """Millimeter equivalent of a normalized error at a given ear distance."""
    return error * ear_distance


@dataclass(frozen=True)
class EvalReport:
    per_pair_nme: dict[str, float]
    mean: float
    max: float
    std: float          # population standard deviation across pairs
    mean_mm: float      # mean of per-pair E * ear distance

    def to_json(self) -> dict:
        return {
            "per_pair_nme": dict(sorted(self.per_pair_nme.items())),
            "mean": self.mean,
            "max": self.max,
            "std": self.std,
            "mean_mm": self.mean_mm,
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n", encoding="utf-8")


def evaluate_set(results: dict[str, TriMesh], ground_truths: dict[str, TriMesh],
                 ear_distances) -> EvalReport:
    """Per-pair NME plus Mean/Max/Std summaries.

    ``ear_distances`` may be a scalar applied to all pairs or a per-id map.
    """
    missing = sorted(set(results) - set(ground_truths))
    if missing:
        raise InvalidInputError(f"missing ground truth for ids: {missing}")
    if not results:
        raise InvalidInputError("no results to evaluate")

    def d_for(pair_id: str) -> float:
        if isinstance(ear_distances, dict):
            return float(ear_distances[pair_id])
        return float(ear_distances)

    per_pair = {
        pair_id: nme(mesh, ground_truths[pair_id], d_for(pair_id))
        for pair_id, mesh in results.items()
    }
    values = np.array(list(per_pair.values()))
    mm = np.array([per_pair[i] * d_for(i) for i in per_pair])
    return EvalReport(
        per_pair_nme=per_pair,
        mean=float(values.mean()),
        max=float(values.max()),
        std=float(values.std()),  # population (ddof=0)
        mean_mm=float(mm.mean()),
    )


def format_table(rows: dict[str, EvalReport]) -> str:
    """Fixed-width text table: Mean (%), Max (%), Std. per labeled report."""
    width = max([len(r) for r in rows] + [10])
    lines = [f"{'Method'.ljust(width)}  Mean (%)  Max (%)   Std."]
    for label, report in rows.items():
        lines.append(
            f"{label.ljust(width)}  {100 * report.mean:8.3f}  {100 * report.max:8.3f}"
            f"  {100 * report.std:6.3f}"
        )
    return "\n".join(lines)
