"""Triangle meshes, planes, and the geometric queries shared by the whole stack.

All coordinates are millimeters. Types are immutable after construction and
every operation here is a pure function, so instances can be shared freely
across threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateGeometryError, InvalidInputError, SchemaError

UNIT_TOL = 1e-6


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TriMesh:
    """Indexed triangle mesh with optional per-vertex unit normals."""

    vertices: np.ndarray              # (V, 3) float64
    faces: np.ndarray                 # (F, 3) int64, 0-based
    normals: np.ndarray | None = None  # (V, 3) unit vectors

    def __post_init__(self):
        verts = np.ascontiguousarray(np.asarray(self.vertices, dtype=np.float64))
        faces = np.ascontiguousarray(np.asarray(self.faces, dtype=np.int64))
        if verts.ndim != 2 or verts.shape[1] != 3:
            raise SchemaError(f"vertices must be (V, 3), got {verts.shape}")
        if faces.size == 0:
            faces = faces.reshape(0, 3)
        if faces.ndim != 2 or faces.shape[1] != 3:
            raise SchemaError(f"faces must be (F, 3), got {faces.shape}")
        if faces.size and (faces.min() < 0 or faces.max() >= len(verts)):
            raise SchemaError(
                f"face indices must lie in [0, {len(verts)}), "
                f"got range [{faces.min()}, {faces.max()}]"
            )
        object.__setattr__(self, "vertices", _readonly(verts))
        object.__setattr__(self, "faces", _readonly(faces))
        if self.normals is not None:
            nrm = np.ascontiguousarray(np.asarray(self.normals, dtype=np.float64))
            if nrm.shape != verts.shape:
                raise SchemaError("normals must match vertices in shape")
            lengths = np.linalg.norm(nrm, axis=1)
            if np.any(np.abs(lengths - 1.0) > UNIT_TOL):
                raise SchemaError("stored normals must have unit length within 1e-6")
            object.__setattr__(self, "normals", _readonly(nrm))

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_faces(self) -> int:
        return len(self.faces)

    def with_vertices(self, vertices: np.ndarray) -> "TriMesh":
        """Same connectivity, new vertex positions (normals dropped)."""
        return TriMesh(vertices=vertices, faces=self.faces)


@dataclass(frozen=True)
class Plane:
    """Plane {p : normal . p + offset = 0}; offset is the signed distance of the origin."""

    normal: np.ndarray  # (3,) unit vector
    offset: float       # mm

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=np.float64).reshape(3)
        length = np.linalg.norm(n)
        if abs(length - 1.0) > 1e-9:
            raise SchemaError(f"plane normal must be unit length within 1e-9, |n|={length!r}")
        object.__setattr__(self, "normal", _readonly(n))
        object.__setattr__(self, "offset", float(self.offset))

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) @ self.normal + self.offset


def nearest_vertex(mesh: TriMesh, query) -> tuple[int, float]:
    """Index and squared distance of the mesh vertex closest to ``query``.

    Ties are broken toward the lowest index (argmin keeps the first minimum),
    matching the linear-scan reference exactly.
    """
    if mesh.num_vertices == 0:
        raise InvalidInputError("nearest_vertex requires a mesh with at least one vertex")
    q = np.asarray(query, dtype=np.float64).reshape(3)
    diff = mesh.vertices - q
    d2 = np.einsum("ij,ij->i", diff, diff)
    idx = int(np.argmin(d2))
    return idx, float(d2[idx])


def nearest_vertices(vertices: np.ndarray, queries: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized nearest-vertex lookup for a batch of query points.

    Returns (indices, squared distances); ties break toward the lowest index.
    """
    if len(vertices) == 0:
        raise InvalidInputError("nearest_vertices requires at least one vertex")
    q = np.asarray(queries, dtype=np.float64)
    # |v - q|^2 = |v|^2 - 2 v.q + |q|^2; the |q|^2 term does not move the argmin
    v2 = np.einsum("ij,ij->i", vertices, vertices)
    d2 = v2[None, :] - 2.0 * (q @ vertices.T)
    idx = np.argmin(d2, axis=1)
    diff = vertices[idx] - q
    return idx, np.einsum("ij,ij->i", diff, diff)


def reflect_point(point, plane: Plane) -> np.ndarray:
    """Mirror image of a point across a plane. Applying twice returns the input."""
    p = np.asarray(point, dtype=np.float64)
    dist = p @ plane.normal + plane.offset
    return p - 2.0 * np.multiply.outer(dist, plane.normal)


def vertex_normals(mesh: TriMesh) -> np.ndarray:
    """Per-vertex unit normals as the area-weighted mean of incident face normals.

    Raises if any vertex belongs to no face (isolated) or its incident face
    normals cancel out.
    """
    verts, faces = mesh.vertices, mesh.faces
    tri = verts[faces]
    # cross product of edge vectors = 2 * area * unit normal, so summing it
    # directly gives the area weighting
    fn = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    acc = np.zeros_like(verts)
    for c in range(3):
        np.add.at(acc, faces[:, c], fn)
    counted = np.zeros(len(verts), dtype=bool)
    counted[faces.ravel()] = True
    if not counted.all():
        bad = int(np.flatnonzero(~counted)[0])
        raise InvalidInputError(f"vertex {bad} is isolated (belongs to no face)")
    lengths = np.linalg.norm(acc, axis=1)
    if np.any(lengths < 1e-12):
        bad = int(np.flatnonzero(lengths < 1e-12)[0])
        raise DegenerateGeometryError(f"incident face normals cancel at vertex {bad}")
    return acc / lengths[:, None]


def read_obj(path) -> TriMesh:
    """Read a Wavefront OBJ containing ``v`` and ``f`` records.

    Face corners may carry texture/normal slashes (``f 1/1/1 ...``); everything
    after the first slash is ignored. Indices are 1-based per the format.
    """
    verts: list[list[float]] = []
    faces: list[list[int]] = []
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            parts = raw.split()
            if not parts:
                continue
            tag = parts[0]
            if tag == "v":
                if len(parts) < 4:
                    raise SchemaError(f"{path}:{lineno}: vertex record needs 3 coordinates")
                verts.append([float(x) for x in parts[1:4]])
            elif tag == "f":
                corners = [int(tok.split("/")[0]) for tok in parts[1:]]
                if len(corners) != 3:
                    raise SchemaError(
                        f"{path}:{lineno}: only triangle faces are supported "
                        f"(got {len(corners)} corners)"
                    )
                faces.append([c - 1 for c in corners])
    return TriMesh(vertices=np.array(verts, dtype=np.float64).reshape(-1, 3),
                   faces=np.array(faces, dtype=np.int64).reshape(-1, 3))


def write_obj(mesh: TriMesh, path) -> None:
    """Write vertices and faces in ASCII OBJ with 9 significant digits."""
    path = Path(path)
    lines = []
    for v in mesh.vertices:
        lines.append(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}")
    for f in mesh.faces:
        lines.append(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def obj_bytes(mesh: TriMesh) -> bytes:
    """OBJ document as bytes (same format as :func:`write_obj`)."""
    lines = [f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}" for v in mesh.vertices]
    lines += [f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}" for f in mesh.faces]
    return ("\n".join(lines) + "\n").encode("utf-8")
