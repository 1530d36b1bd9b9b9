"""Linear morphable face model: mean head plus orthonormal displacement fields.

``decode`` is exactly linear in the latent coefficients, which keeps every
landmark Jacobian constant and lets the adaptation module use closed-form
gradients. The synthetic builder produces a closed head-like template (UV
sphere with nose/brow/chin/cheek protrusions) and smooth localized basis
fields orthonormalized under the flattened-vertex inner product.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import InvalidInputError, SchemaError
from .landmarks import FacialLandmarkSet, LandmarkSchema, default_schema
from .mesh import TriMesh, read_obj, vertex_normals, write_obj

EAR_DISTANCE_MM = 200.0
UNIT_BASIS_TOL = 1e-6

# template geometry: longitude/latitude grid plus two poles
_N_THETA = 48
_N_PHI = 46
_AXES = np.array([75.0, 100.0, 90.0])  # x (ear-to-ear), y (up), z (nose)

# basis scale ladders (per-component standard deviations over landmark visibility)
_SYM_STRENGTH = 20.0
_SYM_DECAY = 0.93
_ASYM_STRENGTH = 1.4
_ASYM_DECAY = 0.93
_SCALE_CAP = 160.0
_ASYM_CAP = 25.0

# (theta_deg, phi_deg, amplitude_mm, sigma_rad); mirrored twins added for theta != 0/180
_FEATURE_BUMPS = [
    (0.0, 100.0, 24.0, 0.20),   # nose
    (20.0, 73.0, 6.0, 0.22),    # brow ridge
    (42.0, 92.0, 7.0, 0.28),    # cheekbone
    (0.0, 121.0, 7.0, 0.25),    # mouth area
    (0.0, 143.0, 12.0, 0.22),   # chin
    (55.0, 112.0, 5.0, 0.30),   # jaw
    (180.0, 80.0, 10.0, 0.50),  # occiput
]


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class FaceLatent:
    """Latent coefficient vector, in units of basis standard deviations."""

    coefficients: np.ndarray

    def __post_init__(self):
        c = np.ascontiguousarray(np.asarray(self.coefficients, dtype=np.float64)).reshape(-1)
        if not np.all(np.isfinite(c)):
            raise SchemaError("latent coefficients must be finite")
        object.__setattr__(self, "coefficients", _readonly(c))

    def __len__(self) -> int:
        return len(self.coefficients)

    @classmethod
    def zeros(cls, k: int) -> "FaceLatent":
        return cls(np.zeros(k))


@dataclass(frozen=True)
class MorphableFaceModel:
    template: TriMesh
    shape_basis: np.ndarray      # (K, V, 3), unit rows under the flattened inner product
    basis_scales: np.ndarray     # (K,) per-component standard deviations (mm)
    landmark_indices: np.ndarray  # (n,) vertex indices in schema order

    def __post_init__(self):
        basis = np.ascontiguousarray(np.asarray(self.shape_basis, dtype=np.float64))
        scales = np.asarray(self.basis_scales, dtype=np.float64).reshape(-1)
        idx = np.asarray(self.landmark_indices, dtype=np.int64).reshape(-1)
        if basis.ndim != 3 or basis.shape[1:] != (self.template.num_vertices, 3):
            raise SchemaError(
                f"shape_basis must be (K, {self.template.num_vertices}, 3), got {basis.shape}"
            )
        if len(scales) != len(basis):
            raise SchemaError("basis_scales must have one entry per component")
        if len(np.unique(idx)) != len(idx):
            raise SchemaError("landmark indices must be distinct")
        if idx.size and (idx.min() < 0 or idx.max() >= self.template.num_vertices):
            raise SchemaError("landmark indices out of vertex range")
        flat = basis.reshape(len(basis), -1)
        gram = flat @ flat.T
        if np.max(np.abs(gram - np.eye(len(basis)))) > UNIT_BASIS_TOL:
            raise SchemaError("basis columns must be orthonormal within 1e-6")
        object.__setattr__(self, "shape_basis", _readonly(basis))
        object.__setattr__(self, "basis_scales", _readonly(scales))
        object.__setattr__(self, "landmark_indices", _readonly(idx))

    @property
    def k(self) -> int:
        return len(self.shape_basis)

    @property
    def landmark_count(self) -> int:
        return len(self.landmark_indices)

    @cached_property
    def scaled_basis(self) -> np.ndarray:
        """(K, V, 3) basis with per-component scales folded in."""
        return _readonly(self.shape_basis * self.basis_scales[:, None, None])

    @cached_property
    def landmark_basis(self) -> np.ndarray:
        """(K, n, 3) scaled basis restricted to the landmark vertices."""
        return _readonly(np.ascontiguousarray(self.scaled_basis[:, self.landmark_indices, :]))


def decode(model: MorphableFaceModel, latent: FaceLatent) -> TriMesh:
    """Template plus the scale-weighted sum of basis displacements."""
    f = latent.coefficients
    if len(f) != model.k:
        raise SchemaError(f"latent has {len(f)} coefficients, model expects {model.k}")
    verts = model.template.vertices + np.tensordot(f, model.scaled_basis, axes=(0, 0))
    return TriMesh(vertices=verts, faces=model.template.faces)


def decode_landmarks(model: MorphableFaceModel, latent: FaceLatent) -> np.ndarray:
    """Landmark positions of the decoded face without building the full mesh."""
    f = latent.coefficients
    if len(f) != model.k:
        raise SchemaError(f"latent has {len(f)} coefficients, model expects {model.k}")
    base = model.template.vertices[model.landmark_indices]
    return base + np.tensordot(f, model.landmark_basis, axes=(0, 0))


def extract_landmarks(model: MorphableFaceModel, mesh: TriMesh) -> FacialLandmarkSet:
    """Positions of the schema landmark vertices, in schema order."""
    if mesh.num_vertices != model.template.num_vertices or not np.array_equal(
        mesh.faces, model.template.faces
    ):
        raise SchemaError("mesh topology does not match the model template")
    return FacialLandmarkSet(mesh.vertices[model.landmark_indices])


def _attribute_offsets() -> dict:
    text = resources.files("cranioforge.config").joinpath("attribute_offsets.json").read_text("utf-8")
    return json.loads(text)


def sample_prior(model: MorphableFaceModel, seed: int, attributes: dict | None = None) -> FaceLatent:
    """Deterministic prior draw: seeded standard normal plus attribute offsets."""
    table = _attribute_offsets()
    coeffs = np.random.default_rng(seed).standard_normal(model.k)
    for key, value in (attributes or {}).items():
        if key not in table:
            raise InvalidInputError(
                f"unknown attribute {key!r}; allowed attributes: {sorted(table)}"
            )
        if value not in table[key]:
            raise InvalidInputError(
                f"unknown value {value!r} for attribute {key!r}; "
                f"allowed values: {sorted(table[key])}"
            )
        for idx_str, delta in table[key][value].items():
            idx = int(idx_str)
            if idx < model.k:
                coeffs[idx] += float(delta)
    return FaceLatent(coeffs)


# ---------------------------------------------------------------------------
# synthetic model construction


def _radius(directions: np.ndarray) -> np.ndarray:
    """Head surface radius along each unit direction: ellipsoid plus feature bumps."""
    d = np.asarray(directions, dtype=np.float64)
    inv = (d / _AXES) ** 2
    r = 1.0 / np.sqrt(inv.sum(axis=-1))
    for theta_deg, phi_deg, amp, sigma in _FEATURE_BUMPS:
        centers = [(theta_deg, phi_deg)]
        if theta_deg not in (0.0, 180.0):
            centers.append((-theta_deg, phi_deg))
        for ct, cp in centers:
            c = _direction(np.radians(ct), np.radians(cp))
            ang = np.arccos(np.clip(d @ c, -1.0, 1.0))
            r = r + amp * np.exp(-0.5 * (ang / sigma) ** 2)
    return r


def _direction(theta: float, phi: float) -> np.ndarray:
    return np.array([np.sin(phi) * np.sin(theta), np.cos(phi), np.sin(phi) * np.cos(theta)])


def _mirror_permutation() -> np.ndarray:
    """Vertex permutation mapping each grid vertex to its x-mirror twin."""
    perm = np.empty(2 + _N_PHI * _N_THETA, dtype=np.int64)
    perm[0], perm[1] = 0, 1
    for i in range(_N_PHI):
        for j in range(_N_THETA):
            perm[2 + i * _N_THETA + j] = 2 + i * _N_THETA + ((_N_THETA - j) % _N_THETA)
    return perm


def _head_grid() -> tuple[np.ndarray, np.ndarray]:
    """Closed head mesh: (vertices, faces) with outward-facing winding."""
    phis = np.pi * (np.arange(_N_PHI) + 1) / (_N_PHI + 1)
    thetas = 2.0 * np.pi * np.arange(_N_THETA) / _N_THETA
    sin_t, cos_t = np.sin(thetas), np.cos(thetas)
    # force exact mirror symmetry about x=0: theta_j and theta_{N-j} are twins
    for j in range(1, _N_THETA // 2):
        sin_t[_N_THETA - j] = -sin_t[j]
        cos_t[_N_THETA - j] = cos_t[j]
    sin_p, cos_p = np.sin(phis), np.cos(phis)
    dirs = np.stack([
        np.outer(sin_p, sin_t),
        np.outer(cos_p, np.ones(_N_THETA)),
        np.outer(sin_p, cos_t),
    ], axis=-1).reshape(-1, 3)
    north = np.array([[0.0, 1.0, 0.0]])
    south = np.array([[0.0, -1.0, 0.0]])
    dirs = np.concatenate([north, south, dirs], axis=0)
    verts = dirs * _radius(dirs)[:, None]

    def vid(i: int, j: int) -> int:
        return 2 + i * _N_THETA + (j % _N_THETA)

    faces = []
    for j in range(_N_THETA):
        faces.append((0, vid(0, j + 1), vid(0, j)))
    for i in range(_N_PHI - 1):
        for j in range(_N_THETA):
            a, b = vid(i, j), vid(i, j + 1)
            c, d = vid(i + 1, j + 1), vid(i + 1, j)
            # mirror-symmetric diagonal choice: quads j and N-1-j are twins,
            # so their splits must mirror for vertex normals to mirror exactly
            if j < _N_THETA // 2:
                faces.append((a, b, c))
                faces.append((a, c, d))
            else:
                faces.append((b, c, d))
                faces.append((b, d, a))
    for j in range(_N_THETA):
        faces.append((1, vid(_N_PHI - 1, j), vid(_N_PHI - 1, j + 1)))
    faces = np.asarray(faces, dtype=np.int64)

    # orient outward: signed volume must be positive
    tri = verts[faces]
    volume = np.einsum("ij,ij->", tri[:, 0], np.cross(tri[:, 1], tri[:, 2])) / 6.0
    if volume < 0:
        faces = faces[:, ::-1]
    return verts, faces


def _snap_landmarks(verts: np.ndarray, schema: LandmarkSchema) -> np.ndarray:
    """Nearest template vertex to each canonical layout point, kept distinct."""
    layout = schema.directions * _radius(schema.directions)[:, None]
    indices = np.full(len(layout), -1, dtype=np.int64)
    used: set[int] = set()
    for i, p in enumerate(layout):
        d2 = np.einsum("ij,ij->i", verts - p, verts - p)
        for cand in np.argsort(d2, kind="stable"):
            if int(cand) not in used:
                indices[i] = int(cand)
                used.add(int(cand))
                break
    return indices


def _bump_field(dirs: np.ndarray, center: np.ndarray, sigma: float,
                direction: np.ndarray | None) -> np.ndarray:
    """Gaussian bump over the sphere; radial when ``direction`` is None."""
    ang = np.arccos(np.clip(dirs @ center, -1.0, 1.0))
    g = np.exp(-0.5 * (ang / sigma) ** 2)
    if direction is None:
        return g[:, None] * dirs
    return g[:, None] * direction[None, :]


def _kernel_field(dirs: np.ndarray, center: np.ndarray, radius: float,
                  direction: np.ndarray) -> np.ndarray:
    """Compactly supported (Wendland C2) bump: exactly zero beyond ``radius``.

    Compact support keeps detail components from leaking across facial-region
    boundaries, so regional depth edits stay local.
    """
    ang = np.arccos(np.clip(dirs @ center, -1.0, 1.0))
    t = np.clip(ang / radius, 0.0, 1.0)
    g = (1.0 - t) ** 4 * (4.0 * t + 1.0)
    return g[:, None] * direction[None, :]


def _mirror_x(points: np.ndarray) -> np.ndarray:
    out = points.copy()
    out[:, 0] = -out[:, 0]
    return out


def build_synthetic_model(seed: int, k: int = 58,
                          schema: LandmarkSchema | None = None) -> MorphableFaceModel:
    """Procedural head template with ``k`` orthonormal smooth displacement fields.

    Deterministic for a given seed; the template itself does not depend on the
    seed, only the anchor ordering and detail choices do. The template is
    rescaled so the tragion-to-tragion distance is exactly 200 mm.

    The basis combines similarity-motion fields (volume, dilation, rotations,
    translations) with compactly supported kernels anchored at the landmark
    slots and oriented along the template normals, built in exact
    symmetric/antisymmetric combinations. After mesh orthonormalization the
    basis is rotated to diagonalize its landmark-restricted Gram matrix, which
    decouples the landmark fit per latent coordinate so the fixed optimizer
    schedule converges. Component 0 is kept as the most volume-like eigenfield
    so attribute offsets on coefficient 0 stay meaningful, and antisymmetric
    components receive small standard deviations so sampled faces come out
    near-symmetric, as real faces do.
    """
    if k < 1:
        raise InvalidInputError("k must be >= 1")
    schema = schema or default_schema()
    verts, faces = _head_grid()
    if k > verts.size:
        raise InvalidInputError(f"k={k} exceeds the template's degrees of freedom {verts.size}")

    lmk_idx = _snap_landmarks(verts, schema)
    ear_l, ear_r = lmk_idx[schema.ear_left], lmk_idx[schema.ear_right]
    ear_dist = np.linalg.norm(verts[ear_l] - verts[ear_r])
    verts = verts * (EAR_DISTANCE_MM / ear_dist)

    dirs = verts / np.linalg.norm(verts, axis=1)[:, None]
    rng = np.random.default_rng(seed)

    fields = [dirs.copy()]  # component 0: overall volume (radial inflation)
    # similarity-motion fields (dilation, infinitesimal rotations, and
    # translations) let the fit absorb residual pose/scale misalignment left
    # by the coarse registration, like the pose modes real shape models pick
    # up from imperfectly aligned training scans
    fields.append(verts.copy())
    for axis in np.eye(3):
        fields.append(np.cross(np.broadcast_to(axis, verts.shape), verts))
        fields.append(np.broadcast_to(axis, verts.shape).copy())
    fields = fields[:k]

    pairing = schema.pairing()
    pair_map = dict(zip(pairing.left.tolist(), pairing.right.tolist()))
    # detail anchors cycle through the regions so every region gets movable
    # degrees of freedom; within a region the visiting order is seeded
    region_anchors: dict[str, list[int]] = {}
    for i, side in enumerate(schema.sides):
        if side in ("mid", "left"):
            region_anchors.setdefault(schema.regions[i], []).append(i)
    region_cycle = sorted(region_anchors)
    for name in region_cycle:
        region_anchors[name] = [
            region_anchors[name][j] for j in rng.permutation(len(region_anchors[name]))
        ]
    cursors = {name: 0 for name in region_cycle}

    def next_anchor() -> int:
        # round-robin over regions, but exhaust every region's distinct
        # anchors before any anchor repeats with a fresh direction
        nonlocal cycle_pos
        for _ in range(len(region_cycle)):
            name = region_cycle[cycle_pos % len(region_cycle)]
            cycle_pos += 1
            if cursors[name] < len(region_anchors[name]):
                break
        else:
            name = region_cycle[cycle_pos % len(region_cycle)]
            cycle_pos += 1
        slots = region_anchors[name]
        slot = slots[cursors[name] % len(slots)]
        cursors[name] += 1
        return slot

    radius = 0.20  # rad; below the cross-region landmark spacing
    cycle_pos = 0
    total_anchors = sum(len(v) for v in region_anchors.values())
    n_raw = k
    budget = n_raw - len(fields)
    # antisymmetric detail only once every anchor owns a symmetric kernel
    n_asym = min(3, max(0, budget - total_anchors)) if budget > 4 else 0
    # kernels displace along the template normal at their anchor: tissue-depth
    # constraints act along landmark normals, so this keeps regional depth
    # asks directly reachable instead of forcing oblique compromises
    template_normals = vertex_normals(TriMesh(vertices=verts, faces=faces))
    asym_fields: list[np.ndarray] = []
    while len(fields) + len(asym_fields) < n_raw:
        slot = next_anchor()
        center = schema.directions[slot]
        w = template_normals[lmk_idx[slot]]
        if slot in pair_map:
            half = _kernel_field(dirs, center, radius, w)
            twin = _kernel_field(dirs, schema.directions[pair_map[slot]], radius,
                                 template_normals[lmk_idx[pair_map[slot]]])
            fields.append(half + twin)
            if len(asym_fields) < n_asym and len(fields) + len(asym_fields) < n_raw:
                asym_fields.append(half - twin)
        else:
            fields.append(_kernel_field(dirs, center, radius, w))
    fields.extend(asym_fields)

    flat = np.stack([f.reshape(-1) for f in fields])
    q, r = np.linalg.qr(flat.T)
    if np.min(np.abs(np.diag(r))) < 1e-10:
        raise InvalidInputError("generated fields are rank deficient; change the seed")
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    basis = np.ascontiguousarray((q * signs).T.reshape(n_raw, len(verts), 3))

    # Rotate the basis so the landmark-restricted Gram matrix is exactly
    # diagonal: the landmark fit then decouples per latent coordinate and the
    # fixed optimizer schedule converges. A rotation changes neither the
    # span's locality (compact kernels) nor mesh-space orthonormality. The
    # most inflation-like eigenfield is moved to index 0 so attribute offsets
    # on coefficient 0 keep meaning overall volume.
    restricted = basis[:, lmk_idx, :].reshape(n_raw, -1)
    evals, evecs = np.linalg.eigh(restricted @ restricted.T)
    rot = evecs[:, np.argsort(evals)[::-1]].T
    basis = np.tensordot(rot, basis, axes=(1, 0))
    inflation = flat[0] / np.linalg.norm(flat[0])
    overlap = basis.reshape(k, -1) @ inflation
    lead = int(np.argmax(np.abs(overlap)))
    if overlap[lead] < 0:
        basis[lead] = -basis[lead]
    basis = basis[[lead] + [i for i in range(k) if i != lead]]
    flats = basis.reshape(k, -1)
    for comp in range(1, k):
        j = int(np.argmax(np.abs(flats[comp])))
        if flats[comp][j] < 0:
            basis[comp] = -basis[comp]
    basis = np.ascontiguousarray(basis)

    # parity of each component under the mesh's x-mirror map, used to damp
    # antisymmetric modes (faces are near-symmetric)
    perm = _mirror_permutation()
    mirrored = basis[:, perm, :].copy()
    mirrored[:, :, 0] = -mirrored[:, :, 0]
    parity = np.einsum("kvc,kvc->k", basis, mirrored)

    # Scales are chosen against each component's landmark visibility so every
    # column of the landmark Jacobian has comparable strength (weak columns
    # would amplify target noise into huge latent excursions). Symmetric
    # details carry the shape variance; antisymmetric ones are kept small.
    lam = np.einsum("kic,kic->k", basis[:, lmk_idx, :], basis[:, lmk_idx, :])
    scales = np.empty(k)
    n_sym = n_asym = 0
    for comp in range(k):
        vis = max(np.sqrt(lam[comp]), 1e-3)
        if parity[comp] >= 0.0:
            scales[comp] = min(_SYM_STRENGTH * (_SYM_DECAY ** n_sym) / vis, _SCALE_CAP)
            n_sym += 1
        else:
            scales[comp] = min(_ASYM_STRENGTH * (_ASYM_DECAY ** n_asym) / vis, _ASYM_CAP)
            n_asym += 1

    return MorphableFaceModel(
        template=TriMesh(vertices=verts, faces=faces),
        shape_basis=basis,
        basis_scales=scales,
        landmark_indices=lmk_idx,
    )


# ---------------------------------------------------------------------------
# model files: JSON header + OBJ template + float64 basis blob


def save_model(model: MorphableFaceModel, directory) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    header = {
        "format": "cranioforge-model-v1",
        "k": model.k,
        "vertex_count": model.template.num_vertices,
        "landmark_indices": model.landmark_indices.tolist(),
        "basis_scales": model.basis_scales.tolist(),
        "template": "template.obj",
        "basis_blob": "basis.f64",
        "blob_layout": "component-major, vertex-major within component, xyz innermost, little-endian float64",
    }
    (d / "model.json").write_text(json.dumps(header, indent=2) + "\n", encoding="utf-8")
    write_obj(model.template, d / "template.obj")
    model.shape_basis.astype("<f8").tofile(d / "basis.f64")


def load_model(directory) -> MorphableFaceModel:
    d = Path(directory)
    header = json.loads((d / "model.json").read_text(encoding="utf-8"))
    template = read_obj(d / header["template"])
    k, v = header["k"], header["vertex_count"]
    if template.num_vertices != v:
        raise SchemaError(f"template has {template.num_vertices} vertices, header says {v}")
    blob = np.fromfile(d / header["basis_blob"], dtype="<f8")
    if blob.size != k * v * 3:
        raise SchemaError(f"basis blob holds {blob.size} floats, expected {k * v * 3}")
    return MorphableFaceModel(
        template=template,
        shape_basis=blob.reshape(k, v, 3),
        basis_scales=np.asarray(header["basis_scales"], dtype=np.float64),
        landmark_indices=np.asarray(header["landmark_indices"], dtype=np.int64),
    )
