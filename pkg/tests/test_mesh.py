import numpy as np
import pytest

from cranioforge.errors import InvalidInputError, SchemaError
from cranioforge.mesh import (
    Plane,
    TriMesh,
    nearest_vertex,
    nearest_vertices,
    read_obj,
    reflect_point,
    vertex_normals,
    write_obj,
)


def cube_with_face_centers():
    """Unit cube, each square face split into 4 triangles via its center.

    Every corner then touches two equal-area triangles per adjacent face, so
    area weighting reduces to the plain average of the three face normals.
    """
    corners = np.array([
        [0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0],
        [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1],
    ], dtype=float)
    # quads with outward winding (viewed from outside)
    quads = [
        (0, 3, 2, 1),  # z = 0
        (4, 5, 6, 7),  # z = 1
        (0, 1, 5, 4),  # y = 0
        (2, 3, 7, 6),  # y = 1
        (1, 2, 6, 5),  # x = 1
        (0, 4, 7, 3),  # x = 0
    ]
    verts = list(corners)
    faces = []
    for quad in quads:
        center = corners[list(quad)].mean(axis=0)
        ci = len(verts)
        verts.append(center)
        for a, b in zip(quad, quad[1:] + quad[:1]):
            faces.append((a, b, ci))
    return TriMesh(vertices=np.array(verts), faces=np.array(faces))


class TestTriMesh:
    def test_face_index_validation(self):
        with pytest.raises(SchemaError):
            TriMesh(vertices=np.zeros((3, 3)), faces=[[0, 1, 3]])

    def test_normals_must_be_unit(self):
        with pytest.raises(SchemaError):
            TriMesh(vertices=np.eye(3), faces=[[0, 1, 2]], normals=np.eye(3) * 2.0)

    def test_immutable(self):
        mesh = TriMesh(vertices=np.eye(3), faces=[[0, 1, 2]])
        with pytest.raises(ValueError):
            mesh.vertices[0, 0] = 5.0


class TestNearestVertex:
    def test_coincident_point(self):
        verts = np.arange(30, dtype=float).reshape(10, 3)
        mesh = TriMesh(vertices=verts, faces=[[0, 1, 2]])
        assert nearest_vertex(mesh, verts[7]) == (7, 0.0)

    def test_two_candidates(self):
        mesh = TriMesh(vertices=[[0, 0, 0], [5, 5, 5]], faces=np.zeros((0, 3), int))
        idx, d2 = nearest_vertex(mesh, [0, 0, 1])
        assert idx == 0
        assert d2 == pytest.approx(1.0)

    def test_tie_breaks_to_lowest_index(self):
        mesh = TriMesh(vertices=[[1, 0, 0], [-1, 0, 0]], faces=np.zeros((0, 3), int))
        idx, d2 = nearest_vertex(mesh, [0, 0, 0])
        assert idx == 0
        assert d2 == pytest.approx(1.0)

    def test_empty_mesh_rejected(self):
        mesh = TriMesh(vertices=np.zeros((0, 3)), faces=np.zeros((0, 3), int))
        with pytest.raises(InvalidInputError):
            nearest_vertex(mesh, [0, 0, 0])

    def test_self_queries_return_zero(self, rng):
        verts = rng.normal(size=(50, 3))
        mesh = TriMesh(vertices=verts, faces=np.zeros((0, 3), int))
        for i in range(len(verts)):
            _, d2 = nearest_vertex(mesh, verts[i])
            assert d2 == 0.0

    def test_matches_linear_scan_oracle(self, rng):
        verts = rng.uniform(-100, 100, size=(500, 3))
        mesh = TriMesh(vertices=verts, faces=np.zeros((0, 3), int))
        queries = rng.uniform(-120, 120, size=(1000, 3))
        batch_idx, _ = nearest_vertices(verts, queries)
        for q, bi in zip(queries, batch_idx):
            # explicit linear scan, first minimum wins
            best, best_d2 = 0, float("inf")
            for j, v in enumerate(verts):
                d2 = float(np.sum((v - q) ** 2))
                if d2 < best_d2:
                    best, best_d2 = j, d2
            idx, d2 = nearest_vertex(mesh, q)
            assert idx == best  # index agrees bit-for-bit with the scan
            assert d2 == pytest.approx(best_d2, rel=1e-12)
            assert bi == best


class TestReflectPoint:
    def test_axis_mirror(self):
        plane = Plane(normal=[1, 0, 0], offset=0.0)
        assert np.allclose(reflect_point([1, 0, 0], plane), [-1, 0, 0])

    def test_fixed_point_on_plane(self):
        plane = Plane(normal=[0, 0, 1], offset=-2.0)
        p = np.array([3.0, 4.0, 2.0])
        assert np.allclose(reflect_point(p, plane), p)

    def test_hand_computed_offset_plane(self):
        # plane x = 1: normal (1,0,0), offset -1; p - 2(n.p + off)n
        plane = Plane(normal=[1, 0, 0], offset=-1.0)
        assert np.allclose(reflect_point([2, 3, 0], plane), [0, 3, 0])

    def test_involution(self, rng):
        for _ in range(200):
            n = rng.normal(size=3)
            n /= np.linalg.norm(n)
            plane = Plane(normal=n, offset=float(rng.uniform(-50, 50)))
            p = rng.uniform(-100, 100, size=3)
            assert np.allclose(reflect_point(reflect_point(p, plane), plane), p,
                               atol=1e-12)


class TestVertexNormals:
    def test_cube_corner_normals(self):
        mesh = cube_with_face_centers()
        normals = vertex_normals(mesh)
        expected = (np.sign(mesh.vertices[0] - 0.5) / np.sqrt(3.0))
        assert np.allclose(normals[0], expected, atol=1e-12)
        for i in range(8):
            assert np.allclose(normals[i], np.sign(mesh.vertices[i] - 0.5) / np.sqrt(3.0),
                               atol=1e-12)

    def test_flat_fan_points_up(self):
        verts = [[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0], [-1, 0, 0]]
        faces = [[0, 1, 2], [0, 2, 3], [0, 3, 4]]
        normals = vertex_normals(TriMesh(vertices=verts, faces=faces))
        assert np.allclose(normals, [[0, 0, 1]] * 5)

    def test_winding_flip_negates(self):
        mesh = cube_with_face_centers()
        flipped = TriMesh(vertices=mesh.vertices, faces=mesh.faces[:, ::-1])
        assert np.allclose(vertex_normals(flipped), -vertex_normals(mesh))

    def test_isolated_vertex_named(self):
        verts = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [5, 5, 5]]
        mesh = TriMesh(vertices=verts, faces=[[0, 1, 2]])
        with pytest.raises(InvalidInputError, match="vertex 3"):
            vertex_normals(mesh)


class TestObjIO:
    def test_round_trip(self, tmp_path, rng):
        verts = rng.uniform(-100, 100, size=(20, 3))
        faces = rng.integers(0, 20, size=(30, 3))
        mesh = TriMesh(vertices=verts, faces=faces)
        path = tmp_path / "mesh.obj"
        write_obj(mesh, path)
        back = read_obj(path)
        assert np.array_equal(back.faces, mesh.faces)
        # writer emits 9 significant digits
        assert np.allclose(back.vertices, mesh.vertices, rtol=1e-8)

    def test_slashes_tolerated(self, tmp_path):
        path = tmp_path / "slashed.obj"
        path.write_text(
            "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1/2/3 2//3 3/1\n", encoding="utf-8"
        )
        mesh = read_obj(path)
        assert mesh.num_vertices == 3
        assert np.array_equal(mesh.faces, [[0, 1, 2]])

    def test_non_triangle_rejected(self, tmp_path):
        path = tmp_path / "quad.obj"
        path.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
        with pytest.raises(SchemaError):
            read_obj(path)

    def test_write_is_deterministic(self, tmp_path, rng):
        verts = rng.uniform(-10, 10, size=(9, 3))
        mesh = TriMesh(vertices=verts, faces=[[0, 1, 2]])
        write_obj(mesh, tmp_path / "a.obj")
        write_obj(mesh, tmp_path / "b.obj")
        assert (tmp_path / "a.obj").read_bytes() == (tmp_path / "b.obj").read_bytes()


class TestPlane:
    def test_normal_must_be_unit(self):
        with pytest.raises(SchemaError):
            Plane(normal=[1, 1, 0], offset=0.0)

    def test_signed_distance_of_origin_is_offset(self):
        plane = Plane(normal=[0, 1, 0], offset=-3.5)
        assert plane.signed_distance(np.zeros(3)) == pytest.approx(-3.5)
