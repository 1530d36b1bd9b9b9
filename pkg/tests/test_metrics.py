import math

import numpy as np
import pytest

from cranioforge.errors import InvalidInputError
from cranioforge.mesh import TriMesh
from cranioforge.metrics import evaluate_set, format_table, nme, nme_to_mm

NO_FACES = np.zeros((0, 3), int)


def cloud(points):
    return TriMesh(vertices=np.asarray(points, float), faces=NO_FACES)


class TestNme:
    def test_identical_meshes(self, rng):
        verts = rng.normal(size=(40, 3))
        mesh = cloud(verts)
        assert nme(mesh, mesh, 200.0) == 0.0

    def test_hand_computed(self):
        gt = cloud([[0, 0, 0], [10, 0, 0]])
        recon = cloud([[0, 0, 1], [10, 0, 1]])
        assert nme(recon, gt, 10.0) == pytest.approx(0.1)

    def test_matches_brute_force(self, rng):
        for _ in range(5):
            f = cloud(rng.uniform(-50, 50, size=(200, 3)))
            g = cloud(rng.uniform(-50, 50, size=(200, 3)))
            total = 0.0
            for v in g.vertices:
                best = math.inf
                for u in f.vertices:
                    best = min(best, math.dist(v, u))
                total += best
            expected = total / (200.0 * 123.4)
            assert nme(f, g, 123.4) == pytest.approx(expected, abs=1e-12)

    def test_scale_covariance(self, rng):
        f = cloud(rng.uniform(-50, 50, size=(60, 3)))
        g = cloud(rng.uniform(-50, 50, size=(70, 3)))
        base = nme(f, g, 180.0)
        c = 3.7
        scaled = nme(cloud(f.vertices * c), cloud(g.vertices * c), 180.0 * c)
        assert scaled == pytest.approx(base, abs=1e-12)

    def test_directional(self, rng):
        f = cloud(rng.uniform(-50, 50, size=(10, 3)))
        g = cloud(rng.uniform(-50, 50, size=(90, 3)))
        assert nme(f, g, 100.0) != pytest.approx(nme(g, f, 100.0))

    def test_zero_iff_every_gt_vertex_covered(self, rng):
        g = cloud(rng.normal(size=(15, 3)))
        f_superset = cloud(np.vstack([g.vertices, rng.normal(size=(5, 3))]))
        assert nme(f_superset, g, 150.0) == 0.0
        nudged = g.vertices.copy()
        nudged[4] += 0.5
        assert nme(cloud(nudged), g, 150.0) > 0.0

    def test_validation(self):
        mesh = cloud([[0, 0, 0]])
        empty = TriMesh(vertices=np.zeros((0, 3)), faces=NO_FACES)
        with pytest.raises(InvalidInputError):
            nme(empty, mesh, 100.0)
        with pytest.raises(InvalidInputError):
            nme(mesh, mesh, 0.0)

    def test_mm_conversion_reproduces_published_value(self):
        assert nme_to_mm(0.01732, 200.0) == pytest.approx(3.464, abs=1e-12)


class TestEvaluateSet:
    def test_single_pair(self, rng):
        g = cloud(rng.normal(size=(20, 3)))
        f = cloud(g.vertices + [0, 0, 1.0])
        report = evaluate_set({"a": f}, {"a": g}, 200.0)
        assert report.mean == report.max == report.per_pair_nme["a"]
        assert report.std == 0.0

    def test_two_pairs_population_std(self):
        # construct pairs with E = 0.01 and 0.03 at d = 100
        g1 = cloud([[0, 0, 0], [100, 0, 0]])
        f1 = cloud(g1.vertices + [0, 0, 1.0])
        g2 = cloud([[0, 0, 0], [100, 0, 0]])
        f2 = cloud(g2.vertices + [0, 0, 3.0])
        report = evaluate_set({"a": f1, "b": f2}, {"a": g1, "b": g2}, 100.0)
        assert report.per_pair_nme["a"] == pytest.approx(0.01)
        assert report.per_pair_nme["b"] == pytest.approx(0.03)
        assert report.mean == pytest.approx(0.02)
        assert report.max == pytest.approx(0.03)
        assert report.std == pytest.approx(0.01)  # population, not sample
        assert report.mean_mm == pytest.approx(2.0)

    def test_missing_ground_truth_lists_ids(self):
        mesh = cloud([[0, 0, 0]])
        with pytest.raises(InvalidInputError, match="b"):
            evaluate_set({"a": mesh, "b": mesh}, {"a": mesh}, 100.0)

    def test_per_pair_ear_distances(self):
        g = cloud([[0, 0, 0], [10, 0, 0]])
        f = cloud(g.vertices + [0, 0, 1.0])
        report = evaluate_set({"a": f, "b": f}, {"a": g, "b": g},
                              {"a": 100.0, "b": 200.0})
        assert report.per_pair_nme["a"] == pytest.approx(2 * report.per_pair_nme["b"])

    def test_report_json_and_table(self, tmp_path):
        g = cloud([[0, 0, 0], [10, 0, 0]])
        f = cloud(g.vertices + [0, 0, 1.0])
        report = evaluate_set({"a": f}, {"a": g}, 100.0)
        report.save(tmp_path / "report.json")
        assert (tmp_path / "report.json").exists()
        table = format_table({"ours": report})
        header, row = table.splitlines()
        assert header.split() == ["Method", "Mean", "(%)", "Max", "(%)", "Std."]
        assert row.startswith("ours")
