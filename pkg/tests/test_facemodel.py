import numpy as np
import pytest

from cranioforge.errors import InvalidInputError, SchemaError
from cranioforge.facemodel import (
    EAR_DISTANCE_MM,
    FaceLatent,
    build_synthetic_model,
    decode,
    decode_landmarks,
    extract_landmarks,
    load_model,
    sample_prior,
    save_model,
)
from cranioforge.mesh import TriMesh


class TestDecode:
    def test_zero_latent_is_template(self, model):
        mesh = decode(model, FaceLatent.zeros(model.k))
        assert np.array_equal(mesh.vertices, model.template.vertices)
        assert np.array_equal(mesh.faces, model.template.faces)

    def test_linearity(self, model, rng):
        f1 = FaceLatent(rng.normal(size=model.k))
        f2 = FaceLatent(rng.normal(size=model.k))
        fsum = FaceLatent(f1.coefficients + f2.coefficients)
        lhs = (decode(model, f1).vertices + decode(model, f2).vertices
               - decode(model, FaceLatent.zeros(model.k)).vertices)
        assert np.max(np.abs(lhs - decode(model, fsum).vertices)) < 1e-10

    def test_single_component(self, model):
        e3 = np.zeros(model.k)
        e3[3] = 1.0
        mesh = decode(model, FaceLatent(e3))
        expected = model.template.vertices + model.basis_scales[3] * model.shape_basis[3]
        assert np.allclose(mesh.vertices, expected)

    def test_wrong_length(self, model):
        with pytest.raises(SchemaError):
            decode(model, FaceLatent(np.zeros(model.k + 1)))


class TestExtractLandmarks:
    def test_template(self, model):
        out = extract_landmarks(model, model.template)
        assert np.array_equal(out.positions,
                              model.template.vertices[model.landmark_indices])

    def test_translation_equivariance(self, model):
        shift = np.array([3.0, -2.0, 7.0])
        moved = model.template.with_vertices(model.template.vertices + shift)
        out = extract_landmarks(model, moved)
        assert np.allclose(
            out.positions,
            model.template.vertices[model.landmark_indices] + shift,
        )

    def test_topology_mismatch(self, model):
        other = TriMesh(vertices=np.zeros((4, 3)), faces=[[0, 1, 2]])
        with pytest.raises(SchemaError):
            extract_landmarks(model, other)

    def test_landmarks_linear_in_latent_finite_difference(self, model, rng):
        # central finite differences on a linear map recover the Jacobian
        f = FaceLatent(rng.normal(size=model.k))
        h = 1e-4
        for k in rng.integers(0, model.k, size=6):
            e = np.zeros(model.k)
            e[k] = h
            plus = decode_landmarks(model, FaceLatent(f.coefficients + e))
            minus = decode_landmarks(model, FaceLatent(f.coefficients - e))
            fd = (plus - minus) / (2 * h)
            analytic = model.landmark_basis[k]
            denom = max(np.abs(analytic).max(), 1e-12)
            assert np.max(np.abs(fd - analytic)) / denom < 1e-6


class TestSamplePrior:
    def test_deterministic(self, model):
        a = sample_prior(model, seed=11, attributes={"face_shape": "Fat"})
        b = sample_prior(model, seed=11, attributes={"face_shape": "Fat"})
        assert np.array_equal(a.coefficients, b.coefficients)

    def test_empty_attributes_pure_draw(self, model):
        a = sample_prior(model, seed=0)
        expected = np.random.default_rng(0).standard_normal(model.k)
        assert np.array_equal(a.coefficients, expected)

    def test_unknown_attribute_lists_vocabulary(self, model):
        with pytest.raises(InvalidInputError, match="face_shape"):
            sample_prior(model, seed=0, attributes={"hair": "long"})
        with pytest.raises(InvalidInputError, match="Thin"):
            sample_prior(model, seed=0, attributes={"face_shape": "Slim"})

    def test_fat_offset_raises_volume_coefficient(self, model):
        fat = sample_prior(model, seed=4, attributes={"face_shape": "Fat"})
        thin = sample_prior(model, seed=4, attributes={"face_shape": "Thin"})
        assert fat.coefficients[0] > thin.coefficients[0]
        assert np.allclose(fat.coefficients[1:], thin.coefficients[1:])


class TestBuildSyntheticModel:
    def test_orthonormal_basis(self, model):
        flat = model.shape_basis.reshape(model.k, -1)
        gram = flat @ flat.T
        assert np.max(np.abs(gram - np.eye(model.k))) < 1e-6

    def test_template_size(self, model):
        assert model.template.num_vertices >= 2000

    def test_ear_distance_is_canonical(self, model, schema):
        el = model.landmark_indices[schema.ear_left]
        er = model.landmark_indices[schema.ear_right]
        d = np.linalg.norm(model.template.vertices[el] - model.template.vertices[er])
        assert d == pytest.approx(EAR_DISTANCE_MM, abs=1e-9)

    def test_landmark_indices_distinct(self, model):
        assert len(set(model.landmark_indices.tolist())) == model.landmark_count

    def test_same_seed_bitwise_identical_files(self, tmp_path):
        a = build_synthetic_model(seed=3, k=12)
        b = build_synthetic_model(seed=3, k=12)
        save_model(a, tmp_path / "a")
        save_model(b, tmp_path / "b")
        for name in ("model.json", "template.obj", "basis.f64"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_k_validation(self):
        with pytest.raises(InvalidInputError):
            build_synthetic_model(seed=1, k=0)
        with pytest.raises(InvalidInputError):
            build_synthetic_model(seed=1, k=10 ** 6)

    def test_small_k(self):
        m = build_synthetic_model(seed=2, k=4)
        assert m.k == 4

    def test_constant_jacobian(self, model, rng):
        # decode is exactly linear: landmark Jacobian identical at two latents
        h = 1e-4
        for k in (0, model.k // 2):
            e = np.zeros(model.k)
            e[k] = h
            for base in (np.zeros(model.k), rng.normal(size=model.k)):
                plus = decode_landmarks(model, FaceLatent(base + e))
                minus = decode_landmarks(model, FaceLatent(base - e))
                fd = (plus - minus) / (2 * h)
                assert np.max(np.abs(fd - model.landmark_basis[k])) < 1e-8


class TestModelFiles:
    def test_round_trip(self, tmp_path):
        m = build_synthetic_model(seed=5, k=10)
        save_model(m, tmp_path / "m")
        back = load_model(tmp_path / "m")
        assert back.k == m.k
        assert np.array_equal(back.shape_basis, m.shape_basis)  # exact f64 blob
        assert np.array_equal(back.landmark_indices, m.landmark_indices)
        assert np.allclose(back.basis_scales, m.basis_scales)
        assert np.allclose(back.template.vertices, m.template.vertices, rtol=1e-8)

    def test_blob_size_checked(self, tmp_path):
        m = build_synthetic_model(seed=5, k=6)
        save_model(m, tmp_path / "m")
        (tmp_path / "m" / "basis.f64").write_bytes(b"\x00" * 16)
        with pytest.raises(SchemaError):
            load_model(tmp_path / "m")


class TestFaceLatent:
    def test_finite_required(self):
        with pytest.raises(SchemaError):
            FaceLatent([np.nan, 0.0])
