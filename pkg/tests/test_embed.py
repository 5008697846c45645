import numpy as np
import pytest

from spotlight.corpus import BoundingBox, DocumentImage, crop
from spotlight.embed import (EmbedError, Embedder, EmbedderConfig,
                             export_vectors, fit_reduction, import_vectors,
                             random_projection, raw_descriptor, unit)
from spotlight.simhead import cosine_distance


@pytest.fixture
def textured_doc():
    rng = np.random.default_rng(17)
    yy, xx = np.mgrid[0:180, 0:180]
    blob = np.exp(-(((yy - 90) / 14.0) ** 2 + ((xx - 90) / 20.0) ** 2))
    page = 0.9 - 0.7 * blob + 0.02 * rng.random((180, 180))
    page = np.round(np.clip(page, 0, 1) * 255) / 255.0
    return DocumentImage("tex", page.astype(np.float32))


@pytest.fixture
def embedder():
    return Embedder(EmbedderConfig(target_dim=128,
                                   reduction="seeded-random-projection", seed=3))


class TestEmbedRegion:
    def test_identical_regions_identical_vectors(self, textured_doc, embedder):
        box = BoundingBox(40, 40, 90, 90)
        v1 = embedder.embed_region(textured_doc, box)
        v2 = embedder.embed_region(textured_doc, box)
        assert np.array_equal(v1.values, v2.values)

    def test_unit_norm(self, textured_doc, embedder):
        rng = np.random.default_rng(1)
        for _ in range(10):
            x, y = rng.integers(0, 100, size=2)
            w, h = rng.integers(20, 70, size=2)
            vec = embedder.embed_region(textured_doc, BoundingBox(int(x), int(y),
                                                                  int(w), int(h)))
            assert abs(np.linalg.norm(vec.values.astype(np.float64)) - 1.0) < 1e-6
            assert np.all(np.isfinite(vec.values))

    def test_one_pixel_shift_high_similarity(self, embedder):
        page = np.full((200, 200), 0.9, dtype=np.float32)
        yy, xx = np.mgrid[0:200, 0:200]
        blob = np.exp(-(((yy - 100) / 12.0) ** 2 + ((xx - 100) / 18.0) ** 2))
        page = np.round((page - 0.7 * blob) * 255) / np.float32(255)
        doc = DocumentImage("blob", page.astype(np.float32))
        v1 = embedder.embed_region(doc, BoundingBox(60, 60, 80, 80))
        v2 = embedder.embed_region(doc, BoundingBox(61, 60, 80, 80))
        assert 1.0 - cosine_distance(v1, v2) > 0.99

    def test_translation_consistency(self, textured_doc, embedder):
        box = BoundingBox(25, 35, 60, 50)
        direct = embedder.embed_region(textured_doc, box)
        via_crop = embedder.embed_patch(crop(textured_doc, box))
        assert np.array_equal(direct.values, via_crop.values)

    def test_degenerate_region_flagged(self, embedder):
        flat = DocumentImage("flat", np.full((40, 40), 0.5, dtype=np.float32))
        vec = embedder.embed_patch(flat)
        assert vec.degenerate
        assert vec.values[0] == 1.0 and not vec.values[1:].any()

    def test_large_target_zero_padded(self, textured_doc):
        emb = Embedder(EmbedderConfig(target_dim=4096, reduction="none"))
        assert emb.grid == 16 and emb.raw_dim == 2304
        vec = emb.embed_region(textured_doc, BoundingBox(30, 30, 80, 80))
        assert vec.dim == 4096
        assert not vec.values[2304:].any()
        assert abs(np.linalg.norm(vec.values.astype(np.float64)) - 1.0) < 1e-6

    def test_supported_dims(self, textured_doc):
        box = BoundingBox(30, 30, 100, 100)
        for dim in (4096, 512, 256, 128):
            emb = Embedder(EmbedderConfig(target_dim=dim,
                                          reduction="seeded-random-projection"))
            assert emb.embed_region(textured_doc, box).dim == dim


class TestReduction:
    def test_exact_2d_subspace_reconstruction(self):
        rng = np.random.default_rng(2)
        u = unit(rng.standard_normal(20)).astype(np.float64)
        v = np.asarray(unit(rng.standard_normal(20)), dtype=np.float64)
        v -= (v @ u) * u
        v /= np.linalg.norm(v)
        coeffs = rng.standard_normal((40, 2))
        sample = coeffs @ np.stack([u, v])
        red = fit_reduction(sample, 2, seed=0, method="pca")
        for x in sample[:10]:
            assert np.linalg.norm(x - red.reconstruct(x)) < 1e-9

    def test_same_seed_same_projection(self):
        a = random_projection(64, 16, seed=9)
        b = random_projection(64, 16, seed=9)
        assert np.array_equal(a.matrix, b.matrix)
        c = random_projection(64, 16, seed=10)
        assert not np.array_equal(a.matrix, c.matrix)

    def test_projection_rows_orthonormal(self):
        red = random_projection(48, 12, seed=4)
        gram = red.matrix @ red.matrix.T
        assert np.allclose(gram, np.eye(12), atol=1e-10)

    def test_pca_beats_random_projection(self):
        rng = np.random.default_rng(21)
        sample = rng.standard_normal((100, 64))
        pca = fit_reduction(sample, 16, seed=1, method="pca")
        proj = random_projection(64, 16, seed=1)
        err_pca = sum(np.linalg.norm(x - pca.reconstruct(x)) ** 2 for x in sample)
        err_proj = sum(np.linalg.norm(x - proj.reconstruct(x)) ** 2 for x in sample)
        assert err_pca <= err_proj

    def test_pca_insufficient_sample(self):
        rng = np.random.default_rng(0)
        with pytest.raises(EmbedError, match="at least"):
            fit_reduction(rng.standard_normal((5, 30)), 10, method="pca")

    def test_linearity_pre_normalization(self):
        rng = np.random.default_rng(6)
        for method in ("pca", "seeded-random-projection"):
            sample = rng.standard_normal((50, 32))
            red = fit_reduction(sample, 8, seed=2, method=method)
            x, y = rng.standard_normal((2, 32))
            lhs = red.apply(2.5 * x - 0.75 * y)
            rhs = 2.5 * red.apply(x) - 0.75 * red.apply(y)
            assert np.allclose(lhs, rhs, atol=1e-9)

    def test_self_similarity_preserved(self):
        rng = np.random.default_rng(13)
        red = random_projection(32, 8, seed=5)
        x = red.apply(rng.standard_normal(32))
        xu = unit(x)
        assert 1.0 - cosine_distance(xu, xu) == pytest.approx(1.0)

    def test_pca_sign_deterministic(self):
        rng = np.random.default_rng(30)
        sample = rng.standard_normal((60, 24))
        a = fit_reduction(sample, 6, method="pca")
        b = fit_reduction(sample.copy(), 6, method="pca")
        assert np.array_equal(a.matrix, b.matrix)
        for row in a.matrix:
            assert row[int(np.argmax(np.abs(row)))] > 0


class TestVectorExchange:
    def unit_vectors(self, n=3, dim=4, seed=0):
        rng = np.random.default_rng(seed)
        return {f"c{i}": unit(rng.standard_normal(dim)) for i in range(n)}

    def test_export_import_counts_and_norms(self, tmp_path):
        vecs = self.unit_vectors()
        path = export_vectors(tmp_path / "v.spotvec", vecs)
        back = import_vectors(path, 4)
        assert set(back) == set(vecs)
        for key, fv in back.items():
            assert abs(np.linalg.norm(fv.values.astype(np.float64)) - 1.0) < 1e-6

    def test_round_trip_bit_exact(self, tmp_path):
        vecs = self.unit_vectors(n=10, dim=64, seed=3)
        path = export_vectors(tmp_path / "v.spotvec", vecs)
        back = import_vectors(path, 64)
        for key, arr in vecs.items():
            assert np.array_equal(back[key].values, arr)
            assert back[key].values.tobytes() == arr.tobytes()

    def test_round_trip_cosine_one(self, tmp_path):
        vecs = self.unit_vectors(n=5, dim=16, seed=7)
        back = import_vectors(export_vectors(tmp_path / "v.spotvec", vecs), 16)
        for key, arr in vecs.items():
            assert 1.0 - cosine_distance(back[key].values, arr) == \
                pytest.approx(1.0, abs=1e-6)

    def test_dim_mismatch_rejected(self, tmp_path):
        path = export_vectors(tmp_path / "v.spotvec", self.unit_vectors(dim=5))
        with pytest.raises(EmbedError, match="dim-5.*expected dim 4"):
            import_vectors(path, 4)

    def test_unknown_id_rejected(self, tmp_path):
        path = export_vectors(tmp_path / "v.spotvec", self.unit_vectors())
        with pytest.raises(EmbedError, match="'c2'"):
            import_vectors(path, 4, known_ids={"c0", "c1"})

    def test_nan_rejected(self, tmp_path):
        bad = {"ok": unit(np.ones(4)),
               "broken": np.array([np.nan, 0, 0, 0], dtype=np.float32)}
        path = export_vectors(tmp_path / "v.spotvec", bad)
        with pytest.raises(EmbedError, match="'broken'"):
            import_vectors(path, 4)

    def test_non_unit_normalized_on_import(self, tmp_path):
        path = export_vectors(tmp_path / "v.spotvec",
                              {"big": np.array([3.0, 4.0], dtype=np.float32)})
        back = import_vectors(path, 2)
        assert np.allclose(back["big"].values, [0.6, 0.8])


class TestRawDescriptor:
    def test_dims(self):
        rng = np.random.default_rng(1)
        patch = rng.random((50, 70)).astype(np.float32)
        assert raw_descriptor(patch, 64, 8).shape == (576,)
        assert raw_descriptor(patch, 64, 16).shape == (2304,)

    def test_constant_patch_zero(self):
        patch = np.full((30, 30), 0.25, dtype=np.float32)
        assert not raw_descriptor(patch, 64, 8).any()
