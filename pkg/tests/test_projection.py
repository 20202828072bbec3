import numpy as np
import pytest
from scipy import sparse

from igaiva.errors import DataError
from igaiva.features import TfidfConfig, fit_tfidf, featurize_messages
from igaiva.gencorpus import CorpusSpec, generate_corpus
from igaiva.projection import (
    Embedding2D,
    fit_pca,
    fit_tsne,
    load_embedding,
    project_pca,
    save_embedding,
)


def dense_pca_oracle(X: np.ndarray, k: int):
    """Independent route: eigendecomposition of the dense sample covariance."""
    Xc = X - X.mean(axis=0)
    cov = Xc.T @ Xc / (X.shape[0] - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = evals[order]
    ratios = evals / evals.sum()
    return evecs[:, order][:, :k].T, ratios[:k]


class TestFitPca:
    def test_collinear_line(self):
        rng = np.random.RandomState(0)
        t = rng.uniform(-1, 1, size=40)
        X = np.column_stack([t, t])
        model = fit_pca(X, 2)
        np.testing.assert_allclose(model.components[0], [1 / np.sqrt(2), 1 / np.sqrt(2)], atol=1e-9)
        assert model.explained_variance_ratio[0] == pytest.approx(1.0, abs=1e-9)
        assert model.explained_variance_ratio[1] == pytest.approx(0.0, abs=1e-9)

    def test_matches_dense_oracle(self):
        rng = np.random.RandomState(7)
        for trial in range(5):
            X = rng.randn(50, 10)
            k = 6
            model = fit_pca(X, k)
            comps, ratios = dense_pca_oracle(X, k)
            np.testing.assert_allclose(model.explained_variance_ratio, ratios, atol=1e-8)
            for i in range(k):
                dot = abs(float(model.components[i] @ comps[i]))
                assert dot == pytest.approx(1.0, abs=1e-6), (trial, i)

    def test_orthonormality(self):
        rng = np.random.RandomState(3)
        X = rng.randn(30, 8)
        model = fit_pca(X, 5)
        gram = model.components @ model.components.T
        np.testing.assert_allclose(gram, np.eye(5), atol=1e-8)

    def test_ratios_non_increasing_and_bounded(self):
        rng = np.random.RandomState(1)
        X = rng.randn(60, 12)
        model = fit_pca(X, 12)
        ratios = model.explained_variance_ratio
        assert np.all(np.diff(ratios) <= 1e-12)
        assert ratios.sum() <= 1 + 1e-8

    def test_sparse_input_matches_dense(self):
        rng = np.random.RandomState(5)
        dense = rng.rand(40, 15)
        dense[dense < 0.7] = 0.0
        model_sparse = fit_pca(sparse.csr_matrix(dense), 4)
        model_dense = fit_pca(dense, 4)
        np.testing.assert_allclose(model_sparse.components, model_dense.components, atol=1e-8)

    def test_degenerate_data(self):
        X = np.ones((10, 3))
        with pytest.raises(DataError, match="zero-variance"):
            fit_pca(X, 2)

    def test_insufficient_samples(self):
        with pytest.raises(DataError, match="at least"):
            fit_pca(np.random.RandomState(0).randn(4, 10), 4)

    def test_reconstruction_error_decreases_with_k(self):
        rng = np.random.RandomState(11)
        X = rng.randn(40, 9)
        Xc = X - X.mean(axis=0)
        errors = []
        for k in range(2, 8):
            model = fit_pca(X, k)
            proj = Xc @ model.components.T
            recon = proj @ model.components
            errors.append(float(np.sum((Xc - recon) ** 2)))
        assert all(e2 <= e1 + 1e-9 for e1, e2 in zip(errors, errors[1:]))

    def test_template_corpus_k20(self):
        ds, _ = generate_corpus(CorpusSpec(n_classes=5, class_size=30, seed=3))
        tfidf = fit_tfidf([m.text for m in ds.messages], TfidfConfig())
        fm = featurize_messages(tfidf, ds.messages)
        model = fit_pca(fm.matrix, 20)
        assert model.n_components == 20
        ratios = model.explained_variance_ratio
        assert len(ratios) == 20
        assert np.all(np.diff(ratios) <= 1e-12)


class TestProjectPca:
    def test_mean_maps_to_origin(self):
        rng = np.random.RandomState(2)
        X = rng.randn(25, 6)
        model = fit_pca(X, 4)
        emb = project_pca(model, model.mean.reshape(1, -1), (0, 1))
        np.testing.assert_allclose(emb.points, [[0.0, 0.0]], atol=1e-12)

    def test_arbitrary_dims_accepted(self):
        rng = np.random.RandomState(4)
        X = rng.randn(60, 30)
        model = fit_pca(X, 20)
        for dims in ((0, 2), (1, 13)):
            emb = project_pca(model, X, dims, ids=[f"m{i}" for i in range(60)])
            assert emb.points.shape == (60, 2)
            assert emb.params["dims"] == list(dims)

    def test_same_dims_rejected(self):
        rng = np.random.RandomState(4)
        model = fit_pca(rng.randn(20, 5), 3)
        with pytest.raises(DataError, match="differ"):
            project_pca(model, rng.randn(4, 5), (0, 0))
        with pytest.raises(DataError, match="out of range"):
            project_pca(model, rng.randn(4, 5), (0, 3))

    def test_projection_values_match_manual(self):
        rng = np.random.RandomState(9)
        X = rng.randn(30, 6)
        model = fit_pca(X, 3)
        emb = project_pca(model, X, (0, 2))
        manual_x = (X - model.mean) @ model.components[0]
        manual_y = (X - model.mean) @ model.components[2]
        np.testing.assert_allclose(emb.points[:, 0], manual_x, atol=1e-12)
        np.testing.assert_allclose(emb.points[:, 1], manual_y, atol=1e-12)


def three_gaussians(n_per=40, seed=0):
    rng = np.random.RandomState(seed)
    centers = np.array([[0.0, 0.0, 0.0], [12.0, 0.0, 4.0], [0.0, 12.0, -4.0]])
    X = np.vstack([rng.randn(n_per, 3) + c for c in centers])
    labels = np.repeat([0, 1, 2], n_per)
    return X, labels


def knn_purity(Y: np.ndarray, labels: np.ndarray, k: int = 5) -> float:
    hits = 0
    for i in range(Y.shape[0]):
        d = np.sum((Y - Y[i]) ** 2, axis=1)
        d[i] = np.inf
        neighbors = np.argsort(d)[:k]
        hits += np.sum(labels[neighbors] == labels[i])
    return hits / (Y.shape[0] * k)


class TestFitTsne:
    def test_cluster_purity_small(self):
        X, labels = three_gaussians(n_per=40, seed=1)
        emb = fit_tsne(X, perplexity=15, iterations=500, seed=0)
        assert knn_purity(emb.points, labels) >= 0.9
        assert emb.params["kl_final"] < emb.params["kl_after_exaggeration"]

    def test_determinism(self):
        X, _ = three_gaussians(n_per=20, seed=2)
        e1 = fit_tsne(X, perplexity=10, iterations=300, seed=5)
        e2 = fit_tsne(X, perplexity=10, iterations=300, seed=5)
        assert np.array_equal(e1.points, e2.points)

    def test_row_entropy_matches_perplexity(self):
        from igaiva.projection import _conditional_affinities, _pairwise_sq_dists

        X, _ = three_gaussians(n_per=25, seed=3)
        perplexity = 12.0
        P = _conditional_affinities(_pairwise_sq_dists(X), perplexity)
        target = np.log(perplexity)
        for i in range(X.shape[0]):
            row = P[i][P[i] > 0]
            entropy = -np.sum(row * np.log(row))
            assert abs(entropy - target) < 1e-3, i

    def test_identical_points_rejected(self):
        X = np.ones((30, 4))
        with pytest.raises(DataError, match="zero-variance"):
            fit_tsne(X, perplexity=5, iterations=300, seed=0)

    def test_perplexity_too_large(self):
        X = np.random.RandomState(0).randn(20, 3)
        with pytest.raises(DataError, match="perplexity"):
            fit_tsne(X, perplexity=10, iterations=300, seed=0)

    def test_high_dim_input_pre_reduced(self):
        rng = np.random.RandomState(6)
        X = rng.randn(45, 80)
        emb = fit_tsne(X, perplexity=10, iterations=300, seed=1)
        assert emb.points.shape == (45, 2)
        assert np.all(np.isfinite(emb.points))


class TestEmbeddingIO:
    def test_csv_roundtrip(self, tmp_path):
        emb = Embedding2D(
            ids=("a", "b"),
            points=np.array([[0.125, -3.5], [1e-9, 2.25]]),
            method="pca",
            params={"dims": [0, 1]},
        )
        path = tmp_path / "emb.csv"
        save_embedding(emb, path)
        loaded = load_embedding(path)
        assert loaded.ids == emb.ids
        np.testing.assert_array_equal(loaded.points, emb.points)
        assert loaded.method == "pca"
        assert loaded.params["dims"] == [0, 1]

    def test_one_point_per_id(self):
        with pytest.raises(DataError, match="does not match"):
            Embedding2D(ids=("a",), points=np.zeros((2, 2)), method="pca")

    def test_finite_coordinates(self):
        with pytest.raises(DataError, match="finite"):
            Embedding2D(ids=("a",), points=np.array([[np.nan, 0.0]]), method="pca")
