"""2-D projections for the scatter views: PCA with K components and exact
(non-approximate) t-SNE.

PCA works on the centered Gram matrix (n x n) so sparse TF-IDF inputs are
never densified along the feature axis; components are recovered from the
Gram eigenvectors and validated in the test suite against a dense
covariance eigendecomposition oracle.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy import linalg as slinalg
from scipy import sparse

from .errors import DataError
from .features import FeatureMatrix, FeatureVector

_ZERO_VARIANCE_TOL = 1e-12


def as_matrix(vectors) -> sparse.csr_matrix | np.ndarray:
    """Accept a FeatureMatrix, CSR matrix, ndarray, or list of FeatureVector."""
    if isinstance(vectors, FeatureMatrix):
        return vectors.matrix
    if sparse.issparse(vectors):
        return vectors.tocsr()
    if isinstance(vectors, np.ndarray):
        if vectors.ndim != 2:
            raise DataError(f"expected a 2-D array, got shape {vectors.shape}")
        return vectors
    vecs = list(vectors)
    if not vecs:
        raise DataError("no vectors given")
    if isinstance(vecs[0], FeatureVector):
        dim = vecs[0].dim
        data: list[float] = []
        indices: list[int] = []
        indptr = [0]
        for v in vecs:
            if v.dim != dim:
                raise DataError("feature vectors have inconsistent dimensions")
            indices.extend(v.indices)
            data.extend(v.weights)
            indptr.append(len(indices))
        return sparse.csr_matrix(
            (np.asarray(data), np.asarray(indices, dtype=np.int64), np.asarray(indptr, dtype=np.int64)),
            shape=(len(vecs), dim),
        )
    return np.asarray(vecs, dtype=float)


@dataclass(frozen=True)
class PcaModel:
    """Top-K principal directions of mean-centered data.

    components are orthonormal rows (K x D) with the sign fixed so each
    component's largest-magnitude coordinate is positive, making snapshots
    comparable across runs. explained_variance_ratio is lambda_k over the
    total variance and is non-increasing.
    """

    mean: np.ndarray
    components: np.ndarray
    explained_variance_ratio: np.ndarray

    @property
    def n_components(self) -> int:
        return self.components.shape[0]

    def to_json(self) -> dict:
        return {
            "schema": 1,
            "kind": "pca",
            "mean": self.mean.tolist(),
            "components": self.components.tolist(),
            "explained_variance_ratio": self.explained_variance_ratio.tolist(),
        }

    @classmethod
    def from_json(cls, doc: Mapping[str, object]) -> "PcaModel":
        return cls(
            mean=np.asarray(doc["mean"], dtype=float),
            components=np.asarray(doc["components"], dtype=float),
            explained_variance_ratio=np.asarray(doc["explained_variance_ratio"], dtype=float),
        )


@dataclass(frozen=True)
class Embedding2D:
    """Per-message 2-D coordinates plus how they were produced."""

    ids: tuple[str, ...]
    points: np.ndarray  # (n, 2)
    method: str  # "pca" or "tsne"
    params: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.points.shape != (len(self.ids), 2):
            raise DataError(
                f"embedding shape {self.points.shape} does not match {len(self.ids)} ids"
            )
        if not np.all(np.isfinite(self.points)):
            raise DataError("embedding contains non-finite coordinates")

    def point_of(self, message_id: str) -> tuple[float, float]:
        idx = self._index().get(message_id)
        if idx is None:
            raise DataError(f"id {message_id!r} not present in embedding")
        return float(self.points[idx, 0]), float(self.points[idx, 1])

    def _index(self) -> dict[str, int]:
        cached = getattr(self, "_idx_cache", None)
        if cached is None:
            cached = {mid: i for i, mid in enumerate(self.ids)}
            object.__setattr__(self, "_idx_cache", cached)
        return cached

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["id", "x", "y"])
        for mid, (x, y) in zip(self.ids, self.points):
            writer.writerow([mid, repr(float(x)), repr(float(y))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, method: str = "pca", params: Mapping[str, object] | None = None) -> "Embedding2D":
        reader = csv.reader(io.StringIO(text))
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:3]] != ["id", "x", "y"]:
            raise DataError("embedding CSV must have header id,x,y")
        ids: list[str] = []
        pts: list[tuple[float, float]] = []
        for row in reader:
            if not row:
                continue
            ids.append(row[0])
            pts.append((float(row[1]), float(row[2])))
        return cls(ids=tuple(ids), points=np.asarray(pts, dtype=float), method=method, params=params or {})


def _center_stats(X) -> tuple[np.ndarray, np.ndarray, float]:
    """Mean vector, row-projection X @ mean, and total sample variance."""
    n = X.shape[0]
    if sparse.issparse(X):
        mean = np.asarray(X.mean(axis=0)).ravel()
        r = np.asarray(X @ mean).ravel()
        sq = float(X.multiply(X).sum())
    else:
        mean = X.mean(axis=0)
        r = X @ mean
        sq = float(np.sum(X * X))
    total_var = (sq - n * float(mean @ mean)) / (n - 1)
    return mean, r, total_var


def _centered_gram(X) -> np.ndarray:
    """(X - 1 m^T)(X - 1 m^T)^T as a dense n x n array."""
    n = X.shape[0]
    mean, r, _ = _center_stats(X)
    if sparse.issparse(X):
        G = np.asarray((X @ X.T).todense(), dtype=float)
    else:
        G = X @ X.T
    mm = float(mean @ mean)
    G = G - r[:, None] - r[None, :] + mm
    return np.asarray(G, dtype=float)


def fit_pca(vectors, n_components: int) -> PcaModel:
    """Top-K eigenvectors of the sample covariance of mean-centered data.

    The eigenproblem is solved on the n x n centered Gram matrix and mapped
    back to feature space, so D may be much larger than n. Rank-deficient
    tails (zero eigenvalues) are completed with a deterministic orthonormal
    basis so the model always carries exactly K orthonormal components.
    """
    X = as_matrix(vectors)
    n, dim = X.shape
    K = int(n_components)
    if K < 2:
        raise DataError(f"need at least 2 components, got {K}")
    if n < K + 1:
        raise DataError(f"need at least {K + 1} vectors to fit {K} components, got {n}")
    if K > dim:
        raise DataError(f"cannot extract {K} orthonormal components from dimension {dim}")
    mean, r, total_var = _center_stats(X)
    if not total_var > _ZERO_VARIANCE_TOL:
        raise DataError("zero-variance data: all vectors are identical")
    G = _centered_gram(X)
    # LAPACK partial symmetric eigensolver on the Gram form; ascending order.
    evals, evecs = slinalg.eigh(G, subset_by_index=[n - K, n - 1])
    order = np.argsort(evals)[::-1]
    evals = np.clip(evals[order], 0.0, None)
    evecs = evecs[:, order]
    eig_tol = max(evals[0], 1.0) * 1e-12
    components = np.zeros((K, dim))
    filled = 0
    for k in range(K):
        if evals[k] > eig_tol:
            u = evecs[:, k]
            # Xc^T u = X^T u - mean * sum(u)
            v = np.asarray(X.T @ u).ravel() - mean * float(u.sum())
            v /= np.sqrt(evals[k])
            components[k] = v
            filled = k + 1
        else:
            break
    if filled < K:
        components[filled:] = _complete_basis(components[:filled], K - filled, dim)
        evals[filled:] = 0.0
    components = _orthonormalize(components)
    # Sign convention: largest-magnitude coordinate of each component positive.
    for k in range(K):
        j = int(np.argmax(np.abs(components[k])))
        if components[k, j] < 0:
            components[k] = -components[k]
    ratios = (evals / (n - 1)) / total_var
    ratios = np.clip(ratios, 0.0, None)
    return PcaModel(mean=mean, components=components, explained_variance_ratio=ratios)


def _complete_basis(existing: np.ndarray, count: int, dim: int) -> np.ndarray:
    """Deterministically extend an orthonormal set with `count` more vectors,
    drawn from the standard basis via Gram-Schmidt."""
    rows = [existing[i] for i in range(existing.shape[0])]
    added: list[np.ndarray] = []
    for j in range(dim):
        if len(added) == count:
            break
        v = np.zeros(dim)
        v[j] = 1.0
        for u in rows:
            v -= (v @ u) * u
        norm = np.linalg.norm(v)
        if norm > 1e-8:
            v /= norm
            rows.append(v)
            added.append(v)
    if len(added) < count:
        raise DataError("could not complete an orthonormal basis (dimension too small)")
    return np.vstack(added)


def _orthonormalize(components: np.ndarray) -> np.ndarray:
    """Modified Gram-Schmidt pass; near-identity for already-orthonormal input."""
    out = components.copy()
    for k in range(out.shape[0]):
        for j in range(k):
            out[k] -= (out[k] @ out[j]) * out[j]
        norm = np.linalg.norm(out[k])
        if norm <= 1e-12:
            raise DataError("degenerate component during orthonormalization")
        out[k] /= norm
    return out


def project_pca(model: PcaModel, vectors, dims: tuple[int, int], ids: Sequence[str] | None = None) -> Embedding2D:
    """Project onto two principal directions: x = <v - mean, comp_i>,
    y = <v - mean, comp_j>."""
    i, j = dims
    K = model.n_components
    if not (0 <= i < K) or not (0 <= j < K):
        raise DataError(f"dims {dims} out of range for K={K}")
    if i == j:
        raise DataError(f"dims must differ, got ({i}, {j})")
    if isinstance(vectors, FeatureMatrix) and ids is None:
        ids = vectors.ids
    X = as_matrix(vectors)
    ci, cj = model.components[i], model.components[j]
    offset_x = float(model.mean @ ci)
    offset_y = float(model.mean @ cj)
    xs = np.asarray(X @ ci).ravel() - offset_x
    ys = np.asarray(X @ cj).ravel() - offset_y
    if ids is None:
        ids = tuple(str(k) for k in range(X.shape[0]))
    return Embedding2D(
        ids=tuple(ids),
        points=np.column_stack([xs, ys]),
        method="pca",
        params={"dims": [i, j]},
    )


# ---------------------------------------------------------------------------
# Exact t-SNE


def _pairwise_sq_dists(X: np.ndarray) -> np.ndarray:
    sq = np.sum(X * X, axis=1)
    D = sq[:, None] + sq[None, :] - 2.0 * (X @ X.T)
    np.fill_diagonal(D, 0.0)
    return np.maximum(D, 0.0)


def _conditional_affinities(D2: np.ndarray, perplexity: float, tol: float = 1e-5, max_iter: int = 64) -> np.ndarray:
    """Per-point Gaussian affinities whose Shannon entropy matches
    log(perplexity), with the bandwidth found by bisection on beta = 1/(2 sigma^2)."""
    n = D2.shape[0]
    target = math.log(perplexity)
    P = np.zeros((n, n))
    for i in range(n):
        d = np.delete(D2[i], i)
        beta, beta_min, beta_max = 1.0, -np.inf, np.inf
        row = np.zeros(n - 1)
        for _ in range(max_iter):
            row = np.exp(-d * beta)
            s = row.sum()
            if s <= 0:
                h = 0.0
                row = np.zeros_like(row)
            else:
                row = row / s
                nz = row > 0
                h = float(-np.sum(row[nz] * np.log(row[nz])))
            diff = h - target
            if abs(diff) < tol:
                break
            if diff > 0:  # entropy too high -> sharpen
                beta_min = beta
                beta = beta * 2.0 if beta_max == np.inf else (beta + beta_max) / 2.0
            else:
                beta_max = beta
                beta = beta / 2.0 if beta_min == -np.inf else (beta + beta_min) / 2.0
        P[i, np.arange(n) != i] = row
    return P


def _kl_divergence(P: np.ndarray, Y: np.ndarray) -> float:
    num = 1.0 / (1.0 + _pairwise_sq_dists(Y))
    np.fill_diagonal(num, 0.0)
    Q = num / num.sum()
    Q = np.maximum(Q, 1e-12)
    mask = P > 0
    return float(np.sum(P[mask] * np.log(P[mask] / Q[mask])))


def fit_tsne(
    vectors,
    perplexity: float = 30.0,
    iterations: int = 1000,
    seed: int = 0,
    ids: Sequence[str] | None = None,
    learning_rate: float = 200.0,
) -> Embedding2D:
    """Exact t-SNE with perplexity calibration by bisection, early
    exaggeration x12 for the first 250 iterations, and momentum 0.5 -> 0.8
    after iteration 250. Deterministic under the seed; the final KL
    divergence and the KL right after the exaggeration phase are recorded
    in the embedding params.

    Inputs with more than 50 columns are first reduced to 50 dims by PCA.
    """
    if isinstance(vectors, FeatureMatrix) and ids is None:
        ids = vectors.ids
    X = as_matrix(vectors)
    n = X.shape[0]
    if iterations < 250:
        raise DataError(f"need at least 250 iterations, got {iterations}")
    if perplexity <= 0 or n < 3 * perplexity:
        raise DataError(
            f"perplexity {perplexity} too large for {n} points (need n >= 3 * perplexity)"
        )
    if X.shape[1] > 50:
        pre = fit_pca(X, min(50, X.shape[0] - 1, X.shape[1]))
        if sparse.issparse(X):
            Xd = np.asarray((X @ pre.components.T).todense()) - pre.mean @ pre.components.T
        else:
            Xd = (X - pre.mean) @ pre.components.T
    else:
        Xd = X.toarray() if sparse.issparse(X) else np.asarray(X, dtype=float)
    D2 = _pairwise_sq_dists(Xd)
    if float(D2.max()) <= _ZERO_VARIANCE_TOL:
        raise DataError("zero-variance data: all points are identical")

    Pc = _conditional_affinities(D2, perplexity)
    P = (Pc + Pc.T) / (2.0 * n)
    P = np.maximum(P, 1e-12)

    rng = np.random.RandomState(seed)
    Y = rng.normal(0.0, 1e-4, size=(n, 2))

    exaggeration = 12.0
    exag_until = 250
    P_run = P * exaggeration
    velocity = np.zeros_like(Y)
    gains = np.ones_like(Y)
    kl_after_exaggeration = math.inf

    for it in range(iterations):
        num = 1.0 / (1.0 + _pairwise_sq_dists(Y))
        np.fill_diagonal(num, 0.0)
        Q = num / num.sum()
        Q = np.maximum(Q, 1e-12)
        PQ = (P_run - Q) * num
        grad = 4.0 * ((np.diag(PQ.sum(axis=1)) - PQ) @ Y)

        momentum = 0.5 if it < exag_until else 0.8
        inc = np.sign(grad) != np.sign(velocity)
        gains[inc] += 0.2
        gains[~inc] *= 0.8
        np.clip(gains, 0.01, None, out=gains)
        velocity = momentum * velocity - learning_rate * gains * grad
        Y = Y + velocity
        Y = Y - Y.mean(axis=0)
        if not np.all(np.isfinite(Y)):
            raise DataError(f"t-SNE diverged at iteration {it}")

        if it == exag_until - 1:
            P_run = P
            kl_after_exaggeration = _kl_divergence(P, Y)

    kl_final = _kl_divergence(P, Y)
    if ids is None:
        ids = tuple(str(k) for k in range(n))
    return Embedding2D(
        ids=tuple(ids),
        points=Y,
        method="tsne",
        params={
            "perplexity": perplexity,
            "iterations": iterations,
            "seed": seed,
            "learning_rate": learning_rate,
            "kl_final": kl_final,
            "kl_after_exaggeration": kl_after_exaggeration,
        },
    )


def save_embedding(emb: Embedding2D, path: str | Path) -> None:
    """CSV (id,x,y) plus a sidecar .meta.json holding method and params."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(emb.to_csv(), encoding="utf-8")
    meta = {"schema": 1, "kind": "embedding", "method": emb.method, "params": dict(emb.params)}
    path.with_suffix(path.suffix + ".meta.json").write_text(json.dumps(meta), encoding="utf-8")


def load_embedding(path: str | Path) -> Embedding2D:
    path = Path(path)
    if not path.exists():
        raise DataError(f"embedding file not found: {path}")
    meta_path = path.with_suffix(path.suffix + ".meta.json")
    method, params = "pca", {}
    if meta_path.exists():
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        method = meta.get("method", "pca")
        params = meta.get("params", {})
    return Embedding2D.from_csv(path.read_text(encoding="utf-8"), method=method, params=params)
