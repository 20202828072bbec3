"""Text featurization: tokenizer, TF-IDF fitted on training text only,
sparse feature vectors, and keyword statistics for tag clouds.
"""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import sparse

from . import stopwords as _stopwords
from .corpus import Message
from .errors import DataError

_WORD_RE = re.compile(r"\w+", re.UNICODE)


def tokenize(
    text: str,
    stopwords: str | frozenset[str] | None = None,
    min_len: int = 2,
) -> list[str]:
    """Lowercase, Unicode-word segment, drop stopwords and short tokens.

    `stopwords` may be a built-in set id ("es", "en", "es+en"), an explicit
    set of terms, or None for no removal.
    """
    stop = _stopwords.resolve(stopwords)
    return [
        tok
        for tok in _WORD_RE.findall(text.lower())
        if len(tok) >= min_len and tok not in stop
    ]


@dataclass(frozen=True)
class TfidfConfig:
    min_df: int = 1
    max_features: int = 30000
    stopwords: str | None = None
    lowercase: bool = True  # tokenize always lowercases; kept for the config snapshot
    min_token_len: int = 2

    def to_json(self) -> dict:
        return {
            "min_df": self.min_df,
            "max_features": self.max_features,
            "stopwords": self.stopwords,
            "lowercase": self.lowercase,
            "min_token_len": self.min_token_len,
        }

    @classmethod
    def from_json(cls, doc: Mapping[str, object]) -> "TfidfConfig":
        return cls(
            min_df=int(doc.get("min_df", 1)),  # type: ignore[arg-type]
            max_features=int(doc.get("max_features", 30000)),  # type: ignore[arg-type]
            stopwords=doc.get("stopwords"),  # type: ignore[arg-type]
            lowercase=bool(doc.get("lowercase", True)),
            min_token_len=int(doc.get("min_token_len", 2)),  # type: ignore[arg-type]
        )


@dataclass(frozen=True)
class Vocabulary:
    """Term-to-index map with per-term document frequencies.

    Indices are dense 0..V-1 with terms in lexicographic order, so two fits
    on the same corpus produce identical models.
    """

    terms: tuple[str, ...]
    df: tuple[int, ...]
    fitted_on: str = ""

    def __post_init__(self) -> None:
        if any(d < 1 for d in self.df):
            raise DataError("document frequency must be >= 1 for every retained term")

    def __len__(self) -> int:
        return len(self.terms)

    def index(self, term: str) -> int | None:
        idx = self._term_index().get(term)
        return idx

    def _term_index(self) -> dict[str, int]:
        cached = getattr(self, "_idx_cache", None)
        if cached is None:
            cached = {t: i for i, t in enumerate(self.terms)}
            object.__setattr__(self, "_idx_cache", cached)
        return cached


@dataclass(frozen=True)
class TfidfModel:
    vocabulary: Vocabulary
    idf: np.ndarray  # shape (V,), idf(t) = ln((1 + N) / (1 + df(t))) + 1
    config: TfidfConfig
    n_docs: int

    @property
    def dim(self) -> int:
        return len(self.vocabulary)

    def tokenize(self, text: str) -> list[str]:
        return tokenize(text, stopwords=self.config.stopwords, min_len=self.config.min_token_len)


@dataclass(frozen=True)
class FeatureVector:
    """Sparse unit-L2 feature vector: strictly increasing indices < dim."""

    indices: tuple[int, ...]
    weights: tuple[float, ...]
    dim: int

    def __post_init__(self) -> None:
        if len(self.indices) != len(self.weights):
            raise DataError("indices and weights length mismatch")
        prev = -1
        for idx in self.indices:
            if idx <= prev or idx >= self.dim:
                raise DataError("feature indices must be strictly increasing and < dim")
            prev = idx
        if any(not np.isfinite(w) for w in self.weights):
            raise DataError("feature weights must be finite")

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dim)
        if self.indices:
            out[list(self.indices)] = self.weights
        return out

    def norm(self) -> float:
        return float(np.sqrt(sum(w * w for w in self.weights)))


def fit_tfidf(train_texts: Sequence[str], config: TfidfConfig | None = None, fitted_on: str = "") -> TfidfModel:
    """Fit TF-IDF on training text only.

    idf(t) = ln((1 + N) / (1 + df(t))) + 1 with N the number of training
    documents. Terms with df < min_df are dropped; if more than max_features
    remain, the top max_features by df are kept (ties broken by term order).
    """
    cfg = config or TfidfConfig()
    if cfg.min_df < 1:
        raise DataError(f"min_df must be >= 1, got {cfg.min_df}")
    texts = list(train_texts)
    if not texts:
        raise DataError("cannot fit TF-IDF on an empty corpus")
    n_docs = len(texts)
    df_counter: Counter[str] = Counter()
    any_tokens = False
    for text in texts:
        toks = set(tokenize(text, stopwords=cfg.stopwords, min_len=cfg.min_token_len))
        if toks:
            any_tokens = True
        df_counter.update(toks)
    if not any_tokens:
        raise DataError("cannot fit TF-IDF: no document produced any tokens")
    retained = [(t, d) for t, d in df_counter.items() if d >= cfg.min_df]
    if not retained:
        raise DataError(
            f"empty vocabulary: min_df={cfg.min_df} exceeds every term's document frequency"
        )
    if cfg.max_features and len(retained) > cfg.max_features:
        retained.sort(key=lambda td: (-td[1], td[0]))
        retained = retained[: cfg.max_features]
    retained.sort(key=lambda td: td[0])
    terms = tuple(t for t, _ in retained)
    df = tuple(d for _, d in retained)
    idf = np.log((1.0 + n_docs) / (1.0 + np.asarray(df, dtype=float))) + 1.0
    return TfidfModel(
        vocabulary=Vocabulary(terms=terms, df=df, fitted_on=fitted_on),
        idf=idf,
        config=cfg,
        n_docs=n_docs,
    )


def transform(model: TfidfModel, text: str) -> FeatureVector:
    """tf (raw in-document count) times idf, then L2-normalized.
    Out-of-vocabulary terms are ignored; all-OOV text maps to the zero vector."""
    term_index = model.vocabulary._term_index()
    counts: Counter[int] = Counter()
    for tok in model.tokenize(text):
        idx = term_index.get(tok)
        if idx is not None:
            counts[idx] += 1
    if not counts:
        return FeatureVector(indices=(), weights=(), dim=model.dim)
    indices = sorted(counts)
    weights = np.array([counts[i] * model.idf[i] for i in indices], dtype=float)
    norm = float(np.linalg.norm(weights))
    weights = weights / norm
    return FeatureVector(indices=tuple(indices), weights=tuple(float(w) for w in weights), dim=model.dim)


def transform_matrix(model: TfidfModel, texts: Sequence[str]) -> sparse.csr_matrix:
    """Batch transform to a CSR matrix with one row per text."""
    data: list[float] = []
    indices: list[int] = []
    indptr: list[int] = [0]
    term_index = model.vocabulary._term_index()
    for text in texts:
        counts: Counter[int] = Counter()
        for tok in model.tokenize(text):
            idx = term_index.get(tok)
            if idx is not None:
                counts[idx] += 1
        if counts:
            cols = sorted(counts)
            row = np.array([counts[i] * model.idf[i] for i in cols], dtype=float)
            row /= np.linalg.norm(row)
            indices.extend(cols)
            data.extend(row.tolist())
        indptr.append(len(indices))
    return sparse.csr_matrix(
        (np.asarray(data), np.asarray(indices, dtype=np.int32), np.asarray(indptr, dtype=np.int32)),
        shape=(len(texts), model.dim),
    )


@dataclass(frozen=True)
class FeatureMatrix:
    """Row-aligned ids + CSR feature matrix for a set of messages."""

    ids: tuple[str, ...]
    matrix: sparse.csr_matrix

    def __post_init__(self) -> None:
        if len(self.ids) != self.matrix.shape[0]:
            raise DataError("ids and matrix row count mismatch")


def featurize_messages(model: TfidfModel, messages: Sequence[Message]) -> FeatureMatrix:
    return FeatureMatrix(
        ids=tuple(m.id for m in messages),
        matrix=transform_matrix(model, [m.text for m in messages]),
    )


@dataclass(frozen=True)
class KeywordStats:
    """Top terms of a message subset: (term, count, weight) with weights
    normalized over the retained terms."""

    entries: tuple[tuple[str, int, float], ...]
    subset_size: int

    def terms(self) -> tuple[str, ...]:
        return tuple(t for t, _, _ in self.entries)

    def to_json(self) -> dict:
        return {
            "subset_size": self.subset_size,
            "entries": [{"term": t, "count": c, "weight": w} for t, c, w in self.entries],
        }


def keyword_stats(
    messages: Sequence[Message],
    top_k: int,
    stopwords: str | frozenset[str] | None = None,
) -> KeywordStats:
    """Top-k terms by total token count across the subset, ties broken
    lexicographically; weights renormalized over the retained terms."""
    if top_k < 1:
        raise DataError(f"top_k must be >= 1, got {top_k}")
    counts: Counter[str] = Counter()
    for m in messages:
        counts.update(tokenize(m.text, stopwords=stopwords))
    if not counts:
        return KeywordStats(entries=(), subset_size=len(messages))
    ranked = sorted(counts.items(), key=lambda tc: (-tc[1], tc[0]))[:top_k]
    total = sum(c for _, c in ranked)
    entries = tuple((t, c, c / total) for t, c in ranked)
    return KeywordStats(entries=entries, subset_size=len(messages))


def save_tfidf(model: TfidfModel, path: str | Path) -> None:
    """Versioned serialization: (term, df, idf) triples plus config, so a
    reloaded model transforms bit-identically."""
    doc = {
        "schema": 1,
        "kind": "tfidf",
        "n_docs": model.n_docs,
        "fitted_on": model.vocabulary.fitted_on,
        "config": model.config.to_json(),
        "terms": [
            [t, d, float(i)]
            for t, d, i in zip(model.vocabulary.terms, model.vocabulary.df, model.idf)
        ],
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, ensure_ascii=False), encoding="utf-8")


def load_tfidf(path: str | Path) -> TfidfModel:
    path = Path(path)
    if not path.exists():
        raise DataError(f"feature model file not found: {path}")
    doc = json.loads(path.read_text(encoding="utf-8"))
    if doc.get("kind") != "tfidf" or doc.get("schema") != 1:
        raise DataError(f"{path}: not a schema-1 tfidf model file")
    triples = doc["terms"]
    return TfidfModel(
        vocabulary=Vocabulary(
            terms=tuple(t for t, _, _ in triples),
            df=tuple(int(d) for _, d, _ in triples),
            fitted_on=str(doc.get("fitted_on", "")),
        ),
        idf=np.array([i for _, _, i in triples], dtype=float),
        config=TfidfConfig.from_json(doc["config"]),
        n_docs=int(doc["n_docs"]),
    )
