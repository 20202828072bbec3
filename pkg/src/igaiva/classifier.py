"""Multi-class text classifier: multinomial logistic regression trained by
mini-batch gradient descent on softmax cross-entropy, plus per-class recall
evaluation and delta-recall comparison against a baseline.

The classifier contract is deliberately small (feature vector in, label
out) so other model families can be plugged in behind the same interface.
"""

from __future__ import annotations

import datetime as _dt
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import sparse

from .corpus import Dataset
from .errors import DataError
from .features import FeatureVector, TfidfModel, transform_matrix

ProgressSink = Callable[[Mapping[str, object]], None]


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 40
    learning_rate: float = 0.5
    l2: float = 1e-4
    batch_size: int = 64
    seed: int = 0

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise DataError(f"epochs must be >= 1, got {self.epochs}")
        if self.learning_rate <= 0:
            raise DataError(f"learning rate must be positive, got {self.learning_rate}")
        if self.l2 < 0:
            raise DataError(f"l2 strength must be >= 0, got {self.l2}")
        if self.batch_size < 1:
            raise DataError(f"batch size must be >= 1, got {self.batch_size}")

    def to_json(self) -> dict:
        return {
            "epochs": self.epochs,
            "learning_rate": self.learning_rate,
            "l2": self.l2,
            "batch_size": self.batch_size,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, doc: Mapping[str, object]) -> "TrainConfig":
        return cls(
            epochs=int(doc["epochs"]),  # type: ignore[arg-type]
            learning_rate=float(doc["learning_rate"]),  # type: ignore[arg-type]
            l2=float(doc["l2"]),  # type: ignore[arg-type]
            batch_size=int(doc["batch_size"]),  # type: ignore[arg-type]
            seed=int(doc["seed"]),  # type: ignore[arg-type]
        )


@dataclass(frozen=True)
class ClassifierModel:
    weights: np.ndarray  # (C, D)
    bias: np.ndarray  # (C,)
    labels: tuple[str, ...]
    feature_ref: str
    config: TrainConfig
    train_class_counts: Mapping[str, int]

    def __post_init__(self) -> None:
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise DataError("model parameters must be finite")

    @property
    def dim(self) -> int:
        return self.weights.shape[1]


def softmax(z: np.ndarray) -> np.ndarray:
    """Numerically stable softmax over the last axis."""
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def loss_and_grad(
    W: np.ndarray,
    b: np.ndarray,
    X,
    y: np.ndarray,
    l2: float,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Softmax cross-entropy (mean over the batch) with an L2 penalty
    0.5 * l2 * |W|^2, and its analytic gradient. Exposed separately so the
    gradient can be checked against finite differences."""
    n = X.shape[0]
    Z = np.asarray(X @ W.T) + b
    P = softmax(Z)
    eps = 1e-15
    ce = -float(np.mean(np.log(np.clip(P[np.arange(n), y], eps, None))))
    loss = ce + 0.5 * l2 * float(np.sum(W * W))
    G = P.copy()
    G[np.arange(n), y] -= 1.0
    G /= n
    if sparse.issparse(X):
        grad_w = np.asarray((X.T @ G).T) + l2 * W
    else:
        grad_w = G.T @ X + l2 * W
    grad_b = G.sum(axis=0)
    return loss, grad_w, grad_b


def train(
    train_set: Dataset,
    features: TfidfModel,
    config: TrainConfig | None = None,
    progress_sink: ProgressSink | None = None,
) -> ClassifierModel:
    """Deterministic-under-seed mini-batch gradient descent.

    Emits one {"epoch", "loss"} event per epoch to the sink; aborts with a
    diagnostic if the loss goes non-finite.
    """
    cfg = config or TrainConfig()
    labels = tuple(sorted(train_set.class_index))
    if len(labels) < 2:
        raise DataError(f"training needs at least 2 classes, got {len(labels)}")
    label_to_idx = {lab: i for i, lab in enumerate(labels)}
    X = transform_matrix(features, [m.text for m in train_set.messages])
    y = np.array([label_to_idx[m.label] for m in train_set.messages], dtype=np.int64)
    n = X.shape[0]
    C, D = len(labels), features.dim
    W = np.zeros((C, D))
    b = np.zeros(C)
    rng = np.random.RandomState(cfg.seed)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            loss, gw, gb = loss_and_grad(W, b, X[batch], y[batch], cfg.l2)
            if not np.isfinite(loss):
                raise DataError(
                    f"training diverged at epoch {epoch}: non-finite loss "
                    f"(learning_rate={cfg.learning_rate}, l2={cfg.l2})"
                )
            W -= cfg.learning_rate * gw
            b -= cfg.learning_rate * gb
            total_loss += loss * len(batch)
        mean_loss = total_loss / n
        if progress_sink is not None:
            progress_sink({"epoch": epoch, "loss": mean_loss})
    counts = {lab: len(ids) for lab, ids in train_set.class_index.items()}
    return ClassifierModel(
        weights=W,
        bias=b,
        labels=labels,
        feature_ref=features.vocabulary.fitted_on or "tfidf",
        config=cfg,
        train_class_counts=counts,
    )


def predict(model: ClassifierModel, vector: FeatureVector | np.ndarray) -> tuple[str, np.ndarray]:
    """Label plus the full probability simplex. Argmax ties resolve to the
    earliest label in the model's fixed label order."""
    if isinstance(vector, FeatureVector):
        if vector.dim != model.dim:
            raise DataError(f"feature dimension {vector.dim} != model dimension {model.dim}")
        x = vector.to_dense()
    else:
        x = np.asarray(vector, dtype=float).ravel()
        if x.shape[0] != model.dim:
            raise DataError(f"feature dimension {x.shape[0]} != model dimension {model.dim}")
    scores = softmax(model.weights @ x + model.bias)
    return model.labels[int(np.argmax(scores))], scores


def predict_labels(model: ClassifierModel, X) -> list[str]:
    Z = np.asarray(X @ model.weights.T) + model.bias
    return [model.labels[i] for i in np.argmax(Z, axis=1)]


@dataclass(frozen=True)
class EvalReport:
    """Per-class recall over a test set, in the shape of the workbench's
    recall tables: class sizes, recalls, an overall (micro) row, plus the
    full confusion matrix."""

    labels: tuple[str, ...]
    test_counts: Mapping[str, int]
    recalls: Mapping[str, float]
    confusion: np.ndarray  # (C, C); rows = true label, cols = predicted
    overall_recall: float  # micro: trace / total
    accuracy: float
    macro_f1: float
    model_ref: str
    dataset_ref: str
    test_ids_hash: str
    train_class_counts: Mapping[str, int]
    predicted: Mapping[str, str]  # id -> predicted label (for correctness overlays)
    timestamp: str

    def to_json(self) -> dict:
        return {
            "schema": 1,
            "kind": "eval_report",
            "labels": list(self.labels),
            "test_counts": dict(self.test_counts),
            "recalls": {k: float(v) for k, v in self.recalls.items()},
            "confusion": self.confusion.astype(int).tolist(),
            "overall_recall": self.overall_recall,
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "model_ref": self.model_ref,
            "dataset_ref": self.dataset_ref,
            "test_ids_hash": self.test_ids_hash,
            "train_class_counts": dict(self.train_class_counts),
            "predicted": dict(self.predicted),
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_json(cls, doc: Mapping[str, object]) -> "EvalReport":
        return cls(
            labels=tuple(doc["labels"]),  # type: ignore[arg-type]
            test_counts={k: int(v) for k, v in doc["test_counts"].items()},  # type: ignore[union-attr]
            recalls={k: float(v) for k, v in doc["recalls"].items()},  # type: ignore[union-attr]
            confusion=np.asarray(doc["confusion"], dtype=float),
            overall_recall=float(doc["overall_recall"]),  # type: ignore[arg-type]
            accuracy=float(doc["accuracy"]),  # type: ignore[arg-type]
            macro_f1=float(doc["macro_f1"]),  # type: ignore[arg-type]
            model_ref=str(doc["model_ref"]),
            dataset_ref=str(doc["dataset_ref"]),
            test_ids_hash=str(doc["test_ids_hash"]),
            train_class_counts={k: int(v) for k, v in doc["train_class_counts"].items()},  # type: ignore[union-attr]
            predicted={k: str(v) for k, v in doc.get("predicted", {}).items()},  # type: ignore[union-attr]
            timestamp=str(doc["timestamp"]),
        )


def report_from_predictions(
    labels: Sequence[str],
    ids: Sequence[str],
    y_true: Sequence[str],
    y_pred: Sequence[str],
    model_ref: str = "",
    dataset_ref: str = "",
    test_ids_hash: str = "",
    train_class_counts: Mapping[str, int] | None = None,
) -> EvalReport:
    """Build an EvalReport from per-message verdicts.

    recall_i = confusion[i, i] / row_sum_i (0 when the class has no test
    messages); overall = trace / total = accuracy (micro recall).
    """
    labels = tuple(labels)
    idx = {lab: i for i, lab in enumerate(labels)}
    unknown = sorted({t for t in y_true if t not in idx} | {p for p in y_pred if p not in idx})
    if unknown:
        raise DataError(f"label(s) outside the model's label set: {unknown[:5]}")
    C = len(labels)
    confusion = np.zeros((C, C))
    for t, p in zip(y_true, y_pred):
        confusion[idx[t], idx[p]] += 1
    row_sums = confusion.sum(axis=1)
    col_sums = confusion.sum(axis=0)
    total = float(confusion.sum())
    if total == 0:
        raise DataError("cannot evaluate on an empty test set")
    diag = np.diag(confusion)
    recalls = {
        lab: (float(diag[i] / row_sums[i]) if row_sums[i] > 0 else 0.0)
        for i, lab in enumerate(labels)
    }
    overall = float(diag.sum() / total)
    f1s = []
    for i in range(C):
        prec = diag[i] / col_sums[i] if col_sums[i] > 0 else 0.0
        rec = diag[i] / row_sums[i] if row_sums[i] > 0 else 0.0
        f1s.append(2 * prec * rec / (prec + rec) if prec + rec > 0 else 0.0)
    return EvalReport(
        labels=labels,
        test_counts={lab: int(row_sums[i]) for i, lab in enumerate(labels)},
        recalls=recalls,
        confusion=confusion,
        overall_recall=overall,
        accuracy=overall,
        macro_f1=float(np.mean(f1s)),
        model_ref=model_ref,
        dataset_ref=dataset_ref,
        test_ids_hash=test_ids_hash,
        train_class_counts=dict(train_class_counts or {}),
        predicted={i: p for i, p in zip(ids, y_pred)},
        timestamp=_dt.datetime.now(_dt.timezone.utc).isoformat(),
    )


def evaluate(
    model: ClassifierModel,
    test_set: Dataset,
    features: TfidfModel,
    test_ids_hash: str = "",
) -> EvalReport:
    """Classify every test message and report per-class recall. Labels in the
    test set must be a subset of the model's labels."""
    if len(test_set) == 0:
        raise DataError("test set is empty")
    unknown = sorted(set(test_set.class_index) - set(model.labels))
    if unknown:
        raise DataError(f"test set contains label(s) unknown to the model: {unknown}")
    X = transform_matrix(features, [m.text for m in test_set.messages])
    preds = predict_labels(model, X)
    return report_from_predictions(
        labels=model.labels,
        ids=[m.id for m in test_set.messages],
        y_true=[m.label for m in test_set.messages],
        y_pred=preds,
        model_ref=model.feature_ref,
        dataset_ref=test_set.name,
        test_ids_hash=test_ids_hash,
        train_class_counts=model.train_class_counts,
    )


@dataclass(frozen=True)
class DeltaReport:
    """Recall differences of one report against a baseline on the identical
    test set, with per-class training-size deltas (the "+num" annotations)."""

    name: str
    labels: tuple[str, ...]
    deltas: Mapping[str, float]
    overall_delta: float
    train_deltas: Mapping[str, int]

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "labels": list(self.labels),
            "deltas": {k: float(v) for k, v in self.deltas.items()},
            "overall_delta": self.overall_delta,
            "train_deltas": dict(self.train_deltas),
        }


def compare(report: EvalReport, baseline: EvalReport, name: str = "") -> DeltaReport:
    """delta_i = recall_i - baseline_i, plus the overall delta. Refuses to
    compare reports evaluated on different test sets or class sets."""
    if report.test_ids_hash != baseline.test_ids_hash:
        raise DataError("cannot compare reports evaluated on different test sets")
    if set(report.labels) != set(baseline.labels):
        raise DataError("cannot compare reports with different class sets")
    deltas = {lab: report.recalls[lab] - baseline.recalls[lab] for lab in baseline.labels}
    train_deltas = {
        lab: int(report.train_class_counts.get(lab, 0)) - int(baseline.train_class_counts.get(lab, 0))
        for lab in baseline.labels
    }
    return DeltaReport(
        name=name or report.model_ref,
        labels=baseline.labels,
        deltas=deltas,
        overall_delta=report.overall_recall - baseline.overall_recall,
        train_deltas=train_deltas,
    )


def report_markdown(report: EvalReport) -> str:
    """Markdown table: one row per class (size + recall) and an overall row."""
    lines = [
        "| Class | test | train | recall |",
        "| --- | ---: | ---: | ---: |",
        f"| Overall | {sum(report.test_counts.values())} "
        f"| {sum(report.train_class_counts.values())} | {report.overall_recall:.3f} |",
    ]
    for lab in report.labels:
        lines.append(
            f"| {lab} | {report.test_counts.get(lab, 0)} "
            f"| {report.train_class_counts.get(lab, 0)} | {report.recalls[lab]:.3f} |"
        )
    return "\n".join(lines) + "\n"


def compare_markdown(baseline: EvalReport, deltas: Sequence[DeltaReport]) -> str:
    """Multi-column delta table with the overall row first: per experiment a
    train "+num" column and a delta-recall column."""
    header = "| Class | test | train | recall |"
    rule = "| --- | ---: | ---: | ---: |"
    for d in deltas:
        header += f" {d.name} train | {d.name} Δ-recall |"
        rule += " ---: | ---: |"
    rows = [header, rule]
    overall = (
        f"| Overall | {sum(baseline.test_counts.values())} "
        f"| {sum(baseline.train_class_counts.values())} | {baseline.overall_recall:.3f} |"
    )
    for d in deltas:
        overall += f" | {d.overall_delta:+.3f} |"
    rows.append(overall)
    for lab in baseline.labels:
        row = (
            f"| {lab} | {baseline.test_counts.get(lab, 0)} "
            f"| {baseline.train_class_counts.get(lab, 0)} | {baseline.recalls[lab]:.3f} |"
        )
        for d in deltas:
            plus = d.train_deltas.get(lab, 0)
            row += f" {'+' + str(plus) if plus else ''} | {d.deltas[lab]:+.3f} |"
        rows.append(row)
    return "\n".join(rows) + "\n"


def report_csv(report: EvalReport) -> str:
    lines = ["class,test,train,recall"]
    lines.append(
        f"Overall,{sum(report.test_counts.values())},"
        f"{sum(report.train_class_counts.values())},{report.overall_recall!r}"
    )
    for lab in report.labels:
        lines.append(
            f"{lab},{report.test_counts.get(lab, 0)},"
            f"{report.train_class_counts.get(lab, 0)},{report.recalls[lab]!r}"
        )
    return "\n".join(lines) + "\n"


def save_model(model: ClassifierModel, path: str | Path) -> None:
    """npz with parameters plus a .json sidecar with labels and config."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez(path, weights=model.weights, bias=model.bias)
    meta = {
        "schema": 1,
        "kind": "classifier",
        "labels": list(model.labels),
        "feature_ref": model.feature_ref,
        "config": model.config.to_json(),
        "train_class_counts": dict(model.train_class_counts),
    }
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(meta), encoding="utf-8")


def load_model(path: str | Path) -> ClassifierModel:
    path = Path(path)
    if not path.exists():
        raise DataError(f"model file not found: {path}")
    arrays = np.load(path)
    meta = json.loads(path.with_suffix(path.suffix + ".json").read_text(encoding="utf-8"))
    return ClassifierModel(
        weights=arrays["weights"],
        bias=arrays["bias"],
        labels=tuple(meta["labels"]),
        feature_ref=meta["feature_ref"],
        config=TrainConfig.from_json(meta["config"]),
        train_class_counts=meta["train_class_counts"],
    )


def save_report(report: EvalReport, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report.to_json()), encoding="utf-8")


def load_report(path: str | Path) -> EvalReport:
    path = Path(path)
    if not path.exists():
        raise DataError(f"report file not found: {path}")
    doc = json.loads(path.read_text(encoding="utf-8"))
    if doc.get("kind") != "eval_report":
        raise DataError(f"{path}: not an eval-report file")
    return EvalReport.from_json(doc)
