"""Labeled message datasets: load, validate, split, merge, summarize.

Datasets are immutable after construction and safe to share across threads.
JSONL is the canonical on-disk format (one record per line with id, text,
label and optional origin/provenance); CSV with an id,text,label header is
accepted as an alternative input format.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

from .errors import DataError

logger = logging.getLogger(__name__)

ORIGIN_COLLECTED = "collected"
ORIGIN_SYNTHETIC = "synthetic"


@dataclass(frozen=True)
class Message:
    """One labeled text message.

    Synthetic messages must carry provenance (generator id, source example
    ids, prompt hash) so every generated record is traceable.
    """

    id: str
    text: str
    label: str
    origin: str = ORIGIN_COLLECTED
    provenance: Mapping[str, object] | None = None

    def __post_init__(self) -> None:
        if not self.id:
            raise DataError("message id must be non-empty")
        if not self.text:
            raise DataError(f"message {self.id!r} has empty text")
        if not self.label:
            raise DataError(f"message {self.id!r} has empty label")
        if self.origin not in (ORIGIN_COLLECTED, ORIGIN_SYNTHETIC):
            raise DataError(f"message {self.id!r} has unknown origin {self.origin!r}")
        if self.origin == ORIGIN_SYNTHETIC and not self.provenance:
            raise DataError(f"synthetic message {self.id!r} is missing provenance")

    def to_record(self) -> dict:
        rec: dict = {"id": self.id, "text": self.text, "label": self.label, "origin": self.origin}
        if self.provenance is not None:
            rec["provenance"] = dict(self.provenance)
        return rec

    @classmethod
    def from_record(cls, rec: Mapping[str, object]) -> "Message":
        missing = [k for k in ("id", "text", "label") if k not in rec or rec[k] in (None, "")]
        if missing:
            raise DataError(f"record is missing required field(s): {', '.join(missing)}")
        return cls(
            id=str(rec["id"]),
            text=str(rec["text"]),
            label=str(rec["label"]),
            origin=str(rec.get("origin") or ORIGIN_COLLECTED),
            provenance=rec.get("provenance"),  # type: ignore[arg-type]
        )


class Dataset:
    """An immutable, id-indexed collection of messages."""

    def __init__(self, name: str, messages: Iterable[Message]):
        msgs = tuple(messages)
        by_id: dict[str, Message] = {}
        index: dict[str, list[str]] = {}
        for m in msgs:
            if m.id in by_id:
                raise DataError(f"duplicate id {m.id!r} in dataset {name!r}")
            by_id[m.id] = m
            index.setdefault(m.label, []).append(m.id)
        self.name = name
        self.messages = msgs
        self.class_index: dict[str, tuple[str, ...]] = {
            label: tuple(ids) for label, ids in index.items()
        }
        self._by_id = by_id

    def __len__(self) -> int:
        return len(self.messages)

    def __iter__(self) -> Iterator[Message]:
        return iter(self.messages)

    def __contains__(self, message_id: str) -> bool:
        return message_id in self._by_id

    def get(self, message_id: str) -> Message:
        try:
            return self._by_id[message_id]
        except KeyError:
            raise DataError(f"unknown message id {message_id!r} in dataset {self.name!r}") from None

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(m.id for m in self.messages)

    @property
    def labels(self) -> tuple[str, ...]:
        """Class labels in first-seen order."""
        return tuple(self.class_index)

    def collected_ids(self) -> frozenset[str]:
        return frozenset(m.id for m in self.messages if m.origin == ORIGIN_COLLECTED)

    def synthetic_ids(self) -> frozenset[str]:
        return frozenset(m.id for m in self.messages if m.origin == ORIGIN_SYNTHETIC)

    def subset(self, ids: Iterable[str], name: str | None = None) -> "Dataset":
        """New dataset restricted to `ids`, preserving message order."""
        wanted = set(ids)
        unknown = wanted - set(self._by_id)
        if unknown:
            raise DataError(f"unknown id(s) in subset request: {sorted(unknown)[:5]}")
        return Dataset(name or self.name, (m for m in self.messages if m.id in wanted))


@dataclass(frozen=True)
class SplitAssignment:
    """A train/test partition of a dataset's collected messages.

    Synthetic messages never enter the test side; they are attached to
    training data explicitly at experiment-assembly time.
    """

    dataset_name: str
    train_ids: frozenset[str]
    test_ids: frozenset[str]
    seed: int
    test_fraction: float

    def __post_init__(self) -> None:
        overlap = self.train_ids & self.test_ids
        if overlap:
            raise DataError(f"split has {len(overlap)} id(s) in both train and test")

    def test_ids_hash(self) -> str:
        import hashlib

        joined = "\n".join(sorted(self.test_ids))
        return hashlib.sha256(joined.encode("utf-8")).hexdigest()

    def to_json(self) -> dict:
        return {
            "schema": 1,
            "kind": "split",
            "dataset": self.dataset_name,
            "seed": self.seed,
            "test_fraction": self.test_fraction,
            "train_ids": sorted(self.train_ids),
            "test_ids": sorted(self.test_ids),
        }

    @classmethod
    def from_json(cls, doc: Mapping[str, object]) -> "SplitAssignment":
        return cls(
            dataset_name=str(doc["dataset"]),
            train_ids=frozenset(doc["train_ids"]),  # type: ignore[arg-type]
            test_ids=frozenset(doc["test_ids"]),  # type: ignore[arg-type]
            seed=int(doc["seed"]),  # type: ignore[arg-type]
            test_fraction=float(doc["test_fraction"]),  # type: ignore[arg-type]
        )


def load_dataset(path: str | Path, format: str | None = None, name: str | None = None) -> Dataset:
    """Load a dataset from JSONL or CSV. Format is inferred from the suffix
    when not given. Parse errors report the offending line number."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"dataset file not found: {path}")
    fmt = format or ("csv" if path.suffix.lower() == ".csv" else "jsonl")
    if fmt not in ("jsonl", "csv"):
        raise DataError(f"unsupported dataset format {fmt!r} (expected jsonl or csv)")
    ds_name = name or path.stem
    if fmt == "jsonl":
        messages = list(_read_jsonl(path))
    else:
        messages = list(_read_csv(path))
    return Dataset(ds_name, messages)


def _read_jsonl(path: Path) -> Iterator[Message]:
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            try:
                yield Message.from_record(rec)
            except DataError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc


def _read_csv(path: Path) -> Iterator[Message]:
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for required in ("id", "text", "label"):
            if required not in header:
                raise DataError(f"{path}: CSV header must include id,text,label (got {header})")
        for lineno, row in enumerate(reader, start=2):
            try:
                yield Message.from_record(row)
            except DataError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc


def save_dataset(dataset: Dataset | Sequence[Message], path: str | Path) -> None:
    """Write messages as JSONL (canonical format)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    messages = dataset.messages if isinstance(dataset, Dataset) else dataset
    with path.open("w", encoding="utf-8") as fh:
        for m in messages:
            fh.write(json.dumps(m.to_record(), ensure_ascii=False) + "\n")


def stratified_split(dataset: Dataset, test_fraction: float, seed: int) -> SplitAssignment:
    """Per-class split of the collected messages.

    For a class with n members the test count is round(test_fraction * n),
    clamped to [1, n - 1] (round = half away from zero). Selection within a
    class is uniform under the seed and deterministic per
    (dataset, fraction, seed). Synthetic messages are excluded from both
    sides: they belong to training data only and are attached explicitly
    when an experiment is assembled.
    """
    if not (0.0 < test_fraction < 1.0):
        raise DataError(f"test_fraction must be in (0, 1), got {test_fraction}")
    collected: dict[str, list[str]] = {}
    for m in dataset.messages:
        if m.origin == ORIGIN_COLLECTED:
            collected.setdefault(m.label, []).append(m.id)
    if not collected:
        raise DataError(f"dataset {dataset.name!r} has no collected messages to split")
    train: set[str] = set()
    test: set[str] = set()
    for label in sorted(collected):
        ids = sorted(collected[label])
        n = len(ids)
        if n < 2:
            raise DataError(f"class {label!r} has {n} member(s); need at least 2 to split")
        n_test = int(math.floor(test_fraction * n + 0.5))
        n_test = min(max(n_test, 1), n - 1)
        rng = random.Random(f"{seed}/{label}")
        chosen = rng.sample(ids, n_test)
        test.update(chosen)
        train.update(set(ids) - set(chosen))
    return SplitAssignment(
        dataset_name=dataset.name,
        train_ids=frozenset(train),
        test_ids=frozenset(test),
        seed=seed,
        test_fraction=test_fraction,
    )


def merge_datasets(base: Dataset, additions: Sequence[Dataset], name: str | None = None) -> Dataset:
    """Union of base and additions, preserving origin and provenance.

    Id collisions are an error. Labels not present in the base are allowed
    but logged as new classes.
    """
    messages: list[Message] = list(base.messages)
    seen = set(base.ids)
    base_labels = set(base.class_index)
    new_labels: set[str] = set()
    for add in additions:
        for m in add.messages:
            if m.id in seen:
                raise DataError(f"id collision on {m.id!r} while merging {add.name!r} into {base.name!r}")
            seen.add(m.id)
            if m.label not in base_labels:
                new_labels.add(m.label)
            messages.append(m)
    if new_labels:
        logger.warning(
            "merge into %r introduces new class(es): %s", base.name, ", ".join(sorted(new_labels))
        )
    merged_name = name or base.name
    return Dataset(merged_name, messages)


@dataclass(frozen=True)
class ClassSummary:
    counts: Mapping[str, int]
    total: int

    def to_json(self) -> dict:
        return {"counts": dict(self.counts), "total": self.total}


def class_summary(dataset: Dataset) -> ClassSummary:
    """Per-class message counts (first-seen class order) plus the total."""
    counts = {label: len(ids) for label, ids in dataset.class_index.items()}
    return ClassSummary(counts=counts, total=sum(counts.values()))
