"""Experiment orchestration: the run store on disk, the dataset cache, the
job queue, and the retrain-and-compare loop.

The store is a plain directory tree with JSON manifests so experiments stay
portable and diffable. Test-set immutability is asserted on every evaluate
call: an experiment's test ids must hash identically to its split's.
"""

from __future__ import annotations

import hashlib
import json
import queue
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from . import classifier as clf
from . import features as feats
from .corpus import Dataset, SplitAssignment, load_dataset, merge_datasets, save_dataset
from .errors import DataError
from .synthesis import SyntheticBatch, load_batch, save_batch

SCHEMA_VERSION = 1


class RunStore:
    """Directory-tree persistence: datasets/, splits/, batches/, models/,
    features/, runs/<exp-id>/{manifest.json, reports/}, journal.log."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        for sub in ("datasets", "splits", "batches", "models", "features", "runs"):
            (self.root / sub).mkdir(parents=True, exist_ok=True)
        self.journal_path = self.root / "journal.log"

    # -- journal ------------------------------------------------------------

    def journal(self, event: str, **fields) -> None:
        line = {"ts": time.time(), "event": event, **fields}
        with self.journal_path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(line, ensure_ascii=False) + "\n")

    def store_hash(self) -> str:
        """Content hash over every artifact file (journal excluded)."""
        digest = hashlib.sha256()
        for path in sorted(self.root.rglob("*")):
            if path.is_dir() or path == self.journal_path:
                continue
            rel = path.relative_to(self.root).as_posix()
            digest.update(rel.encode("utf-8"))
            digest.update(hashlib.sha256(path.read_bytes()).digest())
        return digest.hexdigest()

    # -- artifacts ----------------------------------------------------------

    def dataset_path(self, name: str) -> Path:
        return self.root / "datasets" / f"{name}.jsonl"

    def save_dataset(self, dataset: Dataset) -> Path:
        path = self.dataset_path(dataset.name)
        save_dataset(dataset, path)
        return path

    def load_dataset(self, name: str) -> Dataset:
        return load_dataset(self.dataset_path(name), name=name)

    def save_split(self, split: SplitAssignment, split_id: str) -> Path:
        path = self.root / "splits" / f"{split_id}.json"
        path.write_text(json.dumps(split.to_json()), encoding="utf-8")
        return path

    def load_split(self, split_id: str) -> SplitAssignment:
        path = self.root / "splits" / f"{split_id}.json"
        if not path.exists():
            raise DataError(f"split {split_id!r} not found in store")
        return SplitAssignment.from_json(json.loads(path.read_text(encoding="utf-8")))

    def save_batch(self, batch: SyntheticBatch, batch_id: str) -> Path:
        path = self.root / "batches" / f"{batch_id}.jsonl"
        save_batch(batch, path)
        return path

    def load_batch(self, batch_id: str) -> SyntheticBatch:
        path = self.root / "batches" / f"{batch_id}.jsonl"
        if not path.exists():
            raise DataError(f"synthetic batch {batch_id!r} not found in store")
        return load_batch(path)

    def list_batches(self) -> list[str]:
        return sorted(p.stem for p in (self.root / "batches").glob("*.jsonl"))

    def save_model(self, model: clf.ClassifierModel, model_id: str) -> Path:
        path = self.root / "models" / f"{model_id}.npz"
        clf.save_model(model, path)
        return path

    def load_model(self, model_id: str) -> clf.ClassifierModel:
        return clf.load_model(self.root / "models" / f"{model_id}.npz")

    def save_features(self, model: feats.TfidfModel, feature_id: str) -> Path:
        path = self.root / "features" / f"{feature_id}.json"
        feats.save_tfidf(model, path)
        return path

    def load_features(self, feature_id: str) -> feats.TfidfModel:
        return feats.load_tfidf(self.root / "features" / f"{feature_id}.json")

    def run_dir(self, exp_id: str) -> Path:
        return self.root / "runs" / exp_id

    def save_report(self, report: clf.EvalReport, exp_id: str, name: str = "eval") -> Path:
        path = self.run_dir(exp_id) / "reports" / f"{name}.json"
        clf.save_report(report, path)
        return path

    def load_report(self, exp_id: str, name: str = "eval") -> clf.EvalReport:
        return clf.load_report(self.run_dir(exp_id) / "reports" / f"{name}.json")

    def list_experiments(self) -> list[str]:
        runs = self.root / "runs"
        return sorted(p.name for p in runs.iterdir() if (p / "manifest.json").exists())


@dataclass
class Experiment:
    id: str
    dataset: str
    split_id: str
    additions: tuple[str, ...]  # synthetic batch ids
    config: clf.TrainConfig
    feature_ref: str = ""
    model_ref: str = ""
    report_ref: str = ""
    baseline_experiment: str | None = None
    notes: str = ""
    status: str = "created"  # created | trained | failed

    def to_json(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "kind": "experiment",
            "id": self.id,
            "dataset": self.dataset,
            "split_id": self.split_id,
            "additions": list(self.additions),
            "config": self.config.to_json(),
            "feature_ref": self.feature_ref,
            "model_ref": self.model_ref,
            "report_ref": self.report_ref,
            "baseline_experiment": self.baseline_experiment,
            "notes": self.notes,
            "status": self.status,
        }

    @classmethod
    def from_json(cls, doc: Mapping[str, object]) -> "Experiment":
        return cls(
            id=str(doc["id"]),
            dataset=str(doc["dataset"]),
            split_id=str(doc["split_id"]),
            additions=tuple(doc.get("additions", ())),  # type: ignore[arg-type]
            config=clf.TrainConfig.from_json(doc["config"]),  # type: ignore[arg-type]
            feature_ref=str(doc.get("feature_ref", "")),
            model_ref=str(doc.get("model_ref", "")),
            report_ref=str(doc.get("report_ref", "")),
            baseline_experiment=doc.get("baseline_experiment"),  # type: ignore[arg-type]
            notes=str(doc.get("notes", "")),
            status=str(doc.get("status", "created")),
        )


def save_experiment(store: RunStore, exp: Experiment) -> Path:
    path = store.run_dir(exp.id) / "manifest.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(exp.to_json(), indent=2), encoding="utf-8")
    return path


def load_experiment(store: RunStore, exp_id: str) -> Experiment:
    path = store.run_dir(exp_id) / "manifest.json"
    if not path.exists():
        raise DataError(f"experiment {exp_id!r} not found in store")
    return Experiment.from_json(json.loads(path.read_text(encoding="utf-8")))


# ---------------------------------------------------------------------------
# Jobs


_JOB_ORDER = {"queued": 0, "running": 1, "done": 2, "failed": 2}


@dataclass
class Job:
    id: str
    kind: str  # train | synthesize | project
    state: str = "queued"
    progress: float = 0.0
    events: list[dict] = field(default_factory=list)
    error: str = ""

    def transition(self, state: str) -> None:
        if _JOB_ORDER[state] < _JOB_ORDER[self.state]:
            raise DataError(f"job {self.id}: illegal transition {self.state} -> {state}")
        self.state = state

    def emit(self, **event) -> None:
        self.events.append(event)
        fraction = event.get("progress")
        if fraction is not None:
            self.progress = max(self.progress, float(fraction))

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind,
            "state": self.state,
            "progress": self.progress,
            "events": list(self.events),
            "error": self.error,
        }


class JobManager:
    """FIFO job queue with a single worker, so train jobs are serialized by
    construction. run_pending() drains synchronously (CLI use); start()
    spawns the worker thread (service use)."""

    def __init__(self):
        self._queue: queue.Queue[str | None] = queue.Queue()
        self._jobs: dict[str, Job] = {}
        self._bodies: dict[str, Callable[[Job], None]] = {}
        self._lock = threading.Lock()
        self._worker: threading.Thread | None = None

    def submit(self, kind: str, body: Callable[[Job], None], job_id: str | None = None) -> Job:
        job = Job(id=job_id or uuid.uuid4().hex[:12], kind=kind)
        with self._lock:
            self._jobs[job.id] = job
            self._bodies[job.id] = body
        self._queue.put(job.id)
        return job

    def job_status(self, job_id: str) -> Job:
        with self._lock:
            job = self._jobs.get(job_id)
        if job is None:
            raise DataError(f"unknown job {job_id!r}")
        return job

    def _run_one(self, job_id: str) -> None:
        job = self.job_status(job_id)
        body = self._bodies[job_id]
        job.transition("running")
        try:
            body(job)
            job.progress = 1.0
            job.transition("done")
        except Exception as exc:  # noqa: BLE001 - captured on the job record
            job.error = f"{type(exc).__name__}: {exc}"
            job.transition("failed")

    def run_pending(self) -> None:
        """Execute every queued job on the calling thread, FIFO."""
        while True:
            try:
                job_id = self._queue.get_nowait()
            except queue.Empty:
                return
            if job_id is not None:
                self._run_one(job_id)

    def start(self) -> None:
        if self._worker is not None:
            return

        def loop() -> None:
            while True:
                job_id = self._queue.get()
                if job_id is None:
                    return
                self._run_one(job_id)

        self._worker = threading.Thread(target=loop, daemon=True, name="igaiva-jobs")
        self._worker.start()

    def stop(self) -> None:
        if self._worker is not None:
            self._queue.put(None)
            self._worker.join(timeout=5)
            self._worker = None


# ---------------------------------------------------------------------------
# Dataset cache


class DatasetCache:
    """LRU-evicting named dataset cache; the main (collected) dataset is
    never evicted. Mutations are journaled; state persists in cache.json."""

    def __init__(self, store: RunStore, capacity: int = 20, main: str | None = None):
        if capacity < 2:
            raise DataError(f"cache capacity must be >= 2, got {capacity}")
        self.store = store
        self.capacity = capacity
        self.main = main
        self._clock = 0
        self._entries: dict[str, dict] = {}
        self._state_path = store.root / "cache.json"
        if self._state_path.exists():
            state = json.loads(self._state_path.read_text(encoding="utf-8"))
            self._entries = state.get("entries", {})
            self._clock = state.get("clock", 0)
            self.main = main or state.get("main")

    def _persist(self) -> None:
        self._state_path.write_text(
            json.dumps({"entries": self._entries, "clock": self._clock, "main": self.main}),
            encoding="utf-8",
        )

    def _touch(self, name: str) -> None:
        self._clock += 1
        self._entries[name]["last_used"] = self._clock

    def put(self, dataset: Dataset, origin: str = "collected", main: bool = False) -> None:
        if main:
            self.main = dataset.name
        self.store.save_dataset(dataset)
        self._clock += 1
        self._entries[dataset.name] = {
            "size": len(dataset),
            "origin": origin,
            "last_used": self._clock,
        }
        self.store.journal("cache_put", name=dataset.name, size=len(dataset), origin=origin)
        self._evict_if_needed()
        self._persist()

    def _evict_if_needed(self) -> None:
        while len(self._entries) > self.capacity:
            victims = sorted(
                (meta["last_used"], name)
                for name, meta in self._entries.items()
                if name != self.main
            )
            if not victims:
                return
            _, victim = victims[0]
            self._entries.pop(victim)
            self.store.dataset_path(victim).unlink(missing_ok=True)
            self.store.journal("cache_evict", name=victim)

    def evict_lru(self) -> str | None:
        """Explicitly evict the least-recently-used non-main entry; returns
        the evicted name, or None when only the main dataset remains."""
        victims = sorted(
            (meta["last_used"], name) for name, meta in self._entries.items() if name != self.main
        )
        if not victims:
            return None
        _, victim = victims[0]
        self._entries.pop(victim)
        self.store.dataset_path(victim).unlink(missing_ok=True)
        self.store.journal("cache_evict", name=victim)
        self._persist()
        return victim

    def get(self, name: str) -> Dataset:
        if name not in self._entries:
            raise DataError(f"dataset {name!r} not in cache")
        self._touch(name)
        self._persist()
        return self.store.load_dataset(name)

    def list(self) -> list[dict]:
        return [
            {"name": name, "size": meta["size"], "origin": meta["origin"], "main": name == self.main}
            for name, meta in sorted(self._entries.items())
        ]

    def delete(self, name: str, force: bool = False, referenced: Iterable[str] = ()) -> None:
        if name == self.main:
            raise DataError(f"refusing to delete the main dataset {name!r}")
        if name not in self._entries:
            raise DataError(f"dataset {name!r} not in cache")
        if name in set(referenced) and not force:
            raise DataError(
                f"dataset {name!r} is referenced by an experiment; pass force=True to delete anyway"
            )
        self._entries.pop(name)
        self.store.dataset_path(name).unlink(missing_ok=True)
        self.store.journal("cache_delete", name=name, force=force)
        self._persist()

    def __contains__(self, name: str) -> bool:
        return name in self._entries


# ---------------------------------------------------------------------------
# Experiments


def _check_split_belongs(dataset: Dataset, split: SplitAssignment) -> None:
    all_ids = split.train_ids | split.test_ids
    collected = dataset.collected_ids()
    if all_ids != collected:
        raise DataError(
            f"split does not partition dataset {dataset.name!r}: "
            f"{len(all_ids ^ collected)} id(s) differ"
        )


def assemble_training_data(base: Dataset, split: SplitAssignment, additions: Sequence[SyntheticBatch]) -> Dataset:
    """Training data = base train subset plus every addition's messages; the
    test side is untouched by construction."""
    train = base.subset(split.train_ids, name=f"{base.name}-train")
    addition_sets = [
        Dataset(f"batch-{i}", batch.messages) for i, batch in enumerate(additions)
    ]
    return merge_datasets(train, addition_sets, name=f"{base.name}-train")


def create_experiment(
    store: RunStore,
    base: Dataset,
    split: SplitAssignment,
    additions: Sequence[str],
    config: clf.TrainConfig,
    manager: JobManager,
    split_id: str = "split",
    baseline_experiment: str | None = None,
    notes: str = "",
) -> tuple[Experiment, Job]:
    """Persist an experiment manifest and enqueue its train job.

    The job fits features on the assembled training text only, trains,
    evaluates on the untouched base test subset, and stores the report.
    """
    _check_split_belongs(base, split)
    batches = [store.load_batch(bid) for bid in additions]  # fail fast on dangling refs
    for batch in batches:
        batch.request.validate_against_split(split.train_ids)
    if baseline_experiment is not None:
        baseline = load_experiment(store, baseline_experiment)
        baseline_split = store.load_split(baseline.split_id)
        if baseline_split.test_ids != split.test_ids:
            raise DataError(
                "baseline experiment was evaluated on a different test set; comparison would be meaningless"
            )
    exp = Experiment(
        id=f"exp-{uuid.uuid4().hex[:8]}",
        dataset=base.name,
        split_id=split_id,
        additions=tuple(additions),
        config=config,
        baseline_experiment=baseline_experiment,
        notes=notes,
    )
    store.save_dataset(base)
    store.save_split(split, split_id)
    save_experiment(store, exp)

    def body(job: Job) -> None:
        train_data = assemble_training_data(base, split, batches)
        feature_model = feats.fit_tfidf(
            [m.text for m in train_data.messages],
            fitted_on=f"{base.name}/{split_id}",
        )

        def sink(event: Mapping[str, object]) -> None:
            epoch = int(event["epoch"])  # type: ignore[arg-type]
            job.emit(
                epoch=epoch,
                loss=float(event["loss"]),  # type: ignore[arg-type]
                progress=(epoch + 1) / config.epochs,
            )

        model = clf.train(train_data, feature_model, config, progress_sink=sink)
        report = evaluate_experiment(base, split, model, feature_model)
        exp.feature_ref = f"{exp.id}-features"
        exp.model_ref = f"{exp.id}-model"
        exp.report_ref = "eval"
        store.save_features(feature_model, exp.feature_ref)
        store.save_model(model, exp.model_ref)
        store.save_report(report, exp.id, "eval")
        exp.status = "trained"
        save_experiment(store, exp)
        store.journal("experiment_trained", id=exp.id, overall_recall=report.overall_recall)

    def guarded(job: Job) -> None:
        try:
            body(job)
        except Exception:
            exp.status = "failed"
            save_experiment(store, exp)
            raise

    job = manager.submit("train", guarded, job_id=f"{exp.id}-train")
    return exp, job


def evaluate_experiment(
    base: Dataset,
    split: SplitAssignment,
    model: clf.ClassifierModel,
    feature_model: feats.TfidfModel,
) -> clf.EvalReport:
    """Evaluate on the base test subset, asserting test-set immutability:
    the evaluated ids must be exactly the split's test ids."""
    test_data = base.subset(split.test_ids, name=f"{base.name}-test")
    evaluated_ids = frozenset(test_data.ids)
    if evaluated_ids != split.test_ids:
        raise DataError("test-set immutability violated: evaluated ids differ from the split")
    report = clf.evaluate(model, test_data, feature_model, test_ids_hash=split.test_ids_hash())
    expected_hash = split.test_ids_hash()
    if report.test_ids_hash != expected_hash:
        raise DataError("test-set immutability violated: report hash mismatch")
    return report


def export_experiment(store: RunStore, exp_id: str, out_path: str | Path) -> Path:
    """Bundle an experiment's manifest, reports, split, model, features, and
    referenced batches into one portable .tar.gz archive."""
    import tarfile

    exp = load_experiment(store, exp_id)
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    members: list[Path] = [store.run_dir(exp_id)]
    members.append(store.root / "splits" / f"{exp.split_id}.json")
    members.append(store.dataset_path(exp.dataset))
    for bid in exp.additions:
        members.append(store.root / "batches" / f"{bid}.jsonl")
        members.append(store.root / "batches" / f"{bid}.jsonl.meta.json")
    if exp.model_ref:
        members.append(store.root / "models" / f"{exp.model_ref}.npz")
        members.append(store.root / "models" / f"{exp.model_ref}.npz.json")
    if exp.feature_ref:
        members.append(store.root / "features" / f"{exp.feature_ref}.json")
    with tarfile.open(out_path, "w:gz") as tar:
        for member in members:
            if member.exists():
                tar.add(member, arcname=member.relative_to(store.root).as_posix())
    return out_path


def compare_experiments(store: RunStore, exp_ids: Sequence[str]) -> tuple[clf.EvalReport, list[clf.DeltaReport]]:
    """Multi-column delta table: the first experiment is the baseline and
    every other becomes one delta column. All experiments must share the
    baseline's test set."""
    if len(exp_ids) < 1:
        raise DataError("need at least one experiment id")
    baseline_exp = load_experiment(store, exp_ids[0])
    if baseline_exp.status != "trained":
        raise DataError(f"baseline experiment {exp_ids[0]!r} has no report (status={baseline_exp.status})")
    baseline = store.load_report(baseline_exp.id, "eval")
    deltas = []
    for eid in exp_ids[1:]:
        exp = load_experiment(store, eid)
        if exp.status != "trained":
            raise DataError(f"experiment {eid!r} has no report (status={exp.status})")
        report = store.load_report(exp.id, "eval")
        deltas.append(clf.compare(report, baseline, name=eid))
    return baseline, deltas
