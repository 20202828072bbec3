import threading
import time

import numpy as np
import pytest

from igaiva.classifier import TrainConfig
from igaiva.corpus import Dataset, Message, stratified_split
from igaiva.errors import DataError
from igaiva.gencorpus import CorpusSpec, generate_corpus
from igaiva.synthesis import GenerationParams, MockGenerator, SynthesisRequest, synthesize
from igaiva.workbench import (
    DatasetCache,
    Experiment,
    JobManager,
    RunStore,
    assemble_training_data,
    compare_experiments,
    create_experiment,
    load_experiment,
    save_experiment,
)


@pytest.fixture()
def store(tmp_path):
    return RunStore(tmp_path / "store")


@pytest.fixture()
def small_world(store):
    """Corpus + split + one synthetic batch already in the store."""
    dataset, synonyms = generate_corpus(CorpusSpec(n_classes=3, class_size=30, seed=4))
    split = stratified_split(dataset, 0.2, seed=1)
    examples = sorted(
        mid for mid in dataset.class_index["T3"] if mid in split.train_ids
    )[:4]
    request = SynthesisRequest(
        target_label="T3",
        example_ids=tuple(examples),
        params=GenerationParams(per_example_count=3),
        run_id="batch-1",
        seed=0,
    )
    batch = synthesize(request, dataset, generator=MockGenerator(synonyms))
    store.save_batch(batch, "batch-1")
    return dataset, split, batch


FAST = TrainConfig(epochs=4, learning_rate=0.8, l2=1e-4, batch_size=32, seed=0)


class TestRunStore:
    def test_dataset_roundtrip(self, store, tiny_dataset):
        store.save_dataset(tiny_dataset)
        loaded = store.load_dataset("tiny")
        assert loaded.ids == tiny_dataset.ids

    def test_split_roundtrip(self, store, tiny_dataset):
        split = stratified_split(tiny_dataset, 0.5, seed=2)
        store.save_split(split, "s1")
        loaded = store.load_split("s1")
        assert loaded == split

    def test_missing_artifacts_raise(self, store):
        with pytest.raises(DataError):
            store.load_split("nope")
        with pytest.raises(DataError):
            store.load_batch("nope")

    def test_journal_and_store_hash(self, store, tiny_dataset):
        h0 = store.store_hash()
        store.journal("noop")
        assert store.store_hash() == h0  # journal itself is excluded
        store.save_dataset(tiny_dataset)
        assert store.store_hash() != h0


class TestJobManager:
    def test_fifo_and_serialized_trains(self):
        manager = JobManager()
        order = []
        j1 = manager.submit("train", lambda job: order.append("first"))
        j2 = manager.submit("train", lambda job: order.append("second"))
        assert j1.state == "queued" and j2.state == "queued"
        manager.run_pending()
        assert order == ["first", "second"]
        assert j1.state == "done" and j2.state == "done"

    def test_second_train_queued_while_first_runs(self):
        manager = JobManager()
        started = threading.Event()
        release = threading.Event()

        def slow(job):
            started.set()
            release.wait(timeout=5)

        j1 = manager.submit("train", slow)
        j2 = manager.submit("train", lambda job: None)
        manager.start()
        assert started.wait(timeout=5)
        assert j1.state == "running"
        assert j2.state == "queued"  # serialized behind the first train
        release.set()
        deadline = time.time() + 5
        while j2.state != "done" and time.time() < deadline:
            time.sleep(0.01)
        assert j2.state == "done"
        manager.stop()

    def test_failed_job_captures_diagnostic(self):
        manager = JobManager()

        def boom(job):
            raise ValueError("broken input")

        job = manager.submit("train", boom)
        manager.run_pending()
        assert job.state == "failed"
        assert "broken input" in job.error

    def test_progress_monotonic(self):
        manager = JobManager()

        def body(job):
            for i in range(5):
                job.emit(progress=(i + 1) / 5)

        job = manager.submit("synthesize", body)
        manager.run_pending()
        fractions = [e["progress"] for e in job.events]
        assert fractions == sorted(fractions)
        assert job.progress == 1.0

    def test_state_transitions_forward_only(self):
        manager = JobManager()
        job = manager.submit("train", lambda j: None)
        manager.run_pending()
        with pytest.raises(DataError, match="illegal transition"):
            job.transition("running")


class TestDatasetCache:
    def make_ds(self, name, n=3):
        return Dataset(name, [Message(id=f"{name}-{i}", text="texto breve", label="x") for i in range(n)])

    def test_lru_eviction_spares_main(self, store):
        cache = DatasetCache(store, capacity=3)
        cache.put(self.make_ds("main"), main=True)
        cache.put(self.make_ds("a"), origin="synthetic")
        cache.put(self.make_ds("b"), origin="synthetic")
        cache.get("a")  # touch so "b" is now least recently used
        cache.put(self.make_ds("c"), origin="synthetic")
        names = {e["name"] for e in cache.list()}
        assert names == {"main", "a", "c"}

    def test_main_never_evicted_fuzz(self, store):
        import random

        cache = DatasetCache(store, capacity=3)
        cache.put(self.make_ds("main"), main=True)
        rng = random.Random(0)
        for i in range(30):
            cache.put(self.make_ds(f"d{i}"), origin="synthetic")
            if rng.random() < 0.5:
                names = [e["name"] for e in cache.list() if e["name"] != "main"]
                if names:
                    cache.get(rng.choice(names))
            assert any(e["name"] == "main" for e in cache.list())
            assert len(cache.list()) <= 3

    def test_delete_main_refused(self, store):
        cache = DatasetCache(store, capacity=3)
        cache.put(self.make_ds("main"), main=True)
        with pytest.raises(DataError, match="main dataset"):
            cache.delete("main")

    def test_delete_referenced_needs_force(self, store):
        cache = DatasetCache(store, capacity=3)
        cache.put(self.make_ds("main"), main=True)
        cache.put(self.make_ds("aux"))
        with pytest.raises(DataError, match="force"):
            cache.delete("aux", referenced=["aux"])
        cache.delete("aux", referenced=["aux"], force=True)
        assert "aux" not in cache

    def test_list_shape(self, store):
        cache = DatasetCache(store, capacity=4)
        cache.put(self.make_ds("main", 5), main=True)
        cache.put(self.make_ds("syn", 2), origin="synthetic")
        listing = {e["name"]: e for e in cache.list()}
        assert listing["main"]["size"] == 5 and listing["main"]["main"] is True
        assert listing["syn"]["origin"] == "synthetic"

    def test_capacity_validation(self, store):
        with pytest.raises(DataError, match="capacity"):
            DatasetCache(store, capacity=1)

    def test_explicit_evict_lru(self, store):
        cache = DatasetCache(store, capacity=5)
        cache.put(self.make_ds("main"), main=True)
        cache.put(self.make_ds("old"))
        cache.put(self.make_ds("new"))
        cache.get("old")  # "new" becomes least recently used
        assert cache.evict_lru() == "new"
        assert cache.evict_lru() == "old"
        assert cache.evict_lru() is None  # main is never a victim
        assert [e["name"] for e in cache.list()] == ["main"]

    def test_state_persists_across_instances(self, store):
        cache = DatasetCache(store, capacity=3)
        cache.put(self.make_ds("main"), main=True)
        cache.put(self.make_ds("a"))
        reloaded = DatasetCache(store, capacity=3)
        assert {e["name"] for e in reloaded.list()} == {"main", "a"}
        assert reloaded.main == "main"


class TestExperiments:
    def test_training_size_includes_additions(self, small_world):
        dataset, split, batch = small_world
        merged = assemble_training_data(dataset, split, [batch])
        assert len(merged) == len(split.train_ids) + len(batch.messages)
        # test side untouched
        assert not set(merged.ids) & split.test_ids

    def test_baseline_without_additions(self, small_world):
        dataset, split, _ = small_world
        merged = assemble_training_data(dataset, split, [])
        assert len(merged) == len(split.train_ids)

    def test_create_experiment_runs_and_persists(self, store, small_world):
        dataset, split, batch = small_world
        manager = JobManager()
        exp, job = create_experiment(store, dataset, split, ["batch-1"], FAST, manager)
        assert job.state == "queued"
        manager.run_pending()
        assert job.state == "done", job.error
        reloaded = load_experiment(store, exp.id)
        assert reloaded.status == "trained"
        report = store.load_report(exp.id)
        assert report.test_ids_hash == split.test_ids_hash()
        assert sum(report.train_class_counts.values()) == len(split.train_ids) + len(batch.messages)
        # training progress reached the job event log
        assert any("loss" in e for e in job.events)
        assert job.progress == 1.0

    def test_dangling_batch_reference(self, store, small_world):
        dataset, split, _ = small_world
        with pytest.raises(DataError, match="not found"):
            create_experiment(store, dataset, split, ["ghost"], FAST, JobManager())

    def test_failed_job_marks_experiment(self, store, small_world):
        dataset, split, _ = small_world
        manager = JobManager()
        bad_config = TrainConfig(epochs=30, learning_rate=1e9, l2=10.0, seed=0)
        exp, job = create_experiment(store, dataset, split, [], bad_config, manager)
        with np.errstate(all="ignore"):
            manager.run_pending()
        assert job.state == "failed"
        assert load_experiment(store, exp.id).status == "failed"

    def test_split_must_belong_to_dataset(self, store, small_world):
        dataset, _, _ = small_world
        other, _ = generate_corpus(CorpusSpec(n_classes=2, class_size=10, seed=9))
        foreign_split = stratified_split(other, 0.2, seed=1)
        with pytest.raises(DataError, match="partition"):
            create_experiment(store, dataset, foreign_split, [], FAST, JobManager())

    def test_experiment_roundtrip(self, store):
        exp = Experiment(
            id="exp-x",
            dataset="d",
            split_id="s",
            additions=("b1", "b2"),
            config=FAST,
            notes="prueba",
        )
        save_experiment(store, exp)
        assert load_experiment(store, "exp-x") == exp

    def test_test_set_immutable_across_chain(self, store, small_world):
        dataset, split, batch = small_world
        manager = JobManager()
        exps = []
        for additions in ([], ["batch-1"], ["batch-1"]):
            exp, _ = create_experiment(store, dataset, split, additions, FAST, manager)
            exps.append(exp)
        manager.run_pending()
        hashes = {store.load_report(e.id).test_ids_hash for e in exps}
        assert hashes == {split.test_ids_hash()}


class TestCompareExperiments:
    def test_multi_column_table(self, store, small_world):
        dataset, split, batch = small_world
        manager = JobManager()
        baseline_exp, _ = create_experiment(store, dataset, split, [], FAST, manager)
        exp1, _ = create_experiment(store, dataset, split, ["batch-1"], FAST, manager)
        manager.run_pending()
        baseline, deltas = compare_experiments(store, [baseline_exp.id, exp1.id])
        assert len(deltas) == 1
        delta = deltas[0]
        assert delta.train_deltas["T3"] == len(batch.messages)
        assert delta.train_deltas["T1"] == 0
        assert set(delta.deltas) == set(baseline.labels)

    def test_self_comparison_zero_column(self, store, small_world):
        dataset, split, _ = small_world
        manager = JobManager()
        exp, _ = create_experiment(store, dataset, split, [], FAST, manager)
        manager.run_pending()
        _, deltas = compare_experiments(store, [exp.id, exp.id])
        assert all(v == 0.0 for v in deltas[0].deltas.values())
        assert deltas[0].overall_delta == 0.0

    def test_mismatched_test_sets_rejected(self, store, small_world):
        dataset, split, _ = small_world
        other_split = stratified_split(dataset, 0.3, seed=77)
        manager = JobManager()
        e1, _ = create_experiment(store, dataset, split, [], FAST, manager)
        e2, _ = create_experiment(store, dataset, other_split, [], FAST, manager, split_id="split-b")
        manager.run_pending()
        with pytest.raises(DataError, match="different test sets"):
            compare_experiments(store, [e1.id, e2.id])

    def test_untrained_experiment_rejected(self, store, small_world):
        dataset, split, _ = small_world
        manager = JobManager()
        exp, _ = create_experiment(store, dataset, split, [], FAST, manager)
        with pytest.raises(DataError, match="no report"):
            compare_experiments(store, [exp.id])

    def test_baseline_with_other_test_set_rejected_at_creation(self, store, small_world):
        dataset, split, _ = small_world
        manager = JobManager()
        base_exp, _ = create_experiment(store, dataset, split, [], FAST, manager)
        manager.run_pending()
        other_split = stratified_split(dataset, 0.3, seed=123)
        with pytest.raises(DataError, match="different test set"):
            create_experiment(
                store, dataset, other_split, [], FAST, manager,
                split_id="other", baseline_experiment=base_exp.id,
            )


class TestExportExperiment:
    def test_archive_roundtrip(self, store, small_world, tmp_path):
        import tarfile

        from igaiva.workbench import export_experiment

        dataset, split, _ = small_world
        manager = JobManager()
        exp, _ = create_experiment(store, dataset, split, ["batch-1"], FAST, manager)
        manager.run_pending()
        archive = export_experiment(store, exp.id, tmp_path / "exp.tar.gz")
        with tarfile.open(archive) as tar:
            names = set(tar.getnames())
        assert f"runs/{exp.id}/manifest.json" in names
        assert f"runs/{exp.id}/reports/eval.json" in names
        assert "batches/batch-1.jsonl" in names
        assert any(n.startswith("models/") for n in names)
        assert any(n.startswith("features/") for n in names)
