"""Shared fixtures: miniature corpora and the table-shaped dataset used by
the split/merge/report tests."""

from __future__ import annotations

import pytest

from igaiva.corpus import Dataset, Message, SplitAssignment

# Per-class sizes of the reference 15-class ticket dataset (total 39,100)
# and its recorded test-side counts (total 7,820 / train 31,280).
TABLE1_SIZES = {
    "T1": 8529, "T2": 11350, "T3": 4719, "T4": 1387, "T5": 2755,
    "T6": 1888, "T7": 1963, "T8": 1028, "T9": 1466, "T10": 1699,
    "T11": 471, "T12": 358, "T13": 180, "T14": 764, "T15": 543,
}
TABLE2_TEST_COUNTS = {
    "T1": 1748, "T2": 2259, "T3": 927, "T4": 281, "T5": 533,
    "T6": 373, "T7": 395, "T8": 236, "T9": 278, "T10": 335,
    "T11": 94, "T12": 64, "T13": 45, "T14": 135, "T15": 117,
}


def build_table1_dataset() -> Dataset:
    messages = []
    for label, size in TABLE1_SIZES.items():
        for n in range(size):
            messages.append(Message(id=f"{label}-{n:05d}", text=f"mensaje {label} {n}", label=label))
    return Dataset("table1", messages)


def build_table2_split(dataset: Dataset) -> SplitAssignment:
    """Explicit split with the recorded per-class test counts (these do not
    follow the round(0.2 n) rule, so the fixture pins them directly)."""
    test: set[str] = set()
    train: set[str] = set()
    for label, ids in dataset.class_index.items():
        n_test = TABLE2_TEST_COUNTS[label]
        test.update(ids[:n_test])
        train.update(ids[n_test:])
    return SplitAssignment(
        dataset_name=dataset.name,
        train_ids=frozenset(train),
        test_ids=frozenset(test),
        seed=0,
        test_fraction=0.2,
    )


@pytest.fixture(scope="session")
def table1_dataset() -> Dataset:
    return build_table1_dataset()


@pytest.fixture(scope="session")
def table2_split(table1_dataset) -> SplitAssignment:
    return build_table2_split(table1_dataset)


@pytest.fixture()
def tiny_dataset() -> Dataset:
    return Dataset(
        "tiny",
        [
            Message(id="m1", text="vpn vpn caida", label="red"),
            Message(id="m2", text="mail adjunto", label="correo"),
            Message(id="m3", text="vpn tunel roto", label="red"),
            Message(id="m4", text="mail spam filtro", label="correo"),
        ],
    )
