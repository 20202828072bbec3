import json
from pathlib import Path

import pytest

from igaiva.cli import main
from igaiva.classifier import load_report


def run(tmp_path, *argv):
    return main(["--store", str(tmp_path / "store"), *argv])


@pytest.fixture()
def pipeline_dir(tmp_path):
    """gen-corpus + split + featurize once for the downstream stage tests."""
    d = tmp_path
    assert run(d, "gen-corpus", "--out", str(d / "corpus.jsonl"), "--classes", "3",
               "--size", "40", "--seed", "5") == 0
    assert run(d, "split", "--data", str(d / "corpus.jsonl"), "--fraction", "0.2",
               "--seed", "1", "--out", str(d / "split.json")) == 0
    assert run(d, "featurize", "--data", str(d / "corpus.jsonl"), "--split", str(d / "split.json"),
               "--out", str(d / "tfidf.json")) == 0
    return d


class TestGenCorpus:
    def test_deterministic_bytes(self, tmp_path):
        for name in ("a.jsonl", "b.jsonl"):
            assert run(tmp_path, "gen-corpus", "--out", str(tmp_path / name), "--seed", "7") == 0
        assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
        assert (tmp_path / "a.synonyms.json").exists()

    def test_downsample_flag(self, tmp_path):
        assert run(tmp_path, "gen-corpus", "--out", str(tmp_path / "c.jsonl"),
                   "--classes", "5", "--size", "30", "--downsample", "T5:9", "--seed", "2") == 0
        labels = [json.loads(line)["label"] for line in (tmp_path / "c.jsonl").read_text().splitlines()]
        assert labels.count("T5") == 9
        assert labels.count("T1") == 30


class TestPipelineStages:
    def test_project_and_svg_deterministic(self, pipeline_dir):
        d = pipeline_dir
        for name in ("e1", "e2"):
            assert run(d, "project", "--data", str(d / "corpus.jsonl"), "--features",
                       str(d / "tfidf.json"), "--method", "pca", "--dims", "0,1",
                       "--out", str(d / f"{name}.csv"), "--svg", str(d / f"{name}.svg"),
                       "--split", str(d / "split.json")) == 0
        assert (d / "e1.csv").read_bytes() == (d / "e2.csv").read_bytes()
        assert (d / "e1.svg").read_bytes() == (d / "e2.svg").read_bytes()
        assert (d / "e1.svg").read_text().startswith("<svg")

    def test_train_eval_heatmap_tagmap(self, pipeline_dir):
        d = pipeline_dir
        assert run(d, "train", "--data", str(d / "corpus.jsonl"), "--split", str(d / "split.json"),
                   "--epochs", "6", "--lr", "0.8", "--seed", "0",
                   "--out", str(d / "model.npz")) == 0
        assert run(d, "eval", "--model", str(d / "model.npz"), "--data", str(d / "corpus.jsonl"),
                   "--split", str(d / "split.json"), "--out", str(d / "baseline.report.json")) == 0
        report = load_report(d / "baseline.report.json")
        assert sum(report.test_counts.values()) == 24  # 3 classes x round(0.2*40)
        assert run(d, "project", "--data", str(d / "corpus.jsonl"), "--features",
                   str(d / "tfidf.json"), "--out", str(d / "emb.csv")) == 0
        assert run(d, "heatmap", "--data", str(d / "corpus.jsonl"), "--split", str(d / "split.json"),
                   "--embedding", str(d / "emb.csv"), "--report", str(d / "baseline.report.json"),
                   "--grid", "16x16", "--out", str(d / "field.json"),
                   "--svg", str(d / "field.svg")) == 0
        field = json.loads((d / "field.json").read_text())
        assert field["width"] == 16
        assert run(d, "tagmap", "--data", str(d / "corpus.jsonl"), "--top-k", "6",
                   "--out", str(d / "tagmap.json"), "--svg", str(d / "tagmap.svg")) == 0
        layout = json.loads((d / "tagmap.json").read_text())
        assert len(layout["cells"]) == 3

    def test_select_random_then_mock_synth_gives_n_times_k(self, tmp_path):
        d = tmp_path
        # a class with enough training messages for 50 unique examples
        assert run(d, "gen-corpus", "--out", str(d / "big.jsonl"), "--classes", "2",
                   "--size", "80", "--seed", "3") == 0
        assert run(d, "split", "--data", str(d / "big.jsonl"), "--fraction", "0.2",
                   "--seed", "1", "--out", str(d / "split.json")) == 0
        assert run(d, "select", "--data", str(d / "big.jsonl"), "--split", str(d / "split.json"),
                   "--random", "--class", "T1", "--n", "50", "--seed", "1",
                   "--out", str(d / "sel.json")) == 0
        sel = json.loads((d / "sel.json").read_text())
        assert len(sel["ids"]) == 50
        assert run(d, "synth", "--data", str(d / "big.jsonl"), "--split", str(d / "split.json"),
                   "--examples", str(d / "sel.json"), "--mock", "-k", "5", "--seed", "2",
                   "--out", str(d / "batch.jsonl")) == 0
        lines = (d / "batch.jsonl").read_text().strip().splitlines()
        assert len(lines) == 250
        first = json.loads(lines[0])
        assert first["origin"] == "synthetic"
        assert first["provenance"]["generator"] == "mock"

    def test_merge_and_compare(self, pipeline_dir):
        d = pipeline_dir
        assert run(d, "select", "--data", str(d / "corpus.jsonl"), "--split", str(d / "split.json"),
                   "--random", "--class", "T3", "--n", "4", "--seed", "9",
                   "--out", str(d / "sel.json")) == 0
        assert run(d, "synth", "--data", str(d / "corpus.jsonl"), "--split", str(d / "split.json"),
                   "--examples", str(d / "sel.json"), "--mock", "-k", "3",
                   "--synonyms", str(d / "corpus.synonyms.json"),
                   "--out", str(d / "batch.jsonl")) == 0
        assert run(d, "merge", "--base", str(d / "corpus.jsonl"), "--add", str(d / "batch.jsonl"),
                   "--out", str(d / "merged.jsonl")) == 0
        merged_lines = (d / "merged.jsonl").read_text().strip().splitlines()
        assert len(merged_lines) == 120 + 12
        common = ["--data", str(d / "corpus.jsonl"), "--split", str(d / "split.json"),
                  "--epochs", "5", "--lr", "0.8", "--seed", "0"]
        assert run(d, "train", *common, "--out", str(d / "m0.npz")) == 0
        assert run(d, "train", *common, "--add", str(d / "batch.jsonl"),
                   "--out", str(d / "m1.npz")) == 0
        assert run(d, "eval", "--model", str(d / "m0.npz"), "--data", str(d / "corpus.jsonl"),
                   "--split", str(d / "split.json"), "--out", str(d / "r0.json")) == 0
        assert run(d, "eval", "--model", str(d / "m1.npz"), "--data", str(d / "corpus.jsonl"),
                   "--split", str(d / "split.json"), "--out", str(d / "r1.json")) == 0
        assert run(d, "compare", str(d / "r0.json"), str(d / "r1.json"),
                   "--out", str(d / "cmp.json"), "--markdown") == 0
        cmp_doc = json.loads((d / "cmp.json").read_text())
        r0 = load_report(d / "r0.json")
        r1 = load_report(d / "r1.json")
        for label, delta in cmp_doc["deltas"][0]["deltas"].items():
            assert abs(delta - (r1.recalls[label] - r0.recalls[label])) <= 1e-12
        assert cmp_doc["deltas"][0]["train_deltas"]["T3"] == 12


class TestCompareOutput:
    def test_overall_row_first(self, pipeline_dir, capsys):
        d = pipeline_dir
        common = ["--data", str(d / "corpus.jsonl"), "--split", str(d / "split.json"),
                  "--epochs", "3", "--lr", "0.8", "--seed", "0"]
        assert run(d, "train", *common, "--out", str(d / "m.npz")) == 0
        assert run(d, "eval", "--model", str(d / "m.npz"), "--data", str(d / "corpus.jsonl"),
                   "--split", str(d / "split.json"), "--out", str(d / "r.json")) == 0
        capsys.readouterr()
        assert run(d, "compare", str(d / "r.json"), str(d / "r.json")) == 0
        out = capsys.readouterr().out
        lines = [line for line in out.splitlines() if line.startswith("|")]
        assert lines[2].startswith("| Overall |")


class TestExitCodes:
    def test_data_error_is_3(self, tmp_path, capsys):
        code = run(tmp_path, "split", "--data", str(tmp_path / "missing.jsonl"),
                   "--out", str(tmp_path / "s.json"))
        assert code == 3
        assert "data error" in capsys.readouterr().err

    def test_usage_error_is_2(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["--store", str(tmp_path / "store"), "synth", "--out", "x"])
        assert exc.value.code == 2

    def test_generator_error_is_4(self, pipeline_dir, capsys, monkeypatch):
        d = pipeline_dir
        monkeypatch.delenv("IGAIVA_LLM_BASE_URL", raising=False)
        assert run(d, "select", "--data", str(d / "corpus.jsonl"), "--split", str(d / "split.json"),
                   "--random", "--class", "T1", "--n", "2", "--out", str(d / "sel.json")) == 0
        code = run(d, "synth", "--data", str(d / "corpus.jsonl"), "--split", str(d / "split.json"),
                   "--examples", str(d / "sel.json"), "--remote", "--out", str(d / "b.jsonl"))
        assert code == 4
        assert "generator error" in capsys.readouterr().err


class TestJournal:
    def test_reproducibility_line_appended(self, tmp_path):
        run(tmp_path, "gen-corpus", "--out", str(tmp_path / "c.jsonl"), "--seed", "11")
        journal = (tmp_path / "store" / "journal.log").read_text().strip().splitlines()
        entry = json.loads(journal[-1])
        assert entry["event"] == "cli_run"
        assert "--seed" in entry["argv"]
        assert entry["seeds"] == {"seed": 11}
        assert "store_hash" in entry
