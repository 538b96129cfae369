import json
from pathlib import Path

import pytest
import torch

from semchat.cli import run
from semchat.corpus import load_corpus
from semchat.model import ModelCheckpoint


@pytest.fixture(scope="module")
def toy_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("toy")
    assert run([
        "make-toy", "--out-dir", str(out),
        "--train", "6", "--valid", "2", "--test", "2", "--seed", "1",
    ]) == 0
    return out


@pytest.fixture(scope="module")
def trained_dir(tmp_path_factory, toy_dir):
    out = tmp_path_factory.mktemp("run")
    code = run([
        "train", "--corpus", str(toy_dir / "train.jsonl"),
        "--out-dir", str(out), "--seed", "7",
        "--layers", "1", "--heads", "2", "--hidden-dim", "32",
        "--max-positions", "256", "--batch-size", "4",
        "--lr", "1e-3", "--validate-every", "10", "--max-steps", "20",
    ])
    assert code == 0
    return out


class TestBasics:
    def test_show_policy(self, capsys):
        assert run(["--show-policy"]) == 0
        policy = json.loads(capsys.readouterr().out)
        assert policy["response"]["top_k"] == 50
        assert policy["response"]["bounds"]["response"] == [9, 32]

    def test_no_subcommand_usage(self, capsys):
        assert run([]) == 2

    def test_bad_flag_exits_nonzero(self):
        with pytest.raises(SystemExit) as excinfo:
            run(["train", "--bogus-flag"])
        assert excinfo.value.code == 2

    def test_make_toy_outputs(self, toy_dir):
        for name in ("train", "valid", "test"):
            sessions = load_corpus(toy_dir / f"{name}.jsonl")
            assert sessions
            assert all(s.is_annotated for s in sessions)
        manifest = json.loads((toy_dir / "manifest.json").read_text())
        assert manifest["command"] == "make-toy"
        assert manifest["arguments"]["seed"] == 1
        assert "versions" in manifest


class TestTrain:
    def test_artifacts_written(self, trained_dir):
        assert (trained_dir / "checkpoint.pt").exists()
        assert (trained_dir / "vocab.txt").exists()
        assert (trained_dir / "train_log.jsonl").exists()
        manifest = json.loads((trained_dir / "manifest.json").read_text())
        assert manifest["command"] == "train"
        assert manifest["arguments"]["seed"] == 7

    def test_same_seed_identical_checkpoints(self, tmp_path, toy_dir):
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            assert run([
                "train", "--corpus", str(toy_dir / "train.jsonl"),
                "--out-dir", str(out), "--seed", "7",
                "--layers", "1", "--heads", "2", "--hidden-dim", "32",
                "--batch-size", "4", "--lr", "1e-3",
                "--validate-every", "5", "--max-steps", "5",
            ]) == 0
            outs.append(ModelCheckpoint.load(out / "checkpoint.pt"))
        assert outs[0].config == outs[1].config
        for key, tensor in outs[0].state_dict.items():
            assert torch.equal(tensor, outs[1].state_dict[key])


class TestClassifiersAndAnnotate:
    def test_round_trip(self, tmp_path, toy_dir):
        clf_dir = tmp_path / "clf"
        assert run([
            "train-classifiers", "--corpus", str(toy_dir / "train.jsonl"),
            "--out-dir", str(clf_dir),
        ]) == 0
        out = tmp_path / "annotated.jsonl"
        assert run([
            "annotate", "--corpus", str(toy_dir / "test.jsonl"),
            "--vocab-size", "30",
            "--da-clf", str(clf_dir / "da_clf.pkl"),
            "--emo-clf", str(clf_dir / "emo_clf.pkl"),
            "--out", str(out),
            "--vocab-out", str(tmp_path / "topics.tsv"),
        ]) == 0
        sessions = load_corpus(out)
        assert all(s.is_annotated for s in sessions)
        assert (tmp_path / "topics.tsv").exists()


class TestCheckpointCacheDir:
    def test_env_var_resolves_bare_names(self, tmp_path, toy_dir, trained_dir, monkeypatch):
        from semchat.cli import CHECKPOINT_DIR_ENV

        monkeypatch.setenv(CHECKPOINT_DIR_ENV, str(trained_dir))
        monkeypatch.chdir(tmp_path)
        out = tmp_path / "traces.jsonl"
        assert run([
            "generate", "--ckpt", "checkpoint.pt", "--vocab", "vocab.txt",
            "--corpus", str(toy_dir / "test.jsonl"), "--out", str(out),
        ]) == 0
        assert out.exists()


class TestGenerateAndEval:
    def test_generate_traces(self, tmp_path, toy_dir, trained_dir):
        out = tmp_path / "traces.jsonl"
        assert run([
            "generate", "--ckpt", str(trained_dir / "checkpoint.pt"),
            "--vocab", str(trained_dir / "vocab.txt"),
            "--corpus", str(toy_dir / "test.jsonl"),
            "--out", str(out), "--seed", "3",
        ]) == 0
        traces = [json.loads(l) for l in out.read_text().splitlines()]
        assert traces
        assert all("response" in t and "planned" in t for t in traces)
        assert all(t["planned"] is not None for t in traces)

    def test_generate_no_planning_drops_plans(self, tmp_path, toy_dir, trained_dir):
        out = tmp_path / "traces_np.jsonl"
        assert run([
            "generate", "--ckpt", str(trained_dir / "checkpoint.pt"),
            "--vocab", str(trained_dir / "vocab.txt"),
            "--corpus", str(toy_dir / "test.jsonl"),
            "--out", str(out), "--no-planning",
        ]) == 0
        traces = [json.loads(l) for l in out.read_text().splitlines()]
        assert all(t["planned"] is None for t in traces)
        assert all("planning" not in t["spans"] for t in traces)

    def test_eval_report_schema(self, tmp_path, toy_dir, trained_dir):
        out = tmp_path / "report.json"
        assert run([
            "eval", "--ckpt", str(trained_dir / "checkpoint.pt"),
            "--vocab", str(trained_dir / "vocab.txt"),
            "--corpus", str(toy_dir / "test.jsonl"),
            "--out", str(out), "--mode", "gold", "--seed", "5",
        ]) == 0
        report = json.loads(out.read_text())
        for column in (
            "bleu_1", "bleu_2", "bleu_3", "emb_average", "emb_extreme",
            "dist_1", "dist_2", "topical_recall", "das_f1", "emotions_f1", "ppl",
        ):
            assert column in report
        assert report["mode"] == "GOLD_VARIABLES"
        assert report["ppl"] >= 1.0
