import json
import os

import numpy as np
import pytest

from mlgcn.cli import _floats, main
from mlgcn.dataset_io import load_annotations, read_matrix
from mlgcn.embeddings import ONE_HOT, build_label_embeddings, load_vocabulary
from mlgcn.label_graph import build_label_graph
from mlgcn.model import ModelConfig, init_model, load_checkpoint

SMALL_TRAIN = ["--layer-dims", "6,8", "--epochs", "2", "--decay-every", "1", "--lr0", "0.05"]


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth") / "data"
    assert main(["synth", "--classes", "4", "--feature-dim", "8", "--samples", "150",
                 "--train-samples", "100", "--seed", "3", "--out", str(out)]) == 0
    return out


def data_args(d, split="train", features=True):
    args = ["--annotations", str(d / f"{split}.tsv"), "--vocab", str(d / "labels.txt")]
    if features:
        args += ["--features", str(d / f"{split}.mlgf")]
    return args


def file_bytes(directory):
    return {f: (directory / f).read_bytes() for f in sorted(os.listdir(directory))}


class TestGridParsing:
    def test_ellipsis(self):
        assert _floats("0,0.1,...,1.0") == [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0]

    def test_plain(self):
        assert _floats("0.4, 0.5") == [0.4, 0.5]


class TestSynth:
    def test_files(self, data_dir):
        names = set(os.listdir(data_dir))
        assert {"labels.txt", "embeddings.txt", "train.tsv", "train.mlgf", "test.tsv", "test.mlgf",
                "manifest.json"} <= names
        assert read_matrix(data_dir / "train.mlgf").shape == (100, 8)


class TestBuildGraph:
    def test_four_matrices_and_manifest(self, data_dir, tmp_path):
        out = tmp_path / "graph"
        assert main(["build-graph", *data_args(data_dir, features=False), "--tau", "0.4", "--p", "0.2",
                     "--out", str(out)]) == 0
        assert sorted(os.listdir(out)) == ["A.mlgf", "Ahat.mlgf", "Aprime.mlgf", "P.mlgf", "manifest.json"]
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["config"]["tau"] == 0.4 and manifest["command"] == "build-graph"
        assert set(manifest["artifacts"]) == {"A.mlgf", "Ahat.mlgf", "Aprime.mlgf", "P.mlgf"}
        np.testing.assert_allclose(read_matrix(out / "Aprime.mlgf").sum(axis=1), 1.0, rtol=0, atol=1e-12)


class TestTrain:
    def test_zero_lr_checkpoint_equals_init(self, data_dir, tmp_path):
        out = tmp_path / "ckpt"
        args = ["train", *data_args(data_dir), "--layer-dims", "6,8", "--epochs", "2", "--lr0", "0",
                "--seed", "5", "--out", str(out)]
        assert main(args) == 0
        vocab = load_vocabulary(data_dir / "labels.txt")
        samples = load_annotations(data_dir / "train.tsv", vocab)
        graph = build_label_graph(samples, len(vocab))
        fresh = init_model(build_label_embeddings(vocab, ONE_HOT), graph.normalized,
                           ModelConfig(layer_dims=(6, 8), seed=5))
        model, _ = load_checkpoint(out)
        for a, b in zip(fresh.weights, model.weights):
            assert a.data.tobytes() == b.data.tobytes()

    def test_history_and_evaluate(self, data_dir, tmp_path, capsys):
        out = tmp_path / "ckpt"
        assert main(["train", *data_args(data_dir), *SMALL_TRAIN, "--embeddings",
                     str(data_dir / "embeddings.txt"), "--out", str(out)]) == 0
        lines = (out / "history.jsonl").read_text().splitlines()
        assert [json.loads(line)["epoch"] for line in lines] == [0, 1]
        capsys.readouterr()
        assert main(["evaluate", "--checkpoint", str(out), "--annotations", str(data_dir / "test.tsv"),
                     "--features", str(data_dir / "test.mlgf"), "--rule", "topk:3"]) == 0
        printed = capsys.readouterr().out.splitlines()
        assert printed[0] == "rule topk:3"
        assert [line.split()[0] for line in printed[1:]] == ["mAP", "CP", "CR", "CF1", "OP", "OR", "OF1"]

    def test_export(self, data_dir, tmp_path):
        ckpt, out = tmp_path / "ckpt", tmp_path / "export"
        assert main(["train", *data_args(data_dir), *SMALL_TRAIN, "--out", str(ckpt)]) == 0
        assert main(["export-classifiers", "--checkpoint", str(ckpt), "--out", str(out)]) == 0
        assert read_matrix(out / "classifiers.mlgf").shape == (4, 8)
        assert (out / "labels.txt").read_text().split() == ["label0", "label1", "label2", "label3"]


class TestSweep:
    def test_p_grid_rows_and_flag(self, data_dir, tmp_path):
        out = tmp_path / "sweep"
        args = ["sweep", *data_args(data_dir), "--test-annotations", str(data_dir / "test.tsv"),
                "--test-features", str(data_dir / "test.mlgf"), "--p-grid", "0,0.1,...,1.0",
                *SMALL_TRAIN, "--out", str(out)]
        assert main(args) == 0
        rows = (out / "results.tsv").read_text().splitlines()
        header = rows[0].split("\t")
        assert len(rows) == 12
        flags = {r.split("\t")[header.index("p")]: r.split("\t")[header.index("degenerate_diagonal")]
                 for r in rows[1:]}
        assert flags["1"] == "yes"
        assert all(v == "no" for k, v in flags.items() if k != "1")


class TestRetrieve:
    def test_self_first(self, data_dir, capsys):
        assert main(["retrieve", *data_args(data_dir), "--query", "s000007", "--k", "5"]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert len(lines) == 5
        assert lines[0].split("\t")[:2] == ["1", "s000007"]

    def test_unknown_query(self, data_dir, capsys):
        assert main(["retrieve", *data_args(data_dir), "--query", "nope"]) == 1
        assert "error" in capsys.readouterr().err


class TestFailures:
    def test_error_rolls_back(self, data_dir, tmp_path, capsys):
        out = tmp_path / "bad"
        (tmp_path / "ann.tsv").write_text("x\tlabel0,unicorn\n")
        rc = main(["build-graph", "--annotations", str(tmp_path / "ann.tsv"), "--vocab",
                   str(data_dir / "labels.txt"), "--out", str(out)])
        err = capsys.readouterr().err.strip().splitlines()
        assert rc == 1 and len(err) == 1 and "unicorn" in err[0]
        assert not out.exists()

    def test_partial_artifacts_removed(self, data_dir, tmp_path):
        out = tmp_path / "ckpt"
        rc = main(["train", *data_args(data_dir), "--layer-dims", "6,8", "--epochs", "1",
                   "--lr0", "1e200", "--out", str(out)])
        assert rc == 1
        assert not out.exists()

    def test_bad_config(self, data_dir, tmp_path):
        assert main(["build-graph", *data_args(data_dir, features=False), "--tau", "0",
                     "--out", str(tmp_path / "g")]) == 1

    def test_missing_file(self, tmp_path):
        assert main(["build-graph", "--annotations", str(tmp_path / "none.tsv"), "--vocab",
                     str(tmp_path / "none.txt"), "--out", str(tmp_path / "g")]) == 1


class TestRerun:
    @pytest.mark.parametrize("command", ["build-graph", "train"])
    def test_bitwise_identical(self, data_dir, tmp_path, command):
        first, second = tmp_path / "first", tmp_path / "second"
        if command == "build-graph":
            args = ["build-graph", *data_args(data_dir, features=False), "--csv", "--out", str(first)]
        else:
            args = ["train", *data_args(data_dir), *SMALL_TRAIN, "--out", str(first)]
        assert main(args) == 0
        assert main(["rerun", str(first / "manifest.json"), "--out", str(second)]) == 0
        a, b = file_bytes(first), file_bytes(second)
        assert a.keys() == b.keys()
        for name in a:
            if name != "manifest.json":
                assert a[name] == b[name], name
        ma, mb = (json.loads(x["manifest.json"]) for x in (a, b))
        assert ma["artifacts"] == mb["artifacts"]
