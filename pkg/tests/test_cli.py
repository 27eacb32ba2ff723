import json
import subprocess
import sys

import numpy as np
import pytest

from erythro.classifiers import load_model, save_model, train_svm
from erythro.cli import main
from erythro.report import strip_timings

from _synth import build_corpus


@pytest.fixture(autouse=True)
def _no_model_dir(monkeypatch):
    monkeypatch.delenv("ERYTHRO_MODEL_DIR", raising=False)


def _run(capsys, *argv) -> tuple[int, str, str]:
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


# -- usage errors -----------------------------------------------------------------

def test_no_command_is_usage_error(capsys):
    code, _, _ = _run(capsys)
    assert code == 64


def test_unknown_flag(capsys):
    code, _, err = _run(capsys, "extract", "--bogus")
    assert code == 64


def test_bad_variant(capsys):
    code, _, _ = _run(capsys, "extract", "--dataset", "x", "--variant", "resized")
    assert code == 64


def test_unknown_backbone(capsys):
    code, _, err = _run(capsys, "extract", "--dataset", "x", "--backbone", "vgg16")
    assert code == 64
    assert "vgg16" in err


def test_unknown_classifier(capsys):
    code, _, _ = _run(capsys, "evaluate", "--dataset", "x", "--classifier", "forest")
    assert code == 64


def test_bad_k(capsys):
    code, _, _ = _run(capsys, "evaluate", "--dataset", "x", "--k", "1")
    assert code == 64


def test_bad_c(capsys):
    code, _, _ = _run(capsys, "evaluate", "--dataset", "x", "--c", "0")
    assert code == 64


def test_missing_dataset_flag(capsys):
    code, _, err = _run(capsys, "extract")
    assert code == 64
    assert "--dataset" in err


def test_help_exits_zero(capsys):
    code, out, _ = _run(capsys, "--help")
    assert code == 0
    assert "extract" in out


# -- extract ---------------------------------------------------------------------

def test_extract_builtin_cache_lifecycle(corpus_dir, tmp_path, capsys):
    cache = tmp_path / "cache"
    args = (
        "extract",
        "--dataset", str(corpus_dir),
        "--variant", "original",
        "--cache-dir", str(cache),
    )
    code, out, _ = _run(capsys, *args)
    assert code == 0
    assert "extracted" in out
    files = list(cache.glob("builtin-original-*.features"))
    assert len(files) == 1
    first = files[0].read_bytes()

    code, out, _ = _run(capsys, *args)
    assert code == 0
    assert "cache hit" in out
    assert files[0].read_bytes() == first

    code, out, _ = _run(capsys, *args, "--force")
    assert code == 0
    assert "extracted" in out
    assert files[0].read_bytes() == first  # recomputation is deterministic


def test_extract_missing_dataset_dir(tmp_path, capsys):
    code, _, err = _run(
        capsys, "extract", "--dataset", str(tmp_path / "nowhere"), "--variant", "original"
    )
    assert code == 2
    assert "not found" in err


def test_extract_cnn_without_model_dir(corpus_dir, tmp_path, capsys):
    code, _, err = _run(
        capsys,
        "extract",
        "--dataset", str(corpus_dir),
        "--variant", "original",
        "--backbone", "mobilenet",
        "--cache-dir", str(tmp_path / "cache"),
    )
    assert code == 3
    assert "ERYTHRO_MODEL_DIR" in err


def test_extract_cnn_missing_model_file(corpus_dir, tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("ERYTHRO_MODEL_DIR", str(tmp_path))
    code, _, err = _run(
        capsys,
        "extract",
        "--dataset", str(corpus_dir),
        "--variant", "original",
        "--backbone", "mobilenet",
        "--cache-dir", str(tmp_path / "cache"),
    )
    assert code == 3
    assert str(tmp_path / "mobilenet.model") in err


# -- evaluate ---------------------------------------------------------------------

def _evaluate_args(corpus_dir, tmp_path, *extra):
    return (
        "evaluate",
        "--dataset", str(corpus_dir),
        "--variant", "original",
        "--k", "3",
        "--cache-dir", str(tmp_path / "cache"),
        "--out", str(tmp_path / "out"),
        *extra,
    )


def test_evaluate_grid_outputs(corpus_dir, tmp_path, capsys):
    code, out, _ = _run(capsys, *_evaluate_args(corpus_dir, tmp_path))
    assert code == 0
    out_dir = tmp_path / "out"
    doc = json.loads((out_dir / "report.json").read_text())
    assert doc["schema_version"] == "1.0"
    assert len(doc["cells"]) == 2  # builtin x {svm, nb}
    kinds = sorted(c["classifier"] for c in doc["cells"])
    assert kinds == ["nb", "svm"]
    assert all(c["backbone"] == "builtin" for c in doc["cells"])
    assert all(c["k"] == 3 for c in doc["cells"])
    csv_lines = (out_dir / "report.csv").read_text().strip().split("\n")
    assert len(csv_lines) == 3
    assert (out_dir / "report-original.md").is_file()
    assert "accuracy/svm" in out


def test_evaluate_deterministic_reports(corpus_dir, tmp_path, capsys):
    code, _, _ = _run(capsys, *_evaluate_args(corpus_dir, tmp_path))
    assert code == 0
    doc1 = json.loads((tmp_path / "out" / "report.json").read_text())
    code, _, _ = _run(capsys, *_evaluate_args(corpus_dir, tmp_path))
    assert code == 0
    doc2 = json.loads((tmp_path / "out" / "report.json").read_text())
    assert strip_timings(doc1) == strip_timings(doc2)
    assert doc1["cells"][0]["aggregate"] == doc2["cells"][0]["aggregate"]


def test_evaluate_both_variants(corpus_dir, tmp_path, capsys):
    code, _, _ = _run(
        capsys,
        "evaluate",
        "--dataset", str(corpus_dir),
        "--variant", "both",
        "--k", "3",
        "--classifier", "nb",
        "--cache-dir", str(tmp_path / "cache"),
        "--out", str(tmp_path / "out"),
    )
    assert code == 0
    doc = json.loads((tmp_path / "out" / "report.json").read_text())
    assert sorted(c["variant"] for c in doc["cells"]) == ["original", "segmented"]
    assert (tmp_path / "out" / "report-original.md").is_file()
    assert (tmp_path / "out" / "report-segmented.md").is_file()


def test_config_file_precedence(corpus_dir, tmp_path, capsys):
    config = tmp_path / "run.json"
    config.write_text(json.dumps({"k": 3, "seed": 11, "classifiers": ["nb"]}))
    code, _, _ = _run(
        capsys,
        "evaluate",
        "--dataset", str(corpus_dir),
        "--variant", "original",
        "--config", str(config),
        "--seed", "99",
        "--cache-dir", str(tmp_path / "cache"),
        "--out", str(tmp_path / "out"),
    )
    assert code == 0
    doc = json.loads((tmp_path / "out" / "report.json").read_text())
    assert len(doc["cells"]) == 1
    cell = doc["cells"][0]
    assert cell["classifier"] == "nb"
    assert cell["k"] == 3  # from config file
    assert cell["seed"] == 99  # CLI flag wins


def test_config_file_unknown_key(corpus_dir, tmp_path, capsys):
    config = tmp_path / "run.json"
    config.write_text(json.dumps({"folds": 3}))
    code, _, err = _run(
        capsys, "evaluate", "--dataset", str(corpus_dir), "--config", str(config)
    )
    assert code == 64
    assert "folds" in err


# -- train + predict ----------------------------------------------------------------

def test_train_then_predict_self_consistent(corpus_dir, tmp_path, capsys):
    model_path = tmp_path / "cells.model"
    code, out, _ = _run(
        capsys,
        "train",
        "--dataset", str(corpus_dir),
        "--variant", "original",
        "--classifier", "svm",
        "--cache-dir", str(tmp_path / "cache"),
        "--out", str(model_path),
    )
    assert code == 0
    assert model_path.is_file()
    load_model(model_path)

    probes = [
        str(corpus_dir / "original" / "normal" / "img_000.png"),
        str(corpus_dir / "original" / "normal" / "img_001.png"),
        str(corpus_dir / "original" / "sickle" / "img_000.png"),
        str(corpus_dir / "original" / "sickle" / "img_001.png"),
        str(corpus_dir / "original" / "other" / "img_000.png"),
        str(corpus_dir / "original" / "other" / "img_001.png"),
    ]
    code, out, _ = _run(capsys, "predict", "--model", str(model_path), *probes)
    assert code == 0
    lines = [ln for ln in out.strip().split("\n") if ln]
    assert len(lines) == 6
    want = [0, 0, 1, 1, 2, 2]
    for line, expected, probe in zip(lines, want, probes):
        parts = line.split(",")
        assert parts[0] == probe
        assert int(parts[1]) == expected
        scores = [float(s) for s in parts[2:]]
        assert len(scores) == 3
        assert int(parts[1]) == scores.index(max(scores))


def test_train_writes_into_directory(corpus_dir, tmp_path, capsys):
    out_dir = tmp_path / "models"
    code, _, _ = _run(
        capsys,
        "train",
        "--dataset", str(corpus_dir),
        "--variant", "original",
        "--classifier", "nb",
        "--cache-dir", str(tmp_path / "cache"),
        "--out", str(out_dir),
    )
    assert code == 0
    assert (out_dir / "nb-builtin-original.model").is_file()


def test_predict_empty_input_ok(corpus_dir, tmp_path, capsys):
    model_path = tmp_path / "cells.model"
    _run(
        capsys,
        "train",
        "--dataset", str(corpus_dir),
        "--variant", "original",
        "--classifier", "nb",
        "--cache-dir", str(tmp_path / "cache"),
        "--out", str(model_path),
    )
    code, out, _ = _run(capsys, "predict", "--model", str(model_path))
    assert code == 0
    assert out.strip() == ""


def test_predict_dim_mismatch_exits_5(corpus_dir, tmp_path, capsys):
    # a model trained on 2-dim features cannot score 135-dim builtin vectors
    X = np.array([[-1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    m = train_svm(X, np.array([0, 1, 2]), seed=1)
    model_path = tmp_path / "tiny.model"
    save_model(m, model_path)
    probe = str(corpus_dir / "original" / "normal" / "img_000.png")
    code, _, err = _run(capsys, "predict", "--model", str(model_path), probe)
    assert code == 5
    assert "DimMismatch" in err


def test_predict_missing_model_exits_5(tmp_path, capsys):
    code, _, _ = _run(capsys, "predict", "--model", str(tmp_path / "absent.model"))
    assert code == 5


def test_predict_writes_output_file(corpus_dir, tmp_path, capsys):
    model_path = tmp_path / "cells.model"
    _run(
        capsys,
        "train",
        "--dataset", str(corpus_dir),
        "--variant", "original",
        "--classifier", "svm",
        "--cache-dir", str(tmp_path / "cache"),
        "--out", str(model_path),
    )
    probe = str(corpus_dir / "original" / "normal" / "img_000.png")
    out_file = tmp_path / "preds.csv"
    code, out, _ = _run(
        capsys, "predict", "--model", str(model_path), "--out", str(out_file), probe
    )
    assert code == 0
    assert out_file.read_text().strip() == out.strip()


# -- benchmark ---------------------------------------------------------------------

def test_benchmark_writes_summary(corpus_dir, tmp_path, capsys):
    code, out, _ = _run(
        capsys,
        "benchmark",
        "--dataset", str(corpus_dir),
        "--variant", "original",
        "--classifier", "nb",
        "--repetitions", "3",
        "--cache-dir", str(tmp_path / "cache"),
        "--out", str(tmp_path / "out"),
    )
    assert code == 0
    doc = json.loads((tmp_path / "out" / "benchmark.json").read_text())
    assert len(doc["benchmarks"]) == 1
    entry = doc["benchmarks"][0]
    assert entry["repetitions"] == 3
    assert len(entry["train"]["samples"]) == 3
    assert "mean_s" in entry["train"] and "median_s" in entry["train"]
    assert "mean_s" in entry["predict_per_1000"]
    assert entry["backbone"] == "builtin"
    assert "train mean" in out


def test_benchmark_bad_repetitions(corpus_dir, capsys):
    code, _, _ = _run(
        capsys,
        "benchmark",
        "--dataset", str(corpus_dir),
        "--repetitions", "0",
    )
    assert code == 64


# -- console entry point ---------------------------------------------------------

def test_console_script_usage_exit():
    proc = subprocess.run(
        [sys.executable, "-m", "erythro.cli", "extract"], capture_output=True, text=True
    )
    assert proc.returncode == 64
    assert "--dataset" in proc.stderr
