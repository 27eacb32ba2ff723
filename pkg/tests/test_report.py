import json

import numpy as np
import pytest

from erythro.errors import EmptyGrid, FormatError, VersionMismatch
from erythro.evaluation import ConfusionMatrix, EvalReport, FoldEval, FoldPlan, MetricSet
from erythro.report import (
    CSV_COLUMNS,
    ExperimentGrid,
    format_percent,
    grid_to_dict,
    read_json,
    render_table,
    strip_timings,
    write_csv,
    write_json,
    write_markdown,
)


def _fake_report(backbone: str, classifier: str, variant: str, value: float) -> EvalReport:
    ms = MetricSet(
        accuracy=value,
        precision=value,
        recall=value,
        f1=value,
        per_class_precision=(value, value, value),
        per_class_recall=(value, value, value),
        per_class_f1=(value, value, value),
    )
    fold = FoldEval(
        fold_index=0,
        metrics=ms,
        confusion=ConfusionMatrix(counts=np.diag([1, 1, 1]), class_codes=(0, 1, 2)),
        train_time_s=0.25,
        predict_time_s=0.125,
    )
    return EvalReport(
        classifier_kind=classifier,
        backbone=backbone,
        variant=variant,
        k=5,
        seed=42,
        c_penalty=2.9,
        standardize=True,
        class_codes=(0, 1, 2),
        n_samples=3,
        dim=4,
        per_fold=(fold,),
        aggregate=ms,
        fold_plan=FoldPlan(k=5, seed=42, folds=((0, 1, 2),)),
    )


def _demo_grid() -> ExperimentGrid:
    return ExperimentGrid(
        cells=(
            _fake_report("densenet169", "nb", "original", 0.50),
            _fake_report("densenet169", "svm", "original", 0.60),
            _fake_report("mobilenet", "nb", "original", 0.70),
            _fake_report("mobilenet", "svm", "original", 0.968),
            _fake_report("resnet50", "nb", "original", 0.70),
            _fake_report("resnet50", "svm", "original", 0.60),
        )
    )


# -- grid --------------------------------------------------------------------

def test_grid_rejects_duplicate_cells():
    cell = _fake_report("mobilenet", "svm", "original", 0.9)
    with pytest.raises(ValueError, match="duplicate"):
        ExperimentGrid(cells=(cell, cell))


def test_grid_lookup():
    grid = _demo_grid()
    assert grid.cell("mobilenet", "svm", "original").aggregate.accuracy == 0.968
    with pytest.raises(KeyError):
        grid.cell("mobilenet", "svm", "segmented")
    assert len(grid.for_variant("original")) == 6
    assert grid.for_variant("segmented") == []


# -- formatting ---------------------------------------------------------------

def test_percent_formatting():
    assert format_percent(0.968) == "96.80"
    assert format_percent(1.0) == "100.00"
    assert format_percent(0.0) == "0.00"


def test_percent_half_even():
    # dyadic fractions make the halfway cases exact: x.xx25 and x.xx75
    # both sit exactly between neighbors, and both round to the even digit
    assert format_percent(0.900625) == "90.06"
    assert format_percent(0.901875) == "90.19"


def test_render_single_cell_96_80():
    grid = ExperimentGrid(cells=(_fake_report("mobilenet", "svm", "segmented", 0.968),))
    table = render_table(grid, "segmented")
    assert "96.80*" in table


def test_render_table_expected_string():
    table = render_table(_demo_grid(), "original")
    expected = "\n".join(
        [
            "| backbone | accuracy/nb | accuracy/svm | precision/nb | precision/svm"
            " | recall/nb | recall/svm | f1/nb | f1/svm |",
            "|---|---|---|---|---|---|---|---|---|",
            "| densenet169 | 50.00 | 60.00 | 50.00 | 60.00 | 50.00 | 60.00 | 50.00 | 60.00 |",
            "| mobilenet | 70.00* | 96.80* | 70.00* | 96.80* | 70.00* | 96.80* | 70.00* | 96.80* |",
            "| resnet50 | 70.00* | 60.00 | 70.00* | 60.00 | 70.00* | 60.00 | 70.00* | 60.00 |",
        ]
    ) + "\n"
    assert table == expected


def test_render_tied_column_all_marked():
    grid = ExperimentGrid(
        cells=(
            _fake_report("mobilenet", "svm", "original", 0.75),
            _fake_report("resnet50", "svm", "original", 0.75),
        )
    )
    table = render_table(grid, "original")
    assert table.count("75.00*") == 8  # 4 metrics x 2 rows, every cell tied-best


def test_render_empty_grid():
    with pytest.raises(EmptyGrid):
        render_table(ExperimentGrid(cells=()), "original")
    with pytest.raises(EmptyGrid):
        render_table(_demo_grid(), "segmented")


# -- JSON -----------------------------------------------------------------------

def test_json_roundtrip_structural(tmp_path):
    grid = _demo_grid()
    path = tmp_path / "report.json"
    write_json(grid, path)
    assert read_json(path) == grid_to_dict(grid)


def test_json_empty_grid(tmp_path):
    path = tmp_path / "report.json"
    write_json(ExperimentGrid(cells=()), path)
    doc = read_json(path)
    assert doc["cells"] == []
    assert doc["schema_version"] == "1.0"


def test_json_rejects_unknown_major_version(tmp_path):
    path = tmp_path / "report.json"
    path.write_text(json.dumps({"schema_version": "2.0", "cells": []}))
    with pytest.raises(VersionMismatch):
        read_json(path)


def test_json_accepts_minor_version_bump(tmp_path):
    path = tmp_path / "report.json"
    path.write_text(json.dumps({"schema_version": "1.7", "cells": []}))
    assert read_json(path)["cells"] == []


def test_json_missing_version(tmp_path):
    path = tmp_path / "report.json"
    path.write_text(json.dumps({"cells": []}))
    with pytest.raises(FormatError):
        read_json(path)


def test_json_invalid(tmp_path):
    path = tmp_path / "report.json"
    path.write_text("{nope")
    with pytest.raises(FormatError):
        read_json(path)


def test_json_failures_annotation(tmp_path):
    path = tmp_path / "report.json"
    failures = [{"backbone": "mobilenet", "classifier": "svm", "variant": "original", "error": "boom"}]
    write_json(ExperimentGrid(cells=()), path, failures=failures)
    assert read_json(path)["failures"] == failures


def test_strip_timings():
    doc = grid_to_dict(_demo_grid())
    stripped = strip_timings(doc)
    for cell in stripped["cells"]:
        assert "timings" not in cell
        for fold in cell["folds"]:
            assert "train_time_s" not in fold
            assert "predict_time_s" not in fold
    # original untouched
    assert "timings" in doc["cells"][0]


# -- CSV ------------------------------------------------------------------------

def test_csv_shape_and_values(tmp_path):
    path = tmp_path / "report.csv"
    write_csv(_demo_grid(), path)
    lines = path.read_text().strip().split("\n")
    assert len(lines) == 7  # header + 6 cells
    header = lines[0].split(",")
    assert header == list(CSV_COLUMNS)
    assert len(header) == 9
    row = lines[4].split(",")  # mobilenet svm
    assert row[0] == "mobilenet"
    assert row[1] == "svm"
    assert row[2] == "original"
    assert float(row[3]) == 0.968
    assert float(row[7]) == 0.25
    assert float(row[8]) == 0.125


# -- markdown file ----------------------------------------------------------------

def test_write_markdown(tmp_path):
    path = tmp_path / "report.md"
    write_markdown(_demo_grid(), "original", path)
    assert path.read_text() == render_table(_demo_grid(), "original")
