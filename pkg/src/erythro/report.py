"""Render evaluation results as JSON, CSV, and markdown tables.

The markdown layout mirrors the result grids this pipeline produces: one
row per backbone, one column per (metric, classifier) pair, values as
percentages with two decimals, and a ``*`` marking every column-best cell
(ties all marked).  JSON keeps raw fractions so the pretty renderings can
always be recomputed.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path

from .errors import EmptyGrid, FormatError, IoError, VersionMismatch
from .evaluation import EvalReport, MetricSet
from .ioutil import atomic_write_bytes, atomic_write_text

SCHEMA_VERSION = "1.0"

_METRIC_ORDER = ("accuracy", "precision", "recall", "f1")


@dataclass(frozen=True)
class ExperimentGrid:
    """Unique (backbone, classifier, variant) cells, each an EvalReport."""

    cells: tuple[EvalReport, ...]

    def __post_init__(self):
        seen = set()
        for r in self.cells:
            key = (r.backbone, r.classifier_kind, r.variant)
            if key in seen:
                raise ValueError(f"duplicate grid cell {key}")
            seen.add(key)

    def keys(self) -> list[tuple[str, str, str]]:
        return [(r.backbone, r.classifier_kind, r.variant) for r in self.cells]

    def cell(self, backbone: str, classifier_kind: str, variant: str) -> EvalReport:
        for r in self.cells:
            if (r.backbone, r.classifier_kind, r.variant) == (backbone, classifier_kind, variant):
                return r
        raise KeyError(f"no cell ({backbone}, {classifier_kind}, {variant})")

    def for_variant(self, variant: str) -> list[EvalReport]:
        return [r for r in self.cells if r.variant == variant]


def format_percent(fraction: float) -> str:
    """Two-decimal percentage; Python's float formatting rounds half-even."""
    return f"{fraction * 100.0:.2f}"


def render_table(grid: ExperimentGrid, variant: str) -> str:
    """Pipe table: backbones as rows, metric x classifier columns, best starred."""
    cells = grid.for_variant(variant)
    if not cells:
        raise EmptyGrid(f"no cells for variant {variant!r}")

    backbones = sorted({r.backbone for r in cells})
    classifiers = sorted({r.classifier_kind for r in cells})
    by_key = {(r.backbone, r.classifier_kind): r for r in cells}
    columns = [(m, c) for m in _METRIC_ORDER for c in classifiers]

    values: dict[tuple[str, str, str], float | None] = {}
    for m, c in columns:
        for b in backbones:
            r = by_key.get((b, c))
            values[(b, m, c)] = None if r is None else getattr(r.aggregate, m)

    best: dict[tuple[str, str], float] = {}
    for m, c in columns:
        present = [values[(b, m, c)] for b in backbones if values[(b, m, c)] is not None]
        if present:
            best[(m, c)] = max(present)

    header = ["backbone"] + [f"{m}/{c}" for m, c in columns]
    lines = ["| " + " | ".join(header) + " |", "|" + "|".join(["---"] * len(header)) + "|"]
    for b in backbones:
        row = [b]
        for m, c in columns:
            v = values[(b, m, c)]
            if v is None:
                row.append("-")
            else:
                row.append(format_percent(v) + ("*" if v == best[(m, c)] else ""))
        lines.append("| " + " | ".join(row) + " |")
    return "\n".join(lines) + "\n"


# -- JSON ------------------------------------------------------------------------

def report_to_dict(report: EvalReport, include_timings: bool = True) -> dict:
    d = {
        "backbone": report.backbone,
        "classifier": report.classifier_kind,
        "variant": report.variant,
        "k": report.k,
        "seed": report.seed,
        "c_penalty": report.c_penalty,
        "standardize": report.standardize,
        "class_codes": list(report.class_codes),
        "n_samples": report.n_samples,
        "dim": report.dim,
        "aggregate": report.aggregate.to_dict(),
        "folds": [
            {
                "fold": f.fold_index,
                "metrics": f.metrics.to_dict(),
                "confusion": f.confusion.counts.tolist(),
                "test_indices": [int(i) for i in report.fold_plan.folds[f.fold_index]],
                **(
                    {"train_time_s": f.train_time_s, "predict_time_s": f.predict_time_s}
                    if include_timings
                    else {}
                ),
            }
            for f in report.per_fold
        ],
    }
    if include_timings:
        d["timings"] = {
            "train_time_s_total": report.train_time_total,
            "predict_time_s_total": report.predict_time_total,
        }
    return d


def grid_to_dict(grid: ExperimentGrid, include_timings: bool = True, failures: list | None = None) -> dict:
    d = {
        "schema_version": SCHEMA_VERSION,
        "cells": [report_to_dict(r, include_timings=include_timings) for r in grid.cells],
    }
    if failures:
        d["failures"] = failures
    return d


def strip_timings(doc: dict) -> dict:
    """Deep-copy a grid document with every timing field removed."""
    out = json.loads(json.dumps(doc))
    for cell in out.get("cells", []):
        cell.pop("timings", None)
        for fold in cell.get("folds", []):
            fold.pop("train_time_s", None)
            fold.pop("predict_time_s", None)
    return out


def write_json(grid: ExperimentGrid, path: str | Path, failures: list | None = None) -> None:
    payload = json.dumps(grid_to_dict(grid, failures=failures), indent=2, sort_keys=True)
    try:
        atomic_write_text(path, payload + "\n")
    except OSError as exc:
        raise IoError(f"cannot write report {path}: {exc}") from exc


def read_json(path: str | Path) -> dict:
    """Parse a grid document, rejecting unknown schema major versions."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoError(f"cannot read report {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"report {path} is not valid JSON: {exc}") from exc
    version = doc.get("schema_version")
    if not isinstance(version, str) or "." not in version:
        raise FormatError(f"report {path} lacks a schema_version field")
    major = version.split(".", 1)[0]
    if major != SCHEMA_VERSION.split(".", 1)[0]:
        raise VersionMismatch(f"report {path} has schema {version}, reader supports {SCHEMA_VERSION}")
    return doc


CSV_COLUMNS = (
    "backbone",
    "classifier",
    "variant",
    "accuracy",
    "precision",
    "recall",
    "f1",
    "train_time_s",
    "predict_time_s",
)


def write_csv(grid: ExperimentGrid, path: str | Path) -> None:
    """One row per cell: 3 key columns, 4 aggregate metrics, 2 timing totals."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in grid.cells:
        writer.writerow(
            [
                r.backbone,
                r.classifier_kind,
                r.variant,
                repr(r.aggregate.accuracy),
                repr(r.aggregate.precision),
                repr(r.aggregate.recall),
                repr(r.aggregate.f1),
                repr(r.train_time_total),
                repr(r.predict_time_total),
            ]
        )
    try:
        atomic_write_text(path, buf.getvalue())
    except OSError as exc:
        raise IoError(f"cannot write report {path}: {exc}") from exc


def write_markdown(grid: ExperimentGrid, variant: str, path: str | Path) -> None:
    try:
        atomic_write_text(path, render_table(grid, variant))
    except OSError as exc:
        raise IoError(f"cannot write report {path}: {exc}") from exc


def write_benchmark_json(summaries: list[dict], path: str | Path) -> None:
    payload = json.dumps(
        {"schema_version": SCHEMA_VERSION, "benchmarks": summaries}, indent=2, sort_keys=True
    )
    try:
        atomic_write_text(path, payload + "\n")
    except OSError as exc:
        raise IoError(f"cannot write benchmark report {path}: {exc}") from exc
