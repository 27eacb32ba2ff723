"""Stratified k-fold cross-validation with confusion-matrix metrics and timing.

Folds are built per class: each class's indices are shuffled with a seeded
generator and dealt round-robin to the k folds, so per-class fold sizes
never differ by more than one.  Metrics follow the usual one-vs-rest
reading of a confusion matrix; precision/recall/F1 are macro-averaged and
zero denominators coerce to 0 with an explicit degenerate flag instead of
NaN.  Wall-clock timings ride along but are excluded from any determinism
contract.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from statistics import median

import numpy as np

from .classifiers import (
    NbModel,
    Scaler,
    SvmModel,
    apply_scaler,
    fit_scaler,
    predict_nb_many,
    predict_svm_many,
    train_nb,
    train_svm,
)
from .errors import BadK, DimMismatch, EmptyMatrix
from .features import FeatureMatrix

CLASSIFIER_KINDS = ("svm", "nb")


def _split_xy(X, y):
    if isinstance(X, FeatureMatrix):
        arr = X.values
        labels = X.labels if y is None else np.asarray(y, dtype=np.int64).ravel()
    else:
        arr = np.asarray(X, dtype=np.float64)
        if y is None:
            raise ValueError("labels required when X is a bare array")
        labels = np.asarray(y, dtype=np.int64).ravel()
    if arr.shape[0] != labels.shape[0]:
        raise DimMismatch(f"X rows {arr.shape[0]} != labels {labels.shape[0]}")
    return arr, labels


# -- fold planning ------------------------------------------------------------

@dataclass(frozen=True)
class FoldPlan:
    k: int
    seed: int
    folds: tuple[tuple[int, ...], ...]

    @property
    def n(self) -> int:
        return sum(len(f) for f in self.folds)

    def test_indices(self, fold_index: int) -> np.ndarray:
        return np.asarray(self.folds[fold_index], dtype=np.int64)

    def train_indices(self, fold_index: int) -> np.ndarray:
        return np.setdiff1d(np.arange(self.n), self.test_indices(fold_index))


def stratified_kfold(labels, k: int = 5, seed: int = 0) -> FoldPlan:
    """Deal each class's shuffled indices round-robin across k folds."""
    y = np.asarray(labels, dtype=np.int64).ravel()
    n = y.shape[0]
    if k < 2 or k > n:
        raise BadK(f"k={k} invalid for {n} samples (need 2 <= k <= n)")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    buckets: list[list[int]] = [[] for _ in range(k)]
    for code in np.unique(y):
        idx = np.flatnonzero(y == code)
        for j, i in enumerate(rng.permutation(idx)):
            buckets[j % k].append(int(i))
    return FoldPlan(k=k, seed=seed, folds=tuple(tuple(sorted(b)) for b in buckets))


# -- confusion matrix + metrics --------------------------------------------------

@dataclass(frozen=True)
class ConfusionMatrix:
    """Square count grid: rows are true classes, columns predicted ones."""

    counts: np.ndarray
    class_codes: tuple[int, ...]

    @classmethod
    def from_pairs(cls, true_labels, predicted_labels, class_codes) -> "ConfusionMatrix":
        codes = tuple(int(c) for c in class_codes)
        pos = {c: i for i, c in enumerate(codes)}
        counts = np.zeros((len(codes), len(codes)), dtype=np.int64)
        for t, p in zip(np.asarray(true_labels).ravel(), np.asarray(predicted_labels).ravel()):
            counts[pos[int(t)], pos[int(p)]] += 1
        return cls(counts=counts, class_codes=codes)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class MetricSet:
    accuracy: float
    precision: float
    recall: float
    f1: float
    per_class_precision: tuple[float, ...]
    per_class_recall: tuple[float, ...]
    per_class_f1: tuple[float, ...]
    # (class code, metric name) pairs where a zero denominator was coerced to 0
    degenerate_flags: tuple[tuple[int, str], ...] = ()

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "per_class_precision": list(self.per_class_precision),
            "per_class_recall": list(self.per_class_recall),
            "per_class_f1": list(self.per_class_f1),
            "degenerate_flags": [[c, m] for c, m in self.degenerate_flags],
        }


def compute_metrics(cm: ConfusionMatrix) -> MetricSet:
    counts = np.asarray(cm.counts, dtype=np.int64)
    total = int(counts.sum())
    if total == 0:
        raise EmptyMatrix("confusion matrix has no samples")

    precisions, recalls, f1s = [], [], []
    flags: list[tuple[int, str]] = []
    for i, code in enumerate(cm.class_codes):
        tp = int(counts[i, i])
        fp = int(counts[:, i].sum()) - tp
        fn = int(counts[i, :].sum()) - tp
        if tp + fp > 0:
            p = tp / (tp + fp)
        else:
            p = 0.0
            flags.append((code, "precision"))
        if tp + fn > 0:
            r = tp / (tp + fn)
        else:
            r = 0.0
            flags.append((code, "recall"))
        if p + r > 0:
            f = 2.0 * p * r / (p + r)
        else:
            f = 0.0
            flags.append((code, "f1"))
        precisions.append(p)
        recalls.append(r)
        f1s.append(f)

    return MetricSet(
        accuracy=float(np.trace(counts)) / total,
        precision=float(np.mean(precisions)),
        recall=float(np.mean(recalls)),
        f1=float(np.mean(f1s)),
        per_class_precision=tuple(precisions),
        per_class_recall=tuple(recalls),
        per_class_f1=tuple(f1s),
        degenerate_flags=tuple(sorted(flags)),
    )


def mean_metrics(parts: list[MetricSet]) -> MetricSet:
    """Arithmetic mean across folds, field by field; flags are unioned."""
    if not parts:
        raise EmptyMatrix("no fold metrics to aggregate")

    def col(vals):
        return float(np.mean(vals))

    n_classes = len(parts[0].per_class_precision)
    flags = sorted({fl for m in parts for fl in m.degenerate_flags})
    return MetricSet(
        accuracy=col([m.accuracy for m in parts]),
        precision=col([m.precision for m in parts]),
        recall=col([m.recall for m in parts]),
        f1=col([m.f1 for m in parts]),
        per_class_precision=tuple(
            col([m.per_class_precision[j] for m in parts]) for j in range(n_classes)
        ),
        per_class_recall=tuple(
            col([m.per_class_recall[j] for m in parts]) for j in range(n_classes)
        ),
        per_class_f1=tuple(col([m.per_class_f1[j] for m in parts]) for j in range(n_classes)),
        degenerate_flags=tuple(flags),
    )


# -- cross-validation --------------------------------------------------------------

@dataclass(frozen=True)
class FoldEval:
    fold_index: int
    metrics: MetricSet
    confusion: ConfusionMatrix
    train_time_s: float
    predict_time_s: float


@dataclass(frozen=True)
class EvalReport:
    classifier_kind: str
    backbone: str
    variant: str
    k: int
    seed: int
    c_penalty: float
    standardize: bool
    class_codes: tuple[int, ...]
    n_samples: int
    dim: int
    per_fold: tuple[FoldEval, ...]
    aggregate: MetricSet
    fold_plan: FoldPlan

    @property
    def train_time_total(self) -> float:
        return sum(f.train_time_s for f in self.per_fold)

    @property
    def predict_time_total(self) -> float:
        return sum(f.predict_time_s for f in self.per_fold)


def _fit_fold(arr, labels, classifier_kind, c_penalty, tol, max_epochs, standardize, seed_child):
    if classifier_kind == "svm":
        scaler = fit_scaler(arr) if standardize else Scaler.identity(arr.shape[1])
        return train_svm(
            apply_scaler(scaler, arr),
            labels,
            c_penalty=c_penalty,
            tol=tol,
            max_epochs=max_epochs,
            seed=seed_child,
            scaler=scaler,
        )
    if classifier_kind == "nb":
        return train_nb(arr, labels)
    raise ValueError(f"unknown classifier kind {classifier_kind!r}")


def _predict_block(model, arr) -> np.ndarray:
    if isinstance(model, SvmModel):
        return predict_svm_many(model, arr)
    if isinstance(model, NbModel):
        return predict_nb_many(model, arr)
    raise TypeError(f"unsupported model type {type(model).__name__}")


def cross_validate(
    X,
    y=None,
    classifier_kind: str = "svm",
    k: int = 5,
    seed: int = 42,
    c_penalty: float = 2.9,
    tol: float = 1e-4,
    max_epochs: int = 1000,
    standardize: bool = True,
    backbone: str = "",
    variant: str = "",
    on_fold=None,
) -> EvalReport:
    """Evaluate one classifier with stratified k-fold cross-validation.

    For every fold the scaler (SVM only) and the classifier are fitted on
    the k-1 training folds alone; the held-out fold is only ever touched at
    predict time.  ``on_fold(fold_index, model)`` exposes each trained fold
    model to callers (diagnostics, leakage checks) without widening the
    report type.
    """
    arr, labels = _split_xy(X, y)
    if classifier_kind not in CLASSIFIER_KINDS:
        raise ValueError(f"classifier_kind must be one of {CLASSIFIER_KINDS}")
    plan = stratified_kfold(labels, k=k, seed=seed)
    codes = tuple(int(c) for c in np.unique(labels))
    fold_seeds = np.random.SeedSequence(seed).spawn(k)

    folds: list[FoldEval] = []
    for fold_index in range(k):
        tr = plan.train_indices(fold_index)
        te = plan.test_indices(fold_index)

        t0 = time.perf_counter()
        model = _fit_fold(
            arr[tr], labels[tr], classifier_kind, c_penalty, tol, max_epochs,
            standardize, fold_seeds[fold_index],
        )
        train_time = time.perf_counter() - t0
        if on_fold is not None:
            on_fold(fold_index, model)

        t0 = time.perf_counter()
        predicted = _predict_block(model, arr[te])
        predict_time = time.perf_counter() - t0

        cm = ConfusionMatrix.from_pairs(labels[te], predicted, codes)
        folds.append(
            FoldEval(
                fold_index=fold_index,
                metrics=compute_metrics(cm),
                confusion=cm,
                train_time_s=train_time,
                predict_time_s=predict_time,
            )
        )

    return EvalReport(
        classifier_kind=classifier_kind,
        backbone=backbone,
        variant=variant,
        k=k,
        seed=seed,
        c_penalty=float(c_penalty),
        standardize=standardize,
        class_codes=codes,
        n_samples=int(arr.shape[0]),
        dim=int(arr.shape[1]),
        per_fold=tuple(folds),
        aggregate=mean_metrics([f.metrics for f in folds]),
        fold_plan=plan,
    )


# -- timing benchmark ----------------------------------------------------------------

@dataclass(frozen=True)
class TimingStat:
    samples: tuple[float, ...]

    @property
    def mean_s(self) -> float:
        return float(np.mean(self.samples))

    @property
    def median_s(self) -> float:
        return float(median(self.samples))

    def to_dict(self) -> dict:
        return {"mean_s": self.mean_s, "median_s": self.median_s, "samples": list(self.samples)}


@dataclass(frozen=True)
class BenchmarkSummary:
    classifier_kind: str
    n_samples: int
    dim: int
    repetitions: int
    train: TimingStat
    predict_per_1000: TimingStat

    def to_dict(self) -> dict:
        return {
            "classifier_kind": self.classifier_kind,
            "n_samples": self.n_samples,
            "dim": self.dim,
            "repetitions": self.repetitions,
            "train": self.train.to_dict(),
            "predict_per_1000": self.predict_per_1000.to_dict(),
        }


def benchmark(
    X,
    y=None,
    classifier_kind: str = "svm",
    repetitions: int = 1,
    seed: int = 42,
    c_penalty: float = 2.9,
    tol: float = 1e-4,
    max_epochs: int = 1000,
    standardize: bool = True,
) -> BenchmarkSummary:
    """Time full-data training and prediction over ``repetitions`` runs."""
    arr, labels = _split_xy(X, y)
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    if classifier_kind not in CLASSIFIER_KINDS:
        raise ValueError(f"classifier_kind must be one of {CLASSIFIER_KINDS}")

    train_times, predict_times = [], []
    for _ in range(repetitions):
        t0 = time.perf_counter()
        model = _fit_fold(
            arr, labels, classifier_kind, c_penalty, tol, max_epochs,
            standardize, np.random.SeedSequence(seed),
        )
        train_times.append(time.perf_counter() - t0)

        t0 = time.perf_counter()
        _predict_block(model, arr)
        elapsed = time.perf_counter() - t0
        predict_times.append(elapsed / arr.shape[0] * 1000.0)

    return BenchmarkSummary(
        classifier_kind=classifier_kind,
        n_samples=int(arr.shape[0]),
        dim=int(arr.shape[1]),
        repetitions=repetitions,
        train=TimingStat(samples=tuple(train_times)),
        predict_per_1000=TimingStat(samples=tuple(predict_times)),
    )
