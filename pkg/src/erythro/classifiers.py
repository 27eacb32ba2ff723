"""Classical classifiers over feature matrices: linear SVM and Gaussian NB.

The SVM is a one-vs-rest linear machine trained by dual coordinate descent
on the L2-regularized L1-hinge objective

    min_w  0.5 ||w||^2 + C * sum_i max(0, 1 - y_i * (w . x_i + b))

with the bias absorbed by augmenting every sample with a constant 1 (the
bias is therefore regularized, which keeps every dual update closed-form).
Training is deterministic given (X, y, seed).

Gaussian NB fits per-class feature means and population variances plus
class-frequency priors; a variance floor of 1e-9 times the largest total
feature variance keeps constant features from dividing by zero.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DimMismatch,
    EmptyInput,
    FormatError,
    IoError,
    NonFiniteFeature,
    SingleClassInput,
    VersionMismatch,
)
from .features import FeatureMatrix, FeatureVector
from .ioutil import atomic_write_bytes

STD_FLOOR = 1e-12
NB_SMOOTHING_FACTOR = 1e-9

_MODEL_MAGIC = b"ECM1"
_MODEL_VERSION = 1
_KIND_SVM = 1
_KIND_NB = 2


def _as_matrix(X) -> np.ndarray:
    arr = X.values if isinstance(X, FeatureMatrix) else np.asarray(X, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"expected 2-D feature block, got shape {arr.shape}")
    return np.asarray(arr, dtype=np.float64)


def _as_vector(x) -> np.ndarray:
    arr = x.values if isinstance(x, FeatureVector) else np.asarray(x, dtype=np.float64)
    return np.asarray(arr, dtype=np.float64).ravel()


# -- standardization -----------------------------------------------------------

@dataclass(frozen=True)
class Scaler:
    """Per-feature mean/std used to standardize inputs before the SVM."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def identity(cls, dim: int) -> "Scaler":
        return cls(mean=np.zeros(dim), std=np.ones(dim))

    def apply(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.mean) / self.std


def fit_scaler(X) -> Scaler:
    arr = _as_matrix(X)
    if arr.shape[0] == 0:
        raise EmptyInput("cannot fit a scaler on zero rows")
    mean = arr.mean(axis=0)
    std = np.maximum(arr.std(axis=0), STD_FLOOR)
    return Scaler(mean=mean, std=std)


def apply_scaler(scaler: Scaler, X) -> np.ndarray:
    return scaler.apply(_as_matrix(X))


# -- predictions -----------------------------------------------------------------

@dataclass(frozen=True)
class Prediction:
    """Label plus the per-class decision values that produced it.

    The label is the argmax of scores; exact ties resolve to the lowest
    class code (scores are ordered by ascending code, np.argmax takes the
    first maximum).
    """

    label: int
    scores: np.ndarray


def _argmax_label(class_codes: tuple[int, ...], scores: np.ndarray) -> int:
    return int(class_codes[int(np.argmax(scores))])


# -- linear SVM -------------------------------------------------------------------

@dataclass(frozen=True)
class SvmModel:
    weights: np.ndarray          # (n_classes, dim)
    biases: np.ndarray           # (n_classes,)
    c_penalty: float
    class_codes: tuple[int, ...]
    scaler: Scaler
    # per-class dual objective per epoch; diagnostic only, not serialized
    history: tuple[tuple[float, ...], ...] = field(default=(), compare=False)

    @property
    def dim(self) -> int:
        return int(self.weights.shape[1])

    def decision_matrix(self, X) -> np.ndarray:
        arr = _as_matrix(X)
        if arr.shape[1] != self.dim:
            raise DimMismatch(f"input dim {arr.shape[1]} != model dim {self.dim}")
        z = self.scaler.apply(arr)
        return z @ self.weights.T + self.biases


def _dcd_binary(
    Xa: np.ndarray,
    y: np.ndarray,
    c_penalty: float,
    tol: float,
    max_epochs: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, list[float]]:
    """Dual coordinate descent for one binary subproblem.

    Xa already carries the constant bias column.  Returns the augmented
    weight vector and the dual objective after each epoch.  An epoch stops
    the loop when the largest projected-gradient violation falls below tol.
    """
    n = Xa.shape[0]
    alpha = np.zeros(n)
    w = np.zeros(Xa.shape[1])
    qdiag = np.einsum("ij,ij->i", Xa, Xa)
    history: list[float] = []

    for _ in range(max_epochs):
        max_violation = 0.0
        for i in rng.permutation(n):
            xi = Xa[i]
            grad = y[i] * float(xi @ w) - 1.0
            a = alpha[i]
            if a <= 0.0:
                projected = min(grad, 0.0)
            elif a >= c_penalty:
                projected = max(grad, 0.0)
            else:
                projected = grad
            if projected != 0.0:
                if abs(projected) > max_violation:
                    max_violation = abs(projected)
                a_new = min(max(a - grad / qdiag[i], 0.0), c_penalty)
                if a_new != a:
                    w += (a_new - a) * y[i] * xi
                    alpha[i] = a_new
        history.append(float(alpha.sum() - 0.5 * (w @ w)))
        if max_violation < tol:
            break
    return w, history


def train_svm(
    X,
    y,
    c_penalty: float = 2.9,
    tol: float = 1e-4,
    max_epochs: int = 1000,
    seed: int | np.random.SeedSequence = 0,
    scaler: Scaler | None = None,
) -> SvmModel:
    """Train a one-vs-rest linear SVM on (already standardized) features.

    ``scaler`` records the standardization applied by the caller so that
    prediction can replay it on raw inputs; pass None when inputs are used
    as-is.
    """
    arr = _as_matrix(X)
    labels = np.asarray(y, dtype=np.int64).ravel()
    if arr.shape[0] != labels.shape[0]:
        raise DimMismatch(f"X rows {arr.shape[0]} != labels {labels.shape[0]}")
    if not np.isfinite(arr).all():
        raise NonFiniteFeature("SVM training input contains NaN/inf")
    if c_penalty <= 0:
        raise ValueError("c_penalty must be positive")
    codes = tuple(int(c) for c in np.unique(labels))
    if len(codes) < 2:
        raise SingleClassInput(f"need >= 2 distinct labels, got {codes}")

    Xa = np.ascontiguousarray(np.hstack([arr, np.ones((arr.shape[0], 1))]))
    seed_seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    children = seed_seq.spawn(len(codes))

    weights = np.zeros((len(codes), arr.shape[1]))
    biases = np.zeros(len(codes))
    histories = []
    for k, code in enumerate(codes):
        y_bin = np.where(labels == code, 1.0, -1.0)
        w_aug, hist = _dcd_binary(
            Xa, y_bin, c_penalty, tol, max_epochs, np.random.default_rng(children[k])
        )
        weights[k] = w_aug[:-1]
        biases[k] = w_aug[-1]
        histories.append(tuple(hist))

    return SvmModel(
        weights=weights,
        biases=biases,
        c_penalty=float(c_penalty),
        class_codes=codes,
        scaler=scaler if scaler is not None else Scaler.identity(arr.shape[1]),
        history=tuple(histories),
    )


def predict_svm(m: SvmModel, x) -> Prediction:
    vec = _as_vector(x)
    if vec.shape[0] != m.dim:
        raise DimMismatch(f"input dim {vec.shape[0]} != model dim {m.dim}")
    scores = m.decision_matrix(vec[None, :])[0]
    return Prediction(label=_argmax_label(m.class_codes, scores), scores=scores)


def predict_svm_many(m: SvmModel, X) -> np.ndarray:
    scores = m.decision_matrix(X)
    codes = np.array(m.class_codes, dtype=np.int64)
    return codes[np.argmax(scores, axis=1)]


# -- Gaussian Naive Bayes ----------------------------------------------------------

@dataclass(frozen=True)
class NbModel:
    class_codes: tuple[int, ...]
    class_priors: np.ndarray     # (n_classes,)
    means: np.ndarray            # (n_classes, dim)
    variances: np.ndarray        # (n_classes, dim), raw per-class variances
    smoothing: float             # floor added to every variance

    @property
    def dim(self) -> int:
        return int(self.means.shape[1])

    @property
    def smoothed_variances(self) -> np.ndarray:
        return self.variances + self.smoothing

    def score_matrix(self, X) -> np.ndarray:
        arr = _as_matrix(X)
        if arr.shape[1] != self.dim:
            raise DimMismatch(f"input dim {arr.shape[1]} != model dim {self.dim}")
        var = self.smoothed_variances
        log_prior = np.log(self.class_priors)
        # log posterior up to the shared evidence constant
        scores = np.empty((arr.shape[0], len(self.class_codes)))
        for k in range(len(self.class_codes)):
            diff = arr - self.means[k]
            scores[:, k] = log_prior[k] - 0.5 * np.sum(
                np.log(2.0 * np.pi * var[k]) + diff**2 / var[k], axis=1
            )
        return scores


def train_nb(X, y) -> NbModel:
    arr = _as_matrix(X)
    labels = np.asarray(y, dtype=np.int64).ravel()
    if arr.shape[0] == 0:
        raise EmptyInput("cannot fit NB on zero rows")
    if arr.shape[0] != labels.shape[0]:
        raise DimMismatch(f"X rows {arr.shape[0]} != labels {labels.shape[0]}")
    if not np.isfinite(arr).all():
        raise NonFiniteFeature("NB training input contains NaN/inf")

    codes = tuple(int(c) for c in np.unique(labels))
    priors = np.empty(len(codes))
    means = np.empty((len(codes), arr.shape[1]))
    variances = np.empty((len(codes), arr.shape[1]))
    for k, code in enumerate(codes):
        rows = arr[labels == code]
        priors[k] = rows.shape[0] / arr.shape[0]
        means[k] = rows.mean(axis=0)
        variances[k] = rows.var(axis=0)

    max_total_var = float(arr.var(axis=0).max()) if arr.shape[1] else 0.0
    smoothing = NB_SMOOTHING_FACTOR * max_total_var
    if smoothing <= 0.0:
        smoothing = NB_SMOOTHING_FACTOR  # all-identical rows; keep variances positive

    return NbModel(
        class_codes=codes,
        class_priors=priors,
        means=means,
        variances=variances,
        smoothing=smoothing,
    )


def predict_nb(m: NbModel, x) -> Prediction:
    vec = _as_vector(x)
    if vec.shape[0] != m.dim:
        raise DimMismatch(f"input dim {vec.shape[0]} != model dim {m.dim}")
    scores = m.score_matrix(vec[None, :])[0]
    return Prediction(label=_argmax_label(m.class_codes, scores), scores=scores)


def predict_nb_many(m: NbModel, X) -> np.ndarray:
    scores = m.score_matrix(X)
    codes = np.array(m.class_codes, dtype=np.int64)
    return codes[np.argmax(scores, axis=1)]


# -- model files --------------------------------------------------------------------

def save_model(model: SvmModel | NbModel, path: str | Path) -> None:
    """Binary container: magic ECM1, kind tag, version, dims, float64 payload."""
    buf = io.BytesIO()
    buf.write(_MODEL_MAGIC)
    if isinstance(model, SvmModel):
        buf.write(struct.pack("<BH", _KIND_SVM, _MODEL_VERSION))
        k, d = model.weights.shape
        buf.write(struct.pack("<II", k, d))
        buf.write(np.asarray(model.class_codes, dtype="<i4").tobytes())
        buf.write(struct.pack("<d", model.c_penalty))
        buf.write(np.ascontiguousarray(model.weights, dtype="<f8").tobytes())
        buf.write(np.ascontiguousarray(model.biases, dtype="<f8").tobytes())
        buf.write(np.ascontiguousarray(model.scaler.mean, dtype="<f8").tobytes())
        buf.write(np.ascontiguousarray(model.scaler.std, dtype="<f8").tobytes())
    elif isinstance(model, NbModel):
        buf.write(struct.pack("<BH", _KIND_NB, _MODEL_VERSION))
        k, d = model.means.shape
        buf.write(struct.pack("<II", k, d))
        buf.write(np.asarray(model.class_codes, dtype="<i4").tobytes())
        buf.write(struct.pack("<d", model.smoothing))
        buf.write(np.ascontiguousarray(model.class_priors, dtype="<f8").tobytes())
        buf.write(np.ascontiguousarray(model.means, dtype="<f8").tobytes())
        buf.write(np.ascontiguousarray(model.variances, dtype="<f8").tobytes())
    else:
        raise TypeError(f"unsupported model type {type(model).__name__}")
    try:
        atomic_write_bytes(path, buf.getvalue())
    except OSError as exc:
        raise IoError(f"cannot write model file {path}: {exc}") from exc


def load_model(path: str | Path) -> SvmModel | NbModel:
    p = Path(path)
    try:
        blob = p.read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read model file {p}: {exc}") from exc
    if blob[:4] != _MODEL_MAGIC:
        raise FormatError(f"bad magic in model file {p}")
    try:
        kind, version = struct.unpack_from("<BH", blob, 4)
        if version != _MODEL_VERSION:
            raise VersionMismatch(f"model file {p} has version {version}, reader supports {_MODEL_VERSION}")
        off = 7
        k, d = struct.unpack_from("<II", blob, off)
        off += 8
        codes = tuple(int(c) for c in np.frombuffer(blob, dtype="<i4", count=k, offset=off))
        off += 4 * k

        def take(count: int) -> np.ndarray:
            nonlocal off
            out = np.frombuffer(blob, dtype="<f8", count=count, offset=off).copy()
            off += 8 * count
            return out

        if kind == _KIND_SVM:
            (c_penalty,) = struct.unpack_from("<d", blob, off)
            off += 8
            weights = take(k * d).reshape(k, d)
            biases = take(k)
            mean = take(d)
            std = take(d)
            _expect_consumed(off, blob, p)
            return SvmModel(
                weights=weights,
                biases=biases,
                c_penalty=c_penalty,
                class_codes=codes,
                scaler=Scaler(mean=mean, std=std),
            )
        if kind == _KIND_NB:
            (smoothing,) = struct.unpack_from("<d", blob, off)
            off += 8
            priors = take(k)
            means = take(k * d).reshape(k, d)
            variances = take(k * d).reshape(k, d)
            _expect_consumed(off, blob, p)
            return NbModel(
                class_codes=codes,
                class_priors=priors,
                means=means,
                variances=variances,
                smoothing=smoothing,
            )
        raise FormatError(f"unknown model kind tag {kind} in {p}")
    except (VersionMismatch, FormatError):
        raise
    except (struct.error, ValueError) as exc:
        raise FormatError(f"truncated or malformed model file {p}: {exc}") from exc


def _expect_consumed(off: int, blob: bytes, path: Path) -> None:
    if off != len(blob):
        raise FormatError(f"model file {path} has {len(blob) - off} unexpected trailing bytes")


def model_to_json_dict(model: SvmModel | NbModel) -> dict:
    """Debug dump; lossy for exact bits, meant for human inspection."""
    if isinstance(model, SvmModel):
        return {
            "kind": "svm",
            "class_codes": list(model.class_codes),
            "c_penalty": model.c_penalty,
            "weights": model.weights.tolist(),
            "biases": model.biases.tolist(),
            "scaler_mean": model.scaler.mean.tolist(),
            "scaler_std": model.scaler.std.tolist(),
        }
    return {
        "kind": "nb",
        "class_codes": list(model.class_codes),
        "smoothing": model.smoothing,
        "class_priors": model.class_priors.tolist(),
        "means": model.means.tolist(),
        "variances": model.variances.tolist(),
    }


def dump_model_json(model: SvmModel | NbModel, path: str | Path) -> None:
    try:
        atomic_write_bytes(path, json.dumps(model_to_json_dict(model), indent=2).encode("utf-8"))
    except OSError as exc:
        raise IoError(f"cannot write model dump {path}: {exc}") from exc
