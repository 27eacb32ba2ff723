"""Image featurization: backbone registry, resizing, extraction, and caching.

Two featurizer routes exist.  CNN backbones are consumed as opaque model
files in the TorchScript interchange format, each accompanied by a JSON
sidecar that owns the backbone-specific truth (output dim, input size,
tensor layout, preprocessing constants).  The builtin extractor needs no
model file and is fully deterministic: 64-bin grayscale histogram + 8x8
bilinear thumbnail + 7 Hu moments, 135 values total.

Feature caches come in two formats: a binary container (magic ``EFM1``,
little-endian float32 payload) for speed and a CSV (header
``image_id,label,f0..f{d-1}``) for inspection.
"""

from __future__ import annotations

import csv
import io
import json
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .dataset import Dataset
from .errors import (
    DimMismatch,
    FormatError,
    InferenceError,
    IoError,
    ModelLoadError,
)
from .ioutil import atomic_write_bytes

BUILTIN_DIM = 64 + 64 + 7

# Channel statistics applied after scaling pixel values to [0, 1]; sidecars
# override these per model file.
DEFAULT_CHANNEL_MEAN = (0.485, 0.456, 0.406)
DEFAULT_CHANNEL_SCALE = (0.229, 0.224, 0.225)

_CACHE_MAGIC = b"EFM1"
_CACHE_VERSION = 1


@dataclass(frozen=True)
class BackboneSpec:
    """Featurizer identity plus everything needed to run it."""

    name: str
    feature_dim: int
    input_size: tuple[int, int] | None = None
    mean: tuple[float, float, float] | None = None
    scale: tuple[float, float, float] | None = None
    layout: str = "nchw"
    model_path: Path | None = None

    def __post_init__(self) -> None:
        if self.feature_dim < 1:
            raise ValueError("feature_dim must be positive")
        if self.layout not in ("nchw", "nhwc"):
            raise ValueError(f"unknown tensor layout {self.layout!r}")


# Declared output dims for the evaluated architectures.  These are registry
# metadata used to validate model files, not values this code derives; a
# sidecar shipped with a model file always wins.
BACKBONE_REGISTRY: dict[str, BackboneSpec] = {
    "densenet169": BackboneSpec(
        name="densenet169",
        feature_dim=232_736,
        input_size=(224, 224),
        mean=DEFAULT_CHANNEL_MEAN,
        scale=DEFAULT_CHANNEL_SCALE,
    ),
    "resnet50": BackboneSpec(
        name="resnet50",
        feature_dim=90_947,
        input_size=(224, 224),
        mean=DEFAULT_CHANNEL_MEAN,
        scale=DEFAULT_CHANNEL_SCALE,
    ),
    "mobilenet": BackboneSpec(
        name="mobilenet",
        feature_dim=33_792,
        input_size=(224, 224),
        mean=DEFAULT_CHANNEL_MEAN,
        scale=DEFAULT_CHANNEL_SCALE,
    ),
    "builtin": BackboneSpec(name="builtin", feature_dim=BUILTIN_DIM),
}


def sidecar_path(model_path: str | Path) -> Path:
    return Path(model_path).with_suffix(".json")


def load_sidecar(path: str | Path) -> dict:
    p = Path(path)
    try:
        meta = json.loads(p.read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoError(f"cannot read sidecar {p}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"malformed sidecar {p}: {exc}") from exc
    for key in ("name", "feature_dim", "input_size", "layout", "mean", "scale"):
        if key not in meta:
            raise FormatError(f"sidecar {p} missing key {key!r}")
    return meta


def resolve_backbone(name: str, model_path: str | Path | None = None) -> BackboneSpec:
    """Registry defaults, overridden by the model sidecar when one exists."""
    if name not in BACKBONE_REGISTRY:
        raise ModelLoadError(f"unknown backbone {name!r}; known: {sorted(BACKBONE_REGISTRY)}")
    spec = BACKBONE_REGISTRY[name]
    if name == "builtin":
        return spec
    if model_path is None:
        return spec
    mp = Path(model_path)
    spec = replace(spec, model_path=mp)
    sc = sidecar_path(mp)
    if sc.is_file():
        meta = load_sidecar(sc)
        spec = replace(
            spec,
            feature_dim=int(meta["feature_dim"]),
            input_size=(int(meta["input_size"][0]), int(meta["input_size"][1])),
            layout=str(meta["layout"]),
            mean=tuple(float(v) for v in meta["mean"]),
            scale=tuple(float(v) for v in meta["scale"]),
        )
    return spec


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    backbone: str
    image_id: str

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])


class FeatureMatrix:
    """Row-per-image feature block with labels and provenance.

    Row order always matches the source Dataset order.  Values are float64
    in memory; the binary cache stores float32.
    """

    def __init__(self, values: np.ndarray, labels: np.ndarray, image_ids: list[str], backbone: str):
        values = np.asarray(values, dtype=np.float64)
        labels = np.asarray(labels, dtype=np.int64)
        if values.ndim != 2:
            raise ValueError(f"values must be 2-D, got shape {values.shape}")
        if values.shape[0] != labels.shape[0] or values.shape[0] != len(image_ids):
            raise DimMismatch(
                f"rows/labels/ids disagree: {values.shape[0]}/{labels.shape[0]}/{len(image_ids)}"
            )
        if values.size and not np.isfinite(values).all():
            raise InferenceError(f"non-finite feature values for backbone {backbone!r}")
        self.values = values
        self.labels = labels
        self.image_ids = list(image_ids)
        self.backbone = backbone

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return int(self.values.shape[1])

    def __len__(self) -> int:
        return self.n_rows

    def row(self, i: int) -> FeatureVector:
        return FeatureVector(values=self.values[i], backbone=self.backbone, image_id=self.image_ids[i])


# -- resizing ----------------------------------------------------------------

def resize_bilinear(pixels: np.ndarray, target: tuple[int, int]) -> np.ndarray:
    """Bilinear resample to ``target`` (h, w) using half-pixel sample centers.

    Accepts HxW or HxWxC input of any numeric dtype; returns float64 with the
    same channel layout.  Same-size calls reproduce the input exactly.
    """
    th, tw = int(target[0]), int(target[1])
    if th < 1 or tw < 1:
        raise ValueError(f"target dims must be >= 1, got {target}")
    arr = np.asarray(pixels, dtype=np.float64)
    squeeze = arr.ndim == 2
    if squeeze:
        arr = arr[:, :, None]
    h, w, _ = arr.shape

    ys = np.clip((np.arange(th, dtype=np.float64) + 0.5) * (h / th) - 0.5, 0.0, h - 1.0)
    xs = np.clip((np.arange(tw, dtype=np.float64) + 0.5) * (w / tw) - 0.5, 0.0, w - 1.0)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None, None]
    fx = (xs - x0)[None, :, None]

    top = arr[y0][:, x0] * (1.0 - fx) + arr[y0][:, x1] * fx
    bot = arr[y1][:, x0] * (1.0 - fx) + arr[y1][:, x1] * fx
    out = top * (1.0 - fy) + bot * fy
    return out[:, :, 0] if squeeze else out


# -- builtin extractor ---------------------------------------------------------

def hu_moments(gray: np.ndarray) -> np.ndarray:
    """Hu's seven invariant moments of an intensity surface.

    The image is treated as a mass density; zero-mass images map to zeros so
    downstream finite-value checks hold.
    """
    g = np.asarray(gray, dtype=np.float64)
    m00 = g.sum()
    if m00 <= 0.0:
        return np.zeros(7, dtype=np.float64)
    h, w = g.shape
    xs = np.arange(w, dtype=np.float64)
    ys = np.arange(h, dtype=np.float64)
    xbar = (g @ xs).sum() / m00
    ybar = (ys @ g).sum() / m00
    dx = xs - xbar
    dy = ys - ybar

    def mu(p: int, q: int) -> float:
        return float((dy**q) @ g @ (dx**p))

    def eta(p: int, q: int) -> float:
        return mu(p, q) / m00 ** (1.0 + (p + q) / 2.0)

    n20, n02, n11 = eta(2, 0), eta(0, 2), eta(1, 1)
    n30, n03, n21, n12 = eta(3, 0), eta(0, 3), eta(2, 1), eta(1, 2)
    a = n30 + n12
    b = n21 + n03
    h1 = n20 + n02
    h2 = (n20 - n02) ** 2 + 4.0 * n11**2
    h3 = (n30 - 3.0 * n12) ** 2 + (3.0 * n21 - n03) ** 2
    h4 = a**2 + b**2
    h5 = (n30 - 3.0 * n12) * a * (a**2 - 3.0 * b**2) + (3.0 * n21 - n03) * b * (3.0 * a**2 - b**2)
    h6 = (n20 - n02) * (a**2 - b**2) + 4.0 * n11 * a * b
    h7 = (3.0 * n21 - n03) * a * (a**2 - 3.0 * b**2) - (n30 - 3.0 * n12) * b * (3.0 * a**2 - b**2)
    return np.array([h1, h2, h3, h4, h5, h6, h7], dtype=np.float64)


def builtin_vector(pixels: np.ndarray) -> np.ndarray:
    """135-dim builtin descriptor: histogram(64) + thumbnail(64) + moments(7)."""
    gray = np.asarray(pixels, dtype=np.float64).mean(axis=2)

    bins = np.minimum((gray // 4.0).astype(np.intp).ravel(), 63)
    hist = np.bincount(bins, minlength=64).astype(np.float64) / gray.size

    thumb = resize_bilinear(gray, (8, 8)).ravel() / 255.0

    return np.concatenate([hist, thumb, hu_moments(gray)])


def extract_builtin(imgs: Dataset) -> FeatureMatrix:
    """Deterministic featurizer requiring no model file."""
    if len(imgs) == 0:
        values = np.zeros((0, BUILTIN_DIM), dtype=np.float64)
        return FeatureMatrix(values, np.zeros(0, dtype=np.int64), [], "builtin")
    rows = [builtin_vector(rec.pixels) for rec in imgs]
    return FeatureMatrix(np.stack(rows), imgs.labels(), imgs.ids(), "builtin")


# -- CNN adapter ---------------------------------------------------------------

def _load_torchscript(spec: BackboneSpec):
    if spec.model_path is None:
        raise ModelLoadError(f"backbone {spec.name!r} needs a model file but none was given")
    path = Path(spec.model_path)
    if not path.is_file():
        raise ModelLoadError(f"model file not found: {path}")
    try:
        import torch
    except ImportError as exc:
        raise ModelLoadError("inference engine unavailable: torch is not installed") from exc
    try:
        module = torch.jit.load(str(path), map_location="cpu")
    except Exception as exc:  # torch raises RuntimeError subclasses and more
        raise ModelLoadError(f"cannot load model {path}: {exc}") from exc
    module.eval()
    return torch, module


def _preprocess(pixels: np.ndarray, spec: BackboneSpec) -> np.ndarray:
    arr = resize_bilinear(pixels, spec.input_size) / 255.0
    mean = np.asarray(spec.mean, dtype=np.float64)
    scale = np.asarray(spec.scale, dtype=np.float64)
    arr = (arr - mean) / scale
    if spec.layout == "nchw":
        arr = arr.transpose(2, 0, 1)
    return arr.astype(np.float32)


def extract_vectors(pixels_list, spec: BackboneSpec, batch_size: int = 16) -> np.ndarray:
    """Feature rows for raw HxWx3 images, one row per image.

    The builtin backbone needs no model file; TorchScript backbones resize
    to ``spec.input_size``, scale to [0, 1], normalize per channel, and run
    batched inference.  The flattened output length must equal
    ``spec.feature_dim`` or extraction fails hard: that skew means the
    registry/sidecar and the model file disagree.
    """
    if spec.name == "builtin":
        if not pixels_list:
            return np.zeros((0, BUILTIN_DIM), dtype=np.float64)
        return np.stack([builtin_vector(p) for p in pixels_list])

    if not pixels_list:
        return np.zeros((0, spec.feature_dim), dtype=np.float64)
    torch, module = _load_torchscript(spec)

    blocks: list[np.ndarray] = []
    with torch.no_grad():
        for start in range(0, len(pixels_list), batch_size):
            chunk = pixels_list[start : start + batch_size]
            batch = np.stack([_preprocess(p, spec) for p in chunk])
            try:
                out = module(torch.from_numpy(batch))
            except Exception as exc:
                raise InferenceError(f"backbone {spec.name!r} inference failed: {exc}") from exc
            flat = out.detach().cpu().numpy().reshape(len(chunk), -1)
            if flat.shape[1] != spec.feature_dim:
                raise DimMismatch(
                    f"model output dim {flat.shape[1]} != declared feature_dim "
                    f"{spec.feature_dim} for backbone {spec.name!r}"
                )
            if not np.isfinite(flat).all():
                raise InferenceError(f"backbone {spec.name!r} produced non-finite values")
            blocks.append(flat.astype(np.float64))

    return np.concatenate(blocks, axis=0)


def extract_cnn(imgs: Dataset, spec: BackboneSpec, batch_size: int = 16) -> FeatureMatrix:
    """Run a TorchScript backbone over the dataset, one row per record."""
    values = extract_vectors([rec.pixels for rec in imgs], spec, batch_size=batch_size)
    return FeatureMatrix(values, imgs.labels(), imgs.ids(), spec.name)


# -- cache files ---------------------------------------------------------------

def save_features(m: FeatureMatrix, path: str | Path) -> None:
    """Write a feature cache; ``.csv`` suffix selects the text format."""
    p = Path(path)
    try:
        if p.suffix.lower() == ".csv":
            atomic_write_bytes(p, _to_csv_bytes(m))
        else:
            atomic_write_bytes(p, _to_binary_bytes(m))
    except OSError as exc:
        raise IoError(f"cannot write feature cache {p}: {exc}") from exc


def load_features(path: str | Path) -> FeatureMatrix:
    """Read a cache written by save_features; format sniffed from content."""
    p = Path(path)
    try:
        blob = p.read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read feature cache {p}: {exc}") from exc
    if blob[:4] == _CACHE_MAGIC:
        return _from_binary_bytes(blob, p)
    return _from_csv_bytes(blob, p)


def _to_binary_bytes(m: FeatureMatrix) -> bytes:
    buf = io.BytesIO()
    buf.write(_CACHE_MAGIC)
    buf.write(struct.pack("<HII", _CACHE_VERSION, m.n_rows, m.dim))
    name = m.backbone.encode("utf-8")
    buf.write(struct.pack("<H", len(name)))
    buf.write(name)
    for rid, label in zip(m.image_ids, m.labels):
        rid_b = rid.encode("utf-8")
        buf.write(struct.pack("<H", len(rid_b)))
        buf.write(rid_b)
        buf.write(struct.pack("<i", int(label)))
    buf.write(np.ascontiguousarray(m.values, dtype="<f4").tobytes())
    return buf.getvalue()


def binary_header_size(m: FeatureMatrix) -> int:
    """Byte length of everything before the float32 payload."""
    n = 4 + 2 + 4 + 4 + 2 + len(m.backbone.encode("utf-8"))
    for rid in m.image_ids:
        n += 2 + len(rid.encode("utf-8")) + 4
    return n


def _from_binary_bytes(blob: bytes, path: Path) -> FeatureMatrix:
    try:
        off = 4
        version, n_rows, dim = struct.unpack_from("<HII", blob, off)
        off += 10
        if version != _CACHE_VERSION:
            raise FormatError(f"unsupported feature cache version {version} in {path}")
        (name_len,) = struct.unpack_from("<H", blob, off)
        off += 2
        backbone = blob[off : off + name_len].decode("utf-8")
        off += name_len
        ids: list[str] = []
        labels = np.empty(n_rows, dtype=np.int64)
        for i in range(n_rows):
            (id_len,) = struct.unpack_from("<H", blob, off)
            off += 2
            ids.append(blob[off : off + id_len].decode("utf-8"))
            off += id_len
            (labels[i],) = struct.unpack_from("<i", blob, off)
            off += 4
        payload = blob[off:]
        expected = n_rows * dim * 4
        if len(payload) != expected:
            raise FormatError(
                f"truncated feature cache {path}: payload {len(payload)} bytes, expected {expected}"
            )
        values = np.frombuffer(payload, dtype="<f4").reshape(n_rows, dim)
    except FormatError:
        raise
    except (struct.error, UnicodeDecodeError, ValueError) as exc:
        raise FormatError(f"malformed feature cache {path}: {exc}") from exc
    return FeatureMatrix(values, labels, ids, backbone)


def _to_csv_bytes(m: FeatureMatrix) -> bytes:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["image_id", "label"] + [f"f{j}" for j in range(m.dim)])
    for rid, label, row in zip(m.image_ids, m.labels, m.values):
        writer.writerow([rid, int(label)] + [f"{v:.9g}" for v in row])
    # backbone travels in a trailing comment so the text format stays one file
    out.write(f"# backbone={m.backbone}\n")
    return out.getvalue().encode("utf-8")


def _from_csv_bytes(blob: bytes, path: Path) -> FeatureMatrix:
    try:
        text = blob.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(f"feature cache {path} is neither EFM1 nor UTF-8 CSV") from exc
    lines = text.splitlines()
    if not lines or not lines[0].startswith("image_id,label"):
        raise FormatError(f"bad CSV header in feature cache {path}")
    header = lines[0].split(",")
    dim = len(header) - 2
    backbone = "unknown"
    ids: list[str] = []
    labels: list[int] = []
    rows: list[np.ndarray] = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        if line.startswith("#"):
            if "backbone=" in line:
                backbone = line.split("backbone=", 1)[1].strip()
            continue
        parts = line.split(",")
        if len(parts) != dim + 2:
            raise DimMismatch(
                f"{path}:{lineno}: row has {len(parts) - 2} features, header declares {dim}"
            )
        try:
            ids.append(parts[0])
            labels.append(int(parts[1]))
            rows.append(np.array([float(v) for v in parts[2:]], dtype=np.float64))
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: unparseable value: {exc}") from exc
    values = np.stack(rows) if rows else np.zeros((0, dim))
    return FeatureMatrix(values, np.array(labels, dtype=np.int64), ids, backbone)
