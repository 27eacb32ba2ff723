"""Truncate CNN classifiers at their feature layer and export them.

The exported artifact is a TorchScript module saved as ``<name>.model``
next to a ``<name>.json`` sidecar.  The sidecar records everything a
consumer needs to run the model without this package: the flattened
feature dimension actually produced by the chosen truncation, the input
size and layout, and the normalization constants to apply after scaling
pixels to [0, 1].
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torchvision.models as tv_models

from .errors import ExportFailure, UnknownBackbone, VerificationFailure

# short pipeline names and full architecture ids are both accepted
_CANONICAL = {
    "densenet": "densenet169",
    "densenet169": "densenet169",
    "resnet": "resnet50",
    "resnet50": "resnet50",
    "mobilenet": "mobilenet_v2",
    "mobilenet_v2": "mobilenet_v2",
}
_PIPELINE_NAME = {"densenet169": "densenet", "resnet50": "resnet", "mobilenet_v2": "mobilenet"}
_CLASSIFIER_LAYER = {"densenet169": "classifier", "resnet50": "fc", "mobilenet_v2": "classifier"}

# normalization constants the source framework trains with, in [0, 1] units
_SOURCE_MEAN = (0.485, 0.456, 0.406)
_SOURCE_SCALE = (0.229, 0.224, 0.225)

INPUT_SIZE = (224, 224)
FORMAT_VERSION = "torchscript-1"
VERIFY_TOLERANCE = 1e-4


@dataclass(frozen=True)
class ExportSpec:
    """One export request: which network, where to, and how initialized."""

    backbone: str
    out_dir: str | Path
    truncation: str | None = None  # named layer to drop; per-arch default when None
    weights: str = "pretrained"  # "pretrained" or "random"
    seed: int = 0  # weight init seed when weights == "random"
    format_version: str = FORMAT_VERSION

    @property
    def arch(self) -> str:
        if self.backbone not in _CANONICAL:
            raise UnknownBackbone(
                f"unknown backbone {self.backbone!r}; known: {sorted(set(_CANONICAL))}"
            )
        return _CANONICAL[self.backbone]

    @property
    def pipeline_name(self) -> str:
        return _PIPELINE_NAME[self.arch]

    @property
    def dropped_layer(self) -> str:
        return self.truncation if self.truncation else _CLASSIFIER_LAYER[self.arch]


@dataclass(frozen=True)
class ExportResult:
    model_path: Path
    sidecar_path: Path
    feature_dim: int
    reference: torch.nn.Module = field(repr=False, compare=False)


@dataclass(frozen=True)
class VerificationReport:
    passed: bool
    feature_dim: int | None
    max_abs_dev: float | None
    reason: str = ""


class _FeatureHead(torch.nn.Module):
    """Backbone trunk plus the pool/flatten the classifier used to sit on."""

    def __init__(self, body: torch.nn.Module, relu_after: bool):
        super().__init__()
        self.body = body
        self.relu_after = relu_after

    def forward(self, x):
        x = self.body(x)
        if self.relu_after:
            x = torch.nn.functional.relu(x)
        if x.dim() == 4:
            x = torch.nn.functional.adaptive_avg_pool2d(x, (1, 1))
        return torch.flatten(x, 1)


def _build_network(spec: ExportSpec) -> torch.nn.Module:
    ctor = getattr(tv_models, spec.arch)
    if spec.weights == "random":
        torch.manual_seed(spec.seed)
        return ctor(weights=None)
    if spec.weights == "pretrained":
        try:
            return ctor(weights="DEFAULT")
        except Exception as exc:  # weight download/cache failure
            raise ExportFailure(f"cannot obtain pretrained weights for {spec.arch}: {exc}") from exc
    raise ExportFailure(f"weights must be 'pretrained' or 'random', got {spec.weights!r}")


def build_reference(spec: ExportSpec) -> torch.nn.Module:
    """The truncated eager-mode network an export is checked against."""
    net = _build_network(spec)
    if not hasattr(net, spec.dropped_layer):
        raise ExportFailure(f"{spec.arch} has no layer named {spec.dropped_layer!r} to drop")
    if spec.arch == "resnet50":
        body = torch.nn.Sequential(
            net.conv1, net.bn1, net.relu, net.maxpool,
            net.layer1, net.layer2, net.layer3, net.layer4,
        )
        head = _FeatureHead(body, relu_after=False)
    elif spec.arch == "densenet169":
        head = _FeatureHead(net.features, relu_after=True)
    else:  # mobilenet_v2
        head = _FeatureHead(net.features, relu_after=False)
    return head.eval()


def export_backbone(spec: ExportSpec) -> ExportResult:
    """Write ``<name>.model`` and ``<name>.json`` into ``spec.out_dir``."""
    reference = build_reference(spec)
    example = torch.zeros(1, 3, INPUT_SIZE[0], INPUT_SIZE[1])
    try:
        with torch.no_grad():
            scripted = torch.jit.trace(reference, example)
            out = scripted(example)
    except Exception as exc:
        raise ExportFailure(f"tracing {spec.arch} failed: {exc}") from exc
    if out.dim() != 2 or out.shape[0] != 1:
        raise ExportFailure(f"{spec.arch} export must yield one flat row, got shape {tuple(out.shape)}")
    feature_dim = int(out.shape[1])

    out_dir = Path(spec.out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        model_path = out_dir / f"{spec.pipeline_name}.model"
        sidecar = out_dir / f"{spec.pipeline_name}.json"
        scripted.save(str(model_path))
        meta = {
            "name": spec.pipeline_name,
            "arch": spec.arch,
            "feature_dim": feature_dim,
            "input_size": list(INPUT_SIZE),
            "layout": "nchw",
            "mean": list(_SOURCE_MEAN),
            "scale": list(_SOURCE_SCALE),
            "dropped_layer": spec.dropped_layer,
            "format_version": spec.format_version,
        }
        sidecar.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        raise ExportFailure(f"cannot write export to {out_dir}: {exc}") from exc
    return ExportResult(
        model_path=model_path, sidecar_path=sidecar, feature_dim=feature_dim, reference=reference
    )


def default_probe() -> np.ndarray:
    """Fixed mid-gray RGB probe image at the export input size."""
    return np.full((INPUT_SIZE[0], INPUT_SIZE[1], 3), 128, dtype=np.uint8)


def _preprocess(pixels: np.ndarray, meta: dict) -> torch.Tensor:
    arr = np.asarray(pixels, dtype=np.float64) / 255.0
    arr = (arr - np.asarray(meta["mean"])) / np.asarray(meta["scale"])
    if meta["layout"] == "nchw":
        arr = arr.transpose(2, 0, 1)
    return torch.from_numpy(arr.astype(np.float32)).unsqueeze(0)


def verify_export(
    model_path: str | Path,
    sidecar_path: str | Path,
    reference: torch.nn.Module,
    probe: np.ndarray | None = None,
) -> VerificationReport:
    """Check an exported model file against the network it came from.

    Passing means the file loads, its output length matches the sidecar,
    and both inference paths agree within VERIFY_TOLERANCE max-abs on the
    probe image.
    """
    try:
        meta = json.loads(Path(sidecar_path).read_text(encoding="utf-8"))
        for key in ("name", "feature_dim", "input_size", "layout", "mean", "scale"):
            if key not in meta:
                return VerificationReport(False, None, None, f"sidecar missing key {key!r}")
    except (OSError, json.JSONDecodeError) as exc:
        return VerificationReport(False, None, None, f"sidecar unreadable: {exc}")
    try:
        module = torch.jit.load(str(model_path), map_location="cpu")
    except Exception as exc:
        return VerificationReport(False, None, None, f"load error: {exc}")

    if probe is None:
        probe = default_probe()
    expected_hw = (int(meta["input_size"][0]), int(meta["input_size"][1]))
    if probe.shape[:2] != expected_hw:
        return VerificationReport(
            False, None, None, f"probe shape {probe.shape[:2]} != input size {expected_hw}"
        )
    t = _preprocess(probe, meta)
    with torch.no_grad():
        exported = module(t).numpy()
        wanted = reference(t).numpy()
    if exported.ndim != 2:
        return VerificationReport(False, None, None, f"output is not flat: shape {exported.shape}")
    dim = int(exported.shape[1])
    if dim != int(meta["feature_dim"]):
        return VerificationReport(
            False, dim, None, f"DimMismatch: model yields {dim}, sidecar records {meta['feature_dim']}"
        )
    if wanted.shape != exported.shape:
        return VerificationReport(
            False, dim, None, f"reference shape {wanted.shape} != exported shape {exported.shape}"
        )
    dev = float(np.abs(exported - wanted).max())
    if dev > VERIFY_TOLERANCE:
        return VerificationReport(
            False, dim, dev, f"outputs disagree: max-abs deviation {dev:.3e} > {VERIFY_TOLERANCE}"
        )
    return VerificationReport(True, dim, dev)


def ensure_verified(report: VerificationReport) -> None:
    if not report.passed:
        raise VerificationFailure(report.reason)
