"""Labeled cell-image corpus: on-disk layout, ingestion, and manifest checks.

Expected layout::

    <root>/
        manifest.json            # optional: {"normal": int, "sickle": int, "other": int}
        original/
            normal/*.{jpg,png}
            sickle/*.{jpg,png}
            other/*.{jpg,png}
        segmented/
            normal/ sickle/ other/   # same scheme

Records are identified by their path relative to the variant directory
(e.g. ``normal/c001.png``) and always returned in lexicographic id order,
so two loads of the same tree are byte-identical.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DecodeError, ManifestMismatch, MissingDirectory

IMAGE_SUFFIXES = {".jpg", ".jpeg", ".png"}


class ClassLabel(IntEnum):
    """The three cell classes with stable integer codes."""

    NORMAL = 0
    SICKLE = 1
    OTHER = 2

    @property
    def dir_name(self) -> str:
        return _CLASS_DIRS[self]


_CLASS_DIRS = {
    ClassLabel.NORMAL: "normal",
    ClassLabel.SICKLE: "sickle",
    ClassLabel.OTHER: "other",
}
_DIR_CLASSES = {v: k for k, v in _CLASS_DIRS.items()}


class ImageVariant(str, Enum):
    """Which corpus variant a record came from."""

    ORIGINAL = "original"
    SEGMENTED = "segmented"


@dataclass(frozen=True)
class LabeledImage:
    """One decoded cell image.

    ``pixels`` is an HxWx3 uint8 array; grayscale sources are promoted to
    three channels by replication at load time.
    """

    id: str
    pixels: np.ndarray
    label: ClassLabel
    variant: ImageVariant

    def __post_init__(self) -> None:
        p = self.pixels
        if p.ndim != 3 or p.shape[2] != 3 or p.shape[0] < 1 or p.shape[1] < 1:
            raise ValueError(f"pixels must be HxWx3 with H,W >= 1, got {p.shape}")
        if p.dtype != np.uint8:
            raise ValueError(f"pixels must be uint8, got {p.dtype}")


@dataclass(frozen=True)
class Dataset:
    """Ordered, immutable collection of labeled images."""

    records: tuple[LabeledImage, ...]
    manifest: dict[str, int] | None = None

    def __post_init__(self) -> None:
        ids = [r.id for r in self.records]
        if ids != sorted(ids):
            raise ValueError("records must be sorted by id")
        if len(set(ids)) != len(ids):
            raise ValueError("record ids must be unique")

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def class_counts(self) -> dict[ClassLabel, int]:
        counts = {label: 0 for label in ClassLabel}
        for rec in self.records:
            counts[rec.label] += 1
        return counts

    def labels(self) -> np.ndarray:
        return np.array([int(r.label) for r in self.records], dtype=np.int64)

    def ids(self) -> list[str]:
        return [r.id for r in self.records]

    def content_hash(self) -> str:
        """Hex digest over ids, labels, and raw pixels; keys feature caches."""
        import hashlib

        h = hashlib.sha256()
        for rec in self.records:
            h.update(rec.id.encode("utf-8"))
            h.update(bytes([int(rec.label)]))
            h.update(np.ascontiguousarray(rec.pixels).tobytes())
        return h.hexdigest()


@dataclass(frozen=True)
class ManifestEntry:
    class_name: str
    expected: int
    found: int

    @property
    def ok(self) -> bool:
        return self.expected == self.found


@dataclass(frozen=True)
class ManifestReport:
    entries: tuple[ManifestEntry, ...] = field(default_factory=tuple)

    @property
    def ok(self) -> bool:
        return all(e.ok for e in self.entries)

    def mismatches(self) -> list[ManifestEntry]:
        return [e for e in self.entries if not e.ok]


def _decode_image(path: Path) -> np.ndarray:
    try:
        with Image.open(path) as img:
            # convert() replicates single-channel sources across RGB and
            # drops alpha; output is always HxWx3 uint8.
            return np.asarray(img.convert("RGB"), dtype=np.uint8)
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        raise DecodeError(f"cannot decode image {path}: {exc}") from exc


def load_image(path: str | Path) -> np.ndarray:
    """Decode a single image file to an HxWx3 uint8 array."""
    p = Path(path)
    if not p.is_file():
        raise MissingDirectory(f"image file not found: {p}")
    return _decode_image(p)


def load_dataset(root_path: str | Path, variant: ImageVariant) -> Dataset:
    """Load every decodable image under ``root/<variant>/<class>/``.

    Raises MissingDirectory if the variant or any class directory is absent,
    DecodeError on the first undecodable file (silent skips would corrupt
    fold statistics), and ManifestMismatch when a manifest.json declares
    counts that differ from what was found.
    """
    root = Path(root_path)
    variant_dir = root / variant.value
    if not variant_dir.is_dir():
        raise MissingDirectory(f"variant directory not found: {variant_dir}")

    records: list[LabeledImage] = []
    for dir_name, label in _DIR_CLASSES.items():
        class_dir = variant_dir / dir_name
        if not class_dir.is_dir():
            raise MissingDirectory(f"class directory not found: {class_dir}")
        for path in class_dir.iterdir():
            if not path.is_file() or path.suffix.lower() not in IMAGE_SUFFIXES:
                continue
            rec_id = f"{dir_name}/{path.name}"
            records.append(
                LabeledImage(id=rec_id, pixels=_decode_image(path), label=label, variant=variant)
            )

    records.sort(key=lambda r: r.id)

    manifest = _read_manifest(root)
    ds = Dataset(records=tuple(records), manifest=manifest)
    if manifest is not None:
        report = validate_manifest(ds, manifest)
        if not report.ok:
            details = ", ".join(
                f"{e.class_name}: expected {e.expected}, found {e.found}" for e in report.mismatches()
            )
            raise ManifestMismatch(f"manifest mismatch under {root}: {details}")
    return ds


def _read_manifest(root: Path) -> dict[str, int] | None:
    path = root / "manifest.json"
    if not path.is_file():
        return None
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestMismatch(f"unreadable manifest {path}: {exc}") from exc
    counts = {}
    for name in _DIR_CLASSES:
        if name not in raw:
            raise ManifestMismatch(f"manifest {path} missing key {name!r}")
        counts[name] = int(raw[name])
    return counts


def validate_manifest(ds: Dataset, expected: dict[str, int]) -> ManifestReport:
    """Compare per-class counts against declared ones. Report-only, never raises."""
    found = {label.dir_name: n for label, n in ds.class_counts().items()}
    entries = tuple(
        ManifestEntry(class_name=name, expected=int(expected.get(name, 0)), found=found.get(name, 0))
        for name in _DIR_CLASSES
    )
    return ManifestReport(entries=entries)


def datasets_equal(a: Dataset, b: Dataset) -> bool:
    """Byte-identical comparison: ids, labels, variants, and pixels."""
    if len(a) != len(b):
        return False
    for ra, rb in zip(a.records, b.records):
        if ra.id != rb.id or ra.label != rb.label or ra.variant != rb.variant:
            return False
        if ra.pixels.shape != rb.pixels.shape or not np.array_equal(ra.pixels, rb.pixels):
            return False
    return True
