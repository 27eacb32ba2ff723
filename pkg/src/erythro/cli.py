"""Command-line front end: extract features, evaluate grids, train, predict.

Configuration precedence is CLI flags over a ``--config`` JSON file over
built-in defaults.  Exit codes: 0 ok, 2 dataset problems, 3 backbone-model
problems, 4 evaluation failures, 5 model-file I/O, 64 usage.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .classifiers import (
    NbModel,
    Scaler,
    SvmModel,
    apply_scaler,
    fit_scaler,
    load_model,
    save_model,
    train_nb,
    train_svm,
)
from .dataset import Dataset, ImageVariant, load_dataset, load_image
from .errors import (
    BadK,
    DecodeError,
    DimMismatch,
    EmptyGrid,
    EmptyInput,
    EmptyMatrix,
    ErythroError,
    FormatError,
    InferenceError,
    IoError,
    ManifestMismatch,
    MissingDirectory,
    ModelLoadError,
    NonFiniteFeature,
    SingleClassInput,
    VersionMismatch,
)
from .evaluation import benchmark, cross_validate
from .features import (
    BACKBONE_REGISTRY,
    FeatureMatrix,
    extract_builtin,
    extract_cnn,
    extract_vectors,
    load_features,
    resolve_backbone,
    save_features,
)
from .report import (
    ExperimentGrid,
    render_table,
    write_benchmark_json,
    write_csv,
    write_json,
    write_markdown,
)

EXIT_OK = 0
EXIT_DATASET = 2
EXIT_MODEL = 3
EXIT_EVAL = 4
EXIT_MODEL_IO = 5
EXIT_USAGE = 64

MODEL_DIR_ENV = "ERYTHRO_MODEL_DIR"

_DATASET_ERRORS = (MissingDirectory, DecodeError, ManifestMismatch)
_BACKBONE_ERRORS = (ModelLoadError, InferenceError)
_MODEL_IO_ERRORS = (IoError, FormatError, VersionMismatch)
_EVAL_ERRORS = (BadK, EmptyMatrix, EmptyInput, SingleClassInput, NonFiniteFeature, EmptyGrid)


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    dataset: str | None = None
    variant: str = "both"
    backbones: tuple[str, ...] = ("builtin",)
    classifiers: tuple[str, ...] = ("svm", "nb")
    k: int = 5
    seed: int = 42
    c_penalty: float = 2.9
    standardize: bool = True
    cache_dir: str = "erythro-cache"
    out: str = "erythro-out"
    force: bool = False
    repetitions: int = 1
    model_dir: str | None = None

    def variants(self) -> list[str]:
        if self.variant == "both":
            return [ImageVariant.ORIGINAL.value, ImageVariant.SEGMENTED.value]
        return [self.variant]


_VARIANT_CHOICES = ("original", "segmented", "both")
_CLASSIFIER_CHOICES = ("svm", "nb")


def _validate(cfg: RunConfig) -> RunConfig:
    if cfg.variant not in _VARIANT_CHOICES:
        raise UsageError(f"variant must be one of {_VARIANT_CHOICES}, got {cfg.variant!r}")
    for b in cfg.backbones:
        if b not in BACKBONE_REGISTRY:
            raise UsageError(f"unknown backbone {b!r}; known: {sorted(BACKBONE_REGISTRY)}")
    for c in cfg.classifiers:
        if c not in _CLASSIFIER_CHOICES:
            raise UsageError(f"unknown classifier {c!r}; known: {list(_CLASSIFIER_CHOICES)}")
    if not cfg.backbones:
        raise UsageError("at least one backbone required")
    if not cfg.classifiers:
        raise UsageError("at least one classifier required")
    if cfg.k < 2:
        raise UsageError(f"k must be >= 2, got {cfg.k}")
    if cfg.c_penalty <= 0:
        raise UsageError(f"c must be positive, got {cfg.c_penalty}")
    if cfg.repetitions < 1:
        raise UsageError(f"repetitions must be >= 1, got {cfg.repetitions}")
    return cfg


def _load_config_file(path: str) -> dict:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise UsageError(f"config file {path} must hold a JSON object")
    known = {f.name for f in fields(RunConfig)} - {"model_dir"}
    unknown = set(doc) - known
    if unknown:
        raise UsageError(f"config file {path} has unknown keys: {sorted(unknown)}")
    return doc


def merge_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, then the --config file, then explicit CLI flags."""
    merged: dict = {}
    if getattr(args, "config", None):
        merged.update(_load_config_file(args.config))

    overrides = {
        "dataset": args.dataset,
        "variant": args.variant,
        "backbones": tuple(args.backbone) if args.backbone else None,
        "classifiers": tuple(args.classifier) if args.classifier else None,
        "k": args.k,
        "seed": args.seed,
        "c_penalty": args.c,
        "standardize": False if args.no_standardize else None,
        "cache_dir": args.cache_dir,
        "out": args.out,
        "force": True if args.force else None,
        "repetitions": args.repetitions,
    }
    merged.update({k: v for k, v in overrides.items() if v is not None})

    if "backbones" in merged:
        merged["backbones"] = tuple(merged["backbones"])
    if "classifiers" in merged:
        merged["classifiers"] = tuple(merged["classifiers"])
    merged["model_dir"] = os.environ.get(MODEL_DIR_ENV)
    try:
        cfg = RunConfig(**merged)
    except TypeError as exc:
        raise UsageError(str(exc)) from exc
    return _validate(cfg)


# -- shared plumbing -----------------------------------------------------------

def _require_dataset(cfg: RunConfig) -> str:
    if not cfg.dataset:
        raise UsageError("--dataset is required for this command")
    return cfg.dataset


def _model_path_for(cfg: RunConfig, backbone_name: str) -> Path:
    base = cfg.model_dir
    if not base:
        raise ModelLoadError(
            f"backbone {backbone_name!r} needs a model file "
            f"{backbone_name}.model; set {MODEL_DIR_ENV} to its directory"
        )
    return Path(base) / f"{backbone_name}.model"


def _extract_matrix(cfg: RunConfig, ds: Dataset, backbone_name: str) -> FeatureMatrix:
    if backbone_name == "builtin":
        return extract_builtin(ds)
    spec = resolve_backbone(backbone_name, _model_path_for(cfg, backbone_name))
    return extract_cnn(ds, spec)


def _cache_path(cfg: RunConfig, backbone_name: str, variant_name: str, ds: Dataset) -> Path:
    stamp = ds.content_hash()[:16]
    return Path(cfg.cache_dir) / f"{backbone_name}-{variant_name}-{stamp}.features"


def _features_for(
    cfg: RunConfig, ds: Dataset, backbone_name: str, variant_name: str
) -> tuple[FeatureMatrix, Path, bool]:
    """Load the feature cache for this combo, extracting on miss or --force."""
    path = _cache_path(cfg, backbone_name, variant_name, ds)
    if path.is_file() and not cfg.force:
        m = load_features(path)
        if m.backbone == backbone_name and m.n_rows == len(ds):
            return m, path, True
    m = _extract_matrix(cfg, ds, backbone_name)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_features(m, path)
    return m, path, False


def _out_dir(cfg: RunConfig) -> Path:
    d = Path(cfg.out)
    d.mkdir(parents=True, exist_ok=True)
    return d


# -- commands ---------------------------------------------------------------------

def cmd_extract(cfg: RunConfig, args: argparse.Namespace) -> int:
    root = _require_dataset(cfg)
    for variant_name in cfg.variants():
        ds = load_dataset(root, ImageVariant(variant_name))
        for backbone_name in cfg.backbones:
            m, path, hit = _features_for(cfg, ds, backbone_name, variant_name)
            verb = "cache hit" if hit else "extracted"
            print(f"{verb}: {path} ({m.n_rows}x{m.dim}, backbone={backbone_name}, variant={variant_name})")
    return EXIT_OK


def cmd_evaluate(cfg: RunConfig, args: argparse.Namespace) -> int:
    root = _require_dataset(cfg)
    out = _out_dir(cfg)
    reports = []
    failures: list[dict] = []

    for variant_name in cfg.variants():
        ds = load_dataset(root, ImageVariant(variant_name))
        for backbone_name in cfg.backbones:
            try:
                m, _, _ = _features_for(cfg, ds, backbone_name, variant_name)
            except ErythroError as exc:
                for classifier_kind in cfg.classifiers:
                    failures.append(
                        {
                            "backbone": backbone_name,
                            "classifier": classifier_kind,
                            "variant": variant_name,
                            "error": str(exc),
                        }
                    )
                continue
            for classifier_kind in cfg.classifiers:
                try:
                    reports.append(
                        cross_validate(
                            m,
                            classifier_kind=classifier_kind,
                            k=cfg.k,
                            seed=cfg.seed,
                            c_penalty=cfg.c_penalty,
                            standardize=cfg.standardize,
                            backbone=backbone_name,
                            variant=variant_name,
                        )
                    )
                except ErythroError as exc:
                    failures.append(
                        {
                            "backbone": backbone_name,
                            "classifier": classifier_kind,
                            "variant": variant_name,
                            "error": str(exc),
                        }
                    )

    grid = ExperimentGrid(cells=tuple(reports))
    write_json(grid, out / "report.json", failures=failures or None)
    write_csv(grid, out / "report.csv")
    for variant_name in cfg.variants():
        if grid.for_variant(variant_name):
            write_markdown(grid, variant_name, out / f"report-{variant_name}.md")
            print(f"== {variant_name} ==")
            print(render_table(grid, variant_name))
    for f in failures:
        print(
            f"failed cell {f['backbone']}/{f['classifier']}/{f['variant']}: {f['error']}",
            file=sys.stderr,
        )
    print(f"wrote {out / 'report.json'}")
    return EXIT_EVAL if failures else EXIT_OK


def _train_full(cfg: RunConfig, m: FeatureMatrix, classifier_kind: str):
    if classifier_kind == "svm":
        scaler = fit_scaler(m.values) if cfg.standardize else Scaler.identity(m.dim)
        return train_svm(
            apply_scaler(scaler, m.values),
            m.labels,
            c_penalty=cfg.c_penalty,
            seed=cfg.seed,
            scaler=scaler,
        )
    return train_nb(m.values, m.labels)


def cmd_train(cfg: RunConfig, args: argparse.Namespace) -> int:
    root = _require_dataset(cfg)
    variant_name = cfg.variants()[0]
    backbone_name = cfg.backbones[0]
    classifier_kind = cfg.classifiers[0]

    ds = load_dataset(root, ImageVariant(variant_name))
    m, _, _ = _features_for(cfg, ds, backbone_name, variant_name)
    model = _train_full(cfg, m, classifier_kind)

    out = Path(cfg.out)
    if out.suffix:
        out.parent.mkdir(parents=True, exist_ok=True)
        model_path = out
    else:
        out.mkdir(parents=True, exist_ok=True)
        model_path = out / f"{classifier_kind}-{backbone_name}-{variant_name}.model"
    save_model(model, model_path)
    print(
        f"trained {classifier_kind} on {m.n_rows} samples "
        f"({m.dim} features, backbone={backbone_name}, variant={variant_name}) -> {model_path}"
    )
    return EXIT_OK


def _scores_for(model, rows: np.ndarray) -> np.ndarray:
    if isinstance(model, SvmModel):
        return model.decision_matrix(rows)
    if isinstance(model, NbModel):
        return model.score_matrix(rows)
    raise FormatError(f"unsupported model type {type(model).__name__}")


def cmd_predict(cfg: RunConfig, args: argparse.Namespace) -> int:
    model = load_model(args.model)
    lines = []
    if args.inputs:
        backbone_name = cfg.backbones[0]
        if backbone_name == "builtin":
            spec = resolve_backbone(backbone_name)
        else:
            spec = resolve_backbone(backbone_name, _model_path_for(cfg, backbone_name))
        pixels = [load_image(p) for p in args.inputs]
        rows = extract_vectors(pixels, spec)
        scores = _scores_for(model, rows)
        codes = np.array(model.class_codes, dtype=np.int64)
        predicted = codes[np.argmax(scores, axis=1)]
        for image_id, label, row in zip(args.inputs, predicted, scores):
            lines.append(f"{image_id},{int(label)}," + ",".join(f"{s:.9g}" for s in row))
    for line in lines:
        print(line)
    if args.out is not None and lines:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    return EXIT_OK


def cmd_benchmark(cfg: RunConfig, args: argparse.Namespace) -> int:
    root = _require_dataset(cfg)
    out = _out_dir(cfg)
    summaries = []
    for variant_name in cfg.variants():
        ds = load_dataset(root, ImageVariant(variant_name))
        for backbone_name in cfg.backbones:
            m, _, _ = _features_for(cfg, ds, backbone_name, variant_name)
            for classifier_kind in cfg.classifiers:
                summary = benchmark(
                    m,
                    classifier_kind=classifier_kind,
                    repetitions=cfg.repetitions,
                    seed=cfg.seed,
                    c_penalty=cfg.c_penalty,
                    standardize=cfg.standardize,
                )
                doc = summary.to_dict()
                doc.update({"backbone": backbone_name, "variant": variant_name})
                summaries.append(doc)
                print(
                    f"{backbone_name}/{classifier_kind}/{variant_name}: "
                    f"train mean {summary.train.mean_s:.4f}s median {summary.train.median_s:.4f}s, "
                    f"predict/1000 mean {summary.predict_per_1000.mean_s:.4f}s"
                )
    write_benchmark_json(summaries, out / "benchmark.json")
    print(f"wrote {out / 'benchmark.json'}")
    return EXIT_OK


# -- argument parsing ---------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    """argparse with usage failures mapped to exit code 64."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dataset", help="corpus root containing <variant>/<class>/ image trees")
    p.add_argument("--variant", choices=_VARIANT_CHOICES, help="image variant (default both)")
    p.add_argument(
        "--backbone",
        action="append",
        help="feature backbone, repeatable (default builtin)",
    )
    p.add_argument(
        "--classifier",
        action="append",
        help="classifier kind, repeatable: svm, nb (default both)",
    )
    p.add_argument("--k", type=int, help="cross-validation folds (default 5)")
    p.add_argument("--seed", type=int, help="seed for folds and training order (default 42)")
    p.add_argument("--c", type=float, help="SVM soft-margin penalty (default 2.9)")
    p.add_argument(
        "--no-standardize",
        action="store_const",
        const=True,
        help="skip per-feature standardization before the SVM",
    )
    p.add_argument("--cache-dir", help="feature cache directory (default erythro-cache)")
    p.add_argument("--out", help="output file or directory (default erythro-out)")
    p.add_argument(
        "--force", action="store_const", const=True, help="recompute caches even when present"
    )
    p.add_argument("--config", help="JSON config file; CLI flags override its values")
    p.add_argument("--repetitions", type=int, help="benchmark repetitions (default 1)")


def build_parser() -> _Parser:
    parser = _Parser(
        prog="erythro",
        description="Low-footprint blood-cell image classification: "
        "fixed feature extractors feeding classical classifiers.",
    )
    sub = parser.add_subparsers(dest="command", metavar="command")
    for name, help_text in (
        ("extract", "compute and cache feature matrices"),
        ("evaluate", "cross-validate the backbone x classifier grid and write reports"),
        ("train", "train one classifier on the full dataset and save the model"),
        ("predict", "classify image files with a saved model"),
        ("benchmark", "time training and prediction"),
    ):
        p = sub.add_parser(name, help=help_text)
        _add_common(p)
        if name == "predict":
            p.add_argument("--model", required=True, help="trained model file")
            p.add_argument("inputs", nargs="*", help="image files to classify")
    return parser


_COMMANDS = {
    "extract": cmd_extract,
    "evaluate": cmd_evaluate,
    "train": cmd_train,
    "predict": cmd_predict,
    "benchmark": cmd_benchmark,
}

# Exception-to-exit-code mapping, first match wins; order differs per command
# because DimMismatch means a backbone problem during extraction but a
# model-file problem during prediction.
_ERROR_TABLES: dict[str, list[tuple[tuple, int]]] = {
    "extract": [
        (_DATASET_ERRORS, EXIT_DATASET),
        (_BACKBONE_ERRORS + (DimMismatch,), EXIT_MODEL),
        (_MODEL_IO_ERRORS, EXIT_MODEL_IO),
    ],
    "evaluate": [
        (_DATASET_ERRORS, EXIT_DATASET),
        (_BACKBONE_ERRORS + (DimMismatch,), EXIT_MODEL),
        (_MODEL_IO_ERRORS, EXIT_MODEL_IO),
        (_EVAL_ERRORS, EXIT_EVAL),
    ],
    "train": [
        (_DATASET_ERRORS, EXIT_DATASET),
        (_BACKBONE_ERRORS + (DimMismatch,), EXIT_MODEL),
        (_MODEL_IO_ERRORS, EXIT_MODEL_IO),
        (_EVAL_ERRORS, EXIT_EVAL),
    ],
    "predict": [
        (_MODEL_IO_ERRORS + (DimMismatch,), EXIT_MODEL_IO),
        (_DATASET_ERRORS, EXIT_DATASET),
        (_BACKBONE_ERRORS, EXIT_MODEL),
    ],
    "benchmark": [
        (_DATASET_ERRORS, EXIT_DATASET),
        (_BACKBONE_ERRORS + (DimMismatch,), EXIT_MODEL),
        (_MODEL_IO_ERRORS, EXIT_MODEL_IO),
        (_EVAL_ERRORS, EXIT_EVAL),
    ],
}

_FALLBACK_CODES = {
    "extract": EXIT_MODEL,
    "evaluate": EXIT_EVAL,
    "train": EXIT_MODEL_IO,
    "predict": EXIT_MODEL_IO,
    "benchmark": EXIT_EVAL,
}


def _exit_code_for(command: str, exc: ErythroError) -> int:
    for classes, code in _ERROR_TABLES[command]:
        if isinstance(exc, classes):
            return code
    return _FALLBACK_CODES[command]


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    try:
        cfg = merge_config(args)
        return _COMMANDS[args.command](cfg, args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ErythroError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return _exit_code_for(args.command, exc)


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
