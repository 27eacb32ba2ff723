"""Command-line front end: export one backbone and verify the artifact."""

from __future__ import annotations

import argparse
import sys

from .errors import ExportFailure, UnknownBackbone, VerificationFailure
from .export import ExportSpec, ensure_verified, export_backbone, verify_export

EXIT_OK = 0
EXIT_EXPORT = 3
EXIT_VERIFY = 4
EXIT_USAGE = 64


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"export: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="export", description="Export a truncated backbone as <name>.model + <name>.json.")
    p.add_argument("--backbone", required=True, help="densenet|resnet|mobilenet (or the full architecture id)")
    p.add_argument("--out", required=True, help="directory to write the model and sidecar into")
    p.add_argument("--weights", choices=("pretrained", "random"), default="pretrained",
                   help="source of network weights (random is seeded and download-free)")
    p.add_argument("--seed", type=int, default=0, help="weight init seed for --weights random")
    p.add_argument("--truncation", default=None, help="named layer to drop (default: the classifier head)")
    p.add_argument("--no-verify", action="store_true", help="skip the post-export verification pass")
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    spec = ExportSpec(
        backbone=args.backbone,
        out_dir=args.out,
        truncation=args.truncation,
        weights=args.weights,
        seed=args.seed,
    )
    try:
        result = export_backbone(spec)
        print(f"exported {spec.arch} -> {result.model_path} (dim={result.feature_dim})")
        if not args.no_verify:
            report = verify_export(result.model_path, result.sidecar_path, result.reference)
            ensure_verified(report)
            print(f"verified: max-abs deviation {report.max_abs_dev:.3e}")
    except UnknownBackbone as exc:
        print(f"export: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ExportFailure as exc:
        print(f"export: error: {exc}", file=sys.stderr)
        return EXIT_EXPORT
    except VerificationFailure as exc:
        print(f"export: verification failed: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
