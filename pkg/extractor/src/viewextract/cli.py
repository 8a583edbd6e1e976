"""Command-line front end for extraction runs.

Exit codes match the scoring package's conventions: 0 success, 2 usage
errors (including missing input paths), 3 data or encoder errors.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from .encoders import EncoderError, encoder_ids
from .extract import ExtractionJob, run_extraction, write_report
from .images import ImageError
from .manifest import ManifestError
from .store import StoreWriteError

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3


class UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="viewextract",
        description="Encode referring expressions and rendered object views "
                    "into a binary feature store.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--dataset", required=True,
                        help="manifest directory (objects.jsonl, instances.jsonl)")
    parser.add_argument("--images", required=True,
                        help="image directory laid out as <object_id>/<view>.png")
    parser.add_argument("--encoder", default="clip-vit-b32",
                        help=f"one of: {', '.join(encoder_ids())}")
    parser.add_argument("--batch-size", type=int, default=8,
                        help="I/O chunk size; never affects output values")
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--out", required=True, help="output store path")
    parser.add_argument("--report", default=None,
                        help="report path (default: <out>.report.json)")
    return parser


def _run(args) -> int:
    dataset_dir = Path(args.dataset)
    if not dataset_dir.is_dir():
        raise UsageError(f"dataset directory not found: {dataset_dir}")
    image_dir = Path(args.images)
    if not image_dir.is_dir():
        raise UsageError(f"image directory not found: {image_dir}")
    if args.batch_size < 1:
        raise UsageError(f"--batch-size must be >= 1, got {args.batch_size}")

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    job = ExtractionJob(dataset_dir=str(dataset_dir), image_dir=str(image_dir),
                        output_path=str(out), encoder_id=args.encoder,
                        batch_size=args.batch_size, device=args.device)
    report = run_extraction(job)

    report_path = Path(args.report) if args.report else \
        out.with_name(out.name + ".report.json")
    write_report(report, report_path)

    print(f"{report.n_language} language + {report.n_vision} vision records "
          f"({report.dim}-d, encoder {report.encoder}) -> {out} "
          f"[{report.output_bytes} bytes]")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else EXIT_OK
    try:
        return _run(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ManifestError, ImageError, EncoderError, StoreWriteError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
