"""The extraction pipeline: manifest -> encoder -> feature-store file.

A job names a dataset manifest directory, an image directory laid out as
``<object_id>/<view>.png``, an encoder, and an output path. Every view key
in the manifest must have a decodable source image — checked up front so the
failure names the offending (object, view) before any encoding work runs.
Expressions are encoded once each in first-appearance order; vision records
follow manifest object order with views 0..7, so identical inputs yield
byte-identical stores.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .encoders import create_encoder
from .images import find_view_image, load_view_image
from .manifest import NUM_VIEWS, load_manifest
from .store import write_store


@dataclass(frozen=True)
class ExtractionJob:
    dataset_dir: str
    image_dir: str
    output_path: str
    encoder_id: str = "clip-vit-b32"
    batch_size: int = 8
    device: str = "cpu"

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValueError(f"batch size must be >= 1, got {self.batch_size}")


@dataclass
class ExtractionReport:
    encoder: str
    preprocessing: str
    dim: int
    n_language: int
    n_vision: int
    n_objects: int
    image_sizes: list[str]
    output_path: str
    output_bytes: int
    skipped: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "encoder": self.encoder,
            "preprocessing": self.preprocessing,
            "dim": self.dim,
            "n_language": self.n_language,
            "n_vision": self.n_vision,
            "n_objects": self.n_objects,
            "image_sizes": list(self.image_sizes),
            "output_path": self.output_path,
            "output_bytes": self.output_bytes,
            "skipped": list(self.skipped),
        }


def _chunks(items, size):
    for start in range(0, len(items), size):
        yield items[start:start + size]


def run_extraction(job: ExtractionJob) -> ExtractionReport:
    manifest = load_manifest(job.dataset_dir)

    # Resolve every image path first: a missing render should fail the job
    # immediately, not after minutes of encoding.
    image_paths: list[tuple[str, int, Path]] = []
    for obj in manifest.objects:
        for view in range(NUM_VIEWS):
            path = find_view_image(job.image_dir, obj.object_id, view)
            image_paths.append((obj.object_id, view, path))

    encoder = create_encoder(job.encoder_id, device=job.device)

    language = []
    for batch in _chunks(manifest.expressions, job.batch_size):
        for expr_id, text in batch:
            language.append((expr_id, encoder.encode_text(text)))

    vision = []
    sizes: set[str] = set()
    for batch in _chunks(image_paths, job.batch_size):
        for object_id, view, path in batch:
            image = load_view_image(path)
            sizes.add(f"{image.width}x{image.height}")
            vision.append((object_id, view, encoder.encode_image(image)))

    descriptor = f"{encoder.name}|{encoder.preprocessing}"
    n_bytes = write_store(job.output_path, encoder=descriptor,
                          dim=encoder.dim, language=language, vision=vision)

    return ExtractionReport(
        encoder=encoder.name,
        preprocessing=encoder.preprocessing,
        dim=encoder.dim,
        n_language=len(language),
        n_vision=len(vision),
        n_objects=len(manifest.objects),
        image_sizes=sorted(sizes),
        output_path=str(job.output_path),
        output_bytes=n_bytes,
    )


def write_report(report: ExtractionReport, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
