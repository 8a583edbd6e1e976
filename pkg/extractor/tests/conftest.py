import json
from types import SimpleNamespace

import pytest
from PIL import Image

from viewextract.encoders import EncoderError, create_encoder


def _write_jsonl(path, records):
    path.write_text("".join(json.dumps(r) + "\n" for r in records))


def make_corpus(root, n_objects=1, n_expressions=2, image_size=(12, 10)):
    """A tiny manifest + image tree: solid-color renders, simple texts."""
    dataset = root / "dataset"
    dataset.mkdir(parents=True, exist_ok=True)
    objects = []
    for i in range(n_objects):
        object_id = f"obj{i:02d}"
        record = {"object_id": object_id, "category": "widget"}
        for k in range(8):
            record[f"view_key_{k}"] = f"{object_id}/v{k}"
        objects.append(record)
    _write_jsonl(dataset / "objects.jsonl", objects)

    instances = []
    for i in range(n_expressions):
        object_id = f"obj{i % n_objects:02d}"
        instances.append({
            "instance_id": f"inst{i:03d}",
            "expr_id": f"expr{i:03d}",
            "text": f"the {'red' if i % 2 else 'blue'} widget number {i}",
            "mode": "visual",
            "object_a_id": object_id,
            "object_b_id": object_id,
            "gold": "a",
            "category_a": "widget",
            "category_b": "widget",
        })
    _write_jsonl(dataset / "instances.jsonl", instances)

    images = root / "images"
    for i in range(n_objects):
        object_dir = images / f"obj{i:02d}"
        object_dir.mkdir(parents=True, exist_ok=True)
        for k in range(8):
            color = (20 * i + 10, 30 * k, 255 - 25 * k)
            Image.new("RGB", image_size, color).save(object_dir / f"{k}.png")

    return SimpleNamespace(dataset=dataset, images=images,
                           n_objects=n_objects, n_expressions=n_expressions,
                           image_size=image_size)


@pytest.fixture
def corpus(tmp_path):
    return make_corpus(tmp_path)


def _probe_clip():
    try:
        create_encoder("clip-vit-b32")
        return True
    except EncoderError:
        return False


@pytest.fixture(scope="session")
def clip_available():
    return _probe_clip()
