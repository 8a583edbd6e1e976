"""Text and image encoders behind a tiny per-item interface.

Encoders process one item at a time by construction: the extraction batch
size only chunks file I/O, so output bytes cannot depend on batching (batched
float reductions would not be bitwise reproducible across batch shapes).

Two encoders are registered:

* ``clip-vit-b32`` — the pretrained contrastive vision-language model whose
  512-d projection outputs this pipeline exists to capture. Heavy deps are
  imported lazily; any loading problem surfaces as ``EncoderError``.
* ``hashproj-512`` — a weightless stand-in that maps content digests to
  Gaussian vectors. Useless semantically, but deterministic and
  dependency-free, which makes the whole pipeline testable where pretrained
  weights cannot be downloaded.
"""

from __future__ import annotations

import hashlib

import numpy as np
from PIL import Image


class EncoderError(Exception):
    pass


class HashProjectionEncoder:
    """sha256-seeded Gaussian vectors: content-deterministic, no weights."""

    name = "hashproj-512"
    dim = 512
    preprocessing = "rgb-white-composite|sha256-gaussian"

    def _project(self, payload: bytes) -> np.ndarray:
        digest = hashlib.sha256(payload).digest()
        seed = int.from_bytes(digest[:8], "little")
        rng = np.random.default_rng(seed)
        return rng.standard_normal(self.dim).astype(np.float32)

    def encode_text(self, text: str) -> np.ndarray:
        return self._project(b"text\x00" + text.encode("utf-8"))

    def encode_image(self, image: Image.Image) -> np.ndarray:
        if image.mode != "RGB":
            raise EncoderError(f"expected an RGB image, got mode {image.mode!r}")
        header = f"image\x00{image.width}x{image.height}\x00".encode("ascii")
        return self._project(header + image.tobytes())


class ClipEncoder:
    """Pretrained ViT-B/32 contrastive encoder, 512-d joint space.

    Inference runs in eval mode under no-grad on a fixed device; outputs are
    the raw (unnormalized) projection vectors. Text and images follow the
    model's published preprocessing via its bundled processor.
    """

    name = "clip-vit-b32"
    dim = 512
    preprocessing = "rgb-white-composite|clip-published-processor"

    _WEIGHTS = "openai/clip-vit-base-patch32"

    def __init__(self, device: str = "cpu") -> None:
        try:
            import torch
            from transformers import CLIPModel, CLIPProcessor
        except ImportError as exc:
            raise EncoderError(
                f"encoder load failure: {self.name} needs torch and "
                f"transformers installed ({exc})"
            ) from None
        try:
            self._model = CLIPModel.from_pretrained(self._WEIGHTS)
            self._processor = CLIPProcessor.from_pretrained(self._WEIGHTS)
        except Exception as exc:
            raise EncoderError(
                f"encoder load failure: cannot load {self._WEIGHTS}: {exc}"
            ) from None
        self._torch = torch
        self._device = device
        self._model.eval()
        self._model.to(device)

    def encode_text(self, text: str) -> np.ndarray:
        inputs = self._processor(text=[text], return_tensors="pt",
                                 padding=True, truncation=True)
        inputs = {k: v.to(self._device) for k, v in inputs.items()}
        with self._torch.no_grad():
            features = self._model.get_text_features(**inputs)
        return features[0].cpu().numpy().astype(np.float32)

    def encode_image(self, image: Image.Image) -> np.ndarray:
        inputs = self._processor(images=[image], return_tensors="pt")
        inputs = {k: v.to(self._device) for k, v in inputs.items()}
        with self._torch.no_grad():
            features = self._model.get_image_features(**inputs)
        return features[0].cpu().numpy().astype(np.float32)


_REGISTRY = {
    ClipEncoder.name: ClipEncoder,
    HashProjectionEncoder.name: HashProjectionEncoder,
}


def encoder_ids() -> tuple[str, ...]:
    return tuple(sorted(_REGISTRY))


def create_encoder(encoder_id: str, device: str = "cpu"):
    try:
        factory = _REGISTRY[encoder_id]
    except KeyError:
        known = ", ".join(encoder_ids())
        raise EncoderError(f"unknown encoder {encoder_id!r} (known: {known})") from None
    if factory is ClipEncoder:
        return ClipEncoder(device=device)
    return factory()
