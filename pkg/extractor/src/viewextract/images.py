"""View image loading.

Renders may carry transparency (RGBA, LA, or palette-with-alpha); those are
composited onto a white background before any encoder preprocessing, since
downstream encoders expect opaque RGB and the renders assume a light
ground. Missing and undecodable files are hard errors naming the object
and view so extraction never silently drops a key.
"""

from __future__ import annotations

from pathlib import Path

from PIL import Image

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".webp", ".bmp")


class ImageError(Exception):
    pass


class MissingImageError(ImageError):
    pass


def find_view_image(image_dir: str | Path, object_id: str, view: int) -> Path:
    """Locate ``<image_dir>/<object_id>/<view>.<ext>`` for any known extension."""
    base = Path(image_dir) / object_id
    for ext in IMAGE_EXTENSIONS:
        candidate = base / f"{view}{ext}"
        if candidate.is_file():
            return candidate
    raise MissingImageError(
        f"no view image for object {object_id!r} view {view} under {base}")


def composite_white(image: Image.Image) -> Image.Image:
    """Flatten any transparency onto white; always returns RGB."""
    if image.mode == "P":
        image = image.convert("RGBA" if "transparency" in image.info else "RGB")
    if image.mode in ("RGBA", "LA"):
        background = Image.new("RGBA", image.size, (255, 255, 255, 255))
        background.alpha_composite(image.convert("RGBA"))
        return background.convert("RGB")
    return image.convert("RGB")


def load_view_image(path: str | Path) -> Image.Image:
    try:
        with Image.open(path) as handle:
            handle.load()
            return composite_white(handle)
    except (OSError, SyntaxError) as exc:
        raise ImageError(f"cannot decode image {path}: {exc}") from None
