import numpy as np
import pytest
from PIL import Image

from viewextract.images import (
    ImageError,
    MissingImageError,
    composite_white,
    find_view_image,
    load_view_image,
)


def _checker_rgba(size=8):
    """Half opaque red, half fully transparent."""
    image = Image.new("RGBA", (size, size), (255, 0, 0, 255))
    for x in range(size // 2):
        for y in range(size):
            image.putpixel((x, y), (0, 0, 255, 0))
    return image


class TestCompositeWhite:
    def test_transparent_pixels_become_white(self):
        out = composite_white(_checker_rgba())
        assert out.mode == "RGB"
        assert out.getpixel((0, 0)) == (255, 255, 255)
        assert out.getpixel((7, 0)) == (255, 0, 0)

    def test_matches_manual_composite(self):
        rgba = _checker_rgba()
        manual = Image.new("RGB", rgba.size, (255, 255, 255))
        manual.paste(rgba, mask=rgba.split()[3])
        assert composite_white(rgba).tobytes() == manual.tobytes()

    def test_partial_alpha_blends(self):
        image = Image.new("RGBA", (2, 2), (0, 0, 0, 128))
        out = composite_white(image)
        blended = out.getpixel((0, 0))
        assert all(0 < c < 255 for c in blended)

    def test_opaque_rgb_unchanged(self):
        image = Image.new("RGB", (4, 4), (10, 20, 30))
        assert composite_white(image).tobytes() == image.tobytes()

    def test_la_mode(self):
        image = Image.new("LA", (2, 2), (0, 0))
        assert composite_white(image).getpixel((0, 0)) == (255, 255, 255)

    def test_palette_with_transparency(self, tmp_path):
        rgba = _checker_rgba()
        path = tmp_path / "pal.png"
        rgba.convert("P").save(path, transparency=0)
        loaded = load_view_image(path)
        assert loaded.mode == "RGB"

    def test_grayscale_promoted_to_rgb(self):
        image = Image.new("L", (4, 4), 80)
        out = composite_white(image)
        assert out.mode == "RGB"
        assert out.getpixel((0, 0)) == (80, 80, 80)


class TestLoadViewImage:
    def test_round_trips_pixels(self, tmp_path):
        path = tmp_path / "img.png"
        source = Image.new("RGB", (6, 5), (1, 2, 3))
        source.save(path)
        loaded = load_view_image(path)
        assert loaded.size == (6, 5)
        assert np.array_equal(np.asarray(loaded), np.asarray(source))

    def test_undecodable_file_named(self, tmp_path):
        path = tmp_path / "junk.png"
        path.write_bytes(b"this is not an image")
        with pytest.raises(ImageError, match="junk.png"):
            load_view_image(path)

    def test_truncated_png_rejected(self, tmp_path):
        path = tmp_path / "trunc.png"
        Image.new("RGB", (64, 64), (9, 9, 9)).save(path)
        path.write_bytes(path.read_bytes()[:40])
        with pytest.raises(ImageError):
            load_view_image(path)


class TestFindViewImage:
    def test_finds_png(self, tmp_path):
        target = tmp_path / "objA"
        target.mkdir()
        Image.new("RGB", (2, 2)).save(target / "3.png")
        assert find_view_image(tmp_path, "objA", 3) == target / "3.png"

    def test_finds_alternate_extension(self, tmp_path):
        target = tmp_path / "objA"
        target.mkdir()
        Image.new("RGB", (2, 2)).save(target / "0.jpg")
        assert find_view_image(tmp_path, "objA", 0).suffix == ".jpg"

    def test_missing_names_object_and_view(self, tmp_path):
        (tmp_path / "objA").mkdir()
        with pytest.raises(MissingImageError, match=r"'objA' view 5"):
            find_view_image(tmp_path, "objA", 5)
