"""Writer for the binary feature-store container.

Layout (integers little-endian):

    magic "SNRF" | format version u32 | dimension u32 | normalized flag u8 |
    encoder-name length u16 + UTF-8 bytes |
    language record count u64 | vision record count u64 |
    language records (key u16-len + UTF-8 + dim x f32) |
    vision records (key u16-len + UTF-8 + view u8 + dim x f32)

Record order is preserved as given so identical inputs produce identical
bytes. The consuming package reads this format back; nothing here depends
on it.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Sequence

import numpy as np

MAGIC = b"SNRF"
FORMAT_VERSION = 1
NUM_VIEWS = 8

_F32 = np.dtype("<f4")


class StoreWriteError(Exception):
    pass


def _coerce(values: np.ndarray, dim: int, key: str) -> np.ndarray:
    arr = np.ascontiguousarray(values, dtype=_F32)
    if arr.shape != (dim,):
        raise StoreWriteError(
            f"vector for {key} has shape {arr.shape}, store dimension is {dim}")
    if not np.all(np.isfinite(arr)):
        raise StoreWriteError(f"vector for {key} has non-finite components")
    return arr


def _key_bytes(key: str, what: str) -> bytes:
    encoded = key.encode("utf-8")
    if len(encoded) > 0xFFFF:
        raise StoreWriteError(f"{what} too long: {key!r}")
    return struct.pack("<H", len(encoded)) + encoded


def write_store(path: str | Path, encoder: str, dim: int,
                language: Sequence[tuple[str, np.ndarray]],
                vision: Sequence[tuple[str, int, np.ndarray]],
                normalized: bool = False) -> int:
    """Serialize records to ``path``; returns the byte count written."""
    if dim <= 0:
        raise StoreWriteError(f"dimension must be positive, got {dim}")

    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<IIB", FORMAT_VERSION, dim, int(normalized))
    blob += _key_bytes(encoder, "encoder name")
    blob += struct.pack("<QQ", len(language), len(vision))

    seen_language: set[str] = set()
    for expr_id, vec in language:
        if expr_id in seen_language:
            raise StoreWriteError(f"duplicate language key {expr_id!r}")
        seen_language.add(expr_id)
        blob += _key_bytes(expr_id, "language key")
        blob += _coerce(vec, dim, f"language key {expr_id!r}").tobytes()

    seen_vision: set[tuple[str, int]] = set()
    for object_id, view, vec in vision:
        if not isinstance(view, int) or not 0 <= view < NUM_VIEWS:
            raise StoreWriteError(
                f"view index for {object_id!r} must be in [0, {NUM_VIEWS - 1}], "
                f"got {view!r}"
            )
        if (object_id, view) in seen_vision:
            raise StoreWriteError(
                f"duplicate vision key ({object_id!r}, view {view})")
        seen_vision.add((object_id, view))
        blob += _key_bytes(object_id, "object id")
        blob += struct.pack("<B", view)
        blob += _coerce(vec, dim, f"vision key ({object_id!r}, view {view})").tobytes()

    with open(path, "wb") as handle:
        handle.write(blob)
    return len(blob)
