"""Bit-exact binary container for precomputed embedding vectors.

File layout (all integers little-endian):

    magic "SNRF" | format version u32 | dimension u32 | normalized flag u8 |
    encoder-name length u16 + UTF-8 bytes |
    language record count u64 | vision record count u64 |
    language records... | vision records...

    language record: key length u16 + UTF-8 key + dimension x f32
    vision record:   key length u16 + UTF-8 object_id + view index u8 + dimension x f32

Vectors are stored raw (unnormalized); zero-shot scoring normalizes at use
while trained heads consume raw vectors. Reload returns the written bytes
exactly. A store is read-only after open and safe for concurrent lookups.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .data import check_view_index

MAGIC = b"SNRF"
FORMAT_VERSION = 1
DEFAULT_DIM = 512

_F32 = np.dtype("<f4")


class StoreError(Exception):
    pass


class StoreFormatError(StoreError):
    """File does not parse as a valid store."""


class DuplicateKeyError(StoreError):
    pass


class DimensionMismatchError(StoreError):
    pass


class InvalidVectorError(StoreError):
    """Vector contains NaN or Inf components."""


class MissingKeyError(StoreError):
    pass


class DegenerateVectorError(StoreError):
    """Zero vector cannot be normalized."""


def normalize(values: np.ndarray) -> np.ndarray:
    """Scale to unit L2 norm (computed in 64-bit, returned as float32)."""
    arr = np.asarray(values, dtype=np.float32)
    norm = float(np.linalg.norm(arr.astype(np.float64)))
    if norm == 0.0:
        raise DegenerateVectorError("cannot normalize a zero vector")
    return (arr.astype(np.float64) / norm).astype(np.float32)


class FeatureStore:
    """Map from expression ids and (object, view) pairs to embedding vectors."""

    def __init__(self, encoder: str = "unknown", dim: int = DEFAULT_DIM,
                 normalized: bool = False) -> None:
        if dim <= 0:
            raise ValueError(f"dimension must be positive, got {dim}")
        self.encoder = encoder
        self.dim = dim
        self.normalized = normalized
        self._language: dict[str, np.ndarray] = {}
        self._vision: dict[tuple[str, int], np.ndarray] = {}

    @property
    def n_language(self) -> int:
        return len(self._language)

    @property
    def n_vision(self) -> int:
        return len(self._vision)

    def language_keys(self) -> list[str]:
        return list(self._language)

    def vision_keys(self) -> list[tuple[str, int]]:
        return list(self._vision)

    def _coerce(self, values: np.ndarray, key: str) -> np.ndarray:
        arr = np.ascontiguousarray(values, dtype=_F32)
        if arr.shape != (self.dim,):
            raise DimensionMismatchError(
                f"vector for {key} has shape {arr.shape}, store dimension is {self.dim}"
            )
        if not np.all(np.isfinite(arr)):
            raise InvalidVectorError(f"vector for {key} has non-finite components")
        return arr

    def add_language(self, expr_id: str, values: np.ndarray) -> None:
        if expr_id in self._language:
            raise DuplicateKeyError(f"duplicate language key {expr_id!r}")
        self._language[expr_id] = self._coerce(values, f"language key {expr_id!r}")

    def add_view(self, object_id: str, view: int, values: np.ndarray) -> None:
        view = check_view_index(view)
        if (object_id, view) in self._vision:
            raise DuplicateKeyError(f"duplicate vision key ({object_id!r}, view {view})")
        self._vision[(object_id, view)] = self._coerce(
            values, f"vision key ({object_id!r}, view {view})"
        )

    def lookup_language(self, expr_id: str) -> np.ndarray:
        try:
            return self._language[expr_id]
        except KeyError:
            raise MissingKeyError(f"no language embedding for expression {expr_id!r}") from None

    def lookup_view(self, object_id: str, view: int) -> np.ndarray:
        try:
            return self._vision[(object_id, view)]
        except KeyError:
            raise MissingKeyError(
                f"no view embedding for object {object_id!r} view {view}"
            ) from None

    def write(self, path: str | Path) -> int:
        """Write the container; returns the byte count written."""
        encoder_bytes = self.encoder.encode("utf-8")
        if len(encoder_bytes) > 0xFFFF:
            raise StoreError("encoder name too long")
        blob = bytearray()
        blob += MAGIC
        blob += struct.pack("<IIB", FORMAT_VERSION, self.dim, int(self.normalized))
        blob += struct.pack("<H", len(encoder_bytes)) + encoder_bytes
        blob += struct.pack("<QQ", len(self._language), len(self._vision))
        for expr_id, vec in self._language.items():
            key = expr_id.encode("utf-8")
            if len(key) > 0xFFFF:
                raise StoreError(f"language key too long: {expr_id!r}")
            blob += struct.pack("<H", len(key)) + key + vec.tobytes()
        for (object_id, view), vec in self._vision.items():
            key = object_id.encode("utf-8")
            if len(key) > 0xFFFF:
                raise StoreError(f"object id too long: {object_id!r}")
            blob += struct.pack("<H", len(key)) + key + struct.pack("<B", view) + vec.tobytes()
        with open(path, "wb") as handle:
            handle.write(blob)
        return len(blob)

    @classmethod
    def read(cls, path: str | Path) -> "FeatureStore":
        data = Path(path).read_bytes()
        reader = _Reader(data, str(path))
        if reader.take(4) != MAGIC:
            raise StoreFormatError(f"{path}: bad magic, not a feature store")
        version, dim, normalized = struct.unpack("<IIB", reader.take(9))
        if version != FORMAT_VERSION:
            raise StoreFormatError(f"{path}: unsupported format version {version}")
        (name_len,) = struct.unpack("<H", reader.take(2))
        encoder = reader.take(name_len).decode("utf-8")
        n_language, n_vision = struct.unpack("<QQ", reader.take(16))

        store = cls(encoder=encoder, dim=dim, normalized=bool(normalized))
        vec_bytes = dim * 4
        for _ in range(n_language):
            (key_len,) = struct.unpack("<H", reader.take(2))
            expr_id = reader.take(key_len).decode("utf-8")
            vec = np.frombuffer(reader.take(vec_bytes), dtype=_F32).copy()
            store.add_language(expr_id, vec)
        for _ in range(n_vision):
            (key_len,) = struct.unpack("<H", reader.take(2))
            object_id = reader.take(key_len).decode("utf-8")
            (view,) = struct.unpack("<B", reader.take(1))
            vec = np.frombuffer(reader.take(vec_bytes), dtype=_F32).copy()
            store.add_view(object_id, view, vec)
        if reader.remaining:
            raise StoreFormatError(f"{path}: {reader.remaining} trailing bytes after records")
        return store


class _Reader:
    def __init__(self, data: bytes, name: str) -> None:
        self.data = data
        self.name = name
        self.offset = 0

    @property
    def remaining(self) -> int:
        return len(self.data) - self.offset

    def take(self, n: int) -> bytes:
        if self.remaining < n:
            raise StoreFormatError(f"{self.name}: truncated at byte {self.offset}")
        chunk = self.data[self.offset:self.offset + n]
        self.offset += n
        return chunk
