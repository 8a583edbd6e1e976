"""Shared helpers: stable seed derivation, file digests, JSONL I/O."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Iterable, Sequence


def mix_seed(*parts: object) -> int:
    """Derive a stable 64-bit seed from heterogeneous parts.

    Order-sensitive and independent of Python's hash randomization, so the
    same parts always yield the same stream regardless of process or
    platform.
    """
    digest = hashlib.sha256("\x1f".join(repr(p) for p in parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def sha256_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_jsonl(path: str | Path, records: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record, ensure_ascii=False) + "\n")


def read_jsonl(path: str | Path) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records
