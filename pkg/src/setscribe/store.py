"""Immutable store of L2-normalized embeddings with a binary file format.

File layout (little-endian, no padding):

    magic "IS2T" | version u32=1 | dim u32 | count u64
    | per id: len u32 + UTF-8 bytes
    | matrix: count*dim float32, row-major
    | crc32 of the matrix section, u32

The matrix section round-trips byte-exactly; loading never re-normalizes.
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

from .errors import ProviderError, StoreError

MAGIC = b"IS2T"
VERSION = 1
NORM_TOL = 1e-4


class EmbeddingStore:
    def __init__(self, ids: list[str], matrix: np.ndarray):
        matrix = np.ascontiguousarray(matrix, dtype=np.float32)
        if matrix.ndim != 2:
            raise StoreError(f"matrix must be 2-D, got shape {matrix.shape}")
        if len(ids) != matrix.shape[0]:
            raise StoreError(f"{len(ids)} ids for {matrix.shape[0]} rows")
        if len(set(ids)) != len(ids):
            raise StoreError("ids must be unique")
        if matrix.shape[0]:
            norms = np.linalg.norm(matrix, axis=1)
            bad = np.where(np.abs(norms - 1.0) > NORM_TOL)[0]
            if bad.size:
                raise StoreError(
                    f"row for id {ids[int(bad[0])]!r} is not unit-norm "
                    f"(norm={norms[int(bad[0])]:.6f})"
                )
        matrix.setflags(write=False)
        self.ids: tuple[str, ...] = tuple(ids)
        self.matrix = matrix

    @property
    def count(self) -> int:
        return self.matrix.shape[0]

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    @property
    def checksum(self) -> int:
        return zlib.crc32(self.matrix.tobytes())

    def __len__(self) -> int:
        return self.count


def normalize_rows(matrix: np.ndarray, ids: list[str] | None = None) -> np.ndarray:
    """L2-normalize; a zero-norm row names its id in the error."""
    matrix = np.asarray(matrix, dtype=np.float32)
    norms = np.linalg.norm(matrix, axis=1)
    zero = np.where(norms == 0.0)[0]
    if zero.size:
        which = ids[int(zero[0])] if ids else f"row {int(zero[0])}"
        raise StoreError(f"cannot normalize zero vector for {which!r}")
    return matrix / norms[:, None]


def build_store(ids, provider, batch: int = 64, kind: str = "image",
                retries: int = 2) -> EmbeddingStore:
    """Fetch embeddings in batches from a provider and assemble a store.

    Row order equals input order. Provider failures are retried up to
    `retries` times per batch before surfacing.
    """
    ids = list(ids)
    if not ids:
        raise StoreError("ids must be non-empty")
    if len(set(ids)) != len(ids):
        raise StoreError("ids must be unique")
    if batch < 1:
        raise StoreError("batch must be >= 1")
    fetch = provider.embed_images if kind == "image" else provider.embed_texts

    blocks: list[np.ndarray] = []
    for start in range(0, len(ids), batch):
        chunk = ids[start:start + batch]
        last_exc: Exception | None = None
        for _ in range(retries + 1):
            try:
                rows = np.asarray(fetch(chunk), dtype=np.float32)
                last_exc = None
                break
            except Exception as exc:  # provider contract: any failure is retryable
                last_exc = exc
        if last_exc is not None:
            raise ProviderError(f"embedding batch at offset {start} failed: {last_exc}")
        if rows.shape != (len(chunk), provider.dim):
            raise StoreError(
                f"provider returned shape {rows.shape}, expected {(len(chunk), provider.dim)}"
            )
        blocks.append(normalize_rows(rows, chunk))
    return EmbeddingStore(ids, np.vstack(blocks))


def save_store(store: EmbeddingStore, path: str | Path) -> None:
    path = Path(path)
    matrix_bytes = store.matrix.tobytes()
    with path.open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<I", store.dim))
        fh.write(struct.pack("<Q", store.count))
        for sid in store.ids:
            raw = sid.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
        fh.write(matrix_bytes)
        fh.write(struct.pack("<I", zlib.crc32(matrix_bytes)))


def load_store(path: str | Path) -> EmbeddingStore:
    path = Path(path)
    data = path.read_bytes()
    view = memoryview(data)
    off = 0

    def take(n: int) -> memoryview:
        nonlocal off
        if off + n > len(data):
            raise StoreError(f"truncated store file {path} at offset {off}")
        out = view[off:off + n]
        off += n
        return out

    if bytes(take(4)) != MAGIC:
        raise StoreError(f"{path}: bad magic, not an embedding store")
    (version,) = struct.unpack("<I", take(4))
    if version != VERSION:
        raise StoreError(f"{path}: unsupported version {version}")
    (dim,) = struct.unpack("<I", take(4))
    (count,) = struct.unpack("<Q", take(8))
    ids = []
    for _ in range(count):
        (ln,) = struct.unpack("<I", take(4))
        ids.append(bytes(take(ln)).decode("utf-8"))
    matrix_bytes = bytes(take(count * dim * 4))
    (crc,) = struct.unpack("<I", take(4))
    if off != len(data):
        raise StoreError(f"{path}: {len(data) - off} trailing bytes")
    if zlib.crc32(matrix_bytes) != crc:
        raise StoreError(f"{path}: matrix checksum mismatch, file is corrupt")
    matrix = np.frombuffer(matrix_bytes, dtype="<f4").reshape(count, dim).copy()
    return EmbeddingStore(ids, matrix)
