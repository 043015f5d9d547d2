"""Embedding providers: the HTTP client for the embedding service and a
deterministic hash-based stub for offline runs and CI."""

from __future__ import annotations

import base64
import hashlib
import os
from pathlib import Path
from typing import Protocol

import httpx
import numpy as np

from .errors import ProviderError, UserError

EMBED_URL_ENV = "IS2T_EMBED_URL"


class EmbeddingProvider(Protocol):
    dim: int

    def embed_texts(self, texts: list[str]) -> np.ndarray: ...

    def embed_images(self, refs: list[str]) -> np.ndarray: ...


class HashEmbeddingProvider:
    """Deterministic pseudo-embeddings seeded from content hashes.

    Vectors are raw (not normalized), matching the wire contract where
    clients normalize. Image refs that point at readable files are hashed
    by content; anything else is hashed as a string stand-in.
    """

    def __init__(self, dim: int = 256):
        if dim < 1:
            raise UserError("provider dim must be >= 1")
        self.dim = dim

    def _vector(self, key: bytes) -> np.ndarray:
        seed = int.from_bytes(hashlib.sha256(key).digest()[:8], "little")
        rng = np.random.default_rng(seed)
        return rng.standard_normal(self.dim).astype(np.float32)

    def embed_texts(self, texts: list[str]) -> np.ndarray:
        return np.stack([self._vector(b"text\x00" + t.encode("utf-8")) for t in texts])

    def embed_images(self, refs: list[str]) -> np.ndarray:
        rows = []
        for ref in refs:
            p = Path(ref)
            if p.is_file():
                rows.append(self._vector(b"image\x00" + p.read_bytes()))
            else:
                rows.append(self._vector(b"image\x00" + str(ref).encode("utf-8")))
        return np.stack(rows)


class HttpEmbeddingProvider:
    """Client for the embedding service wire format.

    GET /info reports {model, dim, version}; POST /embed_text and
    /embed_image take {"texts": [...]} / {"images_b64": [...]} and return
    {"embeddings": [[...], ...], "dim": d, "model": name}. Requests are
    chunked to the service batch cap.
    """

    BATCH_CAP = 256

    def __init__(self, base_url: str | None = None, timeout: float = 60.0):
        base_url = base_url or os.environ.get(EMBED_URL_ENV)
        if not base_url:
            raise UserError(
                f"no embedding service URL: pass one or set {EMBED_URL_ENV}"
            )
        self._client = httpx.Client(base_url=base_url.rstrip("/"), timeout=timeout)
        info = self._get_info()
        self.dim = int(info["dim"])
        self.model = str(info.get("model", "unknown"))

    def _get_info(self) -> dict:
        try:
            resp = self._client.get("/info")
            resp.raise_for_status()
            return resp.json()
        except httpx.HTTPError as exc:
            raise ProviderError(f"embedding service /info failed: {exc}") from exc

    def _post(self, endpoint: str, payload: dict) -> np.ndarray:
        try:
            resp = self._client.post(endpoint, json=payload)
            resp.raise_for_status()
            body = resp.json()
        except httpx.HTTPError as exc:
            raise ProviderError(f"embedding service {endpoint} failed: {exc}") from exc
        rows = np.asarray(body["embeddings"], dtype=np.float32)
        if rows.ndim != 2 or rows.shape[1] != self.dim:
            raise ProviderError(
                f"embedding service returned shape {rows.shape}, expected (*, {self.dim})"
            )
        return rows

    def embed_texts(self, texts: list[str]) -> np.ndarray:
        blocks = []
        for start in range(0, len(texts), self.BATCH_CAP):
            chunk = texts[start:start + self.BATCH_CAP]
            blocks.append(self._post("/embed_text", {"texts": chunk}))
        return np.vstack(blocks)

    def embed_images(self, refs: list[str]) -> np.ndarray:
        blocks = []
        for start in range(0, len(refs), self.BATCH_CAP):
            chunk = refs[start:start + self.BATCH_CAP]
            payload = {"images_b64": [self._encode(r) for r in chunk]}
            blocks.append(self._post("/embed_image", payload))
        return np.vstack(blocks)

    @staticmethod
    def _encode(ref: str) -> str:
        p = Path(ref)
        if p.is_file():
            return base64.b64encode(p.read_bytes()).decode("ascii")
        return str(ref)


def provider_from_spec(spec: str) -> EmbeddingProvider:
    """Parse a CLI provider spec: ``hash[:dim]`` or ``http[:url]``."""
    if spec.startswith("hash"):
        _, _, dim = spec.partition(":")
        return HashEmbeddingProvider(dim=int(dim) if dim else 256)
    if spec.startswith("http"):
        if spec.startswith(("http://", "https://")):
            return HttpEmbeddingProvider(base_url=spec)
        _, _, url = spec.partition(":")
        return HttpEmbeddingProvider(base_url=url or None)
    raise UserError(f"unknown provider spec {spec!r} (expected hash[:dim] or http[:url])")
