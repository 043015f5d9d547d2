"""Hypothesis acceptance by weighted-kNN one-vs-all classification.

Every image row is labeled by its k nearest example embeddings under
cosine similarity; the vote is the positive-similarity sum minus the
negative one, with ties resolved to the negative side. A hypothesis is
accepted when the positive fraction reaches the threshold alpha.

Rows and example embeddings are stored float32; similarity accumulation
happens in float64. Images are processed in blocks so memory stays
proportional to block size times example count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hypotheses import LabelSets
from .store import EmbeddingStore, normalize_rows


@dataclass(frozen=True)
class VerificationResult:
    positive_count: int
    total: int
    rate: float
    accepted: bool
    alpha: float


@dataclass(frozen=True)
class CostEstimate:
    embed_seconds: float
    knn_seconds: float


def knn_classify(
    store: EmbeddingStore,
    positives: np.ndarray,
    negatives: np.ndarray,
    k: int,
    block: int = 8192,
) -> np.ndarray:
    """Boolean label per image row: True = supports the hypothesis.

    Neighbor selection is deterministic: ties on similarity prefer the
    lower example index (positives first, then negatives).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    positives = np.atleast_2d(np.asarray(positives, dtype=np.float64))
    negatives = np.atleast_2d(np.asarray(negatives, dtype=np.float64))
    if positives.shape[0] == 0:
        raise ValueError("positives must be non-empty")
    if negatives.shape[0] == 0:
        raise ValueError("negatives must be non-empty")
    if positives.shape[1] != store.dim or negatives.shape[1] != store.dim:
        raise ValueError(
            f"example dim mismatch: store {store.dim}, "
            f"positives {positives.shape[1]}, negatives {negatives.shape[1]}"
        )
    examples = np.vstack([positives, negatives])
    signs = np.concatenate([
        np.ones(positives.shape[0]),
        -np.ones(negatives.shape[0]),
    ])
    kk = min(k, examples.shape[0])

    labels = np.empty(store.count, dtype=bool)
    for start in range(0, store.count, block):
        rows = store.matrix[start:start + block].astype(np.float64)
        sims = rows @ examples.T
        # stable argsort keeps lower indices first among equal sims
        order = np.argsort(-sims, axis=1, kind="stable")[:, :kk]
        top_sims = np.take_along_axis(sims, order, axis=1)
        top_signs = signs[order]
        margin = (top_sims * top_signs).sum(axis=1)
        labels[start:start + rows.shape[0]] = margin > 0.0
    return labels


def verify(
    store: EmbeddingStore,
    labels: LabelSets,
    provider,
    k: int,
    alpha: float,
    text_template: str = "{term}",
) -> VerificationResult:
    """Embed the label terms, classify every stored image, and threshold
    the positive rate at alpha (>= semantics)."""
    if not labels.positives:
        raise ValueError("label sets must contain at least one positive term")
    if not labels.negatives:
        raise ValueError("label sets must contain at least one negative term")
    terms = [text_template.format(term=t) for t in labels.positives + labels.negatives]
    emb = normalize_rows(np.asarray(provider.embed_texts(terms), dtype=np.float32), terms)
    pos = emb[: len(labels.positives)]
    neg = emb[len(labels.positives):]
    flags = knn_classify(store, pos, neg, k)
    positive_count = int(flags.sum())
    rate = positive_count / store.count
    return VerificationResult(
        positive_count=positive_count,
        total=store.count,
        rate=rate,
        accepted=rate >= alpha,
        alpha=alpha,
    )


def estimate_cost(n: int, c: int, d: int, flops: float, rate: float = 12.0) -> CostEstimate:
    """Precompute-once embedding time (n/rate) and per-iteration kNN time
    (2*n*c*d/flops: one multiply and one add per dimension)."""
    if n <= 0 or c <= 0 or d <= 0:
        raise ValueError("n, c and d must be strictly positive")
    if flops <= 0 or rate <= 0:
        raise ValueError("flops and rate must be strictly positive")
    return CostEstimate(embed_seconds=n / rate, knn_seconds=2.0 * n * c * d / flops)


def pair_distinguishable(
    emb_a: np.ndarray,
    emb_b: np.ndarray,
    text_a: np.ndarray,
    text_b: np.ndarray,
) -> bool:
    """Zero-shot match of 5+5 images against their two candidate terms;
    the pair is distinguishable when at least 8 of 10 land on their own
    term. Similarity ties assign to text_a."""
    emb_a = np.asarray(emb_a, dtype=np.float64)
    emb_b = np.asarray(emb_b, dtype=np.float64)
    text_a = np.asarray(text_a, dtype=np.float64).ravel()
    text_b = np.asarray(text_b, dtype=np.float64).ravel()
    if emb_a.shape[0] != 5 or emb_b.shape[0] != 5:
        raise ValueError("exactly 5 image embeddings per side are required")
    if emb_a.shape[1] != text_a.size or emb_b.shape[1] != text_b.size or text_a.size != text_b.size:
        raise ValueError("embedding dimensionality mismatch")
    correct = int(np.sum(emb_a @ text_a >= emb_a @ text_b))
    correct += int(np.sum(emb_b @ text_b > emb_b @ text_a))
    return correct >= 8


def overgeneric(node: str, pair_results: list[bool], phi: float,
                flag_when_below: bool = True) -> bool:
    """Flag a node from its hyponym-pair distinguishability results.

    `pair_results` holds one flag per evaluated pair (True =
    distinguishable). The printed criterion marks the node when the
    indistinguishable fraction is below phi; `flag_when_below=False`
    flips the comparison for the opposite reading.
    """
    if not pair_results:
        raise ValueError("pair_results must be non-empty")
    indist = sum(1 for r in pair_results if not r) / len(pair_results)
    return indist < phi if flag_when_below else indist >= phi
