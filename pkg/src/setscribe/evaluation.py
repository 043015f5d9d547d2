"""Downstream evaluation: set-difference proposer/ranker and the metrics
used to score captions (ROUGE-L, CLIPScore, acc@k via an oracle judge)."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .errors import OracleError
from .store import EmbeddingStore, normalize_rows

log = logging.getLogger(__name__)

PROPOSALS_PER_ROUND = 15
PROPOSAL_ROUNDS = 2
CLIPSCORE_WEIGHT = 2.5


@dataclass(frozen=True)
class DifferenceProposal:
    text: str
    round: int
    score: float = 0.0

    def __post_init__(self):
        if not self.text:
            raise ValueError("proposal text must be non-empty")


@dataclass(frozen=True)
class RankedDiff:
    proposals: tuple[DifferenceProposal, ...]

    def top(self, k: int) -> tuple[DifferenceProposal, ...]:
        return self.proposals[:k]

    @property
    def top1(self) -> tuple[DifferenceProposal, ...]:
        return self.top(1)

    @property
    def top5(self) -> tuple[DifferenceProposal, ...]:
        return self.top(5)


def propose(render_a: str, render_b: str, oracle) -> list[DifferenceProposal]:
    """Collect candidate differences over two oracle rounds, dropping
    case-insensitive duplicates. A round returning an unexpected count is
    tolerated (logged); zero usable proposals overall is an error."""
    if not render_a or not render_b:
        raise ValueError("both renders must be non-empty")
    out: list[DifferenceProposal] = []
    seen: set[str] = set()
    for round_index in range(1, PROPOSAL_ROUNDS + 1):
        items = oracle.propose_differences(
            render_a, render_b, PROPOSALS_PER_ROUND, round_index
        )
        if len(items) != PROPOSALS_PER_ROUND:
            log.warning("round %d returned %d proposals, expected %d",
                        round_index, len(items), PROPOSALS_PER_ROUND)
        for text in items:
            key = text.lower()
            if text and key not in seen:
                seen.add(key)
                out.append(DifferenceProposal(text=text, round=round_index))
    if not out:
        raise OracleError("proposer produced no usable differences")
    return out[: PROPOSAL_ROUNDS * PROPOSALS_PER_ROUND]


def rank(
    proposals: list[DifferenceProposal],
    store_a: EmbeddingStore,
    store_b: EmbeddingStore,
    provider,
    text_template: str = "{term}",
) -> RankedDiff:
    """Score each proposal by its mean cosine similarity to set A minus
    set B, and sort descending (stable on ties)."""
    if store_a.count == 0 or store_b.count == 0:
        raise ValueError("both stores must be non-empty")
    texts = [text_template.format(term=p.text) for p in proposals]
    emb = normalize_rows(np.asarray(provider.embed_texts(texts), dtype=np.float32), texts)
    emb = emb.astype(np.float64)
    mean_a = store_a.matrix.astype(np.float64).mean(axis=0)
    mean_b = store_b.matrix.astype(np.float64).mean(axis=0)
    scores = emb @ mean_a - emb @ mean_b
    scored = [replace(p, score=float(s)) for p, s in zip(proposals, scores)]
    ordered = sorted(scored, key=lambda p: -p.score)
    return RankedDiff(proposals=tuple(ordered))


def acc_at_k(ranked: RankedDiff, ground_truth: str, k: int, judge) -> bool:
    """True when any of the top-k proposals is judged equivalent to the
    ground truth; a judge error on one proposal counts it false."""
    if k < 1:
        raise ValueError("k must be >= 1")
    for proposal in ranked.top(k):
        try:
            if judge.judge_equivalence(proposal.text, ground_truth):
                return True
        except OracleError as exc:
            log.warning("judge failed on %r: %s", proposal.text, exc)
    return False


def rouge_l(candidate: str, reference: str) -> dict[str, float]:
    """LCS-based ROUGE-L over lowercase whitespace tokens. Both empty
    gives 1.0 everywhere; exactly one empty gives 0.0."""
    cand = candidate.lower().split()
    ref = reference.lower().split()
    if not cand and not ref:
        return {"precision": 1.0, "recall": 1.0, "f1": 1.0}
    if not cand or not ref:
        return {"precision": 0.0, "recall": 0.0, "f1": 0.0}

    prev = [0] * (len(ref) + 1)
    for c_tok in cand:
        cur = [0]
        for j, r_tok in enumerate(ref, start=1):
            if c_tok == r_tok:
                cur.append(prev[j - 1] + 1)
            else:
                cur.append(max(prev[j], cur[-1]))
        prev = cur
    lcs = prev[-1]

    precision = lcs / len(cand)
    recall = lcs / len(ref)
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return {"precision": precision, "recall": recall, "f1": f1}


def clip_score(caption: str, store: EmbeddingStore, provider) -> float:
    """Mean over images of 2.5 * max(0, cosine(caption, image))."""
    if store.count == 0:
        raise ValueError("store must be non-empty")
    emb = normalize_rows(np.asarray(provider.embed_texts([caption]), dtype=np.float32))
    sims = store.matrix.astype(np.float64) @ emb[0].astype(np.float64)
    return float(np.mean(CLIPSCORE_WEIGHT * np.clip(sims, 0.0, None)))
