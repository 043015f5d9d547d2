"""Hypothesis chains: specific-to-general expansion and verification.

A chain starts from the formulated triplet h0 and generalizes its object
by walking hypernyms, up to a step budget. Each level owns a supporting
label set (the object plus its hyponyms) and a contradicting one (its
siblings); verification walks the chain general-to-specific and stops at
the first rejection, since rejection propagates downward.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

from .concept_graph import Triplet
from .lexicon import Lexicon


@dataclass(frozen=True)
class Hypothesis:
    triplet: Triplet
    object_synset: str | None
    level: int

    def __post_init__(self):
        if self.level < 0:
            raise ValueError("level must be >= 0")
        if self.object_synset is None and self.level != 0:
            raise ValueError("only the base hypothesis may lack a synset")


@dataclass(frozen=True)
class HypothesisChain:
    items: tuple[Hypothesis, ...]
    delta_used: int

    def __len__(self) -> int:
        return len(self.items)


@dataclass(frozen=True)
class LabelSets:
    positives: tuple[str, ...]
    negatives: tuple[str, ...]


def expand(h0: Hypothesis, lex: Lexicon, delta: int) -> HypothesisChain:
    """Generalize h0 by up to `delta` hypernym hops. A lexicon miss at
    the base object leaves the chain at [h0] alone."""
    if delta < 0:
        raise ValueError("delta must be >= 0")
    items = [h0]
    if h0.object_synset is not None:
        for level, ancestor in enumerate(lex.ancestors(h0.object_synset, delta), start=1):
            term = lex.synsets[ancestor].display_term()
            triplet = Triplet(h0.triplet.subject, h0.triplet.predicate, term)
            items.append(Hypothesis(triplet=triplet, object_synset=ancestor, level=level))
    return HypothesisChain(items=tuple(items), delta_used=len(items) - 1)


def label_sets(h: Hypothesis, lex: Lexicon, max_examples: int) -> LabelSets:
    """Supporting/contradicting terms for one hypothesis.

    Positives: the object's own term followed by up to `max_examples`
    transitive hyponym terms in breadth-first order. Negatives: up to
    `max_examples` sibling terms, minus any overlap with the positives.
    """
    own = h.triplet.object
    if h.object_synset is None:
        return LabelSets(positives=(own,), negatives=())

    positives = [own]
    seen = {own}
    for sid in lex.hyponyms_bfs(h.object_synset):
        if len(positives) - 1 >= max_examples:
            break
        term = lex.synsets[sid].display_term()
        if term not in seen:
            seen.add(term)
            positives.append(term)

    negatives: list[str] = []
    neg_seen: set[str] = set()
    for sid in lex.siblings_ordered(h.object_synset):
        if len(negatives) >= max_examples:
            break
        term = lex.synsets[sid].display_term()
        if term not in seen and term not in neg_seen:
            neg_seen.add(term)
            negatives.append(term)

    return LabelSets(positives=tuple(positives), negatives=tuple(negatives))


@dataclass(frozen=True)
class ChainLevelOutcome:
    hypothesis: Hypothesis
    labels: LabelSets
    result: object | None  # VerificationResult, None while untested
    skipped: bool = False  # no negatives: unfalsifiable, never committed


@dataclass(frozen=True)
class ChainVerification:
    verified: Hypothesis | None
    levels: tuple[ChainLevelOutcome, ...] = field(default=())


def verify_chain(
    chain: HypothesisChain,
    verifier_fn: Callable[[Hypothesis, LabelSets], object],
    lex: Lexicon,
    max_examples: int,
) -> ChainVerification:
    """Walk the chain from the most general level down to h0.

    The first rejected level ends the walk and the last accepted
    hypothesis (if any) is returned; levels below a rejection are never
    evaluated. A level without negative examples cannot be falsified, so
    it is skipped: it is neither committed nor does it stop the walk.
    Verifier errors propagate.
    """
    if not chain.items:
        raise ValueError("chain must be non-empty")
    outcomes: list[ChainLevelOutcome] = []
    last_accepted: Hypothesis | None = None
    for h in reversed(chain.items):
        labels = label_sets(h, lex, max_examples)
        if not labels.negatives:
            outcomes.append(ChainLevelOutcome(h, labels, None, skipped=True))
            continue
        result = verifier_fn(h, labels)
        outcomes.append(ChainLevelOutcome(h, labels, result))
        if not result.accepted:
            break
        last_accepted = h
    return ChainVerification(verified=last_accepted, levels=tuple(outcomes))
