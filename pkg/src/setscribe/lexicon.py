"""Lexical graph: load, traverse and audit a hypernym/hyponym hierarchy.

The on-disk format is one JSON object per line:

    {"id": "gold.n.01", "lemmas": ["gold"], "gloss": "...",
     "hypernyms": ["yellow.n.01"], "pos": "n"}

Lines starting with ``#`` are ignored. The loaded structure is immutable
and safe to query from multiple threads.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

from .errors import LexiconError


def normalize_lemma(lemma: str) -> str:
    """Lowercase, trim, and replace spaces with underscores."""
    return lemma.strip().lower().replace(" ", "_")


@dataclass(frozen=True)
class Synset:
    id: str
    lemmas: tuple[str, ...]
    gloss: str
    hypernyms: tuple[str, ...]
    pos: str = "n"

    def display_term(self) -> str:
        """First lemma with underscores turned back into spaces."""
        return self.lemmas[0].replace("_", " ")


@dataclass
class Lexicon:
    synsets: dict[str, Synset]
    hyponym_index: dict[str, list[str]] = field(default_factory=dict)
    lemma_index: dict[str, list[str]] = field(default_factory=dict)

    def __contains__(self, synset_id: str) -> bool:
        return synset_id in self.synsets

    def __len__(self) -> int:
        return len(self.synsets)

    def _require(self, synset_id: str) -> Synset:
        try:
            return self.synsets[synset_id]
        except KeyError:
            raise LexiconError(f"unknown synset id: {synset_id!r}") from None

    def ancestors(self, synset_id: str, steps: int) -> list[str]:
        """Walk up to `steps` hypernym hops, following the first-listed
        hypernym at every hop; shorter if a root is reached."""
        if steps < 0:
            raise ValueError("steps must be >= 0")
        node = self._require(synset_id)
        chain: list[str] = []
        for _ in range(steps):
            if not node.hypernyms:
                break
            parent_id = node.hypernyms[0]
            chain.append(parent_id)
            node = self.synsets[parent_id]
        return chain

    def hyponyms(self, synset_id: str, transitive: bool = False) -> set[str]:
        self._require(synset_id)
        direct = self.hyponym_index.get(synset_id, [])
        if not transitive:
            return set(direct)
        seen: set[str] = set()
        queue = deque(direct)
        while queue:
            child = queue.popleft()
            if child in seen:
                continue
            seen.add(child)
            queue.extend(self.hyponym_index.get(child, []))
        seen.discard(synset_id)
        return seen

    def hyponyms_bfs(self, synset_id: str) -> list[str]:
        """Transitive hyponyms in breadth-first, insertion order
        (deterministic given the lexicon file)."""
        self._require(synset_id)
        out: list[str] = []
        seen = {synset_id}
        queue = deque(self.hyponym_index.get(synset_id, []))
        while queue:
            child = queue.popleft()
            if child in seen:
                continue
            seen.add(child)
            out.append(child)
            queue.extend(self.hyponym_index.get(child, []))
        return out

    def siblings(self, synset_id: str) -> set[str]:
        """Union over all parents of the parents' direct children, minus
        the node itself."""
        node = self._require(synset_id)
        out: set[str] = set()
        for parent in node.hypernyms:
            out.update(self.hyponym_index.get(parent, []))
        out.discard(synset_id)
        return out

    def siblings_ordered(self, synset_id: str) -> list[str]:
        """Siblings with a deterministic order: parents in stored order,
        children in index order, first occurrence kept."""
        node = self._require(synset_id)
        out: list[str] = []
        seen = {synset_id}
        for parent in node.hypernyms:
            for child in self.hyponym_index.get(parent, []):
                if child not in seen:
                    seen.add(child)
                    out.append(child)
        return out

    def senses(self, lemma: str) -> list[tuple[str, str]]:
        """All (synset id, gloss) pairs for a lemma, lexicographic by id.
        Unknown lemmas yield an empty list."""
        key = normalize_lemma(lemma)
        ids = sorted(self.lemma_index.get(key, []))
        return [(sid, self.synsets[sid].gloss) for sid in ids]

    def intersection_audit(self) -> dict:
        """Count intersection roots: for every node with two or more
        hypernyms, the lowest common ancestor of each hypernym pair."""
        depth_cache: dict[str, int] = {}

        def depth(sid: str) -> int:
            # longest hypernym path up to a root; acyclicity is checked
            # at load so plain recursion with memoisation is safe
            if sid in depth_cache:
                return depth_cache[sid]
            parents = self.synsets[sid].hypernyms
            d = 0 if not parents else 1 + max(depth(p) for p in parents)
            depth_cache[sid] = d
            return d

        closure_cache: dict[str, frozenset[str]] = {}

        def closure(sid: str) -> frozenset[str]:
            if sid in closure_cache:
                return closure_cache[sid]
            acc = {sid}
            for p in self.synsets[sid].hypernyms:
                acc.update(closure(p))
            result = frozenset(acc)
            closure_cache[sid] = result
            return result

        roots: set[str] = set()
        for sid, syn in self.synsets.items():
            if len(syn.hypernyms) < 2:
                continue
            parents = list(syn.hypernyms)
            for i in range(len(parents)):
                for j in range(i + 1, len(parents)):
                    common = closure(parents[i]) & closure(parents[j])
                    if not common:
                        continue
                    lca = max(common, key=lambda n: (depth(n), n))
                    roots.add(lca)

        non_leaf = sum(1 for sid in self.synsets if self.hyponym_index.get(sid))
        ratio = len(roots) / non_leaf if non_leaf else 0.0
        return {
            "intersection_roots": len(roots),
            "non_leaf": non_leaf,
            "ratio": ratio,
        }


def load_lexicon(path: str | Path) -> Lexicon:
    """Load and validate a flat-format lexicon file.

    Raises LexiconError with a line number on parse problems, and after
    parsing on dangling hypernym ids or hypernym cycles.
    """
    path = Path(path)
    if not path.exists():
        raise LexiconError(f"lexicon file not found: {path}")

    synsets: dict[str, Synset] = {}
    hyponym_index: dict[str, list[str]] = {}
    lemma_index: dict[str, list[str]] = {}

    with path.open("r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise LexiconError(f"{path}:{lineno}: invalid JSON: {exc}") from None
            try:
                syn = Synset(
                    id=str(obj["id"]),
                    lemmas=tuple(str(x) for x in obj["lemmas"]),
                    gloss=str(obj.get("gloss", "")),
                    hypernyms=tuple(str(x) for x in obj.get("hypernyms", [])),
                    pos=str(obj.get("pos", "n")),
                )
            except (KeyError, TypeError) as exc:
                raise LexiconError(f"{path}:{lineno}: missing/invalid field: {exc}") from None
            if not syn.id:
                raise LexiconError(f"{path}:{lineno}: empty synset id")
            if not syn.lemmas:
                raise LexiconError(f"{path}:{lineno}: synset {syn.id!r} has no lemmas")
            if syn.id in syn.hypernyms:
                raise LexiconError(f"{path}:{lineno}: synset {syn.id!r} lists itself as hypernym")
            if syn.id in synsets:
                raise LexiconError(f"{path}:{lineno}: duplicate synset id {syn.id!r}")
            synsets[syn.id] = syn

    for syn in synsets.values():
        for parent in syn.hypernyms:
            if parent not in synsets:
                raise LexiconError(
                    f"synset {syn.id!r} references unknown hypernym {parent!r}"
                )
            hyponym_index.setdefault(parent, []).append(syn.id)
        for lemma in syn.lemmas:
            lemma_index.setdefault(normalize_lemma(lemma), []).append(syn.id)

    _check_acyclic(synsets)
    return Lexicon(synsets=synsets, hyponym_index=hyponym_index, lemma_index=lemma_index)


def _check_acyclic(synsets: dict[str, Synset]) -> None:
    """Iterative three-colour DFS over hypernym edges; reports one member
    of the first cycle found."""
    WHITE, GREY, BLACK = 0, 1, 2
    colour = {sid: WHITE for sid in synsets}
    for start in synsets:
        if colour[start] != WHITE:
            continue
        stack: list[tuple[str, int]] = [(start, 0)]
        colour[start] = GREY
        while stack:
            node, idx = stack[-1]
            parents = synsets[node].hypernyms
            if idx < len(parents):
                stack[-1] = (node, idx + 1)
                parent = parents[idx]
                if colour[parent] == GREY:
                    raise LexiconError(f"hypernym cycle detected through {parent!r}")
                if colour[parent] == WHITE:
                    colour[parent] = GREY
                    stack.append((parent, 0))
            else:
                colour[node] = BLACK
                stack.pop()
