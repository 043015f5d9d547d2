"""Iterative describe loop: sample, question, formulate, expand, verify,
update the concept graph, and stop.

Every iteration appends one JSON line to the trace, preceded by a header
that pins config, seed, store checksum and prompt-template hashes. Given
a deterministic oracle and a fixed seed, two runs produce byte-identical
traces, and a run resumed from a partial trace finishes identically to an
uninterrupted one.
"""

from __future__ import annotations

import hashlib
import json
import logging
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

from .concept_graph import ConceptGraph, Triplet
from .errors import OracleError, TraceError, UserError
from .hypotheses import Hypothesis, LabelSets, expand, verify_chain
from .lexicon import Lexicon
from .oracle import Oracle, QuestionPair, VqaAnswer, prompt_hashes
from .store import EmbeddingStore
from .verifier import VerificationResult, verify

log = logging.getLogger(__name__)

OUTCOME_COMMITTED = "committed"
OUTCOME_INVALID = "discarded_invalid"
OUTCOME_UNVERIFIED = "discarded_unverified"
OUTCOME_NO_NOVELTY = "discarded_no_novelty"

STOP_EXHAUSTED = "exhausted"
STOP_EPSILON = "epsilon_discards"

TRACE_VERSION = 1


@dataclass(frozen=True)
class EngineConfig:
    m: int = 10
    alpha: float = 0.8
    k: int = 1
    theta: int = 10
    delta: int = 2
    epsilon: int = 5
    max_examples: int = 50
    seed: int = 0
    expertise: str = "visual content analysis"
    text_template: str = "{term}"

    def __post_init__(self):
        if self.m < 1:
            raise UserError("m must be >= 1")
        if not (0.0 < self.alpha <= 1.0):
            raise UserError("alpha must be in (0, 1]")
        if self.k < 1:
            raise UserError("k must be >= 1")
        if not (1 <= self.theta <= self.m):
            raise UserError("theta must satisfy 1 <= theta <= m")
        if self.delta < 0:
            raise UserError("delta must be >= 0")
        if self.epsilon < 1:
            raise UserError("epsilon must be >= 1")
        if self.max_examples < 1:
            raise UserError("max_examples must be >= 1")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "EngineConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(obj) - known
        if unknown:
            raise UserError(f"unknown config fields: {sorted(unknown)}")
        return cls(**obj)

    def config_hash(self) -> str:
        payload = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass
class IterationRecord:
    index: int
    sampled_ids: list[str]
    subject: str
    predicate: str
    question: QuestionPair
    answers: list[VqaAnswer]
    formulation: dict | None
    levels: list[dict] | None
    outcome: str
    committed: Triplet | None
    rng_state: list

    def to_json(self) -> dict:
        return {
            "type": "iteration",
            "index": self.index,
            "sampled_ids": list(self.sampled_ids),
            "subject": self.subject,
            "predicate": self.predicate,
            "question": {
                "expert": self.question.question_expert,
                "vqa": self.question.question_vqa,
            },
            "answers": [{"text": a.text, "invalid": a.invalid} for a in self.answers],
            "formulation": self.formulation,
            "levels": self.levels,
            "outcome": self.outcome,
            "committed": self.committed.as_list() if self.committed else None,
            "rng_state": self.rng_state,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "IterationRecord":
        return cls(
            index=obj["index"],
            sampled_ids=list(obj["sampled_ids"]),
            subject=obj["subject"],
            predicate=obj["predicate"],
            question=QuestionPair(obj["question"]["expert"], obj["question"]["vqa"]),
            answers=[VqaAnswer(a["text"], a["invalid"]) for a in obj["answers"]],
            formulation=obj["formulation"],
            levels=obj["levels"],
            outcome=obj["outcome"],
            committed=Triplet(*obj["committed"]) if obj["committed"] else None,
            rng_state=obj["rng_state"],
        )


@dataclass
class RunResult:
    description: str
    graph: ConceptGraph
    trace: list[IterationRecord]
    T: int
    stop_reason: str


def _dump_line(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _serialize_rng(rng: random.Random) -> list:
    version, internal, gauss = rng.getstate()
    return [version, list(internal), gauss]


def _restore_rng(state: list) -> random.Random:
    rng = random.Random()
    rng.setstate((state[0], tuple(state[1]), state[2]))
    return rng


def _ids_hash(image_ids: list[str]) -> str:
    joined = "\x00".join(image_ids)
    return hashlib.sha256(joined.encode("utf-8")).hexdigest()


def _serialize_result(result: VerificationResult | None) -> dict | None:
    if result is None:
        return None
    return {
        "positive_count": result.positive_count,
        "total": result.total,
        "rate": result.rate,
        "accepted": result.accepted,
        "alpha": result.alpha,
    }


class _TraceWriter:
    def __init__(self, path: Path | None, mode: str = "w"):
        self._fh = path.open(mode, encoding="utf-8") if path else None

    def write(self, obj: dict) -> None:
        if self._fh:
            self._fh.write(_dump_line(obj) + "\n")
            self._fh.flush()

    def close(self) -> None:
        if self._fh:
            self._fh.close()


def _resolve_sense(term: str, context: list[str], lex: Lexicon, oracle: Oracle) -> str | None:
    """Map the formulated object onto a lexicon synset; None on a miss.
    Raises OracleError when a multi-sense pick comes back unusable."""
    candidates = lex.senses(term)
    if not candidates:
        return None
    if len(candidates) == 1:
        return candidates[0][0]
    return oracle.disambiguate_sense(term, context, candidates)


def describe(
    image_ids: list[str],
    store: EmbeddingStore,
    oracle: Oracle,
    lex: Lexicon,
    cfg: EngineConfig,
    embedder,
    trace_path: str | Path | None = None,
) -> RunResult:
    """Run the full loop over a fresh graph and return the description,
    the final graph, and the complete iteration trace."""
    image_ids = list(image_ids)
    if not image_ids:
        raise UserError("image_ids must be non-empty")
    missing = [i for i in image_ids if i not in set(store.ids)]
    if missing:
        raise UserError(f"store does not cover image ids: {missing[:5]}")

    trace_path = Path(trace_path) if trace_path else None
    writer = _TraceWriter(trace_path, "w")
    writer.write(_header(image_ids, store, cfg))

    rng = random.Random(cfg.seed)
    graph = ConceptGraph.new()
    return _run_loop(
        image_ids, store, oracle, lex, cfg, embedder, writer,
        rng=rng, graph=graph, asked={}, records=[], consecutive=0, next_index=1,
    )


def resume(
    trace_path: str | Path,
    image_ids: list[str],
    store: EmbeddingStore,
    oracle: Oracle,
    lex: Lexicon,
    cfg: EngineConfig,
    embedder,
) -> RunResult:
    """Continue a run from a partial trace; a completed trace returns its
    stored result unchanged."""
    trace_path = Path(trace_path)
    header, records, result_line = _read_trace(trace_path)

    if header.get("config_hash") != cfg.config_hash():
        raise TraceError("trace header config hash does not match the supplied config")
    if header.get("store_checksum") != store.checksum:
        raise TraceError("trace header store checksum does not match the supplied store")
    if header.get("image_ids_hash") != _ids_hash(list(image_ids)):
        raise TraceError("trace header image ids do not match the supplied ids")

    if result_line is not None:
        return RunResult(
            description=result_line["description"],
            graph=ConceptGraph.from_json(result_line["graph"]),
            trace=records,
            T=result_line["T"],
            stop_reason=result_line["stop_reason"],
        )

    graph = ConceptGraph.new()
    asked: dict[str, list[QuestionPair]] = {}
    consecutive = 0
    for rec in records:
        asked.setdefault(rec.subject, []).append(rec.question)
        if rec.outcome == OUTCOME_COMMITTED:
            graph.commit(rec.committed, list(rec.formulation["new_predicates"]))
            consecutive = 0
        else:
            if rec.outcome == OUTCOME_NO_NOVELTY:
                graph.mark_explored(rec.subject, rec.predicate)
            consecutive += 1

    if records:
        rng = _restore_rng(records[-1].rng_state)
        next_index = records[-1].index + 1
    else:
        rng = random.Random(cfg.seed)
        next_index = 1

    writer = _TraceWriter(trace_path, "a")
    return _run_loop(
        list(image_ids), store, oracle, lex, cfg, embedder, writer,
        rng=rng, graph=graph, asked=asked, records=records,
        consecutive=consecutive, next_index=next_index,
    )


def _header(image_ids: list[str], store: EmbeddingStore, cfg: EngineConfig) -> dict:
    return {
        "type": "header",
        "version": TRACE_VERSION,
        "config": cfg.to_json(),
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "store_checksum": store.checksum,
        "image_ids_hash": _ids_hash(image_ids),
        "n_images": len(image_ids),
        "prompt_hashes": prompt_hashes(),
    }


def _read_trace(path: Path) -> tuple[dict, list[IterationRecord], dict | None]:
    if not path.exists():
        raise TraceError(f"trace file not found: {path}")
    header = None
    records: list[IterationRecord] = []
    result_line = None
    with path.open("r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise TraceError(f"{path}:{lineno}: corrupt trace line: {exc}") from None
            kind = obj.get("type")
            if kind == "header":
                header = obj
            elif kind == "iteration":
                records.append(IterationRecord.from_json(obj))
            elif kind == "result":
                result_line = obj
            else:
                raise TraceError(f"{path}:{lineno}: unknown trace line type {kind!r}")
    if header is None:
        raise TraceError(f"{path}: trace has no header line")
    return header, records, result_line


def _run_loop(
    image_ids, store, oracle, lex, cfg, embedder, writer,
    *, rng, graph, asked, records, consecutive, next_index,
) -> RunResult:
    def verifier_fn(h: Hypothesis, labels: LabelSets) -> VerificationResult:
        return verify(store, labels, embedder, cfg.k, cfg.alpha, cfg.text_template)

    sample_size = min(cfg.m, len(image_ids))
    stop_reason = None
    index = next_index
    try:
        while True:
            sample = rng.sample(image_ids, sample_size)
            frontier = graph.select_frontier(rng)
            if frontier is None:
                stop_reason = STOP_EXHAUSTED
                break
            subject, predicate = frontier

            question = oracle.next_question(
                subject, predicate, asked.get(subject, []), cfg.expertise
            )
            asked.setdefault(subject, []).append(question)

            with ThreadPoolExecutor(max_workers=min(8, sample_size)) as pool:
                answers = list(pool.map(
                    lambda ref: oracle.vqa(ref, question.question_vqa), sample
                ))
            invalid_count = sum(1 for a in answers if a.invalid)
            valid = [a for a in answers if not a.invalid]

            formulation_json = None
            levels_json = None
            committed = None

            if invalid_count >= cfg.theta or not valid:
                outcome = OUTCOME_INVALID
            else:
                formulation = oracle.formulate(valid, subject, predicate)
                formulation_json = {
                    "object": formulation.object,
                    "new_predicates": list(formulation.new_predicates),
                }
                try:
                    synset = _resolve_sense(
                        formulation.object, [a.text for a in valid], lex, oracle
                    )
                except OracleError as exc:
                    log.warning("sense selection failed, discarding iteration: %s", exc)
                    outcome = OUTCOME_UNVERIFIED
                    levels_json = []
                else:
                    h0 = Hypothesis(
                        triplet=Triplet(subject, predicate, formulation.object),
                        object_synset=synset,
                        level=0,
                    )
                    chain = expand(h0, lex, cfg.delta)
                    walk = verify_chain(chain, verifier_fn, lex, cfg.max_examples)
                    levels_json = [
                        {
                            "level": lv.hypothesis.level,
                            "triplet": lv.hypothesis.triplet.as_list(),
                            "object_synset": lv.hypothesis.object_synset,
                            "positives": list(lv.labels.positives),
                            "negatives": list(lv.labels.negatives),
                            "skipped": lv.skipped,
                            "result": _serialize_result(lv.result),
                        }
                        for lv in walk.levels
                    ]
                    if walk.verified is None:
                        outcome = OUTCOME_UNVERIFIED
                    else:
                        candidate = graph.copy()
                        candidate.commit(
                            walk.verified.triplet, list(formulation.new_predicates)
                        )
                        if oracle.novelty_check(graph.render(), candidate.render()):
                            graph = candidate
                            committed = walk.verified.triplet
                            outcome = OUTCOME_COMMITTED
                        else:
                            graph.mark_explored(subject, predicate)
                            outcome = OUTCOME_NO_NOVELTY

            consecutive = 0 if outcome == OUTCOME_COMMITTED else consecutive + 1
            record = IterationRecord(
                index=index,
                sampled_ids=sample,
                subject=subject,
                predicate=predicate,
                question=question,
                answers=answers,
                formulation=formulation_json,
                levels=levels_json,
                outcome=outcome,
                committed=committed,
                rng_state=_serialize_rng(rng),
            )
            records.append(record)
            writer.write(record.to_json())
            index += 1

            if consecutive >= cfg.epsilon:
                stop_reason = STOP_EPSILON
                break

        description = oracle.write_description(graph.render())
        writer.write({
            "type": "result",
            "stop_reason": stop_reason,
            "description": description,
            "graph": graph.to_json(),
            "T": len(records),
        })
        return RunResult(
            description=description,
            graph=graph,
            trace=records,
            T=len(records),
            stop_reason=stop_reason,
        )
    finally:
        writer.close()
