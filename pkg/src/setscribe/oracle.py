"""Language/vision oracle contract with two implementations.

``HttpOracle`` talks the chat-completions wire format and requests
JSON-structured replies (one user message per attempt, at most one retry
on a malformed reply). ``ScriptedOracle`` replays a JSON fixture and
fails loudly on any call its script does not cover, which keeps engine
tests fully deterministic.
"""

from __future__ import annotations

import base64
import hashlib
import json
import os
import threading
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Protocol

import httpx

from .concept_graph import parse_network_text
from .errors import OracleError, ScriptError, UserError

API_KEY_ENV = "IS2T_API_KEY"
BASE_URL_ENV = "IS2T_BASE_URL"

_YES_NO_STARTS = ("is ", "are ", "do ", "does ")


@dataclass(frozen=True)
class QuestionPair:
    question_expert: str
    question_vqa: str

    def __post_init__(self):
        if not self.question_expert or not self.question_vqa:
            raise ValueError("both questions must be non-empty")
        if self.question_vqa.strip().lower().startswith(_YES_NO_STARTS):
            raise ValueError(f"VQA question looks yes/no: {self.question_vqa!r}")


@dataclass(frozen=True)
class VqaAnswer:
    text: str
    invalid: bool = False


@dataclass(frozen=True)
class Formulation:
    object: str
    new_predicates: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.object:
            raise ValueError("formulated object must be non-empty")
        deduped, seen = [], set()
        for p in self.new_predicates:
            if p and p.lower() not in seen:
                seen.add(p.lower())
                deduped.append(p)
        object.__setattr__(self, "new_predicates", tuple(deduped))


class Oracle(Protocol):
    def next_question(self, subject: str, predicate: str,
                      asked_log: list[QuestionPair], expertise: str) -> QuestionPair: ...

    def vqa(self, image_ref: str, question: str) -> VqaAnswer: ...

    def formulate(self, answers: list[VqaAnswer], subject: str, predicate: str) -> Formulation: ...

    def novelty_check(self, old_render: str, new_render: str) -> bool: ...

    def write_description(self, render: str) -> str: ...

    def captionize(self, description: str) -> str: ...

    def judge_equivalence(self, candidate: str, reference: str) -> bool: ...

    def disambiguate_sense(self, term: str, context_answers: list[str],
                           candidates: list[tuple[str, str]]) -> str: ...

    def propose_differences(self, render_a: str, render_b: str,
                            count: int, round_index: int) -> list[str]: ...


# ---------------- prompt templates ----------------

def load_prompt(name: str) -> str:
    return resources.files("setscribe.prompts").joinpath(name).read_text(encoding="utf-8")


def prompt_hashes() -> dict[str, str]:
    """sha256 of every template file; recorded in trace headers so prompt
    drift is detectable."""
    out = {}
    for entry in sorted(resources.files("setscribe.prompts").iterdir(), key=lambda e: e.name):
        if entry.name.endswith((".txt", ".json")):
            out[entry.name] = hashlib.sha256(entry.read_bytes()).hexdigest()
    return out


def render_hash(render: str) -> str:
    return hashlib.sha256(render.encode("utf-8")).hexdigest()[:12]


def _require_nonempty(value: str, what: str) -> None:
    if not value:
        raise ValueError(f"{what} must be non-empty")


def _single_candidate(candidates: list[tuple[str, str]]) -> str | None:
    if not candidates:
        raise ValueError("candidates must be non-empty")
    if len(candidates) == 1:
        return candidates[0][0]
    return None


# ---------------- scripted oracle ----------------

class ScriptedOracle:
    """Fixture-driven oracle. Keys are pipe-joined call signatures; a few
    positions accept the ``*`` wildcard (see each method). Any call the
    fixture does not cover raises ScriptError."""

    def __init__(self, fixture: dict | str | Path):
        if not isinstance(fixture, dict):
            fixture = json.loads(Path(fixture).read_text(encoding="utf-8"))
        self.table = fixture
        self._lock = threading.Lock()

    def _get(self, *keys: str):
        with self._lock:
            for key in keys:
                if key in self.table:
                    return self.table[key]
        raise ScriptError(f"scripted oracle has no entry for any of: {list(keys)}")

    def next_question(self, subject, predicate, asked_log, expertise):
        entries = self._get(f"next_question|{subject}|{predicate}")
        if isinstance(entries, dict):
            entries = [entries]
        asked_vqa = {q.question_vqa for q in asked_log}
        for entry in entries:
            if entry["question_vqa"] not in asked_vqa:
                return QuestionPair(entry["question_expert"], entry["question_vqa"])
        raise ScriptError(
            f"scripted questions exhausted for ({subject!r}, {predicate!r})"
        )

    def vqa(self, image_ref, question):
        entry = self._get(
            f"vqa|{image_ref}|{question}",
            f"vqa|{image_ref}|*",
            f"vqa|*|{question}",
            "vqa|*|*",
        )
        return VqaAnswer(text=entry.get("answer", ""), invalid=not entry.get("valid", True))

    def formulate(self, answers, subject, predicate):
        valid = [a for a in answers if not a.invalid]
        if not valid:
            raise ValueError("formulate requires at least one valid answer")
        entry = self._get(f"formulate|{subject}|{predicate}")
        return Formulation(entry["object"], tuple(entry.get("new_predicates", [])))

    def novelty_check(self, old_render, new_render):
        old_edges = set(parse_network_text(old_render))
        new_edges = set(parse_network_text(new_render))
        return bool(new_edges - old_edges)

    def write_description(self, render):
        _require_nonempty(render, "render")
        return str(self._get(f"write_description|{render_hash(render)}",
                             "write_description|*"))

    def captionize(self, description):
        _require_nonempty(description, "description")
        return str(self._get(f"captionize|{render_hash(description)}", "captionize|*"))

    def judge_equivalence(self, candidate, reference):
        _require_nonempty(candidate, "candidate")
        _require_nonempty(reference, "reference")
        with self._lock:
            entry = self.table.get(f"judge|{candidate}|{reference}")
        if entry is None:
            return candidate == reference
        if isinstance(entry, dict) and entry.get("error"):
            raise OracleError(f"scripted judge error for {candidate!r}")
        return bool(entry)

    def disambiguate_sense(self, term, context_answers, candidates):
        short = _single_candidate(candidates)
        if short is not None:
            return short
        chosen = str(self._get(f"disambiguate|{term}"))
        if chosen not in {sid for sid, _ in candidates}:
            raise OracleError(f"scripted sense {chosen!r} not among candidates for {term!r}")
        return chosen

    def propose_differences(self, render_a, render_b, count, round_index):
        return [str(x) for x in self._get(f"propose|{round_index}")]


# ---------------- HTTP oracle ----------------

@dataclass
class HttpOracleConfig:
    base_url: str = ""
    model: str = "gpt-4o-mini"
    timeout: float = 120.0
    api_key: str = ""

    def resolve(self) -> "HttpOracleConfig":
        base = self.base_url or os.environ.get(BASE_URL_ENV, "https://api.openai.com/v1")
        key = self.api_key or os.environ.get(API_KEY_ENV, "")
        return HttpOracleConfig(base.rstrip("/"), self.model, self.timeout, key)


class HttpOracle:
    def __init__(self, config: HttpOracleConfig | None = None,
                 transport: httpx.BaseTransport | None = None):
        self.config = (config or HttpOracleConfig()).resolve()
        headers = {}
        if self.config.api_key:
            headers["Authorization"] = f"Bearer {self.config.api_key}"
        self._client = httpx.Client(
            base_url=self.config.base_url,
            timeout=self.config.timeout,
            headers=headers,
            transport=transport,
        )

    def _chat(self, system: str, user_content, required_keys: tuple[str, ...],
              json_mode: bool = True) -> dict | str:
        """One POST per attempt, a single user message, at most one retry
        when the reply does not match the requested structure."""
        body = {
            "model": self.config.model,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user_content},
            ],
        }
        if json_mode:
            body["response_format"] = {"type": "json_object"}
        last_error = None
        for _ in range(2):
            try:
                resp = self._client.post("/chat/completions", json=body)
                resp.raise_for_status()
                content = resp.json()["choices"][0]["message"]["content"]
            except (httpx.HTTPError, KeyError, IndexError, json.JSONDecodeError) as exc:
                raise OracleError(f"oracle transport failure: {exc}") from exc
            if not json_mode:
                return content
            try:
                reply = json.loads(content)
                missing = [k for k in required_keys if k not in reply]
                if missing:
                    raise ValueError(f"reply missing keys {missing}")
                return reply
            except ValueError as exc:
                last_error = exc
        raise OracleError(f"oracle reply failed schema twice: {last_error}")

    def next_question(self, subject, predicate, asked_log, expertise):
        system = load_prompt("next_question.txt").format(
            expertise=expertise,
            jsonScheme_input=load_prompt("next_question_input.json"),
            jsonScheme_output=load_prompt("next_question_output.json"),
        )
        user = json.dumps({
            "QUESTION_BRANCH": f"{subject}.{predicate}?",
            "KEY_POINT": subject,
            "ATTRIBUTE": predicate,
            "log": [
                {"QUESTION_EXPERT": q.question_expert, "QUESTION_VQA": q.question_vqa}
                for q in asked_log
            ],
        }, indent=2)
        reply = self._chat(system, user, ("QUESTION_EXPERT", "QUESTION_VQA"))
        try:
            return QuestionPair(str(reply["QUESTION_EXPERT"]), str(reply["QUESTION_VQA"]))
        except ValueError as exc:
            raise OracleError(f"oracle produced an unusable question pair: {exc}") from exc

    _REFUSAL_MARKERS = ("i'm sorry", "i cannot", "can't assist", "unable to help")

    def vqa(self, image_ref, question):
        system = load_prompt("vqa.txt").format(question=question)
        user = [
            {"type": "text", "text": question},
            {"type": "image_url", "image_url": {"url": self._image_payload(image_ref)}},
        ]
        reply = self._chat(system, user, ("valid", "answer"))
        text = str(reply.get("answer", ""))
        invalid = not bool(reply.get("valid", True))
        if not invalid and any(m in text.lower() for m in self._REFUSAL_MARKERS):
            invalid = True
        return VqaAnswer(text=text, invalid=invalid)

    @staticmethod
    def _image_payload(image_ref: str) -> str:
        if str(image_ref).startswith("data:"):
            return str(image_ref)
        path = Path(image_ref)
        if not path.is_file():
            raise OracleError(f"image not readable: {image_ref!r}")
        suffix = path.suffix.lstrip(".").lower() or "png"
        payload = base64.b64encode(path.read_bytes()).decode("ascii")
        return f"data:image/{suffix};base64,{payload}"

    def formulate(self, answers, subject, predicate):
        valid = [a for a in answers if not a.invalid]
        if not valid:
            raise ValueError("formulate requires at least one valid answer")
        system = load_prompt("formulate.txt").format(
            expertise="visual content analysis",
            subject=subject,
            predicate=predicate,
            answers="\n".join(f"- {a.text}" for a in valid),
        )
        reply = self._chat(system, "Summarize and complete.", ("OBJECT",))
        return Formulation(str(reply["OBJECT"]),
                           tuple(str(p) for p in reply.get("NEW_PREDICATES", [])))

    def novelty_check(self, old_render, new_render):
        system = load_prompt("novelty.txt").format(before=old_render, after=new_render)
        reply = self._chat(system, "Compare the graphs.", ("ADDS_INFORMATION",))
        return bool(reply["ADDS_INFORMATION"])

    def write_description(self, render):
        _require_nonempty(render, "render")
        system = load_prompt("write_description.txt").format(
            jsonScheme_input=load_prompt("write_description_input.json"),
            jsonScheme_output=load_prompt("write_description_output.json"),
        )
        user = json.dumps({"GRAPH": render}, indent=2)
        reply = self._chat(system, user, ("DESCRIPTION",))
        return str(reply["DESCRIPTION"])

    def captionize(self, description):
        _require_nonempty(description, "description")
        system = "Summarize image-set descriptions into captions. Reply in JSON as {\"CAPTION\": \"...\"}."
        user = load_prompt("captionize.txt").format(description=description)
        reply = self._chat(system, user, ("CAPTION",))
        return str(reply["CAPTION"])

    def judge_equivalence(self, candidate, reference):
        _require_nonempty(candidate, "candidate")
        _require_nonempty(reference, "reference")
        # the judge prompt demands a bare True/False reply, so this is the
        # one operation that skips JSON mode
        user = load_prompt("judge.txt").format(hypothesis=candidate, reference=reference)
        content = self._chat("You are an impartial judge.", user, (), json_mode=False)
        verdict = str(content).strip().rstrip(".")
        if verdict not in ("True", "False"):
            raise OracleError(f"judge reply is not True/False: {content!r}")
        return verdict == "True"

    def disambiguate_sense(self, term, context_answers, candidates):
        short = _single_candidate(candidates)
        if short is not None:
            return short
        system = load_prompt("disambiguate.txt").format(
            term=term,
            context="\n".join(f"- {a}" for a in context_answers),
            candidates="\n".join(f"- {sid}: {gloss}" for sid, gloss in candidates),
        )
        reply = self._chat(system, "Select the candidate.", ("SYNSET_ID",))
        chosen = str(reply["SYNSET_ID"])
        if chosen not in {sid for sid, _ in candidates}:
            raise OracleError(f"oracle sense {chosen!r} not among candidates for {term!r}")
        return chosen

    def propose_differences(self, render_a, render_b, count, round_index):
        system = load_prompt("propose.txt").format(
            graph_a=render_a, graph_b=render_b, count=count,
        )
        reply = self._chat(system, f"Round {round_index}: propose the differences.",
                           ("DIFFERENCES",))
        return [str(x) for x in reply["DIFFERENCES"]]


def oracle_from_spec(spec: str) -> Oracle:
    """Parse a CLI oracle spec: ``scripted:<fixture.json>`` or ``http``."""
    if spec.startswith("scripted:"):
        return ScriptedOracle(spec.partition(":")[2])
    if spec == "http":
        return HttpOracle()
    raise UserError(f"unknown oracle spec {spec!r} (expected scripted:<fixture> or http)")
