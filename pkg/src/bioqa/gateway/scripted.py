"""Test-double providers: rule-scripted responses and a gold-driven
oracle that answers every pipeline stage from gold data attached to the
question id embedded in the prompt (used for end-to-end upper-bound
runs).
"""
from __future__ import annotations

import json
import re
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from ..model import Question
from ..pipeline.prompts import (
    MARKER_DRAFT_FACTOID,
    MARKER_DRAFT_LIST,
    MARKER_DRAFT_SUMMARY,
    MARKER_DRAFT_YESNO,
    MARKER_QUERY_FEEDBACK,
    MARKER_QUERY_GEN,
    MARKER_RERANK,
    MARKER_SNIPPET_EXTRACT,
    PMID_RE,
    QUESTION_ID_RE,
    REFINEMENT_INSTRUCTION,
)
from .core import ChatRequest, ChatResponse, NoFixtureMatched


@dataclass(frozen=True)
class FixtureRule:
    match: str
    response: str
    finish_reason: str = "stop"
    regex: bool = False
    model: Optional[str] = None  # restricts the rule to one model id

    def matches(self, text: str, model_id: str = "") -> bool:
        if self.model is not None and self.model != model_id:
            return False
        if self.regex:
            return re.search(self.match, text) is not None
        return self.match in text


class _CountingProvider:
    """Shared bookkeeping: every call recorded, concurrent in-flight
    calls tracked so tests can assert concurrency bounds."""

    def __init__(self, provider_id: str):
        self.provider_id = provider_id
        self.calls: list[ChatRequest] = []
        self.max_in_flight_seen = 0
        self._in_flight = 0
        self._lock = threading.Lock()

    def _enter(self, request: ChatRequest):
        with self._lock:
            self.calls.append(request)
            self._in_flight += 1
            self.max_in_flight_seen = max(self.max_in_flight_seen, self._in_flight)

    def _exit(self):
        with self._lock:
            self._in_flight -= 1

    def send(self, request: ChatRequest) -> ChatResponse:
        self._enter(request)
        try:
            return self._respond(request)
        finally:
            self._exit()

    def _respond(self, request: ChatRequest) -> ChatResponse:
        raise NotImplementedError


class ScriptedProvider(_CountingProvider):
    """First matching rule wins; no match is an error, never a default."""

    def __init__(self, rules: Sequence[FixtureRule], *, provider_id: str = "scripted"):
        super().__init__(provider_id)
        self.rules = list(rules)

    @classmethod
    def from_json(cls, path, *, provider_id: str = "scripted") -> "ScriptedProvider":
        raw = json.loads(Path(path).read_text("utf-8"))
        rules = [FixtureRule(match=r["match"], response=r["response"],
                             finish_reason=r.get("finish_reason", "stop"),
                             regex=r.get("regex", False),
                             model=r.get("model"))
                 for r in raw]
        return cls(rules, provider_id=provider_id)

    def _respond(self, request: ChatRequest) -> ChatResponse:
        prompt = request.last_user_text
        for rule in self.rules:
            if rule.matches(prompt, request.model_id):
                return ChatResponse(text=rule.response, finish_reason=rule.finish_reason,
                                    completion_tokens=len(rule.response.split()))
        raise NoFixtureMatched(
            f"no fixture rule matches request to {request.provider_id}/{request.model_id}: "
            f"{prompt[:120]!r}")


def scripted_complete(fixtures: Sequence[FixtureRule], request: ChatRequest) -> ChatResponse:
    return ScriptedProvider(fixtures).send(request)


class OracleProvider(_CountingProvider):
    """Answers every stage from gold data for the question named in the
    prompt: the generated query is an OR of the gold documents' exact
    titles, snippet spans are the gold spans, reranks are identity, and
    answers are the gold answers. Gives the pipeline its upper bound."""

    def __init__(self, questions: Sequence[Question], *, provider_id: str = "oracle"):
        super().__init__(provider_id)
        self.questions = {question.id: question for question in questions}
        self._doc_titles: dict[str, dict[str, list]] = {}

    def _question(self, prompt: str) -> Question:
        match = QUESTION_ID_RE.search(prompt)
        if not match or match.group(1) not in self.questions:
            raise NoFixtureMatched("oracle: no known question id in prompt")
        return self.questions[match.group(1)]

    def _respond(self, request: ChatRequest) -> ChatResponse:
        prompt = request.last_user_text
        text = self._script(prompt)
        return ChatResponse(text=text, completion_tokens=len(text.split()))

    def _script(self, prompt: str) -> str:
        question = self._question(prompt)
        # refinement prompts embed the original instructions, so check the
        # refinement marker first and re-answer the embedded stage
        if REFINEMENT_INSTRUCTION in prompt:
            return self._stage_answer(question, prompt)
        if MARKER_QUERY_FEEDBACK in prompt:
            return "The query already targets the right documents. No changes needed."
        if MARKER_SNIPPET_EXTRACT in prompt:
            return self._snippet_lines(question, prompt)
        if MARKER_RERANK in prompt:
            count = len(re.findall(r"^\d+\. ", prompt, flags=re.MULTILINE))
            return ",".join(str(i) for i in range(1, count + 1)) if count else "1"
        if "Evaluate the draft" in prompt or "Evaluate the provided summary" in prompt:
            return "The draft is correct. No changes needed."
        return self._stage_answer(question, prompt)

    def _stage_answer(self, question: Question, prompt: str) -> str:
        if MARKER_QUERY_GEN in prompt:
            return self._gold_query(question)
        if MARKER_DRAFT_YESNO in prompt:
            gold = question.gold_exact
            return gold.yesno_answer if gold and gold.yesno_answer else "yes"
        if MARKER_DRAFT_FACTOID in prompt:
            gold = question.gold_exact
            groups = gold.factoid_synonym_groups if gold else None
            entities = [group[0] for group in (groups or ())][:5] or ["unknown"]
            return json.dumps(entities, ensure_ascii=False)
        if MARKER_DRAFT_LIST in prompt:
            gold = question.gold_exact
            groups = gold.list_entity_groups if gold else None
            entities = [group[0] for group in (groups or ())] or ["unknown"]
            return json.dumps(entities, ensure_ascii=False)
        if MARKER_DRAFT_SUMMARY in prompt:
            if question.gold_ideal:
                return question.gold_ideal[0]
            return f"There is no reference answer recorded for: {question.body}"
        raise NoFixtureMatched(f"oracle: unrecognized stage for question {question.id}")

    def _gold_query(self, question: Question) -> str:
        self._ensure_titles()
        titles = []
        for pmid in question.gold_documents or ():
            title = self._titles_by_pmid.get(pmid)
            if title:
                titles.append(f'"{title}"')
        if not titles:
            return question.body
        return " OR ".join(titles)

    def _ensure_titles(self):
        if hasattr(self, "_titles_by_pmid"):
            return
        titles: dict[str, str] = {}
        for question in self.questions.values():
            for snippet in question.gold_snippets or ():
                if snippet.section == "title":
                    titles[snippet.pmid] = snippet.text
        self._titles_by_pmid = titles

    def attach_corpus(self, documents) -> "OracleProvider":
        """Register document titles so gold queries can quote them even
        when gold snippets live in abstracts."""
        self._ensure_titles()
        for doc in documents:
            self._titles_by_pmid[doc.pmid] = doc.title
        return self

    def _snippet_lines(self, question: Question, prompt: str) -> str:
        match = PMID_RE.search(prompt)
        if not match:
            return "NONE"
        pmid = match.group(1)
        lines = [f"{snippet.section}: {snippet.text}"
                 for snippet in (question.gold_snippets or ())
                 if snippet.pmid == pmid]
        return "\n".join(lines) if lines else "NONE"


class FailingProvider(_CountingProvider):
    """Raises on any contact; proves replay mode stays off the network."""

    def __init__(self, provider_id: str = "failing"):
        super().__init__(provider_id)

    def _respond(self, request: ChatRequest) -> ChatResponse:
        raise AssertionError("provider was contacted; replay mode must not reach providers")
