"""The staged pipeline: query generation (baseline / few-shot), one-round
query feedback, retrieval, snippet extraction, reranking, and typed
answer drafting with the two-step feedback-then-refine protocol.

Every stage degrades deterministically on bad model output (fallback
query, kept initial query, dropped spans, unchanged order, kept draft)
and records what happened as pipeline events; nothing is silently
defaulted.
"""
from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from typing import Optional, Protocol, Sequence, Union

from .. import query as q
from ..model import DocumentRef, Question, QuestionType, Snippet, AnswerSet
from ..retrieval.analysis import analyze
from ..retrieval.index import CorpusDocument, SearchHit
from .prompts import PromptSet, default_fewshot_examples

log = logging.getLogger(__name__)


# --- strategies and configuration -------------------------------------------

@dataclass(frozen=True)
class Baseline:
    pass


@dataclass(frozen=True)
class FewShot:
    k: int
    examples: tuple[tuple[str, str], ...]

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("few-shot k must be positive")
        if self.k != len(self.examples):
            raise ValueError(f"few-shot k={self.k} but {len(self.examples)} examples")

    @classmethod
    def default(cls, k: int = 10) -> "FewShot":
        return cls(k=k, examples=default_fewshot_examples(k))


@dataclass(frozen=True)
class Feedback:
    pass


Strategy = Union[Baseline, FewShot, Feedback]


@dataclass(frozen=True)
class SystemConfig:
    """One named (model, strategy) cell of the configuration matrix."""

    name: str
    query_model: tuple[str, str]  # (provider_id, model_id)
    answer_model: tuple[str, str]
    # critiques default to self-feedback; set this for cross-model feedback
    feedback_model: Optional[tuple[str, str]] = None
    query_strategy: Strategy = Baseline()
    answer_strategy: Strategy = Baseline()
    prompts: PromptSet = field(default_factory=PromptSet.default)
    retrieval_k: int = 50
    snippet_context_k: int = 20
    document_cap: int = 10
    snippet_cap: int = 10
    max_snippets_per_doc: int = 3
    feedback_context: str = "titles"  # or "titles+abstracts"
    temperature: float = 0.0
    max_output_tokens: int = 1024

    def __post_init__(self):
        if self.retrieval_k < 1:
            raise ValueError("retrieval_k must be positive")
        if self.retrieval_k < self.snippet_cap:
            raise ValueError("retrieval_k must be >= the snippet cap")
        if self.snippet_context_k < 1:
            raise ValueError("snippet_context_k must be positive")
        if self.feedback_context not in ("titles", "titles+abstracts"):
            raise ValueError("feedback_context must be 'titles' or 'titles+abstracts'")


class StageCaller(Protocol):
    def call(self, stage: str, prompt: str, *, role: str = "answer") -> str: ...


class SearchBackend(Protocol):
    def search(self, ast: q.QueryAst, k: int) -> list[SearchHit]: ...
    def get_document(self, pmid: str) -> Optional[CorpusDocument]: ...


@dataclass(frozen=True)
class PipelineEvent:
    kind: str
    stage: str
    question_id: str
    detail: str = ""


@dataclass
class PipelineContext:
    config: SystemConfig
    caller: StageCaller
    backend: Optional[SearchBackend] = None
    events: list[PipelineEvent] = field(default_factory=list)

    def emit(self, kind: str, stage: str, question_id: str, detail: str = ""):
        event = PipelineEvent(kind=kind, stage=stage, question_id=question_id, detail=detail)
        self.events.append(event)
        log.debug("pipeline event %s", event)


class ExtractionFailedError(Exception):
    """No payload could be extracted from the model response."""

    def __init__(self, qtype: QuestionType, raw_text: str):
        self.qtype = qtype
        self.raw_text = raw_text
        super().__init__(f"could not extract a {qtype.value} answer from model output")


@dataclass(frozen=True)
class DraftAnswer:
    qtype: QuestionType
    raw_model_text: str
    yesno: Optional[str] = None
    entities: Optional[tuple[tuple[str, ...], ...]] = None
    ideal_text: Optional[str] = None

    def payload_repr(self) -> str:
        if self.qtype is QuestionType.YESNO:
            return self.yesno or ""
        if self.qtype is QuestionType.SUMMARY:
            return self.ideal_text or ""
        return json.dumps([list(g) for g in (self.entities or ())], ensure_ascii=False)


@dataclass(frozen=True)
class PhaseAResult:
    documents: tuple[DocumentRef, ...]       # capped at the submission limit
    snippets: tuple[Snippet, ...]            # capped at the submission limit
    ranked_snippets: tuple[Snippet, ...]     # full ranking, feeds phase A+/B context


# --- rendering helpers -------------------------------------------------------

def render_snippet_block(snippets: Sequence[Snippet]) -> str:
    if not snippets:
        return "NO SNIPPETS"
    return "\n".join(f"{i}. [{s.pmid}|{s.section}] {s.text}"
                     for i, s in enumerate(snippets, start=1))


def render_results_block(docs: Sequence[CorpusDocument], mode: str = "titles") -> str:
    if not docs:
        return "NO RESULTS"
    lines = []
    for i, doc in enumerate(docs, start=1):
        if mode == "titles+abstracts" and doc.abstract:
            lines.append(f"{i}. {doc.title}\n{doc.abstract}")
        else:
            lines.append(f"{i}. {doc.title}")
    return "\n".join(lines)


def render_examples_block(strategy: Strategy) -> str:
    if not isinstance(strategy, FewShot):
        return ""
    blocks = [f"Q: {question}\nQuery: {query}" for question, query in strategy.examples]
    return "Here are example questions with their queries:\n\n" + "\n\n".join(blocks) + "\n\n"


def _first_nonempty_line(text: str) -> str:
    for line in text.splitlines():
        if line.strip():
            return line.strip()
    return ""


# --- query generation --------------------------------------------------------

def fallback_query(question: Question, *, max_terms: int = 10) -> q.QueryAst:
    """AND of the question body's content tokens (lowercased, stopwords
    removed, unstemmed; the index analyzer stems query terms itself)."""
    tokens = []
    for token in analyze(question.body, stem=False):
        if token not in tokens:
            tokens.append(token)
        if len(tokens) >= max_terms:
            break
    if not tokens:
        return q.Phrase(question.body.strip())
    if len(tokens) == 1:
        return q.Term(tokens[0])
    return q.And(tuple(q.Term(t) for t in tokens))


def _query_gen_prompt(question: Question, ctx: PipelineContext, strategy: Strategy) -> str:
    return ctx.config.prompts["query_gen"].render(
        question_id=question.id,
        question=question.body,
        examples=render_examples_block(strategy),
    )


def generate_query(question: Question, ctx: PipelineContext,
                   strategy: Optional[Strategy] = None) -> tuple[q.QueryAst, q.RepairLog]:
    """Prompt the query model, take the first nonempty response line,
    repair and parse it. Irreparable output engages the fallback query."""
    strategy = strategy if strategy is not None else ctx.config.query_strategy
    if isinstance(strategy, Feedback):
        raise ValueError("generate_query handles Baseline/FewShot; "
                         "run_phase_a drives the Feedback strategy")
    prompt = _query_gen_prompt(question, ctx, strategy)
    response = ctx.caller.call("query_gen", prompt, role="query")
    line = _first_nonempty_line(response)
    if not line:
        ctx.emit("FallbackEngaged", "query_gen", question.id, "empty model response")
        ast = fallback_query(question)
        rendered = q.render_query(ast)
        return ast, q.RepairLog(original=response, repaired=rendered,
                                actions=(q.RepairAction.DROPPED_UNSUPPORTED_TOKEN,))
    try:
        repaired, repair_log = q.repair_query(line)
    except q.IrreparableQueryError:
        ctx.emit("FallbackEngaged", "query_gen", question.id, f"irreparable query {line!r}")
        ast = fallback_query(question)
        rendered = q.render_query(ast)
        return ast, q.RepairLog(original=line, repaired=rendered,
                                actions=(q.RepairAction.DROPPED_UNSUPPORTED_TOKEN,))
    return q.parse_query(repaired), repair_log


def refine_query_with_feedback(question: Question, initial: q.QueryAst,
                               ctx: PipelineContext) -> q.QueryAst:
    """One feedback round on the initial query: show the top-10 results,
    collect a critique, ask for a revision under the fixed refinement
    instruction. An unusable revision keeps the initial query."""
    config = ctx.config
    backend = ctx.backend
    if backend is None:
        raise ValueError("query feedback needs a search backend")
    hits = backend.search(initial, config.retrieval_k)
    top_docs = []
    for hit in hits[:10]:
        doc = backend.get_document(hit.pmid)
        if doc is not None:
            top_docs.append(doc)
    rendered_query = q.render_query(initial)
    feedback_prompt = config.prompts["query_feedback"].render(
        question_id=question.id,
        question=question.body,
        draft=rendered_query,
        results=render_results_block(top_docs, config.feedback_context),
    )
    critique = ctx.caller.call("query_feedback", feedback_prompt, role="query_feedback")
    refine_prompt = config.prompts["refine"].render(
        original_prompt=_query_gen_prompt(question, ctx, Baseline()),
        draft=rendered_query,
        feedback_response=critique,
    )
    response = ctx.caller.call("query_refine", refine_prompt, role="query")
    line = _first_nonempty_line(response)
    if not line:
        ctx.emit("RefinementDiscarded", "query_refine", question.id, "empty revision")
        return initial
    try:
        repaired, _ = q.repair_query(line)
        return q.parse_query(repaired)
    except (q.IrreparableQueryError, q.ParseError) as exc:
        ctx.emit("RefinementDiscarded", "query_refine", question.id, str(exc))
        return initial


# --- snippet extraction --------------------------------------------------------

_SPAN_LINE_RE = re.compile(r"^\s*(title|abstract)\s*:\s*(.+?)\s*$", re.IGNORECASE)
_WS_RUN_RE = re.compile(r"\s+")


def _normalized_with_map(text: str) -> tuple[str, list[int]]:
    """Collapse whitespace runs to single spaces; map each normalized
    character back to its original index."""
    chars: list[str] = []
    mapping: list[int] = []
    in_ws = False
    for i, ch in enumerate(text):
        if ch.isspace():
            in_ws = True
            continue
        if in_ws and chars:
            chars.append(" ")
            mapping.append(i - 1)
        in_ws = False
        chars.append(ch)
        mapping.append(i)
    return "".join(chars), mapping


def locate_span(section_text: str, span: str) -> Optional[tuple[int, int]]:
    """Find the span in the section: exact substring first, then a
    whitespace-normalized match with offsets recomputed on the original."""
    idx = section_text.find(span)
    if idx >= 0:
        return idx, idx + len(span)
    norm_span = _WS_RUN_RE.sub(" ", span).strip()
    if not norm_span:
        return None
    norm_text, mapping = _normalized_with_map(section_text)
    j = norm_text.find(norm_span)
    if j < 0:
        return None
    begin = mapping[j]
    end = mapping[j + len(norm_span) - 1] + 1
    return begin, end


def extract_snippets(question: Question, docs: Sequence[CorpusDocument],
                     ctx: PipelineContext) -> list[Snippet]:
    """Ask the model for verbatim spans per document, locate each span in
    its named section, and emit exact-offset snippets; unlocatable spans
    are dropped with an event."""
    config = ctx.config
    snippets: list[Snippet] = []
    for doc in docs:
        prompt = config.prompts["snippet_extract"].render(
            question_id=question.id,
            pmid=doc.pmid,
            title=doc.title,
            abstract=doc.abstract,
            question=question.body,
        )
        response = ctx.caller.call("snippet_extract", prompt, role="answer")
        taken = 0
        for line in response.splitlines():
            if taken >= config.max_snippets_per_doc:
                break
            stripped = line.strip()
            if not stripped or stripped.upper() == "NONE":
                continue
            match = _SPAN_LINE_RE.match(stripped)
            if not match:
                ctx.emit("DropLogged", "snippet_extract", question.id,
                         f"pmid {doc.pmid}: unlabeled line {stripped[:60]!r}")
                continue
            section = match.group(1).lower()
            span = match.group(2)
            section_text = doc.section(section)
            located = locate_span(section_text, span)
            if located is None:
                ctx.emit("DropLogged", "snippet_extract", question.id,
                         f"pmid {doc.pmid}: span not found in {section}: {span[:60]!r}")
                continue
            begin, end = located
            snippets.append(Snippet(
                pmid=doc.pmid, section=section,
                begin_offset=begin, end_offset=end,
                text=section_text[begin:end],
            ))
            taken += 1
    return snippets


# --- reranking ---------------------------------------------------------------

def _item_label(item) -> str:
    if isinstance(item, Snippet):
        return item.text
    if isinstance(item, CorpusDocument):
        return item.title
    if isinstance(item, DocumentRef):
        return item.pmid
    return str(item)


def rerank(question: Question, items: Sequence, ctx: PipelineContext,
           *, kind: str = "items") -> list:
    """One rerank prompt over the numbered items; the response must be a
    permutation of 1..n or the order is left unchanged. Never uses a
    feedback round."""
    items = list(items)
    if not items:
        return items
    block = "\n".join(f"{i}. {_item_label(item)}" for i, item in enumerate(items, start=1))
    prompt = ctx.config.prompts["rerank"].render(
        question_id=question.id, question=question.body, results=block)
    response = ctx.caller.call(f"rerank_{kind}", prompt, role="answer")
    numbers = [int(tok) for tok in re.findall(r"\d+", response)]
    if sorted(numbers) != list(range(1, len(items) + 1)):
        ctx.emit("InvalidPermutation", f"rerank_{kind}", question.id,
                 f"got {numbers!r} for {len(items)} items")
        return items
    return [items[i - 1] for i in numbers]


# --- answer drafting -----------------------------------------------------------

_YESNO_TOKEN_RE = re.compile(r"\b(yes|no)\b", re.IGNORECASE)


def extract_yesno(text: str) -> Optional[str]:
    match = _YESNO_TOKEN_RE.search(text)
    return match.group(1).lower() if match else None


def _balanced_list_slice(text: str, start: int) -> Optional[str]:
    depth = 0
    in_string = False
    i = start
    n = len(text)
    while i < n:
        ch = text[i]
        if in_string:
            if ch == "\\":
                i += 2
                continue
            if ch == '"':
                in_string = False
        elif ch == '"':
            in_string = True
        elif ch == "[":
            depth += 1
        elif ch == "]":
            depth -= 1
            if depth == 0:
                return text[start:i + 1]
        i += 1
    return None


def extract_entity_groups(text: str) -> Optional[tuple[tuple[str, ...], ...]]:
    """First well-formed JSON list literal in the text, normalized to
    synonym groups (flat strings become single-synonym groups)."""
    for match in re.finditer(r"\[", text):
        candidate = _balanced_list_slice(text, match.start())
        if candidate is None:
            continue
        try:
            value = json.loads(candidate)
        except json.JSONDecodeError:
            continue
        if not isinstance(value, list) or not value:
            continue
        groups: list[tuple[str, ...]] = []
        well_formed = True
        for item in value:
            if isinstance(item, str):
                if item.strip():
                    groups.append((item.strip(),))
            elif isinstance(item, list) and item and all(isinstance(s, str) for s in item):
                synonyms = tuple(s.strip() for s in item if s.strip())
                if synonyms:
                    groups.append(synonyms)
            else:
                well_formed = False
                break
        if well_formed and groups:
            return tuple(groups)
    return None


def truncate_words(text: str, limit: int) -> str:
    words = text.split()
    if len(words) <= limit:
        return text.strip()
    return " ".join(words[:limit])


def _extract_draft(kind: QuestionType, raw: str) -> DraftAnswer:
    if kind is QuestionType.YESNO:
        token = extract_yesno(raw)
        if token is None:
            raise ExtractionFailedError(kind, raw)
        return DraftAnswer(qtype=kind, raw_model_text=raw, yesno=token)
    if kind in (QuestionType.FACTOID, QuestionType.LIST):
        groups = extract_entity_groups(raw)
        if groups is None:
            raise ExtractionFailedError(kind, raw)
        cap = 5 if kind is QuestionType.FACTOID else 100
        return DraftAnswer(qtype=kind, raw_model_text=raw, entities=groups[:cap])
    ideal = truncate_words(raw, 200)
    if not ideal:
        raise ExtractionFailedError(kind, raw)
    return DraftAnswer(qtype=kind, raw_model_text=raw, ideal_text=ideal)


def _draft_prompt(question: Question, snippets: Sequence[Snippet],
                  ctx: PipelineContext, kind: QuestionType) -> str:
    return ctx.config.prompts.draft(kind).render(
        question_id=question.id,
        question=question.body,
        snippets=render_snippet_block(snippets),
    )


def draft_answer(question: Question, snippets: Sequence[Snippet],
                 ctx: PipelineContext, kind: Optional[QuestionType] = None) -> DraftAnswer:
    """Draft an answer of the given kind (defaults to the question's own
    type; run_phase_a_plus also drafts a summary-kind ideal answer for
    every question)."""
    kind = kind or question.qtype
    if not snippets:
        ctx.emit("EmptySnippetContext", f"draft_{kind.value}", question.id,
                 "answering from the question alone")
    prompt = _draft_prompt(question, snippets, ctx, kind)
    raw = ctx.caller.call(f"draft_{kind.value}", prompt, role="answer")
    return _extract_draft(kind, raw)


def feedback_then_refine(question: Question, draft: DraftAnswer,
                         snippets: Sequence[Snippet], ctx: PipelineContext) -> DraftAnswer:
    """One feedback round on a draft: collect a critique with the
    type-specific instruction, then request a revision under the fixed
    refinement block and re-extract it. An unextractable revision keeps
    the draft."""
    kind = draft.qtype
    config = ctx.config
    feedback_prompt = config.prompts.feedback(kind).render(
        question_id=question.id,
        question=question.body,
        snippets=render_snippet_block(snippets),
        draft=draft.payload_repr(),
    )
    feedback_text = ctx.caller.call(f"feedback_{kind.value}", feedback_prompt,
                                    role="answer_feedback")
    refine_prompt = config.prompts["refine"].render(
        original_prompt=_draft_prompt(question, snippets, ctx, kind),
        draft=draft.payload_repr(),
        feedback_response=feedback_text,
    )
    final_raw = ctx.caller.call(f"refine_{kind.value}", refine_prompt, role="answer")
    try:
        return _extract_draft(kind, final_raw)
    except ExtractionFailedError:
        ctx.emit("RefinementDiscarded", f"refine_{kind.value}", question.id,
                 "final response unextractable; draft stands")
        return draft


# --- phases ------------------------------------------------------------------

def run_phase_a(question: Question, ctx: PipelineContext) -> PhaseAResult:
    """Query per strategy, search, extract snippets over the top-10
    documents, rerank documents and snippets separately, truncate to the
    submission caps."""
    config = ctx.config
    if ctx.backend is None:
        raise ValueError("phase A needs a search backend")
    strategy = config.query_strategy
    initial_strategy = Baseline() if isinstance(strategy, Feedback) else strategy
    ast, _ = generate_query(question, ctx, strategy=initial_strategy)
    if isinstance(strategy, Feedback):
        ast = refine_query_with_feedback(question, ast, ctx)

    hits = ctx.backend.search(ast, config.retrieval_k)
    top_docs = []
    for hit in hits[:10]:
        doc = ctx.backend.get_document(hit.pmid)
        if doc is not None:
            top_docs.append(doc)

    snippets = extract_snippets(question, top_docs, ctx) if top_docs else []
    ranked_docs = rerank(question, top_docs, ctx, kind="documents") if len(top_docs) > 1 else top_docs
    ranked_snippets = rerank(question, snippets, ctx, kind="snippets") if len(snippets) > 1 else snippets

    documents = tuple(
        DocumentRef(pmid=doc.pmid, rank=rank)
        for rank, doc in enumerate(ranked_docs[:config.document_cap], start=1)
    )
    return PhaseAResult(
        documents=documents,
        snippets=tuple(ranked_snippets[:config.snippet_cap]),
        ranked_snippets=tuple(ranked_snippets),
    )


def _answer_over_context(question: Question, context: Sequence[Snippet],
                         ctx: PipelineContext) -> AnswerSet:
    config = ctx.config
    feedback_on = isinstance(config.answer_strategy, Feedback)

    yesno = None
    entities = None
    if question.qtype is not QuestionType.SUMMARY:
        exact_draft = draft_answer(question, context, ctx)
        if feedback_on:
            exact_draft = feedback_then_refine(question, exact_draft, context, ctx)
        yesno = exact_draft.yesno
        entities = exact_draft.entities

    ideal_draft = draft_answer(question, context, ctx, kind=QuestionType.SUMMARY)
    if feedback_on:
        ideal_draft = feedback_then_refine(question, ideal_draft, context, ctx)

    return AnswerSet(
        question_id=question.id,
        qtype=question.qtype,
        ideal=ideal_draft.ideal_text or "",
        yesno=yesno,
        entities=entities,
    )


def run_phase_a_plus(question: Question, ctx: PipelineContext,
                     phase_a: PhaseAResult) -> AnswerSet:
    """Answer over the top snippet_context_k snippets retrieved in
    phase A (exact answer per question type plus an ideal answer)."""
    context = list(phase_a.ranked_snippets[:ctx.config.snippet_context_k])
    return _answer_over_context(question, context, ctx)


def run_phase_b(question: Question, ctx: PipelineContext, phase_a: PhaseAResult,
                gold_snippets: Sequence[Snippet]) -> AnswerSet:
    """Answer over the deduplicated union of gold snippets (first) and
    the top snippet_context_k retrieved snippets."""
    context: list[Snippet] = []
    seen = set()
    retrieved = phase_a.ranked_snippets[:ctx.config.snippet_context_k]
    for snippet in (*gold_snippets, *retrieved):
        if snippet.overlap_key in seen:
            continue
        seen.add(snippet.overlap_key)
        context.append(snippet)
    return _answer_over_context(question, context, ctx)
