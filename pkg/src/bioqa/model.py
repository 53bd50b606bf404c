"""Domain types and bit-exact reading/writing of BioASQ-format files.

Covers question/gold files, phase submissions, and the validation pass
that checks submissions against the format invariants (optionally against
corpus text for snippet offsets). Offsets are end-exclusive character
indices over Unicode code points.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Sequence

PUBMED_URL_PREFIX = "http://www.ncbi.nlm.nih.gov/pubmed/"

SECTIONS = ("title", "abstract")

DEFAULT_DOCUMENT_CAP = 10
DEFAULT_SNIPPET_CAP = 10
IDEAL_WORD_LIMIT = 200
FACTOID_GROUP_CAP = 5
LIST_GROUP_CAP = 100


class QuestionFileError(ValueError):
    """A question/gold file violates the envelope contract."""

    def __init__(self, message: str, entry_index: Optional[int] = None):
        self.entry_index = entry_index
        if entry_index is not None:
            message = f"entry {entry_index}: {message}"
        super().__init__(message)


class MalformedEnvelopeError(QuestionFileError):
    pass


class UnknownQuestionTypeError(QuestionFileError):
    pass


class DuplicateQuestionIdError(QuestionFileError):
    pass


class SubmissionError(ValueError):
    pass


class CapExceededError(SubmissionError):
    pass


class MissingExactAnswerError(SubmissionError):
    pass


class QuestionType(enum.Enum):
    YESNO = "yesno"
    FACTOID = "factoid"
    LIST = "list"
    SUMMARY = "summary"

    @classmethod
    def parse(cls, raw: str, entry_index: Optional[int] = None) -> "QuestionType":
        for member in cls:
            if member.value == raw:
                return member
        raise UnknownQuestionTypeError(f"unknown question type {raw!r}", entry_index)


class Phase(enum.Enum):
    A = "a"
    A_PLUS = "aplus"
    B = "b"

    @classmethod
    def parse(cls, raw: str) -> "Phase":
        for member in cls:
            if member.value == raw:
                return member
        raise ValueError(f"unknown phase {raw!r} (expected a|aplus|b)")


@dataclass(frozen=True)
class Snippet:
    """A verbatim span of one section of a document.

    ``text`` must equal the exact substring [begin_offset, end_offset) of
    the named section; cross-section snippets are not representable.
    """

    pmid: str
    section: str
    begin_offset: int
    end_offset: int
    text: str

    def __post_init__(self):
        if not self.pmid:
            raise ValueError("snippet pmid must be nonempty")
        if self.section not in SECTIONS:
            raise ValueError(f"snippet section must be one of {SECTIONS}, got {self.section!r}")
        if self.begin_offset < 0:
            raise ValueError("snippet begin_offset must be >= 0")
        if self.end_offset <= self.begin_offset:
            raise ValueError("snippet end_offset must be > begin_offset")
        if not self.text:
            raise ValueError("snippet text must be nonempty")

    @property
    def overlap_key(self) -> tuple:
        return (self.pmid, self.section, self.begin_offset, self.end_offset)


@dataclass(frozen=True)
class DocumentRef:
    pmid: str
    rank: int
    score: Optional[float] = None

    def __post_init__(self):
        if not self.pmid:
            raise ValueError("document pmid must be nonempty")
        if self.rank < 1:
            raise ValueError("document rank is 1-based")


@dataclass(frozen=True)
class GoldExact:
    yesno_answer: Optional[str] = None
    factoid_synonym_groups: Optional[tuple[tuple[str, ...], ...]] = None
    list_entity_groups: Optional[tuple[tuple[str, ...], ...]] = None

    def __post_init__(self):
        if self.yesno_answer is not None and self.yesno_answer not in ("yes", "no"):
            raise ValueError(f"gold yes/no answer must be 'yes' or 'no', got {self.yesno_answer!r}")
        for groups in (self.factoid_synonym_groups, self.list_entity_groups):
            if groups is not None and any(len(g) == 0 for g in groups):
                raise ValueError("gold synonym groups must be nonempty")


@dataclass(frozen=True)
class Question:
    id: str
    body: str
    qtype: QuestionType
    gold_documents: Optional[tuple[str, ...]] = None
    gold_snippets: Optional[tuple[Snippet, ...]] = None
    gold_exact: Optional[GoldExact] = None
    gold_ideal: Optional[tuple[str, ...]] = None

    def __post_init__(self):
        if not self.id:
            raise ValueError("question id must be nonempty")
        if not self.body.strip():
            raise ValueError("question body must be nonempty")


@dataclass(frozen=True)
class AnswerSet:
    """Typed answers for one question.

    ``qtype`` may be None for answers parsed from a bare submission file
    (factoid and list payloads are indistinguishable on the wire); the
    per-type invariants are then checked by the validator against gold.
    """

    question_id: str
    ideal: str
    qtype: Optional[QuestionType] = None
    yesno: Optional[str] = None
    entities: Optional[tuple[tuple[str, ...], ...]] = None

    def __post_init__(self):
        if self.yesno is not None and self.yesno not in ("yes", "no"):
            raise ValueError(f"yes/no answer must be exactly 'yes' or 'no', got {self.yesno!r}")
        if self.entities is not None and len(self.entities) == 0:
            raise ValueError("entity answer must contain at least one group")

    @property
    def exact_present(self) -> bool:
        return self.yesno is not None or self.entities is not None


@dataclass(frozen=True)
class SubmissionEntry:
    question_id: str
    documents: tuple[DocumentRef, ...] = ()
    snippets: tuple[Snippet, ...] = ()
    answers: Optional[AnswerSet] = None


@dataclass(frozen=True)
class Violation:
    code: str
    question_id: Optional[str]
    detail: str
    severity: str = "error"

    def __str__(self) -> str:
        where = f" [{self.question_id}]" if self.question_id else ""
        return f"{self.severity}: {self.code}{where}: {self.detail}"


def pmid_from_identifier(identifier: str) -> str:
    """Accept a bare pmid or the PubMed URL form and return the pmid."""
    identifier = identifier.strip()
    if identifier.startswith(PUBMED_URL_PREFIX):
        return identifier[len(PUBMED_URL_PREFIX):]
    # tolerate the https variant seen in some gold files
    https_prefix = PUBMED_URL_PREFIX.replace("http://", "https://")
    if identifier.startswith(https_prefix):
        return identifier[len(https_prefix):]
    return identifier


def document_url(pmid: str) -> str:
    return PUBMED_URL_PREFIX + pmid


def _coerce_groups(raw, entry_index: Optional[int] = None) -> tuple[tuple[str, ...], ...]:
    """Normalize wire entity answers: nested lists stay groups, flat strings
    become single-synonym groups."""
    if isinstance(raw, str):
        return ((raw,),)
    if not isinstance(raw, list):
        raise QuestionFileError(f"entity answer must be a list, got {type(raw).__name__}", entry_index)
    groups = []
    for item in raw:
        if isinstance(item, str):
            groups.append((item,))
        elif isinstance(item, list) and all(isinstance(s, str) for s in item):
            groups.append(tuple(item))
        else:
            raise QuestionFileError("entity answer entries must be strings or lists of strings", entry_index)
    return tuple(groups)


def _snippet_from_obj(obj: dict, entry_index: Optional[int] = None) -> Snippet:
    try:
        begin_section = obj["beginSection"]
        end_section = obj["endSection"]
        if begin_section != end_section:
            raise QuestionFileError(
                f"cross-section snippet ({begin_section!r} != {end_section!r})", entry_index)
        return Snippet(
            pmid=pmid_from_identifier(obj["document"]),
            section=begin_section,
            begin_offset=obj["offsetInBeginSection"],
            end_offset=obj["offsetInEndSection"],
            text=obj["text"],
        )
    except KeyError as exc:
        raise QuestionFileError(f"snippet missing key {exc}", entry_index) from exc
    except (TypeError, ValueError) as exc:
        if isinstance(exc, QuestionFileError):
            raise
        raise QuestionFileError(f"bad snippet: {exc}", entry_index) from exc


def _snippet_to_obj(snippet: Snippet) -> dict:
    return {
        "document": document_url(snippet.pmid),
        "offsetInBeginSection": snippet.begin_offset,
        "offsetInEndSection": snippet.end_offset,
        "beginSection": snippet.section,
        "endSection": snippet.section,
        "text": snippet.text,
    }


def _gold_exact_from_obj(raw, qtype: QuestionType, entry_index: Optional[int]) -> GoldExact:
    if qtype is QuestionType.YESNO:
        if not isinstance(raw, str) or raw.strip().lower() not in ("yes", "no"):
            raise QuestionFileError(f"gold yes/no exact answer must be yes|no, got {raw!r}", entry_index)
        return GoldExact(yesno_answer=raw.strip().lower())
    groups = _coerce_groups(raw, entry_index)
    if qtype is QuestionType.FACTOID:
        return GoldExact(factoid_synonym_groups=groups)
    return GoldExact(list_entity_groups=groups)


def _load_envelope(raw: bytes) -> list:
    try:
        data = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedEnvelopeError(f"not a UTF-8 JSON document: {exc}") from exc
    if not isinstance(data, dict) or "questions" not in data:
        raise MalformedEnvelopeError('missing top-level "questions" key')
    questions = data["questions"]
    if not isinstance(questions, list):
        raise MalformedEnvelopeError('"questions" must be a list')
    return questions


def parse_questions(raw: bytes, expect_gold: bool = False) -> list[Question]:
    """Parse a BioASQ question (test) or gold file.

    Gold fields are populated only when ``expect_gold`` is set and the
    entry carries them. Errors report the offending entry index.
    """
    entries = _load_envelope(raw)
    seen: set[str] = set()
    questions: list[Question] = []
    for i, obj in enumerate(entries):
        if not isinstance(obj, dict):
            raise MalformedEnvelopeError("entry is not an object", i)
        try:
            qid = obj["id"]
            body = obj["body"]
            type_raw = obj["type"]
        except KeyError as exc:
            raise MalformedEnvelopeError(f"entry missing key {exc}", i) from exc
        if not isinstance(qid, str) or not qid:
            raise MalformedEnvelopeError("id must be a nonempty string", i)
        if qid in seen:
            raise DuplicateQuestionIdError(f"duplicate question id {qid!r}", i)
        seen.add(qid)
        qtype = QuestionType.parse(type_raw, i)

        gold_documents = gold_snippets = gold_exact = gold_ideal = None
        if expect_gold:
            if "documents" in obj:
                gold_documents = tuple(pmid_from_identifier(d) for d in obj["documents"])
            if "snippets" in obj:
                gold_snippets = tuple(_snippet_from_obj(s, i) for s in obj["snippets"])
            if "exact_answer" in obj and qtype is not QuestionType.SUMMARY:
                gold_exact = _gold_exact_from_obj(obj["exact_answer"], qtype, i)
            if "ideal_answer" in obj:
                ideal = obj["ideal_answer"]
                if isinstance(ideal, str):
                    ideal = [ideal]
                gold_ideal = tuple(ideal)
        try:
            questions.append(Question(
                id=qid, body=body, qtype=qtype,
                gold_documents=gold_documents, gold_snippets=gold_snippets,
                gold_exact=gold_exact, gold_ideal=gold_ideal,
            ))
        except (TypeError, ValueError) as exc:
            raise MalformedEnvelopeError(str(exc), i) from exc
    return questions


def _exact_answer_to_obj(answers: AnswerSet):
    if answers.yesno is not None:
        return answers.yesno
    if answers.entities is not None:
        return [list(group) for group in answers.entities]
    return None


def _entry_to_obj(entry: SubmissionEntry, phase: Phase,
                  document_cap: int, snippet_cap: int) -> dict:
    if len(entry.documents) > document_cap:
        raise CapExceededError(
            f"question {entry.question_id}: {len(entry.documents)} documents exceeds cap {document_cap}")
    if len(entry.snippets) > snippet_cap:
        raise CapExceededError(
            f"question {entry.question_id}: {len(entry.snippets)} snippets exceeds cap {snippet_cap}")
    ranks = [d.rank for d in entry.documents]
    if ranks != list(range(1, len(ranks) + 1)):
        raise SubmissionError(f"question {entry.question_id}: document ranks must be 1..n in order")

    obj: dict = {"id": entry.question_id}
    obj["documents"] = [document_url(d.pmid) for d in entry.documents]
    obj["snippets"] = [_snippet_to_obj(s) for s in entry.snippets]
    if phase in (Phase.A_PLUS, Phase.B):
        answers = entry.answers
        if answers is None:
            raise MissingExactAnswerError(
                f"question {entry.question_id}: phase {phase.value} requires answers")
        if answers.qtype is not None and answers.qtype is not QuestionType.SUMMARY \
                and not answers.exact_present:
            raise MissingExactAnswerError(
                f"question {entry.question_id}: missing exact answer for {answers.qtype.value} question")
        exact = _exact_answer_to_obj(answers)
        if exact is not None:
            obj["exact_answer"] = exact
        obj["ideal_answer"] = answers.ideal
    return obj


def serialize_submission(entries: Sequence[SubmissionEntry], phase: Phase, *,
                         document_cap: int = DEFAULT_DOCUMENT_CAP,
                         snippet_cap: int = DEFAULT_SNIPPET_CAP) -> bytes:
    """Canonical submission serialization: fixed key order, stable list
    order, no trailing whitespace; identical inputs give identical bytes."""
    payload = {"questions": [
        _entry_to_obj(e, phase, document_cap, snippet_cap) for e in entries
    ]}
    text = json.dumps(payload, indent=2, separators=(",", ": "), ensure_ascii=False)
    return (text + "\n").encode("utf-8")


def _answers_from_obj(obj: dict, qid: str,
                      qtype: Optional[QuestionType]) -> Optional[AnswerSet]:
    if "exact_answer" not in obj and "ideal_answer" not in obj:
        return None
    ideal = obj.get("ideal_answer", "")
    if isinstance(ideal, list):
        ideal = ideal[0] if ideal else ""
    yesno = None
    entities = None
    if "exact_answer" in obj:
        exact = obj["exact_answer"]
        if isinstance(exact, str):
            yesno = exact
        else:
            entities = _coerce_groups(exact)
    return AnswerSet(question_id=qid, ideal=ideal, qtype=qtype,
                     yesno=yesno, entities=entities)


def parse_submission(raw: bytes,
                     qtypes: Optional[Mapping[str, QuestionType]] = None
                     ) -> list[SubmissionEntry]:
    """Parse a submission file back into entries (inverse of
    serialize_submission; document scores are not on the wire)."""
    entries = _load_envelope(raw)
    out: list[SubmissionEntry] = []
    for i, obj in enumerate(entries):
        if not isinstance(obj, dict) or "id" not in obj:
            raise MalformedEnvelopeError("submission entry missing id", i)
        qid = obj["id"]
        documents = tuple(
            DocumentRef(pmid=pmid_from_identifier(d), rank=r)
            for r, d in enumerate(obj.get("documents", ()), start=1)
        )
        snippets = tuple(_snippet_from_obj(s, i) for s in obj.get("snippets", ()))
        qtype = qtypes.get(qid) if qtypes else None
        answers = _answers_from_obj(obj, qid, qtype)
        out.append(SubmissionEntry(question_id=qid, documents=documents,
                                   snippets=snippets, answers=answers))
    return out


CorpusLookup = Callable[[str], Optional[object]]


def _word_count(text: str) -> int:
    return len(text.split())


def validate_submission(raw: bytes, phase: Phase,
                        corpus_lookup: Optional[CorpusLookup] = None, *,
                        document_cap: int = DEFAULT_DOCUMENT_CAP,
                        snippet_cap: int = DEFAULT_SNIPPET_CAP,
                        qtypes: Optional[Mapping[str, QuestionType]] = None
                        ) -> list[Violation]:
    """Check a submission file against the format invariants.

    Returns violations instead of raising; an unreadable file yields the
    single FileUnreadable violation. With ``corpus_lookup`` (pmid ->
    object with .title/.abstract), snippet offsets are checked against
    the actual section text.
    """
    violations: list[Violation] = []
    try:
        entries = _load_envelope(raw)
    except MalformedEnvelopeError as exc:
        return [Violation("FileUnreadable", None, str(exc))]

    seen_ids: set[str] = set()
    for i, obj in enumerate(entries):
        if not isinstance(obj, dict) or not obj.get("id"):
            violations.append(Violation("MalformedEntry", None, f"entry {i} has no id"))
            continue
        qid = obj["id"]
        if qid in seen_ids:
            violations.append(Violation("DuplicateQuestionId", qid, "duplicate entry"))
        seen_ids.add(qid)

        documents = obj.get("documents", [])
        if not isinstance(documents, list):
            violations.append(Violation("MalformedEntry", qid, "documents must be a list"))
            documents = []
        if phase is Phase.A and len(documents) > document_cap:
            violations.append(Violation(
                "CapExceeded", qid, f"{len(documents)} documents > cap {document_cap}"))
        pmids = [pmid_from_identifier(d) for d in documents if isinstance(d, str)]
        if len(set(pmids)) != len(pmids):
            violations.append(Violation("DuplicateDocument", qid, "documents contain duplicates"))

        snippets = obj.get("snippets", [])
        if not isinstance(snippets, list):
            violations.append(Violation("MalformedEntry", qid, "snippets must be a list"))
            snippets = []
        if phase is Phase.A and len(snippets) > snippet_cap:
            violations.append(Violation(
                "CapExceeded", qid, f"{len(snippets)} snippets > cap {snippet_cap}"))
        for idx, s_obj in enumerate(snippets):
            try:
                snippet = _snippet_from_obj(s_obj if isinstance(s_obj, dict) else {}, i)
            except QuestionFileError as exc:
                violations.append(Violation("MalformedSnippet", qid, f"snippet {idx}: {exc}"))
                continue
            if corpus_lookup is not None:
                doc = corpus_lookup(snippet.pmid)
                if doc is None:
                    violations.append(Violation(
                        "UnknownDocument", qid, f"snippet {idx}: pmid {snippet.pmid} not in corpus"))
                    continue
                section_text = getattr(doc, snippet.section)
                actual = section_text[snippet.begin_offset:snippet.end_offset]
                if actual != snippet.text:
                    violations.append(Violation(
                        "SnippetTextMismatch", qid,
                        f"snippet {idx}: text does not equal section substring "
                        f"[{snippet.begin_offset}, {snippet.end_offset})"))

        if "exact_answer" in obj:
            exact = obj["exact_answer"]
            qtype = qtypes.get(qid) if qtypes else None
            if isinstance(exact, str):
                if exact not in ("yes", "no"):
                    violations.append(Violation(
                        "InvalidYesNoToken", qid, f"exact answer {exact!r} is not lowercase yes|no"))
            else:
                try:
                    groups = _coerce_groups(exact)
                except QuestionFileError as exc:
                    violations.append(Violation("MalformedExactAnswer", qid, str(exc)))
                    groups = ()
                if qtype is QuestionType.FACTOID and len(groups) > FACTOID_GROUP_CAP:
                    violations.append(Violation(
                        "TooManyFactoidGroups", qid, f"{len(groups)} groups > {FACTOID_GROUP_CAP}"))
                if qtype is QuestionType.LIST and len(groups) > LIST_GROUP_CAP:
                    violations.append(Violation(
                        "TooManyListGroups", qid, f"{len(groups)} groups > {LIST_GROUP_CAP}"))
                for group in groups:
                    if any(not entity.strip() for entity in group):
                        violations.append(Violation(
                            "EmptyEntity", qid, "entity string empty after trimming"))
                        break

        if "ideal_answer" in obj:
            ideal = obj["ideal_answer"]
            if isinstance(ideal, str) and _word_count(ideal) > IDEAL_WORD_LIMIT:
                violations.append(Violation(
                    "IdealTooLong", qid,
                    f"{_word_count(ideal)} words > {IDEAL_WORD_LIMIT}", severity="warning"))
    return violations
