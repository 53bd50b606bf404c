"""Embedded inverted index: positional postings over title/abstract,
boolean matching for the query AST, BM25 scoring (k1=1.2, b=0.75).

The index is build-then-freeze: single writer during ingest, immutable
afterwards, safe for concurrent readers. Serialization is canonical, so
the same input stream yields bit-identical index files.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional

from .. import query as q
from .analysis import analyze, analyzer_fingerprint

log = logging.getLogger(__name__)

FIELDS = ("title", "abstract")

BM25_K1 = 1.2
BM25_B = 0.75

INDEX_FORMAT_VERSION = 1

# sentinel for clauses that analysis erased (pure stopwords): they are
# ignored by the surrounding operator rather than matching anything
_IGNORED = None


@dataclass(frozen=True)
class CorpusDocument:
    pmid: str
    title: str
    abstract: str = ""

    def __post_init__(self):
        if not self.pmid:
            raise ValueError("corpus document pmid must be nonempty")
        if not self.title:
            raise ValueError("corpus document title must be nonempty")

    def section(self, name: str) -> str:
        if name == "title":
            return self.title
        if name == "abstract":
            return self.abstract
        raise KeyError(name)


@dataclass(frozen=True)
class SearchHit:
    pmid: str
    score: float
    rank: int

    def __post_init__(self):
        if self.score < 0:
            raise ValueError("hit score must be >= 0")
        if self.rank < 1:
            raise ValueError("hit rank is 1-based")


class CorpusRecordError(ValueError):
    def __init__(self, line_number: int, message: str):
        self.line_number = line_number
        super().__init__(f"line {line_number}: {message}")


def read_corpus_jsonl(lines: Iterable[str], *, strict: bool = False) -> Iterator[CorpusDocument]:
    """Yield documents from line-delimited JSON records
    {"pmid":..., "title":..., "abstract":...}; bad lines are skipped with
    a logged warning (or raised when strict)."""
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
            doc = CorpusDocument(pmid=str(obj["pmid"]), title=obj["title"],
                                 abstract=obj.get("abstract", "") or "")
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            err = CorpusRecordError(lineno, str(exc))
            if strict:
                raise err from exc
            log.warning("skipping unreadable corpus record: %s", err)
            continue
        yield doc


class Index:
    def __init__(self, *, stem: bool = True):
        self._stem = stem
        self.fingerprint = analyzer_fingerprint(stem=stem)
        self._pmids: list[str] = []
        self._docs: dict[str, CorpusDocument] = {}
        # term -> field -> list of (ordinal, positions tuple), ordinal-sorted
        self._postings: dict[str, dict[str, list[tuple[int, tuple[int, ...]]]]] = {}
        self._field_lengths: dict[str, list[int]] = {f: [] for f in FIELDS}
        self._frozen = False

    # --- construction ------------------------------------------------------

    @classmethod
    def build(cls, documents: Iterable[CorpusDocument], *, stem: bool = True) -> "Index":
        index = cls(stem=stem)
        docs: dict[str, CorpusDocument] = {}
        for doc in documents:
            if doc.pmid in docs:
                log.warning("duplicate pmid %s: last record wins", doc.pmid)
            docs[doc.pmid] = doc
        for doc in docs.values():
            index._add(doc)
        index._frozen = True
        return index

    def _add(self, doc: CorpusDocument):
        ordinal = len(self._pmids)
        self._pmids.append(doc.pmid)
        self._docs[doc.pmid] = doc
        for field in FIELDS:
            tokens = analyze(doc.section(field), stem=self._stem)
            self._field_lengths[field].append(len(tokens))
            positions: dict[str, list[int]] = {}
            for pos, token in enumerate(tokens):
                positions.setdefault(token, []).append(pos)
            for token, pos_list in positions.items():
                self._postings.setdefault(token, {}).setdefault(field, []) \
                    .append((ordinal, tuple(pos_list)))

    # --- stats ---------------------------------------------------------------

    @property
    def doc_count(self) -> int:
        return len(self._pmids)

    @property
    def term_count(self) -> int:
        return len(self._postings)

    def get_document(self, pmid: str) -> Optional[CorpusDocument]:
        return self._docs.get(pmid)

    def documents(self) -> list[CorpusDocument]:
        return [self._docs[pmid] for pmid in self._pmids]

    def _doc_frequency(self, token: str, field: str) -> int:
        return len(self._postings.get(token, {}).get(field, ()))

    def _avg_field_length(self, field: str) -> float:
        lengths = self._field_lengths[field]
        if not lengths:
            return 0.0
        return sum(lengths) / len(lengths)

    # --- boolean matching ----------------------------------------------------

    def _token_docs(self, token: str, field: Optional[str]) -> set[int]:
        fields = (field,) if field else FIELDS
        docs: set[int] = set()
        for f in fields:
            docs.update(ordinal for ordinal, _ in self._postings.get(token, {}).get(f, ()))
        return docs

    def _phrase_docs(self, tokens: list[str], field: Optional[str]) -> set[int]:
        fields = (field,) if field else FIELDS
        out: set[int] = set()
        for f in fields:
            per_token = []
            for token in tokens:
                entries = {ordinal: positions
                           for ordinal, positions in self._postings.get(token, {}).get(f, ())}
                per_token.append(entries)
            candidates = set(per_token[0])
            for entries in per_token[1:]:
                candidates &= set(entries)
            for ordinal in candidates:
                first_positions = per_token[0][ordinal]
                for start in first_positions:
                    if all(start + offset in per_token[offset][ordinal]
                           for offset in range(1, len(tokens))):
                        out.add(ordinal)
                        break
        return out

    def _match(self, node: q.QueryAst, field: Optional[str]) -> Optional[set[int]]:
        """Match set for a node, or None for an analysis-erased clause."""
        if isinstance(node, q.Term):
            tokens = analyze(node.token, stem=self._stem)
            if not tokens:
                return _IGNORED
            result = self._token_docs(tokens[0], field)
            for token in tokens[1:]:
                result &= self._token_docs(token, field)
            return result
        if isinstance(node, q.Phrase):
            tokens = analyze(node.text, stem=self._stem)
            if not tokens:
                return _IGNORED
            if len(tokens) == 1:
                return self._token_docs(tokens[0], field)
            # membership dicts must exist per field; positions are compacted
            # after stopword removal, so phrases may cross elided stopwords
            return self._phrase_docs(tokens, field)
        if isinstance(node, q.Field):
            return self._match(node.child, node.name)
        if isinstance(node, q.Group):
            return self._match(node.child, field)
        if isinstance(node, q.Not):
            inner = self._match(node.child, field)
            if inner is _IGNORED:
                return _IGNORED
            return set(range(self.doc_count)) - inner
        if isinstance(node, q.And):
            parts = [self._match(c, field) for c in node.children]
            parts = [p for p in parts if p is not _IGNORED]
            if not parts:
                return _IGNORED
            result = parts[0]
            for p in parts[1:]:
                result = result & p
            return result
        if isinstance(node, q.Or):
            parts = [self._match(c, field) for c in node.children]
            parts = [p for p in parts if p is not _IGNORED]
            if not parts:
                return _IGNORED
            result = set()
            for p in parts:
                result |= p
            return result
        raise TypeError(f"not a query node: {node!r}")

    def match_set(self, ast: q.QueryAst) -> set[str]:
        """Pmids matching the AST under boolean semantics; a query with no
        positive scoring atom matches nothing."""
        if not self._positive_terms(ast):
            return set()
        matched = self._match(ast, None)
        if matched is _IGNORED:
            return set()
        return {self._pmids[ordinal] for ordinal in matched}

    # --- scoring ---------------------------------------------------------------

    def _positive_terms(self, ast: q.QueryAst) -> list[tuple[str, Optional[str]]]:
        """Unique (token, field-restriction) pairs not under a NOT, sorted
        for deterministic float summation."""
        found: set[tuple[str, Optional[str]]] = set()

        def walk(node: q.QueryAst, field: Optional[str], negated: bool):
            if isinstance(node, (q.Term, q.Phrase)):
                if negated:
                    return
                source = node.token if isinstance(node, q.Term) else node.text
                for token in analyze(source, stem=self._stem):
                    found.add((token, field))
            elif isinstance(node, q.Field):
                walk(node.child, node.name, negated)
            elif isinstance(node, q.Group):
                walk(node.child, field, negated)
            elif isinstance(node, q.Not):
                walk(node.child, field, not negated)
            else:
                for child in node.children:
                    walk(child, field, negated)

        walk(ast, None, False)
        return sorted(found, key=lambda item: (item[0], item[1] or ""))

    def _bm25(self, token: str, field: str, ordinal: int, tf: int) -> float:
        df = self._doc_frequency(token, field)
        n = self.doc_count
        idf = math.log(1.0 + (n - df + 0.5) / (df + 0.5))
        avg_len = self._avg_field_length(field)
        if avg_len == 0:
            return 0.0
        doc_len = self._field_lengths[field][ordinal]
        norm = tf + BM25_K1 * (1.0 - BM25_B + BM25_B * doc_len / avg_len)
        return idf * tf / norm

    def score(self, ast: q.QueryAst, ordinal: int) -> float:
        total = 0.0
        for token, field in self._positive_terms(ast):
            fields = (field,) if field else FIELDS
            for f in fields:
                for entry_ordinal, positions in self._postings.get(token, {}).get(f, ()):
                    if entry_ordinal == ordinal:
                        total += self._bm25(token, f, ordinal, len(positions))
                        break
        return total

    def search(self, ast: q.QueryAst, k: int) -> list[SearchHit]:
        """Top-k matches ordered by (score desc, pmid ascending numeric)."""
        if k < 1:
            raise ValueError("k must be >= 1")
        positive = self._positive_terms(ast)
        if not positive:
            return []
        matched = self._match(ast, None)
        if matched is _IGNORED or not matched:
            return []
        scored = []
        for ordinal in matched:
            pmid = self._pmids[ordinal]
            scored.append((-self.score(ast, ordinal), _pmid_sort_key(pmid), pmid))
        scored.sort()
        return [SearchHit(pmid=pmid, score=-neg_score, rank=rank)
                for rank, (neg_score, _, pmid) in enumerate(scored[:k], start=1)]

    # --- persistence -------------------------------------------------------------

    def to_bytes(self) -> bytes:
        payload = {
            "version": INDEX_FORMAT_VERSION,
            "fingerprint": self.fingerprint,
            "stem": self._stem,
            "pmids": self._pmids,
            "documents": {pmid: {"title": d.title, "abstract": d.abstract}
                          for pmid, d in self._docs.items()},
            "field_lengths": self._field_lengths,
            "postings": {
                token: {field: [[ordinal, list(positions)] for ordinal, positions in entries]
                        for field, entries in fields.items()}
                for token, fields in self._postings.items()
            },
        }
        return json.dumps(payload, sort_keys=True, separators=(",", ":"),
                          ensure_ascii=False).encode("utf-8")

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def from_bytes(cls, raw: bytes) -> "Index":
        payload = json.loads(raw.decode("utf-8"))
        if payload.get("version") != INDEX_FORMAT_VERSION:
            raise ValueError(f"unsupported index version {payload.get('version')!r}")
        index = cls(stem=payload["stem"])
        index.fingerprint = payload["fingerprint"]
        index._pmids = list(payload["pmids"])
        index._docs = {pmid: CorpusDocument(pmid=pmid, title=obj["title"],
                                            abstract=obj.get("abstract", ""))
                       for pmid, obj in payload["documents"].items()}
        index._field_lengths = {f: list(v) for f, v in payload["field_lengths"].items()}
        index._postings = {
            token: {field: [(ordinal, tuple(positions)) for ordinal, positions in entries]
                    for field, entries in fields.items()}
            for token, fields in payload["postings"].items()
        }
        index._frozen = True
        return index

    @classmethod
    def load(cls, path) -> "Index":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def _pmid_sort_key(pmid: str):
    # numeric-string identifiers sort numerically; anything else falls
    # back to a lexicographic tail
    if pmid.isdigit():
        return (0, int(pmid), "")
    return (1, 0, pmid)


def ingest_corpus(documents: Iterable[CorpusDocument], *, stem: bool = True) -> Index:
    return Index.build(documents, stem=stem)


def search(index: Index, ast: q.QueryAst, k: int) -> list[SearchHit]:
    return index.search(ast, k)
