"""Corpus ingestion, text analysis, the embedded BM25 boolean index, and
the remote search client."""
from .analysis import analyze, analyzer_fingerprint, tokenize, stopwords
from .index import (
    BM25_B,
    BM25_K1,
    CorpusDocument,
    CorpusRecordError,
    Index,
    SearchHit,
    ingest_corpus,
    read_corpus_jsonl,
    search,
)
from .remote import (
    RemoteBackend,
    RemoteRejectedQuery,
    RemoteSearchClient,
    RemoteSearchError,
    RemoteTimeout,
    Unreachable,
    remote_search,
)
from .stemmer import stem as porter_stem

__all__ = [
    "analyze", "analyzer_fingerprint", "tokenize", "stopwords", "porter_stem",
    "BM25_K1", "BM25_B", "CorpusDocument", "CorpusRecordError", "Index",
    "SearchHit", "ingest_corpus", "read_corpus_jsonl", "search",
    "RemoteBackend", "RemoteSearchClient", "RemoteSearchError",
    "RemoteRejectedQuery", "RemoteTimeout", "Unreachable", "remote_search",
]
