"""Client for a remote query-string-speaking search service (Elasticsearch
search API compatible). One POST per search over the title/abstract
fields; transient failures are retried under the shared gateway policy.
"""
from __future__ import annotations

import random
import time
from typing import Callable, Optional

import httpx

from ..query import QueryAst, render_query
from ..retry import Attempt, RetriesExhausted, RetryPolicy, TransientFailure, run_with_retries
from .index import CorpusDocument, SearchHit

_TRANSIENT_STATUSES = {429, 500, 502, 503, 504}


class RemoteSearchError(Exception):
    pass


class Unreachable(RemoteSearchError):
    pass


class RemoteTimeout(RemoteSearchError):
    pass


class RemoteRejectedQuery(RemoteSearchError):
    def __init__(self, remote_message: str):
        self.remote_message = remote_message
        super().__init__(remote_message)


class RemoteSearchClient:
    """Speaks the search API of an external index over HTTP.

    Retrieved hit sources are kept so callers can fetch document text for
    pmids returned by the last searches.
    """

    def __init__(self, endpoint: str, *,
                 fields: tuple[str, ...] = ("title", "abstract"),
                 default_operator: str = "AND",
                 policy: Optional[RetryPolicy] = None,
                 client: Optional[httpx.Client] = None,
                 timeout_s: float = 30.0,
                 sleep: Callable[[float], None] = time.sleep,
                 rng: Optional[random.Random] = None):
        self.endpoint = endpoint.rstrip("/")
        self.fields = fields
        self.default_operator = default_operator
        self.policy = policy or RetryPolicy()
        self._client = client or httpx.Client(timeout=timeout_s)
        self._sleep = sleep
        self._rng = rng or random.Random()
        self.last_attempts: list[Attempt] = []
        self._doc_cache: dict[str, CorpusDocument] = {}

    def close(self):
        self._client.close()

    def search(self, query_text: str, k: int) -> list[SearchHit]:
        if k < 1:
            raise ValueError("k must be >= 1")
        payload = {
            "query": {
                "query_string": {
                    "query": query_text,
                    "fields": list(self.fields),
                    "default_operator": self.default_operator,
                }
            },
            "size": k,
        }

        def attempt():
            try:
                response = self._client.post(f"{self.endpoint}/_search", json=payload)
            except httpx.TimeoutException as exc:
                raise TransientFailure("timeout", str(exc)) from exc
            except httpx.TransportError as exc:
                raise TransientFailure("unreachable", str(exc)) from exc
            if response.status_code in _TRANSIENT_STATUSES:
                raise TransientFailure(f"http_{response.status_code}", response.text[:200])
            if response.status_code >= 400:
                raise RemoteRejectedQuery(
                    f"status {response.status_code}: {response.text[:500]}")
            return response

        try:
            response, attempts = run_with_retries(
                attempt, self.policy, sleep=self._sleep, rng=self._rng)
        except RetriesExhausted as exc:
            self.last_attempts = exc.attempts
            if exc.last_cause.kind == "timeout":
                raise RemoteTimeout(str(exc)) from exc
            raise Unreachable(str(exc)) from exc
        self.last_attempts = attempts
        return self._parse_hits(response)

    def _parse_hits(self, response: httpx.Response) -> list[SearchHit]:
        try:
            body = response.json()
            raw_hits = body["hits"]["hits"]
            hits = []
            for rank, hit in enumerate(raw_hits, start=1):
                source = hit.get("_source", {})
                pmid = str(source.get("pmid") or hit["_id"])
                score = hit.get("_score")
                hits.append(SearchHit(pmid=pmid, score=float(score if score is not None else 0.0),
                                      rank=rank))
                title = source.get("title")
                if title:
                    self._doc_cache[pmid] = CorpusDocument(
                        pmid=pmid, title=title, abstract=source.get("abstract", "") or "")
            return hits
        except (ValueError, KeyError, TypeError) as exc:
            raise RemoteRejectedQuery(f"malformed search response: {exc}") from exc

    def get_document(self, pmid: str) -> Optional[CorpusDocument]:
        return self._doc_cache.get(pmid)


def remote_search(endpoint: str, query_text: str, k: int, **kwargs) -> list[SearchHit]:
    """One-shot convenience over RemoteSearchClient."""
    client = RemoteSearchClient(endpoint, **kwargs)
    try:
        return client.search(query_text, k)
    finally:
        client.close()


class RemoteBackend:
    """Adapts the remote client to the pipeline's search backend
    protocol (AST in, hits out)."""

    def __init__(self, client: RemoteSearchClient):
        self.client = client

    def search(self, ast: QueryAst, k: int) -> list[SearchHit]:
        return self.client.search(render_query(ast), k)

    def get_document(self, pmid: str) -> Optional[CorpusDocument]:
        return self.client.get_document(pmid)
