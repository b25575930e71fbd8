"""Ranked query-candidate lists from a KGQA backend, with question caching.

A backend is anything with a ``fetch(question) -> list[str]`` of raw SPARQL
texts in its own rank order plus a ``cache_namespace``. ``ask`` parses the
texts, drops unparseable candidates with a warning, and re-densifies ranks;
``ask_once`` replays cached responses so each distinct question hits the
backend at most once per cache lifetime.
"""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Protocol, Sequence

import requests

from .cache import FileCache, cached_fetch
from .kg import EndpointError, MalformedResponse, TransportError
from .sparql import ParseError, QueryCandidate, parse_query

logger = logging.getLogger(__name__)


def stable_seed(*parts) -> int:
    """Deterministic 64-bit seed from arbitrary parts (platform independent)."""
    text = "|".join(str(p) for p in parts)
    return int.from_bytes(
        hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest(), "big"
    )


@dataclass(frozen=True)
class CandidateList:
    question: str
    candidates: tuple[QueryCandidate, ...]

    def __post_init__(self):
        ranks = [c.rank for c in self.candidates]
        if ranks != list(range(1, len(ranks) + 1)):
            raise ValueError(f"ranks must be dense 1..N, got {ranks[:10]}...")

    def __len__(self) -> int:
        return len(self.candidates)


@dataclass(frozen=True)
class CorrectRankDistribution:
    """Where a mock question's correct candidate lands: uniform on
    [low, high], or nowhere with probability ``absent_prob``."""

    low: int = 1
    high: int = 10
    absent_prob: float = 0.2

    def __post_init__(self):
        if not 1 <= self.low <= self.high:
            raise ValueError("need 1 <= low <= high")
        if not 0.0 <= self.absent_prob <= 1.0:
            raise ValueError("absent_prob must be a probability")

    def draw(self, rng) -> int | None:
        if rng.random() < self.absent_prob:
            return None
        return rng.randint(self.low, self.high)


@dataclass(frozen=True)
class MockKGQAConfig:
    candidates_per_question: int = 60
    correct_rank: CorrectRankDistribution = field(default_factory=CorrectRankDistribution)
    seed: int = 0

    def __post_init__(self):
        if self.candidates_per_question < 1:
            raise ValueError("candidates_per_question must be >= 1")
        if self.correct_rank.high > self.candidates_per_question:
            raise ValueError("correct rank range exceeds the candidate count")


class KGQABackend(Protocol):
    cache_namespace: str

    def fetch(self, question: str) -> list[str]: ...


class RemoteKGQA:
    """HTTP client for a QAnswer-style API returning ranked SPARQL strings.

    Response field names vary across deployments, so they are configurable:
    ``list_key`` locates the candidate array ("" means the response is the
    array), ``query_key`` the SPARQL text, and optional ``score_key`` sorts
    candidates by descending score before rank assignment.
    """

    def __init__(
        self,
        url: str,
        kb: str = "wikidata",
        *,
        field_map: dict | None = None,
        session: requests.Session | None = None,
        timeout: float = 30.0,
        token: str | None = None,
    ):
        self.url = url
        self.kb = kb
        self.field_map = {"list_key": "queries", "query_key": "query", "score_key": None}
        self.field_map.update(field_map or {})
        self.session = session or requests.Session()
        self.timeout = timeout
        self.token = token
        self.cache_namespace = f"remote|{url}|{kb}"

    def fetch(self, question: str) -> list[str]:
        headers = {"Accept": "application/json"}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        try:
            resp = self.session.get(
                self.url,
                params={"question": question, "kb": self.kb},
                headers=headers,
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise TransportError(f"KGQA request failed: {exc}") from exc
        if resp.status_code >= 400:
            raise EndpointError(resp.status_code, resp.text[:200])
        try:
            doc = resp.json()
        except ValueError as exc:
            raise MalformedResponse(f"KGQA response is not JSON: {exc}") from exc
        return self._extract(doc)

    def _extract(self, doc) -> list[str]:
        list_key = self.field_map["list_key"]
        items = doc if not list_key else doc.get(list_key) if isinstance(doc, dict) else None
        if items is None or not isinstance(items, list):
            raise MalformedResponse(f"no candidate list under {list_key!r}")
        rows = []
        for item in items:
            if isinstance(item, str):
                rows.append((None, item))
                continue
            if not isinstance(item, dict):
                raise MalformedResponse(f"unexpected candidate entry: {item!r}")
            text = item.get(self.field_map["query_key"])
            if not isinstance(text, str):
                raise MalformedResponse(f"candidate entry lacks query text: {item!r}")
            score = item.get(self.field_map["score_key"]) if self.field_map["score_key"] else None
            rows.append((score, text))
        if self.field_map["score_key"] is not None and any(s is not None for s, _ in rows):
            rows.sort(key=lambda pair: -(pair[0] or 0.0))
        return [text for _, text in rows]


def ask(question: str, backend: KGQABackend) -> CandidateList:
    """Fetch and parse candidates; unparseable ones are dropped and ranks re-densified."""
    texts = backend.fetch(question)
    return _parse_candidates(question, texts)


def _parse_candidates(question: str, texts: Sequence[str]) -> CandidateList:
    candidates = []
    for position, text in enumerate(texts, start=1):
        try:
            parsed = parse_query(text)
        except ParseError as exc:
            logger.warning("dropping unparseable candidate %d: %s", position, exc)
            continue
        candidates.append(replace(parsed, rank=len(candidates) + 1))
    return CandidateList(question, tuple(candidates))


def ask_once(question: str, backend: KGQABackend, cache: FileCache | None) -> CandidateList:
    """Like ask, but a repeated question replays the cached response byte-identically."""
    if cache is None:
        return ask(question, backend)
    key = f"kgqa|{backend.cache_namespace}|{question}"
    payload = cached_fetch(
        cache,
        key,
        lambda: json.dumps(backend.fetch(question), ensure_ascii=False).encode("utf-8"),
    )
    return _parse_candidates(question, json.loads(payload))


def ask_all(
    questions: Iterable[str],
    backend: KGQABackend,
    cache: FileCache | None = None,
    workers: int = 1,
) -> dict[str, CandidateList]:
    """Batch dispatch with duplicate questions collapsed before any backend call."""
    unique: list[str] = []
    for q in questions:
        if q not in unique:
            unique.append(q)
    if workers <= 1:
        return {q: ask_once(q, backend, cache) for q in unique}
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(lambda q: ask_once(q, backend, cache), unique))
    return dict(zip(unique, results))
