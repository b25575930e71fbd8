"""Query execution backends and label resolution.

Two interchangeable backends run query candidates: an in-memory MockGraph
with conjunctive basic-graph-pattern matching, and a SPARQL-protocol HTTP
client speaking ``application/sparql-results+json``. Both return result sets
in a deterministic client-side order (rows sorted by their serialized term
tuple) so downstream verbalization is reproducible.

Labels resolve through a three-step fallback: preferred-language label, any
language (lexicographically smallest tag), then the final URI segment with
underscores turned into spaces and percent-escapes decoded.
"""

from __future__ import annotations

import json
import logging
import urllib.parse
from dataclasses import dataclass
from typing import Iterable, Mapping

import requests

from .cache import FileCache, cached_fetch
from .errors import BackendError
from .sparql import (
    ALL,
    IRI,
    RDFS_LABEL,
    Binding,
    QueryCandidate,
    Term,
    TriplePattern,
    serialize,
)

logger = logging.getLogger(__name__)

ENDPOINT_LABEL = "endpoint-label"
ANY_LANGUAGE_LABEL = "any-language-label"
URI_FALLBACK = "uri-fallback"

DEFAULT_ROW_CAP = 1000


class TransportError(BackendError):
    """Network-level failure talking to an endpoint."""


class EndpointError(BackendError):
    """Endpoint answered with an HTTP error status."""

    def __init__(self, status: int, detail: str = ""):
        super().__init__(f"endpoint returned HTTP {status}{': ' if detail else ''}{detail}")
        self.status = status


class MalformedResponse(BackendError):
    """Endpoint payload does not match the SPARQL JSON results format."""


@dataclass(frozen=True)
class ResultSet:
    variables: tuple[str, ...]
    rows: tuple[Binding, ...]

    def __post_init__(self):
        known = set(self.variables)
        for row in self.rows:
            extra = set(row.assignments) - known
            if extra:
                raise ValueError(f"row binds undeclared variables: {sorted(extra)}")

    def __len__(self) -> int:
        return len(self.rows)


@dataclass(frozen=True)
class LabelRecord:
    iri: str
    label: str
    source: str

    def __post_init__(self):
        if not self.label:
            raise ValueError("labels are never empty")
        if self.source not in (ENDPOINT_LABEL, ANY_LANGUAGE_LABEL, URI_FALLBACK):
            raise ValueError(f"unknown label source {self.source!r}")


class MockGraph:
    """Immutable in-memory triple store with per-position indexes.

    Subjects and predicates are IRI strings; objects are ground Terms
    (a plain string is accepted and treated as an IRI). Labels live in a
    ``iri -> {language: label}`` map.
    """

    def __init__(
        self,
        triples: Iterable[tuple[str, str, Term | str]],
        labels: Mapping[str, Mapping[str, str]] | None = None,
    ):
        stored = set()
        for s, p, o in triples:
            term = Term.iri(o) if isinstance(o, str) else o
            if term.is_variable:
                raise ValueError("graphs store ground terms only")
            stored.add((s, p, term))
        self.triples: frozenset[tuple[str, str, Term]] = frozenset(stored)
        self.labels: dict[str, dict[str, str]] = {
            iri: dict(by_lang) for iri, by_lang in (labels or {}).items()
        }
        self._by_subject: dict[str, list] = {}
        self._by_predicate: dict[str, list] = {}
        self._by_object: dict[Term, list] = {}
        for t in self.triples:
            self._by_subject.setdefault(t[0], []).append(t)
            self._by_predicate.setdefault(t[1], []).append(t)
            self._by_object.setdefault(t[2], []).append(t)

    def __len__(self) -> int:
        return len(self.triples)

    def candidates(
        self, s: str | None, p: str | None, o: Term | None
    ) -> Iterable[tuple[str, str, Term]]:
        """Triples compatible with the fixed positions, via the most selective index."""
        if s is not None:
            return self._by_subject.get(s, ())
        if o is not None:
            return self._by_object.get(o, ())
        if p is not None:
            return self._by_predicate.get(p, ())
        return self.triples

    def terms(self) -> set[Term]:
        """Every term occurring in the graph (subjects and predicates as IRIs)."""
        out: set[Term] = set()
        for s, p, o in self.triples:
            out.add(Term.iri(s))
            out.add(Term.iri(p))
            out.add(o)
        return out


def match_bgp(patterns: Iterable[TriplePattern], graph: MockGraph) -> ResultSet:
    """Conjunctive BGP join: one distinct row per assignment satisfying all patterns."""
    patterns = tuple(patterns)
    if not patterns:
        raise ValueError("match_bgp needs at least one pattern")

    variables: list[str] = []
    for p in patterns:
        for name in p.variables():
            if name not in variables:
                variables.append(name)

    partial: list[dict[str, Term]] = [{}]
    for pattern in patterns:
        grown: list[dict[str, Term]] = []
        for env in partial:
            s_t = _resolved(pattern.subject, env)
            p_t = _resolved(pattern.predicate, env)
            o_t = _resolved(pattern.object, env)
            s_fix = s_t.value if s_t is not None and s_t.kind == IRI else None
            p_fix = p_t.value if p_t is not None and p_t.kind == IRI else None
            if (s_t is not None and s_t.kind != IRI) or (
                p_t is not None and p_t.kind != IRI
            ):
                continue  # a literal can never sit in subject/predicate position
            for s, p, o in graph.candidates(s_fix, p_fix, o_t):
                env2 = _unify(pattern, (s, p, o), env)
                if env2 is not None:
                    grown.append(env2)
        partial = grown

    vars_tuple = tuple(variables)
    distinct = {tuple(env[v] for v in vars_tuple): env for env in partial}
    rows = tuple(
        sorted(
            (Binding(env) for env in distinct.values()),
            key=lambda b: b.sort_key(vars_tuple),
        )
    )
    return ResultSet(vars_tuple, rows)


def _resolved(term: Term, env: dict[str, Term]) -> Term | None:
    if term.is_variable:
        return env.get(term.value)
    return term


def _unify(
    pattern: TriplePattern, triple: tuple[str, str, Term], env: dict[str, Term]
) -> dict[str, Term] | None:
    out = env
    actual = (Term.iri(triple[0]), Term.iri(triple[1]), triple[2])
    for want, got in zip(pattern.terms(), actual):
        if want.is_variable:
            bound = out.get(want.value)
            if bound is None:
                if out is env:
                    out = dict(env)
                out[want.value] = got
            elif bound != got:
                return None
        elif want != got:
            return None
    return out if out is not env else dict(env)


@dataclass
class MockEndpoint:
    """Runs candidates against a MockGraph with endpoint-equivalent semantics."""

    graph: MockGraph
    row_cap: int = DEFAULT_ROW_CAP

    def select(self, q: QueryCandidate) -> ResultSet:
        rs = match_bgp(q.patterns, self.graph)
        names = rs.variables if q.projection == ALL else tuple(q.projection)
        projected = [
            {name: row.assignments[name] for name in names if name in row.assignments}
            for row in rs.rows
        ]
        return _finalize_rows(names, projected, self.row_cap)


def _finalize_rows(
    variables: tuple[str, ...], rows: Iterable[Mapping[str, Term]], row_cap: int
) -> ResultSet:
    """Distinct rows, sorted by serialized term tuple, capped."""
    distinct: dict[tuple, dict] = {}
    for row in rows:
        key = tuple(
            row[v].sort_key() if v in row else ("", "", "") for v in variables
        )
        distinct.setdefault(key, dict(row))
    ordered = [distinct[key] for key in sorted(distinct)]
    return ResultSet(variables, tuple(Binding(r) for r in ordered[:row_cap]))


def execute(q: QueryCandidate, endpoint) -> ResultSet:
    """Run a candidate on any backend exposing ``select(QueryCandidate)``."""
    return endpoint.select(q)


class SparqlHttpClient:
    """SPARQL 1.1 protocol client returning deterministic, capped result sets."""

    def __init__(
        self,
        url: str,
        *,
        timeout: float = 30.0,
        token: str | None = None,
        session: requests.Session | None = None,
        cache: FileCache | None = None,
        row_cap: int = DEFAULT_ROW_CAP,
    ):
        self.url = url
        self.timeout = timeout
        self.token = token
        self.session = session or requests.Session()
        self.cache = cache
        self.row_cap = row_cap

    def select(self, q: QueryCandidate | str) -> ResultSet:
        text = serialize(q) if isinstance(q, QueryCandidate) else q
        raw = cached_fetch(self.cache, f"sparql|{self.url}|{text}", lambda: self._fetch(text))
        variables, rows = _parse_results_json(raw)
        return _finalize_rows(variables, rows, self.row_cap)

    def _fetch(self, query: str) -> bytes:
        headers = {"Accept": "application/sparql-results+json"}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        try:
            if len(query) < 1500:
                resp = self.session.get(
                    self.url, params={"query": query}, headers=headers, timeout=self.timeout
                )
            else:
                resp = self.session.post(
                    self.url, data={"query": query}, headers=headers, timeout=self.timeout
                )
        except requests.RequestException as exc:
            raise TransportError(f"SPARQL request failed: {exc}") from exc
        if resp.status_code >= 400:
            raise EndpointError(resp.status_code, resp.text[:200])
        return resp.content


def _parse_results_json(raw: bytes) -> tuple[tuple[str, ...], list[dict[str, Term]]]:
    try:
        doc = json.loads(raw)
        variables = tuple(doc["head"]["vars"])
        bindings = doc["results"]["bindings"]
    except (ValueError, KeyError, TypeError) as exc:
        raise MalformedResponse(f"bad SPARQL JSON results: {exc}") from exc
    rows: list[dict[str, Term]] = []
    for entry in bindings:
        row: dict[str, Term] = {}
        ok = True
        for name, cell in entry.items():
            term = _term_from_cell(cell)
            if term is None:
                logger.warning("skipping row with unsupported term: %r", cell)
                ok = False
                break
            row[name] = term
        if ok:
            rows.append(row)
    return variables, rows


def _term_from_cell(cell) -> Term | None:
    try:
        kind = cell["type"]
        value = cell["value"]
    except (KeyError, TypeError) as exc:
        raise MalformedResponse(f"bad result cell: {cell!r}") from exc
    if kind == "uri":
        return Term.iri(value)
    if kind in ("literal", "typed-literal"):
        return Term.literal(value, cell.get("xml:lang"))
    return None  # blank nodes cannot be modelled; the row is dropped


# --------------------------------------------------------------------------
# Label resolution
# --------------------------------------------------------------------------


def uri_fallback_label(iri: str) -> str:
    """Human-readable text from the final URI segment."""
    trimmed = iri.rstrip("/#")
    cut = max(trimmed.rfind("/"), trimmed.rfind("#"))
    segment = trimmed[cut + 1 :] if cut >= 0 else trimmed
    text = urllib.parse.unquote(segment).replace("_", " ").strip()
    return text or iri


def pick_label(
    iri: str, by_language: Mapping[str, str], preferred_language: str = "en"
) -> LabelRecord:
    """Apply the label fallback chain over an already-fetched language map."""
    label = by_language.get(preferred_language)
    if label:
        return LabelRecord(iri, label, ENDPOINT_LABEL)
    for tag in sorted(by_language):
        if by_language[tag]:
            return LabelRecord(iri, by_language[tag], ANY_LANGUAGE_LABEL)
    return LabelRecord(iri, uri_fallback_label(iri), URI_FALLBACK)


class MockLabelResolver:
    def __init__(self, graph: MockGraph, preferred_language: str = "en"):
        self.graph = graph
        self.preferred_language = preferred_language

    def resolve(self, iri: str, preferred_language: str | None = None) -> LabelRecord:
        return pick_label(
            iri,
            self.graph.labels.get(iri, {}),
            preferred_language or self.preferred_language,
        )

    def label(self, iri: str) -> str:
        return self.resolve(iri).label


class RemoteLabelResolver:
    """Fetches rdfs:label maps through a SPARQL client; memoizes per IRI."""

    def __init__(self, client: SparqlHttpClient, preferred_language: str = "en"):
        self.client = client
        self.preferred_language = preferred_language
        self._memo: dict[str, dict[str, str]] = {}

    def resolve(self, iri: str, preferred_language: str | None = None) -> LabelRecord:
        if iri not in self._memo:
            query = f"SELECT ?label WHERE {{ <{iri}> <{RDFS_LABEL}> ?label . }}"
            rs = self.client.select(query)
            by_language: dict[str, str] = {}
            for row in rs.rows:
                term = row.get("label")
                if term is not None and term.kind == "literal":
                    by_language.setdefault(term.language or "", term.value)
            self._memo[iri] = by_language
        return pick_label(
            iri, self._memo[iri], preferred_language or self.preferred_language
        )

    def label(self, iri: str) -> str:
        return self.resolve(iri).label


def resolve_label(iri: str, preferred_language: str, resolver) -> LabelRecord:
    """Resolve one IRI through whichever resolver backend is configured."""
    return resolver.resolve(iri, preferred_language)
