"""SPARQL SELECT subset: parse, rewrite, serialize, and ground query candidates.

Covers the query shapes KGQA systems emit as answer candidates: PREFIX
declarations, ``SELECT [DISTINCT]`` over plain variables or ``*``, a single
basic graph pattern of triples, and a tail of solution modifiers. Aggregate
expressions, FILTER clauses, and trailing solution modifiers are captured as
opaque strings so they can be stripped or re-emitted verbatim. OPTIONAL,
UNION, property paths, and subqueries are rejected with a ParseError.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field, replace
from typing import Iterator, Mapping

from .errors import DataError

IRI = "iri"
VARIABLE = "variable"
LITERAL = "literal"

#: Projection marker for ``SELECT *``.
ALL = "*"

RDF_TYPE = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type"
RDFS_LABEL = "http://www.w3.org/2000/01/rdf-schema#label"

_KINDS = frozenset((IRI, VARIABLE, LITERAL))


class ParseError(DataError):
    """Malformed query text. ``offset`` is the byte offset of the problem."""

    def __init__(self, message: str, offset: int = 0):
        super().__init__(f"{message} (byte {offset})")
        self.offset = offset


class UnboundVariable(DataError):
    """A pattern variable has no assignment in the binding."""

    def __init__(self, name: str):
        super().__init__(f"no binding for variable ?{name}")
        self.name = name


@dataclass(frozen=True)
class Term:
    """One RDF term position: an IRI, a variable, or a literal."""

    kind: str
    value: str
    language: str | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown term kind: {self.kind!r}")
        if not self.value and self.kind != LITERAL:
            raise ValueError(f"{self.kind} term needs a non-empty value")
        if self.kind == VARIABLE and any(c.isspace() for c in self.value):
            raise ValueError(f"variable name contains whitespace: {self.value!r}")
        if self.language is not None and self.kind != LITERAL:
            raise ValueError("only literals carry a language tag")

    @classmethod
    def iri(cls, value: str) -> "Term":
        return cls(IRI, value)

    @classmethod
    def var(cls, name: str) -> "Term":
        return cls(VARIABLE, name)

    @classmethod
    def literal(cls, value: str, language: str | None = None) -> "Term":
        return cls(LITERAL, value, language)

    @property
    def is_variable(self) -> bool:
        return self.kind == VARIABLE

    def sort_key(self) -> tuple[str, str, str]:
        return (self.kind, self.value, self.language or "")

    def sparql(self) -> str:
        """Token form used when serializing a query."""
        if self.kind == IRI:
            return f"<{self.value}>"
        if self.kind == VARIABLE:
            return f"?{self.value}"
        escaped = (
            self.value.replace("\\", "\\\\")
            .replace('"', '\\"')
            .replace("\n", "\\n")
            .replace("\r", "\\r")
            .replace("\t", "\\t")
        )
        tag = f"@{self.language}" if self.language else ""
        return f'"{escaped}"{tag}'


@dataclass(frozen=True)
class TriplePattern:
    """Subject/predicate/object positions; the predicate is never a literal."""

    subject: Term
    predicate: Term
    object: Term

    def __post_init__(self):
        if self.predicate.kind == LITERAL:
            raise ValueError("predicate cannot be a literal")

    def terms(self) -> tuple[Term, Term, Term]:
        return (self.subject, self.predicate, self.object)

    @property
    def is_ground(self) -> bool:
        return not any(t.is_variable for t in self.terms())

    def variables(self) -> Iterator[str]:
        for t in self.terms():
            if t.is_variable:
                yield t.value


#: A TriplePattern whose terms contain no variables.
GroundedTriple = TriplePattern


@dataclass(frozen=True)
class Binding:
    """One result row: variable name -> ground term."""

    assignments: Mapping[str, Term]

    def __post_init__(self):
        for name, term in self.assignments.items():
            if term.is_variable:
                raise ValueError(f"binding for ?{name} is itself a variable")

    def get(self, name: str) -> Term | None:
        return self.assignments.get(name)

    def sort_key(self, variables: tuple[str, ...]) -> tuple:
        return tuple(
            self.assignments[v].sort_key() if v in self.assignments else ("", "", "")
            for v in variables
        )


@dataclass(frozen=True)
class QueryCandidate:
    """A parsed SELECT query candidate with its list rank and raw text."""

    id: str
    patterns: tuple[TriplePattern, ...]
    projection: tuple[str, ...] | str = ALL
    distinct: bool = False
    modifiers: tuple[str, ...] = ()
    prefixes: Mapping[str, str] = field(default_factory=dict)
    rank: int = 1
    raw_text: str = ""

    def __post_init__(self):
        if not self.patterns:
            raise ValueError("a query candidate needs at least one triple pattern")
        if self.rank < 1:
            raise ValueError("rank starts at 1")
        if self.projection != ALL:
            known = set(self.variables())
            for name in self.projection:
                if name not in known:
                    raise ValueError(f"projected variable ?{name} not in any pattern")

    @property
    def selects_all(self) -> bool:
        return self.projection == ALL

    def variables(self) -> tuple[str, ...]:
        """Pattern variables in first-occurrence order."""
        seen: list[str] = []
        for p in self.patterns:
            for name in p.variables():
                if name not in seen:
                    seen.append(name)
        return tuple(seen)

    def structure(self) -> tuple:
        """Everything that defines the query itself (id/rank/raw text excluded)."""
        return (
            self.projection if self.selects_all else tuple(self.projection),
            self.distinct,
            self.patterns,
            self.modifiers,
            dict(self.prefixes),
        )

    def same_structure(self, other: "QueryCandidate") -> bool:
        return self.structure() == other.structure()


# --------------------------------------------------------------------------
# Parsing
# --------------------------------------------------------------------------

_WS_RE = re.compile(r"(?:\s+|#[^\n]*)+")
_IRIREF_RE = re.compile(r'<([^<>"{}|^`\\\s]*)>')
_PNAME_RE = re.compile(r"([A-Za-z][\w\-]*)?:((?:[\w\-%](?:[\w\-%.]*[\w\-%])?)?)")
_VAR_RE = re.compile(r"[?$](\w+)")
# a trailing bare "." is the triple terminator, not part of the number
_NUM_RE = re.compile(r"[+-]?(?:\d+\.\d+|\.\d+|\d+)(?:[eE][+-]?\d+)?")
_WORD_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_LANG_RE = re.compile(r"@([A-Za-z]+(?:-[A-Za-z0-9]+)*)")

_AGGREGATES = frozenset(
    ("COUNT", "SUM", "MIN", "MAX", "AVG", "SAMPLE", "GROUP_CONCAT")
)
_UNSUPPORTED_BLOCKS = frozenset(
    ("OPTIONAL", "UNION", "MINUS", "GRAPH", "SERVICE", "BIND", "VALUES", "SELECT")
)
_ESCAPES = {
    "t": "\t",
    "b": "\b",
    "n": "\n",
    "r": "\r",
    "f": "\f",
    '"': '"',
    "'": "'",
    "\\": "\\",
}

_TRAILING_RES = (
    re.compile(r"(?i)LIMIT\s+\d+"),
    re.compile(r"(?i)OFFSET\s+\d+"),
    re.compile(r"(?i)ORDER\s+BY(?:\s*(?:ASC|DESC)\s*\([^()]*\)|\s+\?\w+)+"),
    re.compile(r"(?i)GROUP\s+BY(?:\s*\([^()]*\)|\s+\?\w+)+"),
    re.compile(r"(?i)HAVING\s*\([^()]*\)"),
)


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.i = 0
        self.prefixes: dict[str, str] = {}

    # -- low-level helpers --------------------------------------------------

    def _byte_offset(self, i: int | None = None) -> int:
        i = self.i if i is None else i
        return len(self.text[:i].encode("utf-8"))

    def fail(self, message: str, at: int | None = None) -> ParseError:
        return ParseError(message, self._byte_offset(at))

    def skip_ws(self) -> None:
        m = _WS_RE.match(self.text, self.i)
        if m:
            self.i = m.end()

    def at_end(self) -> bool:
        self.skip_ws()
        return self.i >= len(self.text)

    def peek(self) -> str:
        self.skip_ws()
        return self.text[self.i : self.i + 1]

    def take(self, regex: re.Pattern) -> re.Match | None:
        self.skip_ws()
        m = regex.match(self.text, self.i)
        if m:
            self.i = m.end()
        return m

    def keyword(self, word: str) -> bool:
        """Consume a case-insensitive keyword if it is next."""
        self.skip_ws()
        m = _WORD_RE.match(self.text, self.i)
        if m and m.group(0).upper() == word:
            self.i = m.end()
            return True
        return False

    def peek_word(self) -> str:
        self.skip_ws()
        m = _WORD_RE.match(self.text, self.i)
        return m.group(0).upper() if m else ""

    # -- balanced capture ---------------------------------------------------

    def capture_parenthesized(self, start: int) -> str:
        """Return the verbatim slice from ``start`` through the matching ')'.

        ``self.i`` must sit on the opening '('. Quotes and IRI brackets are
        honoured so parentheses inside them do not count.
        """
        depth = 0
        i = self.i
        n = len(self.text)
        while i < n:
            c = self.text[i]
            if c == "(":
                depth += 1
            elif c == ")":
                depth -= 1
                if depth == 0:
                    self.i = i + 1
                    return self.text[start : i + 1]
            elif c in "\"'":
                i = self._skip_string(i)
                continue
            elif c == "<":
                m = _IRIREF_RE.match(self.text, i)
                if m:
                    i = m.end()
                    continue
            elif c in "{}":
                raise self.fail("brace inside parenthesized expression", i)
            i += 1
        raise self.fail("unbalanced parentheses", start)

    def _skip_string(self, i: int) -> int:
        quote = self.text[i]
        j = i + 1
        n = len(self.text)
        while j < n:
            c = self.text[j]
            if c == "\\":
                j += 2
                continue
            if c == quote:
                return j + 1
            j += 1
        raise self.fail("unterminated string", i)

    # -- terms ----------------------------------------------------------------

    def parse_term(self, position: str) -> Term:
        self.skip_ws()
        if self.i >= len(self.text):
            raise self.fail("unexpected end of input in triple pattern")
        start = self.i
        c = self.text[self.i]

        if c == "<":
            m = self.take(_IRIREF_RE)
            if not m:
                raise self.fail("malformed IRI", start)
            return self._make_iri(m.group(1), start)

        if c in "?$":
            m = self.take(_VAR_RE)
            if not m:
                raise self.fail("malformed variable", start)
            return Term.var(m.group(1))

        if c in "\"'":
            if position != "object":
                raise self.fail(f"literal not allowed in {position} position", start)
            return self._parse_literal()

        if c.isdigit() or (c in "+-." and _NUM_RE.match(self.text, self.i)):
            if position != "object":
                raise self.fail(f"literal not allowed in {position} position", start)
            m = self.take(_NUM_RE)
            return Term.literal(m.group(0))

        word = _WORD_RE.match(self.text, self.i)
        if word and word.group(0) == "a" and position == "predicate":
            nxt = self.text[word.end() : word.end() + 1]
            if nxt == "" or not _PNAME_RE.match(self.text, self.i):
                self.i = word.end()
                return Term.iri(RDF_TYPE)
        if word and word.group(0) in ("true", "false") and position == "object":
            if not _PNAME_RE.match(self.text, self.i):
                self.i = word.end()
                return Term.literal(word.group(0))

        m = self.take(_PNAME_RE)
        if m:
            prefix = m.group(1) or ""
            if prefix not in self.prefixes:
                raise self.fail(f"unknown prefix {prefix!r}", start)
            return self._make_iri(self.prefixes[prefix] + m.group(2), start)

        raise self.fail(f"expected a term, found {c!r}", start)

    def _make_iri(self, value: str, at: int) -> Term:
        if "://" not in value:
            raise self.fail(f"IRI is not absolute: {value!r}", at)
        return Term.iri(value)

    def _parse_literal(self) -> Term:
        start = self.i
        text = self.text
        if text.startswith(('"""', "'''"), self.i):
            quote = text[self.i : self.i + 3]
            end = text.find(quote, self.i + 3)
            if end < 0:
                raise self.fail("unterminated string", start)
            value = text[self.i + 3 : end]
            self.i = end + 3
        else:
            quote = text[self.i]
            out: list[str] = []
            j = self.i + 1
            while True:
                if j >= len(text):
                    raise self.fail("unterminated string", start)
                c = text[j]
                if c == "\\":
                    if j + 1 >= len(text) or text[j + 1] not in _ESCAPES:
                        raise self.fail("bad escape in string", j)
                    out.append(_ESCAPES[text[j + 1]])
                    j += 2
                    continue
                if c == quote:
                    break
                out.append(c)
                j += 1
            value = "".join(out)
            self.i = j + 1
        language = None
        m = _LANG_RE.match(text, self.i)
        if m:
            language = m.group(1)
            self.i = m.end()
        elif text.startswith("^^", self.i):
            # Datatype IRIs are accepted but not modelled; the lexical form stays.
            self.i += 2
            self.parse_term("predicate")
        return Term.literal(value, language)

    # -- query structure ------------------------------------------------------

    def parse(self) -> tuple:
        self._parse_prologue()
        if not self.keyword("SELECT"):
            raise self.fail("expected SELECT")
        distinct = self.keyword("DISTINCT")
        if self.keyword("REDUCED"):
            raise self.fail("REDUCED is not supported")
        projection, select_mods = self._parse_projection()
        if not self.keyword("WHERE"):
            raise self.fail("missing WHERE")
        self.skip_ws()
        if self.peek() != "{":
            raise self.fail("expected '{' after WHERE")
        open_at = self.i
        self.i += 1
        patterns, filters = self._parse_block(open_at)
        if not patterns:
            raise self.fail("empty pattern block", open_at)
        trailing = self._parse_trailing()
        modifiers = tuple(select_mods + filters + trailing)
        return projection, distinct, tuple(patterns), modifiers

    def _parse_prologue(self) -> None:
        while True:
            if self.keyword("PREFIX"):
                at = self.i
                m = self.take(_PNAME_RE)
                if not m or m.group(2):
                    raise self.fail("expected prefix declaration name", at)
                iri = self.take(_IRIREF_RE)
                if not iri:
                    raise self.fail("expected IRI in prefix declaration", at)
                self.prefixes[m.group(1) or ""] = iri.group(1)
            elif self.keyword("BASE"):
                raise self.fail("BASE is not supported")
            else:
                return

    def _parse_projection(self) -> tuple[tuple[str, ...] | str, list[str]]:
        names: list[str] = []
        mods: list[str] = []
        all_marker = False
        while True:
            self.skip_ws()
            c = self.text[self.i : self.i + 1]
            if c == "*":
                all_marker = True
                self.i += 1
            elif c in "?$":
                m = self.take(_VAR_RE)
                if not m:
                    raise self.fail("malformed variable in projection")
                names.append(m.group(1))
            elif c == "(":
                mods.append(self.capture_parenthesized(self.i))
            elif self.peek_word() in _AGGREGATES:
                start = self.i
                self.i += len(self.peek_word())
                self.skip_ws()
                if self.text[self.i : self.i + 1] != "(":
                    raise self.fail("expected '(' after aggregate", start)
                mods.append(self.capture_parenthesized(start))
            else:
                break
        if not names and not all_marker and not mods:
            raise self.fail("empty projection")
        return (ALL if all_marker else tuple(names)), mods

    def _parse_block(self, open_at: int) -> tuple[list[TriplePattern], list[str]]:
        patterns: list[TriplePattern] = []
        filters: list[str] = []
        while True:
            self.skip_ws()
            if self.i >= len(self.text):
                raise self.fail("unbalanced braces", open_at)
            c = self.text[self.i]
            if c == "}":
                self.i += 1
                return patterns, filters
            if c == "{":
                raise self.fail("nested group patterns are not supported")
            word = self.peek_word()
            if word == "FILTER":
                filters.append(self._capture_filter())
                continue
            if word in _UNSUPPORTED_BLOCKS:
                raise self.fail(f"{word} is not supported")
            self._parse_triples_same_subject(patterns)

    def _capture_filter(self) -> str:
        start = self.i
        self.i += len("FILTER")
        self.skip_ws()
        if _WORD_RE.match(self.text, self.i):
            word = self.take(_WORD_RE)
            if word.group(0).upper() in ("EXISTS", "NOT"):
                raise self.fail("FILTER EXISTS is not supported", start)
            self.skip_ws()
        if self.text[self.i : self.i + 1] != "(":
            raise self.fail("expected '(' in FILTER", start)
        return self.capture_parenthesized(start)

    def _parse_triples_same_subject(self, patterns: list[TriplePattern]) -> None:
        subject = self.parse_term("subject")
        while True:
            predicate = self.parse_term("predicate")
            while True:
                obj = self.parse_term("object")
                patterns.append(TriplePattern(subject, predicate, obj))
                self.skip_ws()
                if self.text[self.i : self.i + 1] == ",":
                    self.i += 1
                    continue
                break
            self.skip_ws()
            if self.text[self.i : self.i + 1] == ";":
                self.i += 1
                self.skip_ws()
                if self.text[self.i : self.i + 1] in ("}", ".", ""):
                    break
                continue
            break
        self.skip_ws()
        if self.text[self.i : self.i + 1] == ".":
            self.i += 1

    def _parse_trailing(self) -> list[str]:
        mods: list[str] = []
        while not self.at_end():
            self.skip_ws()
            for regex in _TRAILING_RES:
                m = regex.match(self.text, self.i)
                if m:
                    mods.append(m.group(0))
                    self.i = m.end()
                    break
            else:
                rest = self.text[self.i :].strip()
                if "{" in rest or "}" in rest:
                    raise self.fail("unbalanced braces")
                mods.append(rest)
                self.i = len(self.text)
        return mods


def parse_query(text: str, *, id: str | None = None, rank: int = 1) -> QueryCandidate:
    """Parse a SELECT query into a QueryCandidate with prefixes expanded.

    Raises ParseError (with a byte offset) on malformed input; never raises
    anything else, whatever bytes come in.
    """
    parser = _Parser(text)
    try:
        projection, distinct, patterns, modifiers = parser.parse()
        if not parser.at_end():
            raise parser.fail("trailing content after query")
        candidate = QueryCandidate(
            id=id if id is not None else _content_id(text),
            patterns=patterns,
            projection=projection,
            distinct=distinct,
            modifiers=modifiers,
            prefixes=dict(parser.prefixes),
            rank=rank,
            raw_text=text,
        )
    except ParseError:
        raise
    except (ValueError, RecursionError) as exc:
        raise ParseError(str(exc), 0) from exc
    return candidate


def _content_id(text: str) -> str:
    return hashlib.sha1(text.encode("utf-8")).hexdigest()[:12]


# --------------------------------------------------------------------------
# Rewriting and serialization
# --------------------------------------------------------------------------

_STRIPPED_RE = re.compile(r"^\(?\s*(COUNT|MAX|MIN|LIMIT|ORDER|FILTER)\b", re.I)


def modifier_slot(modifier: str) -> str:
    """Where a captured modifier belongs when re-emitting: select/filter/trailing."""
    head = modifier.lstrip().lstrip("(").lstrip()
    word = _WORD_RE.match(head)
    name = word.group(0).upper() if word else ""
    if name == "FILTER":
        return "filter"
    if name in ("LIMIT", "OFFSET", "ORDER", "GROUP", "HAVING"):
        return "trailing"
    return "select"


def is_stripped_modifier(modifier: str) -> bool:
    return bool(_STRIPPED_RE.match(modifier.lstrip()))


def has_aggregate(q: QueryCandidate) -> bool:
    """True when the candidate carried an aggregate expression in its SELECT."""
    return any(modifier_slot(m) == "select" for m in q.modifiers)


def strip_unsupported(q: QueryCandidate) -> QueryCandidate:
    """Drop COUNT/MAX/MIN/LIMIT/ORDER/FILTER modifiers; patterns stay as-is."""
    kept = tuple(m for m in q.modifiers if not is_stripped_modifier(m))
    return replace(q, modifiers=kept)


def rewrite_select_all(q: QueryCandidate) -> QueryCandidate:
    """Project every variable (``SELECT DISTINCT *``) so results ground all patterns."""
    return replace(q, projection=ALL, distinct=True)


def serialize(q: QueryCandidate) -> str:
    """Emit query text that re-parses to the same structure.

    IRIs are written in full angle-bracket form; prefix declarations are
    regenerated from the candidate's prefix map; modifiers are re-emitted
    verbatim in their home slot (SELECT clause, pattern block, or tail).
    """
    select_mods = [m for m in q.modifiers if modifier_slot(m) == "select"]
    filter_mods = [m for m in q.modifiers if modifier_slot(m) == "filter"]
    trailing_mods = [m for m in q.modifiers if modifier_slot(m) == "trailing"]

    lines = [f"PREFIX {name}: <{base}>" for name, base in q.prefixes.items()]
    head = ["SELECT"]
    if q.distinct:
        head.append("DISTINCT")
    if q.selects_all:
        head.append("*")
    else:
        head.extend(f"?{name}" for name in q.projection)
    head.extend(select_mods)
    head.append("WHERE {")
    lines.append(" ".join(head))
    for p in q.patterns:
        lines.append(f"  {p.subject.sparql()} {p.predicate.sparql()} {p.object.sparql()} .")
    for m in filter_mods:
        lines.append(f"  {m}")
    lines.append("}" + ("" if not trailing_mods else " " + " ".join(trailing_mods)))
    return "\n".join(lines)


def ground_patterns(q: QueryCandidate, binding: Binding) -> list[GroundedTriple]:
    """Substitute the binding's terms for every pattern variable, in order."""

    def resolve(term: Term) -> Term:
        if not term.is_variable:
            return term
        value = binding.get(term.value)
        if value is None:
            raise UnboundVariable(term.value)
        return value

    return [
        TriplePattern(resolve(p.subject), resolve(p.predicate), resolve(p.object))
        for p in q.patterns
    ]
