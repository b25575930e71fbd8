"""Turn grounded query candidates into natural-language answer texts.

Two modes mirror the two automatic verbalization styles: ``nlg`` renders one
templated clause per grounded triple and joins them with "and"; the
``bag-of-labels`` mode concatenates the labels of every IRI mentioned in the
grounded triples. Fluency is explicitly not a goal; determinism is.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

from .kg import ResultSet
from .sparql import Binding, GroundedTriple, QueryCandidate, Term, ground_patterns

NLG = "nlg"
BAG_OF_LABELS = "bag-of-labels"
MODES = (NLG, BAG_OF_LABELS)

#: Predicate labels opening with one of these phrases render as
#: "{S} is {P} {O}"; everything else uses the possessive "{S}'s {P} is {O}".
NAME_RELATION_PHRASES = ("given name", "family name", "name")

LabelLookup = Callable[[str], str]


@dataclass(frozen=True)
class AnswerText:
    """One single-line verbalization of one result row of one candidate."""

    text: str
    mode: str
    candidate_id: str
    binding_index: int = 0

    def __post_init__(self):
        if not self.text:
            raise ValueError("answer text must be non-empty")
        if "\n" in self.text or "\r" in self.text:
            raise ValueError("answer text must be a single line")
        if self.mode not in MODES:
            raise ValueError(f"unknown verbalization mode {self.mode!r}")
        if self.binding_index < 0:
            raise ValueError("binding index starts at 0")


def as_label_lookup(labels) -> LabelLookup:
    """Accept a mapping, a resolver object, or a plain callable."""
    if callable(labels):
        return labels
    if hasattr(labels, "label"):
        return labels.label
    if isinstance(labels, Mapping):
        return lambda iri: labels[iri]
    raise TypeError(f"cannot use {type(labels).__name__} as a label lookup")


def _text_of(term: Term, lookup: LabelLookup) -> str:
    raw = term.value if term.kind == "literal" else lookup(term.value)
    return " ".join(raw.split()) or term.value


def _uses_is_template(predicate_label: str, phrases: Sequence[str]) -> bool:
    label = predicate_label.lower()
    return any(label == p or label.startswith(p + " ") for p in phrases)


def verbalize_triple(
    triple: GroundedTriple,
    labels,
    *,
    name_relation_phrases: Sequence[str] = NAME_RELATION_PHRASES,
) -> str:
    """One clause per triple: "{S} is {P} {O}" for name-style relations,
    "{S}'s {P} is {O}" otherwise."""
    lookup = as_label_lookup(labels)
    s = _text_of(triple.subject, lookup)
    p = _text_of(triple.predicate, lookup)
    o = _text_of(triple.object, lookup)
    if _uses_is_template(p, name_relation_phrases):
        return f"{s} is {p} {o}"
    return f"{s}'s {p} is {o}"


def verbalize_candidate(
    q: QueryCandidate, binding: Binding, labels, *, binding_index: int = 0
) -> AnswerText:
    """NLG mode: clauses in pattern order, joined with " and ", closed with "."."""
    lookup = as_label_lookup(labels)
    clauses = [verbalize_triple(t, lookup) for t in ground_patterns(q, binding)]
    return AnswerText(" and ".join(clauses) + ".", NLG, q.id, binding_index)


def verbalize_bag_of_labels(
    q: QueryCandidate, binding: Binding, labels, *, binding_index: int = 0
) -> AnswerText:
    """Bag-of-labels mode: labels of every IRI in the grounded triples,
    first-occurrence order, deduplicated by IRI, space-joined."""
    lookup = as_label_lookup(labels)
    seen: list[str] = []
    for triple in ground_patterns(q, binding):
        for term in triple.terms():
            if term.kind == "iri" and term.value not in seen:
                seen.append(term.value)
    text = " ".join(_text_of(Term.iri(iri), lookup) for iri in seen)
    return AnswerText(text, BAG_OF_LABELS, q.id, binding_index)


def verbalize_all(
    q: QueryCandidate,
    rs: ResultSet,
    mode: str,
    labels,
    row_cap: int = 1,
) -> list[AnswerText]:
    """One AnswerText per result row, up to ``row_cap`` (empty result: none).

    The default cap of 1 classifies each candidate once, on the
    deterministically first row of the result set.
    """
    if mode not in MODES:
        raise ValueError(f"unknown verbalization mode {mode!r}")
    render = verbalize_candidate if mode == NLG else verbalize_bag_of_labels
    lookup = as_label_lookup(labels)
    return [
        render(q, row, lookup, binding_index=i)
        for i, row in enumerate(rs.rows[:row_cap])
    ]
