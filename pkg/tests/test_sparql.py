"""Parser, rewrite, serialization, and grounding tests."""

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kgqa_av.sparql import (
    ALL,
    Binding,
    ParseError,
    QueryCandidate,
    Term,
    TriplePattern,
    UnboundVariable,
    ground_patterns,
    has_aggregate,
    parse_query,
    rewrite_select_all,
    serialize,
    strip_unsupported,
)

from conftest import DBO, DBR, GIVEN_NAME_QUERY, KENNEDY_QUERY, WD, WDT


class TestParse:
    def test_single_pattern_query(self):
        q = parse_query(KENNEDY_QUERY)
        assert q.projection == ("answer",)
        assert q.distinct is False
        assert q.patterns == (
            TriplePattern(
                Term.iri(DBR + "John_F._Kennedy"),
                Term.iri(DBO + "deathCause"),
                Term.var("answer"),
            ),
        )
        assert q.modifiers == ()
        assert q.prefixes == {"dbr": DBR, "dbo": DBO}
        assert q.raw_text == KENNEDY_QUERY

    def test_two_pattern_query_with_limit(self):
        q = parse_query(GIVEN_NAME_QUERY)
        assert q.distinct is True
        assert q.projection == ("o2",)
        assert q.patterns == (
            TriplePattern(Term.var("s1"), Term.var("p1"), Term.iri(WD + "Q57747377")),
            TriplePattern(Term.var("s1"), Term.iri(WDT + "P21"), Term.var("o2")),
        )
        assert "LIMIT 1000" in q.modifiers

    def test_empty_pattern_block(self):
        with pytest.raises(ParseError):
            parse_query("SELECT ?x WHERE { }")

    def test_missing_where(self):
        with pytest.raises(ParseError, match="WHERE"):
            parse_query("SELECT ?x { ?x ?p ?o }")

    def test_unbalanced_braces(self):
        with pytest.raises(ParseError):
            parse_query("SELECT ?x WHERE { ?x ?p ?o .")

    def test_unknown_prefix(self):
        with pytest.raises(ParseError, match="prefix"):
            parse_query("SELECT ?x WHERE { foo:a ?p ?x }")

    def test_byte_offset_reported(self):
        bad = "SELECT ?x WHERE { ?x ?p foo:bar }"
        with pytest.raises(ParseError) as err:
            parse_query(bad)
        assert err.value.offset == bad.index("foo:bar")

    def test_projection_var_must_occur_in_pattern(self):
        with pytest.raises(ParseError):
            parse_query("SELECT ?gone WHERE { ?x ?p ?o }")

    def test_unsupported_clause(self):
        text = "SELECT ?x WHERE { ?x ?p ?o . OPTIONAL { ?x ?q ?y } }"
        with pytest.raises(ParseError, match="OPTIONAL"):
            parse_query(text)

    def test_filter_captured_verbatim(self):
        text = (
            "PREFIX wd: <http://www.wikidata.org/entity/>\n"
            "SELECT ?o WHERE { wd:Q1 ?p ?o . FILTER regex(?o, 'Victoria') }"
        )
        q = parse_query(text)
        assert q.modifiers == ("FILTER regex(?o, 'Victoria')",)
        assert len(q.patterns) == 1

    def test_aggregate_captured_as_modifier(self):
        q = parse_query("SELECT (COUNT(?x) AS ?c) WHERE { ?x ?p ?o }")
        assert q.modifiers == ("(COUNT(?x) AS ?c)",)
        assert q.projection == ()
        assert has_aggregate(q)

    def test_predicate_list_and_object_list(self):
        text = (
            "PREFIX wd: <http://www.wikidata.org/entity/>\n"
            "SELECT * WHERE { ?s wd:P1 ?a , ?b ; wd:P2 ?c . }"
        )
        q = parse_query(text)
        shapes = [
            (p.subject.value, p.predicate.value, p.object.value) for p in q.patterns
        ]
        wd = "http://www.wikidata.org/entity/"
        assert shapes == [
            ("s", wd + "P1", "a"),
            ("s", wd + "P1", "b"),
            ("s", wd + "P2", "c"),
        ]

    def test_literal_objects(self):
        q = parse_query('SELECT ?s WHERE { ?s <http://x/p> "born"@en . }')
        assert q.patterns[0].object == Term.literal("born", "en")
        q2 = parse_query("SELECT ?s WHERE { ?s <http://x/p> 42 . }")
        assert q2.patterns[0].object == Term.literal("42")

    def test_integer_object_with_attached_terminator(self):
        # "42." lexes as the integer 42 followed by the statement dot
        q = parse_query("SELECT ?s WHERE { ?s <http://x/p> 42. }")
        assert q.patterns[0].object == Term.literal("42")
        q2 = parse_query("SELECT ?s WHERE { ?s <http://x/p> 4.5 . }")
        assert q2.patterns[0].object == Term.literal("4.5")

    def test_comment_lines_are_skipped(self):
        q = parse_query(KENNEDY_QUERY)
        assert q.raw_text.startswith("# question:")
        assert len(q.patterns) == 1

    def test_rdf_type_shorthand(self):
        q = parse_query("SELECT ?s WHERE { ?s a <http://x/C> . }")
        assert q.patterns[0].predicate.value.endswith("#type")

    def test_raw_text_preserved_byte_exact(self):
        q = parse_query(GIVEN_NAME_QUERY)
        assert q.raw_text == GIVEN_NAME_QUERY

    @given(st.text(max_size=200))
    @settings(max_examples=300, deadline=None)
    def test_arbitrary_input_never_panics(self, text):
        try:
            parse_query(text)
        except ParseError:
            pass

    def test_mutated_real_queries_never_panic(self):
        # mutations of valid text reach deeper parser states than random bytes
        rng = random.Random(99)
        alphabet = "{}()<>?$.;,#\"'\\ \naZ0:_%"
        for base in (KENNEDY_QUERY, GIVEN_NAME_QUERY):
            for _ in range(400):
                chars = list(base)
                for _ in range(rng.randint(1, 4)):
                    op = rng.randrange(3)
                    at = rng.randrange(len(chars))
                    if op == 0:
                        chars[at] = rng.choice(alphabet)
                    elif op == 1:
                        chars.insert(at, rng.choice(alphabet))
                    elif chars:
                        del chars[at]
                try:
                    parse_query("".join(chars))
                except ParseError:
                    pass


class TestStripUnsupported:
    def test_limit_removed(self):
        q = parse_query(GIVEN_NAME_QUERY)
        stripped = strip_unsupported(q)
        assert stripped.modifiers == ()
        assert stripped.patterns == q.patterns
        # original untouched
        assert q.modifiers == ("LIMIT 1000",)

    def test_identity_without_modifiers(self):
        q = parse_query(KENNEDY_QUERY)
        assert strip_unsupported(q).same_structure(q)

    def test_filter_removed_patterns_intact(self):
        cut = KENNEDY_QUERY.rindex("}")
        text = (
            KENNEDY_QUERY[:cut]
            + '    FILTER regex(?answer, "Kennedy")\n'
            + KENNEDY_QUERY[cut:]
        )
        q = parse_query(text)
        assert any(m.startswith("FILTER") for m in q.modifiers)
        stripped = strip_unsupported(q)
        assert stripped.modifiers == ()
        assert stripped.patterns == parse_query(KENNEDY_QUERY).patterns

    def test_aggregates_removed(self):
        q = parse_query("SELECT (COUNT(?x) AS ?c) ?x WHERE { ?x ?p ?o } LIMIT 5")
        stripped = strip_unsupported(q)
        assert stripped.modifiers == ()

    def test_idempotent_and_commutes_with_rewrite(self):
        q = parse_query(GIVEN_NAME_QUERY)
        once = strip_unsupported(q)
        assert strip_unsupported(once) == once
        a = rewrite_select_all(strip_unsupported(q))
        b = strip_unsupported(rewrite_select_all(q))
        assert a == b


class TestRewriteSelectAll:
    def test_projection_becomes_all(self):
        q = rewrite_select_all(parse_query(GIVEN_NAME_QUERY))
        assert q.selects_all
        assert q.distinct is True
        assert q.patterns == parse_query(GIVEN_NAME_QUERY).patterns
        assert "SELECT DISTINCT * WHERE" in serialize(q)

    def test_idempotent(self):
        q = rewrite_select_all(parse_query(GIVEN_NAME_QUERY))
        assert rewrite_select_all(q) == q

    def test_round_trips_through_text(self):
        q = rewrite_select_all(parse_query(KENNEDY_QUERY))
        again = parse_query(serialize(q))
        assert again.same_structure(q)


class TestSerialize:
    def test_round_trip_single_pattern(self):
        q = parse_query(KENNEDY_QUERY)
        assert parse_query(serialize(q)).same_structure(q)

    def test_distinct_keyword_preserved(self):
        q = parse_query(GIVEN_NAME_QUERY)
        assert "SELECT DISTINCT" in serialize(q)
        assert "DISTINCT" not in serialize(parse_query(KENNEDY_QUERY))

    def test_modifiers_reemitted_verbatim(self):
        q = parse_query(GIVEN_NAME_QUERY)
        assert serialize(q).rstrip().endswith("LIMIT 1000")

    def test_round_trip_random_queries(self):
        rng = random.Random(7)
        for case in range(200):
            q = _random_query(rng)
            text = serialize(q)
            again = parse_query(text)
            assert again.same_structure(q), text

    def test_round_trip_literal_escapes(self):
        q = QueryCandidate(
            id="lit",
            patterns=(
                TriplePattern(
                    Term.var("s"),
                    Term.iri("http://x/p"),
                    Term.literal('line"one\nline two', "en"),
                ),
            ),
            projection=("s",),
        )
        assert parse_query(serialize(q)).same_structure(q)


class TestGroundPatterns:
    def test_two_pattern_grounding(self, wikidata_graph):
        q = parse_query(GIVEN_NAME_QUERY)
        row = Binding(
            {
                "s1": Term.iri(WD + "Q16027703"),
                "p1": Term.iri(WDT + "P735"),
                "o2": Term.iri(WD + "Q6581097"),
            }
        )
        grounded = ground_patterns(q, row)
        assert grounded == [
            TriplePattern(
                Term.iri(WD + "Q16027703"),
                Term.iri(WDT + "P735"),
                Term.iri(WD + "Q57747377"),
            ),
            TriplePattern(
                Term.iri(WD + "Q16027703"),
                Term.iri(WDT + "P21"),
                Term.iri(WD + "Q6581097"),
            ),
        ]
        assert all(g.is_ground for g in grounded)

    def test_ground_query_ignores_extra_bindings(self):
        text = "SELECT * WHERE { <http://x/a> <http://x/p> <http://x/b> . }"
        q = parse_query(text)
        assert ground_patterns(q, Binding({})) == list(q.patterns)

    def test_missing_binding_raises(self):
        q = parse_query(KENNEDY_QUERY)
        with pytest.raises(UnboundVariable) as err:
            ground_patterns(q, Binding({}))
        assert err.value.name == "answer"

    def test_output_length_and_no_variables(self):
        rng = random.Random(3)
        for _ in range(100):
            q = _random_query(rng)
            binding = Binding(
                {name: Term.iri(f"http://t/{name}") for name in q.variables()}
            )
            grounded = ground_patterns(q, binding)
            assert len(grounded) == len(q.patterns)
            assert all(g.is_ground for g in grounded)


def _random_query(rng: random.Random) -> QueryCandidate:
    """Small random candidates exercising projection/distinct/modifier combos."""
    iris = [f"http://example.org/t{i}" for i in range(4)]
    var_names = ["x", "y", "z"]

    def term(allow_literal):
        roll = rng.random()
        if roll < 0.4:
            return Term.var(rng.choice(var_names))
        if allow_literal and roll < 0.55:
            return Term.literal(rng.choice(["42", "born in", "a 'quoted' bit"]))
        return Term.iri(rng.choice(iris))

    patterns = tuple(
        TriplePattern(term(False), term(False), term(True))
        for _ in range(rng.randint(1, 3))
    )
    variables: list[str] = []
    for p in patterns:
        variables.extend(v for v in p.variables() if v not in variables)
    if variables and rng.random() < 0.5:
        k = rng.randint(1, len(variables))
        projection = tuple(rng.sample(variables, k))
    else:
        projection = ALL
    modifiers = []
    if rng.random() < 0.3:
        modifiers.append("(COUNT(?%s) AS ?n)" % rng.choice(var_names))
    if rng.random() < 0.3:
        modifiers.append(
            rng.choice(
                (
                    "FILTER (?x != <http://example.org/t0>)",
                    "FILTER regex(?x, 'Vic(toria)')",
                )
            )
        )
    if rng.random() < 0.4:
        modifiers.append("LIMIT %d" % rng.randint(1, 99))
    return QueryCandidate(
        id=f"rnd{rng.randrange(1 << 30)}",
        patterns=patterns,
        projection=projection,
        distinct=rng.random() < 0.5,
        modifiers=tuple(modifiers),
        prefixes={},
    )
