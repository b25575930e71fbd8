"""Shared fixtures: query shapes, a small Wikidata-style graph, a BGP oracle."""

import itertools

import pytest

from kgqa_av.kg import MockGraph
from kgqa_av.sparql import Term

WD = "http://www.wikidata.org/entity/"
WDT = "http://www.wikidata.org/prop/direct/"
DBR = "http://dbpedia.org/resource/"
DBO = "http://dbpedia.org/ontology/"

# Cause-of-death lookup over DBpedia, single fixed-subject pattern.
KENNEDY_QUERY = """\
# question:
#     What was the cause of death of John Kennedy?
# query:
PREFIX dbr: <http://dbpedia.org/resource/>
PREFIX dbo: <http://dbpedia.org/ontology/>
SELECT ?answer WHERE {
    dbr:John_F._Kennedy dbo:deathCause ?answer .
}
"""

# Two-pattern Wikidata query with DISTINCT and a LIMIT tail.
GIVEN_NAME_QUERY = """\
PREFIX wd: <http://www.wikidata.org/entity/>
PREFIX wdt: <http://www.wikidata.org/prop/direct/>
SELECT DISTINCT ?o2 WHERE {
    ?s1  ?p1  wd:Q57747377 .
    ?s1  wdt:P21 ?o2 .
}  LIMIT 1000
"""


@pytest.fixture
def wikidata_graph():
    """Two people sharing a given name, each with a sex-or-gender statement."""
    le_cat = WD + "Q16027703"
    ledoux = WD + "Q2976815"
    given_name = WDT + "P735"
    sex_or_gender = WDT + "P21"
    claude_nicolas = WD + "Q57747377"
    male = WD + "Q6581097"
    triples = [
        (le_cat, given_name, Term.iri(claude_nicolas)),
        (le_cat, sex_or_gender, Term.iri(male)),
        (ledoux, given_name, Term.iri(claude_nicolas)),
        (ledoux, sex_or_gender, Term.iri(male)),
    ]
    labels = {
        le_cat: {"en": "Claude-Nicolas Le Cat"},
        ledoux: {"en": "Claude-Nicolas Ledoux"},
        given_name: {"en": "given name"},
        sex_or_gender: {"en": "sex or gender"},
        claude_nicolas: {"en": "Claude-Nicolas"},
        male: {"en": "male"},
    }
    return MockGraph(triples, labels)


def brute_force_bgp(patterns, graph: MockGraph) -> set:
    """Independent oracle: full enumeration of every assignment of pattern
    variables to graph terms, checking each pattern by set membership."""
    variables = []
    for p in patterns:
        for v in p.variables():
            if v not in variables:
                variables.append(v)
    universe = sorted(graph.terms(), key=lambda t: t.sort_key())
    solutions = set()
    for combo in itertools.product(universe, repeat=len(variables)):
        env = dict(zip(variables, combo))

        def instantiate(term):
            return env[term.value] if term.is_variable else term

        ok = True
        for p in patterns:
            s, pr, o = (instantiate(t) for t in p.terms())
            if s.kind != "iri" or pr.kind != "iri":
                ok = False
                break
            if (s.value, pr.value, o) not in graph.triples:
                ok = False
                break
        if ok:
            solutions.add(tuple(env[v] for v in variables))
    return solutions


@pytest.fixture
def dbpedia_graph():
    jfk = DBR + "John_F._Kennedy"
    death_cause = DBO + "deathCause"
    assassination = DBR + "Assassination_of_John_F._Kennedy"
    triples = [(jfk, death_cause, Term.iri(assassination))]
    labels = {
        jfk: {"en": "John F. Kennedy"},
        death_cause: {"en": "death cause"},
        # the assassination resource has no stored label: URI fallback territory
    }
    return MockGraph(triples, labels)
