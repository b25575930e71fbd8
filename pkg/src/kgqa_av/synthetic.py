"""Deterministic synthetic KGQA world for mock runs and experiments.

The world holds N entity records, each with a three-word name, a gold
relation, and a unique three-word answer entity, all backed by an executable
MockGraph with English labels. Names compose from small shared vocabularies,
so a text classifier can learn the matching rule from some records and apply
it to others. A MockKGQA backend built over the world emits per-question
candidate lists whose designated correct candidate grounds to the gold
answer label; everything is a pure function of (seed, question).
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .dataset import VanillaRecord
from .kg import MockEndpoint, MockGraph, MockLabelResolver
from .qa import CandidateList, MockKGQAConfig, _parse_candidates, stable_seed

RELATION_PHRASES = (
    "birth place",
    "death cause",
    "native language",
    "field of work",
    "favorite drink",
    "home port",
    "parent company",
    "capital city",
)

_FIRST = (
    "amber", "basil", "cedar", "dahlia", "ember", "fennel", "garnet", "hazel",
    "indigo", "juniper", "koa", "laurel", "maple", "nutmeg", "ochre", "pepper",
    "quartz", "rowan", "saffron", "tansy", "umber", "violet", "willow", "yarrow",
    "zinnia", "aster", "birch", "clover", "dune", "elm",
)
_MIDDLE = (
    "otter", "heron", "lynx", "marten", "ibex", "falcon", "badger", "stoat",
    "plover", "newt", "vole", "shrike", "tapir", "serow", "dormouse", "magpie",
    "weasel", "curlew", "gannet", "pika", "skink", "bittern", "hoopoe", "avocet",
    "siskin", "dunnock", "wigeon", "smew", "brant", "scaup",
)
_LAST = (
    "north", "vale", "brook", "cliff", "marsh", "field", "grove", "ridge",
    "glen", "moor", "fen", "heath", "holt", "mere", "shaw", "wold",
    "dale", "combe", "garth", "hurst", "lea", "royd", "thwaite", "toft",
    "worth", "wick", "stead", "ham", "ford", "bourne",
)
_ANS_A = (
    "arden", "belmar", "corwen", "darvel", "elgin", "falmer", "girvan", "harlow",
    "irvine", "jedburgh", "kelso", "lerwick", "melrose", "nairn", "oban", "peebles",
    "quorn", "renfrew", "selkirk", "tain", "ullapool", "voe", "walkern", "yell",
    "zetland", "alloa", "brechin", "cupar", "dunbar", "errol",
)
_ANS_B = (
    "harbour", "summit", "hollow", "terrace", "crossing", "landing", "junction",
    "quay", "basin", "plateau", "cove", "bluff", "spur", "knoll", "strand",
    "causeway", "viaduct", "esplanade", "wharf", "lagoon", "cirque", "scarp",
    "tor", "gorge", "shoal", "bar", "delta", "bight", "sound", "reach",
)
_ANS_C = (
    "one", "two", "three", "four", "five", "six", "seven", "eight", "nine",
    "ten", "eleven", "twelve", "thirteen", "south", "east", "west", "upper",
    "lower", "inner", "outer", "old", "new", "great", "little", "high",
    "low", "mid", "far", "near", "twin",
)

ENTITY_NS = "http://mock.kg/entity/"
RELATION_NS = "http://mock.kg/relation/"


def _three_word_name(vocab_a, vocab_b, vocab_c, combo_index: int) -> str:
    a = vocab_a[combo_index % len(vocab_a)]
    rest = combo_index // len(vocab_a)
    b = vocab_b[rest % len(vocab_b)]
    c = vocab_c[rest // len(vocab_b) % len(vocab_c)]
    return f"{a} {b} {c}"


@dataclass(frozen=True)
class SyntheticWorldConfig:
    n_records: int = 500
    n_questions: int | None = None  # defaults to n_records
    relations_per_entity: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.n_records < 2:
            raise ValueError("the world needs at least two records")
        if self.n_questions is not None and self.n_questions > self.n_records:
            raise ValueError("cannot ask more questions than there are records")
        limit = len(_FIRST) * len(_MIDDLE) * len(_LAST)
        if self.n_records * self.relations_per_entity > limit:
            raise ValueError("vocabulary too small for this many unique names")


class SyntheticWorld:
    def __init__(self, cfg: SyntheticWorldConfig):
        self.cfg = cfg
        rng = random.Random(stable_seed("world", cfg.seed))
        n = cfg.n_records

        name_space = len(_FIRST) * len(_MIDDLE) * len(_LAST)
        entity_combos = rng.sample(range(name_space), n)
        # one unique answer-side name per (entity, relation) slot
        answer_combos = rng.sample(range(name_space), n * cfg.relations_per_entity)

        triples = []
        labels: dict[str, dict[str, str]] = {}
        records = []
        self.gold_relation_index: list[int] = []
        self.entity_iris: list[str] = []
        self.relation_slots: list[list[int]] = []

        for k, phrase in enumerate(RELATION_PHRASES):
            iri = f"{RELATION_NS}r{k}"
            labels[iri] = {"en": phrase}

        for i in range(n):
            entity_iri = f"{ENTITY_NS}e{i}"
            entity_label = _three_word_name(_FIRST, _MIDDLE, _LAST, entity_combos[i])
            labels[entity_iri] = {"en": entity_label}
            self.entity_iris.append(entity_iri)

            gold_k = i % len(RELATION_PHRASES)
            slots = [
                (gold_k + j) % len(RELATION_PHRASES)
                for j in range(cfg.relations_per_entity)
            ]
            self.gold_relation_index.append(gold_k)
            self.relation_slots.append(slots)

            for j, k in enumerate(slots):
                obj_iri = f"{ENTITY_NS}a{i}_{k}"
                obj_label = _three_word_name(
                    _ANS_A, _ANS_B, _ANS_C, answer_combos[i * cfg.relations_per_entity + j]
                )
                labels[obj_iri] = {"en": obj_label}
                triples.append((entity_iri, f"{RELATION_NS}r{k}", obj_iri))

            relation_label = RELATION_PHRASES[gold_k]
            answer_label = labels[f"{ENTITY_NS}a{i}_{gold_k}"]["en"]
            records.append(
                VanillaRecord(
                    question_id=f"q{i:05d}",
                    question=f"What is the {relation_label} of {entity_label}?",
                    answer=answer_label,
                    answer_sentence=f"{entity_label}'s {relation_label} is {answer_label}.",
                    question_entity_label=entity_label,
                    question_relation=relation_label,
                )
            )

        self.records = records
        self.graph = MockGraph(triples, labels)
        self.resolver = MockLabelResolver(self.graph)
        self.index_by_question = {r.question: i for i, r in enumerate(records)}
        self.record_by_id = {r.question_id: r for r in records}

    @property
    def n_questions(self) -> int:
        return self.cfg.n_questions or self.cfg.n_records

    def questions(self) -> list[str]:
        return [r.question for r in self.records[: self.n_questions]]

    def question_records(self) -> list[VanillaRecord]:
        return self.records[: self.n_questions]

    def endpoint(self, row_cap: int = 1000) -> MockEndpoint:
        return MockEndpoint(self.graph, row_cap=row_cap)

    def candidate_sparql(self, entity_index: int, relation_index: int) -> str:
        subject = self.entity_iris[entity_index]
        predicate = f"{RELATION_NS}r{relation_index}"
        return f"SELECT ?answer WHERE {{ <{subject}> <{predicate}> ?answer . }} LIMIT 1000"


class MockKGQA:
    """Candidate lists drawn deterministically over a SyntheticWorld.

    The correct candidate (``candidate_sparql(entity, gold relation)``) lands
    at a rank drawn from the configured distribution, or nowhere for "absent"
    draws; every other slot holds a distinct wrong (entity, relation) lookup
    that still executes against the world's graph.
    """

    def __init__(self, config: MockKGQAConfig, world: SyntheticWorld):
        available = len(world.records) * world.cfg.relations_per_entity
        if config.candidates_per_question > available - 1:
            raise ValueError("world too small for the requested candidate count")
        self.config = config
        self.world = world
        self.cache_namespace = f"mock|{config.seed}|{config.candidates_per_question}"

    def fetch(self, question: str) -> list[str]:
        index = self.world.index_by_question.get(question)
        if index is None:
            return []
        cfg = self.config
        rng = random.Random(stable_seed("kgqa", cfg.seed, question))
        correct_rank = cfg.correct_rank.draw(rng)
        gold_pair = (index, self.world.gold_relation_index[index])

        n_records = len(self.world.records)
        distractors: list[tuple[int, int]] = []
        seen = {gold_pair}
        while len(distractors) < cfg.candidates_per_question - (correct_rank is not None):
            j = rng.randrange(n_records)
            k = rng.choice(self.world.relation_slots[j])
            if (j, k) in seen:
                continue
            seen.add((j, k))
            distractors.append((j, k))

        texts = []
        cursor = 0
        for position in range(1, cfg.candidates_per_question + 1):
            if position == correct_rank:
                texts.append(self.world.candidate_sparql(*gold_pair))
            else:
                texts.append(self.world.candidate_sparql(*distractors[cursor]))
                cursor += 1
        return texts

    def correct_rank_for(self, question: str) -> int | None:
        """Where this question's correct candidate was placed (None = absent)."""
        rng = random.Random(stable_seed("kgqa", self.config.seed, question))
        return self.config.correct_rank.draw(rng)


def parse_candidate_list(question: str, texts: list[str]) -> CandidateList:
    return _parse_candidates(question, texts)
