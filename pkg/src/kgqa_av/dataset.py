"""Dataset ingestion, negative sampling, and train/test splitting.

Records follow the six-field question/answer-sentence schema. Correct pairs
come straight from a record; incorrect pairs take their answer sentence from
a uniformly drawn different record. Everything is a pure function of
(records, config): reruns with the same seed are byte-identical.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .errors import DataError

logger = logging.getLogger(__name__)

CORRECT = "correct"
INCORRECT = "incorrect"

_FIELDS = (
    "question_id",
    "question",
    "answer",
    "answer_sentence",
    "question_entity_label",
    "question_relation",
)


class FormatError(DataError):
    """Top-level file structure is neither a JSON array nor JSON lines."""


class InsufficientRecords(DataError):
    """Negative sampling needs at least two records."""


@dataclass(frozen=True)
class VanillaRecord:
    question_id: str
    question: str
    answer: str
    answer_sentence: str
    question_entity_label: str
    question_relation: str

    @classmethod
    def from_dict(cls, raw: dict) -> "VanillaRecord":
        missing = [f for f in _FIELDS if f not in raw]
        if missing:
            raise ValueError(f"missing fields: {', '.join(missing)}")
        values = {f: _coerce(raw[f]) for f in _FIELDS}
        if not values["question"] or not values["answer_sentence"]:
            raise ValueError("question and answer_sentence must be non-empty")
        return cls(**values)


def _coerce(value) -> str:
    if value is None:
        return ""
    return value if isinstance(value, str) else str(value)


@dataclass(frozen=True)
class LabeledQAPair:
    question: str
    answer_text: str
    label: str
    source_question_id: str
    source_answer_id: str

    def __post_init__(self):
        if self.label not in (CORRECT, INCORRECT):
            raise ValueError(f"unknown label {self.label!r}")
        ids_match = self.source_question_id == self.source_answer_id
        if (self.label == CORRECT) != ids_match:
            raise ValueError("label must be 'correct' exactly when both ids match")


@dataclass(frozen=True)
class SamplingConfig:
    negatives_per_positive: int = 1
    seed: int = 0
    split_ratio: float = 0.67
    group_by_question: bool = False

    def __post_init__(self):
        if self.negatives_per_positive < 1:
            raise ValueError("negatives_per_positive must be >= 1")
        if not 0.0 < self.split_ratio < 1.0:
            raise ValueError("split_ratio must be strictly between 0 and 1")


def load_vanilla(path: str | Path) -> list[VanillaRecord]:
    """Load records from a JSON array or JSON-lines file, in file order.

    Records that fail field validation are skipped with a warning; counts are
    logged. An empty input yields an empty list (with a warning), not an error.
    """
    path = Path(path)
    text = path.read_text("utf-8")
    rows = _parse_rows(text, path.name)
    records: list[VanillaRecord] = []
    skipped = 0
    for index, raw in enumerate(rows):
        try:
            records.append(VanillaRecord.from_dict(raw))
        except ValueError as exc:
            skipped += 1
            logger.warning("%s: skipping record %d: %s", path.name, index, exc)
    if not records:
        logger.warning("%s: no records", path.name)
    logger.info("%s: loaded %d records, skipped %d", path.name, len(records), skipped)
    return records


def _parse_rows(text: str, name: str) -> list[dict]:
    stripped = text.lstrip()
    if stripped.startswith("["):
        try:
            doc = json.loads(text)
        except ValueError as exc:
            raise FormatError(f"{name}: invalid JSON array: {exc}") from exc
        if not isinstance(doc, list) or not all(isinstance(r, dict) for r in doc):
            raise FormatError(f"{name}: expected an array of objects")
        return doc
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
        except ValueError as exc:
            raise FormatError(f"{name}:{lineno}: invalid JSON line: {exc}") from exc
        if not isinstance(row, dict):
            raise FormatError(f"{name}:{lineno}: expected a JSON object per line")
        rows.append(row)
    return rows


def negative_sample(
    records: Sequence[VanillaRecord], cfg: SamplingConfig
) -> list[LabeledQAPair]:
    """One correct pair per record plus N mispaired incorrect pairs, shuffled.

    Incorrect answers are drawn uniformly and resampled whenever the draw
    lands on the source record (or on an identically-keyed record), so a
    self-pair can never be emitted.
    """
    if len(records) < 2:
        raise InsufficientRecords(
            f"negative sampling needs >= 2 records, got {len(records)}"
        )
    rng = random.Random(cfg.seed)
    pairs: list[LabeledQAPair] = []
    for index, record in enumerate(records):
        pairs.append(
            LabeledQAPair(
                question=record.question,
                answer_text=record.answer_sentence,
                label=CORRECT,
                source_question_id=record.question_id,
                source_answer_id=record.question_id,
            )
        )
        for _ in range(cfg.negatives_per_positive):
            while True:
                j = rng.randrange(len(records))
                other = records[j]
                if j != index and other.question_id != record.question_id:
                    break
            pairs.append(
                LabeledQAPair(
                    question=record.question,
                    answer_text=other.answer_sentence,
                    label=INCORRECT,
                    source_question_id=record.question_id,
                    source_answer_id=other.question_id,
                )
            )
    rng.shuffle(pairs)
    return pairs


def split(
    pairs: Sequence[LabeledQAPair], cfg: SamplingConfig
) -> tuple[list[LabeledQAPair], list[LabeledQAPair]]:
    """Disjoint train/test cover with |train| = round(ratio * N), seed-shuffled.

    With ``group_by_question`` set, whole question groups go to one side, so
    no question string straddles the split (train size then lands near, not
    exactly at, the ratio).
    """
    if not pairs:
        raise ValueError("cannot split an empty pair list")
    rng = random.Random(cfg.seed)
    target = round(cfg.split_ratio * len(pairs))
    if target == 0:
        target = 1  # degenerate inputs round up to train

    if not cfg.group_by_question:
        order = list(range(len(pairs)))
        rng.shuffle(order)
        train_idx = sorted(order[:target])
        test_idx = sorted(order[target:])
        return [pairs[i] for i in train_idx], [pairs[i] for i in test_idx]

    groups: dict[str, list[int]] = {}
    for i, pair in enumerate(pairs):
        groups.setdefault(pair.question, []).append(i)
    keys = sorted(groups)
    rng.shuffle(keys)
    train_idx: list[int] = []
    test_idx: list[int] = []
    for key in keys:
        bucket = train_idx if len(train_idx) < target else test_idx
        bucket.extend(groups[key])
    if not test_idx and len(keys) > 1:
        test_idx = groups[keys[-1]]
        train_idx = [i for i in train_idx if i not in set(test_idx)]
    return [pairs[i] for i in sorted(train_idx)], [pairs[i] for i in sorted(test_idx)]


def write_pairs_jsonl(pairs: Iterable[LabeledQAPair], path: str | Path) -> int:
    """Serialize pairs one JSON object per line; returns the pair count."""
    count = 0
    with open(path, "w", encoding="utf-8") as handle:
        for pair in pairs:
            handle.write(
                json.dumps(
                    {
                        "question": pair.question,
                        "answer": pair.answer_text,
                        "label": pair.label,
                        "source_question_id": pair.source_question_id,
                        "source_answer_id": pair.source_answer_id,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )
            count += 1
    return count


def read_pairs_jsonl(path: str | Path) -> list[LabeledQAPair]:
    pairs = []
    for lineno, line in enumerate(Path(path).read_text("utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
            pairs.append(
                LabeledQAPair(
                    question=row["question"],
                    answer_text=row["answer"],
                    label=row["label"],
                    source_question_id=row["source_question_id"],
                    source_answer_id=row["source_answer_id"],
                )
            )
        except (ValueError, KeyError, TypeError) as exc:
            raise FormatError(f"{path}:{lineno}: bad pair row: {exc}") from exc
    return pairs
