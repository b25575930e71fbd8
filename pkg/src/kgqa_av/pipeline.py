"""Relevance judging, score-based filtering, and before/after comparison.

A RankedAnswerList holds one question's candidates in their original rank
order together with verbalizations, gold-label relevance judgments, and
(after filtering) classifier scores. Filtering only ever removes entries;
survivor order is the original order. Quality is compared with macro-averaged
P@k and NDCG@k over the same question set before and after filtering.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from typing import Sequence

from .classifier import CORRECT, PairScore
from .dataset import VanillaRecord
from .errors import BackendError, DataError
from .kg import ResultSet, execute
from .metrics import ndcg_at_k, precision_at_k
from .qa import CandidateList
from .sparql import (
    ParseError,
    QueryCandidate,
    UnboundVariable,
    ground_patterns,
    has_aggregate,
    rewrite_select_all,
    strip_unsupported,
)
from .verbalize import AnswerText, as_label_lookup, verbalize_all

logger = logging.getLogger(__name__)

OBJECT_LABEL = "object-label"
SUBJECT_LABEL = "subject-label"
NO_MATCH = "none"


class MismatchedQuestions(DataError):
    """Before/after comparison got two different question sets."""


@dataclass(frozen=True)
class RelevanceJudgment:
    candidate_id: str
    relevant: bool
    matched_via: str = NO_MATCH

    def __post_init__(self):
        if self.matched_via not in (OBJECT_LABEL, SUBJECT_LABEL, NO_MATCH):
            raise ValueError(f"unknown match kind {self.matched_via!r}")
        if (self.matched_via == NO_MATCH) == self.relevant:
            raise ValueError("matched_via is 'none' exactly when not relevant")


@dataclass(frozen=True)
class RankedEntry:
    candidate: QueryCandidate
    answer_text: AnswerText | None
    judgment: RelevanceJudgment
    score: PairScore | None = None


@dataclass(frozen=True)
class RankedAnswerList:
    question_id: str
    question: str
    entries: tuple[RankedEntry, ...]
    removed: int = 0

    def relevant_count(self) -> int:
        return sum(1 for e in self.entries if e.judgment.relevant)

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class EvaluationConfig:
    k_values: tuple[int, ...] = (1, 5)
    ideal_basis: str = "original-list"

    def __post_init__(self):
        if not self.k_values or any(k < 1 for k in self.k_values):
            raise ValueError("every k must be >= 1")
        if self.ideal_basis != "original-list":
            raise ValueError("only the original-list ideal basis is supported")


def normalize_label(text: str) -> str:
    return " ".join(text.split()).lower()


def judge(
    candidate: QueryCandidate,
    rs: ResultSet,
    gold: VanillaRecord,
    labels,
) -> RelevanceJudgment:
    """Relevant iff some grounded triple's predicate label matches the gold
    relation and its object (or subject) label matches the gold answer.

    Labels compare case-insensitively after whitespace normalization; any
    matching row suffices, ambiguity is resolved in favour of relevance.
    """
    lookup = as_label_lookup(labels)
    want_relation = normalize_label(gold.question_relation)
    want_answer = normalize_label(gold.answer)

    def text_of(term) -> str:
        return term.value if term.kind == "literal" else lookup(term.value)

    for row in rs.rows:
        try:
            grounded = ground_patterns(candidate, row)
        except UnboundVariable:
            continue
        for triple in grounded:
            if normalize_label(text_of(triple.predicate)) != want_relation:
                continue
            if normalize_label(text_of(triple.object)) == want_answer:
                return RelevanceJudgment(candidate.id, True, OBJECT_LABEL)
            if normalize_label(text_of(triple.subject)) == want_answer:
                return RelevanceJudgment(candidate.id, True, SUBJECT_LABEL)
    return RelevanceJudgment(candidate.id, False, NO_MATCH)


class OracleScorer:
    """Test-only scorer: the gold relevance judgment, as a score."""

    threshold = 0.5

    def score_entry(self, question: str, entry: RankedEntry) -> float:
        return 1.0 if entry.judgment.relevant else 0.0


def _entry_scores(
    lst: RankedAnswerList, scorer
) -> list[float | None]:
    """Score every entry; entries without an answer text score None."""
    if hasattr(scorer, "score_entry"):
        return [scorer.score_entry(lst.question, e) for e in lst.entries]
    scorable = [
        (i, e.answer_text.text) for i, e in enumerate(lst.entries) if e.answer_text
    ]
    scores: list[float | None] = [None] * len(lst.entries)
    if not scorable:
        return scores
    if hasattr(scorer, "score_batch"):
        values = scorer.score_batch([(lst.question, text) for _, text in scorable])
    else:
        fn = scorer.score if hasattr(scorer, "score") else scorer
        values = [fn(lst.question, text) for _, text in scorable]
    for (i, _), value in zip(scorable, values):
        scores[i] = value
    return scores


def filter_list(
    lst: RankedAnswerList, scorer, threshold: float = 0.5
) -> RankedAnswerList:
    """Keep exactly the entries scoring >= threshold, in their original order.

    Entries that could not be verbalized (no answer text) cannot be validated
    and are removed. The removed count is recorded on the result.
    """
    kept = []
    for entry, value in zip(lst.entries, _entry_scores(lst, scorer)):
        if value is None or value < threshold:
            continue
        kept.append(replace(entry, score=PairScore(value, CORRECT)))
    return RankedAnswerList(
        question_id=lst.question_id,
        question=lst.question,
        entries=tuple(kept),
        removed=len(lst.entries) - len(kept),
    )


# --------------------------------------------------------------------------
# Per-question pipeline assembly
# --------------------------------------------------------------------------


def build_ranked_list(
    gold: VanillaRecord,
    candidates: CandidateList,
    endpoint,
    labels,
    mode: str,
    *,
    drop_stripped: bool = False,
) -> RankedAnswerList:
    """Execute, verbalize, and judge one question's candidates (pre-filter).

    Candidate-level failures are logged and recorded as unjudgeable entries
    (not relevant, no text) so the question keeps its place in the metrics.
    """
    entries = []
    for candidate in candidates.candidates:
        if drop_stripped and has_aggregate(candidate):
            continue
        try:
            runnable = rewrite_select_all(strip_unsupported(candidate))
            rs = execute(runnable, endpoint)
            texts = verbalize_all(runnable, rs, mode, labels, row_cap=1)
            judgment = judge(runnable, rs, gold, labels)
            entries.append(
                RankedEntry(candidate, texts[0] if texts else None, judgment)
            )
        except (ParseError, UnboundVariable, BackendError) as exc:
            logger.warning(
                "question %s candidate %s failed: %s", gold.question_id, candidate.id, exc
            )
            entries.append(
                RankedEntry(
                    candidate, None, RelevanceJudgment(candidate.id, False, NO_MATCH)
                )
            )
    return RankedAnswerList(gold.question_id, gold.question, tuple(entries))


# --------------------------------------------------------------------------
# Before/after comparison
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class MetricChange:
    before: float
    after: float

    @property
    def relative_change(self) -> float | None:
        if self.before > 0:
            return (self.after - self.before) / self.before
        return None


@dataclass
class QualityReport:
    metrics: dict[str, MetricChange]
    question_count: int
    mean_removed: float
    zero_candidate_questions: int
    per_question: list[dict] = field(default_factory=list)
    label: str = ""

    def metric_names(self) -> list[str]:
        return list(self.metrics)

    def as_dict(self) -> dict:
        return {
            "label": self.label,
            "question_count": self.question_count,
            "mean_removed": self.mean_removed,
            "zero_candidate_questions": self.zero_candidate_questions,
            "metrics": {
                name: {
                    "before": change.before,
                    "after": change.after,
                    "relative_change": change.relative_change,
                }
                for name, change in self.metrics.items()
            },
        }


def compare(
    before: Sequence[RankedAnswerList],
    after: Sequence[RankedAnswerList],
    config: EvaluationConfig = EvaluationConfig(),
    label: str = "",
) -> QualityReport:
    """Macro-averaged quality before vs after filtering over one question set.

    NDCG's ideal basis is the pre-filter list on both sides, so the pair of
    numbers shares a normalizer. Questions with zero candidates count as
    zeros and are tallied separately.
    """
    before_by_id = {lst.question_id: lst for lst in before}
    after_by_id = {lst.question_id: lst for lst in after}
    if set(before_by_id) != set(after_by_id) or len(before) != len(before_by_id):
        raise MismatchedQuestions(
            "before/after must cover the same questions exactly once"
        )

    names: list[str] = []
    for k in config.k_values:
        names.extend((f"P@{k}", f"NDCG@{k}"))
    sums = {name: [0.0, 0.0] for name in names}
    removed_total = 0
    zero_candidates = 0
    per_question = []

    for question_id, pre in before_by_id.items():
        post = after_by_id[question_id]
        total_relevant = pre.relevant_count()
        if len(pre) == 0:
            zero_candidates += 1
        removed_total += post.removed
        row = {
            "question_id": question_id,
            "relevant_total": total_relevant,
            "candidates": len(pre),
            "survivors": len(post),
            "removed": post.removed,
        }
        for k in config.k_values:
            values = {
                f"P@{k}": (precision_at_k(pre, k), precision_at_k(post, k)),
                f"NDCG@{k}": (
                    ndcg_at_k(pre, k, total_relevant),
                    ndcg_at_k(post, k, total_relevant),
                ),
            }
            for name, (b, a) in values.items():
                sums[name][0] += b
                sums[name][1] += a
                row[f"{name} before"] = b
                row[f"{name} after"] = a
        per_question.append(row)

    n = len(before_by_id)
    metrics = {
        name: MetricChange(before=total[0] / n, after=total[1] / n)
        for name, total in sums.items()
    }
    return QualityReport(
        metrics=metrics,
        question_count=n,
        mean_removed=removed_total / n,
        zero_candidate_questions=zero_candidates,
        per_question=sorted(per_question, key=lambda r: r["question_id"]),
        label=label,
    )


# --------------------------------------------------------------------------
# Report rendering
# --------------------------------------------------------------------------


def _fmt(value: float | None) -> str:
    if value is None:
        return "n/a"
    return f"{value:.4f}"


def _fmt_pct(value: float | None) -> str:
    if value is None:
        return "n/a"
    return f"{value * 100:+.1f}%"


def render_markdown(reports: Sequence[QualityReport]) -> str:
    """Side-by-side before/after table, one column pair per run label."""
    names = reports[0].metric_names()
    lines = ["| Metric | Before AV | " + " | ".join(
        f"After AV ({r.label or 'run'}) | Change ({r.label or 'run'})" for r in reports
    ) + " |"]
    lines.append("| --- | --- | " + " | ".join("--- | ---" for _ in reports) + " |")
    for name in names:
        cells = [name, _fmt(reports[0].metrics[name].before)]
        for report in reports:
            change = report.metrics[name]
            cells.append(_fmt(change.after))
            cells.append(_fmt_pct(change.relative_change))
        lines.append("| " + " | ".join(cells) + " |")
    lines.append("")
    for report in reports:
        lines.append(
            f"- {report.label or 'run'}: {report.question_count} questions, "
            f"mean candidates removed {report.mean_removed:.1f}, "
            f"{report.zero_candidate_questions} question(s) with no candidates"
        )
    return "\n".join(lines) + "\n"


def render_csv(reports: Sequence[QualityReport]) -> str:
    rows = ["metric,run,before,after,relative_change"]
    for report in reports:
        for name, change in report.metrics.items():
            rows.append(
                ",".join(
                    (
                        name,
                        report.label or "run",
                        _fmt(change.before),
                        _fmt(change.after),
                        "" if change.relative_change is None else f"{change.relative_change:.6f}",
                    )
                )
            )
    return "\n".join(rows) + "\n"


def per_question_jsonl(report: QualityReport) -> str:
    return "".join(
        json.dumps({"run": report.label or "run", **row}, sort_keys=True) + "\n"
        for row in report.per_question
    )
