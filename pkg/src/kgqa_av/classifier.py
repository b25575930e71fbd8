"""Question/answer pair scoring: built-in baseline, remote client, metrics.

The baseline is a logistic-regression model over signed hashed n-grams
(word unigrams/bigrams and character trigrams of each side, plus crossed
word unigrams of the two sides), trained by plain SGD with a per-epoch
shuffle keyed on the seed. It stands in for a heavyweight sequence-pair
model at desk scale; the real thing stays behind the remote wire protocol
implemented by RemoteClassifier.
"""

from __future__ import annotations

import json
import logging
import math
import re
import struct
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path
from statistics import fmean, pstdev
from typing import Callable, Iterable, Sequence

import numpy as np
import requests

from .dataset import CORRECT, INCORRECT, LabeledQAPair, SamplingConfig, negative_sample, split
from .errors import BackendError, ConfigError, DataError

logger = logging.getLogger(__name__)

DEFAULT_DIM = 1 << 18
DEFAULT_THRESHOLD = 0.5

_TOKEN_RE = re.compile(r"[a-z0-9]+")
_MODEL_MAGIC = b"KAVM\x01"


class DegenerateData(DataError):
    """Training data carries only one of the two labels."""


class RemoteUnavailable(BackendError):
    """Classifier service cannot be reached."""


class RemoteProtocolError(BackendError):
    """Classifier service answered outside the wire contract."""


@dataclass(frozen=True)
class PairScore:
    score: float
    label: str

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score out of range: {self.score}")
        if self.label not in (CORRECT, INCORRECT):
            raise ValueError(f"unknown label {self.label!r}")


@dataclass(frozen=True)
class TrainConfig:
    dim: int = DEFAULT_DIM
    epochs: int = 5
    learning_rate: float = 0.5
    threshold: float = DEFAULT_THRESHOLD

    def __post_init__(self):
        if self.dim <= 0 or self.dim & (self.dim - 1):
            raise ValueError("dim must be a power of two")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


def sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def featurize(question: str, answer: str, dim: int = DEFAULT_DIM) -> dict[int, float]:
    """Signed hashed features of a lowercased question/answer pair.

    Question features carry a ``q:`` prefix, answer features ``a:``, and the
    cross of the two sides' word unigrams ``qa:``; swapping the sides
    therefore changes the vector. Deterministic across runs and processes.
    """
    feats: dict[int, float] = {}

    def add(feature: str, weight: float = 1.0) -> None:
        h = zlib.crc32(feature.encode("utf-8"))
        index = h & (dim - 1)
        signed = weight if h & 0x80000000 else -weight
        feats[index] = feats.get(index, 0.0) + signed

    q_tokens = _TOKEN_RE.findall(question.lower())
    a_tokens = _TOKEN_RE.findall(answer.lower())
    for prefix, tokens in (("q", q_tokens), ("a", a_tokens)):
        for tok in tokens:
            add(f"{prefix}:w1:{tok}")
        for i in range(len(tokens) - 1):
            add(f"{prefix}:w2:{tokens[i]} {tokens[i + 1]}")
        joined = " ".join(tokens)
        for i in range(len(joined) - 2):
            add(f"{prefix}:c3:{joined[i:i + 3]}")
    # sorted so insertion (and hence summation) order is process-independent
    for q_tok in sorted(set(q_tokens)):
        for a_tok in sorted(set(a_tokens)):
            add(f"qa:{q_tok}|{a_tok}")
    return feats


@dataclass
class BaselineModel:
    """Linear model over the hashed feature space."""

    weights: np.ndarray
    bias: float
    threshold: float = DEFAULT_THRESHOLD
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        dim = len(self.weights)
        if dim <= 0 or dim & (dim - 1):
            raise ValueError("weight dimension must be a power of two")
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("weights must be finite")

    @property
    def dim(self) -> int:
        return len(self.weights)

    def score(self, question: str, answer: str) -> float:
        feats = featurize(question, answer, self.dim)
        if not feats:
            return sigmoid(self.bias)
        idx = np.fromiter(feats.keys(), dtype=np.int64, count=len(feats))
        val = np.fromiter(feats.values(), dtype=np.float64, count=len(feats))
        return sigmoid(float(self.weights[idx] @ val) + self.bias)

    def score_batch(self, pairs: Iterable[tuple[str, str]]) -> list[float]:
        return [self.score(q, a) for q, a in pairs]


def train(
    pairs: Sequence[LabeledQAPair],
    config: TrainConfig | None = None,
    seed: int = 0,
) -> BaselineModel:
    """Fit the baseline with SGD on logistic loss; fixed epochs, seeded shuffles."""
    cfg = config or TrainConfig()
    labels = {p.label for p in pairs}
    if labels != {CORRECT, INCORRECT}:
        raise DegenerateData(f"training data needs both labels, got {sorted(labels)}")

    featurized = []
    for pair in pairs:
        feats = featurize(pair.question, pair.answer_text, cfg.dim)
        idx = np.fromiter(feats.keys(), dtype=np.int64, count=len(feats))
        val = np.fromiter(feats.values(), dtype=np.float64, count=len(feats))
        featurized.append((idx, val, 1.0 if pair.label == CORRECT else 0.0))

    import random as _random

    rng = _random.Random(seed)
    weights = np.zeros(cfg.dim, dtype=np.float64)
    bias = 0.0
    order = list(range(len(featurized)))
    for epoch in range(cfg.epochs):
        rng.shuffle(order)
        loss = 0.0
        for i in order:
            idx, val, y = featurized[i]
            z = float(weights[idx] @ val) + bias
            p = sigmoid(z)
            g = p - y
            step = cfg.learning_rate * g
            weights[idx] -= step * val
            bias -= step
            p_clip = min(max(p, 1e-12), 1.0 - 1e-12)
            loss -= y * math.log(p_clip) + (1.0 - y) * math.log(1.0 - p_clip)
        logger.info("epoch %d/%d: loss %.4f", epoch + 1, cfg.epochs, loss / len(order))

    return BaselineModel(
        weights=weights,
        bias=bias,
        threshold=cfg.threshold,
        meta={
            "seed": seed,
            "epochs": cfg.epochs,
            "learning_rate": cfg.learning_rate,
            "dim": cfg.dim,
        },
    )


class RemoteClassifier:
    """Client for the pair-classifier wire protocol.

    ``POST {url}/classify`` with ``{"pairs": [{"question", "answer"}, ...]}``
    returns ``{"scores": [...], "model_id": ..., "latency_ms": ...}`` with one
    score in [0, 1] per pair, in request order. Batches are chunked to the
    protocol cap of 256 pairs.
    """

    BATCH_CAP = 256

    def __init__(
        self,
        url: str,
        *,
        timeout: float = 30.0,
        session: requests.Session | None = None,
        threshold: float = DEFAULT_THRESHOLD,
    ):
        self.url = url.rstrip("/")
        self.timeout = timeout
        self.session = session or requests.Session()
        self.threshold = threshold

    def score(self, question: str, answer: str) -> float:
        return self.score_batch([(question, answer)])[0]

    def score_batch(self, pairs: Sequence[tuple[str, str]]) -> list[float]:
        scores: list[float] = []
        for start in range(0, len(pairs), self.BATCH_CAP):
            chunk = pairs[start : start + self.BATCH_CAP]
            scores.extend(self._post(chunk))
        return scores

    def _post(self, chunk: Sequence[tuple[str, str]]) -> list[float]:
        payload = {"pairs": [{"question": q, "answer": a} for q, a in chunk]}
        try:
            resp = self.session.post(
                f"{self.url}/classify", json=payload, timeout=self.timeout
            )
        except requests.RequestException as exc:
            raise RemoteUnavailable(f"classifier service unreachable: {exc}") from exc
        if resp.status_code >= 400:
            raise RemoteProtocolError(f"classifier service returned {resp.status_code}")
        try:
            scores = resp.json()["scores"]
        except (ValueError, KeyError) as exc:
            raise RemoteProtocolError(f"bad classify response: {exc}") from exc
        if not isinstance(scores, list) or len(scores) != len(chunk):
            raise RemoteProtocolError("score count does not match pair count")
        for s in scores:
            if not isinstance(s, (int, float)) or not 0.0 <= s <= 1.0:
                raise RemoteProtocolError(f"score out of range: {s!r}")
        return [float(s) for s in scores]


Scorer = Callable[[str, str], float]


def _score_fn(scorer) -> Scorer:
    if hasattr(scorer, "score"):
        return scorer.score
    if callable(scorer):
        return scorer
    raise TypeError(f"cannot score with {type(scorer).__name__}")


def predict(scorer, question: str, answer: str, threshold: float | None = None) -> PairScore:
    """Score one pair and threshold it into a label (correct iff score >= t)."""
    if threshold is None:
        threshold = getattr(scorer, "threshold", DEFAULT_THRESHOLD)
    score = _score_fn(scorer)(question, answer)
    if not 0.0 <= score <= 1.0:
        raise RemoteProtocolError(f"score out of range: {score!r}")
    return PairScore(score, CORRECT if score >= threshold else INCORRECT)


@dataclass(frozen=True)
class RunMetrics:
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class ClassificationReport:
    """Per-run precision/recall/F1 plus mean and population std across runs."""

    runs: tuple[RunMetrics, ...]

    def _values(self, name: str) -> list[float]:
        return [getattr(run, name) for run in self.runs]

    def mean(self, name: str) -> float:
        return fmean(self._values(name))

    def std(self, name: str) -> float:
        return pstdev(self._values(name))

    @property
    def precision(self) -> float:
        return self.mean("precision")

    @property
    def recall(self) -> float:
        return self.mean("recall")

    @property
    def f1(self) -> float:
        return self.mean("f1")

    def to_markdown(self) -> str:
        lines = [
            "| F1 Score | Precision | Recall |",
            "| --- | --- | --- |",
            "| {} | {} | {} |".format(
                *(
                    f"{self.mean(m):.4f} ± {self.std(m):.4f}"
                    for m in ("f1", "precision", "recall")
                )
            ),
        ]
        return "\n".join(lines)


def evaluate(scorer, pairs: Sequence[LabeledQAPair], threshold: float | None = None) -> ClassificationReport:
    """Single-run metrics with "correct" as the positive class.

    Zero-denominator conventions: a metric with an empty denominator is 0.
    """
    if threshold is None:
        threshold = getattr(scorer, "threshold", DEFAULT_THRESHOLD)
    fn = _score_fn(scorer)
    tp = fp = fn_count = 0
    for pair in pairs:
        predicted = CORRECT if fn(pair.question, pair.answer_text) >= threshold else INCORRECT
        if predicted == CORRECT and pair.label == CORRECT:
            tp += 1
        elif predicted == CORRECT:
            fp += 1
        elif pair.label == CORRECT:
            fn_count += 1
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn_count) if tp + fn_count else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return ClassificationReport((RunMetrics(precision, recall, f1),))


def aggregate_runs(runs: Iterable[RunMetrics]) -> ClassificationReport:
    runs = tuple(runs)
    if not runs:
        raise ValueError("nothing to aggregate")
    return ClassificationReport(runs)


def repeated_eval(
    records,
    cfg: SamplingConfig,
    n_runs: int = 10,
    train_config: TrainConfig | None = None,
    scorer_factory: Callable[[Sequence[LabeledQAPair], int], object] | None = None,
) -> ClassificationReport:
    """Rerun sample -> split -> train -> evaluate with seeds seed+0..n-1.

    ``scorer_factory(train_pairs, seed)`` substitutes for baseline training
    when given (used to plug in oracle or remote scorers).
    """
    if n_runs < 2:
        raise ConfigError("repeated evaluation needs n_runs >= 2")
    runs = []
    for offset in range(n_runs):
        run_cfg = replace(cfg, seed=cfg.seed + offset)
        pairs = negative_sample(records, run_cfg)
        train_pairs, test_pairs = split(pairs, run_cfg)
        if scorer_factory is not None:
            scorer = scorer_factory(train_pairs, run_cfg.seed)
        else:
            scorer = train(train_pairs, train_config, seed=run_cfg.seed)
        runs.append(evaluate(scorer, test_pairs).runs[0])
    return aggregate_runs(runs)


# --------------------------------------------------------------------------
# Persistence: versioned binary blob with an embedded JSON header
# --------------------------------------------------------------------------


def save_model(model: BaselineModel, path: str | Path) -> None:
    header = json.dumps(
        {
            "dim": model.dim,
            "bias": model.bias,
            "threshold": model.threshold,
            "meta": model.meta,
        }
    ).encode("utf-8")
    with open(path, "wb") as handle:
        handle.write(_MODEL_MAGIC)
        handle.write(struct.pack("<I", len(header)))
        handle.write(header)
        handle.write(model.weights.astype("<f8").tobytes())


def load_model(path: str | Path) -> BaselineModel:
    blob = Path(path).read_bytes()
    if not blob.startswith(_MODEL_MAGIC):
        raise DataError(f"{path}: not a model file")
    offset = len(_MODEL_MAGIC)
    (header_len,) = struct.unpack_from("<I", blob, offset)
    offset += 4
    try:
        header = json.loads(blob[offset : offset + header_len])
    except ValueError as exc:
        raise DataError(f"{path}: bad model header: {exc}") from exc
    offset += header_len
    weights = np.frombuffer(blob[offset:], dtype="<f8").copy()
    if len(weights) != header["dim"]:
        raise DataError(f"{path}: weight count does not match header dim")
    return BaselineModel(
        weights=weights,
        bias=header["bias"],
        threshold=header["threshold"],
        meta=header.get("meta", {}),
    )


def threshold_sweep(
    scorer, pairs: Sequence[LabeledQAPair], thresholds: Sequence[float] | None = None
) -> list[dict]:
    """Precision/recall per threshold; diagnostic output, no experiment backing."""
    if thresholds is None:
        thresholds = [round(0.05 * i, 2) for i in range(1, 20)]
    fn = _score_fn(scorer)
    scored = [(fn(p.question, p.answer_text), p.label) for p in pairs]
    rows = []
    for t in thresholds:
        tp = sum(1 for s, l in scored if s >= t and l == CORRECT)
        fp = sum(1 for s, l in scored if s >= t and l == INCORRECT)
        fn_count = sum(1 for s, l in scored if s < t and l == CORRECT)
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn_count) if tp + fn_count else 0.0
        rows.append({"threshold": t, "precision": precision, "recall": recall})
    return rows
