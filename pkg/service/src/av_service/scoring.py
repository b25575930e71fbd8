"""Scoring backends: the no-ML echo heuristic and a transformer wrapper.

Echo mode exists for integration tests only: it scores 1.0 exactly when the
answer contains any non-stopword token of the question, so responses are a
pure function of the request. The transformer backend wraps any sequence-pair
classification checkpoint; the positive class is index 1.
"""

from __future__ import annotations

import logging
import re
import threading
from typing import Sequence

logger = logging.getLogger(__name__)

_TOKEN_RE = re.compile(r"[a-z0-9]+")

# function words ignored by the echo heuristic
STOPWORDS = frozenset(
    "a an and are be by did do does for from had has have how in is it of on or "
    "s that the this to was were what when where which who whom whose why with".split()
)


def echo_score(question: str, answer: str) -> float:
    question_tokens = set(_TOKEN_RE.findall(question.lower())) - STOPWORDS
    answer_tokens = set(_TOKEN_RE.findall(answer.lower()))
    return 1.0 if question_tokens & answer_tokens else 0.0


class EchoBackend:
    model_id = "echo-heuristic"

    def ready(self) -> bool:
        return True

    def score_batch(self, pairs: Sequence[tuple[str, str]]) -> list[float]:
        return [echo_score(q, a) for q, a in pairs]


class TransformerBackend:
    """Lazy-loading wrapper around a fine-tuned pair-classification checkpoint."""

    def __init__(self, checkpoint: str, device: str = "cpu"):
        self.checkpoint = checkpoint
        self.device = device
        self.model_id = f"transformer:{checkpoint}"
        self._lock = threading.Lock()
        self._model = None
        self._tokenizer = None
        self._load_error: Exception | None = None

    def ready(self) -> bool:
        return self._model is not None

    def load(self) -> None:
        with self._lock:
            if self._model is not None:
                return
            try:
                import torch
                from transformers import (
                    AutoModelForSequenceClassification,
                    AutoTokenizer,
                )

                tokenizer = AutoTokenizer.from_pretrained(self.checkpoint)
                model = AutoModelForSequenceClassification.from_pretrained(self.checkpoint)
                model.to(self.device)
                model.eval()
                self._tokenizer = tokenizer
                self._model = model
                self._torch = torch
            except Exception as exc:  # surfaced as 503 by the app
                self._load_error = exc
                logger.error("checkpoint load failed: %s", exc)
                raise

    def score_batch(self, pairs: Sequence[tuple[str, str]]) -> list[float]:
        if self._model is None:
            self.load()
        torch = self._torch
        questions = [q for q, _ in pairs]
        answers = [a for _, a in pairs]
        encoded = self._tokenizer(
            questions, answers, padding=True, truncation=True,
            max_length=256, return_tensors="pt",
        ).to(self.device)
        with torch.no_grad():
            logits = self._model(**encoded).logits
        positive = torch.softmax(logits, dim=-1)[:, 1]
        return [float(p) for p in positive]
