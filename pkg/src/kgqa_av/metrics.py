"""Ranked-retrieval metrics over binary relevance: P@k and NDCG@k.

Lists shorter than k keep denominator k for P@k (conceptual padding with
non-relevant entries). NDCG's ideal gain is computed from the total relevant
count of the chosen basis, which for filtered lists is the original
unfiltered list, so before/after numbers share a normalizer.
"""

from __future__ import annotations

import math


def _flags(list_or_flags) -> list[bool]:
    entries = getattr(list_or_flags, "entries", None)
    if entries is not None:
        return [e.judgment.relevant for e in entries]
    return [bool(x) for x in list_or_flags]


def precision_at_k(list_or_flags, k: int) -> float:
    """Relevant entries among the first k, divided by k (empty list: 0)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    flags = _flags(list_or_flags)
    return sum(flags[:k]) / k


def dcg_at_k(list_or_flags, k: int) -> float:
    if k < 1:
        raise ValueError("k must be >= 1")
    flags = _flags(list_or_flags)
    return sum(1.0 / math.log2(i + 2) for i, rel in enumerate(flags[:k]) if rel)


def ideal_dcg(total_relevant: int, k: int) -> float:
    return sum(1.0 / math.log2(i + 2) for i in range(min(k, total_relevant)))


def ndcg_at_k(list_or_flags, k: int, total_relevant: int | None = None) -> float:
    """Binary-gain NDCG@k; zero when the ideal basis has no relevant entries.

    ``total_relevant`` is the relevant count of the ideal basis; it defaults
    to the list's own count and must be passed explicitly for filtered lists
    (use the pre-filter total).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    flags = _flags(list_or_flags)
    if total_relevant is None:
        total_relevant = sum(flags)
    idcg = ideal_dcg(total_relevant, k)
    if idcg == 0.0:
        return 0.0
    return dcg_at_k(flags, k) / idcg
