"""Perfect-patch equality and the pass@k / edit-distance aggregates."""

from __future__ import annotations

import re
from typing import Iterable, Sequence

from ..errors import ShapeMismatch

_SPACES = re.compile(r"\s+")


def normalize_code(text: str) -> str:
    """Collapse whitespace runs inside lines, trim them, and drop blank lines."""
    lines = (_SPACES.sub(" ", line).strip() for line in text.splitlines())
    return "\n".join(line for line in lines if line)


def perfect_patch(candidate: str, reference: str) -> bool:
    return normalize_code(candidate) == normalize_code(reference)


def pass_at_k(matrix: Sequence[Sequence[bool]], k: int) -> tuple[int, float]:
    """Count rows with a success among their first ``k`` attempts.

    >>> pass_at_k([[False, True], [False, False]], 2)
    (1, 0.5)
    """
    if k < 1:
        raise ShapeMismatch(f"k must be >= 1, got {k}")
    for i, row in enumerate(matrix):
        if len(row) < k:
            raise ShapeMismatch(f"row {i} has {len(row)} attempts, need {k}")
    count = sum(1 for row in matrix if any(row[:k]))
    return count, (count / len(matrix) if matrix else 0.0)


def edit_distance_rate(distances: Iterable[int | None], threshold: int = 5) -> float:
    """Share of samples whose best distance is below ``threshold``.

    ``None`` marks a sample without any usable candidate.
    """
    values = list(distances)
    if not values:
        return 0.0
    return sum(1 for d in values if d is not None and d < threshold) / len(values)
