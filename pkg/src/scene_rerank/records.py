"""Image-level records: detected objects plus the classifier's top-5."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional


class RecordError(ValueError):
    """Raised when a record violates its invariants."""


class Candidate(NamedTuple):
    """One top-5 entry: scene label and classifier confidence."""

    label: str
    confidence: float


@dataclass(frozen=True)
class ImageRecord:
    """Parsed objects and top-5 predictions for one image.

    ``top5`` keeps the classifier's emission order; the raw ranking used for
    metrics and tie-breaks is the stable descending-confidence order (see
    ``raw_ranking``). Labels are expected to be canonical already.
    """

    image_id: str
    environment_id: str
    objects: tuple[str, ...]
    top5: tuple[Candidate, ...]
    ground_truth: Optional[str] = None

    def __post_init__(self):
        if not 1 <= len(self.top5) <= 5:
            raise RecordError(
                f"record {self.image_id!r}: top5 must have 1..5 entries, "
                f"got {len(self.top5)}"
            )
        labels = [c.label for c in self.top5]
        if len(set(labels)) != len(labels):
            raise RecordError(f"record {self.image_id!r}: duplicate top5 labels")
        for cand in self.top5:
            if not math.isfinite(cand.confidence) or cand.confidence < 0:
                raise RecordError(
                    f"record {self.image_id!r}: bad confidence "
                    f"{cand.confidence!r} for {cand.label!r}"
                )
        if all(c.confidence == 0 for c in self.top5):
            raise RecordError(f"record {self.image_id!r}: all confidences zero")

    def raw_ranking(self) -> tuple[Candidate, ...]:
        """Top-5 in raw classifier order: confidence descending, stable."""
        return tuple(
            sorted(self.top5, key=lambda c: -c.confidence)
        )


class RankedCandidate(NamedTuple):
    """One refined entry: label with combined score and its factors."""

    label: str
    combined: float
    confidence: float
    similarity: float


@dataclass(frozen=True)
class RerankResult:
    """Refined ordering of one record's top-5.

    ``refined`` is a permutation of the input candidates sorted by combined
    score; ``fallback_used`` marks records where object evidence was absent
    or degenerate and the raw order was kept.
    """

    image_id: str
    refined: tuple[RankedCandidate, ...]
    fallback_used: bool = False
    skipped_objects: tuple[str, ...] = field(default=())
