"""Top-1/top-5 accuracy before and after refinement."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable

from .embeddings import EmbeddingStore
from .records import ImageRecord
from .reranker import rerank
from .weights import WeightMatrix


class EvalError(ValueError):
    """Raised on evaluation precondition failures."""


@dataclass
class EvalReport:
    """Aggregate accuracies plus a truth -> refined-top-1 confusion table.

    Refinement permutes the top-5, so refined_top5 always equals raw_top5;
    it is reported anyway as a cheap integrity check.
    """

    environment_id: str
    n_records: int
    raw_top1: float
    refined_top1: float
    raw_top5: float
    refined_top5: float
    fallback_rate: float
    confusion: dict[str, dict[str, int]] = field(default_factory=dict)

    def to_json(self) -> str:
        doc = {
            "environment_id": self.environment_id,
            "n_records": self.n_records,
            "raw_top1": self.raw_top1,
            "refined_top1": self.refined_top1,
            "raw_top5": self.raw_top5,
            "refined_top5": self.refined_top5,
            "fallback_rate": self.fallback_rate,
            "confusion": {
                truth: dict(sorted(preds.items()))
                for truth, preds in sorted(self.confusion.items())
            },
        }
        return json.dumps(doc, indent=2) + "\n"


def evaluate(
    records: Iterable[ImageRecord],
    store: EmbeddingStore,
    w: WeightMatrix,
) -> EvalReport:
    """Score raw (classifier order) vs. refined (reranked) predictions.

    Every record must carry ground truth; top-k hits count the truth
    appearing in the first k entries of the respective ranking.
    """
    n = 0
    raw1 = raw5 = ref1 = ref5 = fallbacks = 0
    confusion: dict[str, dict[str, int]] = {}
    for rec in records:
        if rec.ground_truth is None:
            raise EvalError(f"record {rec.image_id!r} has no ground_truth")
        truth = rec.ground_truth
        n += 1

        raw = [c.label for c in rec.raw_ranking()]
        raw1 += truth == raw[0]
        raw5 += truth in raw

        result = rerank(store, w, rec)
        refined = [c.label for c in result.refined]
        ref1 += truth == refined[0]
        ref5 += truth in refined
        fallbacks += result.fallback_used

        row = confusion.setdefault(truth, {})
        row[refined[0]] = row.get(refined[0], 0) + 1

    if n == 0:
        raise EvalError("no records to evaluate")
    return EvalReport(
        environment_id=w.environment_id,
        n_records=n,
        raw_top1=raw1 / n,
        refined_top1=ref1 / n,
        raw_top5=raw5 / n,
        refined_top5=ref5 / n,
        fallback_rate=fallbacks / n,
        confusion=confusion,
    )
