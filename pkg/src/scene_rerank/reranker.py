"""Re-rank a record's top-5 by object-evidence similarity.

For each candidate scene the detected objects are summed with that scene's
weight column into an image vector; its cosine against the scene vector,
shifted to [0, 1] and L1-normalized across candidates, scales the raw
confidence. Candidates are reordered by the combined score. Degenerate
evidence falls back to the raw order so every record gets an answer.
"""

from __future__ import annotations

import logging

import numpy as np

from . import _kernels
from .embeddings import EmbeddingStore
from .records import ImageRecord, RankedCandidate, RerankResult
from .weights import WeightError, WeightMatrix

logger = logging.getLogger(__name__)

# L1 mass below this is indistinguishable from no evidence.
EPS_MASS = 1e-12


def _object_indices(
    store: EmbeddingStore, w: WeightMatrix, objects
) -> tuple[np.ndarray, list[str]]:
    """Distinct known objects as store/matrix row indices; unknowns skipped."""
    seen: set[str] = set()
    idx: list[int] = []
    skipped: list[str] = []
    for obj in objects:
        if obj in seen:
            continue
        seen.add(obj)
        i = store.object_index(obj)
        if i is None or w.object_index(obj) != i:
            skipped.append(obj)
        else:
            idx.append(i)
    if skipped:
        logger.debug("skipping %d unknown object label(s): %s", len(skipped), skipped)
    idx.sort()
    return np.asarray(idx, dtype=np.int64), skipped


def _check_aligned(store: EmbeddingStore, w: WeightMatrix) -> None:
    if store.object_labels != w.object_labels:
        raise WeightError("weight matrix object rows do not match the store")
    if store.scene_labels != w.scene_labels:
        raise WeightError("weight matrix scene columns do not match the store")


def compute_image_vector(
    store: EmbeddingStore,
    w: WeightMatrix,
    objects,
    scene: str,
) -> np.ndarray:
    """Weighted sum of the distinct detected objects' vectors for one scene.

    Zero vector when no (known) objects are present or all weights vanish.
    """
    _check_aligned(store, w)
    j = store.scene_index(scene)
    if j is None:
        raise WeightError(f"scene {scene!r} not in the weight matrix")
    obj_idx, _ = _object_indices(store, w, objects)
    vecs = _kernels.image_vectors(
        store.object_matrix,
        w.weights,
        obj_idx,
        np.asarray([j], dtype=np.int64),
    )
    return vecs[0]


def rerank(store: EmbeddingStore, w: WeightMatrix, record: ImageRecord) -> RerankResult:
    """Refine one record's top-5 ordering.

    Combined score per candidate = raw confidence x normalized similarity;
    ties break toward the better raw rank (stable descending-confidence
    order of the input). Pure function of immutable inputs.
    """
    _check_aligned(store, w)
    m = len(record.top5)
    scene_idx = np.empty(m, dtype=np.int64)
    for t, cand in enumerate(record.top5):
        j = store.scene_index(cand.label)
        if j is None:
            raise WeightError(
                f"record {record.image_id!r}: candidate scene {cand.label!r} "
                "not in the model"
            )
        scene_idx[t] = j

    obj_idx, skipped = _object_indices(store, w, record.objects)
    vecs = _kernels.image_vectors(store.object_matrix, w.weights, obj_idx, scene_idx)
    cos, defined = _kernels.cosine_to_scenes(vecs, store.scene_matrix, scene_idx)
    # Undefined cosine (zero-norm image vector) reads as neutral evidence.
    cos = np.where(defined, cos, 0.0)
    shifted = (cos + 1.0) / 2.0
    mass = float(shifted.sum())

    fallback = obj_idx.size == 0 or not bool(defined.any()) or mass < EPS_MASS
    if fallback:
        similarity = np.full(m, 1.0 / m)
    else:
        similarity = shifted / mass

    conf = np.asarray([c.confidence for c in record.top5])
    combined = conf * similarity

    # Raw rank of each input position: stable sort by confidence descending.
    raw_order = sorted(range(m), key=lambda t: -conf[t])
    raw_rank = np.empty(m, dtype=np.int64)
    for r, t in enumerate(raw_order):
        raw_rank[t] = r
    final = sorted(range(m), key=lambda t: (-combined[t], raw_rank[t]))

    refined = tuple(
        RankedCandidate(
            label=record.top5[t].label,
            combined=float(combined[t]),
            confidence=float(conf[t]),
            similarity=float(similarity[t]),
        )
        for t in final
    )
    return RerankResult(
        image_id=record.image_id,
        refined=refined,
        fallback_used=fallback,
        skipped_objects=tuple(skipped),
    )
