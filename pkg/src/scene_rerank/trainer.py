"""Margin-based training of the vocabulary vectors and weight matrix.

Each labeled record yields one example: the ground-truth scene against the
other top-5 candidates as hard negatives. The pairwise hinge pushes the
image vector built for the true scene toward that scene's vector and the
ones built for the negatives away from theirs. Plain SGD with analytic
gradients; updates apply in a seed-derived shuffled order, so runs are
bit-reproducible.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from . import _kernels
from ._util import atomic_write, fmt_float
from .embeddings import EmbeddingStore
from .records import ImageRecord
from .reranker import _check_aligned, _object_indices
from .weights import WeightMatrix

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainerConfig:
    seed: int
    margin: float = 0.1
    learning_rate: float = 0.01
    epochs: int = 20
    weight_decay: float = 0.0
    freeze_objects: bool = False
    freeze_scenes: bool = False
    freeze_weights: bool = False

    def __post_init__(self):
        if self.margin <= 0:
            raise ValueError("margin must be > 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")


@dataclass(frozen=True)
class TrainingExample:
    """Ground-truth positive vs. the record's other top-5 labels."""

    record: ImageRecord
    positive: str
    negatives: tuple[str, ...]

    def __post_init__(self):
        if self.positive in self.negatives:
            raise ValueError(
                f"example {self.record.image_id!r}: positive also listed as negative"
            )
        if not self.negatives:
            raise ValueError(f"example {self.record.image_id!r}: no negatives")


def build_examples(
    records: Iterable[ImageRecord], scene_labels: list[str]
) -> list[TrainingExample]:
    """Turn labeled records into training examples.

    The negatives are the record's other top-5 labels; when the truth is
    absent from the top-5 (the classifier's hardest failures) all five are
    negatives. Records without usable ground truth are skipped with a count.
    """
    known = set(scene_labels)
    examples: list[TrainingExample] = []
    skipped = 0
    for rec in records:
        truth = rec.ground_truth
        if truth is None or truth not in known:
            skipped += 1
            continue
        negatives = tuple(c.label for c in rec.top5 if c.label != truth)
        examples.append(
            TrainingExample(record=rec, positive=truth, negatives=negatives)
        )
    if skipped:
        logger.info("build_examples: skipped %d record(s) without usable truth", skipped)
    return examples


@dataclass
class EpochStats:
    epoch: int
    mean_loss: float
    max_param_delta: float


@dataclass
class TrainingReport:
    """Per-epoch mean loss and the largest single parameter change."""

    epochs: list[EpochStats] = field(default_factory=list)
    n_examples: int = 0

    def to_text(self) -> str:
        lines = ["epoch\tmean_loss\tmax_param_delta"]
        for row in self.epochs:
            lines.append(
                f"{row.epoch}\t{fmt_float(row.mean_loss)}\t{fmt_float(row.max_param_delta)}"
            )
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        with atomic_write(path) as fh:
            fh.write(self.to_text())


@dataclass
class ParameterGradients:
    """Analytic gradients for the parameters an example touches.

    Empty when no hinge term is active (the loss is flat there).
    """

    loss: float
    objects: dict[str, np.ndarray] = field(default_factory=dict)
    scenes: dict[str, np.ndarray] = field(default_factory=dict)
    weights: dict[tuple[str, str], float] = field(default_factory=dict)


def _example_indices(store, w, example):
    obj_idx, _ = _object_indices(store, w, example.record.objects)
    pos = store.scene_index(example.positive)
    if pos is None:
        raise ValueError(f"positive scene {example.positive!r} not in the model")
    negs = np.empty(len(example.negatives), dtype=np.int64)
    for t, lab in enumerate(example.negatives):
        j = store.scene_index(lab)
        if j is None:
            raise ValueError(f"negative scene {lab!r} not in the model")
        negs[t] = j
    return obj_idx, pos, negs


def hinge_loss(
    store: EmbeddingStore,
    w: WeightMatrix,
    example: TrainingExample,
    margin: float = 0.1,
) -> float:
    """Sum over negatives of max(0, margin - cos_pos + cos_neg).

    cos_pos/cos_neg compare the image vector built with the candidate's
    weight column against that candidate's scene vector; degenerate image
    vectors contribute cosine 0.
    """
    _check_aligned(store, w)
    obj_idx, pos, negs = _example_indices(store, w, example)
    return float(
        _kernels.hinge_forward(
            store.object_matrix, store.scene_matrix, w.weights,
            obj_idx, pos, negs, margin,
        )
    )


def gradients(
    store: EmbeddingStore,
    w: WeightMatrix,
    example: TrainingExample,
    margin: float = 0.1,
) -> ParameterGradients:
    """Analytic gradients of ``hinge_loss`` for the touched parameters.

    Inactive hinge terms contribute nothing; the subgradient at the kink
    takes the zero branch.
    """
    _check_aligned(store, w)
    obj_idx, pos, negs = _example_indices(store, w, example)
    loss, g_obj, g_scn, g_wts = _kernels.hinge_backward(
        store.object_matrix, store.scene_matrix, w.weights,
        obj_idx, pos, negs, margin,
    )
    out = ParameterGradients(loss=float(loss))
    if loss == 0.0:
        return out
    scene_ids = [int(pos)] + [int(j) for j in negs]
    for q, i in enumerate(obj_idx):
        out.objects[store.object_labels[int(i)]] = g_obj[q].copy()
    for t, j in enumerate(scene_ids):
        out.scenes[store.scene_labels[j]] = g_scn[t].copy()
    for q, i in enumerate(obj_idx):
        for t, j in enumerate(scene_ids):
            out.weights[(store.object_labels[int(i)], store.scene_labels[j])] = float(
                g_wts[q, t]
            )
    return out


def train(
    store: EmbeddingStore,
    w: WeightMatrix,
    examples: Iterable[TrainingExample],
    config: TrainerConfig,
) -> TrainingReport:
    """SGD over the examples; mutates ``store`` and ``w`` in place.

    Per epoch the examples are visited in a fresh seed-derived permutation.
    Examples whose margins are all satisfied change nothing, so a dataset at
    zero loss is a bitwise fixed point. Raises on non-finite loss, naming
    the offending example.
    """
    _check_aligned(store, w)
    examples = list(examples)
    if not examples:
        raise ValueError("train: no examples")

    prepared = []
    for ex in examples:
        prepared.append((ex, *_example_indices(store, w, ex)))

    report = TrainingReport(n_examples=len(examples))
    rng = np.random.default_rng(config.seed)
    upd_obj = not config.freeze_objects
    upd_scn = not config.freeze_scenes
    upd_wts = not config.freeze_weights
    for epoch in range(config.epochs):
        perm = rng.permutation(len(prepared))
        total = 0.0
        max_delta = 0.0
        for t in perm:
            ex, obj_idx, pos, negs = prepared[t]
            loss, delta = _kernels.sgd_step(
                store.object_matrix, store.scene_matrix, w.weights,
                obj_idx, pos, negs,
                config.margin, config.learning_rate, config.weight_decay,
                upd_obj, upd_scn, upd_wts,
            )
            if not math.isfinite(loss):
                raise RuntimeError(
                    f"non-finite loss at epoch {epoch}, "
                    f"example {ex.record.image_id!r}"
                )
            total += loss
            if delta > max_delta:
                max_delta = delta
        report.epochs.append(
            EpochStats(
                epoch=epoch,
                mean_loss=total / len(prepared),
                max_param_delta=max_delta,
            )
        )
    return report
