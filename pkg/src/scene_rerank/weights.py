"""Object-by-scene weight matrix: tf-idf initialization and TSV persistence.

Treats each scene class as a document whose words are the objects seen in
that scene's training images (at most once per image). Weights stay
nonnegative for their whole life, including through training updates.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from ._util import atomic_write, fmt_float
from .records import ImageRecord
from .taxonomy import SceneTaxonomy

logger = logging.getLogger(__name__)


class WeightError(ValueError):
    """Raised on weight matrix shape/label/value violations."""


@dataclass
class WeightMatrix:
    """Nonnegative |O| x |S| scalar weights for one environment."""

    environment_id: str
    object_labels: list[str]
    scene_labels: list[str]
    weights: np.ndarray

    def __post_init__(self):
        self.weights = np.ascontiguousarray(self.weights, dtype=np.float64)
        if self.weights.shape != (len(self.object_labels), len(self.scene_labels)):
            raise WeightError(
                f"weights shape {self.weights.shape} != "
                f"({len(self.object_labels)}, {len(self.scene_labels)})"
            )
        if len(set(self.object_labels)) != len(self.object_labels):
            raise WeightError("duplicate object labels")
        if len(set(self.scene_labels)) != len(self.scene_labels):
            raise WeightError("duplicate scene labels")
        if self.weights.size and float(self.weights.min()) < 0:
            raise WeightError("negative weight entry")
        self._obj_index = {lab: i for i, lab in enumerate(self.object_labels)}
        self._scene_index = {lab: j for j, lab in enumerate(self.scene_labels)}

    def object_index(self, label: str) -> Optional[int]:
        return self._obj_index.get(label)

    def scene_index(self, label: str) -> Optional[int]:
        return self._scene_index.get(label)

    def weight(self, object_label: str, scene_label: str) -> float:
        i = self._obj_index.get(object_label)
        j = self._scene_index.get(scene_label)
        if i is None:
            raise WeightError(f"unknown object label {object_label!r}")
        if j is None:
            raise WeightError(f"unknown scene label {scene_label!r}")
        return float(self.weights[i, j])


@dataclass
class SceneDocumentCorpus:
    """Per-scene object occurrence counts ("scene class is a document").

    counts[scene][object] is the number of training images of that scene
    containing the object at least once.
    """

    environment_id: str
    scene_labels: list[str]
    object_labels: list[str]
    counts: dict[str, dict[str, int]]
    skipped_records: int = 0

    def total(self, scene: str) -> int:
        return sum(self.counts[scene].values())


def build_corpus(
    records: Iterable[ImageRecord],
    taxonomy: SceneTaxonomy,
    environment: str,
    object_labels: Optional[list[str]] = None,
) -> SceneDocumentCorpus:
    """Aggregate ground-truth-labeled records into scene documents.

    Objects count once per image. Records whose ground truth is missing or
    not a scene of the environment are skipped and counted, not fatal. When
    ``object_labels`` is None the vocabulary becomes the sorted set of
    objects observed in the kept records.
    """
    env = taxonomy.environment(environment)
    scene_set = set(env.scenes)
    known = set(object_labels) if object_labels is not None else None
    counts: dict[str, dict[str, int]] = {s: {} for s in env.scenes}
    observed: set[str] = set()
    skipped = 0
    for rec in records:
        truth = (
            taxonomy.canonicalize(rec.ground_truth)
            if rec.ground_truth is not None
            else None
        )
        if truth is None or truth not in scene_set:
            skipped += 1
            continue
        doc = counts[truth]
        for obj in set(rec.objects):
            if known is not None and obj not in known:
                continue
            observed.add(obj)
            doc[obj] = doc.get(obj, 0) + 1
    if skipped:
        logger.info(
            "build_corpus: skipped %d record(s) outside environment %r",
            skipped,
            environment,
        )
    vocab = list(object_labels) if object_labels is not None else sorted(observed)
    return SceneDocumentCorpus(
        environment_id=environment,
        scene_labels=list(env.scenes),
        object_labels=vocab,
        counts=counts,
        skipped_records=skipped,
    )


def init_tfidf(corpus: SceneDocumentCorpus) -> WeightMatrix:
    """tf-idf weights from scene documents.

    tf(o, s) = count(s, o) / total(s)   (0 for an empty document)
    idf(o)   = ln((1 + |S|) / (1 + df(o))) + 1

    with df(o) the number of scene documents containing o. Strictly positive
    for every observed pair, so even ubiquitous objects keep a small say.
    """
    n_scenes = len(corpus.scene_labels)
    totals = {s: corpus.total(s) for s in corpus.scene_labels}
    if all(t == 0 for t in totals.values()):
        raise WeightError("empty corpus: no object occurrences in any scene")

    df = {o: 0 for o in corpus.object_labels}
    for s in corpus.scene_labels:
        for o, c in corpus.counts[s].items():
            if c > 0 and o in df:
                df[o] += 1

    weights = np.zeros((len(corpus.object_labels), n_scenes))
    for i, o in enumerate(corpus.object_labels):
        idf = math.log((1 + n_scenes) / (1 + df[o])) + 1.0
        for j, s in enumerate(corpus.scene_labels):
            c = corpus.counts[s].get(o, 0)
            if c > 0:
                weights[i, j] = (c / totals[s]) * idf
    return WeightMatrix(
        environment_id=corpus.environment_id,
        object_labels=list(corpus.object_labels),
        scene_labels=list(corpus.scene_labels),
        weights=weights,
    )


def save_weights(w: WeightMatrix, path: str | Path) -> None:
    """Write the weight TSV: header "object" + scene labels, one row per object."""
    with atomic_write(path) as fh:
        fh.write("object\t" + "\t".join(w.scene_labels) + "\n")
        for i, obj in enumerate(w.object_labels):
            fh.write(obj + "\t" + "\t".join(fmt_float(x) for x in w.weights[i]) + "\n")


def load_weights(
    path: str | Path,
    taxonomy: Optional[SceneTaxonomy] = None,
    environment: Optional[str] = None,
    object_labels: Optional[list[str]] = None,
) -> WeightMatrix:
    """Read a weight TSV; validates against taxonomy/vocabulary when given."""
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise WeightError(f"{path}: empty file")
    header = lines[0].split("\t")
    if header[0] != "object" or len(header) < 2:
        raise WeightError(f"{path}: bad header")
    scene_labels = header[1:]
    objects: list[str] = []
    rows: list[list[float]] = []
    for line_no, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 1 + len(scene_labels):
            raise WeightError(
                f"{path}:{line_no}: expected {1 + len(scene_labels)} columns, "
                f"got {len(parts)}"
            )
        objects.append(parts[0])
        try:
            rows.append([float(v) for v in parts[1:]])
        except ValueError as exc:
            raise WeightError(f"{path}:{line_no}: malformed float: {exc}") from exc

    env_id = environment or ""
    if taxonomy is not None and environment is not None:
        env = taxonomy.environment(environment)
        if list(env.scenes) != scene_labels:
            raise WeightError(
                f"{path}: scene header does not match environment "
                f"{environment!r} scene list"
            )
    if object_labels is not None and object_labels != objects:
        raise WeightError(f"{path}: object rows do not match expected vocabulary")

    return WeightMatrix(
        environment_id=env_id,
        object_labels=objects,
        scene_labels=scene_labels,
        weights=np.array(rows).reshape(len(objects), len(scene_labels)),
    )
