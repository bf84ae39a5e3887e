"""Record-file ingestion and the seeded synthetic dataset generator.

Records are JSON lines: image_id, environment, objects, top5
([{label, confidence}]), optional ground_truth. Unknown fields are ignored
and files may be concatenated. The generator plants characteristic objects
per scene and a simulated classifier of chosen top-1 accuracy so the whole
pipeline can be exercised at desk scale, bit-reproducibly from one seed.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ._util import atomic_write, fmt_float
from .records import Candidate, ImageRecord, RecordError
from .taxonomy import Environment, SceneTaxonomy, save_taxonomy

logger = logging.getLogger(__name__)

SYNTH_ENVIRONMENT = "synthetic"


@dataclass
class RecordFile:
    path: Path
    environment_id: str
    records: list[ImageRecord]
    line_numbers: list[int] = field(default_factory=list)
    skipped_out_of_env: int = 0
    malformed: list[tuple[int, str]] = field(default_factory=list)


def _parse_record(obj: dict, taxonomy: SceneTaxonomy, scene_set: set[str]) -> ImageRecord:
    for key in ("image_id", "environment", "objects", "top5"):
        if key not in obj:
            raise RecordError(f"missing field {key!r}")
    top5 = []
    for entry in obj["top5"]:
        label = taxonomy.canonicalize(str(entry["label"]))
        top5.append(Candidate(label=label, confidence=float(entry["confidence"])))
    truth = obj.get("ground_truth")
    rec = ImageRecord(
        image_id=str(obj["image_id"]),
        environment_id=str(obj["environment"]),
        objects=tuple(str(o) for o in obj["objects"]),
        top5=tuple(top5),
        ground_truth=taxonomy.canonicalize(str(truth)) if truth is not None else None,
    )
    for cand in rec.top5:
        if cand.label not in scene_set:
            raise RecordError(
                f"top5 label {cand.label!r} not a scene of environment "
                f"{rec.environment_id!r}"
            )
    return rec


def read_records(
    path: str | Path,
    taxonomy: SceneTaxonomy,
    environment: str,
    strict: bool = True,
) -> RecordFile:
    """Read and validate one record file for an environment.

    Scene labels (top-5 and ground truth) are canonicalized via the merge
    map. Records from other environments are skipped and counted. Malformed
    lines raise with their line number in strict mode, otherwise they are
    skipped and reported in the result.
    """
    path = Path(path)
    env = taxonomy.environment(environment)
    scene_set = set(env.scenes)
    out = RecordFile(path=path, environment_id=environment, records=[])
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                if not isinstance(obj, dict):
                    raise RecordError("line is not an object")
                if str(obj.get("environment")) != environment:
                    out.skipped_out_of_env += 1
                    continue
                rec = _parse_record(obj, taxonomy, scene_set)
            except (RecordError, KeyError, TypeError, ValueError) as exc:
                msg = f"{path}:{line_no}: {exc}"
                if strict:
                    raise RecordError(msg) from exc
                out.malformed.append((line_no, str(exc)))
                continue
            out.records.append(rec)
    if out.skipped_out_of_env:
        logger.info(
            "%s: skipped %d record(s) from other environments",
            path,
            out.skipped_out_of_env,
        )
    return out


def record_to_dict(rec: ImageRecord) -> dict:
    doc = {
        "image_id": rec.image_id,
        "environment": rec.environment_id,
        "objects": list(rec.objects),
        "top5": [{"label": c.label, "confidence": c.confidence} for c in rec.top5],
    }
    if rec.ground_truth is not None:
        doc["ground_truth"] = rec.ground_truth
    return doc


def write_records(records, path: str | Path) -> int:
    """Write records as JSON lines; exact float round-trip. Returns count."""
    n = 0
    with atomic_write(path) as fh:
        for rec in records:
            fh.write(json.dumps(record_to_dict(rec)) + "\n")
            n += 1
    return n


@dataclass(frozen=True)
class SynthConfig:
    n_scenes: int
    n_objects: int
    chars_per_scene: int
    p_char: float
    p_noise: float
    cnn_top1_target: float
    n_train: int
    n_test: int
    seed: int

    def __post_init__(self):
        if min(self.n_scenes, self.n_objects, self.chars_per_scene) < 1:
            raise ValueError("counts must be positive")
        if self.n_train < 1 or self.n_test < 1:
            raise ValueError("split sizes must be positive")
        if not 0 <= self.p_noise < self.p_char <= 1:
            raise ValueError("need 0 <= p_noise < p_char <= 1")
        if not 0 < self.cnn_top1_target < 1:
            raise ValueError("need 0 < cnn_top1_target < 1")
        if self.chars_per_scene > self.n_objects:
            raise ValueError("chars_per_scene exceeds n_objects")
        if self.n_scenes < 5:
            raise ValueError("need at least 5 scenes to fill a distinct top-5")
        if self.n_scenes * self.chars_per_scene > self.n_objects:
            raise ValueError(
                "not enough objects for disjoint characteristic sets "
                f"({self.n_scenes} x {self.chars_per_scene} > {self.n_objects})"
            )


@dataclass
class SynthSummary:
    environment_id: str
    n_scenes: int
    n_objects: int
    n_train: int
    n_test: int
    dim: int
    seed: int
    realized_raw_top1: float

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2) + "\n"


def _scene_name(j: int) -> str:
    return f"scene{j:03d}"


def _object_name(i: int) -> str:
    return f"obj{i:03d}"


def characteristic_sets(config: SynthConfig) -> list[list[int]]:
    """Round-robin disjoint assignment: object k belongs to scene k % n_scenes."""
    sets: list[list[int]] = [[] for _ in range(config.n_scenes)]
    for k in range(config.n_scenes * config.chars_per_scene):
        sets[k % config.n_scenes].append(k)
    return sets


def _simulate_record(
    rng: np.random.Generator,
    config: SynthConfig,
    char_sets: list[list[int]],
    image_id: str,
) -> ImageRecord:
    truth = int(rng.integers(config.n_scenes))
    chars = set(char_sets[truth])
    draws = rng.random(config.n_objects)
    objects = tuple(
        _object_name(i)
        for i in range(config.n_objects)
        if draws[i] < (config.p_char if i in chars else config.p_noise)
    )

    if rng.random() < config.cnn_top1_target:
        rank1 = truth
    else:
        d = int(rng.integers(config.n_scenes - 1))
        rank1 = d + 1 if d >= truth else d
    others = [j for j in range(config.n_scenes) if j != rank1]
    fillers = rng.choice(len(others), size=4, replace=False)
    ranking = [rank1] + [others[int(f)] for f in fillers]

    conf = rng.uniform(0.5, 1.0, 5)
    conf[::-1].sort()
    conf = conf / conf.sum()
    top5 = tuple(
        Candidate(label=_scene_name(j), confidence=float(c))
        for j, c in zip(ranking, conf)
    )
    return ImageRecord(
        image_id=image_id,
        environment_id=SYNTH_ENVIRONMENT,
        objects=objects,
        top5=top5,
        ground_truth=_scene_name(truth),
    )


def generate_synthetic(
    config: SynthConfig, out_dir: str | Path, dim: int = 50
) -> SynthSummary:
    """Write taxonomy, embeddings, and train/test record files; returns summary.

    Output depends only on (config, dim): embeddings are drawn first, then
    train records, then test records, from a single seeded generator.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(config.seed)

    scenes = [_scene_name(j) for j in range(config.n_scenes)]
    objects = [_object_name(i) for i in range(config.n_objects)]
    char_sets = characteristic_sets(config)

    with atomic_write(out_dir / "embeddings.txt") as fh:
        fh.write(f"{len(objects) + len(scenes)} {dim}\n")
        for token in objects + scenes:
            vec = rng.standard_normal(dim)
            fh.write(token + " " + " ".join(fmt_float(x) for x in vec) + "\n")

    taxonomy = SceneTaxonomy(
        environments={
            SYNTH_ENVIRONMENT: Environment(
                id=SYNTH_ENVIRONMENT, scenes=tuple(scenes)
            )
        },
        merge_map={},
    )
    save_taxonomy(taxonomy, out_dir / "taxonomy.yaml")

    train_records = [
        _simulate_record(rng, config, char_sets, f"train_{k:05d}")
        for k in range(config.n_train)
    ]
    test_records = [
        _simulate_record(rng, config, char_sets, f"test_{k:05d}")
        for k in range(config.n_test)
    ]
    write_records(train_records, out_dir / "train.jsonl")
    write_records(test_records, out_dir / "test.jsonl")

    hits = sum(
        1 for rec in test_records if rec.top5[0].label == rec.ground_truth
    )
    return SynthSummary(
        environment_id=SYNTH_ENVIRONMENT,
        n_scenes=config.n_scenes,
        n_objects=config.n_objects,
        n_train=config.n_train,
        n_test=config.n_test,
        dim=dim,
        seed=config.seed,
        realized_raw_top1=hits / config.n_test,
    )
