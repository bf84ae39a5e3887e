"""Command-line entry point tying the pipeline together.

Subcommands: gen-synth, init-weights, train, rerank, eval, export-vectors.
Reports go to stdout (or --out); diagnostics and progress go to stderr.
All output files are written atomically, so failures leave no partial files.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import dataset_io, metrics, trainer, weights as weights_mod
from ._util import atomic_write
from .embeddings import (
    EmbeddingError,
    EmbeddingStore,
    build_store,
    export_vectors_csv,
    load_pretrained,
    load_vectors_csv,
)
from .records import RecordError
from .reranker import rerank
from .taxonomy import TaxonomyError, load_taxonomy
from .weights import WeightError

logger = logging.getLogger(__name__)

_ERRORS = (
    TaxonomyError,
    EmbeddingError,
    WeightError,
    RecordError,
    metrics.EvalError,
    ValueError,
    OSError,
)


def _is_vector_csv(path: Path) -> bool:
    with path.open("r", encoding="utf-8") as fh:
        return fh.readline().startswith("role,label")


def _load_model(args) -> tuple[EmbeddingStore, weights_mod.WeightMatrix]:
    """Build the (store, weights) pair shared by train/rerank/eval."""
    taxonomy = load_taxonomy(args.taxonomy)
    env = taxonomy.environment(args.environment)
    w = weights_mod.load_weights(args.weights, taxonomy, args.environment)
    emb_path = Path(args.embeddings)
    if _is_vector_csv(emb_path):
        store = load_vectors_csv(emb_path)
        if store.object_labels != w.object_labels:
            raise EmbeddingError(
                f"{emb_path}: object vectors do not match the weight matrix rows"
            )
        if store.scene_labels != list(env.scenes):
            raise EmbeddingError(
                f"{emb_path}: scene vectors do not match environment "
                f"{args.environment!r}"
            )
    else:
        tokens, dim = load_pretrained(emb_path)
        store = build_store(tokens, dim, w.object_labels, list(env.scenes))
    return store, w


def _read_records(args, strict: bool = True) -> dataset_io.RecordFile:
    taxonomy = load_taxonomy(args.taxonomy)
    return dataset_io.read_records(args.records, taxonomy, args.environment, strict)


def cmd_gen_synth(args) -> int:
    config = dataset_io.SynthConfig(
        n_scenes=args.n_scenes,
        n_objects=args.n_objects,
        chars_per_scene=args.chars_per_scene,
        p_char=args.p_char,
        p_noise=args.p_noise,
        cnn_top1_target=args.cnn_top1_target,
        n_train=args.n_train,
        n_test=args.n_test,
        seed=args.seed,
    )
    summary = dataset_io.generate_synthetic(config, args.out, dim=args.dim)
    with atomic_write(Path(args.out) / "summary.json") as fh:
        fh.write(summary.to_json())
    sys.stdout.write(summary.to_json())
    return 0


def cmd_init_weights(args) -> int:
    taxonomy = load_taxonomy(args.taxonomy)
    record_file = _read_records(args)
    corpus = weights_mod.build_corpus(
        record_file.records, taxonomy, args.environment
    )
    w = weights_mod.init_tfidf(corpus)
    weights_mod.save_weights(w, args.out)
    logger.info(
        "wrote %s (%d objects x %d scenes)",
        args.out,
        len(w.object_labels),
        len(w.scene_labels),
    )
    return 0


def cmd_train(args) -> int:
    store, w = _load_model(args)
    record_file = _read_records(args)
    examples = trainer.build_examples(record_file.records, store.scene_labels)
    config = trainer.TrainerConfig(
        seed=args.seed,
        margin=args.margin,
        learning_rate=args.lr,
        epochs=args.epochs,
        weight_decay=args.weight_decay,
        freeze_objects=args.freeze_objects,
        freeze_scenes=args.freeze_scenes,
        freeze_weights=args.freeze_weights,
    )
    report = trainer.train(store, w, examples, config)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    export_vectors_csv(store, out_dir / "vectors.csv")
    weights_mod.save_weights(w, out_dir / "weights.tsv")
    report.save(out_dir / "training_report.tsv")
    for row in report.epochs:
        logger.info(
            "epoch %d: mean_loss=%.6f max_param_delta=%.6f",
            row.epoch,
            row.mean_loss,
            row.max_param_delta,
        )
    return 0


def cmd_rerank(args) -> int:
    store, w = _load_model(args)
    record_file = _read_records(args)
    with atomic_write(args.out) as fh:
        for rec in record_file.records:
            result = rerank(store, w, rec)
            doc = dataset_io.record_to_dict(rec)
            doc["refined_top5"] = [
                {
                    "label": c.label,
                    "combined": c.combined,
                    "confidence": c.confidence,
                    "similarity": c.similarity,
                }
                for c in result.refined
            ]
            doc["fallback_used"] = result.fallback_used
            fh.write(json.dumps(doc) + "\n")
    logger.info("wrote %s (%d records)", args.out, len(record_file.records))
    return 0


def cmd_eval(args) -> int:
    store, w = _load_model(args)
    record_file = _read_records(args)
    for rec, line_no in zip(record_file.records, record_file.line_numbers):
        if rec.ground_truth is None:
            raise metrics.EvalError(
                f"{record_file.path}:{line_no}: record {rec.image_id!r} "
                "has no ground_truth"
            )
    report = metrics.evaluate(record_file.records, store, w)
    if args.out:
        with atomic_write(args.out) as fh:
            fh.write(report.to_json())
    else:
        sys.stdout.write(report.to_json())
    return 0


def cmd_export_vectors(args) -> int:
    emb_path = Path(args.embeddings)
    if _is_vector_csv(emb_path):
        store = load_vectors_csv(emb_path)
    else:
        if not (args.taxonomy and args.environment and args.weights):
            raise EmbeddingError(
                "text embeddings need --taxonomy, --environment and --weights "
                "to define the vocabulary"
            )
        store, _ = _load_model(args)
    n = export_vectors_csv(store, args.out)
    logger.info("wrote %s (%d vectors)", args.out, n)
    return 0


def _add_model_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--taxonomy", required=True, help="taxonomy YAML file")
    p.add_argument("--environment", required=True, help="environment id")
    p.add_argument(
        "--embeddings",
        required=True,
        help="pretrained text embeddings or a vectors CSV",
    )
    p.add_argument("--weights", required=True, help="weight TSV file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scene-rerank",
        description="Refine top-5 scene predictions using detected objects.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synth", help="generate a seeded synthetic dataset")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--n-scenes", type=int, default=20)
    p.add_argument("--n-objects", type=int, default=60)
    p.add_argument("--chars-per-scene", type=int, default=3)
    p.add_argument("--p-char", type=float, default=0.9)
    p.add_argument("--p-noise", type=float, default=0.05)
    p.add_argument("--cnn-top1-target", type=float, default=0.55)
    p.add_argument("--n-train", type=int, default=2000)
    p.add_argument("--n-test", type=int, default=500)
    p.add_argument("--dim", type=int, default=50, help="embedding dimensionality")
    p.set_defaults(func=cmd_gen_synth)

    p = sub.add_parser("init-weights", help="tf-idf weights from labeled records")
    p.add_argument("--taxonomy", required=True)
    p.add_argument("--environment", required=True)
    p.add_argument("--records", required=True)
    p.add_argument("--out", required=True, help="output weight TSV")
    p.set_defaults(func=cmd_init_weights)

    p = sub.add_parser("train", help="learn vectors and weights from records")
    _add_model_args(p)
    p.add_argument("--records", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--margin", type=float, default=0.1)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--weight-decay", type=float, default=0.0)
    p.add_argument("--freeze-objects", action="store_true")
    p.add_argument("--freeze-scenes", action="store_true")
    p.add_argument("--freeze-weights", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("rerank", help="refine each record's top-5")
    _add_model_args(p)
    p.add_argument("--records", required=True)
    p.add_argument("--out", required=True, help="output JSON lines file")
    p.set_defaults(func=cmd_rerank)

    p = sub.add_parser("eval", help="accuracy before vs. after refinement")
    _add_model_args(p)
    p.add_argument("--records", required=True)
    p.add_argument("--out", help="write the report here instead of stdout")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("export-vectors", help="dump vectors as CSV")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--taxonomy")
    p.add_argument("--environment")
    p.add_argument("--weights")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_vectors)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
