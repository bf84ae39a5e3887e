"""Vocabulary of object and scene vectors.

Vectors start from a pretrained text embedding file; multi-word labels are
mean-pooled over their tokens and unknown tokens get a small deterministic
hash-seeded vector so builds are reproducible. Lookups are role-qualified:
an object label and a scene label may share the same string.
"""

from __future__ import annotations

import csv
import hashlib
import logging
import re
from pathlib import Path
from typing import Mapping, Optional

import numpy as np

from ._kernels import EPS_NORM
from ._util import atomic_write, fmt_float

logger = logging.getLogger(__name__)

_TOKEN_SPLIT = re.compile(r"[\s_\-]+")

# OOV vectors are uniform in [-OOV_SCALE, OOV_SCALE]: small next to typical
# pretrained norms, never all-zero in practice.
OOV_SCALE = 0.1


class EmbeddingError(ValueError):
    """Raised on malformed embedding inputs or store inconsistencies."""


def load_pretrained(path: str | Path) -> tuple[dict[str, np.ndarray], int]:
    """Parse a text embedding file into (token -> vector, dim).

    Format: optional first line "<count> <dim>", then one token and its
    space-separated float components per line. Dimensionality must be
    consistent across lines.
    """
    path = Path(path)
    tokens: dict[str, np.ndarray] = {}
    dim: Optional[int] = None
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if line_no == 1 and len(parts) == 2:
                try:
                    count, header_dim = int(parts[0]), int(parts[1])
                except ValueError:
                    pass
                else:
                    if header_dim <= 0:
                        raise EmbeddingError(f"{path}:1: non-positive dim in header")
                    dim = header_dim
                    continue
            token, raw_values = parts[0], parts[1:]
            try:
                vec = np.array([float(v) for v in raw_values], dtype=np.float64)
            except ValueError as exc:
                raise EmbeddingError(f"{path}:{line_no}: malformed float: {exc}") from exc
            if dim is None:
                if vec.size == 0:
                    raise EmbeddingError(f"{path}:{line_no}: token without values")
                dim = vec.size
            if vec.size != dim:
                raise EmbeddingError(
                    f"{path}:{line_no}: expected {dim} values, got {vec.size}"
                )
            tokens[token] = vec
    if dim is None or not tokens:
        raise EmbeddingError(f"{path}: no vectors found")
    return tokens, dim


def _oov_vector(token: str, dim: int) -> np.ndarray:
    """Deterministic pseudo-random vector for an out-of-vocabulary token."""
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    seed = int.from_bytes(digest, "little")
    rng = np.random.default_rng(seed)
    return rng.uniform(-OOV_SCALE, OOV_SCALE, dim)


def resolve_label(
    token_vectors: Mapping[str, np.ndarray], dim: int, label: str
) -> np.ndarray:
    """Vector for a (possibly multi-word) label.

    Lowercases, splits on spaces/underscores/hyphens, and averages the token
    vectors; missing tokens fall back to the hash-seeded OOV vector. Pure
    function of (token_vectors, label): repeated calls agree bitwise.
    """
    if not label:
        raise EmbeddingError("empty label")
    tokens = [t for t in _TOKEN_SPLIT.split(label.lower()) if t]
    if not tokens:
        tokens = [label.lower()]
    acc = np.zeros(dim)
    for tok in tokens:
        vec = token_vectors.get(tok)
        acc += vec if vec is not None else _oov_vector(tok, dim)
    return acc / len(tokens)


def cosine(a: np.ndarray, b: np.ndarray) -> Optional[float]:
    """Cosine similarity, or None when either norm is below 1e-12.

    Callers must map None to their documented fallback (the reranker treats
    it as neutral).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise EmbeddingError(f"shape mismatch: {a.shape} vs {b.shape}")
    na = float(np.sqrt(np.dot(a, a)))
    nb = float(np.sqrt(np.dot(b, b)))
    if na < EPS_NORM or nb < EPS_NORM:
        return None
    return float(np.dot(a, b) / (na * nb))


class EmbeddingStore:
    """Object vectors and scene vectors, with dense matrices for the kernels.

    Rows of ``object_matrix``/``scene_matrix`` follow ``object_labels``/
    ``scene_labels``. Immutable during inference; the trainer takes exclusive
    ownership and updates the matrices in place.
    """

    def __init__(
        self,
        dim: int,
        object_labels: list[str],
        scene_labels: list[str],
        object_matrix: np.ndarray,
        scene_matrix: np.ndarray,
        token_vectors: Optional[dict[str, np.ndarray]] = None,
    ):
        self.dim = int(dim)
        self.object_labels = list(object_labels)
        self.scene_labels = list(scene_labels)
        self.object_matrix = np.ascontiguousarray(object_matrix, dtype=np.float64)
        self.scene_matrix = np.ascontiguousarray(scene_matrix, dtype=np.float64)
        self.token_vectors = token_vectors or {}
        self._obj_index = {lab: i for i, lab in enumerate(self.object_labels)}
        self._scene_index = {lab: j for j, lab in enumerate(self.scene_labels)}
        self._validate()

    def _validate(self):
        if len(self._obj_index) != len(self.object_labels):
            raise EmbeddingError("duplicate object labels")
        if len(self._scene_index) != len(self.scene_labels):
            raise EmbeddingError("duplicate scene labels")
        if self.object_matrix.shape != (len(self.object_labels), self.dim):
            raise EmbeddingError("object matrix shape mismatch")
        if self.scene_matrix.shape != (len(self.scene_labels), self.dim):
            raise EmbeddingError("scene matrix shape mismatch")
        for role, labels, mat in (
            ("object", self.object_labels, self.object_matrix),
            ("scene", self.scene_labels, self.scene_matrix),
        ):
            if mat.shape[0]:
                norms = np.sqrt((mat * mat).sum(axis=1))
                bad = np.nonzero(norms < EPS_NORM)[0]
                if bad.size:
                    raise EmbeddingError(
                        f"{role} vector {labels[bad[0]]!r} is (near-)zero"
                    )

    def object_index(self, label: str) -> Optional[int]:
        return self._obj_index.get(label)

    def scene_index(self, label: str) -> Optional[int]:
        return self._scene_index.get(label)

    def object_vector(self, label: str) -> np.ndarray:
        i = self._obj_index.get(label)
        if i is None:
            raise EmbeddingError(f"unknown object label {label!r}")
        return self.object_matrix[i]

    def scene_vector(self, label: str) -> np.ndarray:
        j = self._scene_index.get(label)
        if j is None:
            raise EmbeddingError(f"unknown scene label {label!r}")
        return self.scene_matrix[j]

    def resolve_label(self, label: str) -> np.ndarray:
        return resolve_label(self.token_vectors, self.dim, label)


def build_store(
    token_vectors: Mapping[str, np.ndarray],
    dim: int,
    object_labels: list[str],
    scene_labels: list[str],
) -> EmbeddingStore:
    """Resolve every object and scene label into a fresh store."""
    obj_mat = np.zeros((len(object_labels), dim))
    for i, lab in enumerate(object_labels):
        obj_mat[i] = resolve_label(token_vectors, dim, lab)
    scn_mat = np.zeros((len(scene_labels), dim))
    for j, lab in enumerate(scene_labels):
        scn_mat[j] = resolve_label(token_vectors, dim, lab)
    return EmbeddingStore(
        dim=dim,
        object_labels=list(object_labels),
        scene_labels=list(scene_labels),
        object_matrix=obj_mat,
        scene_matrix=scn_mat,
        token_vectors=dict(token_vectors),
    )


def export_vectors_csv(store: EmbeddingStore, path: str | Path) -> int:
    """Write role,label,d0..d{dim-1} rows for every vector; returns row count."""
    n = 0
    with atomic_write(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["role", "label"] + [f"d{i}" for i in range(store.dim)])
        for role, labels, mat in (
            ("object", store.object_labels, store.object_matrix),
            ("scene", store.scene_labels, store.scene_matrix),
        ):
            for lab, row in zip(labels, mat):
                writer.writerow([role, lab] + [fmt_float(x) for x in row])
                n += 1
    return n


def load_vectors_csv(path: str | Path) -> EmbeddingStore:
    """Parse a CSV produced by export_vectors_csv back into a store."""
    path = Path(path)
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmbeddingError(f"{path}: empty file") from None
        if len(header) < 2 or header[0] != "role" or header[1] != "label":
            raise EmbeddingError(f"{path}: not a vector CSV (bad header)")
        dim = len(header) - 2
        obj_labels: list[str] = []
        obj_rows: list[list[float]] = []
        scn_labels: list[str] = []
        scn_rows: list[list[float]] = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2 + dim:
                raise EmbeddingError(f"{path}:{line_no}: expected {2 + dim} columns")
            role, label = row[0], row[1]
            values = [float(v) for v in row[2:]]
            if role == "object":
                obj_labels.append(label)
                obj_rows.append(values)
            elif role == "scene":
                scn_labels.append(label)
                scn_rows.append(values)
            else:
                raise EmbeddingError(f"{path}:{line_no}: unknown role {role!r}")
    return EmbeddingStore(
        dim=dim,
        object_labels=obj_labels,
        scene_labels=scn_labels,
        object_matrix=np.array(obj_rows).reshape(len(obj_labels), dim),
        scene_matrix=np.array(scn_rows).reshape(len(scn_labels), dim),
    )
