"""Pretrained word vectors, averaged context vectors and cosine similarity."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .datamodel import ParseError

logger = logging.getLogger(__name__)


class EmbeddingTable:
    """Immutable term -> vector lookup backed by a single matrix."""

    def __init__(self, terms: Sequence[str], vectors: np.ndarray):
        vectors = np.asarray(vectors, dtype=np.float64)
        if vectors.ndim != 2 or vectors.shape[0] != len(terms):
            raise ValueError("vectors must be a (len(terms), dim) matrix")
        if vectors.shape[1] < 1:
            raise ValueError("embedding dimension must be positive")
        self._row = {t: i for i, t in enumerate(terms)}
        if len(self._row) != len(terms):
            raise ValueError("terms must be unique")
        self._vectors = vectors
        self._vectors.setflags(write=False)

    @property
    def dim(self) -> int:
        return self._vectors.shape[1]

    def __len__(self) -> int:
        return len(self._row)

    def __contains__(self, term: str) -> bool:
        return term in self._row

    def get(self, term: str) -> np.ndarray | None:
        i = self._row.get(term)
        return None if i is None else self._vectors[i]

    @classmethod
    def from_dict(cls, table: dict[str, Sequence[float]]) -> "EmbeddingTable":
        terms = list(table)
        return cls(terms, np.array([table[t] for t in terms], dtype=np.float64))


def load_embeddings(path: str | Path) -> EmbeddingTable:
    """Read word2vec text format.

    An optional ``count dim`` header is accepted; without one the dimension
    comes from the first data line. A repeated term keeps its last vector.
    """
    rows: dict[str, list[float]] = {}
    dim: int | None = None
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            parts = raw.rstrip("\n").split()
            if not parts:
                continue
            if lineno == 1 and len(parts) == 2 and all(p.isdigit() for p in parts):
                dim = int(parts[1])
                continue
            term, values = parts[0], parts[1:]
            if dim is None:
                dim = len(values)
                if dim == 0:
                    raise ParseError("term has no vector components", path, lineno)
            if len(values) != dim:
                raise ParseError(
                    f"expected {dim} components for {term!r}, found {len(values)}", path, lineno
                )
            try:
                vec = [float(v) for v in values]
            except ValueError:
                raise ParseError(f"non-numeric component for {term!r}", path, lineno) from None
            if term in rows:
                logger.warning("%s:%d: duplicate term %r, keeping last vector", path, lineno, term)
                del rows[term]
            rows[term] = vec
    if dim is None:
        raise ParseError("no embedding rows found", path)
    terms = list(rows)
    matrix = np.array([rows[t] for t in terms], dtype=np.float64).reshape(len(terms), dim)
    return EmbeddingTable(terms, matrix)


@dataclass(frozen=True)
class ContextVector:
    vector: np.ndarray
    covered_terms: int

    @property
    def dim(self) -> int:
        return self.vector.shape[0]


def context_vector(tokens: Sequence[str], table: EmbeddingTable) -> ContextVector:
    """Mean of the vectors of in-vocabulary tokens, counting repeats.

    Out-of-vocabulary tokens are skipped. No covered token gives the zero vector.
    """
    total = np.zeros(table.dim, dtype=np.float64)
    covered = 0
    # sorted order makes the float sum independent of token order
    for tok in sorted(tokens):
        vec = table.get(tok)
        if vec is None:
            continue
        total += vec
        covered += 1
    if covered:
        total /= covered
    return ContextVector(total, covered)


def cosine(u: ContextVector | np.ndarray, v: ContextVector | np.ndarray) -> float:
    a = u.vector if isinstance(u, ContextVector) else np.asarray(u, dtype=np.float64)
    b = v.vector if isinstance(v, ContextVector) else np.asarray(v, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na = math.sqrt(float(np.dot(a, a)))
    nb = math.sqrt(float(np.dot(b, b)))
    if na == 0.0 or nb == 0.0:
        return 0.0
    sim = float(np.dot(a, b)) / (na * nb)
    return min(1.0, max(-1.0, sim))
