"""Tokenization, an in-memory inverted index, and Okapi BM25 scoring."""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .datamodel import IntegrityError

SNAPSHOT_FORMAT = "ltcontext-index"
SNAPSHOT_VERSION = 1

_TOKEN = re.compile(r"[^\W_]+")


def analyze(text: str) -> list[str]:
    """Lowercase and split on non-alphanumeric boundaries. No stemming, no stopwords."""
    return _TOKEN.findall(text.lower())


@dataclass(frozen=True)
class Bm25Params:
    k1: float = 1.2
    b: float = 0.8

    def __post_init__(self) -> None:
        if not self.k1 > 0:
            raise ValueError(f"k1 must be > 0, got {self.k1}")
        if not 0.0 <= self.b <= 1.0:
            raise ValueError(f"b must be in [0, 1], got {self.b}")


class InvertedIndex:
    """Posting lists of (doc id, term frequency), sorted by doc id.

    Build with :func:`build_index`; the structure is not mutated afterwards.
    """

    def __init__(self, postings: dict[str, list[tuple[str, int]]], doc_lengths: dict[str, int]):
        self.postings = postings
        self.doc_lengths = doc_lengths
        self.num_docs = len(doc_lengths)
        self.avg_doc_length = (
            sum(doc_lengths.values()) / self.num_docs if self.num_docs else 0.0
        )

    def df(self, term: str) -> int:
        return len(self.postings.get(term, ()))

    def idf(self, term: str) -> float:
        df = self.df(term)
        return math.log(1.0 + (self.num_docs - df + 0.5) / (df + 0.5))

    def to_dict(self) -> dict:
        return {
            "format": SNAPSHOT_FORMAT,
            "version": SNAPSHOT_VERSION,
            "doc_lengths": self.doc_lengths,
            "postings": {t: [[d, tf] for d, tf in p] for t, p in self.postings.items()},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "InvertedIndex":
        if data.get("format") != SNAPSHOT_FORMAT:
            raise ValueError("not an index snapshot")
        if data.get("version") != SNAPSHOT_VERSION:
            raise ValueError(f"unsupported index snapshot version {data.get('version')!r}")
        postings = {t: [(d, int(tf)) for d, tf in p] for t, p in data["postings"].items()}
        return cls(postings, {d: int(n) for d, n in data["doc_lengths"].items()})

    def save(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True, ensure_ascii=False)

    @classmethod
    def load(cls, path: str | Path) -> "InvertedIndex":
        with Path(path).open("r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def build_index(docs: Iterable[tuple[str, str]]) -> InvertedIndex:
    doc_lengths: dict[str, int] = {}
    postings: dict[str, list[tuple[str, int]]] = {}
    for doc_id, text in sorted(docs, key=lambda d: d[0]):
        if doc_id in doc_lengths:
            raise IntegrityError(f"duplicate doc id {doc_id!r}")
        tokens = analyze(text)
        doc_lengths[doc_id] = len(tokens)
        for term, tf in Counter(tokens).items():
            postings.setdefault(term, []).append((doc_id, tf))
    # docs were visited in ascending id order, so postings are already sorted
    return InvertedIndex(postings, doc_lengths)


def bm25_scores(
    index: InvertedIndex, query: Sequence[str], params: Bm25Params = Bm25Params()
) -> dict[str, float]:
    """Unranked BM25 scores for every doc sharing at least one query term.

    Repeated query terms contribute once per occurrence.
    """
    scores: dict[str, float] = {}
    if index.num_docs == 0:
        return scores
    k1, b, avgdl = params.k1, params.b, index.avg_doc_length
    for term in query:
        plist = index.postings.get(term)
        if not plist:
            continue
        idf = index.idf(term)
        for doc_id, tf in plist:
            dl = index.doc_lengths[doc_id]
            norm = k1 * (1.0 - b + b * dl / avgdl) if avgdl > 0 else k1
            scores[doc_id] = scores.get(doc_id, 0.0) + idf * tf * (k1 + 1.0) / (tf + norm)
    return scores


def rank_scores(scores: dict[str, float], k: int | None = None) -> list[tuple[str, float]]:
    """Sort by descending score, ties by ascending id, keep at most ``k``."""
    ranked = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
    return ranked if k is None else ranked[: max(k, 0)]


def bm25_search(
    index: InvertedIndex,
    query: Sequence[str],
    params: Bm25Params = Bm25Params(),
    k: int | None = 1000,
) -> list[tuple[str, float]]:
    if k is not None and k <= 0:
        return []
    return rank_scores(bm25_scores(index, query, params), k)
