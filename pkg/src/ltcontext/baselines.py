"""Comparison systems: description-query sentence retrieval and a thresholded linker."""

from __future__ import annotations

from .datamodel import AnnotationStore, ContextSet, EntityQuery
from .runfile import ContextRanking, order_entries
from .textindex import Bm25Params, analyze, bm25_scores, build_index

SENTENCE_RETRIEVAL_TAG = "baseline-bm25"
LINKER_THETAS = (0.6, 0.9)


def linker_tag(theta: float) -> str:
    return f"linker-t{theta:g}"


def sentence_retrieval_baseline(
    entity: EntityQuery, C: ContextSet, bm25: Bm25Params = Bm25Params()
) -> ContextRanking:
    """BM25 over an index of exactly C, queried with the entity description.

    Contexts sharing no query term are kept at score 0, after the rest.
    """
    index = build_index((c.context_id, c.text) for c in C)
    hits = bm25_scores(index, analyze(entity.description), bm25)
    scores = {c.context_id: hits.get(c.context_id, 0.0) for c in C}
    return ContextRanking(entity.id, order_entries(scores), SENTENCE_RETRIEVAL_TAG)


def linker_baseline(
    entity: EntityQuery, C: ContextSet, annotations: AnnotationStore, theta: float
) -> ContextRanking:
    """Score each context by its best link confidence to ``entity.id`` at or above theta.

    ``annotations`` should be loaded without a threshold. An entity unknown
    to the linker (no catalog identity) gets an all-zero ranking. Unlinked
    contexts count as not retrieved and are left out of run files.
    """
    if not 0.0 <= theta <= 1.0:
        raise ValueError(f"theta must be in [0, 1], got {theta}")
    if annotations.theta > theta:
        raise ValueError(
            f"annotation store was thresholded at {annotations.theta}, above requested theta {theta}"
        )
    scores = {}
    for c in C:
        conf = annotations.confidence(c.context_id, entity.id)
        scores[c.context_id] = conf if conf is not None and conf >= theta else 0.0
    return ContextRanking(entity.id, order_entries(scores), linker_tag(theta), emit_zero_scores=False)
