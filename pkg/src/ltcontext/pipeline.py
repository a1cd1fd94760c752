"""Support-entity / support-context generative ranking of candidate contexts.

The score of a candidate context ``c`` for a long-tail entity ``e`` is

    P(c|e) = sum_se P(se|e) * sum_sc P(c|e,sc) * P(sc|se)

where ``se`` ranges over support entities retrieved from the catalog with
the entity description (SER), ``sc`` over contexts linked to ``se`` by a
prior entity-linking pass (SCR), and ``P(c|e,sc)`` normalizes a
context-to-context similarity over the candidate set (CCR).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from typing import Mapping

from .datamodel import (
    DEFAULT_CANDIDATE_CAP,
    AnnotationStore,
    CatalogEntity,
    Context,
    ContextSet,
    ContextStore,
    EntityQuery,
    IntegrityError,
    gather_candidate_contexts,
)
from .embeddings import ContextVector, EmbeddingTable, context_vector, cosine
from .runfile import ContextRanking, order_entries
from .textindex import Bm25Params, InvertedIndex, analyze, bm25_scores, bm25_search, build_index

SER_VARIANTS = ("basic", "pop", "types")
CCR_VARIANTS = ("retrieval", "semantic")
DEFAULT_GRID_N = (50, 100)
DEFAULT_GRID_M = (50, 100)
SER_RETRIEVAL_DEPTH = 200


@dataclass(frozen=True)
class PipelineConfig:
    ser_variant: str = "basic"
    n: int = 50
    m: int = 50
    ccr_variant: str = "semantic"
    theta: float = 0.9
    bm25: Bm25Params = field(default_factory=Bm25Params)
    candidate_cap: int = DEFAULT_CANDIDATE_CAP

    def __post_init__(self) -> None:
        if self.ser_variant not in SER_VARIANTS:
            raise ValueError(f"ser_variant must be one of {SER_VARIANTS}, got {self.ser_variant!r}")
        if self.ccr_variant not in CCR_VARIANTS:
            raise ValueError(f"ccr_variant must be one of {CCR_VARIANTS}, got {self.ccr_variant!r}")
        for name in ("n", "m", "candidate_cap"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError(f"theta must be in [0, 1], got {self.theta}")

    @property
    def run_tag(self) -> str:
        tag = f"{self.ser_variant}-n{self.n}-m{self.m}-{self.ccr_variant}"
        default = PipelineConfig()
        if self.theta != default.theta:
            tag += f"-t{self.theta:g}"
        if self.bm25 != default.bm25:
            tag += f"-k{self.bm25.k1:g}-b{self.bm25.b:g}"
        if self.candidate_cap != default.candidate_cap:
            tag += f"-cap{self.candidate_cap}"
        return tag

    def describe(self) -> dict:
        return {
            "ser_variant": self.ser_variant,
            "n": self.n,
            "m": self.m,
            "ccr_variant": self.ccr_variant,
            "theta": self.theta,
            "k1": self.bm25.k1,
            "b": self.bm25.b,
            "candidate_cap": self.candidate_cap,
        }


def config_grid(
    ns=DEFAULT_GRID_N, ms=DEFAULT_GRID_M, base: PipelineConfig | None = None
) -> list[PipelineConfig]:
    """All SER x N x M x CCR combinations (24 for the default grid)."""
    base = base or PipelineConfig()
    return [
        replace(base, ser_variant=s, n=n, m=m, ccr_variant=c)
        for s, n, m, c in itertools.product(SER_VARIANTS, ns, ms, CCR_VARIANTS)
    ]


@dataclass
class Stores:
    """Everything scoring needs, loaded once and shared read-only across entities."""

    catalog: Mapping[str, CatalogEntity]
    contexts: ContextStore
    annotations: AnnotationStore
    embeddings: EmbeddingTable | None = None
    catalog_index: InvertedIndex | None = None

    def __post_init__(self) -> None:
        if self.catalog_index is None:
            self.catalog_index = build_catalog_index(self.catalog)


def build_catalog_index(catalog: Mapping[str, CatalogEntity]) -> InvertedIndex:
    return build_index((ent.id, ent.opening_text) for ent in catalog.values())


# --------------------------------------------------------------------------
# SER


@dataclass(frozen=True)
class SupportEntity:
    entity_id: str
    raw_score: float
    probability: float


@dataclass
class SupportEntityRanking:
    entries: list[SupportEntity]

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def probabilities(self) -> dict[str, float]:
        return {se.entity_id: se.probability for se in self.entries}


def normalize(values: list[float]) -> list[float]:
    total = sum(values)
    if total <= 0.0:
        return [0.0] * len(values)
    return [v / total for v in values]


def _shares_type(entity_type: str, types) -> bool:
    wanted = entity_type.casefold()
    return any(t.casefold() == wanted for t in types)


def rank_support_entities(
    entity: EntityQuery,
    catalog_index: InvertedIndex,
    catalog: Mapping[str, CatalogEntity],
    cfg: PipelineConfig,
) -> SupportEntityRanking:
    """Retrieve up to 200 catalog entities with the description, apply the
    variant, truncate to N and normalize over what remains."""
    hits = bm25_search(catalog_index, analyze(entity.description), cfg.bm25, k=SER_RETRIEVAL_DEPTH)
    if cfg.ser_variant == "pop":
        hits = [(eid, score * catalog[eid].inlink_count) for eid, score in hits]
        hits.sort(key=lambda kv: (-kv[1], kv[0]))
    elif cfg.ser_variant == "types":
        hits = [(eid, s) for eid, s in hits if _shares_type(entity.entity_type, catalog[eid].types)]
    hits = hits[: cfg.n]
    probs = normalize([s for _, s in hits])
    return SupportEntityRanking(
        [SupportEntity(eid, s, p) for (eid, s), p in zip(hits, probs)]
    )


# --------------------------------------------------------------------------
# SCR


@dataclass(frozen=True)
class SupportContext:
    context_id: str
    confidence: float
    probability: float


@dataclass
class SupportContextSet:
    by_entity: dict[str, list[SupportContext]]
    skipped: list[str] = field(default_factory=list)

    def union(self) -> list[str]:
        return sorted({sc.context_id for scs in self.by_entity.values() for sc in scs})

    def __len__(self) -> int:
        return sum(len(v) for v in self.by_entity.values())


def select_support_contexts(
    ranking: SupportEntityRanking, annotations: AnnotationStore, cfg: PipelineConfig
) -> SupportContextSet:
    """Top-M linked contexts per support entity by confidence, normalized per entity.

    Entities with no linked context at or above theta are skipped.
    """
    by_entity: dict[str, list[SupportContext]] = {}
    skipped: list[str] = []
    for se in ranking:
        linked = [
            (cid, conf)
            for cid, conf in annotations.contexts_for_entity(se.entity_id)
            if conf >= cfg.theta
        ]
        linked.sort(key=lambda kv: (-kv[1], kv[0]))
        linked = linked[: cfg.m]
        if not linked or sum(conf for _, conf in linked) <= 0.0:
            skipped.append(se.entity_id)
            continue
        probs = normalize([conf for _, conf in linked])
        by_entity[se.entity_id] = [
            SupportContext(cid, conf, p) for (cid, conf), p in zip(linked, probs)
        ]
    return SupportContextSet(by_entity, skipped)


# --------------------------------------------------------------------------
# CCR


def candidate_vectors(C: ContextSet, table: EmbeddingTable) -> dict[str, ContextVector]:
    return {c.context_id: context_vector(analyze(c.text), table) for c in C}


def ccr_scores(
    support_context: Context,
    C: ContextSet,
    cfg: PipelineConfig,
    context_index: InvertedIndex | None = None,
    embeddings: EmbeddingTable | None = None,
    vectors: dict[str, ContextVector] | None = None,
) -> dict[str, float]:
    """Raw non-negative similarity of every candidate to one support context.

    ``retrieval`` needs an index over exactly the members of C; ``semantic``
    needs an embedding table (``vectors`` may carry precomputed candidate
    vectors).
    """
    if cfg.ccr_variant == "retrieval":
        if context_index is None:
            context_index = build_index((c.context_id, c.text) for c in C)
        hit = bm25_scores(context_index, analyze(support_context.text), cfg.bm25)
        return {c.context_id: hit.get(c.context_id, 0.0) for c in C}
    if embeddings is None:
        raise ValueError("semantic ccr requires an embedding table")
    if vectors is None:
        vectors = candidate_vectors(C, embeddings)
    query = context_vector(analyze(support_context.text), embeddings)
    return {c.context_id: max(cosine(vectors[c.context_id], query), 0.0) for c in C}


# --------------------------------------------------------------------------
# combination


def score_contexts(
    entity: EntityQuery, C: ContextSet, stores: Stores, cfg: PipelineConfig
) -> ContextRanking:
    ser = rank_support_entities(entity, stores.catalog_index, stores.catalog, cfg)
    scr = select_support_contexts(ser, stores.annotations, cfg)
    return combine(entity.id, ser, scr, C, stores, cfg)


def combine(
    entity_id: str,
    ser: SupportEntityRanking,
    scr: SupportContextSet,
    C: ContextSet,
    stores: Stores,
    cfg: PipelineConfig,
) -> ContextRanking:
    """Sum the three components over every (support entity, support context) pair.

    A support context whose similarities to all of C sum to zero contributes
    nothing; neither does a skipped support entity. The mass they would have
    carried is reported as ``lost_mass``.
    """
    context_index = None
    vectors = None
    if cfg.ccr_variant == "retrieval":
        context_index = build_index((c.context_id, c.text) for c in C)
    else:
        if stores.embeddings is None:
            raise ValueError("semantic ccr requires an embedding table")
        vectors = candidate_vectors(C, stores.embeddings)

    # P(c|e,sc) per distinct support context; None marks a zero denominator
    conditional: dict[str, dict[str, float] | None] = {}
    for cid in scr.union():
        if cid not in stores.contexts:
            raise IntegrityError(f"support context {cid!r} is annotated but missing from the context store")
        raw = ccr_scores(
            stores.contexts[cid], C, cfg, context_index, stores.embeddings, vectors
        )
        denom = sum(raw[c.context_id] for c in C)
        conditional[cid] = None if denom <= 0.0 else {k: v / denom for k, v in raw.items()}

    totals = {c.context_id: 0.0 for c in C}
    ser_prob = ser.probabilities()
    lost = 1.0 - sum(ser_prob.values()) if len(ser) else 1.0
    zero_denominators = 0
    for se in ser:
        p_se = se.probability
        scs = scr.by_entity.get(se.entity_id)
        if scs is None:
            lost += p_se
            continue
        for sc in scs:
            cond = conditional[sc.context_id]
            if cond is None:
                zero_denominators += 1
                lost += p_se * sc.probability
                continue
            weight = p_se * sc.probability
            for c in C:
                totals[c.context_id] += cond[c.context_id] * weight

    diagnostics = {
        "num_candidates": len(C),
        "num_support_entities": len(ser),
        "num_support_entities_used": len(scr.by_entity),
        "num_support_entities_skipped": len(scr.skipped),
        "num_support_contexts": len(scr),
        "num_distinct_support_contexts": len(conditional),
        "zero_denominator_count": zero_denominators,
        "lost_mass": lost,
        "empty_support": len(scr) == 0,
    }
    return ContextRanking(entity_id, order_entries(totals), cfg.run_tag, diagnostics)


def rank_entity(
    entity: EntityQuery, stores: Stores, cfg: PipelineConfig
) -> ContextRanking:
    """Gather candidates for ``entity`` from the context store and score them."""
    C = gather_candidate_contexts(entity, stores.contexts, cfg.candidate_cap)
    return score_contexts(entity, C, stores, cfg)
