"""Domain records and line-delimited JSON ingestion.

Four record files drive everything downstream:

* ``catalog.jsonl``     {id, opening_text, types[], inlink_count, surface_forms[]}
* ``contexts.jsonl``    {context_id, text, source_doc, mentions[]}
* ``annotations.jsonl`` {context_id, entity_id, confidence}
* ``entities.jsonl``    {id, description, entity_type, surface_forms[]}

A mention is serialized as ``[char_start, char_end, surface_string]``.
"""

from __future__ import annotations

import json
import logging
import re
import unicodedata
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping

logger = logging.getLogger(__name__)

ENTITY_TYPES = ("Person", "Location", "Organization")
DEFAULT_CANDIDATE_CAP = 5000


class ParseError(ValueError):
    """A record file line could not be parsed or violates a field constraint."""

    def __init__(self, message: str, path: str | Path | None = None, line: int | None = None):
        self.path = str(path) if path is not None else None
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + message)


class IntegrityError(ValueError):
    """Records are individually well-formed but inconsistent with each other."""


@dataclass(frozen=True)
class EntityQuery:
    """A long-tail entity to retrieve contexts for."""

    id: str
    description: str
    entity_type: str
    surface_forms: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("entity id must be non-empty")
        if not self.description or not self.description.strip():
            raise ValueError(f"entity {self.id!r}: description must be non-empty")
        if self.entity_type not in ENTITY_TYPES:
            raise ValueError(
                f"entity {self.id!r}: entity_type {self.entity_type!r} not in {ENTITY_TYPES}"
            )
        if not self.surface_forms:
            raise ValueError(f"entity {self.id!r}: surface_forms must be non-empty")

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "description": self.description,
            "entity_type": self.entity_type,
            "surface_forms": list(self.surface_forms),
        }


@dataclass(frozen=True)
class CatalogEntity:
    id: str
    opening_text: str
    types: tuple[str, ...] = ()
    inlink_count: int = 0
    surface_forms: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("catalog entity id must be non-empty")
        if isinstance(self.inlink_count, bool) or not isinstance(self.inlink_count, int):
            raise ValueError(f"catalog entity {self.id!r}: inlink_count must be an integer")
        if self.inlink_count < 0:
            raise ValueError(f"catalog entity {self.id!r}: inlink_count must be >= 0")

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "opening_text": self.opening_text,
            "types": list(self.types),
            "inlink_count": self.inlink_count,
            "surface_forms": list(self.surface_forms),
        }


@dataclass(frozen=True)
class Mention:
    start: int
    end: int
    surface: str


@dataclass(frozen=True)
class Context:
    """One sentence with its detected mention spans.

    Mention spans are character offsets into ``text``; a span must cover
    exactly its surface string.
    """

    context_id: str
    text: str
    source_doc: str = ""
    mentions: tuple[Mention, ...] = ()

    def __post_init__(self) -> None:
        if not self.context_id:
            raise ValueError("context_id must be non-empty")
        for m in self.mentions:
            if not (0 <= m.start < m.end <= len(self.text)):
                raise ValueError(
                    f"context {self.context_id!r}: mention span ({m.start}, {m.end}) "
                    f"outside text of length {len(self.text)}"
                )
            if self.text[m.start:m.end] != m.surface:
                raise IntegrityError(
                    f"context {self.context_id!r}: mention {m.surface!r} does not match "
                    f"text[{m.start}:{m.end}] = {self.text[m.start:m.end]!r}"
                )

    def to_record(self) -> dict:
        return {
            "context_id": self.context_id,
            "text": self.text,
            "source_doc": self.source_doc,
            "mentions": [[m.start, m.end, m.surface] for m in self.mentions],
        }


@dataclass(frozen=True)
class LinkAnnotation:
    context_id: str
    entity_id: str
    confidence: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError(
                f"annotation ({self.context_id!r}, {self.entity_id!r}): "
                f"confidence {self.confidence} outside [0, 1]"
            )

    def to_record(self) -> dict:
        return {
            "context_id": self.context_id,
            "entity_id": self.entity_id,
            "confidence": self.confidence,
        }


@dataclass(frozen=True)
class ContextSet:
    """The candidate contexts C for one long-tail entity, ascending by context_id."""

    entity_id: str
    members: tuple[Context, ...] = ()

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self) -> Iterator[Context]:
        return iter(self.members)

    @property
    def ids(self) -> list[str]:
        return [c.context_id for c in self.members]


class ContextStore(Mapping[str, Context]):
    """Immutable mapping context_id -> Context, iterated in ascending id order."""

    def __init__(self, contexts: Iterable[Context] = ()):
        by_id: dict[str, Context] = {}
        for ctx in contexts:
            if ctx.context_id in by_id:
                raise IntegrityError(f"duplicate context_id {ctx.context_id!r}")
            by_id[ctx.context_id] = ctx
        self._by_id = {cid: by_id[cid] for cid in sorted(by_id)}

    def __getitem__(self, context_id: str) -> Context:
        return self._by_id[context_id]

    def __iter__(self) -> Iterator[str]:
        return iter(self._by_id)

    def __len__(self) -> int:
        return len(self._by_id)


class AnnotationStore:
    """Entity-linking annotations retained at or above ``theta``.

    Supports lookup of every context linked to an entity (the per-entity
    linked-context collection) and of every annotation on a context.
    Duplicate (context, entity) pairs keep the maximum confidence.
    """

    def __init__(self, annotations: Iterable[LinkAnnotation] = (), theta: float = 0.0):
        if not (0.0 <= theta <= 1.0):
            raise ValueError(f"theta must be in [0, 1], got {theta}")
        self.theta = theta
        best: dict[tuple[str, str], float] = {}
        for ann in annotations:
            if ann.confidence < theta:
                continue
            key = (ann.context_id, ann.entity_id)
            if key not in best or ann.confidence > best[key]:
                best[key] = ann.confidence
        by_entity: dict[str, list[tuple[str, float]]] = defaultdict(list)
        by_context: dict[str, list[tuple[str, float]]] = defaultdict(list)
        for (cid, eid), conf in sorted(best.items()):
            by_entity[eid].append((cid, conf))
            by_context[cid].append((eid, conf))
        self._pairs = best
        self._by_entity = dict(by_entity)
        self._by_context = dict(by_context)

    def __len__(self) -> int:
        return len(self._pairs)

    def __iter__(self) -> Iterator[LinkAnnotation]:
        for (cid, eid), conf in sorted(self._pairs.items()):
            yield LinkAnnotation(cid, eid, conf)

    def contexts_for_entity(self, entity_id: str) -> list[tuple[str, float]]:
        """(context_id, confidence) pairs linked to ``entity_id``, ascending by id."""
        return list(self._by_entity.get(entity_id, ()))

    def annotations_for_context(self, context_id: str) -> list[tuple[str, float]]:
        return list(self._by_context.get(context_id, ()))

    def confidence(self, context_id: str, entity_id: str) -> float | None:
        return self._pairs.get((context_id, entity_id))

    def has_entity(self, entity_id: str) -> bool:
        return entity_id in self._by_entity

    def thresholded(self, theta: float) -> "AnnotationStore":
        return AnnotationStore(iter(self), theta=theta)


# --------------------------------------------------------------------------
# line-delimited record IO


def _iter_records(path: str | Path) -> Iterator[tuple[int, dict]]:
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc.msg}", path, lineno) from None
            if not isinstance(obj, dict):
                raise ParseError("record must be a JSON object", path, lineno)
            yield lineno, obj


def _require(obj: dict, key: str, kind, path, lineno):
    if key not in obj:
        raise ParseError(f"missing field {key!r}", path, lineno)
    value = obj[key]
    if kind is float:
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    elif kind is int:
        ok = isinstance(value, int) and not isinstance(value, bool)
    else:
        ok = isinstance(value, kind)
    if not ok:
        raise ParseError(f"field {key!r} has wrong type {type(value).__name__}", path, lineno)
    return value


def _str_list(obj: dict, key: str, path, lineno, required: bool = True) -> tuple[str, ...]:
    if key not in obj and not required:
        return ()
    values = _require(obj, key, list, path, lineno)
    if not all(isinstance(v, str) for v in values):
        raise ParseError(f"field {key!r} must be a list of strings", path, lineno)
    return tuple(values)


def write_records(path: str | Path, records: Iterable[dict]) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True))
            fh.write("\n")


def load_catalog(path: str | Path) -> dict[str, CatalogEntity]:
    catalog: dict[str, CatalogEntity] = {}
    for lineno, obj in _iter_records(path):
        try:
            ent = CatalogEntity(
                id=_require(obj, "id", str, path, lineno),
                opening_text=_require(obj, "opening_text", str, path, lineno),
                types=_str_list(obj, "types", path, lineno),
                inlink_count=_require(obj, "inlink_count", int, path, lineno),
                surface_forms=_str_list(obj, "surface_forms", path, lineno, required=False),
            )
        except ParseError:
            raise
        except ValueError as exc:
            raise ParseError(str(exc), path, lineno) from None
        if ent.id in catalog:
            raise IntegrityError(f"{path}:{lineno}: duplicate catalog id {ent.id!r}")
        catalog[ent.id] = ent
    return catalog


def _parse_mentions(obj: dict, path, lineno) -> tuple[Mention, ...]:
    raw = _require(obj, "mentions", list, path, lineno)
    mentions = []
    for item in raw:
        if isinstance(item, dict):
            item = [item.get("char_start"), item.get("char_end"), item.get("surface_string")]
        if (
            not isinstance(item, list)
            or len(item) != 3
            or not all(isinstance(v, int) and not isinstance(v, bool) for v in item[:2])
            or not isinstance(item[2], str)
        ):
            raise ParseError("mention must be [char_start, char_end, surface_string]", path, lineno)
        mentions.append(Mention(item[0], item[1], item[2]))
    return tuple(mentions)


def load_contexts(path: str | Path) -> ContextStore:
    contexts: list[Context] = []
    seen: set[str] = set()
    for lineno, obj in _iter_records(path):
        cid = _require(obj, "context_id", str, path, lineno)
        text = _require(obj, "text", str, path, lineno)
        source = obj.get("source_doc", "")
        if not isinstance(source, str):
            raise ParseError("field 'source_doc' must be a string", path, lineno)
        mentions = _parse_mentions(obj, path, lineno)
        try:
            ctx = Context(cid, text, source, mentions)
        except IntegrityError as exc:
            raise IntegrityError(f"{path}:{lineno}: {exc}") from None
        except ValueError as exc:
            raise ParseError(str(exc), path, lineno) from None
        if cid in seen:
            raise IntegrityError(f"{path}:{lineno}: duplicate context_id {cid!r}")
        seen.add(cid)
        contexts.append(ctx)
    return ContextStore(contexts)


def read_annotations(path: str | Path) -> list[LinkAnnotation]:
    out = []
    for lineno, obj in _iter_records(path):
        try:
            out.append(
                LinkAnnotation(
                    context_id=_require(obj, "context_id", str, path, lineno),
                    entity_id=_require(obj, "entity_id", str, path, lineno),
                    confidence=float(_require(obj, "confidence", float, path, lineno)),
                )
            )
        except ParseError:
            raise
        except ValueError as exc:
            raise ParseError(str(exc), path, lineno) from None
    return out


def load_annotations(path: str | Path, theta: float = 0.9) -> AnnotationStore:
    if not (0.0 <= theta <= 1.0):
        raise ValueError(f"theta must be in [0, 1], got {theta}")
    return AnnotationStore(read_annotations(path), theta=theta)


def load_entities(path: str | Path) -> list[EntityQuery]:
    entities: list[EntityQuery] = []
    seen: set[str] = set()
    for lineno, obj in _iter_records(path):
        try:
            ent = EntityQuery(
                id=_require(obj, "id", str, path, lineno),
                description=_require(obj, "description", str, path, lineno),
                entity_type=_require(obj, "entity_type", str, path, lineno),
                surface_forms=_str_list(obj, "surface_forms", path, lineno),
            )
        except ParseError:
            raise
        except ValueError as exc:
            raise ParseError(str(exc), path, lineno) from None
        if ent.id in seen:
            raise IntegrityError(f"{path}:{lineno}: duplicate entity id {ent.id!r}")
        seen.add(ent.id)
        entities.append(ent)
    return entities


# --------------------------------------------------------------------------
# candidate gathering

_WS = re.compile(r"\s+")


def normalize_surface(s: str) -> str:
    """NFC, collapse whitespace, casefold. Two surfaces match iff these are equal."""
    s = unicodedata.normalize("NFC", s)
    return _WS.sub(" ", s).strip().casefold()


def gather_candidate_contexts(
    entity: EntityQuery,
    store: Mapping[str, Context],
    cap: int | None = DEFAULT_CANDIDATE_CAP,
) -> ContextSet:
    """Every context with a mention matching one of the entity's aliases.

    Results are ascending by context_id; when ``cap`` is set only the first
    ``cap`` matches in that order are kept.
    """
    if cap is not None and cap < 1:
        raise ValueError("cap must be >= 1")
    aliases = {normalize_surface(a) for a in entity.surface_forms}
    hits = []
    for cid in sorted(store):
        ctx = store[cid]
        if any(normalize_surface(m.surface) in aliases for m in ctx.mentions):
            hits.append(ctx)
            if cap is not None and len(hits) >= cap:
                break
    return ContextSet(entity.id, tuple(hits))


def naive_link(
    contexts: Iterable[Context], catalog: Mapping[str, CatalogEntity]
) -> list[LinkAnnotation]:
    """Exact-alias linker for building fixtures.

    Each mention is linked to every catalog entity carrying that surface
    form, with confidence 1/k for k candidate entities.  Not a real linker.
    """
    by_alias: dict[str, list[str]] = defaultdict(list)
    for ent in catalog.values():
        for sf in ent.surface_forms:
            by_alias[normalize_surface(sf)].append(ent.id)
    out = []
    for ctx in contexts:
        for m in ctx.mentions:
            cands = sorted(set(by_alias.get(normalize_surface(m.surface), ())))
            for eid in cands:
                out.append(LinkAnnotation(ctx.context_id, eid, 1.0 / len(cands)))
    return out
