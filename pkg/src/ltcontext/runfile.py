"""Context rankings and their TREC run-file representation.

Line format: ``entity_id Q0 context_id rank score run_tag`` with ranks from 1.
"""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .datamodel import ParseError


@dataclass
class ContextRanking:
    entity_id: str
    entries: list[tuple[str, float]]
    run_tag: str = ""
    diagnostics: dict = field(default_factory=dict)
    # False when a zero score means "not retrieved" (the linker baseline)
    emit_zero_scores: bool = True

    def __len__(self) -> int:
        return len(self.entries)

    def retrieved(self) -> list[tuple[str, float]]:
        """Entries that go into a run file."""
        if self.emit_zero_scores:
            return list(self.entries)
        return [(cid, s) for cid, s in self.entries if s > 0.0]

    @property
    def context_ids(self) -> list[str]:
        return [cid for cid, _ in self.entries]

    def scores(self) -> dict[str, float]:
        return dict(self.entries)


def order_entries(scores: dict[str, float]) -> list[tuple[str, float]]:
    return sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))


def format_run(rankings: Iterable[ContextRanking], run_tag: str | None = None) -> str:
    lines = []
    for r in sorted(rankings, key=lambda r: r.entity_id):
        tag = run_tag or r.run_tag or "run"
        for rank, (cid, score) in enumerate(r.retrieved(), start=1):
            lines.append(f"{r.entity_id} Q0 {cid} {rank} {score!r} {tag}\n")
    return "".join(lines)


def atomic_write_text(path: str | Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_run(path: str | Path, rankings: Iterable[ContextRanking], run_tag: str | None = None) -> None:
    atomic_write_text(path, format_run(rankings, run_tag))


@dataclass
class Run:
    """A parsed run file: per entity, context ids in rank order."""

    tag: str
    rankings: dict[str, list[tuple[str, float]]]

    def entity_ids(self) -> list[str]:
        return sorted(self.rankings)

    def ranked_ids(self, entity_id: str) -> list[str]:
        return [cid for cid, _ in self.rankings.get(entity_id, ())]


def read_run(path: str | Path) -> Run:
    rows: dict[str, list[tuple[int, str, float]]] = {}
    tags: set[str] = set()
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            parts = raw.split()
            if not parts:
                continue
            if len(parts) != 6:
                raise ParseError(f"expected 6 fields, found {len(parts)}", path, lineno)
            eid, _q0, cid, rank, score, tag = parts
            try:
                rank_i = int(rank)
                score_f = float(score)
            except ValueError:
                raise ParseError("rank must be an integer and score a number", path, lineno) from None
            rows.setdefault(eid, []).append((rank_i, cid, score_f))
            tags.add(tag)
    rankings = {}
    for eid, items in rows.items():
        items.sort(key=lambda t: (t[0], t[1]))
        rankings[eid] = [(cid, s) for _, cid, s in items]
    tag = sorted(tags)[0] if len(tags) == 1 else Path(path).stem
    return Run(tag, rankings)
