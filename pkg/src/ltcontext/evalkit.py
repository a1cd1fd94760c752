"""MAP/MRR evaluation, top-k pooling and paired significance testing."""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Sequence

from .datamodel import ParseError
from .runfile import Run, atomic_write_text

ALL = "All"
SIG_LEVELS = ((0.001, "‡"), (0.05, "†"))  # double dagger, dagger


# --------------------------------------------------------------------------
# qrels


class Qrels:
    """Binary judgments: entity_id -> {context_id: 0 or 1}."""

    def __init__(self, judgments: Mapping[str, Mapping[str, int]] | None = None):
        self._j: dict[str, dict[str, int]] = {}
        for eid, per in (judgments or {}).items():
            for cid, rel in per.items():
                self.add(eid, cid, rel)

    def add(self, entity_id: str, context_id: str, rel: int) -> None:
        if rel not in (0, 1):
            raise ValueError(f"relevance must be 0 or 1, got {rel!r}")
        self._j.setdefault(entity_id, {})[context_id] = rel

    def entity_ids(self) -> list[str]:
        return sorted(self._j)

    def __contains__(self, entity_id: str) -> bool:
        return entity_id in self._j

    def judged(self, entity_id: str) -> dict[str, int]:
        return dict(self._j.get(entity_id, {}))

    def relevant(self, entity_id: str) -> set[str]:
        return {cid for cid, rel in self._j.get(entity_id, {}).items() if rel == 1}


def load_qrels(path: str | Path) -> Qrels:
    qrels = Qrels()
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            parts = raw.split()
            if not parts:
                continue
            if len(parts) != 4:
                raise ParseError(f"expected 4 fields, found {len(parts)}", path, lineno)
            eid, _, cid, rel = parts
            try:
                qrels.add(eid, cid, int(rel))
            except ValueError as exc:
                raise ParseError(str(exc), path, lineno) from None
    return qrels


def load_subsets(path: str | Path) -> dict[str, str]:
    """Entity partition file: ``entity_id<whitespace>label`` per line."""
    out: dict[str, str] = {}
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(None, 1)
            if len(parts) != 2:
                raise ParseError("expected 'entity_id label'", path, lineno)
            out[parts[0]] = parts[1].strip()
    return out


# --------------------------------------------------------------------------
# per-ranking metrics


def average_precision(ranking: Sequence[str], relevant: set[str]) -> float:
    """Trec-style AP: the denominator counts every judged-relevant context.

    Accumulated in exact rationals and rounded once.
    """
    if not relevant:
        return 0.0
    hits = 0
    total = Fraction(0)
    for k, cid in enumerate(ranking, start=1):
        if cid in relevant:
            hits += 1
            total += Fraction(hits, k)
    return float(total / len(relevant))


def reciprocal_rank(ranking: Sequence[str], relevant: set[str]) -> float:
    for k, cid in enumerate(ranking, start=1):
        if cid in relevant:
            return 1.0 / k
    return 0.0


# --------------------------------------------------------------------------
# t test


def _betacf(a: float, b: float, x: float) -> float:
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > tiny else tiny)
    h = d
    for m in range(1, 10_000):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) by Lentz's continued fraction."""
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(log_front) * _betacf(a, b, x) / a
    return 1.0 - math.exp(log_front) * _betacf(b, a, 1.0 - x) / b


def t_two_tailed_p(t: float, df: int) -> float:
    if math.isinf(t):
        return 0.0
    return regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t))


class TTest(NamedTuple):
    t: float
    p: float
    degenerate: bool = False


def paired_ttest(a: Sequence[float], b: Sequence[float]) -> TTest:
    """Two-tailed paired t-test of ``a`` against ``b``.

    Identical samples give t=0, p=1. A constant nonzero difference has zero
    variance; it is reported as p=0 with ``degenerate`` set.
    """
    if len(a) != len(b):
        raise ValueError("paired samples must have equal length")
    n = len(a)
    if n < 2:
        raise ValueError("paired t-test needs at least 2 pairs")
    d = [x - y for x, y in zip(a, b)]
    if all(x == 0.0 for x in d):
        return TTest(0.0, 1.0)
    if all(x == d[0] for x in d):
        return TTest(math.copysign(math.inf, d[0]), 0.0, True)
    # t is invariant to rescaling d; this keeps tiny differences from underflowing
    scale = max(abs(x) for x in d)
    d = [x / scale for x in d]
    mean = math.fsum(d) / n
    var = math.fsum((x - mean) ** 2 for x in d) / (n - 1)
    t = mean / math.sqrt(var / n)
    return TTest(t, t_two_tailed_p(t, n - 1))


def significance_marker(p: float) -> str:
    for level, mark in SIG_LEVELS:
        if p < level:
            return mark
    return ""


# --------------------------------------------------------------------------
# run evaluation


@dataclass
class Comparison:
    run: str
    reference: str
    subset: str
    metric: str
    t: float
    p: float
    marker: str
    degenerate: bool = False


@dataclass
class EvalReport:
    runs: list[str]
    subsets: list[str]
    per_entity: dict[str, dict[str, dict[str, float]]]
    aggregates: dict[str, dict[str, dict[str, float]]]
    flags: dict[str, dict[str, list[str]]]
    comparisons: list[Comparison] = field(default_factory=list)

    def marker(self, run: str, subset: str, metric: str) -> str:
        for c in self.comparisons:
            if c.run == run and c.subset == subset and c.metric == metric:
                return c.marker
        return ""

    def to_dict(self) -> dict:
        rows = []
        for tag in self.runs:
            row = {"run": tag, "subsets": {}}
            for s in self.subsets:
                cell = dict(self.aggregates[tag][s])
                for metric in ("MAP", "MRR"):
                    cell[f"{metric}_sig"] = self.marker(tag, s, metric)
                row["subsets"][s] = cell
            rows.append(row)
        return {
            "subsets": self.subsets,
            "rows": rows,
            "per_entity": self.per_entity,
            "flags": self.flags,
            "comparisons": [c.__dict__ for c in self.comparisons],
        }


def _mean(xs: Sequence[float]) -> float:
    return math.fsum(xs) / len(xs) if xs else 0.0


def evaluate_run(run: Run, qrels: Qrels) -> tuple[dict[str, dict[str, float]], dict[str, list[str]]]:
    """Per-entity AP and RR over the judged entities, plus flags.

    Entities judged but absent from the run score 0. Run entities without
    judgments are flagged and left out of the per-entity table.
    """
    per: dict[str, dict[str, float]] = {}
    flags: dict[str, list[str]] = {}
    for eid in qrels.entity_ids():
        rel = qrels.relevant(eid)
        ranked = run.ranked_ids(eid)
        if eid not in run.rankings:
            flags.setdefault(eid, []).append("missing_from_run")
        if not rel:
            flags.setdefault(eid, []).append("no_relevant")
        per[eid] = {"AP": average_precision(ranked, rel), "RR": reciprocal_rank(ranked, rel)}
    for eid in run.entity_ids():
        if eid not in qrels:
            flags.setdefault(eid, []).append("no_qrels")
    return per, flags


def evaluate_runs(
    runs: Iterable[Run],
    qrels: Qrels,
    subsets: Mapping[str, str] | None = None,
    comparisons: Iterable[tuple[str, str]] = (),
) -> EvalReport:
    """Evaluate runs on All entities and on each subset of the partition.

    ``comparisons`` holds (run, reference) tag pairs; each is tested with a
    paired t-test per subset and metric.
    """
    runs = list(runs)
    tags = [r.tag for r in runs]
    if len(set(tags)) != len(tags):
        raise ValueError(f"duplicate run tags: {tags}")
    judged = qrels.entity_ids()
    groups: dict[str, list[str]] = {ALL: judged}
    for eid, label in (subsets or {}).items():
        if eid in qrels:
            groups.setdefault(label, [])
    for label in list(groups)[1:]:
        groups[label] = sorted(e for e, lab in subsets.items() if lab == label and e in qrels)

    per_entity: dict[str, dict[str, dict[str, float]]] = {}
    flags: dict[str, dict[str, list[str]]] = {}
    aggregates: dict[str, dict[str, dict[str, float]]] = {}
    for run in runs:
        per, fl = evaluate_run(run, qrels)
        per_entity[run.tag] = per
        flags[run.tag] = fl
        aggregates[run.tag] = {
            label: {
                "MAP": _mean([per[e]["AP"] for e in ents]),
                "MRR": _mean([per[e]["RR"] for e in ents]),
                "n": len(ents),
            }
            for label, ents in groups.items()
        }

    report = EvalReport(tags, list(groups), per_entity, aggregates, flags)
    for tag, ref in comparisons:
        if tag not in per_entity or ref not in per_entity:
            raise ValueError(f"unknown run in comparison ({tag!r}, {ref!r})")
        for label, ents in groups.items():
            if len(ents) < 2:
                continue
            for metric, key in (("MAP", "AP"), ("MRR", "RR")):
                a = [per_entity[tag][e][key] for e in ents]
                b = [per_entity[ref][e][key] for e in ents]
                res = paired_ttest(a, b)
                report.comparisons.append(
                    Comparison(tag, ref, label, metric, res.t, res.p,
                               significance_marker(res.p), res.degenerate)
                )
    return report


# --------------------------------------------------------------------------
# pooling


def pool_top_k(runs: Iterable[Run], k: int = 20) -> dict[str, list[str]]:
    """Union of the top-k contexts of every run, per entity, sorted by id."""
    if k < 1:
        raise ValueError("k must be >= 1")
    pool: dict[str, set[str]] = {}
    for run in runs:
        for eid in run.entity_ids():
            pool.setdefault(eid, set()).update(run.ranked_ids(eid)[:k])
    return {eid: sorted(pool[eid]) for eid in sorted(pool)}


def format_pool(pool: Mapping[str, Sequence[str]], texts: Mapping[str, str] | None = None) -> str:
    """Tab-separated assessment sheet with an empty ``relevant`` column."""
    lines = ["entity_id\tcontext_id\trelevant\ttext\n"]
    for eid in sorted(pool):
        for cid in pool[eid]:
            text = texts.get(cid, "") if texts else ""
            text = text.replace("\t", " ").replace("\n", " ")
            lines.append(f"{eid}\t{cid}\t\t{text}\n")
    return "".join(lines)


# --------------------------------------------------------------------------
# report layouts

GRID_TAG = re.compile(r"^(basic|pop|types)-n(\d+)-m(\d+)-(semantic|retrieval)(.*)$")


def table1_comparisons(tags: Iterable[str]) -> list[tuple[str, str]]:
    """Pair each pop/types grid run with the basic run of the same N, M and CCR."""
    tags = list(tags)
    present = set(tags)
    pairs = []
    for tag in tags:
        m = GRID_TAG.match(tag)
        if m and m.group(1) != "basic":
            ref = f"basic-n{m.group(2)}-m{m.group(3)}-{m.group(4)}{m.group(5)}"
            if ref in present:
                pairs.append((tag, ref))
    return pairs


def _cell(report: EvalReport, tag: str | None, subset: str, metric: str) -> str:
    if tag is None or tag not in report.aggregates:
        return "-"
    value = report.aggregates[tag][subset][metric]
    return f"{value:.4f}{report.marker(tag, subset, metric)}"


def format_table1(report: EvalReport, subset: str = ALL) -> str:
    """Grid runs as rows of (ser, N, M) with MAP/MRR per CCR variant."""
    rows: dict[tuple, dict[str, str]] = {}
    extra = ""
    for tag in report.runs:
        m = GRID_TAG.match(tag)
        if not m:
            continue
        extra = extra or m.group(5)
        key = (("basic", "pop", "types").index(m.group(1)), int(m.group(2)), int(m.group(3)))
        rows.setdefault(key, {})[m.group(4)] = tag
    header = ["ser", "N", "M", "semantic MAP", "semantic MRR", "retrieval MAP", "retrieval MRR"]
    body = []
    last_ser = None
    for key in sorted(rows):
        ser = ("basic", "pop", "types")[key[0]]
        if last_ser is not None and ser != last_ser:
            body.append(None)
        cells = [ser if ser != last_ser else "", str(key[1]), str(key[2])]
        for ccr in ("semantic", "retrieval"):
            tag = rows[key].get(ccr)
            cells += [_cell(report, tag, subset, "MAP"), _cell(report, tag, subset, "MRR")]
        body.append(cells)
        last_ser = ser
    return _render([header], body)


def format_table2(report: EvalReport) -> str:
    """One row per run, MAP/MRR columns for All and each subset block."""
    top = ["Entities"] + [x for s in report.subsets for x in (s, "")]
    header = ["Method"] + ["MAP", "MRR"] * len(report.subsets)
    body = []
    for tag in report.runs:
        cells = [tag]
        for s in report.subsets:
            cells += [_cell(report, tag, s, "MAP"), _cell(report, tag, s, "MRR")]
        body.append(cells)
    return _render([top, header], body)


def _render(headers: list[list[str]], body: list[list[str] | None]) -> str:
    rows = headers + [r for r in body if r is not None]
    widths = [max(len(r[i]) for r in rows) for i in range(len(headers[-1]))]
    rule = "-+-".join("-" * w for w in widths)

    def line(r):
        return " | ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths))).rstrip()

    out = [line(h) for h in headers] + [rule]
    for r in body:
        out.append(rule if r is None else line(r))
    return "\n".join(out) + "\n"


def write_report_json(path: str | Path, report: EvalReport) -> None:
    atomic_write_text(path, json.dumps(report.to_dict(), indent=2, sort_keys=True, ensure_ascii=False) + "\n")
