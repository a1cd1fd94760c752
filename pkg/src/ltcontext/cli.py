"""``ltcontext`` command line: index, rank, baseline, pool, eval.

Exit codes: 0 success, 1 refused operation, 2 usage or input error.
Input paths not given on the command line are looked up in ``--data-dir``
(default: the ``LTCONTEXT_DATA_DIR`` environment variable) under their
conventional file names.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .baselines import linker_baseline, linker_tag, sentence_retrieval_baseline, SENTENCE_RETRIEVAL_TAG
from .datamodel import (
    DEFAULT_CANDIDATE_CAP,
    IntegrityError,
    ParseError,
    gather_candidate_contexts,
    load_annotations,
    load_catalog,
    load_contexts,
    load_entities,
)
from .embeddings import load_embeddings
from .evalkit import (
    evaluate_runs,
    format_pool,
    format_table1,
    format_table2,
    load_qrels,
    load_subsets,
    pool_top_k,
    table1_comparisons,
    write_report_json,
    GRID_TAG,
)
from .pipeline import CCR_VARIANTS, SER_VARIANTS, PipelineConfig, Stores, config_grid, rank_entity
from .runfile import atomic_write_text, read_run, write_run
from .textindex import Bm25Params, InvertedIndex, build_index

logger = logging.getLogger("ltcontext")

DATA_DIR_ENV = "LTCONTEXT_DATA_DIR"
DEFAULT_NAMES = {
    "entities": "entities.jsonl",
    "catalog": "catalog.jsonl",
    "contexts": "contexts.jsonl",
    "annotations": "annotations.jsonl",
    "embeddings": "embeddings.txt",
    "qrels": "qrels.txt",
}

EXIT_OK, EXIT_REFUSED, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class Refused(Exception):
    pass


def _input(args, name: str, required: bool = True) -> Path | None:
    value = getattr(args, name, None)
    if value is None and args.data_dir:
        candidate = Path(args.data_dir) / DEFAULT_NAMES[name]
        if candidate.exists() or required:
            value = candidate
    if value is None:
        if required:
            raise UsageError(f"--{name} is required (or set {DATA_DIR_ENV})")
        return None
    path = Path(value)
    if not path.exists():
        raise UsageError(f"{name} file not found: {path}")
    return path


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _manifest(cfg: dict, inputs: dict[str, Path], out: Path, tag: str) -> dict:
    sums = {k: {"path": str(p), "sha256": _sha256(p)} for k, p in sorted(inputs.items()) if p}
    content = {"config": cfg, "inputs": {k: v["sha256"] for k, v in sums.items()}, "run_tag": tag}
    checksum = hashlib.sha256(json.dumps(content, sort_keys=True).encode()).hexdigest()
    return {
        "run_tag": tag,
        "config": cfg,
        "inputs": sums,
        "output": str(out),
        "checksum": checksum,
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "version": __version__,
    }


def _write_manifest(out: Path, manifest: dict) -> None:
    atomic_write_text(out.with_name(out.name + ".manifest.json"),
                      json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _bm25(args) -> Bm25Params:
    try:
        return Bm25Params(args.k1, args.b)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


# --------------------------------------------------------------------------
# commands


def cmd_index(args) -> int:
    if bool(args.catalog) == bool(args.contexts):
        raise UsageError("give exactly one of --catalog or --contexts")
    out = Path(args.out)
    if out.exists() and not args.force:
        raise Refused(f"{out} exists; use --force to rebuild")
    src = Path(args.catalog or args.contexts)
    if not src.exists():
        raise UsageError(f"input file not found: {src}")
    if args.catalog:
        docs = [(e.id, e.opening_text) for e in load_catalog(src).values()]
    else:
        docs = [(c.context_id, c.text) for c in load_contexts(src).values()]
    index = build_index(docs)
    tmp = out.with_name(f".{out.name}.tmp")
    index.save(tmp)
    os.replace(tmp, out)
    print(f"docs={index.num_docs} avg_length={index.avg_doc_length:.4f} -> {out}")
    return EXIT_OK


def _load_stores(args, need_embeddings: bool) -> tuple[Stores, dict[str, Path]]:
    paths = {
        "catalog": _input(args, "catalog"),
        "contexts": _input(args, "contexts"),
        "annotations": _input(args, "annotations"),
        "embeddings": _input(args, "embeddings", required=need_embeddings),
    }
    catalog_index = None
    if args.catalog_index:
        p = Path(args.catalog_index)
        if not p.exists():
            raise UsageError(f"catalog index not found: {p}")
        catalog_index = InvertedIndex.load(p)
        paths["catalog_index"] = p
    stores = Stores(
        catalog=load_catalog(paths["catalog"]),
        contexts=load_contexts(paths["contexts"]),
        annotations=load_annotations(paths["annotations"], theta=args.theta),
        embeddings=load_embeddings(paths["embeddings"]) if paths["embeddings"] else None,
        catalog_index=catalog_index,
    )
    return stores, paths


def _rank_all(entities, stores, cfg, jobs):
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(lambda e: rank_entity(e, stores, cfg), entities))
    return [rank_entity(e, stores, cfg) for e in entities]


def cmd_rank(args) -> int:
    try:
        base = PipelineConfig(
            ser_variant=args.ser, n=args.n, m=args.m, ccr_variant=args.ccr,
            theta=args.theta, bm25=_bm25(args), candidate_cap=args.cap,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    configs = config_grid(base=base) if args.grid else [base]
    need_emb = any(c.ccr_variant == "semantic" for c in configs)
    entities_path = _input(args, "entities")
    entities = load_entities(entities_path)
    stores, paths = _load_stores(args, need_emb)
    paths["entities"] = entities_path

    out = Path(args.out)
    if args.grid:
        if args.tag:
            raise UsageError("--tag cannot be combined with --grid")
        out.mkdir(parents=True, exist_ok=True)
    for cfg in configs:
        tag = args.tag or cfg.run_tag
        target = out / f"{tag}.run" if args.grid else out
        rankings = _rank_all(entities, stores, cfg, args.jobs)
        write_run(target, rankings, tag)
        manifest = _manifest(cfg.describe(), paths, target, tag)
        manifest["diagnostics"] = {r.entity_id: r.diagnostics for r in rankings}
        _write_manifest(target, manifest)
        flagged = [r.entity_id for r in rankings if r.diagnostics.get("empty_support")]
        msg = f"{tag}: {len(rankings)} entities -> {target}"
        if flagged:
            msg += f" (no support information: {', '.join(flagged)})"
        print(msg)
    return EXIT_OK


def cmd_baseline(args) -> int:
    entities_path = _input(args, "entities")
    contexts_path = _input(args, "contexts")
    entities = load_entities(entities_path)
    contexts = load_contexts(contexts_path)
    paths = {"entities": entities_path, "contexts": contexts_path}
    if args.method == "bm25":
        bm25 = _bm25(args)
        tag = args.tag or SENTENCE_RETRIEVAL_TAG
        rankings = [
            sentence_retrieval_baseline(e, gather_candidate_contexts(e, contexts, args.cap), bm25)
            for e in entities
        ]
        cfg = {"method": "bm25", "k1": bm25.k1, "b": bm25.b, "candidate_cap": args.cap}
    else:
        if not 0.0 <= args.theta <= 1.0:
            raise UsageError("--theta must be in [0, 1]")
        paths["annotations"] = _input(args, "annotations")
        annotations = load_annotations(paths["annotations"], theta=0.0)
        tag = args.tag or linker_tag(args.theta)
        rankings = [
            linker_baseline(e, gather_candidate_contexts(e, contexts, args.cap), annotations, args.theta)
            for e in entities
        ]
        cfg = {"method": "linker", "theta": args.theta, "candidate_cap": args.cap}
    out = Path(args.out)
    write_run(out, rankings, tag)
    _write_manifest(out, _manifest(cfg, paths, out, tag))
    print(f"{tag}: {len(rankings)} entities -> {out}")
    return EXIT_OK


def _read_runs(paths: list[str]):
    runs = []
    for p in paths:
        if not Path(p).exists():
            raise UsageError(f"run file not found: {p}")
        runs.append(read_run(p))
    return runs


def cmd_pool(args) -> int:
    if args.k < 1:
        raise UsageError("--k must be >= 1")
    runs = _read_runs(args.runs)
    pool = pool_top_k(runs, args.k)
    texts = None
    contexts_path = _input(args, "contexts", required=False)
    if contexts_path:
        texts = {cid: c.text for cid, c in load_contexts(contexts_path).items()}
    atomic_write_text(args.out, format_pool(pool, texts))
    total = sum(len(v) for v in pool.values())
    print(f"pooled {total} contexts for {len(pool)} entities from {len(runs)} runs (k={args.k}) -> {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    qrels = load_qrels(_input(args, "qrels"))
    runs = _read_runs(args.runs)
    subsets = None
    if args.subset:
        if not Path(args.subset).exists():
            raise UsageError(f"subset file not found: {args.subset}")
        subsets = load_subsets(args.subset)
    tags = [r.tag for r in runs]
    comparisons = []
    if args.baseline:
        if args.baseline not in tags:
            raise UsageError(f"--baseline {args.baseline!r} is not among the run tags {tags}")
        comparisons += [(t, args.baseline) for t in tags if t != args.baseline]
    layout = args.layout
    if layout == "auto":
        layout = "table1" if tags and all(GRID_TAG.match(t) for t in tags) else "table2"
    if layout == "table1" and not args.baseline:
        comparisons += table1_comparisons(tags)
    report = evaluate_runs(runs, qrels, subsets, comparisons)
    if layout == "table1":
        for s in report.subsets:
            if len(report.subsets) > 1:
                print(f"[{s}]")
            print(format_table1(report, s))
    else:
        print(format_table2(report))
    print("† p<0.05, ‡ p<0.001 (two-tailed paired t-test)")
    for tag, fl in report.flags.items():
        for eid, why in sorted(fl.items()):
            logger.warning("%s: entity %s flagged: %s", tag, eid, ", ".join(why))
    if args.json:
        write_report_json(args.json, report)
    return EXIT_OK


# --------------------------------------------------------------------------
# parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_common_inputs(p, names):
    for name in names:
        p.add_argument(f"--{name}", help=f"{DEFAULT_NAMES[name]}-shaped file")


def _add_bm25(p):
    p.add_argument("--k1", type=float, default=1.2)
    p.add_argument("--b", type=float, default=0.8)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ltcontext", description="Context retrieval for long-tail entities.")
    parser.add_argument("--data-dir", default=os.environ.get(DATA_DIR_ENV),
                        help=f"default directory for input files (env {DATA_DIR_ENV})")
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("index", help="build and snapshot a BM25 index")
    p.add_argument("--catalog")
    p.add_argument("--contexts")
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true", help="overwrite an existing snapshot")
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("rank", help="rank candidate contexts with the support-based model")
    _add_common_inputs(p, ["entities", "catalog", "contexts", "annotations", "embeddings"])
    p.add_argument("--catalog-index", help="snapshot from 'ltcontext index --catalog'")
    p.add_argument("--ser", choices=SER_VARIANTS, default="basic")
    p.add_argument("--n", type=int, default=50, help="support entity cut-off")
    p.add_argument("--m", type=int, default=50, help="support contexts per support entity")
    p.add_argument("--ccr", choices=CCR_VARIANTS, default="semantic")
    p.add_argument("--theta", type=float, default=0.9, help="link confidence threshold")
    p.add_argument("--cap", type=int, default=DEFAULT_CANDIDATE_CAP, help="max candidate contexts per entity")
    _add_bm25(p)
    p.add_argument("--tag", help="run tag (default derived from the configuration)")
    p.add_argument("--grid", action="store_true",
                   help="run all 24 ser x N x M x ccr configurations; --out is a directory")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("baseline", help="run a comparison system")
    _add_common_inputs(p, ["entities", "contexts", "annotations"])
    p.add_argument("--method", choices=("bm25", "linker"), required=True)
    p.add_argument("--theta", type=float, default=0.6, help="linker confidence threshold")
    p.add_argument("--cap", type=int, default=DEFAULT_CANDIDATE_CAP)
    _add_bm25(p)
    p.add_argument("--tag")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("pool", help="top-k pooling for relevance assessment")
    p.add_argument("--k", type=int, default=20)
    p.add_argument("--contexts", help="include context text in the sheet")
    p.add_argument("--out", required=True)
    p.add_argument("runs", nargs="+")
    p.set_defaults(func=cmd_pool)

    p = sub.add_parser("eval", help="MAP/MRR with paired t-tests")
    p.add_argument("--qrels")
    p.add_argument("--subset", help="entity partition file: 'entity_id label' per line")
    p.add_argument("--baseline", help="run tag every other run is tested against")
    p.add_argument("--layout", choices=("auto", "table1", "table2"), default="auto")
    p.add_argument("--json", help="also write a machine-readable report")
    p.add_argument("runs", nargs="+")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "jobs", 1) < 1:
        parser.error("--jobs must be >= 1")
    try:
        return args.func(args)
    except Refused as exc:
        print(f"ltcontext: refused: {exc}", file=sys.stderr)
        return EXIT_REFUSED
    except (UsageError, ParseError, IntegrityError, ValueError, OSError) as exc:
        print(f"ltcontext: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
