"""Brute-force reference implementations used by the tests.

Nothing here imports scoring code from ltcontext: the point is to
re-derive every number from the definitions.
"""

import json
import math
import re


def tokens(text):
    return re.findall(r"[a-z0-9]+", text.lower())


def brute_bm25(docs, query, k1=1.2, b=0.8):
    """docs: {doc_id: text}. Returns {doc_id: score} for docs sharing a query term."""
    toks = {d: tokens(t) for d, t in docs.items()}
    n = len(toks)
    if n == 0:
        return {}
    avgdl = sum(len(t) for t in toks.values()) / n
    out = {}
    for d, dt in toks.items():
        score = 0.0
        matched = False
        for q in query:
            tf = dt.count(q)
            if tf == 0:
                continue
            matched = True
            df = sum(1 for other in toks.values() if q in other)
            idf = math.log(1 + (n - df + 0.5) / (df + 0.5))
            score += idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len(dt) / avgdl))
        if matched:
            out[d] = score
    return out


def mean_vector(text, table):
    vecs = [table[t] for t in tokens(text) if t in table]
    if not vecs:
        return None
    dim = len(vecs[0])
    return [sum(v[i] for v in vecs) / len(vecs) for i in range(dim)]


def plain_cosine(u, v):
    if u is None or v is None:
        return 0.0
    nu = math.sqrt(sum(x * x for x in u))
    nv = math.sqrt(sum(x * x for x in v))
    if nu == 0 or nv == 0:
        return 0.0
    return sum(x * y for x, y in zip(u, v)) / (nu * nv)


def read_jsonl(path):
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def read_embedding_text(path):
    table = {}
    with open(path) as fh:
        for i, line in enumerate(fh):
            parts = line.split()
            if i == 0 and len(parts) == 2:
                continue
            table[parts[0]] = [float(x) for x in parts[1:]]
    return table


def candidates(entity, contexts):
    aliases = {" ".join(a.split()).casefold() for a in entity["surface_forms"]}
    return sorted(
        c["context_id"]
        for c in contexts
        if any(" ".join(m[2].split()).casefold() in aliases for m in c["mentions"])
    )


def triple_sum(entity, catalog, contexts, annotations, table, ser, n, m, ccr, theta,
               k1=1.2, b=0.8):
    """P(c|e) by explicit enumeration of every (support entity, support context, c) triple."""
    cat = {r["id"]: r for r in catalog}
    text = {c["context_id"]: c["text"] for c in contexts}
    C = candidates(entity, contexts)

    raw = brute_bm25({i: r["opening_text"] for i, r in cat.items()}, tokens(entity["description"]), k1, b)
    ranked = sorted(raw.items(), key=lambda kv: (-kv[1], kv[0]))[:200]
    if ser == "pop":
        ranked = sorted(((i, s * cat[i]["inlink_count"]) for i, s in ranked), key=lambda kv: (-kv[1], kv[0]))
    elif ser == "types":
        want = entity["entity_type"].casefold()
        ranked = [(i, s) for i, s in ranked if any(t.casefold() == want for t in cat[i]["types"])]
    ranked = ranked[:n]
    z = sum(s for _, s in ranked)
    p_se = {i: (s / z if z > 0 else 0.0) for i, s in ranked}

    best = {}
    for a in annotations:
        key = (a["context_id"], a["entity_id"])
        best[key] = max(best.get(key, 0.0), a["confidence"])
    p_sc = {}
    for se in p_se:
        linked = sorted(
            ((cid, conf) for (cid, eid), conf in best.items() if eid == se and conf >= theta),
            key=lambda kv: (-kv[1], kv[0]),
        )[:m]
        tot = sum(conf for _, conf in linked)
        if linked and tot > 0:
            p_sc[se] = {cid: conf / tot for cid, conf in linked}

    def ccr_raw(c, sc):
        if ccr == "retrieval":
            return brute_bm25({x: text[x] for x in C}, tokens(text[sc]), k1, b).get(c, 0.0)
        return max(plain_cosine(mean_vector(text[c], table), mean_vector(text[sc], table)), 0.0)

    raw_ccr = {}
    for se in p_sc:
        for sc in p_sc[se]:
            if sc not in raw_ccr:
                raw_ccr[sc] = {c: ccr_raw(c, sc) for c in C}

    scores = {c: 0.0 for c in C}
    for se, pe in p_se.items():
        for sc, pc in p_sc.get(se, {}).items():
            denom = sum(raw_ccr[sc][c2] for c2 in C)
            if denom == 0:
                continue
            for c in C:
                scores[c] += raw_ccr[sc][c] / denom * pc * pe
    return scores
