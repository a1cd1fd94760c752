import math
import random

import pytest
import scipy.stats
import scipy.special
from hypothesis import given, settings
from hypothesis import strategies as st

from ltcontext.datamodel import ParseError
from ltcontext.evalkit import (
    Qrels,
    average_precision,
    evaluate_runs,
    format_pool,
    format_table1,
    format_table2,
    load_qrels,
    paired_ttest,
    pool_top_k,
    reciprocal_rank,
    regularized_incomplete_beta,
    significance_marker,
    table1_comparisons,
)
from ltcontext.runfile import Run, read_run


def test_ap_examples():
    assert average_precision(["r1", "x", "r2"], {"r1", "r2"}) == 5 / 6
    assert average_precision(["x", "y"], {"r"}) == 0.0
    assert average_precision(["a", "b", "x"], {"a", "b"}) == 1.0
    assert average_precision(["a"], set()) == 0.0


def test_rr_examples():
    assert reciprocal_rank(["x", "r"], {"r"}) == 0.5
    assert reciprocal_rank(["r"], {"r"}) == 1.0
    assert reciprocal_rank(["x"], {"r"}) == 0.0


def test_ttest_identical():
    assert tuple(paired_ttest([0.1, 0.5, 0.3], [0.1, 0.5, 0.3])) == (0.0, 1.0, False)


A5 = [0.62, 0.48, 0.71, 0.55, 0.80]
B5 = [0.50, 0.45, 0.60, 0.58, 0.66]


def test_ttest_five_pairs():
    # d = (.12, .03, .11, -.03, .14); mean .074; sd .0716240; t = .074 / (sd / sqrt 5)
    res = paired_ttest(A5, B5)
    assert res.t == pytest.approx(2.3102450019015133, abs=1e-6)
    ref = scipy.stats.ttest_rel(A5, B5)
    assert res.t == pytest.approx(ref.statistic, abs=1e-6)
    assert res.p == pytest.approx(ref.pvalue, abs=1e-6)


def test_ttest_constant_difference():
    res = paired_ttest([0.5, 0.6, 0.7], [0.4, 0.5, 0.6000000000000001 - 1e-16])
    assert res.p == 0.0 or res.p < 1e-6
    res = paired_ttest([1.0, 2.0, 3.0], [0.5, 1.5, 2.5])
    assert res.degenerate and res.p == 0.0 and res.t == math.inf


def test_ttest_too_short():
    with pytest.raises(ValueError):
        paired_ttest([1.0], [2.0])


@settings(max_examples=200, deadline=None)
@given(a=st.floats(0.05, 50), b=st.floats(0.05, 50), x=st.floats(0, 1))
def test_incomplete_beta_matches_scipy(a, b, x):
    assert regularized_incomplete_beta(a, b, x) == pytest.approx(scipy.special.betainc(a, b, x), abs=1e-10)


SCORES = st.lists(st.floats(0, 1), min_size=2, max_size=30)


@settings(max_examples=200, deadline=None)
@given(data=st.data())
def test_ttest_antisymmetric_and_matches_scipy(data):
    a = data.draw(SCORES)
    b = data.draw(st.lists(st.floats(0, 1), min_size=len(a), max_size=len(a)))
    ab, ba = paired_ttest(a, b), paired_ttest(b, a)
    assert ab.t == -ba.t
    assert ab.p == pytest.approx(ba.p, abs=1e-12)
    # scipy underflows on near-subnormal differences; compare only at sane scales
    if not ab.degenerate and ab.t != 0 and max(abs(x - y) for x, y in zip(a, b)) > 1e-100:
        assert ab.p == pytest.approx(scipy.stats.ttest_rel(a, b).pvalue, abs=1e-6)


def test_markers():
    assert significance_marker(0.0005) == "‡"
    assert significance_marker(0.01) == "†"
    assert significance_marker(0.2) == ""


def _run(tag, rankings):
    return Run(tag, {e: [(c, 1.0 / (i + 1)) for i, c in enumerate(cs)] for e, cs in rankings.items()})


def test_evaluate_mean_and_subsets():
    qrels = Qrels({"e1": {"a": 1, "b": 0, "c": 1}, "e2": {"x": 1, "y": 0}})
    run = _run("r", {"e1": ["a", "b", "c"], "e2": ["y", "x"]})
    rep = evaluate_runs([run], qrels, {"e1": "in", "e2": "out"})
    ap1, ap2 = 5 / 6, 0.5
    assert rep.aggregates["r"]["All"]["MAP"] == pytest.approx((ap1 + ap2) / 2)
    assert rep.aggregates["r"]["in"]["MAP"] == ap1
    assert rep.aggregates["r"]["out"]["MRR"] == 0.5
    assert rep.subsets == ["All", "in", "out"]


def test_evaluate_missing_entity_flagged():
    qrels = Qrels({"e1": {"a": 1}, "e2": {"x": 1}})
    rep = evaluate_runs([_run("r", {"e1": ["a"], "e9": ["q"]})], qrels)
    assert rep.per_entity["r"]["e2"] == {"AP": 0.0, "RR": 0.0}
    assert "missing_from_run" in rep.flags["r"]["e2"]
    assert "no_qrels" in rep.flags["r"]["e9"]
    assert rep.aggregates["r"]["All"]["MAP"] == 0.5


def test_qrels_file(tmp_path):
    p = tmp_path / "q"
    p.write_text("e1 0 a 1\ne1 0 b 0\n")
    assert load_qrels(p).relevant("e1") == {"a"}
    p.write_text("e1 0 a 2\n")
    with pytest.raises(ParseError):
        load_qrels(p)


def test_run_file_malformed(tmp_path):
    p = tmp_path / "r"
    p.write_text("e1 Q0 a 1 0.5 t\ne1 Q0 b 2 t\n")
    with pytest.raises(ParseError) as exc:
        read_run(p)
    assert exc.value.line == 2


def test_pool_examples():
    r1 = _run("r1", {"e": [f"a{i}" for i in range(30)]})
    r2 = _run("r2", {"e": [f"b{i}" for i in range(30)]})
    assert len(pool_top_k([r1, r2], 20)["e"]) == 40
    assert len(pool_top_k([r1, r1], 20)["e"]) == 20


@settings(max_examples=100, deadline=None)
@given(k1=st.integers(1, 15), k2=st.integers(1, 15), seed=st.integers(0, 1000))
def test_pool_monotone(k1, k2, seed):
    rng = random.Random(seed)
    ids = [f"c{i}" for i in range(20)]
    runs = [_run(f"r{j}", {"e": rng.sample(ids, 12)}) for j in range(3)]
    lo, hi = sorted((k1, k2))
    assert set(pool_top_k(runs, lo)["e"]) <= set(pool_top_k(runs, hi)["e"])


def test_pool_sheet_format():
    sheet = format_pool({"e": ["a"]}, {"a": "text\twith tab"})
    assert sheet.splitlines() == ["entity_id\tcontext_id\trelevant\ttext", "e\ta\t\ttext with tab"]


def test_table1_pairs_and_layout():
    tags = ["basic-n50-m50-semantic", "pop-n50-m50-semantic", "types-n50-m50-semantic", "pop-n100-m50-retrieval"]
    assert table1_comparisons(tags) == [("pop-n50-m50-semantic", "basic-n50-m50-semantic"),
                                       ("types-n50-m50-semantic", "basic-n50-m50-semantic")]
    rng = random.Random(3)
    ents = [f"e{i}" for i in range(30)]
    qrels = Qrels({e: {"good": 1, "bad": 0} for e in ents})
    runs = [
        _run(tags[0], {e: ["good", "bad"] for e in ents}),
        _run(tags[1], {e: ["bad", "good"] for e in ents}),
        _run(tags[2], {e: (["good", "bad"] if rng.random() < 0.8 else ["bad", "good"]) for e in ents}),
    ]
    rep = evaluate_runs(runs, qrels, comparisons=table1_comparisons(tags[:3]))
    table = format_table1(rep)
    assert "semantic MAP" in table and "retrieval MRR" in table
    assert "0.5000‡" in table  # pop row: every entity worse, constant difference
    assert format_table2(rep).splitlines()[1].split("|")[1].strip() == "MAP"
