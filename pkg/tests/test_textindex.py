import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ltcontext.datamodel import IntegrityError
from ltcontext.textindex import Bm25Params, InvertedIndex, analyze, bm25_search, build_index

from oracles import brute_bm25


@pytest.mark.parametrize(
    "text,expected",
    [
        ("Capital firm ISAI", ["capital", "firm", "isai"]),
        ("", []),
        ("S.J. Surya's Isai", ["s", "j", "surya", "s", "isai"]),
        ("  $175 million\tfund ", ["175", "million", "fund"]),
    ],
)
def test_analyze(text, expected):
    assert analyze(text) == expected


def test_build_index_one_term_docs():
    idx = build_index([("a", "x"), ("b", "y"), ("c", "z")])
    assert idx.num_docs == 3
    assert idx.avg_doc_length == 1


def test_build_index_empty():
    idx = build_index([])
    assert idx.num_docs == 0
    assert bm25_search(idx, ["x"]) == []


def test_shared_term_posting_sorted():
    idx = build_index([("b", "fund"), ("a", "fund raised")])
    assert idx.postings["fund"] == [("a", 1), ("b", 1)]


def test_duplicate_doc_id():
    with pytest.raises(IntegrityError):
        build_index([("a", "x"), ("a", "y")])


def test_build_is_idempotent():
    docs = [("a", "capital fund"), ("b", "film music")]
    assert build_index(docs).to_dict() == build_index(docs).to_dict()


THREE_DOCS = [("d1", "capital fund raised"), ("d2", "capital firm"), ("d3", "movie release")]


def test_bm25_hand_evaluated():
    # N=3, avgdl=7/3, df(capital)=2, df(fund)=1, k1=1.2, b=0.8
    idf_capital = math.log(1 + 1.5 / 2.5)
    idf_fund = math.log(1 + 2.5 / 1.5)
    norm_d1 = 1.2 * (0.2 + 0.8 * 3 / (7 / 3))
    norm_d2 = 1.2 * (0.2 + 0.8 * 2 / (7 / 3))
    expected_d1 = (idf_capital + idf_fund) * 2.2 / (1 + norm_d1)
    expected_d2 = idf_capital * 2.2 / (1 + norm_d2)
    assert expected_d1 == pytest.approx(1.2900015234852722, abs=1e-12)
    assert expected_d2 == pytest.approx(0.5012504079213524, abs=1e-12)

    hits = bm25_search(build_index(THREE_DOCS), ["capital", "fund"], Bm25Params(1.2, 0.8), k=10)
    assert [d for d, _ in hits] == ["d1", "d2"]
    assert hits[0][1] == pytest.approx(expected_d1, abs=1e-9)
    assert hits[1][1] == pytest.approx(expected_d2, abs=1e-9)


def test_bm25_no_overlap():
    assert bm25_search(build_index(THREE_DOCS), ["zebra"]) == []


def test_bm25_tie_ascending_id():
    hits = bm25_search(build_index([("b", "same text"), ("a", "same text"), ("c", "other")]), ["same"])
    assert [d for d, _ in hits] == ["a", "b"]
    assert hits[0][1] == hits[1][1]


def test_bm25_k_zero():
    assert bm25_search(build_index(THREE_DOCS), ["capital"], k=0) == []


def test_bm25_params_validation():
    with pytest.raises(ValueError):
        Bm25Params(k1=0)
    with pytest.raises(ValueError):
        Bm25Params(b=1.5)


def test_snapshot_round_trip(tmp_path):
    idx = build_index(THREE_DOCS)
    idx.save(tmp_path / "i.json")
    again = InvertedIndex.load(tmp_path / "i.json")
    assert again.to_dict() == idx.to_dict()
    assert bm25_search(again, ["capital"]) == bm25_search(idx, ["capital"])


WORDS = st.sampled_from(["fund", "capital", "film", "music", "isai", "startup", "label", "paris"])
CORPUS = st.lists(st.lists(WORDS, min_size=0, max_size=8).map(" ".join), min_size=1, max_size=8)


@settings(max_examples=150, deadline=None)
@given(corpus=CORPUS, query=st.lists(WORDS, min_size=1, max_size=4),
       k1=st.floats(0.1, 3.0), b=st.floats(0.0, 1.0))
def test_bm25_matches_brute_force(corpus, query, k1, b):
    docs = {f"d{i}": t for i, t in enumerate(corpus)}
    got = dict(bm25_search(build_index(docs.items()), query, Bm25Params(k1, b), k=None))
    want = brute_bm25(docs, query, k1, b)
    assert got.keys() == want.keys()
    for d in want:
        assert got[d] == pytest.approx(want[d], abs=1e-9)
        assert got[d] >= 0


@settings(max_examples=100, deadline=None)
@given(corpus=CORPUS, query=st.lists(WORDS, min_size=1, max_size=4), k=st.integers(1, 10))
def test_topk_is_prefix_of_full(corpus, query, k):
    idx = build_index((f"d{i}", t) for i, t in enumerate(corpus))
    assert bm25_search(idx, query, k=k) == bm25_search(idx, query, k=None)[:k]


def test_disjoint_doc_preserves_relative_order():
    base = [("a", "fund capital fund"), ("b", "capital film"), ("c", "fund music")]
    before = [d for d, _ in bm25_search(build_index(base), ["fund", "capital"])]
    # same-length doc sharing no query term
    after = [d for d, _ in bm25_search(build_index(base + [("z", "zebra yak okapi")]), ["fund", "capital"])]
    assert before == after
