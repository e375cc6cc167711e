import numpy as np
import pytest

from unionsearch.corpus import Column
from unionsearch.syntactic import (
    build_profile,
    build_tfidf,
    format_measure,
    format_pattern,
    format_patterns,
    jaccard,
    name_measure,
    name_qgrams,
    value_measure,
    value_terms,
)

from conftest import make_corpus


def _col(values, name="c", table_id="t", position=0) -> Column:
    return Column(table_id=table_id, position=position, name=name, values=values)


# ---------------------------------------------------------------- jaccard / qgrams

def test_jaccard_basic():
    assert jaccard({"a", "b"}, {"b", "c"}) == pytest.approx(1 / 3)
    assert jaccard({"a"}, {"a"}) == 1.0
    assert jaccard({"a"}, {"b"}) == 0.0
    assert jaccard(set(), set()) == 0.0  # both empty: defined as zero


def test_name_qgrams_short_word():
    assert name_qgrams("year") == {"yea", "ear"}


def test_name_qgrams_shorter_than_q():
    assert name_qgrams("ab") == {"ab"}
    assert name_qgrams("") == frozenset()


def test_name_qgrams_normalizes_case_and_punctuation():
    assert name_qgrams("Employee ID") == name_qgrams("employeeid")


def test_name_similarity_example():
    a, b = name_qgrams("year"), name_qgrams("years")
    # {yea, ear} vs {yea, ear, ars}
    assert jaccard(a, b) == pytest.approx(2 / 3)


# ---------------------------------------------------------------- tf-idf value terms

def test_tfidf_rare_tokens_outrank_common():
    corpus = make_corpus({
        "t1": {"a": ["quartz", "quartz", "topaz", "common"]},
        "t2": {"b": ["common", "common"]},
        "t3": {"c": ["common", "other"]},
    })
    tfidf = build_tfidf(corpus)
    terms = value_terms(corpus.column(("t1", 0)), tfidf, top_t=2)
    assert terms == {"quartz", "topaz"}


def test_tfidf_df_counts_distinct_columns():
    corpus = make_corpus({
        "t1": {"a": ["x", "x", "x"], "b": ["x", "y"]},
        "t2": {"c": ["z"]},
    })
    tfidf = build_tfidf(corpus)
    assert tfidf.df["x"] == 2  # repeated within a column counts once
    assert tfidf.df["y"] == 1
    assert tfidf.n_columns == 3


def test_value_terms_deterministic_tie_break():
    corpus = make_corpus({
        "t1": {"a": ["pp", "zz", "mm"]},
        "t2": {"b": ["qq"]},
    })
    tfidf = build_tfidf(corpus)
    t1 = value_terms(corpus.column(("t1", 0)), tfidf, top_t=2)
    t2 = value_terms(corpus.column(("t1", 0)), tfidf, top_t=2)
    assert t1 == t2 == {"mm", "pp"}  # equal scores: lexicographic order decides


def test_value_terms_corpus_order_independent():
    spec = {
        "t1": {"a": ["ruby", "opal", "jade"]},
        "t2": {"b": ["ruby", "onyx"]},
        "t3": {"c": ["jade", "opal"]},
    }
    fwd = make_corpus(spec)
    rev = make_corpus(dict(reversed(list(spec.items()))))
    tf_fwd, tf_rev = build_tfidf(fwd), build_tfidf(rev)
    col = fwd.column(("t1", 0))
    assert value_terms(col, tf_fwd) == value_terms(col, tf_rev)


def test_identical_value_sets_score_one():
    corpus = make_corpus({
        "t1": {"a": ["red", "green", "blue"]},
        "t2": {"b": ["green", "blue", "red"]},
    })
    tfidf = build_tfidf(corpus)
    pa = build_profile(corpus.column(("t1", 0)), tfidf)
    pb = build_profile(corpus.column(("t2", 0)), tfidf)
    assert value_measure(pa, pb) == 1.0


def test_disjoint_value_sets_score_zero():
    corpus = make_corpus({
        "t1": {"a": ["red", "green"]},
        "t2": {"b": ["iron", "zinc"]},
    })
    tfidf = build_tfidf(corpus)
    pa = build_profile(corpus.column(("t1", 0)), tfidf)
    pb = build_profile(corpus.column(("t2", 0)), tfidf)
    assert value_measure(pa, pb) == 0.0


# ---------------------------------------------------------------- format patterns

def test_format_pattern_digits():
    assert format_pattern("2007") == "9"


def test_format_pattern_name_with_space():
    assert format_pattern("J Cheng") == "a_a"


def test_format_pattern_url_keeps_punctuation_runs():
    assert format_pattern("https://x.y") == "a://a.a"


def test_format_pattern_mixed():
    assert format_pattern("AB-123") == "a-9"
    assert format_pattern("12 Main St.") == "9_a_a."
    assert format_pattern("") == ""


def test_format_pattern_idempotent_on_own_alphabet():
    for raw in ("2007", "J Cheng", "https://x.y", "AB-123", "12 Main St."):
        pat = format_pattern(raw)
        assert format_pattern(pat) == pat


def test_format_patterns_of_column_dedupes():
    col = _col(["2007", "2014", "1999"])
    assert format_patterns(col) == {"9"}


def test_format_measure_distinguishes_layouts():
    corpus = make_corpus({
        "t1": {"year": ["2007", "2014"]},
        "t2": {"when": ["March 2007", "May 2014"]},
        "t3": {"year2": ["1999", "2001"]},
    })
    tfidf = build_tfidf(corpus)
    years = build_profile(corpus.column(("t1", 0)), tfidf)
    months = build_profile(corpus.column(("t2", 0)), tfidf)
    years2 = build_profile(corpus.column(("t3", 0)), tfidf)
    assert format_measure(years, months) == 0.0  # {9} vs {a_9}
    assert format_measure(years, years2) == 1.0


# ---------------------------------------------------------------- profiles / properties

def test_profile_fields():
    corpus = make_corpus({
        "t1": {"year": ["2007", "2014"]},
        "t2": {"x": ["1"]},
    })
    tfidf = build_tfidf(corpus)
    p = build_profile(corpus.column(("t1", 0)), tfidf, q=3, top_t=20)
    assert p.column_key == ("t1", 0)
    assert p.name_grams == {"yea", "ear"}
    assert p.format_set == {"9"}
    assert p.value_term_set == {"2007", "2014"}


def test_measures_symmetric_bounded():
    rng = np.random.default_rng(31)
    vocab = [f"w{i}" for i in range(30)]
    spec = {}
    for t in range(6):
        vals = [vocab[int(rng.integers(0, 30))] for _ in range(8)]
        spec[f"t{t}"] = {f"name{t}": vals}
    corpus = make_corpus(spec)
    tfidf = build_tfidf(corpus)
    profs = [build_profile(c, tfidf) for c in corpus.columns()]
    for f in (name_measure, value_measure, format_measure):
        for a in profs:
            for b in profs:
                s = f(a, b)
                assert 0.0 <= s <= 1.0
                assert s == f(b, a)
            assert f(a, a) == 1.0
