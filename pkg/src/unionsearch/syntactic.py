"""Syntactic column-similarity measures used alongside the learned one.

Three set-overlap measures, each a Jaccard over a different view of a column:

* name: character q-grams of the normalized column name,
* value: the column's top TF-IDF value tokens,
* format: the distinct shape patterns of the column's values.

All are cheap, deterministic, and need no training; the search layer can
average any subset of them with the semantic measure.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from collections import Counter

import numpy as np

from .corpus import Column, ColumnKey, Corpus, tokenize

DEFAULT_QGRAM = 3
DEFAULT_TOP_TERMS = 20

_NON_ALNUM = re.compile(r"[^0-9a-z]+")


def jaccard(a: frozenset | set, b: frozenset | set) -> float:
    """|a & b| / |a | b|, with two empty sets scoring 0.0, not 1.0."""
    union = len(a | b)
    if union == 0:
        return 0.0
    return len(a & b) / union


def name_qgrams(name: str, q: int = DEFAULT_QGRAM) -> frozenset[str]:
    """Character q-grams of the lowercased, alphanumeric-only column name.

    Names shorter than q collapse to the whole normalized name, so "id"
    still produces a usable (single-element) set.
    """
    norm = _NON_ALNUM.sub("", name.lower())
    if not norm:
        return frozenset()
    if len(norm) < q:
        return frozenset({norm})
    return frozenset(norm[i:i + q] for i in range(len(norm) - q + 1))


@dataclass
class TfidfModel:
    """Corpus-level document frequencies, one document per column."""

    df: dict[str, int]
    n_columns: int

    def score(self, token: str, tf: int) -> float:
        # Tokens never seen at build time count as maximally rare.
        df = self.df.get(token, 1)
        return tf * float(np.log(1.0 + self.n_columns / df))


def build_tfidf(corpus: Corpus) -> TfidfModel:
    df: Counter[str] = Counter()
    columns = corpus.encodable_columns()
    for col in columns:
        seen: set[str] = set()
        for value in col.non_empty_values():
            seen.update(tokenize(value))
        df.update(seen)
    return TfidfModel(df=dict(df), n_columns=len(columns))


def value_terms(column: Column, tfidf: TfidfModel,
                top_t: int = DEFAULT_TOP_TERMS) -> frozenset[str]:
    """Top-t column tokens by TF-IDF weight; ties break lexicographically."""
    tf: Counter[str] = Counter()
    for value in column.non_empty_values():
        tf.update(tokenize(value))
    if not tf:
        return frozenset()
    ranked = sorted(tf, key=lambda tok: (-tfidf.score(tok, tf[tok]), tok))
    return frozenset(ranked[:top_t])


def format_pattern(value: str) -> str:
    """Shape of a value: digits->9, letters->a, whitespace->_, rest verbatim.

    Runs of the same class character collapse to one; verbatim characters
    never collapse, so "https://x.y" -> "a://a.a" keeps both slashes.
    """
    out: list[str] = []
    prev_class: str | None = None
    for ch in value:
        if ch.isdigit():
            cls = "9"
        elif ch.isalpha():
            cls = "a"
        elif ch.isspace():
            cls = "_"
        else:
            out.append(ch)
            prev_class = None
            continue
        if cls != prev_class:
            out.append(cls)
        prev_class = cls
    return "".join(out)


def format_patterns(column: Column) -> frozenset[str]:
    return frozenset(format_pattern(v) for v in column.non_empty_values())


@dataclass
class SyntacticProfile:
    """Precomputed per-column sets, enough to score any syntactic measure."""

    column_key: ColumnKey
    name_grams: frozenset[str]
    value_term_set: frozenset[str]
    format_set: frozenset[str]


def build_profile(column: Column, tfidf: TfidfModel,
                  q: int = DEFAULT_QGRAM,
                  top_t: int = DEFAULT_TOP_TERMS) -> SyntacticProfile:
    return SyntacticProfile(
        column_key=column.column_key,
        name_grams=name_qgrams(column.name, q),
        value_term_set=value_terms(column, tfidf, top_t),
        format_set=format_patterns(column),
    )


def name_measure(a: SyntacticProfile, b: SyntacticProfile) -> float:
    return jaccard(a.name_grams, b.name_grams)


def value_measure(a: SyntacticProfile, b: SyntacticProfile) -> float:
    return jaccard(a.value_term_set, b.value_term_set)


def format_measure(a: SyntacticProfile, b: SyntacticProfile) -> float:
    return jaccard(a.format_set, b.format_set)


SEMANTIC = "semantic"
NAME = "name"
VALUE = "value"
FORMAT = "format"
ALL_MEASURES = (SEMANTIC, NAME, VALUE, FORMAT)

SYNTACTIC_FUNCS = {
    NAME: name_measure,
    VALUE: value_measure,
    FORMAT: format_measure,
}
