"""Discrete bag-of-ngrams counting over id sequences.

A bag is a plain dict mapping an n-gram (tuple of token ids) to a
positive count. Counts are stored as floats so the same container also
holds expected counts computed from probability tables.
"""
from __future__ import annotations

from typing import Mapping, Sequence

Ngram = tuple[int, ...]
NgramBag = dict[Ngram, float]

MAX_ORDER = 4


def count_ngrams(sentence: Sequence[int], n: int) -> NgramBag:
    """Occurrence counts of every length-n window; empty when len < n."""
    if n < 1:
        raise ValueError("n-gram order must be at least 1")
    bag: NgramBag = {}
    for t in range(len(sentence) - n + 1):
        g = tuple(sentence[t : t + n])
        bag[g] = bag.get(g, 0.0) + 1.0
    return bag


def bag_l1_norm(bag: Mapping[Ngram, float]) -> float:
    return float(sum(bag.values()))


def dump_bag(bag: Mapping[Ngram, float]) -> str:
    """Debug dump: one "g_1 ... g_n<TAB>count" line, sorted by ids."""
    lines = []
    for g in sorted(bag):
        lines.append(" ".join(str(i) for i in g) + "\t" + repr(bag[g]))
    return "\n".join(lines)
