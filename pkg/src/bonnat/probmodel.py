"""Expected bag-of-ngrams of a table of per-position distributions.

The efficient path slides a length-n window over the rows and sums the
per-window probability products. The brute-force path enumerates every
output sequence and is kept only as a testing oracle.
"""
from __future__ import annotations

import itertools
from typing import Mapping, Sequence

import numpy as np

from .ngram import Ngram, NgramBag

ROW_SUM_TOL = 1e-6
ORACLE_GUARD = 10**7


class ProbTable:
    """T x V matrix whose row t is the categorical distribution at t.

    Rows off by more than 1e-6 from sum 1 are rejected, not renormalized.
    """

    def __init__(self, probs):
        probs = np.asarray(probs, dtype=float)
        if probs.ndim != 2 or probs.shape[0] < 1 or probs.shape[1] < 1:
            raise ValueError("probability table must be a nonempty 2-d matrix")
        if np.any(probs < 0):
            raise ValueError("probability table has negative entries")
        row_sums = probs.sum(axis=1)
        if np.any(np.abs(row_sums - 1.0) > ROW_SUM_TOL):
            worst = int(np.argmax(np.abs(row_sums - 1.0)))
            raise ValueError(
                f"row {worst} sums to {row_sums[worst]:.8f}, not 1"
            )
        self.probs = probs

    @property
    def T(self) -> int:
        return self.probs.shape[0]

    @property
    def V(self) -> int:
        return self.probs.shape[1]


def as_matrix(table) -> np.ndarray:
    """Accept a ProbTable or a raw matrix (used by finite differences)."""
    if isinstance(table, ProbTable):
        return table.probs
    return np.asarray(table, dtype=float)


def expected_ngram_count(table, g: Ngram) -> float:
    """Sum over windows t of prod_i p(y_{t+i} = g_i); 0 when T < n."""
    p = as_matrix(table)
    T, n = p.shape[0], len(g)
    if T < n:
        return 0.0
    acc = np.ones(T - n + 1)
    for i, token in enumerate(g):
        acc *= p[i : T - n + 1 + i, token]
    return float(acc.sum())


def expected_bag(table, support: Mapping[Ngram, float]) -> NgramBag:
    """Expected counts for the n-grams of a reference bag only.

    Windows are the outer loop, support n-grams the inner one, so the
    cost is O(T * |support|) instead of touching all V^n n-grams.
    """
    p = as_matrix(table)
    if not support:
        return {}
    grams = list(support)
    n = len(grams[0])
    T = p.shape[0]
    if T < n:
        return {}
    cols = np.array(grams).T  # n x k
    offsets = np.arange(n)[:, None]
    totals = np.zeros(len(grams))
    for t in range(T - n + 1):
        totals += p[t + offsets, cols].prod(axis=0)
    return {g: float(v) for g, v in zip(grams, totals)}


def oracle_expected_bag(table, g: Ngram) -> float:
    """Exact expectation by enumerating all V^T sequences. Testing only."""
    p = as_matrix(table)
    T, V = p.shape
    if V**T > ORACLE_GUARD:
        raise ValueError(f"search space {V}^{T} exceeds the enumeration guard")
    n = len(g)
    total = 0.0
    for seq in itertools.product(range(V), repeat=T):
        prob = 1.0
        for t, y in enumerate(seq):
            prob *= p[t, y]
        occurrences = sum(
            1 for t in range(T - n + 1) if seq[t : t + n] == g
        )
        total += prob * occurrences
    return total


def expected_count_gradient(table, g: Ngram) -> np.ndarray:
    """d expected_ngram_count / d p(y_t = w), a T x V matrix."""
    p = as_matrix(table)
    T, V = p.shape
    n = len(g)
    grad = np.zeros((T, V))
    if T < n:
        return grad
    for t in range(T - n + 1):
        factors = np.array([p[t + i, g[i]] for i in range(n)])
        # leave-one-out products via prefix/suffix, safe at zero factors
        prefix = np.ones(n)
        suffix = np.ones(n)
        for i in range(1, n):
            prefix[i] = prefix[i - 1] * factors[i - 1]
            suffix[n - 1 - i] = suffix[n - i] * factors[n - i]
        for i in range(n):
            grad[t + i, g[i]] += prefix[i] * suffix[i]
    return grad
