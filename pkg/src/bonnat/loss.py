"""Cross-entropy, BoN-L1 and joint losses with analytic gradients.

All gradients are taken with respect to the probability table. The BoN
losses only touch n-grams present in the reference: off-support n-grams
contribute no match mass and therefore no gradient.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .ngram import count_ngrams
from .probmodel import as_matrix, expected_bag, expected_count_gradient

LOG_CLAMP = 1e-12


@dataclass
class LossResult:
    value: float
    grad: np.ndarray
    match: float = 0.0  # sum_g min(expected, reference) mass
    degenerate: bool = False


@dataclass(frozen=True)
class JointConfig:
    alpha: float = 0.1
    n: int = 2

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must be in [0, 1]")
        if not 1 <= self.n <= 4:
            raise ValueError("n-gram order must be in 1..4")


def cross_entropy(table, ref: Sequence[int]) -> LossResult:
    p = as_matrix(table)
    T, V = p.shape
    if len(ref) != T:
        raise ValueError(
            f"reference length {len(ref)} does not match table length {T}"
        )
    rows = np.arange(T)
    picked = np.maximum(p[rows, ref], LOG_CLAMP)
    value = float(-np.log(picked).sum())
    grad = np.zeros((T, V))
    grad[rows, ref] = -1.0 / picked
    return LossResult(value=value, grad=grad)


def bon_l1(table, ref: Sequence[int], n: int) -> LossResult:
    """L1 distance between expected and reference bags: 2(T-n+1-match).

    The subgradient at min ties flows through the expected count, i.e.
    an n-gram contributes gradient whenever expected <= reference.
    """
    p = as_matrix(table)
    T, V = p.shape
    if T < n or len(ref) < n:
        # short sentences are defined as zero loss, flagged for callers
        return LossResult(value=0.0, grad=np.zeros((T, V)), degenerate=True)
    ref_bag = count_ngrams(ref, n)
    model_bag = expected_bag(p, ref_bag)
    match = 0.0
    grad = np.zeros((T, V))
    for g, ref_count in ref_bag.items():
        expected = model_bag.get(g, 0.0)
        match += min(expected, ref_count)
        if expected <= ref_count:
            grad -= 2.0 * expected_count_gradient(p, g)
    # match <= T-n+1 holds exactly; clamp the float rounding residue so
    # the loss (and its [0,1] normalization) cannot go negative
    value = max(0.0, 2.0 * (T - n + 1 - match))
    return LossResult(value=value, grad=grad, match=match)


def bon_loss(table, ref: Sequence[int], n: int) -> LossResult:
    """BoN-L1 normalized to [0, 1] by the constant 2(T-n+1)."""
    raw = bon_l1(table, ref, n)
    if raw.degenerate:
        return raw
    T = as_matrix(table).shape[0]
    scale = 2.0 * (T - n + 1)
    return LossResult(
        value=raw.value / scale,
        grad=raw.grad / scale,
        match=raw.match,
    )


def joint_loss(table, ref: Sequence[int], cfg: JointConfig) -> LossResult:
    """alpha * cross-entropy + (1 - alpha) * BoN loss."""
    ce = cross_entropy(table, ref)
    if cfg.alpha == 1.0:
        return ce
    bon = bon_loss(table, ref, cfg.n)
    if cfg.alpha == 0.0:
        return bon
    return LossResult(
        value=cfg.alpha * ce.value + (1.0 - cfg.alpha) * bon.value,
        grad=cfg.alpha * ce.grad + (1.0 - cfg.alpha) * bon.grad,
        match=bon.match,
        degenerate=bon.degenerate,
    )
