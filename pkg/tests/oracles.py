"""Independent reference implementations the package is checked against.

These deliberately avoid the package's control flow: the schedule oracle is
a literal one-epoch-at-a-time re-enactment with plain counters, selection is
exhaustive subset search, and gradients come from central differences.
"""
from __future__ import annotations

import itertools
import math

import numpy as np

from dropfresh.model import ParamSet, forward, softmax_xent


def simulate_schedule(total_epochs: int, warmup: int, interval: int, keep_rate: float,
                      active_window: int | None, refreshes: set[int],
                      population: int) -> list[tuple[int, str]]:
    """Per-epoch (pool size, action) pairs, computed with straight-line code."""
    pool_size = population
    anchor = warmup   # epoch the current cycle started at
    last = warmup     # epoch of the most recent drop attempt
    out: list[tuple[int, str]] = []
    for epoch in range(1, total_epochs + 1):
        size = pool_size
        act = "keep"
        if epoch > warmup:
            if active_window is None:
                in_window = True
            else:
                in_window = (epoch - anchor) < active_window
            if (epoch - last) == interval and in_window:
                last = epoch
                kept = max(1, math.ceil(keep_rate * pool_size))
                if kept < pool_size:
                    pool_size = kept
                    act = "drop"
        if epoch in refreshes:
            anchor = epoch
            last = epoch
            pool_size = population
            act = "refresh"
        out.append((size, act))
    return out


def brute_force_hardest(losses: dict[int, float], keep_rate: float) -> tuple[int, ...]:
    """Exhaustive max-total-loss subset; ties go to the lexicographically
    smallest id tuple (combinations are emitted in that order)."""
    ids = sorted(losses)
    k = max(1, math.ceil(keep_rate * len(ids)))
    best: tuple[int, ...] | None = None
    best_total: float | None = None
    for combo in itertools.combinations(ids, k):
        total = sum(losses[i] for i in combo)
        if best_total is None or total > best_total:
            best, best_total = combo, total
    assert best is not None
    return best


def objective(params: ParamSet, features: np.ndarray, labels: np.ndarray,
              weight_decay: float = 0.0,
              sample_weights: np.ndarray | None = None) -> float:
    """The scalar the analytic gradients are supposed to differentiate."""
    losses = softmax_xent(forward(params, features), labels).per_example_loss
    if sample_weights is not None:
        losses = losses * sample_weights
    data_term = float(np.mean(losses))
    reg = 0.5 * weight_decay * sum(float((w ** 2).sum()) for w in params.weights)
    return data_term + reg


def numeric_gradients(params: ParamSet, features: np.ndarray, labels: np.ndarray,
                      weight_decay: float = 0.0,
                      sample_weights: np.ndarray | None = None,
                      step: float = 1e-6) -> ParamSet:
    """Central-difference gradients of :func:`objective`, one scalar at a time."""
    work = params.copy()

    def grad_of(arr: np.ndarray) -> np.ndarray:
        grad = np.zeros_like(arr)
        flat = arr.reshape(-1)
        flat_grad = grad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            hi = objective(work, features, labels, weight_decay, sample_weights)
            flat[i] = orig - step
            lo = objective(work, features, labels, weight_decay, sample_weights)
            flat[i] = orig
            flat_grad[i] = (hi - lo) / (2.0 * step)
        return grad

    return ParamSet([grad_of(w) for w in work.weights],
                    [grad_of(b) for b in work.biases])


def max_relative_error(analytic: ParamSet, numeric: ParamSet) -> float:
    worst = 0.0
    for a, n in zip(analytic.weights + analytic.biases,
                    numeric.weights + numeric.biases):
        denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(n)))
        worst = max(worst, float((np.abs(a - n) / denom).max()))
    return worst
