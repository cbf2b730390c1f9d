"""Reference policies the scheduler is compared against.

``uniform_policy`` is plain full-data training. ``reweight`` keeps every
example but scales its contribution to the next epoch's objective by its
previous loss (clamped away from zero, renormalized to mean one).
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .scheduler import ActionKind, DarConfig, EpochAction, LossLedger, SchedulerState

WEIGHT_FLOOR = 1e-3
_MEAN_TOL = 1e-12


@dataclass(frozen=True)
class WeightVector:
    """Positive per-example weights with mean one (within 1e-12)."""

    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        if values.ndim != 1 or values.size == 0:
            raise ValueError(f"weights must be a non-empty vector, got shape {values.shape}")
        if not np.isfinite(values).all():
            raise ValueError("non-finite weight values")
        if (values <= 0).any():
            raise ValueError("weights must be strictly positive")
        mean = float(values.mean())
        if abs(mean - 1.0) > _MEAN_TOL:
            raise ValueError(f"weights must average to 1, got mean {mean!r}")


def uniform_policy(state: SchedulerState, config: DarConfig | None = None,
                   ledger: LossLedger | None = None) -> tuple[SchedulerState, EpochAction]:
    """Keep the full pool every epoch; signature mirrors ``end_of_epoch``."""
    full = tuple(range(state.population))
    return replace(state, active_ids=full), EpochAction(ActionKind.KEEP)


def reweight(prev_epoch_losses: np.ndarray) -> WeightVector:
    """Loss-proportional weights for the next epoch.

    Zero-loss examples are floored at ``WEIGHT_FLOOR`` (relative to the
    mean) rather than silenced entirely; an all-zero epoch falls back to
    uniform weights.
    """
    losses = np.asarray(prev_epoch_losses, dtype=np.float64)
    if losses.ndim != 1 or losses.size == 0:
        raise ValueError(f"losses must be a non-empty vector, got shape {losses.shape}")
    if not np.isfinite(losses).all():
        raise ValueError("non-finite loss values")
    if (losses < 0).any():
        raise ValueError("losses must be >= 0")
    mean = losses.mean()
    if mean == 0.0:
        return WeightVector(np.ones_like(losses))
    scaled = np.maximum(losses / mean, WEIGHT_FLOOR)
    return WeightVector(scaled / scaled.mean())
