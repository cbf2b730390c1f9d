"""Drop-and-refresh sampling schedule as a pure end-of-epoch state machine.

Training proceeds in cycles. Every cycle starts from the full example pool.
After a warm-up phase, the pool is periodically cut down to the examples
with the largest recorded losses (a *drop*), until the cycle's drop window
closes. At each scheduled refresh epoch the pool is restored to the full
dataset and a new cycle begins.

All transitions are pure functions: the training loop owns a
:class:`SchedulerState`, fills a :class:`LossLedger` while it trains, and
applies the state/action returned by :func:`end_of_epoch`. Pool *sizes* are
independent of the recorded losses, so :func:`trace` and
:func:`planned_cost` can dry-run a whole schedule without touching a model.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterable, Iterator, Mapping


class KeepRounding(Enum):
    """How the retained-example count is derived from ``keep_rate``."""

    CEIL_AT_LEAST_ONE = "ceil_at_least_one"


class ActionKind(Enum):
    KEEP = "keep"
    DROP = "drop"
    REFRESH = "refresh"


def _retained_count(keep_rate: float, pool_size: int,
                    rounding: KeepRounding = KeepRounding.CEIL_AT_LEAST_ONE) -> int:
    # ceil(keep_rate * size), never below one example.
    if rounding is not KeepRounding.CEIL_AT_LEAST_ONE:
        raise ValueError(f"unsupported rounding rule: {rounding!r}")
    return max(1, math.ceil(keep_rate * pool_size))


@dataclass(frozen=True)
class DarConfig:
    """Static schedule parameters for one run.

    ``active_epochs`` bounds how long after a cycle start drops may happen;
    ``None`` means the drop window never closes. ``refresh_epochs`` are the
    epochs whose end restores the full pool.
    """

    total_epochs: int
    warmup_epochs: int = 0
    interval_epochs: int = 1
    keep_rate: float = 1.0
    active_epochs: int | None = None
    refresh_epochs: tuple[int, ...] = ()
    keep_rounding: KeepRounding = KeepRounding.CEIL_AT_LEAST_ONE
    reset_interval_on_refresh: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "refresh_epochs", tuple(int(e) for e in self.refresh_epochs))
        if self.total_epochs < 1:
            raise ValueError(f"total_epochs must be >= 1, got {self.total_epochs}")
        if self.warmup_epochs < 0:
            raise ValueError(f"warmup_epochs must be >= 0, got {self.warmup_epochs}")
        if self.warmup_epochs >= self.total_epochs:
            raise ValueError(
                f"warmup_epochs must be < total_epochs, got "
                f"{self.warmup_epochs} >= {self.total_epochs}")
        if self.interval_epochs < 1:
            raise ValueError(f"interval_epochs must be >= 1, got {self.interval_epochs}")
        if not 0.0 < self.keep_rate <= 1.0:
            raise ValueError(f"keep_rate must be in (0, 1], got {self.keep_rate}")
        if self.active_epochs is not None and self.active_epochs < 0:
            raise ValueError(f"active_epochs must be >= 0 or None, got {self.active_epochs}")
        for prev, cur in zip((None,) + self.refresh_epochs, self.refresh_epochs):
            if prev is not None and cur <= prev:
                raise ValueError(
                    f"refresh_epochs must be strictly increasing, got {self.refresh_epochs}")
            if not self.warmup_epochs < cur <= self.total_epochs:
                raise ValueError(
                    f"refresh epoch {cur} outside (warmup_epochs, total_epochs] = "
                    f"({self.warmup_epochs}, {self.total_epochs}]")

    def keep_count(self, pool_size: int) -> int:
        return _retained_count(self.keep_rate, pool_size, self.keep_rounding)


@dataclass(frozen=True)
class SchedulerState:
    """Position of the schedule between epochs.

    ``cycle_start`` is the epoch the current cycle was anchored at (warm-up
    end, or the latest refresh); ``last_drop`` is the most recent epoch a
    drop was attempted, which paces the drop interval.
    """

    epoch: int
    cycle_start: int
    last_drop: int
    active_ids: tuple[int, ...]
    population: int

    def __post_init__(self) -> None:
        if self.population < 1:
            raise ValueError(f"population must be >= 1, got {self.population}")
        if not self.active_ids:
            raise ValueError("active_ids must not be empty")
        prev = -1
        for i in self.active_ids:
            if not 0 <= i < self.population:
                raise ValueError(f"active id {i} outside [0, {self.population})")
            if i <= prev:
                raise ValueError("active_ids must be strictly ascending")
            prev = i

    def next_epoch(self) -> "SchedulerState":
        """Advance the epoch counter before training the next epoch."""
        return replace(self, epoch=self.epoch + 1)


class LossLedger:
    """Most recent per-example training loss recorded during one epoch.

    Re-recording an id overwrites its entry, so with shuffling plus a
    shrinking pool the ledger always reflects the latest observation.
    """

    def __init__(self, entries: Mapping[int, float] | None = None) -> None:
        self._entries: dict[int, float] = {}
        if entries is not None:
            for example_id, loss in entries.items():
                self.record(example_id, loss)

    def record(self, example_id: int, loss: float) -> None:
        loss = float(loss)
        if not math.isfinite(loss):
            raise ValueError(f"non-finite loss {loss!r} for example {example_id}")
        if loss < 0.0:
            raise ValueError(f"negative loss {loss!r} for example {example_id}")
        self._entries[int(example_id)] = loss

    def value(self, example_id: int) -> float:
        try:
            return self._entries[example_id]
        except KeyError:
            raise ValueError(f"ledger has no entry for example {example_id}") from None

    def ids(self) -> frozenset[int]:
        return frozenset(self._entries)

    def items(self) -> Iterator[tuple[int, float]]:
        return iter(self._entries.items())

    def mean(self) -> float:
        """Exactly rounded mean, independent of recording order."""
        if not self._entries:
            raise ValueError("cannot take the mean of an empty ledger")
        return math.fsum(self._entries.values()) / len(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, example_id: int) -> bool:
        return example_id in self._entries


@dataclass(frozen=True)
class EpochAction:
    """What the schedule did at the end of an epoch.

    ``retained`` carries the surviving ids for a drop and is ``None``
    otherwise.
    """

    kind: ActionKind
    retained: tuple[int, ...] | None = None


def init(config: DarConfig, population: int) -> SchedulerState:
    """State before epoch 1: full pool, cycle anchored at the warm-up end."""
    if population < 1:
        raise ValueError(f"population must be >= 1, got {population}")
    return SchedulerState(
        epoch=0,
        cycle_start=config.warmup_epochs,
        last_drop=config.warmup_epochs,
        active_ids=tuple(range(population)),
        population=population,
    )


def select_hardest(ledger: LossLedger, active_ids: Iterable[int], keep_rate: float,
                   rounding: KeepRounding = KeepRounding.CEIL_AT_LEAST_ONE) -> tuple[int, ...]:
    """Ids of the ``keep_rate`` share of ``active_ids`` with the largest losses.

    Ties on loss are broken toward the smaller id, so the result is a
    deterministic function of the ledger alone. Returned ids are ascending.
    """
    if not 0.0 < keep_rate <= 1.0:
        raise ValueError(f"keep_rate must be in (0, 1], got {keep_rate}")
    ranked = []
    for example_id in active_ids:
        if example_id not in ledger:
            raise ValueError(f"ledger has no entry for active example {example_id}")
        ranked.append((-ledger.value(example_id), example_id))
    if not ranked:
        raise ValueError("active_ids must not be empty")
    ranked.sort()
    count = _retained_count(keep_rate, len(ranked), rounding)
    return tuple(sorted(example_id for _, example_id in ranked[:count]))


def _check_ledger_covers(ledger: LossLedger, active_ids: tuple[int, ...]) -> None:
    recorded = ledger.ids()
    active = frozenset(active_ids)
    if recorded != active:
        missing = sorted(active - recorded)[:5]
        extra = sorted(recorded - active)[:5]
        raise ValueError(
            f"ledger/active mismatch: missing={missing} extra={extra} "
            f"(|ledger|={len(recorded)}, |active|={len(active)})")


def end_of_epoch(state: SchedulerState, config: DarConfig,
                 ledger: LossLedger) -> tuple[SchedulerState, EpochAction]:
    """Apply the end-of-epoch transition for ``state.epoch``.

    Order matters: the drop rule is evaluated first, then a scheduled
    refresh, which supersedes a drop landing on the same epoch. A drop that
    would retain the whole pool (keep_rate 1.0 on an already-minimal pool,
    say) is reported as a keep; it still advances ``last_drop``.
    """
    epoch = state.epoch
    if epoch < 1:
        raise ValueError("end_of_epoch before any epoch ran; call next_epoch first")
    if epoch > config.total_epochs:
        raise ValueError(f"epoch {epoch} exceeds total_epochs {config.total_epochs}")
    _check_ledger_covers(ledger, state.active_ids)

    cycle_start = state.cycle_start
    last_drop = state.last_drop
    active = state.active_ids
    action = EpochAction(ActionKind.KEEP)

    if epoch > config.warmup_epochs:
        window_open = (config.active_epochs is None
                       or epoch - cycle_start < config.active_epochs)
        if epoch - last_drop == config.interval_epochs and window_open:
            last_drop = epoch
            retained = select_hardest(ledger, active, config.keep_rate, config.keep_rounding)
            if len(retained) < len(active):
                active = retained
                action = EpochAction(ActionKind.DROP, retained=retained)

    if epoch in config.refresh_epochs:
        cycle_start = epoch
        if config.reset_interval_on_refresh:
            last_drop = epoch
        active = tuple(range(state.population))
        action = EpochAction(ActionKind.REFRESH)

    new_state = replace(state, cycle_start=cycle_start, last_drop=last_drop,
                        active_ids=active)
    return new_state, action


@dataclass(frozen=True)
class TraceEntry:
    """Pool size an epoch trained on and the action taken at its end."""

    epoch: int
    size: int
    action: ActionKind


def trace(config: DarConfig, population: int) -> list[TraceEntry]:
    """Dry-run the schedule with a zeroed ledger; no model involved."""
    state = init(config, population)
    rows: list[TraceEntry] = []
    for _ in range(config.total_epochs):
        state = state.next_epoch()
        size = len(state.active_ids)
        ledger = LossLedger(dict.fromkeys(state.active_ids, 0.0))
        state, action = end_of_epoch(state, config, ledger)
        rows.append(TraceEntry(epoch=state.epoch, size=size, action=action.kind))
    return rows


def planned_cost(config: DarConfig, population: int) -> float:
    """Examples the schedule will touch, as a fraction of full-data training."""
    rows = trace(config, population)
    return sum(row.size for row in rows) / (config.total_epochs * population)


def trace_csv_lines(rows: Iterable[TraceEntry]) -> Iterator[str]:
    yield "epoch,size,action"
    for row in rows:
        yield f"{row.epoch},{row.size},{row.action.value}"
