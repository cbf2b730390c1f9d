"""Deterministic training runs wired to a sampling policy.

Given one :class:`~dropfresh.config.ExperimentConfig`, a run loads (or
generates) its dataset, splits off validation data, trains the classifier
epoch by epoch, and lets the configured policy rewrite the active example
pool between epochs. Metrics are written as one JSON line per epoch;
repeating a run with the same config yields byte-identical metrics.
"""
from __future__ import annotations

import json
import math
import os
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from . import datasets, model, scheduler
from .baselines import reweight, uniform_policy
from .config import DataConfig, ExperimentConfig
from .datasets import Dataset, gen_gaussian, load_csv, load_idx
from .model import ParamSet, init_params, lr_at
from .scheduler import LossLedger

_SPLIT_STREAM = 1


class HarnessError(RuntimeError):
    pass


def _load_base(data: DataConfig) -> Dataset:
    if data.source == "synthetic":
        return gen_gaussian(data.synthetic)
    if data.source == "csv":
        return load_csv(data.csv_path, data.class_count)
    return load_idx(data.idx_images, data.idx_labels,
                    10 if data.class_count is None else data.class_count)


def load_dataset(data: DataConfig, run_seed: int) -> tuple[Dataset, Dataset | None]:
    """Training set plus optional validation set, re-indexed from zero."""
    base = _load_base(data)
    if data.val_csv_path is not None or data.val_idx_images is not None:
        if data.val_csv_path is not None:
            val = load_csv(data.val_csv_path, base.class_count)
        else:
            val = load_idx(data.val_idx_images, data.val_idx_labels, base.class_count)
        if val.dim != base.dim:
            raise HarnessError(
                f"validation feature dim {val.dim} != training feature dim {base.dim}")
        return base, val
    n_val = math.floor(data.val_fraction * base.n)
    if n_val == 0:
        return base, None
    rng = np.random.default_rng([int(run_seed), _SPLIT_STREAM])
    order = rng.permutation(base.n)
    return base.subset(np.sort(order[n_val:])), base.subset(np.sort(order[:n_val]))


def evaluate(params: ParamSet, dataset: Dataset) -> float:
    """Plain accuracy; no augmentation is applied at evaluation time."""
    return float(np.mean(model.predict(params, dataset.features) == dataset.labels))


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    active_count: int
    mean_train_loss: float
    validation_accuracy: float | None
    learning_rate: float
    cumulative_examples_used: int
    action: str

    def to_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "active_count": self.active_count,
            "mean_train_loss": self.mean_train_loss,
            "validation_accuracy": self.validation_accuracy,
            "learning_rate": self.learning_rate,
            "cumulative_examples_used": self.cumulative_examples_used,
            "action": self.action,
        }


@dataclass(frozen=True)
class RunReport:
    config_echo: dict
    records: tuple[EpochRecord, ...]
    final_validation_accuracy: float | None
    realized_cost_ratio: float
    wall_clock_seconds: float

    def to_dict(self) -> dict:
        return {
            "config": dict(self.config_echo),
            "records": [r.to_dict() for r in self.records],
            "final_validation_accuracy": self.final_validation_accuracy,
            "realized_cost_ratio": self.realized_cost_ratio,
            "wall_clock_seconds": self.wall_clock_seconds,
        }


def metrics_lines(records: Sequence[EpochRecord]) -> list[str]:
    """One sorted-key JSON object per epoch; stable across identical runs."""
    return [json.dumps(r.to_dict(), sort_keys=True) for r in records]


def _execute(cfg: ExperimentConfig) -> tuple[RunReport, ParamSet]:
    start = time.perf_counter()
    train_set, val_set = load_dataset(cfg.data, cfg.run_seed)
    layers = [train_set.dim, *cfg.hidden_layers, train_set.class_count]
    params = init_params(layers, cfg.run_seed)
    velocity: ParamSet | None = None
    state = scheduler.init(cfg.dar, train_set.n)
    weights = None  # reweight policy only
    records: list[EpochRecord] = []
    cumulative = 0

    for _ in range(cfg.total_epochs):
        state = state.next_epoch()
        epoch = state.epoch
        epoch_key = datasets.epoch_seed(cfg.run_seed, epoch)
        ledger = LossLedger()
        for batch_ids in datasets.epoch_batches(state.active_ids, cfg.batch_size,
                                                cfg.run_seed, epoch):
            batch = datasets.make_batch(train_set, batch_ids, cfg.data.augment, epoch_key)
            try:
                out = model.softmax_xent(model.forward(params, batch.features), batch.labels)
            except ValueError as exc:
                raise HarnessError(
                    f"epoch {epoch}, examples {batch.ids[:3]}...: {exc}") from exc
            finite = np.isfinite(out.per_example_loss)
            if not finite.all():
                bad = batch.ids[int(np.argmin(finite))]
                raise HarnessError(
                    f"non-finite training loss at epoch {epoch}, example {bad}")
            for example_id, loss in zip(batch.ids, out.per_example_loss):
                ledger.record(example_id, float(loss))
            sample_weights = (weights.values[list(batch.ids)]
                              if weights is not None else None)
            grads = model.backward(params, batch.features, batch.labels,
                                   weight_decay=cfg.train.weight_decay,
                                   sample_weights=sample_weights)
            params, velocity = model.sgd_step(params, grads, cfg.train, epoch, velocity)

        active_count = len(state.active_ids)
        cumulative += active_count
        mean_loss = ledger.mean()
        val_acc = evaluate(params, val_set) if val_set is not None else None

        if cfg.policy == "dar":
            state, action = scheduler.end_of_epoch(state, cfg.dar, ledger)
        elif cfg.policy == "reweight":
            weights = reweight(np.array([ledger.value(i) for i in range(train_set.n)]))
            state, action = uniform_policy(state)
        else:
            state, action = uniform_policy(state)

        records.append(EpochRecord(
            epoch=epoch, active_count=active_count, mean_train_loss=mean_loss,
            validation_accuracy=val_acc, learning_rate=lr_at(cfg.train, epoch),
            cumulative_examples_used=cumulative, action=action.kind.value))

    report = RunReport(
        config_echo=dict(cfg.echo),
        records=tuple(records),
        final_validation_accuracy=records[-1].validation_accuracy,
        realized_cost_ratio=cumulative / (cfg.total_epochs * train_set.n),
        wall_clock_seconds=time.perf_counter() - start)
    return report, params


def run_experiment(cfg: ExperimentConfig) -> RunReport:
    return _execute(cfg)[0]


def run_experiment_with_params(cfg: ExperimentConfig) -> tuple[RunReport, ParamSet]:
    return _execute(cfg)


def _atomic_write(path: Path, data: Union[str, bytes]) -> None:
    tmp = path.with_name(path.name + ".tmp")
    if isinstance(data, str):
        tmp.write_text(data)
    else:
        tmp.write_bytes(data)
    os.replace(tmp, path)


def save_params(params: ParamSet, path: Union[str, Path]) -> None:
    """Flat little-endian doubles plus a JSON sidecar describing the shapes."""
    path = Path(path)
    blob = b"".join(
        np.ascontiguousarray(arr, dtype="<f8").tobytes()
        for w, b in zip(params.weights, params.biases) for arr in (w, b))
    meta = {"dtype": "<f8", "layer_sizes": params.layer_sizes,
            "value_count": len(blob) // 8}
    path.parent.mkdir(parents=True, exist_ok=True)
    _atomic_write(path, blob)
    _atomic_write(path.with_suffix(".json"), json.dumps(meta, sort_keys=True) + "\n")


def load_params(path: Union[str, Path]) -> ParamSet:
    path = Path(path)
    sidecar = path.with_suffix(".json")
    try:
        meta = json.loads(sidecar.read_text())
    except FileNotFoundError:
        raise HarnessError(f"{sidecar}: shape sidecar not found") from None
    sizes = [int(s) for s in meta["layer_sizes"]]
    flat = np.frombuffer(path.read_bytes(), dtype="<f8").astype(np.float64)
    expected = sum(fi * fo + fo for fi, fo in zip(sizes, sizes[1:]))
    if flat.size != expected:
        raise HarnessError(f"{path}: expected {expected} doubles for layer sizes "
                           f"{sizes}, found {flat.size}")
    weights, biases, offset = [], [], 0
    for fan_in, fan_out in zip(sizes, sizes[1:]):
        weights.append(flat[offset:offset + fan_in * fan_out].reshape(fan_out, fan_in).copy())
        offset += fan_in * fan_out
        biases.append(flat[offset:offset + fan_out].copy())
        offset += fan_out
    return ParamSet(weights, biases)


def write_run_outputs(out_dir: Union[str, Path], report: RunReport,
                      params: ParamSet | None = None) -> dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {"metrics": out_dir / "metrics.jsonl", "report": out_dir / "report.json"}
    _atomic_write(paths["metrics"], "\n".join(metrics_lines(report.records)) + "\n")
    _atomic_write(paths["report"],
                  json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n")
    if params is not None:
        paths["model"] = out_dir / "model.bin"
        save_params(params, paths["model"])
    return paths


@dataclass(frozen=True)
class CompareRow:
    label: str
    cost_ratio: float
    final_accuracy: float | None
    delta_accuracy: float | None


_SHARED_FIELDS = ("data", "hidden_layers", "train", "batch_size", "run_seed")


def compare(cfgs: Sequence[ExperimentConfig]) -> list[CompareRow]:
    """Run shared-seed configs sequentially and tabulate cost and accuracy.

    Configs must agree on everything except the policy and its drop/refresh
    parameters; the delta column is against the first config's accuracy.
    """
    if len(cfgs) < 2:
        raise HarnessError("compare needs at least two configs")
    base = cfgs[0]
    for i, cfg in enumerate(cfgs[1:], start=2):
        for name in _SHARED_FIELDS:
            if getattr(cfg, name) != getattr(base, name):
                raise HarnessError(
                    f"config {i} differs from config 1 in {name}; compare runs must "
                    f"differ only in policy and drop/refresh settings")
        if cfg.total_epochs != base.total_epochs:
            raise HarnessError(f"config {i} differs from config 1 in total_epochs")
    labels = [cfg.policy for cfg in cfgs]
    for label in set(labels):
        if labels.count(label) > 1:
            labels = [f"{lab}-{i}" if lab == label else lab
                      for i, lab in enumerate(labels, start=1)]
    rows: list[CompareRow] = []
    reference: float | None = None
    for label, cfg in zip(labels, cfgs):
        report = run_experiment(cfg)
        acc = report.final_validation_accuracy
        if reference is None:
            reference = acc
        delta = None if acc is None or reference is None else acc - reference
        rows.append(CompareRow(label=label, cost_ratio=report.realized_cost_ratio,
                               final_accuracy=acc, delta_accuracy=delta))
    return rows


def export_features(params: ParamSet, dataset: Dataset, path: Union[str, Path]) -> None:
    """CSV of per-example embeddings: last hidden activations, else logits."""
    feats = model.penultimate_features(params, dataset.features)
    lines = ["id,label," + ",".join(f"f{j}" for j in range(feats.shape[1]))]
    for i in range(dataset.n):
        cells = [str(i), str(int(dataset.labels[i]))]
        cells.extend(repr(float(x)) for x in feats[i])
        lines.append(",".join(cells))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    _atomic_write(path, "\n".join(lines) + "\n")


def training_population(cfg: ExperimentConfig) -> int:
    """Size of the training split the schedule will see; no training happens."""
    train_set, _ = load_dataset(cfg.data, cfg.run_seed)
    return train_set.n
