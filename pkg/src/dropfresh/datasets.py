"""Dataset loading, synthetic generation, augmentation, and batch plans.

Randomness is split into named streams keyed off the run seed, so shuffling,
augmentation, and synthetic sampling never share draws. Augmentation is keyed
by (epoch seed, example id): an example's transform does not depend on which
batch it landed in.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np

_BATCH_STREAM = 2
_AUGMENT_STREAM = 3
_GEN_STREAM = 4


class DatasetError(ValueError):
    pass


class BadMagicError(DatasetError):
    pass


class TruncatedPayloadError(DatasetError):
    pass


class CountMismatchError(DatasetError):
    pass


@dataclass
class Dataset:
    """Feature matrix (n, d) float64 plus integer labels; ids are row indices."""

    features: np.ndarray
    labels: np.ndarray
    class_count: int
    image_shape: tuple[int, int, int] | None = None

    def __post_init__(self) -> None:
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise DatasetError(f"features must be (n, d) with n >= 1, got {self.features.shape}")
        if self.labels.shape != (self.features.shape[0],):
            raise DatasetError(
                f"labels shape {self.labels.shape} != ({self.features.shape[0]},)")
        if not np.isfinite(self.features).all():
            raise DatasetError("non-finite feature values")
        if self.class_count < 2:
            raise DatasetError(f"class_count must be >= 2, got {self.class_count}")
        if self.labels.min() < 0 or self.labels.max() >= self.class_count:
            raise DatasetError(
                f"labels must lie in [0, {self.class_count}), found "
                f"[{self.labels.min()}, {self.labels.max()}]")
        if self.image_shape is not None:
            h, w, c = self.image_shape
            if h * w * c != self.features.shape[1]:
                raise DatasetError(
                    f"image_shape {self.image_shape} does not flatten to "
                    f"{self.features.shape[1]} columns")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def ids(self) -> np.ndarray:
        return np.arange(self.n)

    def subset(self, ids: Sequence[int]) -> "Dataset":
        """New dataset of the given rows, re-indexed from zero."""
        idx = np.asarray(list(ids), dtype=np.int64)
        if idx.size == 0:
            raise DatasetError("subset needs at least one id")
        return Dataset(self.features[idx].copy(), self.labels[idx].copy(),
                       self.class_count, self.image_shape)


_IDX_IMAGE_MAGIC = 0x00000803
_IDX_LABEL_MAGIC = 0x00000801


def _read_idx(path: Union[str, Path], magic: int, rank: int) -> tuple[list[int], bytes]:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 4:
        raise TruncatedPayloadError(f"{path}: file shorter than its 4-byte magic")
    found = int.from_bytes(raw[:4], "big")
    if found != magic:
        raise BadMagicError(f"{path}: magic 0x{found:08x}, expected 0x{magic:08x}")
    header = 4 + 4 * rank
    if len(raw) < header:
        raise TruncatedPayloadError(f"{path}: file shorter than its {header}-byte header")
    dims = [int.from_bytes(raw[4 + 4 * i:8 + 4 * i], "big") for i in range(rank)]
    payload = raw[header:]
    expected = int(np.prod(dims, dtype=np.int64)) if dims else 0
    if len(payload) != expected:
        raise TruncatedPayloadError(
            f"{path}: expected {expected} payload bytes, found {len(payload)}")
    return dims, payload


def load_idx(image_path: Union[str, Path], label_path: Union[str, Path],
             class_count: int = 10) -> Dataset:
    """Big-endian IDX image/label pair; pixels are scaled to [0, 1]."""
    (n_img, height, width), pixels = _read_idx(image_path, _IDX_IMAGE_MAGIC, rank=3)
    (n_lbl,), raw_labels = _read_idx(label_path, _IDX_LABEL_MAGIC, rank=1)
    if n_img != n_lbl:
        raise CountMismatchError(
            f"{image_path} holds {n_img} images but {label_path} holds {n_lbl} labels")
    if n_img < 1:
        raise DatasetError(f"{image_path}: empty dataset")
    features = np.frombuffer(pixels, dtype=np.uint8).astype(np.float64) / 255.0
    features = features.reshape(n_img, height * width)
    labels = np.frombuffer(raw_labels, dtype=np.uint8).astype(np.int64)
    return Dataset(features, labels, class_count, image_shape=(height, width, 1))


def load_csv(path: Union[str, Path], class_count: int | None = None) -> Dataset:
    """Rows of ``label,x0,x1,...`` with a fixed feature width; no header."""
    path = Path(path)
    labels: list[int] = []
    rows: list[list[float]] = []
    width: int | None = None
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        cells = line.split(",")
        if width is None:
            width = len(cells) - 1
            if width < 1:
                raise DatasetError(f"{path}:{lineno}: need a label plus at least one feature")
        elif len(cells) - 1 != width:
            raise DatasetError(
                f"{path}:{lineno}: expected {width} feature columns, found {len(cells) - 1}")
        try:
            label = int(cells[0])
        except ValueError:
            raise DatasetError(f"{path}:{lineno}: non-integer label {cells[0]!r}") from None
        if label < 0:
            raise DatasetError(f"{path}:{lineno}: negative label {label}")
        try:
            rows.append([float(c) for c in cells[1:]])
        except ValueError:
            raise DatasetError(f"{path}:{lineno}: non-numeric feature value") from None
        labels.append(label)
    if not rows:
        raise DatasetError(f"{path}: no data rows")
    resolved = max(labels) + 1 if class_count is None else class_count
    if resolved < 2:
        resolved = 2
    return Dataset(np.array(rows, dtype=np.float64), np.array(labels, dtype=np.int64), resolved)


def save_csv(dataset: Dataset, path: Union[str, Path]) -> None:
    """Writes rows ``load_csv`` reads back exactly (repr round-trips floats)."""
    lines = []
    for i in range(dataset.n):
        cells = [str(int(dataset.labels[i]))]
        cells.extend(repr(float(x)) for x in dataset.features[i])
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n")


@dataclass(frozen=True)
class SyntheticSpec:
    """Gaussian class blobs: per-class means, shared or per-class stds, counts."""

    means: tuple[tuple[float, ...], ...]
    stds: tuple[float, ...]
    counts: tuple[int, ...]
    seed: int

    def __post_init__(self) -> None:
        if not self.counts or any(c < 1 for c in self.counts):
            raise DatasetError(f"counts must all be >= 1, got {self.counts}")
        if len(self.means) != len(self.counts):
            raise DatasetError(
                f"{len(self.means)} class means vs {len(self.counts)} class counts")
        if len(self.stds) not in (1, len(self.counts)):
            raise DatasetError(
                f"stds must have 1 or {len(self.counts)} entries, got {len(self.stds)}")
        if any(s < 0 for s in self.stds):
            raise DatasetError(f"stds must be >= 0, got {self.stds}")
        dims = {len(m) for m in self.means}
        if len(dims) != 1 or dims == {0}:
            raise DatasetError("class means must share one non-zero dimension")


def gen_gaussian(spec: SyntheticSpec) -> Dataset:
    """Samples class blobs in declaration order; ids group by class."""
    rng = np.random.default_rng([int(spec.seed), _GEN_STREAM])
    means = np.asarray(spec.means, dtype=np.float64)
    stds = np.asarray(spec.stds, dtype=np.float64)
    if stds.shape == (1,):
        stds = np.repeat(stds, len(spec.counts))
    blocks, labels = [], []
    for cls, count in enumerate(spec.counts):
        noise = rng.standard_normal(size=(count, means.shape[1]))
        blocks.append(means[cls] + stds[cls] * noise)
        labels.append(np.full(count, cls, dtype=np.int64))
    return Dataset(np.concatenate(blocks), np.concatenate(labels), len(spec.counts))


@dataclass(frozen=True)
class NoAugment:
    pass


@dataclass(frozen=True)
class GaussianNoise:
    sigma: float

    def __post_init__(self) -> None:
        if self.sigma < 0:
            raise DatasetError(f"sigma must be >= 0, got {self.sigma}")


@dataclass(frozen=True)
class HorizontalFlip:
    prob: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.prob <= 1.0:
            raise DatasetError(f"prob must be in [0, 1], got {self.prob}")


AugmentPolicy = Union[NoAugment, GaussianNoise, HorizontalFlip]


def epoch_seed(run_seed: int, epoch: int) -> int:
    """Per-epoch augmentation key, shared by every example that epoch."""
    seq = np.random.SeedSequence([int(run_seed), _AUGMENT_STREAM, int(epoch)])
    return int(seq.generate_state(1)[0])


def augment(features: np.ndarray, policy: AugmentPolicy, epoch_key: int,
            example_id: int, image_shape: tuple[int, int, int] | None = None) -> np.ndarray:
    """Transform one example vector; keyed by (epoch_key, example_id) only."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 1:
        raise DatasetError(f"augment expects one example vector, got shape {features.shape}")
    if isinstance(policy, NoAugment):
        return features
    if isinstance(policy, GaussianNoise):
        if policy.sigma == 0.0:
            return features
        rng = np.random.default_rng([int(epoch_key), int(example_id)])
        return features + policy.sigma * rng.standard_normal(features.shape)
    if isinstance(policy, HorizontalFlip):
        if image_shape is None:
            raise DatasetError("horizontal flip needs image-shaped data")
        h, w, c = image_shape
        if h * w * c != features.shape[0]:
            raise DatasetError(
                f"image_shape {image_shape} does not flatten to {features.shape[0]}")
        rng = np.random.default_rng([int(epoch_key), int(example_id)])
        if rng.random() < policy.prob:
            return features.reshape(h, w, c)[:, ::-1, :].reshape(-1).copy()
        return features
    raise DatasetError(f"unknown augmentation policy: {policy!r}")


def epoch_batches(active_ids: Sequence[int], batch_size: int, run_seed: int,
                  epoch: int) -> list[tuple[int, ...]]:
    """Shuffled batch plan over the active ids; the tail batch may be short."""
    if batch_size < 1:
        raise DatasetError(f"batch_size must be >= 1, got {batch_size}")
    ids = np.asarray(list(active_ids), dtype=np.int64)
    if ids.size == 0:
        raise DatasetError("active_ids must not be empty")
    rng = np.random.default_rng([int(run_seed), _BATCH_STREAM, int(epoch)])
    order = rng.permutation(ids)
    return [tuple(int(i) for i in order[lo:lo + batch_size])
            for lo in range(0, len(order), batch_size)]


@dataclass
class Batch:
    ids: tuple[int, ...]
    features: np.ndarray
    labels: np.ndarray


def make_batch(dataset: Dataset, ids: Sequence[int], policy: AugmentPolicy,
               epoch_key: int) -> Batch:
    """Materialize one batch, applying the augmentation policy per example."""
    ids = tuple(int(i) for i in ids)
    labels = dataset.labels[list(ids)].copy()
    if isinstance(policy, NoAugment):
        features = dataset.features[list(ids)].copy()
    else:
        features = np.stack([
            augment(dataset.features[i], policy, epoch_key, i, dataset.image_shape)
            for i in ids])
    return Batch(ids=ids, features=features, labels=labels)
