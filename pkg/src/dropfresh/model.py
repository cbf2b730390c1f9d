"""Small dense classifier with analytic gradients and momentum SGD.

Everything is float64 and deterministic: initialization draws from a
seeded generator, and the loss/gradient reductions use numpy's fixed
pairwise summation, so identical inputs give bit-identical outputs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_INIT_STREAM = 0  # keeps init draws disjoint from the data-side streams


@dataclass
class ParamSet:
    """Per-layer weight matrices (fan_out, fan_in) and bias vectors (fan_out,)."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self) -> None:
        if len(self.weights) != len(self.biases):
            raise ValueError(
                f"{len(self.weights)} weight matrices vs {len(self.biases)} bias vectors")
        if not self.weights:
            raise ValueError("ParamSet needs at least one layer")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
                raise ValueError(f"layer {i}: weight {w.shape} incompatible with bias {b.shape}")
            if i > 0 and w.shape[1] != self.weights[i - 1].shape[0]:
                raise ValueError(
                    f"layer {i}: fan_in {w.shape[1]} != previous fan_out "
                    f"{self.weights[i - 1].shape[0]}")
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise ValueError(f"layer {i}: non-finite parameter values")

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    def copy(self) -> "ParamSet":
        return ParamSet([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    @staticmethod
    def zeros_like(other: "ParamSet") -> "ParamSet":
        return ParamSet([np.zeros_like(w) for w in other.weights],
                        [np.zeros_like(b) for b in other.biases])


def init_params(layer_sizes: list[int], seed: int) -> ParamSet:
    """Uniform init in +-sqrt(6 / (fan_in + fan_out)); zero biases."""
    if len(layer_sizes) < 2 or any(s < 1 for s in layer_sizes):
        raise ValueError(f"layer_sizes needs >= 2 positive entries, got {layer_sizes}")
    rng = np.random.default_rng([int(seed), _INIT_STREAM])
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes, layer_sizes[1:]):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return ParamSet(weights, biases)


@dataclass(frozen=True)
class TrainHyper:
    base_lr: float
    momentum: float = 0.0
    weight_decay: float = 0.0
    lr_milestones: tuple[int, ...] = ()
    lr_gamma: float = 0.1

    def __post_init__(self) -> None:
        object.__setattr__(self, "lr_milestones", tuple(int(m) for m in self.lr_milestones))
        if self.base_lr <= 0.0:
            raise ValueError(f"base_lr must be > 0, got {self.base_lr}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.weight_decay < 0.0:
            raise ValueError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.lr_gamma <= 0.0:
            raise ValueError(f"lr_gamma must be > 0, got {self.lr_gamma}")
        for prev, cur in zip((0,) + self.lr_milestones, self.lr_milestones):
            if cur <= prev:
                raise ValueError(
                    f"lr_milestones must be positive and strictly increasing, "
                    f"got {self.lr_milestones}")


def lr_at(hyper: TrainHyper, epoch: int) -> float:
    """Step decay: gamma applied once per milestone strictly before ``epoch``."""
    if epoch < 1:
        raise ValueError(f"epoch must be >= 1, got {epoch}")
    passed = sum(1 for m in hyper.lr_milestones if m < epoch)
    return hyper.base_lr * hyper.lr_gamma ** passed


def _check_features(params: ParamSet, features: np.ndarray) -> np.ndarray:
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2:
        raise ValueError(f"features must be 2-D (batch, dim), got shape {features.shape}")
    fan_in = params.weights[0].shape[1]
    if features.shape[1] != fan_in:
        raise ValueError(f"feature dim {features.shape[1]} != model input dim {fan_in}")
    if features.shape[0] == 0:
        raise ValueError("empty batch")
    if not np.isfinite(features).all():
        raise ValueError("non-finite feature values")
    return features


def _forward_pass(params: ParamSet, features: np.ndarray) -> list[np.ndarray]:
    """Activations per layer boundary; entry 0 is the input, entry -1 the logits."""
    acts = [features]
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = acts[-1] @ w.T + b
        acts.append(z if i == last else np.maximum(z, 0.0))
    return acts


def forward(params: ParamSet, features: np.ndarray) -> np.ndarray:
    """Logits for a batch; hidden layers are ReLU, the output layer is linear."""
    return _forward_pass(params, _check_features(params, features))[-1]


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


@dataclass
class BatchOutput:
    logits: np.ndarray
    per_example_loss: np.ndarray
    mean_loss: float


def _check_labels(labels: np.ndarray, batch: int, classes: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.shape != (batch,):
        raise ValueError(f"labels shape {labels.shape} != ({batch},)")
    if not np.issubdtype(labels.dtype, np.integer):
        raise ValueError(f"labels must be integers, got dtype {labels.dtype}")
    if labels.min() < 0 or labels.max() >= classes:
        raise ValueError(f"labels must lie in [0, {classes})")
    return labels.astype(np.int64)


def softmax_xent(logits: np.ndarray, labels: np.ndarray) -> BatchOutput:
    """Cross-entropy via the max-shifted log-sum-exp, so large logits stay finite."""
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 2:
        raise ValueError(f"logits must be 2-D, got shape {logits.shape}")
    if not np.isfinite(logits).all():
        raise ValueError("non-finite logits")
    labels = _check_labels(labels, logits.shape[0], logits.shape[1])
    shifted = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    losses = lse - shifted[np.arange(len(labels)), labels]
    # log-sum-exp >= the picked logit, so clamp only absorbs rounding dust
    losses = np.maximum(losses, 0.0)
    return BatchOutput(logits=logits, per_example_loss=losses,
                       mean_loss=float(losses.mean()))


def backward(params: ParamSet, features: np.ndarray, labels: np.ndarray,
             weight_decay: float = 0.0,
             sample_weights: np.ndarray | None = None) -> ParamSet:
    """Gradients of mean (optionally weighted) cross-entropy plus L2 on weights.

    The objective is ``(1/B) sum_i w_i * loss_i + (decay/2) * sum ||W||^2``;
    biases are not decayed.
    """
    features = _check_features(params, features)
    labels = _check_labels(labels, features.shape[0], params.weights[-1].shape[0])
    if weight_decay < 0.0:
        raise ValueError(f"weight_decay must be >= 0, got {weight_decay}")
    batch = features.shape[0]
    if sample_weights is not None:
        sample_weights = np.asarray(sample_weights, dtype=np.float64)
        if sample_weights.shape != (batch,):
            raise ValueError(f"sample_weights shape {sample_weights.shape} != ({batch},)")
        if not np.isfinite(sample_weights).all() or (sample_weights < 0).any():
            raise ValueError("sample_weights must be finite and >= 0")

    acts = _forward_pass(params, features)
    delta = softmax(acts[-1])
    delta[np.arange(batch), labels] -= 1.0
    if sample_weights is not None:
        delta *= sample_weights[:, None]
    delta /= batch

    grad_w: list[np.ndarray] = [None] * len(params.weights)  # type: ignore[list-item]
    grad_b: list[np.ndarray] = [None] * len(params.biases)  # type: ignore[list-item]
    for layer in range(len(params.weights) - 1, -1, -1):
        grad_w[layer] = delta.T @ acts[layer] + weight_decay * params.weights[layer]
        grad_b[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = (delta @ params.weights[layer]) * (acts[layer] > 0.0)
    return ParamSet(grad_w, grad_b)


def sgd_step(params: ParamSet, grads: ParamSet, hyper: TrainHyper, epoch: int,
             velocity: ParamSet | None = None) -> tuple[ParamSet, ParamSet]:
    """One momentum update: v <- m*v + g, w <- w - lr(epoch)*v."""
    if [w.shape for w in grads.weights] != [w.shape for w in params.weights]:
        raise ValueError("gradient shapes do not match parameters")
    if velocity is None:
        velocity = ParamSet.zeros_like(params)
    lr = lr_at(hyper, epoch)
    new_v = ParamSet(
        [hyper.momentum * v + g for v, g in zip(velocity.weights, grads.weights)],
        [hyper.momentum * v + g for v, g in zip(velocity.biases, grads.biases)])
    new_p = ParamSet(
        [w - lr * v for w, v in zip(params.weights, new_v.weights)],
        [b - lr * v for b, v in zip(params.biases, new_v.biases)])
    return new_p, new_v


def predict(params: ParamSet, features: np.ndarray) -> np.ndarray:
    """Argmax labels; ties resolve to the smallest class index."""
    return np.argmax(forward(params, features), axis=1)


def penultimate_features(params: ParamSet, features: np.ndarray) -> np.ndarray:
    """Last hidden activations, or the logits when there is no hidden layer."""
    acts = _forward_pass(params, _check_features(params, features))
    return acts[-2] if len(params.weights) > 1 else acts[-1]
