import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from dropfresh.model import (BatchOutput, ParamSet, TrainHyper, backward, forward,
                             init_params, lr_at, penultimate_features, predict,
                             sgd_step, softmax, softmax_xent)

import oracles


def single_layer(weights, biases):
    return ParamSet([np.asarray(weights, dtype=np.float64)],
                    [np.asarray(biases, dtype=np.float64)])


def test_init_params_shapes_and_range():
    params = init_params([4, 5, 3], seed=0)
    assert [w.shape for w in params.weights] == [(5, 4), (3, 5)]
    assert [b.shape for b in params.biases] == [(5,), (3,)]
    assert params.layer_sizes == [4, 5, 3]
    for w in params.weights:
        limit = math.sqrt(6.0 / (w.shape[0] + w.shape[1]))
        assert np.abs(w).max() <= limit
    assert all(not b.any() for b in params.biases)


def test_init_params_seeded():
    a = init_params([3, 2], seed=7)
    b = init_params([3, 2], seed=7)
    c = init_params([3, 2], seed=8)
    assert np.array_equal(a.weights[0], b.weights[0])
    assert not np.array_equal(a.weights[0], c.weights[0])


def test_init_params_validation():
    with pytest.raises(ValueError, match="layer_sizes"):
        init_params([4], seed=0)
    with pytest.raises(ValueError, match="layer_sizes"):
        init_params([4, 0], seed=0)


def test_param_set_validation():
    with pytest.raises(ValueError, match="incompatible"):
        ParamSet([np.zeros((2, 3))], [np.zeros(3)])
    with pytest.raises(ValueError, match="fan_in"):
        ParamSet([np.zeros((2, 3)), np.zeros((4, 3))], [np.zeros(2), np.zeros(4)])
    with pytest.raises(ValueError, match="non-finite"):
        ParamSet([np.full((1, 1), np.nan)], [np.zeros(1)])


def test_forward_worked_example():
    params = single_layer([[1.0, 2.0], [3.0, 4.0]], [0.0, 0.0])
    logits = forward(params, np.array([[1.0, 1.0]]))
    assert np.array_equal(logits, np.array([[3.0, 7.0]]))


def test_forward_with_bias_and_relu():
    params = ParamSet(
        [np.array([[1.0, -1.0]]), np.array([[2.0]])],
        [np.array([0.0]), np.array([1.0])])
    assert forward(params, np.array([[3.0, 1.0]]))[0, 0] == 5.0
    assert forward(params, np.array([[1.0, 3.0]]))[0, 0] == 1.0  # ReLU clamps


def test_forward_validation():
    params = single_layer([[1.0, 2.0]], [0.0])
    with pytest.raises(ValueError, match="2-D"):
        forward(params, np.array([1.0, 2.0]))
    with pytest.raises(ValueError, match="dim"):
        forward(params, np.zeros((1, 3)))
    with pytest.raises(ValueError, match="non-finite"):
        forward(params, np.array([[1.0, np.inf]]))
    with pytest.raises(ValueError, match="empty"):
        forward(params, np.zeros((0, 2)))


def test_softmax_xent_uniform_logits():
    out = softmax_xent(np.zeros((1, 2)), np.array([0]))
    assert out.per_example_loss[0] == pytest.approx(math.log(2.0), rel=1e-15)
    three_way = softmax_xent(np.full((1, 3), 4.2), np.array([2]))
    assert three_way.per_example_loss[0] == pytest.approx(math.log(3.0), rel=1e-15)


def test_softmax_xent_frozen_value():
    out = softmax_xent(np.array([[1.0, 0.0, 0.0]]), np.array([0]))
    expected = math.log(1.0 + 2.0 / math.e)  # 0.5514447139320511
    assert out.per_example_loss[0] == pytest.approx(expected, rel=1e-14)


def test_softmax_xent_shift_invariance():
    logits = np.array([[0.3, -1.2, 2.0], [5.0, 5.0, -5.0]])
    labels = np.array([2, 0])
    base = softmax_xent(logits, labels).per_example_loss
    shifted = softmax_xent(logits + 1000.0, labels).per_example_loss
    assert shifted == pytest.approx(base, rel=1e-9)


def test_softmax_xent_extreme_logits_stay_finite():
    out = softmax_xent(np.array([[1000.0, 0.0]]), np.array([1]))
    assert np.isfinite(out.per_example_loss).all()
    assert out.per_example_loss[0] == pytest.approx(1000.0)
    easy = softmax_xent(np.array([[1000.0, 0.0]]), np.array([0]))
    assert easy.per_example_loss[0] == 0.0


def test_softmax_xent_mean_is_mean():
    logits = np.array([[0.1, 0.9], [2.0, -2.0], [0.0, 0.0]])
    out = softmax_xent(logits, np.array([0, 1, 0]))
    assert out.mean_loss == float(np.mean(out.per_example_loss))
    assert isinstance(out, BatchOutput)


def test_softmax_xent_label_validation():
    logits = np.zeros((2, 3))
    with pytest.raises(ValueError, match=r"\[0, 3\)"):
        softmax_xent(logits, np.array([0, 3]))
    with pytest.raises(ValueError, match="integers"):
        softmax_xent(logits, np.array([0.0, 1.0]))
    with pytest.raises(ValueError, match="shape"):
        softmax_xent(logits, np.array([0]))


@settings(max_examples=80, deadline=None)
@given(hnp.arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(2, 5)),
                  elements=st.floats(-50, 50)),
       st.randoms(use_true_random=False))
def test_softmax_and_loss_properties(logits, rnd):
    labels = np.array([rnd.randrange(logits.shape[1]) for _ in range(logits.shape[0])])
    probs = softmax(logits)
    assert probs.sum(axis=1) == pytest.approx(np.ones(len(logits)), rel=1e-12)
    losses = softmax_xent(logits, labels).per_example_loss
    assert (losses >= 0.0).all()
    assert np.isfinite(losses).all()


def test_backward_matches_finite_differences_plain():
    rng = np.random.default_rng(11)
    params = ParamSet([rng.normal(size=(4, 3)), rng.normal(size=(2, 4))],
                      [rng.normal(size=4), rng.normal(size=2)])
    features = rng.normal(size=(5, 3))
    labels = rng.integers(0, 2, size=5)
    analytic = backward(params, features, labels)
    numeric = oracles.numeric_gradients(params, features, labels)
    assert oracles.max_relative_error(analytic, numeric) < 1e-6


def test_backward_matches_finite_differences_decay_and_weights():
    rng = np.random.default_rng(12)
    params = ParamSet([rng.normal(size=(3, 2))], [rng.normal(size=3)])
    features = rng.normal(size=(4, 2))
    labels = rng.integers(0, 3, size=4)
    sample_weights = rng.uniform(0.1, 2.0, size=4)
    analytic = backward(params, features, labels, weight_decay=0.05,
                        sample_weights=sample_weights)
    numeric = oracles.numeric_gradients(params, features, labels, weight_decay=0.05,
                                        sample_weights=sample_weights)
    assert oracles.max_relative_error(analytic, numeric) < 1e-6


def test_backward_duplicate_example_matches_single():
    rng = np.random.default_rng(13)
    params = ParamSet([rng.normal(size=(3, 4))], [rng.normal(size=3)])
    x = rng.normal(size=(1, 4))
    doubled = backward(params, np.vstack([x, x]), np.array([1, 1]))
    single = backward(params, x, np.array([1]))
    assert np.allclose(doubled.weights[0], single.weights[0], rtol=1e-12, atol=1e-15)
    assert np.allclose(doubled.biases[0], single.biases[0], rtol=1e-12, atol=1e-15)


def test_backward_weight_decay_skips_biases():
    rng = np.random.default_rng(14)
    params = ParamSet([rng.normal(size=(3, 2))], [rng.normal(size=3)])
    features = rng.normal(size=(4, 2))
    labels = rng.integers(0, 3, size=4)
    plain = backward(params, features, labels, weight_decay=0.0)
    decayed = backward(params, features, labels, weight_decay=0.5)
    assert np.array_equal(plain.biases[0], decayed.biases[0])
    assert np.allclose(decayed.weights[0] - plain.weights[0], 0.5 * params.weights[0])


def test_backward_sample_weight_validation():
    params = single_layer([[1.0, 0.0], [0.0, 1.0]], [0.0, 0.0])
    features = np.ones((2, 2))
    labels = np.array([0, 1])
    with pytest.raises(ValueError, match="sample_weights"):
        backward(params, features, labels, sample_weights=np.ones(3))
    with pytest.raises(ValueError, match="sample_weights"):
        backward(params, features, labels, sample_weights=np.array([1.0, -1.0]))


def test_sgd_two_steps_frozen():
    # constant unit gradient, lr 1, momentum 0.9: positions 0 -> -1 -> -2.9
    params = single_layer([[0.0]], [0.0])
    grads = single_layer([[1.0]], [1.0])
    hyper = TrainHyper(base_lr=1.0, momentum=0.9)
    params, velocity = sgd_step(params, grads, hyper, epoch=1)
    assert params.weights[0][0, 0] == -1.0
    params, velocity = sgd_step(params, grads, hyper, epoch=1, velocity=velocity)
    assert params.weights[0][0, 0] == pytest.approx(-2.9, rel=1e-15)
    assert velocity.weights[0][0, 0] == pytest.approx(1.9, rel=1e-15)


def test_sgd_uses_epoch_lr():
    hyper = TrainHyper(base_lr=0.5, momentum=0.0, lr_milestones=(1,), lr_gamma=0.1)
    params = single_layer([[0.0]], [0.0])
    grads = single_layer([[1.0]], [0.0])
    after, _ = sgd_step(params, grads, hyper, epoch=2)
    assert after.weights[0][0, 0] == pytest.approx(-0.05, rel=1e-15)


def test_sgd_shape_mismatch():
    params = single_layer([[0.0]], [0.0])
    bad = single_layer([[0.0, 0.0]], [0.0])
    with pytest.raises(ValueError, match="shapes"):
        sgd_step(params, bad, TrainHyper(base_lr=1.0), epoch=1)


def test_train_hyper_validation():
    with pytest.raises(ValueError, match="base_lr"):
        TrainHyper(base_lr=0.0)
    with pytest.raises(ValueError, match="momentum"):
        TrainHyper(base_lr=0.1, momentum=1.0)
    with pytest.raises(ValueError, match="weight_decay"):
        TrainHyper(base_lr=0.1, weight_decay=-1e-4)
    with pytest.raises(ValueError, match="lr_milestones"):
        TrainHyper(base_lr=0.1, lr_milestones=(5, 5))
    with pytest.raises(ValueError, match="lr_gamma"):
        TrainHyper(base_lr=0.1, lr_gamma=0.0)


def test_lr_schedule():
    hyper = TrainHyper(base_lr=0.1, lr_milestones=(30, 60), lr_gamma=0.1)
    assert lr_at(hyper, 1) == 0.1
    assert lr_at(hyper, 30) == 0.1            # decays after the milestone epoch
    assert lr_at(hyper, 31) == pytest.approx(0.01, rel=1e-15)
    assert lr_at(hyper, 60) == pytest.approx(0.01, rel=1e-15)
    assert lr_at(hyper, 61) == pytest.approx(0.001, rel=1e-15)
    with pytest.raises(ValueError, match="epoch"):
        lr_at(hyper, 0)


def test_predict_breaks_ties_toward_first_class():
    params = single_layer([[0.0, 0.0], [0.0, 0.0]], [1.0, 1.0])
    assert predict(params, np.ones((3, 2))).tolist() == [0, 0, 0]


def test_penultimate_features():
    rng = np.random.default_rng(15)
    params = ParamSet([rng.normal(size=(4, 3)), rng.normal(size=(2, 4))],
                      [np.zeros(4), np.zeros(2)])
    feats = rng.normal(size=(6, 3))
    embedded = penultimate_features(params, feats)
    assert embedded.shape == (6, 4)
    assert (embedded >= 0.0).all()  # ReLU output
    shallow = single_layer(rng.normal(size=(2, 3)), np.zeros(2))
    assert np.array_equal(penultimate_features(shallow, feats), forward(shallow, feats))
