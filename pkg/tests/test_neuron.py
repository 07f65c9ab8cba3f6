import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from biograd.errors import ConfigError
from biograd.network import (
    NetworkParams,
    forward_batch,
    forward_sample,
    init_feedback,
    init_network,
)
from biograd.neuron import (
    NeuronHyper,
    accumulate_output_and_error,
    apical_step,
    encode_error_spikes,
    lif_step,
    pseudo_grad,
)

H = NeuronHyper()


def test_hyper_defaults():
    assert NeuronHyper.for_dataset("mnist") == NeuronHyper(0.6, 0.3, 0.3, 1.0, 20, 5)
    assert NeuronHyper.for_dataset("nmnist") == NeuronHyper(0.3, 0.3, 0.3, 1.0, 60, 19)


def step1(v_prev, o_prev, drive):
    W = np.array([[drive]])
    return lif_step(np.array([[v_prev]]), np.array([[o_prev]]), W, np.array([[1.0]]), H)


def test_lif_quiescent():
    v, o = lif_step(np.zeros((1, 3)), np.zeros((1, 3)), np.ones((3, 2)), np.zeros((1, 2)), H)
    assert not v.any() and not o.any()


def test_lif_spike_and_unreset_storage():
    v, o = step1(0.2, 0.0, 0.2)
    assert v[0, 0] == pytest.approx(0.32) and o[0, 0] == 1.0
    # the stored voltage stays above threshold until the next step resets it
    assert v[0, 0] > H.v_th


def test_lif_reset_kills_carryover():
    v, o = step1(1.0, 1.0, 0.1)
    assert v[0, 0] == pytest.approx(0.1) and o[0, 0] == 0.0


def test_lif_shape_mismatch():
    with pytest.raises(ValueError):
        lif_step(np.zeros((1, 3)), np.zeros((1, 3)), np.ones((3, 2)), np.zeros((1, 4)), H)


@pytest.mark.parametrize("v, expected", [(0.3, 1.0), (0.0, 0.0), (0.05, 1.0), (0.6, 0.0),
                                         (0.59, 1.0), (-0.1, 0.0)])
def test_pseudo_grad(v, expected):
    assert pseudo_grad(v, H) == expected


def test_error_uniform_start():
    out, e = accumulate_output_and_error(np.zeros((1, 10)), np.zeros((1, 10)), [0])
    np.testing.assert_allclose(e[0], [-0.9] + [0.1] * 9)


def test_error_after_one_spike():
    o = np.zeros((1, 10))
    o[0, 0] = 1
    out, e = accumulate_output_and_error(np.zeros((1, 10)), o, [0])
    assert e[0, 0] == pytest.approx(math.e / (math.e + 9) - 1, abs=1e-5)
    assert e[0, 0] == pytest.approx(-0.76803, abs=1e-5)
    np.testing.assert_allclose(e[0, 1:], 1 / (math.e + 9), atol=1e-5)
    assert e[0, 1] == pytest.approx(0.08534, abs=1e-5)


# counts up to T=20; beyond ~36 spikes of margin the closed interval is hit in float64
@given(arrays(np.float64, (3, 10), elements=st.floats(0, 20)), st.integers(0, 9))
def test_error_sums_to_zero_and_bounded(counts, label):
    _, e = accumulate_output_and_error(counts, np.zeros_like(counts), [label] * 3)
    np.testing.assert_allclose(e.sum(axis=1), 0, atol=1e-12)
    assert np.all(e > -1) and np.all(e < 1)


def test_error_large_counts_stable():
    _, e = accumulate_output_and_error(np.array([[1e4, 0.0]]), np.zeros((1, 2)), [1])
    assert np.isfinite(e).all()


def test_error_spikes_modes():
    e = np.array([[0.0, -0.3, 0.5]])
    pos, neg = encode_error_spikes(e, 2, H, "bernoulli", np.random.default_rng(0))
    assert not pos.any() and not neg.any()  # before t_error
    pos, neg = encode_error_spikes(e, 5, H, "bernoulli", np.array([[0.0, 0.29, 0.1]]))
    assert pos.tolist() == [[0, 0, 1]] and neg.tolist() == [[0, 1, 0]]
    pos, neg = encode_error_spikes(e, 5, H, "bernoulli", np.array([[0.0, 0.31, 0.6]]))
    assert not pos.any() and not neg.any()
    pos, neg = encode_error_spikes(e, 9, H, "exact")
    assert not pos.any() and not neg.any()
    with pytest.raises(ConfigError):
        encode_error_spikes(e, 9, H, "rate")


def test_error_spike_rate():
    e = np.full((10000, 1), 0.5)
    pos, neg = encode_error_spikes(e, 6, H, "bernoulli", np.random.default_rng(42))
    assert abs(pos.mean() - 0.5) < 0.015 and not neg.any()
    e = np.full((10000, 1), -0.3)
    pos, neg = encode_error_spikes(e, 6, H, "bernoulli", np.random.default_rng(1))
    assert abs(neg.mean() - 0.3) < 0.015 and not pos.any()
    assert not (pos * neg).any()


def test_apical():
    B = np.eye(4)
    v_a = np.zeros((1, 4))
    pos = np.zeros((1, 4))
    pos[0, 2] = 1
    np.testing.assert_array_equal(apical_step(v_a, B, pos, np.zeros((1, 4)))[0], [0, 0, 1, 0])
    rng = np.random.default_rng(0)
    B = rng.normal(size=(6, 4))
    e = rng.normal(size=(1, 4))
    for _ in range(15):
        v_a = apical_step(v_a if v_a.shape[1] == 6 else np.zeros((1, 6)), B, None, None, "exact", e)
    np.testing.assert_allclose(v_a / 15, e @ B.T, rtol=1e-12)
    with pytest.raises(ValueError):
        apical_step(np.zeros((1, 6)), B, np.zeros((1, 5)), np.zeros((1, 5)))


def test_feedback_init_products():
    W2 = np.array([[1.0, 0.0], [0.0, 2.0]])
    W3 = np.array([[1.0, 1.0], [0.0, 1.0]])
    W1 = np.ones((2, 3))
    B = init_feedback([W1, W2, W3], "fwd")
    np.testing.assert_array_equal(B[0], [[1, 0], [2, 2]])
    np.testing.assert_array_equal(B[1], W3.T)
    np.testing.assert_array_equal(B[2], np.eye(2))


def test_feedback_shapes():
    for mode in ("fwd", "rand"):
        p = init_network([7, 5, 4, 3], mode, np.random.default_rng(0))
        assert [b.shape for b in p.B] == [(5, 3), (4, 3), (3, 3)]
        np.testing.assert_array_equal(p.B[-1], np.eye(3))
    p = init_network([7, 5, 3], "fwd", np.random.default_rng(0))
    np.testing.assert_array_equal(p.B[0], p.W[1].T)
    with pytest.raises(ConfigError):
        init_feedback(p.W, "mirror")


def test_weight_init_bounds():
    p = init_network([784, 100, 10], "fwd", np.random.default_rng(0))
    assert np.abs(p.W[0]).max() <= math.sqrt(1 / 784)
    assert np.abs(p.W[1]).max() <= math.sqrt(1 / 100)


def test_zero_input_predicts_zero():
    p = init_network([5, 4, 3], "fwd", np.random.default_rng(0))
    pred, res = forward_sample(p, np.zeros((20, 5)), 2, H, "bernoulli", np.random.default_rng(0))
    assert pred == 0 and not res.output.any()


def test_hardwired_output_wins():
    W2 = np.zeros((4, 3))
    W2[3] = 1.0
    W = [np.zeros((3, 3)), W2]
    p = NetworkParams([3, 3, 4], W, init_feedback(W, "fwd"))
    pred, res = forward_sample(p, np.ones((20, 3)), None, H)
    assert pred == 0  # hidden layer is silent
    W[0] = np.eye(3)
    p = NetworkParams([3, 3, 4], W, init_feedback(W, "fwd"))
    pred, res = forward_sample(p, np.ones((20, 3)), None, H)
    assert pred == 3 and res.output[0, 3] == 20


def test_spikes_are_threshold_indicator_of_stored_voltage():
    p = init_network([12, 9, 5], "fwd", np.random.default_rng(3))
    p.W = [w * 8 for w in p.W]
    sp = (np.random.default_rng(1).random((4, 20, 12)) < 0.4).astype(np.uint8)
    res = forward_batch(p, sp, np.arange(4), H, learn=False, record=True)
    for v, o in zip(res.history.v, res.history.o):
        np.testing.assert_array_equal(o, (v > H.v_th).astype(float))
        assert o.any()


def test_forward_determinism():
    p = init_network([12, 9, 5], "rand", np.random.default_rng(3))
    sp = (np.random.default_rng(1).random((3, 20, 12)) < 0.4).astype(np.uint8)
    runs = [forward_batch(p, sp, [0, 1, 2], H, error_rng=np.random.default_rng(9))
            for _ in range(2)]
    np.testing.assert_array_equal(runs[0].predictions, runs[1].predictions)
    for a, b in zip(runs[0].v_a, runs[1].v_a):
        np.testing.assert_array_equal(a, b)


def test_exact_mode_constant_error_apical():
    p = init_network([12, 9, 5], "rand", np.random.default_rng(3))
    sp = (np.random.default_rng(1).random((2, 20, 12)) < 0.4).astype(np.uint8)
    e = np.random.default_rng(2).normal(size=(2, 5))
    res = forward_batch(p, sp, [0, 1], H, error_mode="exact", held_error=e)
    for v_a, B in zip(res.v_a, p.B):
        np.testing.assert_allclose(v_a / (H.T - H.t_error), e @ B.T.astype(float), rtol=1e-12)


def test_argmax_shift_invariance():
    counts = np.random.default_rng(0).integers(0, 20, (50, 10)).astype(float)
    assert (np.argmax(counts, 1) == np.argmax(counts + 7, 1)).all()


def test_forward_rejects_bad_shapes():
    p = init_network([12, 9, 5], "fwd", np.random.default_rng(3))
    with pytest.raises(ValueError):
        forward_batch(p, np.zeros((1, 20, 11)), [0], H)
    with pytest.raises(ValueError):
        forward_batch(p, np.zeros((1, 19, 12)), [0], H)
