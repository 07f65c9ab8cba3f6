import numpy as np
import pytest

from biograd.errors import ConfigError
from biograd.metrics import alignment_angle
from biograd.network import NetworkParams, init_feedback, init_network
from biograd.neuron import NeuronHyper
from biograd.sleep import (
    SleepHyper,
    feedback_delta,
    gen_random_spikes,
    run_sleep_phase,
    sleep_propagate,
    sleep_scheduler,
)

H = NeuronHyper()


def test_random_spikes():
    pos, neg = gen_random_spikes((100,), 0.0, np.random.default_rng(0))
    assert not pos.any() and not neg.any()
    pos, neg = gen_random_spikes((100000,), 0.25, np.random.default_rng(1))
    assert abs(pos.mean() - 0.25) < 0.005 and abs(neg.mean() - 0.25) < 0.005
    assert not (pos * neg).any()
    assert abs((pos - neg).mean()) < 0.01
    with pytest.raises(ConfigError):
        gen_random_spikes((3,), 0.6, np.random.default_rng(0))


def test_hyper_validation():
    with pytest.raises(ConfigError):
        SleepHyper(p_spike=0.7)
    with pytest.raises(ConfigError):
        SleepHyper(beta=-1)


def test_propagate_no_drive():
    p = init_network([4, 5, 3, 2], "rand", np.random.default_rng(0))
    tr = sleep_propagate(p, 0, H, SleepHyper(p_spike=0.0, batch=4), np.random.default_rng(0))
    assert not tr.tr_hid.any() and not tr.tr_err.any()
    B0 = p.B[0].copy()
    run_sleep_phase(p, 3, H, SleepHyper(p_spike=0.0, batch=4), np.random.default_rng(0))
    np.testing.assert_array_equal(p.B[0], B0)


def test_single_path_chain():
    # hidden unit -> always-firing output when driven positive
    W = [np.ones((1, 1)), np.array([[1.0]])]
    p = NetworkParams([1, 1, 1], W, init_feedback(W, "fwd"))
    sl = SleepHyper(T_sleep=30, p_spike=0.4, batch=1)
    tr = sleep_propagate(p, 0, H, sl, np.random.default_rng(5))
    # same draws, one step at a time
    rng = np.random.default_rng(5)
    drive = [np.subtract(*gen_random_spikes((1, 1), 0.4, rng))[0, 0] for _ in range(30)]
    assert tr.tr_hid[0, 0] == sum(drive)
    v = o = 0.0
    fired = 0
    for x in drive:
        v = H.d_v * v * (1 - o) + x
        o = float(v > H.v_th)
        fired += o
    assert tr.tr_err[0, 0] == fired


def test_propagate_deterministic_and_range_checked():
    p = init_network([4, 5, 3, 2], "rand", np.random.default_rng(0))
    sl = SleepHyper(batch=8)
    a = sleep_propagate(p, 1, H, sl, np.random.default_rng(3))
    b = sleep_propagate(p, 1, H, sl, np.random.default_rng(3))
    np.testing.assert_array_equal(a.tr_hid, b.tr_hid)
    np.testing.assert_array_equal(a.tr_err, b.tr_err)
    assert a.tr_hid.shape == (8, 3) and a.tr_err.shape == (8, 2)
    with pytest.raises(ValueError):
        sleep_propagate(p, 2, H, sl, np.random.default_rng(3))


def test_feedback_delta():
    assert not feedback_delta([1.0, 2.0], [0.0, 0.0], np.ones((2, 2)), 1.0).any()
    d = feedback_delta(np.array([[3.0]]), np.array([[2.0]]), np.array([[1.0]]), 1.0)
    assert d[0, 0] == pytest.approx(2.0)
    hid, err = np.array([3.0, -1.0]), np.array([2.0, 4.0])
    fixed = hid[:, None] / err[None, :]
    np.testing.assert_allclose(feedback_delta(hid, err, fixed, 0.5), 0, atol=1e-15)
    with pytest.raises(ValueError):
        feedback_delta(hid, err, np.ones((3, 2)), 1.0)


def test_feedback_delta_bounded_under_constant_traces():
    hid, err = np.array([[5.0, -3.0]]), np.array([[4.0, 1.0]])
    B = np.zeros((2, 2))
    for _ in range(10000):
        B = B + feedback_delta(hid, err, B, 1e-4 / 3)
    assert np.all(np.abs(B) <= np.abs(hid.T / err) + 1e-12)


def test_sleep_leaves_feedforward_untouched():
    p = init_network([6, 5, 4, 3], "rand", np.random.default_rng(0))
    W = [w.copy() for w in p.W]
    B_last = p.B[-1].copy()
    B0 = p.B[0].copy()
    run_sleep_phase(p, 2, H, SleepHyper(beta=1e-3, batch=16), np.random.default_rng(1))
    for a, b in zip(W, p.W):
        assert a.tobytes() == b.tobytes()
    np.testing.assert_array_equal(p.B[-1], B_last)
    assert not np.array_equal(p.B[0], B0)
    q = init_network([6, 5, 4, 3], "rand", np.random.default_rng(0))
    run_sleep_phase(q, 0, H, SleepHyper(), np.random.default_rng(1))
    run_sleep_phase(q, 2, H, SleepHyper(beta=0.0, batch=4), np.random.default_rng(1))
    np.testing.assert_array_equal(q.B[0], B0)


def test_scheduler():
    assert [sleep_scheduler(b, 1) for b in range(1, 4)] == [1, 1, 1]
    assert [sleep_scheduler(b, 4) for b in range(1, 9)] == [0, 0, 0, 4, 0, 0, 0, 4]
    assert sum(sleep_scheduler(b, 64) for b in range(1, 129)) == 128
    with pytest.raises(ConfigError):
        sleep_scheduler(1, 0)


def test_mirroring_reduces_angle():
    p = init_network([20, 20, 10], "rand", np.random.default_rng(2))
    start = alignment_angle(p.B[0], p.W, 0)
    run_sleep_phase(p, 30, H, SleepHyper(beta=1e-3, batch=32), np.random.default_rng(0))
    assert alignment_angle(p.B[0], p.W, 0) < start - 20
