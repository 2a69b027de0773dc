import numpy as np
import pytest

from caora.replay import ReplayBuffer


def _push_scalar(buf, k):
    buf.push(np.array([k, k]), np.array([k]), float(k), np.array([k + 1, k + 1]), False)


def test_len_tracks_fill_up_to_capacity():
    buf = ReplayBuffer(capacity=5, state_dim=2, action_dim=1)
    assert len(buf) == 0
    for k in range(3):
        _push_scalar(buf, k)
    assert len(buf) == 3
    for k in range(3, 20):
        _push_scalar(buf, k)
    assert len(buf) == 5


def test_eviction_is_strictly_fifo():
    buf = ReplayBuffer(capacity=5, state_dim=2, action_dim=1)
    for k in range(9):
        _push_scalar(buf, k)
        kept = [t.r for t in buf.snapshot()]
        expected = [float(i) for i in range(max(0, k - 4), k + 1)]
        assert kept == expected


def test_sample_shapes_and_validation():
    buf = ReplayBuffer(capacity=10, state_dim=4, action_dim=2)
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        buf.sample(1, rng)
    for k in range(6):
        buf.push(rng.normal(size=4), rng.normal(size=2), float(k), rng.normal(size=4), k == 5)
    s, a, r, s_next, done = buf.sample(4, rng)
    assert s.shape == (4, 4) and a.shape == (4, 2)
    assert r.shape == (4, 1) and done.shape == (4, 1)
    with pytest.raises(ValueError):
        buf.sample(7, rng)


def test_stored_values_round_trip():
    buf = ReplayBuffer(capacity=3, state_dim=2, action_dim=1)
    s = np.array([0.25, -1.5])
    a = np.array([0.125])
    buf.push(s, a, -0.1, s + 1, True)
    t = buf.snapshot()[0]
    assert np.array_equal(t.s, s)
    assert np.array_equal(t.a, a)
    assert t.r == -0.1
    assert t.done is True
