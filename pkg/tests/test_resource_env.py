import math

import numpy as np
import pytest

from caora.resource_env import (
    AllocAction,
    EnvConfig,
    EnvState,
    EpisodeTerminatedError,
    ResourceAllocEnv,
    ResourcePool,
    completion_rate,
    compute_reward,
    episode_reset,
    project_action,
    select_weights,
    step,
)
from caora.workload import DemandSample, ScenarioMode, ScenarioProfile

POOL = ResourcePool()


def _state(d_ran=3.0, d_ai=3.0, prev_ran=0.0, prev_ai=0.0):
    return EnvState(d_ran=d_ran, d_ai=d_ai, prev_r_ran=prev_ran, prev_r_ai=prev_ai)


def _oracle_projection(prev_ran, prev_ai, d_ran, d_ai, r_max=7.0):
    # Independent statement of the rule: clip at zero, cap RAN at the pool,
    # hand AI whatever room is left.
    want_ran = max(0.0, prev_ran + d_ran)
    want_ai = max(0.0, prev_ai + d_ai)
    got_ran = min(want_ran, r_max)
    got_ai = min(want_ai, r_max - got_ran)
    return got_ran, got_ai


def test_pool_default_capacity_is_seven():
    assert POOL.r_max == 7.0
    assert POOL.r_max_at(100.0) == 7.0  # identity scaling ignores users


def test_pool_rejects_unknown_scaling_and_bad_base():
    with pytest.raises(ValueError):
        ResourcePool(r_base=0.0)
    with pytest.raises(ValueError):
        ResourcePool(user_scaling="nope")


def test_state_rejects_negative_and_nonfinite_fields():
    with pytest.raises(ValueError):
        EnvState(-1.0, 0.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        EnvState(float("inf"), 0.0, 0.0, 0.0)


def test_project_action_examples():
    a = project_action(_state(prev_ran=3, prev_ai=3), AllocAction(1, 1), POOL)
    assert (a.r_ran, a.r_ai) == (4.0, 3.0)  # AI truncated
    b = project_action(_state(prev_ran=2, prev_ai=2), AllocAction(0, 0), POOL)
    assert (b.r_ran, b.r_ai) == (2.0, 2.0)
    c = project_action(_state(prev_ran=6, prev_ai=1), AllocAction(3, 0), POOL)
    assert (c.r_ran, c.r_ai) == (7.0, 0.0)


def test_project_action_integer_grid_matches_oracle():
    for prev_ran in range(8):
        for prev_ai in range(8 - prev_ran):
            for d_ran in range(-7, 8):
                for d_ai in range(-7, 8):
                    st = _state(prev_ran=prev_ran, prev_ai=prev_ai)
                    alloc = project_action(st, AllocAction(d_ran, d_ai), POOL)
                    want = _oracle_projection(prev_ran, prev_ai, d_ran, d_ai)
                    assert (alloc.r_ran, alloc.r_ai) == want
                    assert alloc.r_ran + alloc.r_ai <= 7.0
                    assert alloc.executed_ran == math.floor(alloc.r_ran)
                    assert alloc.executed_ai == math.floor(alloc.r_ai)
                    assert alloc.executed_ran + alloc.executed_ai <= 7


def test_project_action_random_floats_never_violate_capacity():
    rng = np.random.default_rng(42)
    for _ in range(100_000):
        prev_ran = rng.uniform(0, 7)
        prev_ai = rng.uniform(0, 7 - prev_ran)
        st = _state(prev_ran=prev_ran, prev_ai=prev_ai)
        alloc = project_action(
            st, AllocAction(rng.uniform(-7, 7), rng.uniform(-7, 7)), POOL
        )
        assert alloc.r_ran + alloc.r_ai <= 7.0
        assert alloc.r_ran >= 0.0 and alloc.r_ai >= 0.0
        assert alloc.executed_ran + alloc.executed_ai <= 7


def test_completion_rate_examples():
    assert completion_rate(1.0, 3.0, 5.0) == 3.0
    assert completion_rate(1.0, 7.0, 7.0) == 7.0
    assert completion_rate(0.5, 4.0, 5.0) == 2.0


def test_completion_rate_bounds():
    rng = np.random.default_rng(7)
    for _ in range(200):
        p = rng.uniform(0, 1)
        alloc = rng.uniform(0, 7)
        demand = rng.uniform(0, 7)
        c = completion_rate(p, alloc, demand)
        assert c <= demand + 1e-15
        assert c <= p * alloc + 1e-15


def test_compute_reward_examples():
    # Full satisfaction and full allocation: a perfect step.
    rb = compute_reward(3.0, 3.0, 4.0, 4.0, (0.5, 0.5), 0.1, 7.0, POOL)
    assert rb.base == 1.0 and rb.penalty == 0.0 and rb.final == 1.0
    # Nothing allocated at all: base zero, full idle penalty.
    rb = compute_reward(0.0, 3.0, 0.0, 4.0, (0.5, 0.5), 0.1, 0.0, POOL)
    assert rb.base == 0.0
    assert rb.penalty == pytest.approx(0.1)
    assert rb.final == pytest.approx(-0.1)
    # Hand evaluation cross-checked with the formula spelled out inline.
    rb = compute_reward(3.0, 3.0, 2.0, 4.0, (0.5, 0.5), 0.1, 7.0, POOL)
    oracle = 0.5 * (3.0 / 3.0) + 0.5 * (2.0 / 4.0) - 0.1 * (1 - 7.0 / 7.0)
    assert rb.final == pytest.approx(oracle, abs=1e-12)
    assert rb.final == pytest.approx(0.75, abs=1e-12)


def test_compute_reward_zero_demand_counts_as_served():
    rb = compute_reward(0.0, 0.0, 1.0, 2.0, (0.5, 0.5), 0.1, 7.0, POOL)
    assert rb.base == pytest.approx(0.5 + 0.25)


def test_compute_reward_rejects_unnormalized_weights():
    with pytest.raises(ValueError):
        compute_reward(1.0, 1.0, 1.0, 1.0, (0.6, 0.6), 0.1, 7.0, POOL)
    with pytest.raises(ValueError):
        compute_reward(1.0, 1.0, 1.0, 1.0, (1.2, -0.2), 0.1, 7.0, POOL)


def test_compute_reward_range_and_monotonicity_in_allocated():
    rng = np.random.default_rng(17)
    for lam in (0.05, 0.1, 0.2):
        for _ in range(500):
            d_ran = rng.uniform(0, 7)
            d_ai = rng.uniform(0, 7)
            c_ran = rng.uniform(0, d_ran) if d_ran > 0 else 0.0
            c_ai = rng.uniform(0, d_ai) if d_ai > 0 else 0.0
            w_ran = rng.uniform(0, 1)
            alloc_low = rng.uniform(0, 7)
            alloc_high = rng.uniform(alloc_low, 7)
            lo = compute_reward(c_ran, d_ran, c_ai, d_ai, (w_ran, 1 - w_ran), lam, alloc_low, POOL)
            hi = compute_reward(c_ran, d_ran, c_ai, d_ai, (w_ran, 1 - w_ran), lam, alloc_high, POOL)
            assert -lam - 1e-12 <= lo.final <= 1.0 + 1e-12
            assert 0.0 <= lo.base <= 1.0 + 1e-12
            assert 0.0 <= lo.penalty <= lam + 1e-12
            assert hi.final >= lo.final - 1e-12


def test_select_weights_examples():
    cfg = EnvConfig()
    assert select_weights(DemandSample(0, 7.0, 0.0, 7), POOL, cfg) == (1.0, 0.0)
    assert select_weights(DemandSample(0, 4.0, 4.0, 8), POOL, cfg) == (0.5, 0.5)
    w = select_weights(DemandSample(0, 6.0, 2.0, 8), POOL, cfg)
    assert w == pytest.approx((0.75, 0.25))
    assert select_weights(DemandSample(0, 0.0, 0.0, 0), POOL, cfg) == (0.5, 0.5)


def test_select_weights_floor_guarantees_ran_priority():
    cfg = EnvConfig()
    rng = np.random.default_rng(3)
    for _ in range(300):
        s = DemandSample(0, float(rng.uniform(0, 7)), float(rng.uniform(0, 7)), 0)
        w_ran, w_ai = select_weights(s, POOL, cfg)
        assert w_ran >= w_ai
        assert w_ran + w_ai == pytest.approx(1.0)


def test_select_weights_fixed_policy():
    cfg = EnvConfig(weight_policy="fixed", fixed_w_ran=0.7)
    assert select_weights(DemandSample(0, 1.0, 5.0, 6), POOL, cfg) == pytest.approx((0.7, 0.3))


def test_step_three_step_trace_matches_hand_oracle():
    # Zero actions keep allocations at zero; each step scores the current
    # demands with zero completions and the full idle penalty.
    cfg = EnvConfig()
    state = _state(d_ran=3.0, d_ai=4.0)
    for t in range(3):
        nxt = DemandSample(t=t + 1, d_ran=2.0, d_ai=5.0, active_users=7)
        state_next, rb, info = step(state, AllocAction(0.0, 0.0), nxt, POOL, cfg, t=t)
        w_ran = max(0.5, state.d_ran / (state.d_ran + state.d_ai))
        hand = w_ran * 0.0 + (1 - w_ran) * 0.0 - 0.1 * 1.0
        assert rb.final == pytest.approx(hand, abs=1e-12)
        assert info.utilization == 0.0
        assert (state_next.prev_r_ran, state_next.prev_r_ai) == (0.0, 0.0)
        state = state_next


def test_step_zero_action_is_fixed_point_for_allocations():
    cfg = EnvConfig()
    st = _state(d_ran=3.0, d_ai=3.0, prev_ran=2.0, prev_ai=2.0)
    nxt = DemandSample(t=1, d_ran=3.0, d_ai=3.0, active_users=6)
    state_next, _, info = step(st, AllocAction(0.0, 0.0), nxt, POOL, cfg, t=0)
    assert (info.r_ran, info.r_ai) == (2.0, 2.0)
    assert (state_next.prev_r_ran, state_next.prev_r_ai) == (2.0, 2.0)


def test_step_capacity_invariant_random_actions():
    cfg = EnvConfig()
    rng = np.random.default_rng(23)
    state = _state(d_ran=4.0, d_ai=4.0)
    for t in range(500):
        nxt = DemandSample(
            t=t + 1,
            d_ran=float(rng.integers(2, 6)),
            d_ai=float(rng.integers(2, 6)),
            active_users=0,
        )
        action = AllocAction(float(rng.uniform(-9, 9)), float(rng.uniform(-9, 9)))
        state, _, info = step(state, action, nxt, POOL, cfg, t=t)
        assert state.prev_r_ran + state.prev_r_ai <= 7.0
        assert info.executed_ran + info.executed_ai <= 7
        if info.executed_ran + info.executed_ai == 7:
            assert info.utilization == pytest.approx(1.0)


def test_episode_reset_cold_start_and_ranges():
    profile = ScenarioProfile(seed=5)
    st = episode_reset(profile, POOL)
    assert (st.prev_r_ran, st.prev_r_ai) == (0.0, 0.0)
    assert 2.0 <= st.d_ran <= 5.0 and 2.0 <= st.d_ai <= 5.0
    assert episode_reset(profile, POOL) == st  # same seed, same state


def test_env_episode_is_reproducible_and_terminates():
    profile = ScenarioProfile(seed=5)
    cfg = EnvConfig(episode_steps=100)

    def run():
        env = ResourceAllocEnv(profile, POOL, cfg)
        st = env.reset(episode=0)
        rng = np.random.default_rng(99)
        rows = []
        for _ in range(env.episode_steps):
            a = AllocAction(float(rng.uniform(-7, 7)), float(rng.uniform(-7, 7)))
            st, rb, info = env.step(a)
            rows.append((st, rb.final, info.t))
        return rows, env

    rows_a, env_a = run()
    rows_b, _ = run()
    assert rows_a == rows_b
    assert env_a.terminated
    with pytest.raises(EpisodeTerminatedError):
        env_a.step(AllocAction(0.0, 0.0))


def test_env_peak_profile_switches_demand_regime():
    profile = ScenarioProfile(mode=ScenarioMode.PEAK_RAN, peak_onset_step=50, seed=2)
    env = ResourceAllocEnv(profile, POOL, EnvConfig())
    env.reset(episode=0)
    demands = [env.state.d_ran]
    for _ in range(99):
        st, _, _ = env.step(AllocAction(0.0, 0.0))
        demands.append(st.d_ran)
    assert all(2 <= d <= 5 for d in demands[:50])
    assert all(d in (6.0, 7.0) for d in demands[50:])
