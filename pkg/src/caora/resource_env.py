"""Shared-cluster allocation environment.

Holds the current demand pair and the previous allocation, applies a
delta-allocation action under the hard capacity constraint
``r_ran + r_ai <= r_max`` (RAN is satisfied first when the two compete),
scores the step with a weighted completion reward minus an underutilization
penalty, and advances to the next demand sample.

The pure step operations live at module level; :class:`ResourceAllocEnv`
wraps them into a sequential episode with demand sampling and termination
tracking. Instances are single-threaded state machines; run one per thread.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import Callable, Tuple

import numpy as np

from .workload import DemandSample, ScenarioProfile, sample_demand, workload_masses

#: Named choices for the user-count -> capacity scaling hook. All reported
#: experiments use "identity" (capacity independent of load).
SCALING_FUNCTIONS: dict[str, Callable[[float], float]] = {
    "identity": lambda users: 1.0,
}


def register_scaling(name: str, fn: Callable[[float], float]) -> None:
    """Add a named capacity-scaling function usable by :class:`ResourcePool`."""
    SCALING_FUNCTIONS[name] = fn


class EpisodeTerminatedError(RuntimeError):
    """Raised when stepping an episode that has already finished."""


@dataclass(frozen=True)
class ResourcePool:
    """Compute cluster capacity in MIG slices.

    The effective maximum is ``r_base`` scaled by the named user-scaling
    function; with the default identity scaling the pool is a fixed 7 MIGs.
    """

    r_base: float = 7.0
    user_scaling: str = "identity"

    def __post_init__(self) -> None:
        if self.r_base <= 0.0:
            raise ValueError(f"r_base must be > 0, got {self.r_base}")
        if self.user_scaling not in SCALING_FUNCTIONS:
            raise ValueError(
                f"unknown user_scaling {self.user_scaling!r}; "
                f"known: {sorted(SCALING_FUNCTIONS)}"
            )

    def r_max_at(self, active_users: float) -> float:
        """Effective capacity for a given active-user count."""
        r = self.r_base * SCALING_FUNCTIONS[self.user_scaling](active_users)
        if r <= 0.0:
            raise ValueError(f"scaled capacity must stay > 0, got {r}")
        return r

    @property
    def r_max(self) -> float:
        """Capacity under a load-independent scaling (identity: r_base)."""
        return self.r_max_at(0.0)


@dataclass(frozen=True)
class EnvState:
    """Observed system state: current demands plus the previous allocation."""

    d_ran: float
    d_ai: float
    prev_r_ran: float
    prev_r_ai: float

    def __post_init__(self) -> None:
        for f in fields(self):
            v = getattr(self, f.name)
            if not math.isfinite(v) or v < 0.0:
                raise ValueError(f"state field {f.name} must be finite and >= 0, got {v}")

    def as_vector(self, r_max: float) -> np.ndarray:
        """State as a 4-vector normalized by the pool capacity."""
        return np.array(
            [self.d_ran, self.d_ai, self.prev_r_ran, self.prev_r_ai], dtype=np.float64
        ) / r_max


@dataclass(frozen=True)
class AllocAction:
    """Requested change to the two allocations, in MIG slices."""

    delta_r_ran: float
    delta_r_ai: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.delta_r_ran) and math.isfinite(self.delta_r_ai)):
            raise ValueError("action deltas must be finite")


@dataclass(frozen=True)
class Allocation:
    """Post-projection allocation: continuous values plus executed whole MIGs."""

    r_ran: float
    r_ai: float
    executed_ran: int
    executed_ai: int


@dataclass(frozen=True)
class RewardBreakdown:
    """Decomposed step reward.

    ``base`` is the weighted completion score in [0, 1]; ``penalty`` charges
    idle capacity at rate ``penalty_coeff``; ``final = base - penalty``.
    """

    w_ran: float
    w_ai: float
    base: float
    penalty: float
    final: float
    penalty_coeff: float
    allocated: float


@dataclass(frozen=True)
class StepInfo:
    """Per-step record; the leading columns form the CSV export contract."""

    t: int
    d_ran: float
    d_ai: float
    r_ran: float
    r_ai: float
    c_ran: float
    c_ai: float
    utilization: float
    reward: float
    executed_ran: int
    executed_ai: int
    executed_utilization: float
    ratio_ran: float
    ratio_ai: float
    w_ran: float
    w_ai: float
    base: float
    penalty: float
    r_max: float
    gen_mass: float
    comp_mass: float


#: Column order for delimited StepInfo export; the first nine are the
#: stable external interface, the rest are diagnostics.
STEP_CSV_COLUMNS: Tuple[str, ...] = (
    "t",
    "d_ran",
    "d_ai",
    "r_ran",
    "r_ai",
    "c_ran",
    "c_ai",
    "utilization",
    "reward",
    "executed_ran",
    "executed_ai",
    "executed_utilization",
    "ratio_ran",
    "ratio_ai",
    "w_ran",
    "w_ai",
    "base",
    "penalty",
    "gen_mass",
    "comp_mass",
)


@dataclass(frozen=True)
class EnvConfig:
    """Environment knobs; defaults match the reported simulation setup."""

    lambda_penalty: float = 0.1
    alpha_eff: float = 0.9
    priority_ran: float = 1.0
    priority_ai: float = 0.5
    weight_policy: str = "proportional_floor"
    w_floor: float = 0.5
    fixed_w_ran: float = 0.5
    a_max: float | None = None  # None -> pool capacity
    episode_steps: int = 100

    def __post_init__(self) -> None:
        if self.lambda_penalty < 0.0:
            raise ValueError(f"lambda_penalty must be >= 0, got {self.lambda_penalty}")
        if not 0.0 < self.alpha_eff <= 1.0:
            raise ValueError(f"alpha_eff must be in (0, 1], got {self.alpha_eff}")
        for name in ("priority_ran", "priority_ai"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.weight_policy not in ("proportional_floor", "fixed"):
            raise ValueError(f"unknown weight_policy {self.weight_policy!r}")
        if not 0.0 <= self.w_floor <= 1.0:
            raise ValueError(f"w_floor must be in [0, 1], got {self.w_floor}")
        if not 0.0 <= self.fixed_w_ran <= 1.0:
            raise ValueError(f"fixed_w_ran must be in [0, 1], got {self.fixed_w_ran}")
        if self.a_max is not None and self.a_max <= 0.0:
            raise ValueError(f"a_max must be > 0, got {self.a_max}")
        if self.episode_steps < 1:
            raise ValueError(f"episode_steps must be >= 1, got {self.episode_steps}")

    def action_bound(self, pool: ResourcePool) -> float:
        return pool.r_max if self.a_max is None else self.a_max


def project_action(state: EnvState, action: AllocAction, pool: ResourcePool) -> Allocation:
    """Apply an allocation delta under the capacity constraint.

    Tentative allocations are clipped at zero; when their sum exceeds the
    pool, RAN keeps its request (capped at the pool) and AI receives only
    the remainder. Executed whole-MIG values are the floors of the
    continuous allocations, RAN first.
    """
    r_max = pool.r_max
    tent_ran = max(0.0, state.prev_r_ran + action.delta_r_ran)
    tent_ai = max(0.0, state.prev_r_ai + action.delta_r_ai)
    r_ran = min(tent_ran, r_max)
    r_ai = min(tent_ai, r_max - r_ran)
    # Guard against rounding pushing the float sum a ulp past capacity.
    for _ in range(4):
        if r_ran + r_ai <= r_max:
            break
        r_ai = math.nextafter(r_ai, 0.0)
    executed_ran = min(int(math.floor(r_ran)), int(math.floor(r_max)))
    executed_ai = min(int(math.floor(r_ai)), int(math.floor(r_max)) - executed_ran)
    return Allocation(r_ran=r_ran, r_ai=r_ai, executed_ran=executed_ran, executed_ai=executed_ai)


def completion_rate(priority: float, allocated: float, demand: float) -> float:
    """Serviced demand: priority-scaled allocation, capped at the demand."""
    if priority < 0.0 or priority > 1.0:
        raise ValueError(f"priority must be in [0, 1], got {priority}")
    if allocated < 0.0 or demand < 0.0:
        raise ValueError("allocated and demand must be >= 0")
    return min(priority * allocated, demand)


def compute_reward(
    c_ran: float,
    d_ran: float,
    c_ai: float,
    d_ai: float,
    weights: Tuple[float, float],
    lambda_penalty: float,
    allocated: float,
    pool: ResourcePool,
) -> RewardBreakdown:
    """Weighted completion score minus the idle-capacity penalty.

    A class with zero demand counts as fully served (ratio 1), which keeps
    the base term in [0, 1] and avoids penalizing a vacuously met demand.
    """
    w_ran, w_ai = weights
    if abs(w_ran + w_ai - 1.0) > 1e-9 or w_ran < 0.0 or w_ai < 0.0:
        raise ValueError(f"weights must be non-negative and sum to 1, got {weights}")
    if lambda_penalty < 0.0:
        raise ValueError(f"lambda_penalty must be >= 0, got {lambda_penalty}")
    r_max = pool.r_max
    if allocated > r_max + 1e-9:
        raise ValueError(f"allocated {allocated} exceeds capacity {r_max}")
    ratio_ran = 1.0 if d_ran == 0.0 else c_ran / d_ran
    ratio_ai = 1.0 if d_ai == 0.0 else c_ai / d_ai
    base = w_ran * ratio_ran + w_ai * ratio_ai
    penalty = lambda_penalty * (1.0 - min(allocated, r_max) / r_max)
    return RewardBreakdown(
        w_ran=w_ran,
        w_ai=w_ai,
        base=base,
        penalty=penalty,
        final=base - penalty,
        penalty_coeff=lambda_penalty,
        allocated=allocated,
    )


def select_weights(
    sample: DemandSample, pool: ResourcePool, config: EnvConfig
) -> Tuple[float, float]:
    """Reward weights for the step under the configured weighting policy.

    The default policy splits proportionally to demand but never lets the
    RAN weight drop below ``w_floor``, encoding RAN precedence. Zero total
    demand yields an even split.
    """
    if config.weight_policy == "fixed":
        return config.fixed_w_ran, 1.0 - config.fixed_w_ran
    total = sample.d_ran + sample.d_ai
    if total == 0.0:
        return 0.5, 0.5
    w_ran = max(config.w_floor, sample.d_ran / total)
    return w_ran, 1.0 - w_ran


def step(
    state: EnvState,
    action: AllocAction,
    sample_next: DemandSample,
    pool: ResourcePool,
    config: EnvConfig,
    t: int = 0,
) -> Tuple[EnvState, RewardBreakdown, StepInfo]:
    """Advance the system one timestep.

    Projects the action, scores the current demands against the resulting
    allocation, and rolls the state forward onto ``sample_next``. The action
    deltas are clipped to the configured bound before projection.
    """
    r_max = pool.r_max
    if state.prev_r_ran + state.prev_r_ai > r_max + 1e-9:
        raise ValueError("state allocations exceed pool capacity")
    bound = config.action_bound(pool)
    clipped = AllocAction(
        delta_r_ran=float(np.clip(action.delta_r_ran, -bound, bound)),
        delta_r_ai=float(np.clip(action.delta_r_ai, -bound, bound)),
    )
    alloc = project_action(state, clipped, pool)
    c_ran = completion_rate(config.priority_ran, alloc.r_ran, state.d_ran)
    c_ai = completion_rate(config.priority_ai, alloc.r_ai, state.d_ai)
    current = DemandSample(
        t=t, d_ran=state.d_ran, d_ai=state.d_ai, active_users=int(state.d_ran + state.d_ai)
    )
    weights = select_weights(current, pool, config)
    breakdown = compute_reward(
        c_ran,
        state.d_ran,
        c_ai,
        state.d_ai,
        weights,
        config.lambda_penalty,
        alloc.r_ran + alloc.r_ai,
        pool,
    )
    gen_mass, comp_mass = workload_masses(
        current,
        r_max,
        alpha_eff=config.alpha_eff,
        priority_ran=config.priority_ran,
        priority_ai=config.priority_ai,
    )
    next_state = EnvState(
        d_ran=sample_next.d_ran,
        d_ai=sample_next.d_ai,
        prev_r_ran=alloc.r_ran,
        prev_r_ai=alloc.r_ai,
    )
    info = StepInfo(
        t=t,
        d_ran=state.d_ran,
        d_ai=state.d_ai,
        r_ran=alloc.r_ran,
        r_ai=alloc.r_ai,
        c_ran=c_ran,
        c_ai=c_ai,
        utilization=(alloc.r_ran + alloc.r_ai) / r_max,
        reward=breakdown.final,
        executed_ran=alloc.executed_ran,
        executed_ai=alloc.executed_ai,
        executed_utilization=(alloc.executed_ran + alloc.executed_ai) / r_max,
        ratio_ran=1.0 if state.d_ran == 0.0 else c_ran / state.d_ran,
        ratio_ai=1.0 if state.d_ai == 0.0 else c_ai / state.d_ai,
        w_ran=weights[0],
        w_ai=weights[1],
        base=breakdown.base,
        penalty=breakdown.penalty,
        r_max=r_max,
        gen_mass=gen_mass,
        comp_mass=comp_mass,
    )
    return next_state, breakdown, info


def _episode_rng(seed: int, episode: int) -> np.random.Generator:
    return np.random.default_rng([seed, episode])


def episode_reset(
    profile: ScenarioProfile, pool: ResourcePool, episode: int = 0
) -> EnvState:
    """Initial state for an episode: zero allocations, fresh t=0 demands."""
    rng = _episode_rng(profile.seed, episode)
    first = sample_demand(profile, 0, rng)
    return EnvState(d_ran=first.d_ran, d_ai=first.d_ai, prev_r_ran=0.0, prev_r_ai=0.0)


class ResourceAllocEnv:
    """Sequential episode wrapper around the pure step operations.

    Owns the demand stream (seeded per episode from the profile seed) and
    refuses to step past the configured episode length.
    """

    def __init__(
        self,
        profile: ScenarioProfile,
        pool: ResourcePool | None = None,
        config: EnvConfig | None = None,
    ) -> None:
        self.profile = profile
        self.pool = pool if pool is not None else ResourcePool()
        self.config = config if config is not None else EnvConfig()
        self.episode_steps = self.config.episode_steps
        self._rng: np.random.Generator | None = None
        self._state: EnvState | None = None
        self._sample: DemandSample | None = None
        self._t = 0
        self._terminated = True

    @property
    def r_max(self) -> float:
        return self.pool.r_max

    @property
    def t(self) -> int:
        return self._t

    @property
    def terminated(self) -> bool:
        return self._terminated

    @property
    def state(self) -> EnvState:
        if self._state is None:
            raise RuntimeError("environment not reset")
        return self._state

    @property
    def current_sample(self) -> DemandSample:
        """The live demand view for the step about to execute."""
        if self._sample is None:
            raise RuntimeError("environment not reset")
        return self._sample

    def reset(self, episode: int = 0) -> EnvState:
        self._rng = _episode_rng(self.profile.seed, episode)
        self._sample = sample_demand(self.profile, 0, self._rng)
        self._state = EnvState(
            d_ran=self._sample.d_ran,
            d_ai=self._sample.d_ai,
            prev_r_ran=0.0,
            prev_r_ai=0.0,
        )
        self._t = 0
        self._terminated = False
        return self._state

    def step(self, action: AllocAction) -> Tuple[EnvState, RewardBreakdown, StepInfo]:
        if self._terminated or self._state is None or self._rng is None:
            raise EpisodeTerminatedError(
                "episode is not active; call reset() before stepping"
            )
        sample_next = sample_demand(self.profile, self._t + 1, self._rng)
        next_state, breakdown, info = step(
            self._state, action, sample_next, self.pool, self.config, t=self._t
        )
        self._state = next_state
        self._sample = sample_next
        self._t += 1
        if self._t >= self.episode_steps:
            self._terminated = True
        return next_state, breakdown, info
