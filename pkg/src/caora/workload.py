"""Demand generation and workload accounting for the shared MIG cluster.

RAN and AI workloads compete for a pool of MIG slices. Per-timestep demand
for each class is drawn as an integer number of slices from a scenario range;
congested scenarios switch the RAN range to a peak interval at a configurable
onset step. The module also provides the bookkeeping terms used to track how
generated work, completed work, and contention balance over a run.

Everything here is a pure function of its inputs plus an explicit
``numpy.random.Generator``, so traces are bit-reproducible under a fixed seed
and safe to produce from any thread.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence, Tuple

import numpy as np


class TaskKind(Enum):
    """Workload classes, ordered by scheduling precedence."""

    RAN_REALTIME = "ran_realtime"
    RAN_NONREALTIME = "ran_nonrealtime"
    AI = "ai"


#: Default priority level per task kind. Real-time RAN work outranks
#: non-real-time RAN work, which outranks opportunistic AI work.
DEFAULT_PRIORITIES: dict[TaskKind, float] = {
    TaskKind.RAN_REALTIME: 1.0,
    TaskKind.RAN_NONREALTIME: 0.7,
    TaskKind.AI: 0.5,
}


@dataclass(frozen=True)
class Task:
    """One unit of RAN or AI work.

    Attributes:
        kind: Workload class of the task.
        resources: Per-resource-type requirements, in MIG slices. All
            entries must be non-negative.
        priority: Priority level in [0, 1].
    """

    kind: TaskKind
    resources: Tuple[float, ...]
    priority: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.priority <= 1.0:
            raise ValueError(f"task priority must be in [0, 1], got {self.priority}")
        if any(not math.isfinite(r) or r < 0.0 for r in self.resources):
            raise ValueError(f"task resources must be finite and >= 0, got {self.resources}")


def make_task(kind: TaskKind, resources: Sequence[float], priority: float | None = None) -> Task:
    """Build a task, defaulting the priority from its kind."""
    if priority is None:
        priority = DEFAULT_PRIORITIES[kind]
    return Task(kind=kind, resources=tuple(float(r) for r in resources), priority=priority)


class ScenarioMode(Enum):
    OFF_PEAK = "off_peak"
    PEAK_RAN = "peak_ran"


@dataclass(frozen=True)
class ScenarioProfile:
    """Demand scenario: which integer MIG ranges are active at each step.

    ``ran_demand_range`` is the baseline (off-peak) RAN range; in PEAK_RAN
    mode the RAN draw switches to ``peak_ran_range`` once ``t`` reaches
    ``peak_onset_step`` (a missing onset means the whole episode is peak).
    AI demand always uses ``ai_demand_range``.
    """

    mode: ScenarioMode = ScenarioMode.OFF_PEAK
    ran_demand_range: Tuple[int, int] = (2, 5)
    ai_demand_range: Tuple[int, int] = (2, 5)
    peak_ran_range: Tuple[int, int] = (6, 7)
    peak_onset_step: int | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        for name, rng in (
            ("ran_demand_range", self.ran_demand_range),
            ("ai_demand_range", self.ai_demand_range),
            ("peak_ran_range", self.peak_ran_range),
        ):
            lo, hi = rng
            if lo > hi:
                raise ValueError(f"{name} is inverted: [{lo}, {hi}]")
            if lo < 0:
                raise ValueError(f"{name} has a negative bound: [{lo}, {hi}]")
        if self.peak_onset_step is not None and self.peak_onset_step < 0:
            raise ValueError(f"peak_onset_step must be >= 0, got {self.peak_onset_step}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")


@dataclass(frozen=True)
class DemandSample:
    """Realized demand at one timestep, in MIG slices."""

    t: int
    d_ran: float
    d_ai: float
    active_users: int


def sample_demand(profile: ScenarioProfile, t: int, rng: np.random.Generator) -> DemandSample:
    """Draw the demand pair for step ``t`` under the given scenario.

    Demands are integers drawn uniformly (inclusive) from the range active
    at step ``t``. The RAN draw happens before the AI draw, so the result is
    deterministic given (seed, t, call order). The fluctuating user count is
    represented by the demanded MIG total.

    Args:
        profile: Scenario configuration (validated on construction).
        t: Timestep, must be >= 0.
        rng: Random generator advanced by exactly two integer draws.

    Returns:
        The sampled demand for step ``t``.
    """
    if t < 0:
        raise ValueError(f"timestep must be >= 0, got {t}")
    ran_range = profile.ran_demand_range
    if profile.mode is ScenarioMode.PEAK_RAN:
        onset = 0 if profile.peak_onset_step is None else profile.peak_onset_step
        if t >= onset:
            ran_range = profile.peak_ran_range
    d_ran = int(rng.integers(ran_range[0], ran_range[1] + 1))
    d_ai = int(rng.integers(profile.ai_demand_range[0], profile.ai_demand_range[1] + 1))
    return DemandSample(t=t, d_ran=float(d_ran), d_ai=float(d_ai), active_users=d_ran + d_ai)


def task_demand(task: Task) -> float:
    """Total resource requirement of one task: the L1 norm of its vector."""
    return float(sum(task.resources))


def total_demand(tasks: Iterable[Task]) -> float:
    """Aggregate resource requirement over a task population."""
    return float(sum(task_demand(task) for task in tasks))


def contention(total: float, r_max: float) -> float:
    """Demand pressure on the pool: total demand divided by maximum resources."""
    if r_max <= 0.0:
        raise ValueError(f"r_max must be > 0, got {r_max}")
    if total < 0.0:
        raise ValueError(f"total demand must be >= 0, got {total}")
    return total / r_max


def completion_probability(task: Task, alpha_eff: float) -> float:
    """Chance the task completes this step: efficiency times priority, in [0, 1]."""
    if not 0.0 < alpha_eff <= 1.0:
        raise ValueError(f"alpha_eff must be in (0, 1], got {alpha_eff}")
    return min(1.0, max(0.0, alpha_eff * task.priority))


def workload_masses(
    sample: DemandSample,
    r_max: float,
    alpha_eff: float = 0.9,
    priority_ran: float = 1.0,
    priority_ai: float = 0.5,
) -> Tuple[float, float]:
    """Per-step (generation, completion) mass for the workload balance ledger.

    Generation mass is the realized demanded MIG total; completion mass
    weights each class's demand by its completion probability and by the
    step's contention ratio.
    """
    total = sample.d_ran + sample.d_ai
    c = contention(total, r_max)
    gen = total
    comp = alpha_eff * priority_ran * sample.d_ran * c + alpha_eff * priority_ai * sample.d_ai * c
    return gen, comp


def accumulate_workload(history: Sequence[Tuple[float, float]]) -> float:
    """Fold a (generation, completion) trace into the outstanding-work total.

    Unit step width; the raw value is reported without clamping so a
    completion surplus shows up as a negative balance. Diagnostic only.
    """
    if len(history) == 0:
        raise ValueError("workload history must be non-empty")
    return float(sum(gen - comp for gen, comp in history))
