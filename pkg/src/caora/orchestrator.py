"""End-to-end experiment control: policies, runs, and comparisons.

The orchestrator consumes the telemetry stream, asks a policy (the trained
learner or one of the fixed baselines) for an allocation each step, drives
the environment, and collects a complete, recomputable record of the run.
Peak-injection experiments reuse the same loop with a scenario whose RAN
demand switches to the congested range at a chosen onset step.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .resource_env import (
    AllocAction,
    Allocation,
    EnvConfig,
    ResourceAllocEnv,
    ResourcePool,
    STEP_CSV_COLUMNS,
)
from .sac_agent import SacAgent
from .workload import ScenarioMode, ScenarioProfile
from .y1_telemetry import (
    ConsumerRegistration,
    TelemetryBus,
    Y1Report,
    build_report,
    demand_indication,
)

POLICY_KINDS = ("sac", "ran_only", "static_split", "greedy_oracle")


@dataclass(frozen=True)
class PolicyChoice:
    """Which allocation policy drives an experiment."""

    kind: str
    ran_share: float = 5.0 / 7.0  # static split covering the top off-peak RAN demand

    def __post_init__(self) -> None:
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy {self.kind!r}; known: {POLICY_KINDS}")
        if not 0.0 <= self.ran_share <= 1.0:
            raise ValueError(f"ran_share must be in [0, 1], got {self.ran_share}")

    @property
    def label(self) -> str:
        if self.kind == "static_split":
            return f"static_split_{self.ran_share:.3f}"
        return self.kind


def greedy_oracle_policy(report: Y1Report, pool: ResourcePool) -> Allocation:
    """Demand-clairvoyant upper bound: serve RAN first, give AI the rest."""
    r_max = pool.r_max
    r_ran = min(report.d_ran, r_max)
    r_ai = min(report.d_ai, r_max - r_ran)
    return Allocation(
        r_ran=r_ran,
        r_ai=r_ai,
        executed_ran=int(math.floor(r_ran)),
        executed_ai=min(int(math.floor(r_ai)), int(math.floor(r_max)) - int(math.floor(r_ran))),
    )


def _baseline_target(
    policy: PolicyChoice, report: Y1Report, pool: ResourcePool
) -> Tuple[float, float]:
    if policy.kind == "ran_only":
        return min(report.d_ran, pool.r_max), 0.0
    if policy.kind == "static_split":
        return policy.ran_share * pool.r_max, (1.0 - policy.ran_share) * pool.r_max
    if policy.kind == "greedy_oracle":
        alloc = greedy_oracle_policy(report, pool)
        return alloc.r_ran, alloc.r_ai
    raise ValueError(f"policy {policy.kind!r} has no fixed target rule")


@dataclass(frozen=True)
class StepRecord:
    """Flat per-step row of an experiment; mirrors the step CSV schema."""

    episode: int
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
    gen_mass: float
    comp_mass: float


@dataclass(frozen=True)
class EpisodeAggregate:
    episode: int
    mean_reward: float
    ratio_ran: float
    ratio_ai: float
    mean_utilization: float
    mean_executed_utilization: float


@dataclass
class ExperimentResult:
    """Everything one experiment produced, self-consistent by construction."""

    policy: str
    profile: ScenarioProfile
    seed: int
    episodes: int
    steps: List[StepRecord] = field(default_factory=list)
    config_snapshot: Dict = field(default_factory=dict)

    def episode_aggregates(self) -> List[EpisodeAggregate]:
        """Recompute per-episode aggregates from the raw step records."""
        out: List[EpisodeAggregate] = []
        for episode in sorted({s.episode for s in self.steps}):
            rows = [s for s in self.steps if s.episode == episode]
            out.append(
                EpisodeAggregate(
                    episode=episode,
                    mean_reward=float(np.mean([r.reward for r in rows])),
                    ratio_ran=float(np.mean([r.ratio_ran for r in rows])),
                    ratio_ai=float(np.mean([r.ratio_ai for r in rows])),
                    mean_utilization=float(np.mean([r.utilization for r in rows])),
                    mean_executed_utilization=float(
                        np.mean([r.executed_utilization for r in rows])
                    ),
                )
            )
        return out

    def summary(self) -> Dict:
        rows = self.steps
        return {
            "policy": self.policy,
            "seed": self.seed,
            "episodes": self.episodes,
            "steps": len(rows),
            "mean_reward": float(np.mean([r.reward for r in rows])),
            "ratio_ran": float(np.mean([r.ratio_ran for r in rows])),
            "ratio_ai": float(np.mean([r.ratio_ai for r in rows])),
            "mean_utilization": float(np.mean([r.utilization for r in rows])),
            "mean_executed_utilization": float(
                np.mean([r.executed_utilization for r in rows])
            ),
            "config": self.config_snapshot,
        }

    def write_step_csv(self, path: str) -> None:
        columns = ("episode",) + STEP_CSV_COLUMNS
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(columns)
            for s in self.steps:
                writer.writerow([_fmt(getattr(s, c)) for c in columns])

    def write_episode_csv(self, path: str) -> None:
        aggs = self.episode_aggregates()
        columns = (
            "episode",
            "mean_reward",
            "ratio_ran",
            "ratio_ai",
            "mean_utilization",
            "mean_executed_utilization",
        )
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(columns)
            for a in aggs:
                writer.writerow([_fmt(getattr(a, c)) for c in columns])

    def write_summary_json(self, path: str) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _profile_snapshot(profile: ScenarioProfile) -> Dict:
    snap = asdict(profile)
    snap["mode"] = profile.mode.value
    return snap


def inject_peak(
    profile: ScenarioProfile, onset_step: int = 50, episode_steps: int = 100
) -> ScenarioProfile:
    """Derive a congested scenario: RAN demand jumps to the peak range at onset."""
    if not 0 <= onset_step < episode_steps:
        raise ValueError(
            f"onset_step must lie within the episode [0, {episode_steps}), got {onset_step}"
        )
    return replace(profile, mode=ScenarioMode.PEAK_RAN, peak_onset_step=onset_step)


def run_experiment(
    profile: ScenarioProfile,
    policy: PolicyChoice,
    episodes: int,
    agent: Optional[SacAgent] = None,
    pool: ResourcePool | None = None,
    env_config: EnvConfig | None = None,
    bus: TelemetryBus | None = None,
    registrations: Sequence[ConsumerRegistration] = (),
    deterministic: bool = True,
    episode_offset: int = 0,
) -> ExperimentResult:
    """Run a policy for a number of episodes and record everything.

    Each step the monitoring side produces the current KPI view, the policy
    turns it into an allocation request, the environment applies it, and the
    completed step's report goes out to every registered consumer. Results
    are deterministic given (profile.seed, policy, episode_offset).
    """
    if episodes < 1:
        raise ValueError(f"episodes must be >= 1, got {episodes}")
    if policy.kind == "sac" and agent is None:
        raise ValueError("the sac policy requires a trained agent")
    pool = pool if pool is not None else ResourcePool()
    env_config = env_config if env_config is not None else EnvConfig()
    env = ResourceAllocEnv(profile, pool, env_config)
    own_bus = bus is None and len(registrations) > 0
    if own_bus:
        bus = TelemetryBus()
    if bus is not None:
        for reg in registrations:
            bus.register(reg)
    result = ExperimentResult(
        policy=policy.label,
        profile=profile,
        seed=profile.seed,
        episodes=episodes,
        config_snapshot={
            "profile": _profile_snapshot(profile),
            "pool": asdict(pool),
            "env": asdict(env_config),
            "policy": {"kind": policy.kind, "ran_share": policy.ran_share},
            "episode_offset": episode_offset,
        },
    )
    try:
        for episode in range(episodes):
            state = env.reset(episode=episode_offset + episode)
            trailing_throughput = 0.0
            for _ in range(env.episode_steps):
                kpi_sample = env.current_sample
                indication = demand_indication(
                    kpi_sample, env.r_max, trailing_throughput
                )
                if policy.kind == "sac":
                    action_env = agent.act(
                        state.as_vector(env.r_max), deterministic=deterministic
                    )
                    action = AllocAction(float(action_env[0]), float(action_env[1]))
                else:
                    target_ran, target_ai = _baseline_target(policy, indication, pool)
                    action = AllocAction(
                        target_ran - state.prev_r_ran, target_ai - state.prev_r_ai
                    )
                state, _, info = env.step(action)
                trailing_throughput = info.c_ran + info.c_ai
                if bus is not None:
                    report = build_report(info, kpi_sample)
                    for reg in registrations:
                        bus.publish(report, reg)
                result.steps.append(
                    StepRecord(
                        episode=episode,
                        t=info.t,
                        d_ran=info.d_ran,
                        d_ai=info.d_ai,
                        r_ran=info.r_ran,
                        r_ai=info.r_ai,
                        c_ran=info.c_ran,
                        c_ai=info.c_ai,
                        utilization=info.utilization,
                        reward=info.reward,
                        executed_ran=info.executed_ran,
                        executed_ai=info.executed_ai,
                        executed_utilization=info.executed_utilization,
                        ratio_ran=info.ratio_ran,
                        ratio_ai=info.ratio_ai,
                        w_ran=info.w_ran,
                        w_ai=info.w_ai,
                        base=info.base,
                        penalty=info.penalty,
                        gen_mass=info.gen_mass,
                        comp_mass=info.comp_mass,
                    )
                )
    finally:
        if own_bus:
            bus.close()
    return result


COMPARISON_COLUMNS = (
    "policy",
    "mean_utilization",
    "mean_executed_utilization",
    "ratio_ran",
    "ratio_ai",
    "mean_reward",
)


def compare_policies(results: Sequence[ExperimentResult]) -> List[Dict]:
    """Aligned per-policy summary rows for results sharing a scenario and seed."""
    if len(results) < 2:
        raise ValueError("need at least two experiment results to compare")
    head = results[0]
    for other in results[1:]:
        if other.profile != head.profile or other.seed != head.seed:
            raise ValueError(
                "experiment results were produced under different scenarios or seeds"
            )
    rows = []
    for res in results:
        s = res.summary()
        rows.append({c: s[c] if c != "policy" else res.policy for c in COMPARISON_COLUMNS})
    return rows


def write_comparison_csv(rows: Sequence[Dict], path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(COMPARISON_COLUMNS)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in COMPARISON_COLUMNS])
