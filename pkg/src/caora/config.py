"""Run configuration: one YAML file drives every command.

A single seed at the run level feeds the scenario, the learner, and the
evaluation episodes, so any command is reproducible from its resolved
config snapshot alone. Unset fields fall back to the reported simulation
defaults. Environment variables in the ``CAORA_`` namespace override file
values; command-line flags override both.
"""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Dict, Mapping

import yaml

from .orchestrator import PolicyChoice
from .resource_env import EnvConfig, ResourcePool
from .sac_agent import SacConfig
from .workload import ScenarioMode, ScenarioProfile

EXPERIMENTS = ("offpeak_balance", "peak_injection", "completion_ratio")

#: Recognized environment overrides and the run-level field each one sets.
ENV_OVERRIDES = {
    "CAORA_SEED": ("seed", int),
    "CAORA_EPISODES": ("episodes", int),
    "CAORA_EVAL_EPISODES": ("eval_episodes", int),
    "CAORA_OUT": ("out_dir", str),
    "CAORA_POLICY": ("policy_kind", str),
    "CAORA_RAN_SHARE": ("ran_share", float),
    "CAORA_EXPERIMENT": ("experiment", str),
}


class ConfigError(ValueError):
    """Configuration problem, annotated with the offending field."""


@dataclass(frozen=True)
class RunConfig:
    """Everything one command needs, resolved and validated."""

    scenario: ScenarioProfile = field(default_factory=ScenarioProfile)
    pool: ResourcePool = field(default_factory=ResourcePool)
    env: EnvConfig = field(default_factory=EnvConfig)
    sac: SacConfig = field(default_factory=SacConfig)
    episodes: int = 1000
    eval_episodes: int = 50
    policy_kind: str = "sac"
    ran_share: float = 5.0 / 7.0
    experiment: str = "offpeak_balance"
    out_dir: str = "runs/latest"
    seed: int = 7

    def __post_init__(self) -> None:
        if self.episodes < 1:
            raise ConfigError(f"run.episodes must be >= 1, got {self.episodes}")
        if self.eval_episodes < 1:
            raise ConfigError(f"run.eval_episodes must be >= 1, got {self.eval_episodes}")
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(
                f"run.experiment must be one of {EXPERIMENTS}, got {self.experiment!r}"
            )
        try:
            PolicyChoice(self.policy_kind, self.ran_share)
        except ValueError as exc:
            raise ConfigError(f"run.policy: {exc}") from exc

    @property
    def policy(self) -> PolicyChoice:
        return PolicyChoice(self.policy_kind, self.ran_share)

    def seeded(self) -> "RunConfig":
        """Propagate the run seed into the scenario and the learner."""
        return replace(
            self,
            scenario=replace(self.scenario, seed=self.seed),
            sac=replace(self.sac, seed=self.seed),
        )

    def to_dict(self) -> Dict[str, Any]:
        scenario = asdict(self.scenario)
        scenario["mode"] = self.scenario.mode.value
        return {
            "scenario": scenario,
            "pool": asdict(self.pool),
            "env": asdict(self.env),
            "sac": asdict(self.sac),
            "run": {
                "episodes": self.episodes,
                "eval_episodes": self.eval_episodes,
                "policy": self.policy_kind,
                "ran_share": self.ran_share,
                "experiment": self.experiment,
                "out_dir": self.out_dir,
                "seed": self.seed,
            },
        }

    def write_yaml(self, path: str) -> None:
        with open(path, "w") as fh:
            yaml.safe_dump(self.to_dict(), fh, sort_keys=True)


def _build_section(name: str, cls, raw: Mapping[str, Any], known: Dict[str, Any]):
    allowed = {f.name for f in fields(cls)} - set(known)
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(f"{name}: unknown fields {sorted(unknown)}")
    kwargs = dict(known)
    for key in allowed & set(raw):
        value = raw[key]
        if isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{name}: {exc}") from exc


def config_from_dict(data: Mapping[str, Any] | None) -> RunConfig:
    """Build a validated RunConfig from nested plain data (e.g. parsed YAML)."""
    data = dict(data or {})
    unknown = set(data) - {"scenario", "pool", "env", "sac", "run"}
    if unknown:
        raise ConfigError(f"unknown top-level sections {sorted(unknown)}")
    scenario_raw = dict(data.get("scenario") or {})
    mode_name = scenario_raw.pop("mode", "off_peak")
    try:
        mode = ScenarioMode(mode_name)
    except ValueError as exc:
        raise ConfigError(
            f"scenario.mode must be one of {[m.value for m in ScenarioMode]}, got {mode_name!r}"
        ) from exc
    scenario_raw.pop("seed", None)  # the run seed is authoritative
    scenario = _build_section("scenario", ScenarioProfile, scenario_raw, {"mode": mode})
    pool = _build_section("pool", ResourcePool, dict(data.get("pool") or {}), {})
    env = _build_section("env", EnvConfig, dict(data.get("env") or {}), {})
    sac_raw = dict(data.get("sac") or {})
    sac_raw.pop("seed", None)
    sac = _build_section("sac", SacConfig, sac_raw, {})
    run_raw = dict(data.get("run") or {})
    run_keys = {
        "episodes",
        "eval_episodes",
        "policy",
        "ran_share",
        "experiment",
        "out_dir",
        "seed",
    }
    unknown = set(run_raw) - run_keys
    if unknown:
        raise ConfigError(f"run: unknown fields {sorted(unknown)}")
    try:
        cfg = RunConfig(
            scenario=scenario,
            pool=pool,
            env=env,
            sac=sac,
            episodes=int(run_raw.get("episodes", 1000)),
            eval_episodes=int(run_raw.get("eval_episodes", 50)),
            policy_kind=str(run_raw.get("policy", "sac")),
            ran_share=float(run_raw.get("ran_share", 5.0 / 7.0)),
            experiment=str(run_raw.get("experiment", "offpeak_balance")),
            out_dir=str(run_raw.get("out_dir", "runs/latest")),
            seed=int(run_raw.get("seed", 7)),
        )
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"run: {exc}") from exc
    return cfg.seeded()


def load_config(path: str) -> RunConfig:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file {path} is not valid YAML: {exc}") from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must contain a mapping at the top level")
    return config_from_dict(data)


def apply_env_overrides(
    cfg: RunConfig, environ: Mapping[str, str] | None = None
) -> RunConfig:
    """Apply ``CAORA_*`` variables on top of a loaded config."""
    environ = environ if environ is not None else os.environ
    updates: Dict[str, Any] = {}
    for var, (field_name, cast) in ENV_OVERRIDES.items():
        if var in environ:
            try:
                updates[field_name] = cast(environ[var])
            except ValueError as exc:
                raise ConfigError(f"{var}={environ[var]!r}: {exc}") from exc
    if not updates:
        return cfg
    return replace(cfg, **updates).seeded()


DEFAULT_CONFIG_TEMPLATE = """\
# caora run configuration. Every value shown is the default; delete anything
# you do not want to override. The run seed drives demand sampling, network
# initialization, and exploration noise, so a fixed seed reproduces a run
# byte for byte.

scenario:
  mode: off_peak            # off_peak | peak_ran
  ran_demand_range: [2, 5]  # baseline RAN demand, whole MIGs, inclusive
  ai_demand_range: [2, 5]   # AI demand range, whole MIGs, inclusive
  peak_ran_range: [6, 7]    # congested RAN demand once the peak begins
  peak_onset_step: null     # peak start in peak_ran mode; null means peak from
                            # step 0 (the peak_injection experiment uses 50)

pool:
  r_base: 7.0               # cluster capacity in MIG slices
  user_scaling: identity    # capacity scaling hook; identity keeps it fixed

env:
  lambda_penalty: 0.1       # idle-capacity penalty coefficient
  alpha_eff: 0.9            # system efficiency coefficient
  priority_ran: 1.0
  priority_ai: 0.5
  weight_policy: proportional_floor   # proportional_floor | fixed
  w_floor: 0.5              # lower bound on the RAN reward weight
  fixed_w_ran: 0.5          # RAN weight when weight_policy is "fixed"
  a_max: null               # allocation-delta bound; null means pool capacity
  episode_steps: 100

sac:
  lr_actor: 0.0003
  lr_critic: 0.0003
  gamma: 0.99
  temperature: 0.2
  batch_size: 64
  buffer_capacity: 100000
  tau: 0.005
  grad_clip: 10.0
  hidden_size: 128
  auto_entropy: false       # keep the temperature fixed by default
  lr_temperature: 0.0003
  warmup_steps: 1000        # uniform-random exploration steps before the policy acts

run:
  episodes: 1000            # training episodes
  eval_episodes: 50
  policy: sac               # sac | ran_only | static_split | greedy_oracle
  ran_share: 0.7142857142857143   # static_split parameter
  experiment: offpeak_balance     # offpeak_balance | peak_injection | completion_ratio
  out_dir: runs/latest
  seed: 7
"""


def write_default_config(path: str) -> None:
    with open(path, "w") as fh:
        fh.write(DEFAULT_CONFIG_TEMPLATE)
