"""Shared RAN/AI compute orchestration: simulator, learner, telemetry, CLI."""

from .workload import (
    DEFAULT_PRIORITIES,
    DemandSample,
    ScenarioMode,
    ScenarioProfile,
    Task,
    TaskKind,
    accumulate_workload,
    completion_probability,
    contention,
    make_task,
    sample_demand,
    task_demand,
    total_demand,
    workload_masses,
)
from .resource_env import (
    AllocAction,
    Allocation,
    EnvConfig,
    EnvState,
    EpisodeTerminatedError,
    ResourceAllocEnv,
    ResourcePool,
    RewardBreakdown,
    StepInfo,
    completion_rate,
    compute_reward,
    episode_reset,
    project_action,
    select_weights,
    step,
)
from .sac_agent import (
    CheckpointError,
    EpisodeMetrics,
    SacAgent,
    SacConfig,
    TrainingDivergedError,
    TrainResult,
    train,
)
from .y1_telemetry import (
    ConsumerRegistration,
    DeliveryAck,
    DeliveryMode,
    TelemetryBus,
    TransportError,
    UnregisteredConsumerError,
    Y1ParseError,
    Y1Report,
    Y1ValidationError,
    build_report,
    demand_indication,
    parse_report,
    serialize_report,
)
from .orchestrator import (
    ExperimentResult,
    PolicyChoice,
    compare_policies,
    greedy_oracle_policy,
    inject_peak,
    run_experiment,
)

__version__ = "0.1.0"
