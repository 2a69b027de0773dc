"""Command-line entry point.

Subcommands:
    init-config   write a fully-commented default configuration file
    train         train the learner and save checkpoint + metrics
    eval          run a named experiment with a policy (and checkpoint)
    compare       run several policies on the same scenario and tabulate

Flag values override ``CAORA_*`` environment variables, which override the
config file, which overrides the built-in defaults. Exit status is 0 on
success, 2 for configuration/usage problems, 1 for runtime failures.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from dataclasses import replace
from typing import List, Optional, Sequence

from .config import (
    EXPERIMENTS,
    ConfigError,
    RunConfig,
    apply_env_overrides,
    config_from_dict,
    load_config,
    write_default_config,
)
from .orchestrator import (
    ExperimentResult,
    PolicyChoice,
    compare_policies,
    inject_peak,
    run_experiment,
    write_comparison_csv,
)
from .sac_agent import CheckpointError, SacAgent, TrainingDivergedError, train
from .workload import ScenarioMode
from .y1_telemetry import ConsumerRegistration, TelemetryBus, build_report

EVAL_EPISODE_OFFSET = 1_000_000  # evaluation draws from fresh demand streams

TRAINING_CSV_COLUMNS = (
    "episode",
    "mean_reward",
    "ratio_ran",
    "ratio_ai",
    "mean_utilization",
    "mean_executed_utilization",
    "critic_loss",
    "actor_loss",
)


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_policy(text: str) -> PolicyChoice:
    if ":" in text:
        kind, _, share = text.partition(":")
        try:
            return PolicyChoice(kind, float(share))
        except ValueError as exc:
            raise ConfigError(f"bad policy spec {text!r}: {exc}") from exc
    try:
        return PolicyChoice(text)
    except ValueError as exc:
        raise ConfigError(f"bad policy spec {text!r}: {exc}") from exc


def _resolve_config(args: argparse.Namespace) -> RunConfig:
    path = args.config or os.environ.get("CAORA_CONFIG")
    cfg = load_config(path) if path else config_from_dict({})
    cfg = apply_env_overrides(cfg)
    updates = {}
    if getattr(args, "seed", None) is not None:
        updates["seed"] = args.seed
    if getattr(args, "episodes", None) is not None:
        updates["episodes"] = args.episodes
    if getattr(args, "eval_episodes", None) is not None:
        updates["eval_episodes"] = args.eval_episodes
    if getattr(args, "out", None) is not None:
        updates["out_dir"] = args.out
    if getattr(args, "policy", None) is not None:
        choice = _parse_policy(args.policy)
        updates["policy_kind"] = choice.kind
        updates["ran_share"] = choice.ran_share
    if getattr(args, "experiment", None) is not None:
        updates["experiment"] = args.experiment
    if updates:
        cfg = replace(cfg, **updates).seeded()
    return cfg


def _ensure_out_dir(cfg: RunConfig) -> str:
    os.makedirs(cfg.out_dir, exist_ok=True)
    return cfg.out_dir


def _experiment_profile(cfg: RunConfig):
    """Scenario used by the named experiment, derived from the configured one."""
    base = replace(cfg.scenario, mode=ScenarioMode.OFF_PEAK, peak_onset_step=None)
    if cfg.experiment == "peak_injection":
        onset = cfg.scenario.peak_onset_step if cfg.scenario.peak_onset_step is not None else 50
        return inject_peak(base, onset_step=onset, episode_steps=cfg.env.episode_steps), onset
    return base, None


def _load_agent_for(cfg: RunConfig, checkpoint: Optional[str]) -> Optional[SacAgent]:
    if cfg.policy_kind != "sac":
        return None
    if not checkpoint:
        raise ConfigError("the sac policy requires --checkpoint")
    agent = SacAgent.load(checkpoint)
    expected_a_max = cfg.env.action_bound(cfg.pool)
    if (
        agent.state_dim != 4
        or agent.action_dim != 2
        or abs(agent.a_max - expected_a_max) > 1e-9
    ):
        raise CheckpointError(
            f"checkpoint dimensions (state={agent.state_dim}, action={agent.action_dim}, "
            f"a_max={agent.a_max}) do not match the configured environment "
            f"(state=4, action=2, a_max={expected_a_max})"
        )
    return agent


def _counting_consumer(bus: TelemetryBus, consumer_id: str) -> ConsumerRegistration:
    reg = ConsumerRegistration(consumer_id)
    counter = {"n": 0}

    def consume(_report):
        counter["n"] += 1

    bus.register(reg, callback=consume)
    return reg


def cmd_init_config(args: argparse.Namespace) -> int:
    write_default_config(args.out)
    print(f"wrote default config to {args.out}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    out = _ensure_out_dir(cfg)
    cfg.write_yaml(os.path.join(out, "resolved_config.yaml"))
    bus = TelemetryBus()
    reg = _counting_consumer(bus, "orchestrator")

    def observer(info, sample):
        bus.publish(build_report(info, sample), reg)

    every = max(1, cfg.episodes // 10)

    def progress(m):
        if (m.episode + 1) % every == 0 or m.episode == 0:
            print(
                f"episode {m.episode + 1}/{cfg.episodes}  "
                f"reward={m.mean_reward:.3f}  ran={m.ratio_ran:.3f}  "
                f"ai={m.ratio_ai:.3f}  util={m.mean_utilization:.3f}"
            )

    result = train(
        cfg.scenario,
        pool=cfg.pool,
        env_config=cfg.env,
        sac_config=cfg.sac,
        episodes=cfg.episodes,
        step_observer=observer,
        progress=progress,
    )
    ckpt_path = os.path.join(out, "checkpoint.caora")
    result.agent.save(ckpt_path)
    csv_path = os.path.join(out, "training_metrics.csv")
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRAINING_CSV_COLUMNS)
        for m in result.metrics:
            writer.writerow([_fmt(getattr(m, c)) for c in TRAINING_CSV_COLUMNS])
    from .figures import save_training_curves

    fig_path = save_training_curves(result.metrics, os.path.join(out, "training_curves.png"))
    print(f"checkpoint: {ckpt_path}")
    print(f"metrics:    {csv_path}")
    print(f"figure:     {fig_path}")
    return 0


def _run_named_experiment(
    cfg: RunConfig, agent: Optional[SacAgent]
) -> tuple[ExperimentResult, Optional[int]]:
    profile, onset = _experiment_profile(cfg)
    bus = TelemetryBus()
    reg = _counting_consumer(bus, "orchestrator")
    result = run_experiment(
        profile,
        cfg.policy,
        episodes=cfg.eval_episodes,
        agent=agent,
        pool=cfg.pool,
        env_config=cfg.env,
        bus=bus,
        registrations=[reg],
        episode_offset=EVAL_EPISODE_OFFSET,
    )
    return result, onset


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    agent = _load_agent_for(cfg, args.checkpoint)
    out = _ensure_out_dir(cfg)
    cfg.write_yaml(os.path.join(out, "resolved_config.yaml"))
    result, onset = _run_named_experiment(cfg, agent)
    name = cfg.experiment
    steps_csv = os.path.join(out, f"{name}_steps.csv")
    episodes_csv = os.path.join(out, f"{name}_episodes.csv")
    summary_json = os.path.join(out, f"{name}_summary.json")
    result.write_step_csv(steps_csv)
    result.write_episode_csv(episodes_csv)
    result.write_summary_json(summary_json)
    from .figures import save_allocation_timeline, save_completion_ratio_series

    fig_path = os.path.join(out, f"{name}.png")
    if name == "completion_ratio":
        save_completion_ratio_series(result, fig_path)
    else:
        save_allocation_timeline(result, fig_path, episode=0, onset_step=onset)
    summary = result.summary()
    print(
        f"{name} [{result.policy}]  reward={summary['mean_reward']:.3f}  "
        f"ran={summary['ratio_ran']:.3f}  ai={summary['ratio_ai']:.3f}  "
        f"util={summary['mean_utilization']:.3f}"
    )
    for path in (steps_csv, episodes_csv, summary_json, fig_path):
        print(f"wrote {path}")
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    if len(args.policies) < 2:
        raise ConfigError("compare needs at least two --policy values")
    choices = [_parse_policy(p) for p in args.policies]
    out = _ensure_out_dir(cfg)
    cfg.write_yaml(os.path.join(out, "resolved_config.yaml"))
    profile, _ = _experiment_profile(cfg)
    results = []
    for choice in choices:
        agent = None
        if choice.kind == "sac":
            agent = _load_agent_for(replace(cfg, policy_kind="sac"), args.checkpoint)
        results.append(
            run_experiment(
                profile,
                choice,
                episodes=cfg.eval_episodes,
                agent=agent,
                pool=cfg.pool,
                env_config=cfg.env,
                episode_offset=EVAL_EPISODE_OFFSET,
            )
        )
    rows = compare_policies(results)
    cmp_csv = os.path.join(out, "comparison.csv")
    write_comparison_csv(rows, cmp_csv)
    from .figures import save_policy_comparison

    fig_path = save_policy_comparison(rows, os.path.join(out, "comparison.png"))
    for row in rows:
        print(
            f"{row['policy']:>24}  util={row['mean_utilization']:.3f}  "
            f"ran={row['ratio_ran']:.3f}  ai={row['ratio_ai']:.3f}  "
            f"reward={row['mean_reward']:.3f}"
        )
    print(f"wrote {cmp_csv}")
    print(f"wrote {fig_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="caora",
        description="Train and evaluate dynamic RAN/AI resource allocation on a shared MIG pool.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_init = sub.add_parser("init-config", help="write a default config file")
    p_init.add_argument("--out", default="caora.yaml", help="where to write the config")
    p_init.set_defaults(func=cmd_init_config)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="path to a YAML config file")
    common.add_argument("--seed", type=int, help="override the run seed")
    common.add_argument("--out", help="output directory")

    p_train = sub.add_parser("train", parents=[common], help="train the allocation policy")
    p_train.add_argument("--episodes", type=int, help="training episodes")
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", parents=[common], help="run a named experiment")
    p_eval.add_argument("--checkpoint", help="trained agent checkpoint (for the sac policy)")
    p_eval.add_argument("--policy", help="policy: sac | ran_only | static_split[:share] | greedy_oracle")
    p_eval.add_argument("--experiment", choices=EXPERIMENTS, help="experiment name")
    p_eval.add_argument("--eval-episodes", type=int, dest="eval_episodes", help="evaluation episodes")
    p_eval.set_defaults(func=cmd_eval)

    p_cmp = sub.add_parser("compare", parents=[common], help="compare policies on one scenario")
    p_cmp.add_argument(
        "--policy",
        dest="policies",
        action="append",
        default=[],
        help="policy to include (repeat; at least two)",
    )
    p_cmp.add_argument("--checkpoint", help="trained agent checkpoint (for the sac policy)")
    p_cmp.add_argument("--experiment", choices=EXPERIMENTS, help="scenario selector")
    p_cmp.add_argument("--eval-episodes", type=int, dest="eval_episodes", help="evaluation episodes")
    p_cmp.set_defaults(func=cmd_compare)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (CheckpointError, TrainingDivergedError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
