"""Figure rendering for experiment reports.

Every CSV the CLI writes gets a companion PNG so a run directory is
readable at a glance. Rendering is headless (Agg) and file-based only.
"""

from __future__ import annotations

from typing import Dict, List, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

RAN_COLOR = "#1f77b4"
AI_COLOR = "#ff7f0e"


def save_allocation_timeline(result, path: str, episode: int = 0, onset_step: int | None = None) -> str:
    """Allocations and demands over one episode, with utilization below."""
    rows = [s for s in result.steps if s.episode == episode]
    if not rows:
        raise ValueError(f"experiment result has no episode {episode}")
    t = [s.t for s in rows]
    fig, (ax_alloc, ax_util) = plt.subplots(
        2, 1, figsize=(8, 5.5), sharex=True, height_ratios=[2, 1]
    )
    ax_alloc.plot(t, [s.r_ran for s in rows], color=RAN_COLOR, label="RAN allocation")
    ax_alloc.plot(t, [s.r_ai for s in rows], color=AI_COLOR, label="AI allocation")
    ax_alloc.plot(
        t, [s.d_ran for s in rows], color=RAN_COLOR, ls="--", lw=1, alpha=0.6, label="RAN demand"
    )
    ax_alloc.plot(
        t, [s.d_ai for s in rows], color=AI_COLOR, ls="--", lw=1, alpha=0.6, label="AI demand"
    )
    ax_alloc.set_ylabel("MIG slices")
    ax_alloc.set_title(f"{result.policy}: resource distribution (episode {episode})")
    ax_alloc.grid(alpha=0.3)
    ax_util.plot(t, [s.utilization for s in rows], color="#2ca02c", label="utilization")
    ax_util.set_ylim(-0.05, 1.05)
    ax_util.set_ylabel("utilization")
    ax_util.set_xlabel("timestep")
    ax_util.grid(alpha=0.3)
    if onset_step is not None:
        for ax in (ax_alloc, ax_util):
            ax.axvline(onset_step, color="red", ls=":", lw=1.5)
        ax_alloc.text(
            onset_step, ax_alloc.get_ylim()[1] * 0.95, " peak onset", color="red", va="top"
        )
    ax_alloc.legend(loc="upper right", fontsize=8, ncol=2)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_completion_ratio_series(result, path: str) -> str:
    """Average task completion ratio (%) per episode for both classes."""
    aggs = result.episode_aggregates()
    episodes = [a.episode for a in aggs]
    fig, ax = plt.subplots(figsize=(8, 4))
    ax.plot(episodes, [100 * a.ratio_ran for a in aggs], color=RAN_COLOR, label="RAN")
    ax.plot(episodes, [100 * a.ratio_ai for a in aggs], color=AI_COLOR, label="AI")
    ax.set_xlabel("episode")
    ax.set_ylabel("task completion ratio (%)")
    ax.set_ylim(0, 105)
    ax.set_title(f"{result.policy}: per-episode completion ratios")
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_policy_comparison(rows: Sequence[Dict], path: str) -> str:
    """Grouped bars of the headline metrics for each compared policy."""
    metrics = ["mean_utilization", "ratio_ran", "ratio_ai", "mean_reward"]
    labels = ["utilization", "RAN ratio", "AI ratio", "reward"]
    fig, ax = plt.subplots(figsize=(8, 4))
    width = 0.8 / len(rows)
    for i, row in enumerate(rows):
        xs = [j + i * width for j in range(len(metrics))]
        ax.bar(xs, [row[m] for m in metrics], width=width, label=row["policy"])
    ax.set_xticks([j + width * (len(rows) - 1) / 2 for j in range(len(metrics))])
    ax.set_xticklabels(labels)
    ax.set_ylabel("mean over evaluation")
    ax.set_title("policy comparison")
    ax.grid(alpha=0.3, axis="y")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_training_curves(metrics: Sequence, path: str) -> str:
    """Reward, completion ratios, and utilization across training episodes."""
    episodes = [m.episode for m in metrics]
    fig, (ax_r, ax_c) = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
    ax_r.plot(episodes, [m.mean_reward for m in metrics], color="#2ca02c")
    ax_r.set_ylabel("mean step reward")
    ax_r.set_title("training progress")
    ax_r.grid(alpha=0.3)
    ax_c.plot(episodes, [m.ratio_ran for m in metrics], color=RAN_COLOR, label="RAN ratio")
    ax_c.plot(episodes, [m.ratio_ai for m in metrics], color=AI_COLOR, label="AI ratio")
    ax_c.plot(
        episodes,
        [m.mean_utilization for m in metrics],
        color="#9467bd",
        ls="--",
        label="utilization",
    )
    ax_c.set_xlabel("episode")
    ax_c.set_ylabel("ratio")
    ax_c.set_ylim(0, 1.05)
    ax_c.grid(alpha=0.3)
    ax_c.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
