"""Shared fixtures for the test suite.

The acceptance tests train one agent per session and evaluate it under
several policies and scenarios; everything hangs off the session-scoped
``acceptance_bundle``. Each acceptance criterion reports a single
PASS/FAIL line that is echoed into the terminal summary.
"""

import os
import time
from dataclasses import dataclass
from typing import List

import pytest

from caora.orchestrator import ExperimentResult, PolicyChoice, inject_peak, run_experiment
from caora.sac_agent import SacConfig, TrainResult, train
from caora.workload import ScenarioProfile

ACCEPT_SEED = 7
ACCEPT_EPISODES = int(os.environ.get("CAORA_ACCEPT_EPISODES", "500"))
EVAL_EPISODES = 50
EVAL_OFFSET = 1_000_000

_REPORT_LINES: List[str] = []


def record_criterion(number: int, description: str, passed: bool, detail: str) -> None:
    line = f"ACCEPTANCE {number:2d} {'PASS' if passed else 'FAIL'}  {description}: {detail}"
    _REPORT_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _REPORT_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_REPORT_LINES):
            terminalreporter.write_line(line)


@dataclass
class AcceptanceBundle:
    train_result: TrainResult
    train_seconds: float
    sac_offpeak: ExperimentResult
    oracle_offpeak: ExperimentResult
    ran_only_offpeak: ExperimentResult
    sac_peak: ExperimentResult
    peak_onset: int


@pytest.fixture(scope="session")
def acceptance_bundle() -> AcceptanceBundle:
    """Train once on the peak-injection scenario, evaluate everywhere.

    Training on the injected scenario exposes the learner to both demand
    regimes (steps 0-49 off-peak, 50-99 congested), so one agent serves the
    balance, completion-ratio, and adaptation experiments. Automatic
    entropy-temperature tuning is enabled for this run; see the README for
    why the fixed-temperature default cannot trade entropy against this
    bounded reward.
    """
    onset = 50
    offpeak = ScenarioProfile(seed=ACCEPT_SEED)
    peak = inject_peak(offpeak, onset_step=onset)
    sac_config = SacConfig(seed=ACCEPT_SEED, auto_entropy=True)
    t0 = time.perf_counter()
    train_result = train(peak, sac_config=sac_config, episodes=ACCEPT_EPISODES)
    train_seconds = time.perf_counter() - t0
    agent = train_result.agent
    sac_off = run_experiment(
        offpeak, PolicyChoice("sac"), EVAL_EPISODES, agent=agent, episode_offset=EVAL_OFFSET
    )
    oracle_off = run_experiment(
        offpeak, PolicyChoice("greedy_oracle"), EVAL_EPISODES, episode_offset=EVAL_OFFSET
    )
    ran_only_off = run_experiment(
        offpeak, PolicyChoice("ran_only"), EVAL_EPISODES, episode_offset=EVAL_OFFSET
    )
    sac_peak = run_experiment(
        peak, PolicyChoice("sac"), EVAL_EPISODES, agent=agent, episode_offset=EVAL_OFFSET
    )
    return AcceptanceBundle(
        train_result=train_result,
        train_seconds=train_seconds,
        sac_offpeak=sac_off,
        oracle_offpeak=oracle_off,
        ran_only_offpeak=ran_only_off,
        sac_peak=sac_peak,
        peak_onset=onset,
    )
