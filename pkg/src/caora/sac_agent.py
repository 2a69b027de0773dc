"""Soft actor-critic learner for the allocation environment.

A squashed-Gaussian actor proposes allocation deltas, twin critics with
slow-moving target copies score them, and both sides take one Adam step per
environment step from a shared replay buffer. The gradients are derived by
hand on top of the dense-network engine in :mod:`caora.nets`; no autodiff
framework is involved, which keeps every update finite-difference checkable.

The entropy temperature here is the exploration coefficient of the learner
and is unrelated to the system efficiency coefficient used by the workload
accounting; the two are configured independently.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import asdict, dataclass
from typing import Callable, List, Optional, Tuple

import numpy as np

from .nets import Adam, Grads, MlpNet
from .replay import ReplayBuffer
from .resource_env import AllocAction, EnvConfig, ResourceAllocEnv, ResourcePool, StepInfo
from .workload import DemandSample, ScenarioProfile

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
_SQUASH_EPS = 1e-6
_LOG_2PI = float(np.log(2.0 * np.pi))

CHECKPOINT_MAGIC = b"CAORAAGT"
CHECKPOINT_VERSION = 1


class TrainingDivergedError(RuntimeError):
    """Raised when a loss or parameter stops being finite."""


class CheckpointError(ValueError):
    """Raised for unreadable, truncated, or incompatible checkpoints."""


@dataclass(frozen=True)
class SacConfig:
    """Learner hyperparameters; defaults follow the reported setup."""

    lr_actor: float = 3e-4
    lr_critic: float = 3e-4
    gamma: float = 0.99
    temperature: float = 0.2
    batch_size: int = 64
    buffer_capacity: int = 100_000
    tau: float = 0.005
    grad_clip: float = 10.0
    hidden_size: int = 128
    auto_entropy: bool = False
    lr_temperature: float = 3e-4
    target_entropy: Optional[float] = None
    warmup_steps: int = 1000
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must be in [0, 1), got {self.gamma}")
        if self.temperature <= 0.0:
            raise ValueError(f"temperature must be > 0, got {self.temperature}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.buffer_capacity < self.batch_size:
            raise ValueError("buffer_capacity must be >= batch_size")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError(f"tau must be in (0, 1], got {self.tau}")
        if self.warmup_steps < 0:
            raise ValueError(f"warmup_steps must be >= 0, got {self.warmup_steps}")
        for name in ("lr_actor", "lr_critic", "lr_temperature"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be > 0")
        if self.hidden_size < 1:
            raise ValueError("hidden_size must be >= 1")


class SacAgent:
    """Actor, twin critics, target copies, and their update rules."""

    def __init__(
        self,
        config: SacConfig | None = None,
        state_dim: int = 4,
        action_dim: int = 2,
        a_max: float = 7.0,
    ) -> None:
        self.config = config if config is not None else SacConfig()
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.a_max = float(a_max)
        h = self.config.hidden_size
        init_rng = np.random.default_rng([self.config.seed, 101])
        self.actor = MlpNet([state_dim, h, h, 2 * action_dim], rng=init_rng)
        self.q1 = MlpNet([state_dim + action_dim, h, h, 1], rng=init_rng)
        self.q2 = MlpNet([state_dim + action_dim, h, h, 1], rng=init_rng)
        self.q1_target = self.q1.copy()
        self.q2_target = self.q2.copy()
        self.opt_actor = Adam(self.actor, self.config.lr_actor, grad_clip=self.config.grad_clip)
        self.opt_q1 = Adam(self.q1, self.config.lr_critic, grad_clip=self.config.grad_clip)
        self.opt_q2 = Adam(self.q2, self.config.lr_critic, grad_clip=self.config.grad_clip)
        self.buffer = ReplayBuffer(self.config.buffer_capacity, state_dim, action_dim)
        self._rng = np.random.default_rng([self.config.seed, 202])
        self._log_temp = float(np.log(self.config.temperature))
        # Log-probs are densities over env-scaled actions, so the usual
        # -dim(A) entropy target shifts by the log of the rescale factor.
        self._target_entropy = (
            self.config.target_entropy
            if self.config.target_entropy is not None
            else float(action_dim) * (np.log(self.a_max) - 1.0)
        )

    @property
    def temperature(self) -> float:
        if self.config.auto_entropy:
            return float(np.exp(self._log_temp))
        return self.config.temperature

    # -- policy ---------------------------------------------------------

    def _policy_heads(self, states: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray, dict]:
        out, cache = self.actor.forward_cached(states)
        mu = out[:, : self.action_dim]
        log_std_raw = out[:, self.action_dim :]
        log_std = np.clip(log_std_raw, LOG_STD_MIN, LOG_STD_MAX)
        return mu, log_std, log_std_raw, cache

    @staticmethod
    def _squash_log_prob(eps: np.ndarray, log_std: np.ndarray, tanh_u: np.ndarray, a_max: float) -> np.ndarray:
        # Diagonal Gaussian density minus the tanh and rescale corrections.
        gauss = -0.5 * eps * eps - log_std - 0.5 * _LOG_2PI
        squash = -np.log(1.0 - tanh_u * tanh_u + _SQUASH_EPS)
        return (gauss + squash - np.log(a_max)).sum(axis=1)

    def sample_action(
        self, state: np.ndarray, deterministic: bool = False
    ) -> Tuple[np.ndarray, float]:
        """Draw an allocation delta for one state.

        Stochastic mode samples the reparameterized Gaussian and squashes it
        through tanh; deterministic mode returns the squashed mean. Either
        way the action lands in ``[-a_max, a_max]`` per dimension and the
        returned log-probability accounts for the squash.
        """
        states = np.asarray(state, dtype=np.float64)
        if states.ndim == 1:
            states = states[None, :]
        mu, log_std, _, _ = self._policy_heads(states)
        std = np.exp(log_std)
        if deterministic:
            eps = np.zeros_like(mu)
        else:
            eps = self._rng.standard_normal(mu.shape)
        u = mu + std * eps
        tanh_u = np.tanh(u)
        log_prob = self._squash_log_prob(eps, log_std, tanh_u, self.a_max)
        return self.a_max * tanh_u[0], float(log_prob[0])

    def act(self, state: np.ndarray, deterministic: bool = True) -> np.ndarray:
        action, _ = self.sample_action(state, deterministic=deterministic)
        return action

    # -- critic update ---------------------------------------------------

    def _critic_targets(
        self, s_next: np.ndarray, r: np.ndarray, done: np.ndarray
    ) -> np.ndarray:
        mu, log_std, _, _ = self._policy_heads(s_next)
        std = np.exp(log_std)
        eps = self._rng.standard_normal(mu.shape)
        tanh_u = np.tanh(mu + std * eps)
        log_prob = self._squash_log_prob(eps, log_std, tanh_u, self.a_max)[:, None]
        x = np.concatenate([s_next, tanh_u], axis=1)
        q1t = self.q1_target.forward(x)
        q2t = self.q2_target.forward(x)
        q_min = np.minimum(q1t, q2t)
        return r + self.config.gamma * (1.0 - done) * (q_min - self.temperature * log_prob)

    def _critic_fit(self, x: np.ndarray, y: np.ndarray) -> float:
        """One squared-error step on both critics toward fixed targets.

        Returns the mean loss measured before the parameter update.
        """
        batch = x.shape[0]
        losses = []
        for net, opt in ((self.q1, self.opt_q1), (self.q2, self.opt_q2)):
            q, cache = net.forward_cached(x)
            diff = q - y
            losses.append(float(np.mean(diff * diff)))
            grads, _ = net.backward(cache, (2.0 / batch) * diff)
            opt.step(grads)
        return 0.5 * (losses[0] + losses[1])

    def critic_update(self, buffer: ReplayBuffer | None = None) -> float:
        """One mean-squared-error step on both critics, then a target nudge."""
        buffer = buffer if buffer is not None else self.buffer
        batch = self.config.batch_size
        if len(buffer) < batch:
            raise ValueError(
                f"buffer holds {len(buffer)} transitions; need at least {batch}"
            )
        s, a, r, s_next, done = buffer.sample(batch, self._rng)
        y = self._critic_targets(s_next, r, done)
        loss = self._critic_fit(np.concatenate([s, a], axis=1), y)
        self.q1_target.soft_update_from(self.q1, self.config.tau)
        self.q2_target.soft_update_from(self.q2, self.config.tau)
        self._guard_finite(loss, "critic")
        return loss

    # -- actor update -----------------------------------------------------

    def _min_critic(
        self, states: np.ndarray, actions_norm: np.ndarray
    ) -> Tuple[np.ndarray, np.ndarray]:
        """Clipped double-Q value and its gradient w.r.t. the normalized action."""
        x = np.concatenate([states, actions_norm], axis=1)
        q1, c1 = self.q1.forward_cached(x)
        q2, c2 = self.q2.forward_cached(x)
        take_q1 = (q1 <= q2).astype(np.float64)
        q_min = np.minimum(q1, q2)
        _, gx1 = self.q1.backward(c1, take_q1)
        _, gx2 = self.q2.backward(c2, 1.0 - take_q1)
        dq_dact = (gx1 + gx2)[:, self.state_dim :]
        return q_min, dq_dact

    def _actor_loss_terms(
        self, states: np.ndarray, eps: np.ndarray
    ) -> Tuple[float, np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray, dict]:
        mu, log_std, log_std_raw, cache = self._policy_heads(states)
        std = np.exp(log_std)
        u = mu + std * eps
        tanh_u = np.tanh(u)
        log_prob = self._squash_log_prob(eps, log_std, tanh_u, self.a_max)
        q_min, dq_dact = self._min_critic(states, tanh_u)
        loss = float(np.mean(self.temperature * log_prob - q_min[:, 0]))
        return loss, mu, log_std_raw, std, tanh_u, log_prob, {
            "cache": cache,
            "eps": eps,
            "dq_dact": dq_dact,
        }

    def actor_loss(self, states: np.ndarray, eps: np.ndarray) -> float:
        """Loss value only, for gradient verification against differences."""
        loss, *_ = self._actor_loss_terms(states, eps)
        return loss

    def _actor_grads(self, states: np.ndarray, eps: np.ndarray) -> Tuple[float, Grads, np.ndarray]:
        batch = states.shape[0]
        loss, mu, log_std_raw, std, tanh_u, log_prob, aux = self._actor_loss_terms(states, eps)
        s2 = 1.0 - tanh_u * tanh_u
        temp = self.temperature
        # d log_prob / du from the squash correction.
        g_u = 2.0 * tanh_u * s2 / (s2 + _SQUASH_EPS)
        # Critic path enters through the tanh output; scale by -1/B for the mean.
        g_act = -aux["dq_dact"] / batch
        d_mu = (temp / batch) * g_u + g_act * s2
        d_log_std = (temp / batch) * (-1.0 + g_u * std * eps) + g_act * s2 * std * eps
        # The clip on log_std blocks gradient outside its range.
        interior = ((log_std_raw > LOG_STD_MIN) & (log_std_raw < LOG_STD_MAX)).astype(np.float64)
        d_out = np.concatenate([d_mu, d_log_std * interior], axis=1)
        grads, _ = self.actor.backward(aux["cache"], d_out)
        return loss, grads, log_prob

    def actor_update(self, buffer: ReplayBuffer | None = None) -> float:
        """One entropy-regularized policy-improvement step."""
        buffer = buffer if buffer is not None else self.buffer
        batch = self.config.batch_size
        if len(buffer) < batch:
            raise ValueError(
                f"buffer holds {len(buffer)} transitions; need at least {batch}"
            )
        s, _, _, _, _ = buffer.sample(batch, self._rng)
        eps = self._rng.standard_normal((batch, self.action_dim))
        loss, grads, log_prob = self._actor_grads(s, eps)
        self.opt_actor.step(grads)
        if self.config.auto_entropy:
            err = float(np.mean(log_prob) + self._target_entropy)
            self._log_temp += self.config.lr_temperature * err
            self._log_temp = float(np.clip(self._log_temp, -20.0, 5.0))
        self._guard_finite(loss, "actor")
        return loss

    def _guard_finite(self, loss: float, which: str) -> None:
        if not np.isfinite(loss):
            raise TrainingDivergedError(f"{which} loss became non-finite: {loss}")
        for name, net in (
            ("actor", self.actor),
            ("q1", self.q1),
            ("q2", self.q2),
            ("q1_target", self.q1_target),
            ("q2_target", self.q2_target),
        ):
            if not net.all_finite():
                raise TrainingDivergedError(f"{name} parameters became non-finite")

    # -- checkpointing ----------------------------------------------------

    def _net_table(self) -> List[Tuple[str, MlpNet]]:
        return [
            ("actor", self.actor),
            ("q1", self.q1),
            ("q2", self.q2),
            ("q1_target", self.q1_target),
            ("q2_target", self.q2_target),
        ]

    def save_bytes(self) -> bytes:
        """Serialize the agent: versioned header, dimension table, parameters."""
        out = io.BytesIO()
        out.write(CHECKPOINT_MAGIC)
        out.write(struct.pack("<I", CHECKPOINT_VERSION))
        out.write(
            struct.pack("<IIdd", self.state_dim, self.action_dim, self.a_max, self._log_temp)
        )
        cfg = json.dumps(asdict(self.config), sort_keys=True).encode("utf-8")
        out.write(struct.pack("<I", len(cfg)))
        out.write(cfg)
        nets = self._net_table()
        out.write(struct.pack("<I", len(nets)))
        for name, net in nets:
            encoded = name.encode("ascii")
            out.write(struct.pack("<H", len(encoded)))
            out.write(encoded)
            out.write(struct.pack("<I", len(net.layer_dims)))
            out.write(struct.pack(f"<{len(net.layer_dims)}I", *net.layer_dims))
            for p in net.param_arrays():
                out.write(np.ascontiguousarray(p, dtype="<f8").tobytes())
        return out.getvalue()

    def save(self, path: str) -> None:
        with open(path, "wb") as fh:
            fh.write(self.save_bytes())

    @classmethod
    def load_bytes(cls, blob: bytes) -> "SacAgent":
        buf = io.BytesIO(blob)

        def read(n: int) -> bytes:
            chunk = buf.read(n)
            if len(chunk) != n:
                raise CheckpointError("checkpoint stream is truncated")
            return chunk

        if read(len(CHECKPOINT_MAGIC)) != CHECKPOINT_MAGIC:
            raise CheckpointError("not an agent checkpoint (bad magic bytes)")
        (version,) = struct.unpack("<I", read(4))
        if version != CHECKPOINT_VERSION:
            raise CheckpointError(
                f"unsupported checkpoint version {version}; expected {CHECKPOINT_VERSION}"
            )
        state_dim, action_dim, a_max, log_temp = struct.unpack("<IIdd", read(24))
        (cfg_len,) = struct.unpack("<I", read(4))
        try:
            cfg_fields = json.loads(read(cfg_len).decode("utf-8"))
            config = SacConfig(**cfg_fields)
        except (ValueError, TypeError) as exc:
            raise CheckpointError(f"invalid config block: {exc}") from exc
        agent = cls(config, state_dim=state_dim, action_dim=action_dim, a_max=a_max)
        agent._log_temp = log_temp
        (n_nets,) = struct.unpack("<I", read(4))
        table = dict(agent._net_table())
        if n_nets != len(table):
            raise CheckpointError(f"expected {len(table)} networks, found {n_nets}")
        for _ in range(n_nets):
            (name_len,) = struct.unpack("<H", read(2))
            name = read(name_len).decode("ascii")
            if name not in table:
                raise CheckpointError(f"unknown network {name!r} in checkpoint")
            net = table[name]
            (ndims,) = struct.unpack("<I", read(4))
            dims = struct.unpack(f"<{ndims}I", read(4 * ndims))
            if dims != net.layer_dims:
                raise CheckpointError(
                    f"network {name!r} dimensions {dims} do not match {net.layer_dims}"
                )
            for p in net.param_arrays():
                raw = read(p.size * 8)
                p[...] = np.frombuffer(raw, dtype="<f8").reshape(p.shape)
        trailing = buf.read(1)
        if trailing:
            raise CheckpointError("trailing bytes after checkpoint payload")
        return agent

    @classmethod
    def load(cls, path: str) -> "SacAgent":
        with open(path, "rb") as fh:
            return cls.load_bytes(fh.read())


@dataclass(frozen=True)
class EpisodeMetrics:
    """Aggregates of one training episode."""

    episode: int
    mean_reward: float
    ratio_ran: float
    ratio_ai: float
    mean_utilization: float
    mean_executed_utilization: float
    critic_loss: float
    actor_loss: float


@dataclass
class TrainResult:
    agent: SacAgent
    metrics: List[EpisodeMetrics]


StepObserver = Callable[[StepInfo, DemandSample], None]


def train(
    profile: ScenarioProfile,
    pool: ResourcePool | None = None,
    env_config: EnvConfig | None = None,
    sac_config: SacConfig | None = None,
    episodes: int = 1000,
    step_observer: StepObserver | None = None,
    progress: Callable[[EpisodeMetrics], None] | None = None,
) -> TrainResult:
    """Run the full learning loop and return the agent plus per-episode metrics.

    Each step follows the same order the orchestrator uses online: read the
    current KPI view, form the state, sample an action, project and score
    it, store the transition, then update critics and actor once the buffer
    can fill a batch. ``step_observer`` (when given) receives every step's
    record alongside the demand sample that produced it, which is how the
    telemetry stream is wired in.
    """
    pool = pool if pool is not None else ResourcePool()
    env_config = env_config if env_config is not None else EnvConfig()
    sac_config = sac_config if sac_config is not None else SacConfig()
    if episodes < 1:
        raise ValueError(f"episodes must be >= 1, got {episodes}")
    env = ResourceAllocEnv(profile, pool, env_config)
    agent = SacAgent(
        sac_config, state_dim=4, action_dim=2, a_max=env_config.action_bound(pool)
    )
    r_max = env.r_max
    metrics: List[EpisodeMetrics] = []
    warmup_rng = np.random.default_rng([sac_config.seed, 303])
    total_steps = 0
    for episode in range(episodes):
        state = env.reset(episode=episode)
        rewards = np.zeros(env.episode_steps)
        ratios_ran = np.zeros(env.episode_steps)
        ratios_ai = np.zeros(env.episode_steps)
        utils = np.zeros(env.episode_steps)
        ex_utils = np.zeros(env.episode_steps)
        critic_losses: List[float] = []
        actor_losses: List[float] = []
        for t in range(env.episode_steps):
            kpi_sample = env.current_sample
            obs = state.as_vector(r_max)
            if total_steps < sac_config.warmup_steps:
                # Uniform exploration first: the projection folds much of the
                # action space onto the capacity boundary, and the critics
                # need interior coverage before the policy commits.
                action_env = warmup_rng.uniform(-agent.a_max, agent.a_max, size=2)
            else:
                action_env, _ = agent.sample_action(obs, deterministic=False)
            state, breakdown, info = env.step(AllocAction(action_env[0], action_env[1]))
            total_steps += 1
            if step_observer is not None:
                step_observer(info, kpi_sample)
            # The episode cut at 100 steps truncates a continuing process, so
            # the stored flag stays False and targets bootstrap through it;
            # the successor state here is the genuine next demand sample.
            agent.buffer.push(
                obs,
                action_env / agent.a_max,
                breakdown.final,
                state.as_vector(r_max),
                False,
            )
            if len(agent.buffer) >= sac_config.batch_size:
                critic_losses.append(agent.critic_update())
                actor_losses.append(agent.actor_update())
            rewards[t] = breakdown.final
            ratios_ran[t] = info.ratio_ran
            ratios_ai[t] = info.ratio_ai
            utils[t] = info.utilization
            ex_utils[t] = info.executed_utilization
        ep = EpisodeMetrics(
            episode=episode,
            mean_reward=float(rewards.mean()),
            ratio_ran=float(ratios_ran.mean()),
            ratio_ai=float(ratios_ai.mean()),
            mean_utilization=float(utils.mean()),
            mean_executed_utilization=float(ex_utils.mean()),
            critic_loss=float(np.mean(critic_losses)) if critic_losses else 0.0,
            actor_loss=float(np.mean(actor_losses)) if actor_losses else 0.0,
        )
        metrics.append(ep)
        if progress is not None:
            progress(ep)
    return TrainResult(agent=agent, metrics=metrics)
