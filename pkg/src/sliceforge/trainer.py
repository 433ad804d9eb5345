"""Training of the reward network: returns, rollouts, replay, updates.

Returns are computed backward from the terminal step: the last step of an
episode earns ``n_r * alpha + (l - n_r) * beta`` (a reward per accommodated
slice and a penalty per slice left stranded), and every earlier step earns
``n_r * alpha`` plus the discounted next return. Each training iteration
rolls out one episode on a freshly generated instance with epsilon-greedy
exploration, stores it, and once the replay memory holds a full batch,
updates the network on the current episode plus ``batch - 1`` sampled stored
episodes under a masked squared-error loss (only the score of the slice that
was actually taken at each step contributes).
"""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import drn, sched
from .core import (
    ConfigError,
    EpisodeTrace,
    Scenario,
    ScenarioConfig,
    generate_scenario,
    stream,
    STREAM_EXPLORE,
    STREAM_REPLAY,
    STREAM_SCENARIO,
)
from .nn import adam_step, masked_mse

__all__ = [
    "RewardConfig",
    "TrainConfig",
    "ReplayMemory",
    "EpisodeRecord",
    "TrainLogRow",
    "compute_returns",
    "rollout",
    "loss_episode",
    "train",
]


@dataclass(frozen=True)
class RewardConfig:
    """Per-slice reward, stranded-slice penalty, and discount."""

    alpha: float = 0.2
    beta: float = -1.0
    discount: float = 0.9

    def validate(self) -> None:
        if self.alpha <= 0:
            raise ConfigError("alpha must be positive")
        if self.beta >= 0:
            raise ConfigError("beta must be negative")
        if not 0.0 <= self.discount <= 1.0:
            raise ConfigError("discount must lie in [0, 1]")


def compute_returns(trace: EpisodeTrace, cfg: RewardConfig, l: int) -> list[float]:
    """Backward-computed per-step returns; also stored on the trace."""
    if not trace.terminal_reached:
        raise ValueError("returns are only defined for completed episodes")
    cfg.validate()
    out = [0.0] * len(trace.steps)
    nxt = 0.0
    for t in range(len(trace.steps) - 1, -1, -1):
        n_r = trace.steps[t].accommodated_after
        if t == len(trace.steps) - 1:
            out[t] = n_r * cfg.alpha + (l - n_r) * cfg.beta
        else:
            out[t] = n_r * cfg.alpha + cfg.discount * nxt
        nxt = out[t]
    trace.returns = out
    return out


def rollout(
    params: drn.DrnParams,
    scenario: Scenario,
    epsilon: float,
    rng: np.random.Generator | None = None,
) -> EpisodeTrace:
    """One epsilon-greedy episode with encodings recorded for training."""
    if not 0.0 <= epsilon <= 1.0:
        raise ConfigError(f"epsilon must lie in [0, 1], got {epsilon}")
    return sched.run_episode(
        scenario,
        sched.SchedulerKind.DRN,
        drn_params=params,
        epsilon=epsilon,
        exploration_rng=rng,
        record_encodings=True,
    )


def loss_episode(
    pred_per_step: Sequence[np.ndarray],
    target_per_step: Sequence[np.ndarray],
    masks: Sequence[np.ndarray],
) -> float:
    """Episode loss: summed masked squared errors, one one-hot mask per step."""
    if not len(pred_per_step) == len(target_per_step) == len(masks):
        raise ValueError("per-step sequences must have equal lengths")
    total = 0.0
    for pred, target, mask in zip(pred_per_step, target_per_step, masks):
        mask = np.asarray(mask)
        if mask.sum() != 1:
            raise ValueError("each step mask must be one-hot at the taken action")
        loss, _ = masked_mse(np.asarray(pred, dtype=np.float64), np.asarray(target, dtype=np.float64), mask)
        total += loss
    return total


@dataclass
class EpisodeRecord:
    """Flattened training view of one finished episode."""

    substrate: np.ndarray  # (steps, n)
    demand: np.ndarray  # (steps, l, s)
    actions: np.ndarray  # (steps,) int64
    returns: np.ndarray  # (steps,) float64

    @property
    def steps(self) -> int:
        return self.actions.shape[0]


def record_from_trace(trace: EpisodeTrace, n: int, l: int, s: int) -> EpisodeRecord:
    if trace.steps and trace.steps[0].substrate_enc is None:
        raise ValueError("trace was not recorded with encodings")
    count = len(trace.steps)
    substrate = np.zeros((count, n))
    demand = np.zeros((count, l, s))
    actions = np.zeros(count, dtype=np.int64)
    for t, step in enumerate(trace.steps):
        substrate[t] = step.substrate_enc
        demand[t] = step.demand_enc
        actions[t] = step.action
    return EpisodeRecord(
        substrate=substrate,
        demand=demand,
        actions=actions,
        returns=np.array(trace.returns, dtype=np.float64),
    )


class ReplayMemory:
    """Bounded FIFO of finished episodes with uniform batch sampling."""

    def __init__(self, capacity: int = 10_000):
        if capacity < 1:
            raise ConfigError("replay capacity must be positive")
        self._items: deque[EpisodeRecord] = deque(maxlen=capacity)

    def push(self, record: EpisodeRecord) -> None:
        self._items.append(record)

    def __len__(self) -> int:
        return len(self._items)

    def sample_stored(
        self, rng: np.random.Generator, count: int
    ) -> list[EpisodeRecord]:
        """Uniform sample without replacement, excluding the newest episode."""
        pool = len(self._items) - 1
        if count > pool:
            raise ValueError(f"cannot sample {count} of {pool} stored episodes")
        idx = rng.choice(pool, size=count, replace=False)
        return [self._items[int(i)] for i in idx]

    def newest(self) -> EpisodeRecord:
        return self._items[-1]


@dataclass(frozen=True)
class TrainConfig:
    """Hyper-parameters of one training run."""

    scenario: ScenarioConfig
    iterations: int = 500
    batch_size: int = 256
    learning_rate: float = 1e-4
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_frac: float = 0.5  # fraction of iterations over which epsilon decays
    reward: RewardConfig = field(default_factory=RewardConfig)
    replay_capacity: int = 10_000
    chunk_episodes: int = 32  # episodes per forward/backward chunk within a batch
    seed: int = 0

    def validate(self) -> None:
        self.scenario.validate()
        self.reward.validate()
        if self.iterations < 1 or self.batch_size < 1:
            raise ConfigError("iterations and batch_size must be at least 1")
        if self.learning_rate < 0:
            raise ConfigError("learning rate must be non-negative")
        if not 0.0 < self.epsilon_decay_frac <= 1.0:
            raise ConfigError("epsilon_decay_frac must lie in (0, 1]")
        if self.chunk_episodes < 1:
            raise ConfigError("chunk_episodes must be positive")


def epsilon_at(cfg: TrainConfig, iteration: int) -> float:
    """Linear decay from epsilon_start to epsilon_end over the decay window."""
    horizon = max(1, int(cfg.iterations * cfg.epsilon_decay_frac))
    frac = min(1.0, iteration / horizon)
    return cfg.epsilon_start + (cfg.epsilon_end - cfg.epsilon_start) * frac


@dataclass
class TrainLogRow:
    iteration: int
    loss: float  # nan until the first update
    n_r: int
    epsilon: float
    wall_ms: float


def _update_on_batch(
    params: drn.DrnParams, batch: list[EpisodeRecord], cfg: TrainConfig
) -> float:
    """One gradient step on a batch of episodes; returns the batch loss.

    The loss is the per-episode masked squared error summed over steps and
    averaged across episodes. Episodes are processed in fixed-size chunks to
    bound memory; gradients accumulate across chunks.
    """
    params.zero_grad()
    total_loss = 0.0
    inv = 1.0 / len(batch)
    for start in range(0, len(batch), cfg.chunk_episodes):
        chunk = batch[start : start + cfg.chunk_episodes]
        chunk = [ep for ep in chunk if ep.steps > 0]
        if not chunk:
            continue
        substrate = np.concatenate([ep.substrate for ep in chunk])
        demand = np.concatenate([ep.demand for ep in chunk])
        actions = np.concatenate([ep.actions for ep in chunk])
        targets = np.concatenate([ep.returns for ep in chunk])

        rho, cache = drn.forward_batch(params, substrate, demand)
        rows = np.arange(actions.shape[0])
        residual = rho[rows, actions] - targets
        total_loss += float((residual * residual).sum())
        drho = np.zeros_like(rho)
        drho[rows, actions] = 2.0 * residual * inv
        drn.backward_batch(params, cache, drho)

    if not np.isfinite(total_loss):
        raise RuntimeError(f"non-finite batch loss {total_loss}; training aborted")
    adam_step(params.named_parameters(), params.adam, cfg.learning_rate)
    return total_loss * inv


def train(
    cfg: TrainConfig,
    progress: Callable[[TrainLogRow], None] | None = None,
) -> tuple[drn.DrnParams, list[TrainLogRow]]:
    """Full training run; returns the trained network and the per-iteration log."""
    cfg.validate()
    scale = float(cfg.scenario.cap_range[1])
    net_config = drn.DrnConfig(
        n=cfg.scenario.n, l=cfg.scenario.l, s=cfg.scenario.s, scale=scale
    )
    params = drn.build(net_config, seed=cfg.seed)

    scenario_seeds = stream(cfg.seed, STREAM_SCENARIO)
    explore_rng = stream(cfg.seed, STREAM_EXPLORE)
    replay_rng = stream(cfg.seed, STREAM_REPLAY)
    memory = ReplayMemory(cfg.replay_capacity)

    log: list[TrainLogRow] = []
    for iteration in range(cfg.iterations):
        started = time.perf_counter()
        eps = epsilon_at(cfg, iteration)
        scenario_cfg = replace(
            cfg.scenario, seed=int(scenario_seeds.integers(0, 2**63))
        )
        scenario = generate_scenario(scenario_cfg)
        trace = rollout(params, scenario, eps, explore_rng)
        compute_returns(trace, cfg.reward, scenario.l)
        memory.push(record_from_trace(trace, scenario.n, scenario.l, scenario.s))

        loss = float("nan")
        if len(memory) >= cfg.batch_size:
            batch = memory.sample_stored(replay_rng, cfg.batch_size - 1)
            batch.append(memory.newest())
            loss = _update_on_batch(params, batch, cfg)
            params.iteration += 1

        row = TrainLogRow(
            iteration=iteration,
            loss=loss,
            n_r=trace.n_accommodated,
            epsilon=eps,
            wall_ms=(time.perf_counter() - started) * 1e3,
        )
        log.append(row)
        if progress is not None:
            progress(row)
    return params, log
