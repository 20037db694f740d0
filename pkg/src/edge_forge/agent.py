"""DQN adversary for the pedestrian, plus a tabular Q-learning baseline."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Callable, Iterator, Sequence

import numpy as np

from .errors import ConfigError
from .neural import (AdamState, Mlp, NeuralConfig, clone, copy_parameters, mlp_init, normalize,
                     train_on_batch)
from .rss import RssParams
from .sim_env import N_ACTIONS, AgentState, PedAction, Sut, WorldConfig, cas_control
from .validation import EpisodeRecord, ValidationConfig, run_episode


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 0.95
    alpha: float = 0.1
    batch_size: int = 32
    replay_capacity: int = 2000
    target_sync_every: int = 25
    eps_start: float = 1.0
    eps_decay: float = 0.995
    eps_min: float = 0.001
    max_episodes: int = 1500
    checkpoint_every: int = 100
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0 < self.gamma < 1:
            raise ConfigError(f"agent.gamma must lie in (0, 1), got {self.gamma!r}")
        if not 0 <= self.alpha <= 1:
            raise ConfigError(f"agent.alpha must lie in [0, 1], got {self.alpha!r}")
        if not 0 < self.eps_decay < 1:
            raise ConfigError(f"agent.eps_decay must lie in (0, 1), got {self.eps_decay!r}")
        if not 0 < self.eps_min <= self.eps_start <= 1:
            raise ConfigError("agent.eps_min and agent.eps_start need 0 < eps_min <= eps_start <= 1")
        if not 1 <= self.batch_size <= self.replay_capacity:
            raise ConfigError("agent.batch_size must lie in [1, agent.replay_capacity]")
        for name in ("target_sync_every", "checkpoint_every"):
            if getattr(self, name) < 1:
                raise ConfigError(f"agent.{name} must be >= 1")
        if self.max_episodes < 0 or self.seed < 0:
            raise ConfigError("agent.max_episodes and agent.seed must be >= 0")


@dataclass(frozen=True)
class Transition:
    state: AgentState
    action: int
    reward: float
    next_state: AgentState
    done: bool


class ReplayBuffer:
    """FIFO experience store; the oldest transition is dropped when full."""

    def __init__(self, capacity: int = 2000):
        self.capacity = capacity
        self._items: deque[Transition] = deque(maxlen=capacity)

    def push(self, tr: Transition) -> None:
        self._items.append(tr)

    def __len__(self) -> int:
        return len(self._items)

    @property
    def size(self) -> int:
        return len(self._items)

    def __iter__(self):
        return iter(self._items)

    def __getitem__(self, i: int) -> Transition:
        return self._items[i]

    def sample(self, n: int, rng: np.random.Generator) -> list[Transition]:
        idx = rng.choice(len(self._items), size=n, replace=False)
        return [self._items[i] for i in idx]


def epsilon_at(timestep_count: int, cfg: TrainConfig) -> float:
    return max(cfg.eps_min, cfg.eps_start * cfg.eps_decay ** timestep_count)


def select_action(q_values: Sequence[float], eps: float, rng: np.random.Generator) -> PedAction:
    # np.argmax returns the first maximum, i.e. the lowest index on ties.
    if rng.random() < eps:
        return PedAction(int(rng.integers(N_ACTIONS)))
    return PedAction(int(np.argmax(q_values)))


def _encode(states: Sequence[AgentState]) -> np.ndarray:
    return normalize([s.rel_speed for s in states], [s.euclid_dist for s in states])


def td_targets(batch: Sequence[Transition], target_net: Mlp, gamma: float) -> np.ndarray:
    rewards = np.array([tr.reward for tr in batch], dtype=np.float64)
    alive = np.array([not tr.done for tr in batch])
    best_next = target_net.forward(_encode([tr.next_state for tr in batch])).max(axis=1)
    return rewards + gamma * best_next * alive


def dqn_train_step(pred: Mlp, target: Mlp, opt: AdamState, buf: ReplayBuffer, cfg: TrainConfig,
                   rng: np.random.Generator) -> float | None:
    if len(buf) < cfg.batch_size:
        return None
    batch = buf.sample(cfg.batch_size, rng)
    targets = td_targets(batch, target, cfg.gamma)
    mask = np.zeros((len(batch), pred.layer_dims[-1]), dtype=bool)
    mask[np.arange(len(batch)), [tr.action for tr in batch]] = True
    return train_on_batch(pred, opt, _encode([tr.state for tr in batch]), targets, mask)


class DqnAgent:
    """Prediction/target network pair with replay memory and a decaying ε."""

    def __init__(self, train: TrainConfig | None = None, neural: NeuralConfig | None = None):
        self.cfg = train or TrainConfig()
        ncfg = neural or NeuralConfig()
        self.pred = mlp_init(ncfg.layer_dims, seed=self.cfg.seed)
        self.target = clone(self.pred)
        self.opt = AdamState.for_net(self.pred, ncfg)
        self.buffer = ReplayBuffer(self.cfg.replay_capacity)
        self.rng = np.random.default_rng([self.cfg.seed, 1])
        self.timestep_count = 0
        self.sync_count = 0
        self.episodes_done = 0
        self.losses: list[float] = []

    @property
    def epsilon(self) -> float:
        return epsilon_at(self.timestep_count, self.cfg)

    def act(self, obs: AgentState) -> int:
        q = self.pred.forward(normalize(obs.rel_speed, obs.euclid_dist))
        return select_action(q, self.epsilon, self.rng).index

    def learn(self, obs: AgentState, action: int, reward: float, next_obs: AgentState, done: bool) -> None:
        self.buffer.push(Transition(obs, action, reward, next_obs, done))
        loss = dqn_train_step(self.pred, self.target, self.opt, self.buffer, self.cfg, self.rng)
        if loss is not None:
            self.losses.append(loss)
        self.timestep_count += 1

    def end_episode(self) -> bool:
        self.episodes_done += 1
        if self.episodes_done % self.cfg.target_sync_every == 0:
            copy_parameters(self.pred, self.target)
            self.sync_count += 1
            return True
        return False


Checkpoint = Callable[[int, Mlp], None]


def run_training(world: WorldConfig, rss: RssParams, train: TrainConfig,
                 neural: NeuralConfig | None = None, vcfg: ValidationConfig | None = None,
                 sut: Sut = cas_control, agent: DqnAgent | None = None,
                 checkpoint: Checkpoint | None = None) -> Iterator[EpisodeRecord]:
    """Train the adversary, yielding one record per generated scenario.

    Episode ``i`` resets from the stream ``(world.seed, i)``; exploration and
    batch sampling draw from the agent's own generator.
    """
    agent = agent or DqnAgent(train, neural)
    for episode_id in range(train.max_episodes):
        record = run_episode(world, rss, world.seed, episode_id, agent.act, sut, vcfg,
                             on_step=agent.learn)
        agent.end_episode()
        if checkpoint is not None and (episode_id + 1) % train.checkpoint_every == 0:
            checkpoint(episode_id, agent.pred)
        yield record


def greedy_policy(net: Mlp) -> Callable[[AgentState], int]:
    def policy(obs: AgentState) -> int:
        return int(np.argmax(net.forward(normalize(obs.rel_speed, obs.euclid_dist))))
    return policy


def evaluate_policy(net: Mlp, world: WorldConfig, rss: RssParams, seed: int, n_episodes: int,
                    vcfg: ValidationConfig | None = None, sut: Sut = cas_control) -> list[EpisodeRecord]:
    """Frozen-policy rollouts (ε = 0, no learning)."""
    policy = greedy_policy(net)
    return [run_episode(world, rss, seed, i, policy, sut, vcfg) for i in range(n_episodes)]


# --- tabular baseline --------------------------------------------------------

@dataclass(frozen=True)
class Discretizer:
    rel_speed_bins: int = 20
    rel_speed_range: tuple[float, float] = (-20.0, 10.0)
    dist_bins: int = 25
    dist_range: tuple[float, float] = (0.0, 50.0)

    @property
    def n_states(self) -> int:
        return self.rel_speed_bins * self.dist_bins

    @staticmethod
    def _bin(value: float, lo: float, hi: float, n: int) -> int:
        k = math.floor((value - lo) / (hi - lo) * n)
        return min(max(k, 0), n - 1)

    def index(self, s: AgentState) -> int:
        i = self._bin(s.rel_speed, *self.rel_speed_range, self.rel_speed_bins)
        j = self._bin(s.euclid_dist, *self.dist_range, self.dist_bins)
        return i * self.dist_bins + j


class QTable:
    """Dense Q values.  States are AgentStates binned by ``bins`` or, without
    a discretizer, plain integer indices."""

    def __init__(self, n_states: int | None = None, n_actions: int = N_ACTIONS,
                 bins: Discretizer | None = None):
        if n_states is None:
            if bins is None:
                raise ConfigError("QTable needs n_states or a discretizer")
            n_states = bins.n_states
        self.bins = bins
        self.values = np.zeros((n_states, n_actions))

    def state_index(self, s) -> int:
        return self.bins.index(s) if self.bins is not None else int(s)

    def q(self, s) -> np.ndarray:
        return self.values[self.state_index(s)]


def tabular_update(table: QTable, tr: Transition, alpha: float, gamma: float) -> None:
    s = table.state_index(tr.state)
    a = tr.action.index if isinstance(tr.action, PedAction) else int(tr.action)
    target = tr.reward
    if not tr.done:
        target += gamma * table.values[table.state_index(tr.next_state)].max()
    table.values[s, a] += alpha * (target - table.values[s, a])
