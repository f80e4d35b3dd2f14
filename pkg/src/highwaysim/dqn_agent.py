"""DQN training and inference: replay buffer, epsilon-greedy policy, frozen
target network, squared TD-error loss with one Adam step per update."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .environment import MetaAction
from .neural import AdamState, Mlp, adam_update, load_checkpoint, save_checkpoint


@dataclass(frozen=True)
class Transition:
    s: np.ndarray
    a: int
    r: float
    s_next: np.ndarray
    done: bool


class ReplayBuffer:
    """Ring buffer with uniform without-replacement batch sampling."""

    def __init__(self, capacity: int = 100_000, seed: int = 0):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._data: list[Transition] = []
        self._write = 0
        self._rng = np.random.default_rng(seed)

    def add(self, t: Transition):
        if len(self._data) < self.capacity:
            self._data.append(t)
        else:
            self._data[self._write] = t
        self._write = (self._write + 1) % self.capacity

    def sample(self, batch_size: int) -> list[Transition]:
        if batch_size > len(self._data):
            raise ValueError(f"batch {batch_size} > buffer size {len(self._data)}")
        idx = self._rng.choice(len(self._data), size=batch_size, replace=False)
        return [self._data[i] for i in idx]

    def __len__(self) -> int:
        return len(self._data)


@dataclass(frozen=True)
class AgentConfig:
    gamma: float = 0.99
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_steps: int = 50_000
    batch_size: int = 64
    target_sync_period: int = 1_000
    lr: float = 1e-3
    buffer_capacity: int = 100_000
    hidden_sizes: tuple[int, ...] = (128, 128)
    warmup_steps: int = 500
    train_every: int = 1
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must be in [0, 1]")

    def to_dict(self) -> dict:
        return {
            "gamma": self.gamma,
            "eps_start": self.eps_start,
            "eps_end": self.eps_end,
            "eps_decay_steps": self.eps_decay_steps,
            "batch_size": self.batch_size,
            "target_sync_period": self.target_sync_period,
            "lr": self.lr,
            "buffer_capacity": self.buffer_capacity,
            "hidden_sizes": list(self.hidden_sizes),
            "warmup_steps": self.warmup_steps,
            "train_every": self.train_every,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AgentConfig":
        d = dict(d)
        if "hidden_sizes" in d:
            d["hidden_sizes"] = tuple(int(h) for h in d["hidden_sizes"])
        return cls(**d)


class DqnAgent:
    def __init__(self, obs_size: int, n_actions: int = 3, config: AgentConfig = AgentConfig()):
        self.config = config
        self.n_actions = n_actions
        sizes = (obs_size, *config.hidden_sizes, n_actions)
        self.online = Mlp(sizes, seed=config.seed)
        self.target = self.online.clone()
        self.opt = AdamState(self.online.parameters(), lr=config.lr)
        self.rng = np.random.default_rng(config.seed + 1)
        self.train_steps = 0
        self.sync_count = 0

    def epsilon(self, env_step: int) -> float:
        c = self.config
        if c.eps_decay_steps <= 0:
            return c.eps_end
        frac = min(1.0, env_step / c.eps_decay_steps)
        return c.eps_start + frac * (c.eps_end - c.eps_start)

    def select_action(self, obs_vec: np.ndarray, eps: float) -> MetaAction:
        if not 0.0 <= eps <= 1.0:
            raise ValueError("epsilon must be in [0, 1]")
        if eps > 0.0 and self.rng.random() < eps:
            return MetaAction(int(self.rng.integers(self.n_actions)))
        q = self.online.forward(obs_vec)
        return MetaAction(int(np.argmax(q)))

    def td_targets(self, batch: list[Transition]) -> np.ndarray:
        """y_i = r_i for terminal transitions, else r_i + gamma * max_a Q_target(s', a)."""
        gamma = self.config.gamma
        s_next = np.stack([t.s_next for t in batch])
        q_next = self.target.forward(s_next).max(axis=1)
        r = np.array([t.r for t in batch])
        live = np.array([0.0 if t.done else 1.0 for t in batch])
        return r + gamma * live * q_next

    def train_step(self, batch: list[Transition]) -> float:
        """Mean squared TD error over the batch; gradients flow only through
        the online Q(s, a), and one Adam step is applied."""
        if not batch:
            raise ValueError("batch must be non-empty")
        y = self.td_targets(batch)
        s = np.stack([t.s for t in batch])
        a = np.array([t.a for t in batch])
        q = self.online.forward(s)
        chosen = q[np.arange(len(batch)), a]
        err = chosen - y
        loss = float(np.mean(err**2))
        grad_q = np.zeros_like(q)
        grad_q[np.arange(len(batch)), a] = 2.0 * err / len(batch)
        grads = self.online.backward(s, grad_q)
        adam_update(self.opt, self.online.parameters(), grads)
        self.train_steps += 1
        if self.train_steps % self.config.target_sync_period == 0:
            self.sync_target()
        return loss

    def sync_target(self):
        self.target.copy_from(self.online)
        self.sync_count += 1

    def save(self, path: str | Path):
        save_checkpoint(
            self.online,
            path,
            extra_meta={"agent_config": self.config.to_dict(), "n_actions": self.n_actions},
        )

    @classmethod
    def load(cls, path: str | Path) -> "DqnAgent":
        net, meta = load_checkpoint(path)
        config = AgentConfig.from_dict(meta["agent_config"])
        agent = cls.__new__(cls)
        agent.config = config
        agent.n_actions = int(meta.get("n_actions", 3))
        agent.online = net
        agent.target = net.clone()
        agent.opt = AdamState(net.parameters(), lr=config.lr)
        agent.rng = np.random.default_rng(config.seed + 1)
        agent.train_steps = 0
        agent.sync_count = 0
        return agent


@dataclass
class TrainResult:
    agent: DqnAgent
    returns: list[float] = field(default_factory=list)
    collisions: list[bool] = field(default_factory=list)
    episode_steps: list[int] = field(default_factory=list)
    losses: list[float] = field(default_factory=list)

    def curve(self) -> list[dict]:
        return [
            {
                "episode": i,
                "return": self.returns[i],
                "collision": self.collisions[i],
                "steps": self.episode_steps[i],
            }
            for i in range(len(self.returns))
        ]

    def save_curve(self, path: str | Path):
        Path(path).write_text(
            "\n".join(json.dumps(rec) for rec in self.curve()) + "\n"
        )


def train(
    env_factory: Callable[[int], object],
    config: AgentConfig,
    episodes: int,
    obs_size: int = 25,
) -> TrainResult:
    """Train a DQN policy over seeded episodes.

    ``env_factory(episode_index)`` must return a freshly reset environment
    exposing ``normalized_observation()``, ``step(action)``, ``done`` and
    ``collided``. Fully deterministic under a fixed config seed.
    """
    agent = DqnAgent(obs_size, config=config)
    buffer = ReplayBuffer(config.buffer_capacity, seed=config.seed + 2)
    result = TrainResult(agent=agent)
    env_step = 0
    for ep in range(episodes):
        env = env_factory(ep)
        obs_vec = env.normalized_observation()
        ep_return = 0.0
        steps = 0
        while not env.done:
            eps = agent.epsilon(env_step)
            action = agent.select_action(obs_vec, eps)
            _, reward, done, _ = env.step(action)
            next_vec = env.normalized_observation()
            buffer.add(Transition(obs_vec, int(action), reward, next_vec, done))
            obs_vec = next_vec
            ep_return += reward
            env_step += 1
            steps += 1
            if len(buffer) >= max(config.batch_size, config.warmup_steps) and (
                env_step % config.train_every == 0
            ):
                result.losses.append(agent.train_step(buffer.sample(config.batch_size)))
        result.returns.append(ep_return)
        result.collisions.append(bool(env.collided))
        result.episode_steps.append(steps)
    return result
