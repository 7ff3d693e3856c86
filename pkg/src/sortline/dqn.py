"""Deep Q-learning with experience replay and a target network.

The implementation is deliberately close to the classic recipe: uniform
replay sampling, epsilon-greedy behaviour policy with a linear decay, Huber
loss on the TD error, a target network synchronised every fixed number of
gradient updates, one update per environment step once the warmup is done.

Episode boundaries matter for bootstrapping: transitions store the
``terminated`` flag only, so time-limit truncation still bootstraps from
the value of the final state.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .neural import Adam, Network


class BufferTooSmall(Exception):
    """Asked to sample more transitions than the buffer holds."""


@dataclass(frozen=True)
class Experience:
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    done: bool  # true termination only, not time-limit truncation


class ReplayBuffer:
    """Fixed-capacity FIFO ring; sampling is uniform with replacement."""

    def __init__(self, capacity: int, obs_length: int):
        if capacity < 1:
            raise ValueError(f"capacity must be positive, got {capacity}")
        self.capacity = capacity
        # float32 is exact for the small-integer observations used here
        self.states = np.zeros((capacity, obs_length), dtype=np.float32)
        self.next_states = np.zeros((capacity, obs_length), dtype=np.float32)
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity, dtype=np.float64)
        self.dones = np.zeros(capacity, dtype=np.float64)
        self.position = 0
        self.size = 0

    def __len__(self) -> int:
        return self.size

    def push(self, exp: Experience) -> None:
        i = self.position
        self.states[i] = exp.state
        self.actions[i] = exp.action
        self.rewards[i] = exp.reward
        self.next_states[i] = exp.next_state
        self.dones[i] = 1.0 if exp.done else 0.0
        self.position = (self.position + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def items(self) -> list:
        """Buffer contents oldest-first (intended for small buffers/tests)."""
        if self.size < self.capacity:
            order = range(self.size)
        else:
            order = [(self.position + k) % self.capacity for k in range(self.capacity)]
        return [Experience(self.states[i].copy(), int(self.actions[i]),
                           float(self.rewards[i]), self.next_states[i].copy(),
                           bool(self.dones[i])) for i in order]

    def sample(self, rng: np.random.Generator, batch_size: int) -> dict:
        if batch_size > self.size:
            raise BufferTooSmall(f"have {self.size} transitions, asked for {batch_size}")
        idx = rng.integers(0, self.size, size=batch_size)
        return {
            "states": self.states[idx].astype(np.float64),
            "actions": self.actions[idx],
            "rewards": self.rewards[idx],
            "next_states": self.next_states[idx].astype(np.float64),
            "dones": self.dones[idx],
        }


@dataclass(frozen=True)
class EpsilonSchedule:
    """Linear decay from start to end over ``span`` steps, then constant."""

    start: float = 1.0
    end: float = 0.1
    span: int = 1

    def value(self, step: int) -> float:
        # exact endpoint: start + (end-start)*1.0 would round off the floor
        if self.span <= 0 or step >= self.span:
            return self.end
        frac = max(step, 0) / self.span
        return self.start + (self.end - self.start) * frac


def epsilon(schedule: EpsilonSchedule, step: int) -> float:
    return schedule.value(step)


def select_action(qnet: Network, obs: np.ndarray, epsilon: float,
                  rng: np.random.Generator, n_actions: int) -> int:
    """Epsilon-greedy over Q(obs, .); greedy ties break to the lowest index."""
    if rng.random() < epsilon:
        return int(rng.integers(0, n_actions))
    return int(np.argmax(qnet.forward(obs)))


def td_targets(rewards: np.ndarray, next_q: np.ndarray, dones: np.ndarray,
               gamma: float) -> np.ndarray:
    """y = r + gamma * max_a' Q_target(s', a') for non-terminal transitions."""
    return rewards + gamma * next_q.max(axis=1) * (1.0 - dones)


def q_loss_grad(q_values: np.ndarray, actions: np.ndarray,
                targets: np.ndarray) -> tuple:
    """Mean Huber loss (delta=1) on the taken-action TD errors.

    Returns ``(loss, dloss_dq)`` where the gradient has the full (n, A)
    shape expected by Network.backward (zero outside the taken actions).
    """
    n = q_values.shape[0]
    rows = np.arange(n)
    err = q_values[rows, actions] - targets
    abs_err = np.abs(err)
    quad = abs_err <= 1.0
    loss = float(np.mean(np.where(quad, 0.5 * err * err, abs_err - 0.5)))
    dq = np.zeros_like(q_values)
    dq[rows, actions] = np.clip(err, -1.0, 1.0) / n
    return loss, dq


def dqn_update(qnet: Network, target: Network, buffer: ReplayBuffer,
               optimizer: Adam, config: "DqnConfig",
               rng: np.random.Generator) -> float:
    """One gradient step on a uniformly sampled minibatch; returns the loss.

    Raises :class:`BufferTooSmall` until the warmup threshold is met.  The
    target network re-syncs every ``target_sync`` optimizer steps (the
    optimizer's step counter is the authority).
    """
    if len(buffer) < max(config.warmup, config.batch_size):
        raise BufferTooSmall(f"buffer holds {len(buffer)} transitions, "
                             f"warmup needs {max(config.warmup, config.batch_size)}")
    batch = buffer.sample(rng, config.batch_size)
    targets = td_targets(batch["rewards"], target.forward(batch["next_states"]),
                         batch["dones"], config.gamma)
    q = qnet.forward(batch["states"])
    loss, dq = q_loss_grad(q, batch["actions"], targets)
    optimizer.step(qnet.theta, qnet.backward(dq))
    if optimizer.t % config.target_sync == 0:
        target.theta[...] = qnet.theta
    return loss


@dataclass
class DqnConfig:
    gamma: float = 0.99
    lr: float = 1e-4
    hidden: tuple = (200, 100)
    batch_size: int = 64
    buffer_capacity: int = 100_000
    warmup: int = 1000
    target_sync: int = 1000
    updates_per_step: int = 1
    eps_start: float = 1.0
    eps_end: float = 0.1
    eps_fraction: float = 0.5  # share of the planned env steps spent decaying


@dataclass
class DqnResult:
    qnet: Network
    episode_rows: list
    updates: int
    env_steps: int


def greedy_policy(qnet: Network) -> Callable:
    return lambda obs: int(np.argmax(qnet.forward(obs)))


def dqn_train(env_fn: Callable, config: DqnConfig, episodes: int, seed: int,
              callback: Optional[Callable] = None) -> DqnResult:
    """Train a Q-network for ``episodes`` episodes in a fresh environment.

    ``env_fn()`` must build the environment.  ``callback(ep_count, net)``
    runs after every finished episode and is the hook the experiment
    harness uses for periodic evaluation and checkpointing.  Per-episode
    rows record reward, length and the sorting outcome counters.
    """
    env = env_fn()
    n_actions = env.action_count
    obs_length = env.observation_length

    qnet = Network([obs_length, *config.hidden, n_actions],
                   rng=np.random.default_rng([seed, 11]))
    target = qnet.copy()
    optimizer = Adam(qnet.n_params, lr=config.lr)
    buffer = ReplayBuffer(config.buffer_capacity, obs_length)
    act_rng = np.random.default_rng([seed, 12])
    sample_rng = np.random.default_rng([seed, 13])

    planned_steps = episodes * env.max_steps if hasattr(env, "max_steps") else episodes * 100
    schedule = EpsilonSchedule(config.eps_start, config.eps_end,
                               max(1, int(config.eps_fraction * planned_steps)))

    rows = []
    env_steps = 0
    for ep in range(episodes):
        obs = env.reset(seed=[seed, 14, ep])
        ep_reward = 0.0
        ep_len = 0
        last_event = ""
        while True:
            eps = schedule.value(env_steps)
            action = select_action(qnet, obs, eps, act_rng, n_actions)
            res = env.step(action)
            buffer.push(Experience(obs, action, res.reward, res.observation,
                                   res.terminated))
            obs = res.observation
            ep_reward += res.reward
            ep_len += 1
            env_steps += 1
            last_event = res.info.get("event", "")

            if len(buffer) >= max(config.warmup, config.batch_size):
                for _ in range(config.updates_per_step):
                    dqn_update(qnet, target, buffer, optimizer, config, sample_rng)
            if res.terminated or res.truncated:
                break

        rows.append({
            "episode": ep + 1,
            "reward": ep_reward,
            "length": ep_len,
            "success": int(last_event == "goal-reached"),
            "correct": int(res.info.get("correct", 0)),
            "missort": int(res.info.get("missorted", 0)),
            "collision": int(last_event == "collision"),
        })
        if callback is not None:
            callback(ep + 1, qnet)

    return DqnResult(qnet, rows, optimizer.t, env_steps)
