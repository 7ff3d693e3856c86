"""Proximal policy optimisation with a clipped surrogate objective.

On-policy: collect a rollout of fixed horizon (crossing episode
boundaries), compute generalised advantage estimates, then run several
epochs of minibatch updates.  The probability ratio between the new and
the collection-time policy is clipped so a single update cannot push the
policy far; the per-sample objective is

    min(ratio * adv, clip(ratio, 1 - eps, 1 + eps) * adv)

which is a pessimistic (lower) bound on the unclipped objective and has
zero gradient once the ratio is outside the trust region on the favoured
side.  Gradients are computed analytically, including the entropy bonus.

Policy and value function are separate networks by default; with
``shared_trunk`` a single network emits action logits plus a value head as
its last output.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .neural import Adam, Network, ShapeError


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def ratio(logp_new, logp_old) -> np.ndarray:
    """Probability ratio of the taken action, new policy over old."""
    new = np.asarray(logp_new, dtype=np.float64)
    old = np.asarray(logp_old, dtype=np.float64)
    return np.exp(new - old)


def clipped_objective(ratios, adv, clip_eps: float) -> float:
    """Mean clipped surrogate, mean over samples of min(r*A, clip(r)*A)."""
    r = np.asarray(ratios, dtype=np.float64)
    a = np.asarray(adv, dtype=np.float64)
    if r.shape != a.shape:
        raise ShapeError(f"ratio shape {r.shape} != advantage shape {a.shape}")
    return float(np.mean(np.minimum(r * a, np.clip(r, 1.0 - clip_eps, 1.0 + clip_eps) * a)))


def gae(rewards, values, next_values, terminated, truncated,
        gamma: float, lam: float) -> tuple:
    """Generalised advantage estimation over one rollout.

    ``next_values[t]`` is the value estimate of the state that followed
    step t; it is used for bootstrapping unless the step truly terminated.
    Truncated steps still bootstrap (the episode could have continued) but
    break the advantage recursion, because the next stored step belongs to
    a different episode.  Returns ``(advantages, returns)`` with
    returns = advantages + values, the regression targets for the critic.
    """
    r = np.asarray(rewards, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    nv = np.asarray(next_values, dtype=np.float64)
    term = np.asarray(terminated, dtype=np.float64)
    trunc = np.asarray(truncated, dtype=np.float64)
    if not (r.shape == v.shape == nv.shape == term.shape == trunc.shape):
        raise ShapeError("gae inputs must share one length, got "
                         f"{[a.shape for a in (r, v, nv, term, trunc)]}")
    n = r.shape[0]
    adv = np.zeros(n, dtype=np.float64)
    carry = 0.0
    for t in range(n - 1, -1, -1):
        delta = r[t] + gamma * nv[t] * (1.0 - term[t]) - v[t]
        carry = delta + gamma * lam * (1.0 - term[t]) * (1.0 - trunc[t]) * carry
        adv[t] = carry
    return adv, adv + v


def normalize_advantages(adv: np.ndarray, var_floor: float = 1e-8) -> np.ndarray:
    """Standardise advantages; a near-constant batch normalises to zeros."""
    mu = adv.mean()
    var = adv.var()
    if var < var_floor:
        return np.zeros_like(adv)
    return (adv - mu) / np.sqrt(var)


@dataclass
class PpoConfig:
    gamma: float = 0.99
    lam: float = 0.95
    clip_eps: float = 0.2
    epochs: int = 4
    minibatch: int = 64
    horizon: int = 2048
    lr: float = 3e-4
    value_coef: float = 0.5
    entropy_coef: float = 0.01
    hidden: tuple = (200, 100)
    shared_trunk: bool = False


class PpoAgent:
    """Policy (and value) networks plus their optimisers."""

    def __init__(self, obs_length: int, n_actions: int, config: PpoConfig, seed: int):
        self.n_actions = n_actions
        self.config = config
        if config.shared_trunk:
            self.net = Network([obs_length, *config.hidden, n_actions + 1],
                               rng=np.random.default_rng([seed, 21]))
            self.opt = Adam(self.net.n_params, lr=config.lr)
            self.policy = self.value = None
        else:
            self.policy = Network([obs_length, *config.hidden, n_actions],
                                  rng=np.random.default_rng([seed, 21]))
            self.value = Network([obs_length, *config.hidden, 1],
                                 rng=np.random.default_rng([seed, 22]))
            self.opt_policy = Adam(self.policy.n_params, lr=config.lr)
            self.opt_value = Adam(self.value.n_params, lr=config.lr)
            self.net = None

    def logits_values(self, obs_batch: np.ndarray) -> tuple:
        if self.net is not None:
            out = self.net.forward(obs_batch)
            return out[..., :self.n_actions], out[..., self.n_actions]
        logits = self.policy.forward(obs_batch)
        values = self.value.forward(obs_batch)[..., 0]
        return logits, values

    def act(self, obs: np.ndarray, rng: np.random.Generator) -> tuple:
        """Sample an action; returns (action, logp, value)."""
        logits, value = self.logits_values(obs)
        logp = log_softmax(logits)
        a = int(rng.choice(self.n_actions, p=np.exp(logp)))
        return a, float(logp[a]), float(value)

    def greedy(self, obs: np.ndarray) -> int:
        logits, _ = self.logits_values(obs)
        return int(np.argmax(logits))

    def apply_grads(self, obs_batch, dlogits, dvalues) -> None:
        """One optimiser step from output-side gradients."""
        if self.net is not None:
            dout = np.concatenate([dlogits, dvalues[:, None]], axis=1)
            self.net.forward(obs_batch)
            self.opt.step(self.net.theta, self.net.backward(dout))
        else:
            self.policy.forward(obs_batch)
            self.opt_policy.step(self.policy.theta, self.policy.backward(dlogits))
            self.value.forward(obs_batch)
            self.opt_value.step(self.value.theta, self.value.backward(dvalues[:, None]))

    def snapshot(self) -> dict:
        if self.net is not None:
            return {"mode": "shared", "net": self.net.to_dict()}
        return {"mode": "separate", "policy": self.policy.to_dict(),
                "value": self.value.to_dict()}


def ppo_losses_and_grads(logits, values, actions, logp_old, adv, returns,
                         config: PpoConfig) -> tuple:
    """Losses and output-side gradients for one minibatch.

    Returns ``(stats, dlogits, dvalues)``; the gradients are of the
    combined minimised loss

        -mean(clipped surrogate) - c_e * mean(entropy)
        + c_v * mean((value - return)^2)

    with the 1/n batch factors already folded in.  ``stats`` carries the
    loss pieces plus the fraction of samples whose ratio left the clip
    interval.
    """
    n = logits.shape[0]
    rows = np.arange(n)
    logp_all = log_softmax(logits)
    probs = np.exp(logp_all)
    logp = logp_all[rows, actions]
    ratio = np.exp(logp - logp_old)

    unclipped = ratio * adv
    clipped = np.clip(ratio, 1.0 - config.clip_eps, 1.0 + config.clip_eps) * adv
    objective = np.minimum(unclipped, clipped)
    entropy = -(probs * logp_all).sum(axis=1)
    value_err = values - returns
    stats = {
        "policy_loss": -float(objective.mean()) - config.entropy_coef * float(entropy.mean()),
        "value_loss": config.value_coef * float(np.mean(value_err ** 2)),
        "entropy": float(entropy.mean()),
        "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > config.clip_eps)),
    }

    # d objective / d logp_new: the clipped branch is constant in the policy
    g_obj = np.where(unclipped <= clipped, unclipped, 0.0)
    onehot = np.zeros_like(logits)
    onehot[rows, actions] = 1.0
    dH = -probs * (logp_all + entropy[:, None])
    dlogits = -(g_obj[:, None] * (onehot - probs) + config.entropy_coef * dH) / n
    dvalues = config.value_coef * 2.0 * value_err / n
    return stats, dlogits, dvalues


def ppo_update(agent: PpoAgent, rollout: dict, rng: np.random.Generator) -> dict:
    """Run the clipped-surrogate epochs on one collected rollout."""
    cfg = agent.config
    adv, returns = gae(rollout["rewards"], rollout["values"], rollout["next_values"],
                       rollout["terminated"], rollout["truncated"], cfg.gamma, cfg.lam)
    adv = normalize_advantages(adv)
    obs = rollout["obs"]
    actions = rollout["actions"]
    logp_old = rollout["logp"]
    n = obs.shape[0]

    totals = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0,
              "clip_fraction": 0.0}
    minibatches = 0
    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, cfg.minibatch):
            idx = perm[start:start + cfg.minibatch]
            logits, values = agent.logits_values(obs[idx])
            stats, dlogits, dvalues = ppo_losses_and_grads(
                logits, values, actions[idx], logp_old[idx], adv[idx],
                returns[idx], cfg)
            agent.apply_grads(obs[idx], dlogits, dvalues)
            for k in totals:
                totals[k] += stats[k]
            minibatches += 1
    out = {k: v / max(minibatches, 1) for k, v in totals.items()}
    out["minibatches"] = minibatches
    return out


@dataclass
class PpoResult:
    agent: PpoAgent
    episode_rows: list
    env_steps: int


def ppo_train(env_fn: Callable, config: PpoConfig, episodes: int, seed: int,
              callback: Optional[Callable] = None) -> PpoResult:
    """Train for ``episodes`` episodes; callback(ep_count, agent) per episode."""
    env = env_fn()
    n_actions = env.action_count
    obs_length = env.observation_length
    agent = PpoAgent(obs_length, n_actions, config, seed)
    act_rng = np.random.default_rng([seed, 23])
    shuffle_rng = np.random.default_rng([seed, 24])

    rows = []
    ep = 0
    env_steps = 0
    ep_reward = 0.0
    ep_len = 0
    obs = env.reset(seed=[seed, 25, 0])

    while ep < episodes:
        h = config.horizon
        buf_obs = np.zeros((h, obs_length))
        buf_next_obs = np.zeros((h, obs_length))
        buf_actions = np.zeros(h, dtype=np.int64)
        buf_logp = np.zeros(h)
        buf_values = np.zeros(h)
        buf_rewards = np.zeros(h)
        buf_term = np.zeros(h)
        buf_trunc = np.zeros(h)
        t = 0
        while t < h and ep < episodes:
            action, logp, value = agent.act(obs, act_rng)
            res = env.step(action)
            buf_obs[t] = obs
            buf_next_obs[t] = res.observation
            buf_actions[t] = action
            buf_logp[t] = logp
            buf_values[t] = value
            buf_rewards[t] = res.reward
            buf_term[t] = 1.0 if res.terminated else 0.0
            buf_trunc[t] = 1.0 if res.truncated else 0.0
            obs = res.observation
            ep_reward += res.reward
            ep_len += 1
            env_steps += 1
            t += 1
            if res.terminated or res.truncated:
                event = res.info.get("event", "")
                rows.append({
                    "episode": ep + 1,
                    "reward": ep_reward,
                    "length": ep_len,
                    "success": int(event == "goal-reached"),
                    "correct": int(res.info.get("correct", 0)),
                    "missort": int(res.info.get("missorted", 0)),
                    "collision": int(event == "collision"),
                })
                ep += 1
                ep_reward = 0.0
                ep_len = 0
                if callback is not None:
                    callback(ep, agent)
                if ep < episodes:
                    obs = env.reset(seed=[seed, 25, ep])
        if t < h:
            break  # episode budget exhausted mid-rollout; no partial update
        _, next_values = agent.logits_values(buf_next_obs)
        rollout = {
            "obs": buf_obs, "actions": buf_actions, "logp": buf_logp,
            "values": buf_values, "next_values": next_values,
            "rewards": buf_rewards, "terminated": buf_term,
            "truncated": buf_trunc,
        }
        ppo_update(agent, rollout, shuffle_rng)

    return PpoResult(agent, rows, env_steps)
