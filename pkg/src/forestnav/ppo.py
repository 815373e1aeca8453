"""Clipped-surrogate actor-critic training over a small set of parallel envs."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .env import ACT_DIM, EpisodeLimits, InspectionEnv, TerminationStatus
from .policy import (
    PolicyWeights,
    actor_backward,
    actor_forward_cached,
    critic_backward,
    critic_forward_cached,
    gaussian_log_prob,
)

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    total_steps: int = 200_000
    rollout_length: int = 1024
    minibatch_size: int = 256
    epochs: int = 10
    learning_rate: float = 3e-4
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_range: float = 0.2
    entropy_coef: float = 0.0
    value_coef: float = 0.5
    max_grad_norm: float = 0.5
    n_envs: int = 4
    seed: int = 0
    initial_log_std: float = float(np.log(0.3))

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if self.n_envs < 1:
            raise ValueError("n_envs must be >= 1")
        if self.total_steps < 0 or self.rollout_length < 1 or self.minibatch_size < 1:
            raise ValueError("step counts must be positive")


@dataclass
class LearningCurve:
    env_steps: list[int] = field(default_factory=list)
    mean_reward: list[float] = field(default_factory=list)

    def append(self, steps, reward):
        if self.env_steps and steps <= self.env_steps[-1]:
            raise ValueError("learning curve steps must be strictly increasing")
        self.env_steps.append(int(steps))
        self.mean_reward.append(float(reward))

    def __len__(self):
        return len(self.env_steps)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["env_steps", "mean_reward"])
            for s, r in zip(self.env_steps, self.mean_reward):
                writer.writerow([s, repr(r)])

    @classmethod
    def from_csv(cls, path):
        curve = cls()
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                curve.append(int(row["env_steps"]), float(row["mean_reward"]))
        return curve


def hover_env_factory(index, seed, horizon=500):
    """Default training task: hover at (0, 0, 1) from random cylinder resets."""
    return InspectionEnv(seed=seed, limits=EpisodeLimits(horizon=horizon))


class Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for k, g in grads.items():
            self.m[k] = self.beta1 * self.m[k] + (1 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1 - self.beta2) * g * g
            params[k] -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


def ppo_loss_and_grads(weights: PolicyWeights, obs, actions, old_log_prob, advantages, returns,
                       config: TrainConfig):
    """Loss terms and gradients of ``pg + c_v * value - c_e * entropy``."""
    n = obs.shape[0]
    log_std = weights["log_std"]
    mean, a_cache = actor_forward_cached(obs, weights)
    value, c_cache = critic_forward_cached(obs, weights)
    value = value[:, 0]

    log_prob = gaussian_log_prob(actions, mean, log_std)
    ratio = np.exp(log_prob - old_log_prob)
    clipped = np.clip(ratio, 1.0 - config.clip_range, 1.0 + config.clip_range)
    surr1 = ratio * advantages
    surr2 = clipped * advantages
    pg_loss = -np.mean(np.minimum(surr1, surr2))
    value_loss = np.mean((returns - value) ** 2)
    entropy = np.sum(log_std) + 0.5 * ACT_DIM * (1.0 + np.log(2 * np.pi))
    loss = pg_loss + config.value_coef * value_loss - config.entropy_coef * entropy

    # the gradient only flows through the unclipped branch when it is the minimum
    active = surr1 <= surr2
    d_logp = np.where(active, -advantages * ratio, 0.0) / n
    inv_var = np.exp(-2.0 * log_std)
    diff = actions - mean
    grads = actor_backward(a_cache, d_logp[:, None] * diff * inv_var, weights)
    grads["log_std"] = (d_logp[:, None] * (diff * diff * inv_var - 1.0)).sum(axis=0)
    grads["log_std"] -= config.entropy_coef
    d_value = config.value_coef * 2.0 * (value - returns) / n
    grads.update(critic_backward(c_cache, d_value, weights))
    info = {"loss": loss, "pg_loss": pg_loss, "value_loss": value_loss, "entropy": entropy,
            "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > config.clip_range))}
    return loss, grads, info


class _Rollout:
    def __init__(self, steps, n_envs, obs_dim):
        self.obs = np.zeros((steps, n_envs, obs_dim))
        self.actions = np.zeros((steps, n_envs, ACT_DIM))
        self.log_prob = np.zeros((steps, n_envs))
        self.rewards = np.zeros((steps, n_envs))
        self.dones = np.zeros((steps, n_envs))
        self.values = np.zeros((steps, n_envs))


def _critic_values(obs, weights):
    out, _ = critic_forward_cached(obs, weights)
    return out[:, 0]


def train(env_factory=hover_env_factory, config: TrainConfig = TrainConfig(),
          initial_weights: PolicyWeights | None = None, progress=None):
    """Train the actor-critic; returns ``(weights, learning_curve)``.

    ``env_factory(index, seed)`` builds one environment per parallel slot.
    Each environment owns its generator, so results are reproducible for a
    fixed ``config.seed``.
    """
    seeds = np.random.SeedSequence(config.seed).spawn(config.n_envs + 1)
    rng = np.random.default_rng(seeds[0])
    weights = (initial_weights.copy() if initial_weights is not None
               else PolicyWeights.initialize(rng, config.initial_log_std))
    curve = LearningCurve()
    if config.total_steps == 0:
        return weights, curve

    envs = [env_factory(i, seeds[i + 1]) for i in range(config.n_envs)]
    obs = np.stack([env.reset() for env in envs])
    obs_dim = obs.shape[1]
    optimizer = Adam(weights.arrays, config.learning_rate)
    episode_return = np.zeros(config.n_envs)
    finished: list[float] = []
    steps_done = 0
    n_updates = -(-config.total_steps // (config.rollout_length * config.n_envs))
    buf = _Rollout(config.rollout_length, config.n_envs, obs_dim)

    for update in range(n_updates):
        new_episodes = []
        for t in range(config.rollout_length):
            mean, _ = actor_forward_cached(obs, weights)
            values = _critic_values(obs, weights)
            std = np.exp(weights["log_std"])
            actions = mean + std * rng.standard_normal(mean.shape)
            buf.obs[t] = obs
            buf.actions[t] = actions
            buf.values[t] = values
            buf.log_prob[t] = gaussian_log_prob(actions, mean, weights["log_std"])
            clipped = np.clip(actions, -1.0, 1.0)
            for i, env in enumerate(envs):
                res = env.step(clipped[i])
                reward = res.reward.total
                episode_return[i] += reward
                if res.status is TerminationStatus.TIME_LIMIT:
                    reward += config.gamma * _critic_values(res.observation[None], weights)[0]
                buf.rewards[t, i] = reward
                buf.dones[t, i] = float(res.status.done)
                if res.status.done:
                    new_episodes.append(episode_return[i])
                    episode_return[i] = 0.0
                    obs[i] = env.reset()
                else:
                    obs[i] = res.observation
        steps_done += config.rollout_length * config.n_envs

        last_values = _critic_values(obs, weights)
        advantages = np.zeros_like(buf.rewards)
        gae = np.zeros(config.n_envs)
        for t in reversed(range(config.rollout_length)):
            next_values = last_values if t == config.rollout_length - 1 else buf.values[t + 1]
            not_done = 1.0 - buf.dones[t]
            delta = buf.rewards[t] + config.gamma * next_values * not_done - buf.values[t]
            gae = delta + config.gamma * config.gae_lambda * not_done * gae
            advantages[t] = gae
        returns = advantages + buf.values

        flat = lambda a: a.reshape(-1, *a.shape[2:])  # noqa: E731
        b_obs, b_act, b_logp = flat(buf.obs), flat(buf.actions), flat(buf.log_prob)
        b_adv, b_ret = flat(advantages), flat(returns)
        batch = b_obs.shape[0]
        for _ in range(config.epochs):
            order = rng.permutation(batch)
            for start in range(0, batch, config.minibatch_size):
                idx = order[start:start + config.minibatch_size]
                adv = b_adv[idx]
                if idx.size > 1:
                    adv = (adv - adv.mean()) / (adv.std() + 1e-8)
                loss, grads, info = ppo_loss_and_grads(weights, b_obs[idx], b_act[idx],
                                                       b_logp[idx], adv, b_ret[idx], config)
                if not np.isfinite(loss):
                    raise TrainingError(
                        f"non-finite loss at update {update}: {info}; "
                        f"max |obs| {np.abs(b_obs[idx]).max():.3g}")
                norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
                if norm > config.max_grad_norm:
                    scale = config.max_grad_norm / (norm + 1e-12)
                    grads = {k: g * scale for k, g in grads.items()}
                optimizer.step(weights.arrays, grads)

        finished.extend(new_episodes)
        if finished:
            curve.append(steps_done, float(np.mean(finished[-20:])))
        log.info("update %d/%d steps %d episodes %d mean reward %.3f std %s", update + 1,
                 n_updates, steps_done, len(new_episodes),
                 curve.mean_reward[-1] if curve.mean_reward else float("nan"),
                 np.round(np.exp(weights["log_std"]), 3))
        if progress is not None:
            progress(update, steps_done, curve, weights)
    weights.check_finite()
    return weights, curve
