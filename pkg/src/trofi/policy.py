"""TD3+BC offline policy optimization, plus BC and reward-substitution baselines.

The actor maximizes lam * Q(s, pi(s)) - (pi(s) - a)^2 where lam normalizes
the critic scale per batch (alpha / mean |Q|, alpha = 2.5). Critics minimize
the squared TD error against the smoothed twin-min target. Fixed-horizon
episodes mean there is no terminal mask in the target. Rewards are never
normalized; states are, with the stats stored on the agent for evaluation.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import nn
from .dataset import NormStats, OfflineDataset, normalized, with_rewards
from .envs import EnvSpec, get_env, reset_from, rollout_batch
from .errors import ConfigError, DivergenceError, PreconditionError
from .nn import Mlp, Rng

LAMBDA_FLOOR = 1e-8
AGENT_VERSION = 1


@dataclass
class PolicyConfig:
    alpha: float = 2.5
    gamma: float = 0.99
    tau: float = 0.005
    policy_delay: int = 2
    target_noise_std: float = 0.2
    target_noise_clip: float = 0.5
    batch_size: int = 256
    updates: int = 20000
    actor_lr: float = 3e-4
    critic_lr: float = 3e-4
    hidden_sizes: list = field(default_factory=lambda: [64, 64])
    log_every: int = 1000
    seed: int = 0

    def validate(self):
        if not 0.0 < self.gamma < 1.0:
            raise ConfigError(f"gamma must be in (0, 1), got {self.gamma}")
        if self.alpha <= 0:
            raise ConfigError(f"alpha must be positive, got {self.alpha}")
        if self.policy_delay < 1:
            raise ConfigError(f"policy_delay must be >= 1, got {self.policy_delay}")
        return self


@dataclass
class Agent:
    actor: Mlp
    critic1: Mlp | None
    critic2: Mlp | None
    target_actor: Mlp | None
    target_critic1: Mlp | None
    target_critic2: Mlp | None
    action_low: np.ndarray
    action_high: np.ndarray
    env_name: str
    norm_stats: NormStats | None = None
    # optimizer state lives with the agent so update ops stay self-contained
    adam_actor: nn.AdamState | None = None
    adam_critic1: nn.AdamState | None = None
    adam_critic2: nn.AdamState | None = None


class Batch(NamedTuple):
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray | None
    next_states: np.ndarray


@dataclass
class EvalResult:
    per_episode_returns: list
    mean: float
    std: float
    normalized_score: float


def init_agent(env: EnvSpec, config: PolicyConfig, rng: Rng, with_critics=True) -> Agent:
    actor = nn.init([env.state_dim] + list(config.hidden_sizes) + [env.action_dim],
                    rng.child(0), output_activation="tanh")
    agent = Agent(actor, None, None, None, None, None,
                  env.action_low.copy(), env.action_high.copy(), env.name)
    agent.adam_actor = nn.adam_init(actor, learning_rate=config.actor_lr)
    if with_critics:
        q_sizes = [env.state_dim + env.action_dim] + list(config.hidden_sizes) + [1]
        agent.critic1 = nn.init(q_sizes, rng.child(1))
        agent.critic2 = nn.init(q_sizes, rng.child(2))
        agent.target_actor = actor.copy()
        agent.target_critic1 = agent.critic1.copy()
        agent.target_critic2 = agent.critic2.copy()
        agent.adam_critic1 = nn.adam_init(agent.critic1, learning_rate=config.critic_lr)
        agent.adam_critic2 = nn.adam_init(agent.critic2, learning_rate=config.critic_lr)
    return agent


def _action_affine(agent):
    center = (agent.action_high + agent.action_low) / 2.0
    half = (agent.action_high - agent.action_low) / 2.0
    return center, half


def actor_action(agent: Agent, states, net=None) -> np.ndarray:
    """Actor output mapped into the action box (tanh output, affine scale)."""
    center, half = _action_affine(agent)
    return center + half * nn.forward(net if net is not None else agent.actor, states)


def q_values(agent: Agent, states, actions, net=None) -> np.ndarray:
    sa = np.concatenate([states, actions], axis=1)
    return nn.forward(net if net is not None else agent.critic1, sa)[:, 0]


def lambda_norm(q_vals, alpha: float) -> float:
    """alpha / mean |Q|, denominator floored at 1e-8."""
    q = np.asarray(q_vals, dtype=np.float64)
    if q.size == 0:
        raise PreconditionError("empty Q batch")
    return float(alpha / max(np.abs(q).mean(), LAMBDA_FLOOR))


def critic_targets(agent: Agent, batch: Batch, config: PolicyConfig, rng) -> np.ndarray:
    """r + gamma * min of the twin target critics at the smoothed target action."""
    if batch.rewards is None:
        raise PreconditionError("batch is unlabeled; critic targets need rewards")
    ns = batch.next_states
    a = actor_action(agent, ns, net=agent.target_actor)
    if config.target_noise_std > 0:
        noise = np.clip(config.target_noise_std * rng.normal(size=a.shape),
                        -config.target_noise_clip, config.target_noise_clip)
        a = a + noise
    a = np.clip(a, agent.action_low, agent.action_high)
    nsa = np.concatenate([ns, a], axis=1)
    q1 = nn.forward(agent.target_critic1, nsa)[:, 0]
    q2 = nn.forward(agent.target_critic2, nsa)[:, 0]
    return batch.rewards + config.gamma * np.minimum(q1, q2)


def critic_loss_grads(critic: Mlp, sa, targets):
    """MSE of one critic against fixed targets, with parameter gradients."""
    b = sa.shape[0]
    q = nn.forward(critic, sa)[:, 0]
    err = q - targets
    grads = nn.backward(critic, sa, (2.0 / b) * err[:, None])
    return float((err ** 2).mean()), grads


def critic_update(agent: Agent, batch: Batch, config: PolicyConfig, rng):
    """One Adam step on both critics' MSE against shared targets."""
    y = critic_targets(agent, batch, config, rng)
    sa = np.concatenate([batch.states, batch.actions], axis=1)
    total = 0.0
    for critic, adam in ((agent.critic1, agent.adam_critic1),
                         (agent.critic2, agent.adam_critic2)):
        loss, grads = critic_loss_grads(critic, sa, y)
        total += loss
        nn.adam_step(critic, grads, adam)
    if not np.isfinite(total):
        raise DivergenceError(f"critic loss diverged: {total}")
    return agent, total


def bc_loss_grads(agent: Agent, batch: Batch):
    """Plain behavioral-cloning MSE and actor parameter gradients."""
    b, act_dim = batch.actions.shape
    center, half = _action_affine(agent)
    pi = center + half * nn.forward(agent.actor, batch.states)
    err = pi - batch.actions
    grads = nn.backward(agent.actor, batch.states,
                        (2.0 / (b * act_dim)) * err * half)
    return float((err ** 2).mean()), grads


def actor_loss_grads(agent: Agent, batch: Batch, lam: float):
    """Loss -lam * mean Q1(s, pi(s)) + mse(pi(s), a) and actor gradients.

    lam is treated as a constant. With lam = 0 this is exactly the BC
    gradient; the critic contributes only through its input gradients.
    """
    s, a_data = batch.states, batch.actions
    b, act_dim = a_data.shape
    center, half = _action_affine(agent)
    pi = center + half * nn.forward(agent.actor, s)
    sa = np.concatenate([s, pi], axis=1)
    q = nn.forward(agent.critic1, sa)[:, 0]
    bc_err = pi - a_data
    loss = float(-lam * q.mean() + (bc_err ** 2).mean())
    q_up = np.full((b, 1), -lam / b)
    g_action = nn.backward(agent.critic1, sa, q_up).inputs[:, s.shape[1]:]
    g_pi = g_action + (2.0 / (b * act_dim)) * bc_err
    grads = nn.backward(agent.actor, s, g_pi * half)
    return loss, grads, q


def actor_update(agent: Agent, batch: Batch, config: PolicyConfig):
    """Gradient step on lam * Q1(s, pi(s)) - mse(pi(s), a), then soft updates.

    lam is recomputed from the current batch's Q(s, pi(s)) before the step.
    """
    q = q_values(agent, batch.states, actor_action(agent, batch.states))
    lam = lambda_norm(q, config.alpha)
    loss, grads, _ = actor_loss_grads(agent, batch, lam)
    nn.adam_step(agent.actor, grads, agent.adam_actor)

    nn.soft_update(agent.target_actor, agent.actor, config.tau)
    nn.soft_update(agent.target_critic1, agent.critic1, config.tau)
    nn.soft_update(agent.target_critic2, agent.critic2, config.tau)
    return agent, loss, lam


def sample_batch(dataset: OfflineDataset, batch_size, gen) -> Batch:
    idx = gen.integers(0, len(dataset), size=batch_size)
    rewards = dataset.rewards()[idx] if dataset.labeled else None
    return Batch(dataset.states()[idx], dataset.actions()[idx], rewards,
                 dataset.next_states()[idx])


def train_policy(dataset: OfflineDataset, config: PolicyConfig):
    """Full TD3+BC run over a labeled dataset; returns (agent, log)."""
    config.validate()
    if not dataset.labeled:
        raise PreconditionError(
            "dataset has no rewards; label it (reward model, ground truth, or a "
            "substitute baseline) before policy training")
    ds, stats = normalized(dataset)
    env = get_env(ds.env_name)
    agent = init_agent(env, config, Rng(config.seed, 200))
    agent.norm_stats = stats
    batch_gen = Rng(config.seed, 201).generator()
    noise_gen = Rng(config.seed, 202).generator()

    log = []
    critic_loss = actor_loss = lam = float("nan")
    for update in range(config.updates):
        batch = sample_batch(ds, config.batch_size, batch_gen)
        agent, critic_loss = critic_update(agent, batch, config, noise_gen)
        if (update + 1) % config.policy_delay == 0:
            agent, actor_loss, lam = actor_update(agent, batch, config)
        if update % config.log_every == 0 or update == config.updates - 1:
            log.append({"update": update, "critic_loss": critic_loss,
                        "actor_loss": actor_loss, "lambda": lam})
    return agent, log


def train_bc(dataset: OfflineDataset, config: PolicyConfig):
    """Behavioral cloning: actor-only MSE regression of actions on states."""
    config.validate()
    ds, stats = normalized(dataset)
    env = get_env(ds.env_name)
    agent = init_agent(env, config, Rng(config.seed, 200), with_critics=False)
    agent.norm_stats = stats
    batch_gen = Rng(config.seed, 201).generator()

    log = []
    for update in range(config.updates):
        batch = sample_batch(ds, config.batch_size, batch_gen)
        loss, grads = bc_loss_grads(agent, batch)
        nn.adam_step(agent.actor, grads, agent.adam_actor)
        if update % config.log_every == 0 or update == config.updates - 1:
            log.append({"update": update, "actor_loss": loss})
    return agent, log


SUBSTITUTE_MODES = ("constant_zero", "uniform_random")


def substitute_rewards(dataset: OfflineDataset, mode: str, seed: int = 0) -> OfflineDataset:
    """Replace all labels with a constant 0 or with uniform(-1, 1) draws."""
    if mode == "constant_zero":
        rewards = np.zeros(len(dataset))
    elif mode == "uniform_random":
        rewards = Rng(seed, 300).generator().uniform(-1.0, 1.0, size=len(dataset))
    else:
        raise ConfigError(f"unknown substitute mode {mode!r}; known: {SUBSTITUTE_MODES}")
    return with_rewards(dataset, rewards)


def agent_policy(agent: Agent):
    """Deterministic policy over raw environment states."""
    stats = agent.norm_stats

    def act(states):
        s = np.asarray(states, dtype=np.float64)
        if stats is not None:
            s = (s - stats.mean) / stats.std
        return actor_action(agent, s)

    return act


def evaluate(agent, env: EnvSpec, n_episodes: int = 100, seed: int = 0) -> EvalResult:
    """Deterministic-policy episodes with distinct seeds, ground-truth returns.

    Accepts an Agent or any callable mapping raw (B, state_dim) states to
    in-bounds (B, action_dim) actions.
    """
    act = agent_policy(agent) if isinstance(agent, Agent) else agent
    inits = np.empty((n_episodes, env.state_dim))
    for i in range(n_episodes):
        inits[i] = reset_from(env, Rng(seed, i + 1).generator())
    _, _, rewards = rollout_batch(env, lambda s, t: act(s), inits)
    returns = rewards.sum(axis=1)
    return EvalResult(
        per_episode_returns=[float(r) for r in returns],
        mean=float(returns.mean()),
        std=float(returns.std()),
        normalized_score=normalized_score(returns.mean(), env),
    )


def normalized_score(mean_return: float, env: EnvSpec) -> float:
    """100 * (return - random) / (expert - random) from calibration constants."""
    span = env.expert_score - env.random_score
    if not np.isfinite(span) or span <= 0:
        raise ConfigError(f"environment {env.name} has no usable calibration scores")
    return float(100.0 * (mean_return - env.random_score) / span)


def save_agent(agent: Agent, path, config: PolicyConfig | None = None):
    def net(m):
        return nn.to_checkpoint(m) if m is not None else None

    blob = {
        "version": AGENT_VERSION,
        "env_name": agent.env_name,
        "action_low": agent.action_low.tolist(),
        "action_high": agent.action_high.tolist(),
        "norm_stats": ({"mean": agent.norm_stats.mean.tolist(),
                        "std": agent.norm_stats.std.tolist()}
                       if agent.norm_stats else None),
        "actor": net(agent.actor),
        "critic1": net(agent.critic1),
        "critic2": net(agent.critic2),
        "target_actor": net(agent.target_actor),
        "target_critic1": net(agent.target_critic1),
        "target_critic2": net(agent.target_critic2),
        "config": vars(config).copy() if config else None,
    }
    if blob["config"] is not None:
        blob["config"]["hidden_sizes"] = list(blob["config"]["hidden_sizes"])
    with open(path, "w") as f:
        json.dump(blob, f)


def load_agent(path) -> Agent:
    with open(path) as f:
        blob = json.load(f)

    def net(b):
        return nn.from_checkpoint(b) if b is not None else None

    stats = None
    if blob["norm_stats"] is not None:
        stats = NormStats(mean=np.asarray(blob["norm_stats"]["mean"]),
                          std=np.asarray(blob["norm_stats"]["std"]))
    return Agent(
        actor=net(blob["actor"]),
        critic1=net(blob["critic1"]),
        critic2=net(blob["critic2"]),
        target_actor=net(blob["target_actor"]),
        target_critic1=net(blob["target_critic1"]),
        target_critic2=net(blob["target_critic2"]),
        action_low=np.asarray(blob["action_low"], dtype=np.float64),
        action_high=np.asarray(blob["action_high"], dtype=np.float64),
        env_name=blob["env_name"],
        norm_stats=stats,
    )
