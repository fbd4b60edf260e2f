"""Reward and value-function diagnostics.

Three measurements of how well a trained critic tracks the reward signal it
was trained on: Pearson correlation between Q(s_t, a_t) and the discounted
tail return along each trajectory, the goodness score (how often the logged
expert action beats random actions under Q), and an affine-fit experiment
that reshapes the ground-truth reward toward a learned one and retrains.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import nn
from .dataset import OfflineDataset, split_trajectories, with_rewards
from .envs import get_env
from .errors import PreconditionError
from .policy import Agent, evaluate
from .nn import Rng


@dataclass
class AnalysisConfig:
    gamma: float = 0.99           # must match the agent's training gamma
    k_random_actions: int = 32
    n_states: int = 512
    seed: int = 0


@dataclass
class AnalysisReport:
    performance: float
    pearson_on_train: float
    pearson_train_skipped: int
    pearson_on_expert: float
    pearson_expert_skipped: int
    goodness_on_expert: float
    reward_source: str


@dataclass
class AffineTransform:
    scale: float
    offset: float


def discounted_return_series(traj, gamma: float):
    """Tail sums G_t = r_t + gamma * G_{t+1}, by backward recursion."""
    rewards = [t.reward for t in traj.transitions]
    if any(r is None for r in rewards):
        raise PreconditionError(f"episode {traj.episode_id} is unlabeled")
    out = np.empty(len(rewards))
    acc = 0.0
    for i in range(len(rewards) - 1, -1, -1):
        acc = rewards[i] + gamma * acc
        out[i] = acc
    return out


def pearson_correlation(xs, ys) -> float:
    """Sample Pearson r; degenerate (constant) inputs are an error."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or len(x) < 2:
        raise PreconditionError(f"need two equal-length vectors of >= 2 points, "
                                f"got {x.shape} and {y.shape}")
    xc = x - x.mean()
    yc = y - y.mean()
    denom = np.sqrt((xc ** 2).sum() * (yc ** 2).sum())
    if denom == 0.0:
        raise PreconditionError("correlation undefined: constant input")
    return float((xc * yc).sum() / denom)


def _critic_fn(agent):
    """Q(s_raw, a) with the agent's state normalization; or a bare callable."""
    if isinstance(agent, Agent):
        if agent.critic1 is None:
            raise PreconditionError("agent has no critic (BC agent?)")
        stats = agent.norm_stats

        def q(states, actions):
            s = np.asarray(states, dtype=np.float64)
            if stats is not None:
                s = (s - stats.mean) / stats.std
            sa = np.concatenate([s, np.asarray(actions, dtype=np.float64)], axis=1)
            return nn.forward(agent.critic1, sa)[:, 0]

        return q
    return agent


def value_return_correlation(agent, dataset: OfflineDataset, config: AnalysisConfig):
    """Mean per-trajectory Pearson between Q(s_t, a_t) and the return series.

    Returns (mean, skipped): trajectories where either side is constant carry
    no correlation information and are skipped, not coerced to zero.
    """
    if not dataset.labeled:
        raise PreconditionError("dataset must be labeled")
    q = _critic_fn(agent)
    values, skipped = [], 0
    for traj in split_trajectories(dataset):
        qs = q(traj.states(), traj.actions())
        gs = discounted_return_series(traj, config.gamma)
        try:
            values.append(pearson_correlation(qs, gs))
        except PreconditionError:
            skipped += 1
    if not values:
        raise PreconditionError("every trajectory was degenerate")
    return float(np.mean(values)), skipped


def goodness(agent, expert_dataset: OfflineDataset, config: AnalysisConfig, rng):
    """Fraction of random actions valued strictly below the logged expert action.

    For each sampled (s, a*) pair, draws K uniform actions from the action
    box, rejecting draws within 1e-6 of a*; ties count as failures.
    """
    if len(expert_dataset) == 0:
        raise PreconditionError("empty expert dataset")
    env = get_env(expert_dataset.env_name)
    q = _critic_fn(agent)
    n = min(config.n_states, len(expert_dataset))
    idx = rng.choice(len(expert_dataset), size=n, replace=False)
    states = expert_dataset.states()[idx]
    expert_actions = expert_dataset.actions()[idx]

    q_star = q(states, expert_actions)
    wins = 0
    for i in range(config.k_random_actions):
        draws = rng.uniform(env.action_low, env.action_high,
                            size=(n, env.action_dim))
        # rejection makes the "anything but a*" draw operational
        for _ in range(100):
            close = np.max(np.abs(draws - expert_actions), axis=1) < 1e-6
            if not close.any():
                break
            draws[close] = rng.uniform(env.action_low, env.action_high,
                                       size=(int(close.sum()), env.action_dim))
        wins += int((q(states, draws) < q_star).sum())
    return wins / (n * config.k_random_actions)


def transform_rewards(dataset: OfflineDataset, t: AffineTransform) -> OfflineDataset:
    """r -> scale * r + offset on every label; structure untouched."""
    if not dataset.labeled:
        raise PreconditionError("dataset must be labeled")
    return with_rewards(dataset, t.scale * dataset.rewards() + t.offset)


def fit_affine_to_model(gt_labeled: OfflineDataset, model_labeled: OfflineDataset) -> AffineTransform:
    """Least-squares (scale, offset) mapping ground-truth labels to model labels."""
    x = gt_labeled.rewards()
    y = model_labeled.rewards()
    if x.shape != y.shape:
        raise PreconditionError(f"datasets differ in size: {x.shape} vs {y.shape}")
    xc = x - x.mean()
    var = (xc ** 2).sum()
    if var == 0.0:
        raise PreconditionError("ground-truth rewards are constant; fit is degenerate")
    scale = float((xc * (y - y.mean())).sum() / var)
    return AffineTransform(scale=scale, offset=float(y.mean() - scale * x.mean()))


def build_report(agent, env, train_dataset: OfflineDataset,
                 expert_dataset: OfflineDataset, config: AnalysisConfig,
                 reward_source: str, eval_episodes=100) -> AnalysisReport:
    """Performance + correlation/goodness diagnostics in one record."""
    result = evaluate(agent, env, n_episodes=eval_episodes, seed=config.seed)
    pc_train, skip_train = value_return_correlation(agent, train_dataset, config)
    pc_expert, skip_expert = value_return_correlation(agent, expert_dataset, config)
    g = goodness(agent, expert_dataset, config, Rng(config.seed, 400).generator())
    return AnalysisReport(
        performance=result.normalized_score,
        pearson_on_train=pc_train,
        pearson_train_skipped=skip_train,
        pearson_on_expert=pc_expert,
        pearson_expert_skipped=skip_expert,
        goodness_on_expert=g,
        reward_source=reward_source,
    )


def save_report(report: AnalysisReport, path, provenance=None):
    blob = vars(report).copy()
    if provenance:
        blob["provenance"] = provenance
    with open(path, "w") as f:
        json.dump(blob, f, indent=2)


def format_report(report: AnalysisReport) -> str:
    lines = [
        f"reward source:      {report.reward_source}",
        f"performance:        {report.performance:.1f}",
        f"PC train dataset:   {report.pearson_on_train:.3f}"
        f" (skipped {report.pearson_train_skipped})",
        f"PC expert dataset:  {report.pearson_on_expert:.3f}"
        f" (skipped {report.pearson_expert_skipped})",
        f"G expert dataset:   {report.goodness_on_expert:.3f}",
    ]
    return "\n".join(lines)
