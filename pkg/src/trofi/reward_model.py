"""State-based reward inference from ranked trajectories.

The model scores single (normalized) states; trajectory quality is the sum
of per-state scores. Training minimizes a pairwise softmax ranking loss over
random length-L windows from pairs of ranked trajectories, evaluated in
log-space so long windows cannot overflow. A held-out slice of the ranking
is kept aside to report pairwise accuracy on full trajectories.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .dataset import NormStats, OfflineDataset, normalized, split_trajectories, with_rewards
from .errors import DivergenceError, PreconditionError, ShapeError
from .nn import Mlp, Rng
from .ranking import RankedSet

HOLDOUT_FRACTION = 0.1
LOG_EVERY = 100


@dataclass
class RewardModel:
    net: Mlp                 # normalized state -> scalar
    norm_stats: NormStats
    env_name: str


@dataclass
class RewardTrainConfig:
    snippet_length: int = 25
    pairs_per_update: int = 64
    updates: int = 5000
    learning_rate: float = 3e-4
    hidden_sizes: list = field(default_factory=lambda: [64, 64])
    seed: int = 0


@dataclass
class SnippetPair:
    low_states: np.ndarray    # (L, state_dim) from the worse trajectory
    high_states: np.ndarray   # (L, state_dim) from the better trajectory


def predict_rewards(model: RewardModel, states) -> np.ndarray:
    """Score raw (unnormalized) states; returns a flat array."""
    s = np.asarray(states, dtype=np.float64)
    if s.ndim == 1:
        s = s[None, :]
    if s.shape[1] != model.net.in_dim:
        raise ShapeError(f"state dim {s.shape[1]} != model input {model.net.in_dim}")
    z = (s - model.norm_stats.mean) / model.norm_stats.std
    return nn.forward(model.net, z)[:, 0]


def _states_by_episode(dataset: OfflineDataset):
    return {t.episode_id: t.states() for t in split_trajectories(dataset)}


def sample_snippet_pairs(ranked: RankedSet, dataset: OfflineDataset,
                         config: RewardTrainConfig, rng):
    """Draw config.pairs_per_update windowed pairs from ranked trajectories.

    Each pair picks two distinct ranked trajectories uniformly, labels the
    higher-ranked one as high, and samples an independent start index for
    each length-L window.
    """
    states = _states_by_episode(dataset)
    return _sample_pairs(ranked.trajectory_ids, states, config.snippet_length,
                         config.pairs_per_update, rng)


def _sample_pairs(order, states_by_id, length, n_pairs, gen):
    if len(order) < 2:
        raise PreconditionError("need at least 2 ranked trajectories")
    for eid in order:
        if len(states_by_id[eid]) < length:
            raise PreconditionError(
                f"episode {eid} has {len(states_by_id[eid])} steps, "
                f"shorter than snippet length {length}")
    n = len(order)
    pairs = []
    for _ in range(n_pairs):
        i, j = gen.choice(n, size=2, replace=False)
        lo, hi = (i, j) if i < j else (j, i)   # later in order = better
        low = states_by_id[order[lo]]
        high = states_by_id[order[hi]]
        ls = gen.integers(0, len(low) - length + 1)
        hs = gen.integers(0, len(high) - length + 1)
        pairs.append(SnippetPair(low[ls:ls + length], high[hs:hs + length]))
    return pairs


def trex_loss(model: RewardModel, pairs):
    """Mean pairwise ranking loss and exact parameter gradients.

    Per pair with predicted sums (lo, hi): loss = log(1 + exp(lo - hi)),
    the log-space form of -log(exp(hi) / (exp(lo) + exp(hi))).
    """
    if not pairs:
        raise PreconditionError("no snippet pairs")
    n = len(pairs)
    lengths_low = np.array([len(p.low_states) for p in pairs])
    lengths_high = np.array([len(p.high_states) for p in pairs])
    stacked = np.concatenate([np.concatenate([p.low_states for p in pairs]),
                              np.concatenate([p.high_states for p in pairs])])
    out = nn.forward(model.net, stacked)[:, 0]
    if not np.all(np.isfinite(out)):
        raise DivergenceError("non-finite reward predictions")
    n_low = int(lengths_low.sum())
    low_sums = _segment_sums(out[:n_low], lengths_low)
    high_sums = _segment_sums(out[n_low:], lengths_high)
    margin = low_sums - high_sums
    losses = np.logaddexp(0.0, margin)
    # d loss / d margin = sigmoid(margin), shared by every state of a snippet
    sig = _sigmoid(margin) / n
    upstream = np.concatenate([np.repeat(sig, lengths_low),
                               np.repeat(-sig, lengths_high)])[:, None]
    grads = nn.backward(model.net, stacked, upstream)
    return float(losses.mean()), grads


def _segment_sums(values, lengths):
    ends = np.cumsum(lengths)
    starts = ends - lengths
    return np.add.reduceat(values, starts) if len(values) else np.zeros(0)


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def pair_loss_from_sums(low_sum, high_sum) -> float:
    """Closed-form per-pair loss; handy for oracles and diagnostics."""
    return float(np.logaddexp(0.0, low_sum - high_sum))


def train_reward(ranked: RankedSet, dataset: OfflineDataset, config: RewardTrainConfig):
    """Adam on fresh snippet-pair batches; returns (model, training log).

    The dataset may arrive raw or already normalized; the stats used are
    recorded on the model so labeling always happens in the same space.
    10% of the ranked trajectories (when there are at least 4) are held out
    for the pairwise-accuracy diagnostic and never used in training pairs.
    """
    norm_ds, stats = normalized(dataset)
    states = _states_by_episode(norm_ds)
    for eid in ranked.trajectory_ids:
        if eid not in states:
            raise PreconditionError(f"ranked episode {eid} not present in dataset")

    order = list(ranked.trajectory_ids)
    holdout_order = []
    # pairwise accuracy needs at least 2 held-out trajectories; below that
    # (small ranked sets) every trajectory goes to training and the
    # diagnostic is reported as nan
    n_hold = int(np.ceil(HOLDOUT_FRACTION * len(order)))
    if n_hold >= 2 and len(order) - n_hold >= 2:
        gen = Rng(config.seed, 101).generator()
        hold_idx = set(gen.choice(len(order), size=n_hold, replace=False).tolist())
        holdout_order = [eid for i, eid in enumerate(order) if i in hold_idx]
        order = [eid for i, eid in enumerate(order) if i not in hold_idx]

    net = nn.init([norm_ds.states().shape[1]] + list(config.hidden_sizes) + [1],
                  Rng(config.seed, 100))
    model = RewardModel(net, stats, dataset.env_name)
    adam = nn.adam_init(net, learning_rate=config.learning_rate)
    gen = Rng(config.seed, 102).generator()
    acc_rng = Rng(config.seed, 103)

    log = []
    for update in range(config.updates):
        pairs = _sample_pairs(order, states, config.snippet_length,
                              config.pairs_per_update, gen)
        loss, grads = trex_loss(model, pairs)
        nn.adam_step(net, grads, adam)
        if update % LOG_EVERY == 0 or update == config.updates - 1:
            acc = float("nan")
            if holdout_order:
                holdout = RankedSet(holdout_order, ranked.source,
                                    ranked.env_name, ranked.dataset_hash)
                acc = pairwise_accuracy(model, holdout, norm_ds, 200,
                                        acc_rng.child(update).generator())
            log.append({"update": update, "loss": loss, "holdout_accuracy": acc})
    return model, log


def pairwise_accuracy(model: RewardModel, ranked_holdout: RankedSet,
                      dataset: OfflineDataset, n_pairs: int, rng) -> float:
    """Fraction of sampled full-trajectory pairs ordered correctly.

    Ties count as failures. The dataset must be in the model's input space
    (normalized with the model's stats) or raw.
    """
    order = ranked_holdout.trajectory_ids
    if len(order) < 2:
        raise PreconditionError("need at least 2 holdout trajectories")
    sums = _trajectory_sums(model, dataset, order)
    correct = 0
    for _ in range(n_pairs):
        i, j = rng.choice(len(order), size=2, replace=False)
        lo, hi = (i, j) if i < j else (j, i)
        if sums[order[hi]] > sums[order[lo]]:
            correct += 1
    return correct / n_pairs


def _trajectory_sums(model, dataset, ids):
    if dataset.norm_stats is not None:
        score = lambda s: nn.forward(model.net, s)[:, 0]
    else:
        score = lambda s: predict_rewards(model, s)
    states = _states_by_episode(dataset)
    return {eid: float(score(states[eid]).sum()) for eid in ids}


def label_dataset(dataset: OfflineDataset, model: RewardModel,
                  overwrite=False) -> OfflineDataset:
    """Set every transition's reward to the model's score of its state."""
    if dataset.labeled and not overwrite:
        raise PreconditionError("dataset already labeled; pass overwrite=True to relabel")
    if dataset.norm_stats is not None:
        rewards = nn.forward(model.net, dataset.states())[:, 0]
    else:
        rewards = predict_rewards(model, dataset.states())
    return with_rewards(dataset, rewards)


def save_reward_model(model: RewardModel, config: RewardTrainConfig, path):
    blob = {
        "net": nn.to_checkpoint(model.net),
        "norm_stats": {"mean": model.norm_stats.mean.tolist(),
                       "std": model.norm_stats.std.tolist()},
        "env_name": model.env_name,
        "config": {"snippet_length": config.snippet_length,
                   "pairs_per_update": config.pairs_per_update,
                   "updates": config.updates,
                   "learning_rate": config.learning_rate,
                   "hidden_sizes": list(config.hidden_sizes),
                   "seed": config.seed},
    }
    with open(path, "w") as f:
        json.dump(blob, f)


def load_reward_model(path) -> RewardModel:
    with open(path) as f:
        blob = json.load(f)
    stats = NormStats(mean=np.asarray(blob["norm_stats"]["mean"]),
                      std=np.asarray(blob["norm_stats"]["std"]))
    return RewardModel(nn.from_checkpoint(blob["net"]), stats, blob["env_name"])


def save_training_log(log, path):
    with open(path, "w") as f:
        f.write("update,loss,holdout_accuracy\n")
        for row in log:
            f.write(f"{row['update']},{row['loss']!r},{row['holdout_accuracy']!r}\n")
