"""Offline dataset generation, normalization, and JSONL serialization.

Datasets mirror the D4RL tier structure on the toy tasks: the same expert
controller collects every tier, with the exploration-noise scale deciding
quality (expert 0.05, medium 0.4, medium-replay annealed 1.0 -> 0.1,
medium-expert = equal halves of medium and expert). Only whole episodes are
stored, and rewards are an optional field so the reward-free view of the
data is visible in the type.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace

import numpy as np

from .envs import EnvSpec, get_env, run_expert_episodes
from .errors import ConfigError, DataFormatError, PreconditionError

TIERS = ("expert", "medium", "medium-replay", "medium-expert")
TIER_NOISE = {"expert": 0.05, "medium": 0.4}
REPLAY_NOISE_START, REPLAY_NOISE_END = 1.0, 0.1

STD_FLOOR = 1e-3
FORMAT_VERSION = 1


@dataclass
class Transition:
    state: np.ndarray
    action: np.ndarray
    next_state: np.ndarray
    reward: float | None
    episode_id: int
    step_index: int


@dataclass
class Trajectory:
    episode_id: int
    transitions: list
    episodic_return: float | None = None

    def __len__(self):
        return len(self.transitions)

    def states(self):
        return np.stack([t.state for t in self.transitions])

    def actions(self):
        return np.stack([t.action for t in self.transitions])


@dataclass
class NormStats:
    mean: np.ndarray
    std: np.ndarray


@dataclass
class OfflineDataset:
    env_name: str
    tier: str
    transitions: list
    labeled: bool
    norm_stats: NormStats | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    def __len__(self):
        return len(self.transitions)

    # Columnar views; datasets are immutable after construction so these are
    # built once and reused by the training loops.
    def _column(self, key, fn):
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]

    def states(self):
        return self._column("s", lambda: np.stack([t.state for t in self.transitions]))

    def actions(self):
        return self._column("a", lambda: np.stack([t.action for t in self.transitions]))

    def next_states(self):
        return self._column("ns", lambda: np.stack([t.next_state for t in self.transitions]))

    def rewards(self):
        if not self.labeled:
            raise PreconditionError("dataset is reward-free")
        return self._column("r", lambda: np.array([t.reward for t in self.transitions]))


def generate_dataset(env: EnvSpec, tier: str, n_transitions: int, seed: int) -> OfflineDataset:
    """Collect whole episodes until n_transitions is covered (floor).

    The result carries ground-truth reward labels; strip_rewards produces
    the reward-free view.
    """
    if tier not in TIERS:
        raise ConfigError(f"unknown tier {tier!r}; known: {list(TIERS)}")
    horizon = env.max_episode_steps
    n_episodes = n_transitions // horizon
    if n_episodes < 1:
        raise PreconditionError(
            f"n_transitions={n_transitions} is less than one episode ({horizon} steps)")

    if tier == "medium-expert":
        n_medium = n_episodes - n_episodes // 2
        parts = [("medium", TIER_NOISE["medium"], n_medium, 0),
                 ("expert", TIER_NOISE["expert"], n_episodes // 2, n_medium)]
    elif tier == "medium-replay":
        scales = np.linspace(REPLAY_NOISE_START, REPLAY_NOISE_END, n_episodes)
        parts = [("medium-replay", scales, n_episodes, 0)]
    else:
        parts = [(tier, TIER_NOISE[tier], n_episodes, 0)]

    transitions = []
    for _, scales, count, first_id in parts:
        if count == 0:
            continue
        states, actions, rewards = run_expert_episodes(env, count, seed, scales,
                                                       first_episode_id=first_id)
        for i in range(count):
            eid = first_id + i
            for t in range(horizon):
                transitions.append(Transition(
                    state=states[i, t].copy(),
                    action=actions[i, t].copy(),
                    next_state=states[i, t + 1].copy(),
                    reward=float(rewards[i, t]),
                    episode_id=eid,
                    step_index=t,
                ))
    return OfflineDataset(env.name, tier, transitions, labeled=True)


def strip_rewards(dataset: OfflineDataset) -> OfflineDataset:
    """Reward-free view of the same transitions."""
    if not dataset.labeled:
        raise PreconditionError("dataset is already reward-free")
    stripped = [replace(t, reward=None) for t in dataset.transitions]
    return OfflineDataset(dataset.env_name, dataset.tier, stripped, labeled=False,
                          norm_stats=dataset.norm_stats)


def with_rewards(dataset: OfflineDataset, rewards) -> OfflineDataset:
    """New labeled dataset with the given per-transition rewards."""
    r = np.asarray(rewards, dtype=np.float64)
    if r.shape != (len(dataset),):
        raise PreconditionError(f"got {r.shape[0] if r.ndim else 0} rewards "
                                f"for {len(dataset)} transitions")
    labeled = [replace(t, reward=float(v)) for t, v in zip(dataset.transitions, r)]
    return OfflineDataset(dataset.env_name, dataset.tier, labeled, labeled=True,
                          norm_stats=dataset.norm_stats)


def compute_norm_stats(dataset: OfflineDataset) -> NormStats:
    """Per-feature mean/std over all states; std floored at 1e-3."""
    if len(dataset) == 0:
        raise PreconditionError("empty dataset")
    s = dataset.states()
    return NormStats(mean=s.mean(axis=0), std=np.maximum(s.std(axis=0), STD_FLOOR))


def apply_normalization(dataset: OfflineDataset, stats: NormStats) -> OfflineDataset:
    """Normalize states and next_states with the same stats."""
    if dataset.norm_stats is not None:
        raise PreconditionError("dataset is already normalized")
    out = [replace(t,
                   state=(t.state - stats.mean) / stats.std,
                   next_state=(t.next_state - stats.mean) / stats.std)
           for t in dataset.transitions]
    return OfflineDataset(dataset.env_name, dataset.tier, out, labeled=dataset.labeled,
                          norm_stats=stats)


def normalized(dataset: OfflineDataset):
    """(normalized dataset, stats); no-op when already normalized."""
    if dataset.norm_stats is not None:
        return dataset, dataset.norm_stats
    stats = compute_norm_stats(dataset)
    return apply_normalization(dataset, stats), stats


def split_trajectories(dataset: OfflineDataset):
    """Group transitions into whole episodes, ordered by episode_id."""
    if "trajs" in dataset._cache:
        return dataset._cache["trajs"]
    by_episode = {}
    for t in dataset.transitions:
        by_episode.setdefault(t.episode_id, []).append(t)
    trajs = []
    for eid in sorted(by_episode):
        steps = sorted(by_episode[eid], key=lambda t: t.step_index)
        indices = [t.step_index for t in steps]
        if indices != list(range(len(steps))):
            raise DataFormatError(f"episode {eid}: step indices {indices[:5]}... "
                                  "are not contiguous from 0")
        ret = None
        if dataset.labeled:
            ret = float(sum(t.reward for t in steps))
        trajs.append(Trajectory(eid, steps, ret))
    dataset._cache["trajs"] = trajs
    return trajs


def dataset_hash(dataset: OfflineDataset) -> str:
    """Checksum of the reward-independent content.

    Rewards and normalization are excluded so the ground-truth and stripped
    views of the same data share a hash, which is what ranking files bind to.
    """
    h = hashlib.sha256()
    h.update(f"{dataset.env_name}|{dataset.tier}|".encode())
    for t in dataset.transitions:
        row = [t.episode_id, t.step_index, t.state.tolist(),
               t.action.tolist(), t.next_state.tolist()]
        h.update(json.dumps(row).encode())
    return h.hexdigest()


def save_dataset(dataset: OfflineDataset, path):
    """JSONL: header line with metadata, one transition object per line."""
    header = {
        "version": FORMAT_VERSION,
        "env": dataset.env_name,
        "tier": dataset.tier,
        "labeled": dataset.labeled,
        "norm_mean": dataset.norm_stats.mean.tolist() if dataset.norm_stats else None,
        "norm_std": dataset.norm_stats.std.tolist() if dataset.norm_stats else None,
    }
    with open(path, "w") as f:
        f.write(json.dumps(header) + "\n")
        for t in dataset.transitions:
            row = {"e": t.episode_id, "t": t.step_index, "s": t.state.tolist(),
                   "a": t.action.tolist(), "ns": t.next_state.tolist()}
            if dataset.labeled:
                row["r"] = t.reward
            f.write(json.dumps(row) + "\n")


def load_dataset(path) -> OfflineDataset:
    with open(path) as f:
        lines = f.read().splitlines()
    if not lines:
        raise DataFormatError("empty file", line=1)
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as e:
        raise DataFormatError(f"bad header: {e}", line=1) from None
    for key in ("env", "tier", "labeled"):
        if key not in header:
            raise DataFormatError(f"header missing {key!r}", line=1)
    labeled = header["labeled"]
    transitions = []
    for i, raw in enumerate(lines[1:], start=2):
        try:
            row = json.loads(raw)
            transitions.append(Transition(
                state=np.asarray(row["s"], dtype=np.float64),
                action=np.asarray(row["a"], dtype=np.float64),
                next_state=np.asarray(row["ns"], dtype=np.float64),
                reward=float(row["r"]) if labeled else None,
                episode_id=int(row["e"]),
                step_index=int(row["t"]),
            ))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
            raise DataFormatError(f"bad transition: {e}", line=i) from None
    if not transitions:
        raise DataFormatError("no transitions after header", line=1)
    stats = None
    if header.get("norm_mean") is not None:
        stats = NormStats(mean=np.asarray(header["norm_mean"], dtype=np.float64),
                          std=np.asarray(header["norm_std"], dtype=np.float64))
    return OfflineDataset(header["env"], header["tier"], transitions,
                          labeled=labeled, norm_stats=stats)


def relabel_ground_truth(dataset: OfflineDataset, env: EnvSpec | None = None) -> OfflineDataset:
    """Label every transition with the environment's ground-truth reward."""
    if dataset.norm_stats is not None:
        raise PreconditionError("ground-truth relabeling needs raw (unnormalized) states")
    env = env or get_env(dataset.env_name)
    from .envs import ground_truth_reward
    rewards = [ground_truth_reward(env, t.state, t.action, t.next_state)
               for t in dataset.transitions]
    return with_rewards(dataset, rewards)
