"""Ranked trajectory sets: oracle ranking, subsampling, corruption, import.

A RankedSet is a total order over episode ids, worst first. The oracle sorts
by ground-truth episodic return; human rankings arrive as JSON files written
by the browser tool and are validated against the dataset they claim to
describe (id existence, uniqueness, and a content hash that catches stale
rankings made from different data).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

from .dataset import OfflineDataset, dataset_hash, split_trajectories
from .errors import PreconditionError, RankingValidationError
from .nn import Rng

RANKING_SOURCES = ("oracle", "human", "perturbed")
RANKING_VERSION = 1


@dataclass
class RankedSet:
    trajectory_ids: list   # episode ids, worst -> best
    source: str
    env_name: str
    dataset_hash: str

    def __len__(self):
        return len(self.trajectory_ids)


def subsample_trajectories(dataset: OfflineDataset, fraction: float, seed: int):
    """Uniform sample without replacement of ceil(fraction * n) episodes."""
    if not 0.0 < fraction <= 1.0:
        raise PreconditionError(f"fraction must be in (0, 1], got {fraction}")
    trajs = split_trajectories(dataset)
    if len(trajs) < 2:
        raise PreconditionError("need at least 2 trajectories")
    k = math.ceil(fraction * len(trajs))
    if k < 2:
        raise PreconditionError(
            f"fraction {fraction} selects {k} of {len(trajs)} trajectories; "
            "pairwise ranking needs at least 2")
    gen = Rng(seed).generator()
    idx = sorted(gen.choice(len(trajs), size=k, replace=False).tolist())
    return [trajs[i] for i in idx]


def oracle_rank(trajectories, env_name="", dhash="") -> RankedSet:
    """Ascending ground-truth episodic return; ties broken by episode id."""
    for t in trajectories:
        if t.episodic_return is None:
            raise PreconditionError(f"episode {t.episode_id} has no episodic return")
    ordered = sorted(trajectories, key=lambda t: (t.episodic_return, t.episode_id))
    return RankedSet([t.episode_id for t in ordered], "oracle", env_name, dhash)


def oracle_rank_dataset(dataset: OfflineDataset, fraction=1.0, seed=0) -> RankedSet:
    """Subsample then oracle-rank, binding env name and dataset hash."""
    trajs = subsample_trajectories(dataset, fraction, seed)
    return oracle_rank(trajs, env_name=dataset.env_name, dhash=dataset_hash(dataset))


def perturb_ranking(ranked: RankedSet, swap_fraction: float, seed: int) -> RankedSet:
    """Swap floor(swap_fraction * n / 2) disjoint random position pairs."""
    if not 0.0 <= swap_fraction <= 1.0:
        raise PreconditionError(f"swap_fraction must be in [0, 1], got {swap_fraction}")
    ids = list(ranked.trajectory_ids)
    n = len(ids)
    n_swaps = int(swap_fraction * n / 2)
    if n_swaps > 0:
        gen = Rng(seed).generator()
        positions = gen.choice(n, size=2 * n_swaps, replace=False)
        for k in range(n_swaps):
            i, j = positions[2 * k], positions[2 * k + 1]
            ids[i], ids[j] = ids[j], ids[i]
    return RankedSet(ids, "perturbed", ranked.env_name, ranked.dataset_hash)


def save_ranking(ranked: RankedSet, path):
    with open(path, "w") as f:
        json.dump({
            "version": RANKING_VERSION,
            "env": ranked.env_name,
            "dataset_hash": ranked.dataset_hash,
            "source": ranked.source,
            "order": [int(i) for i in ranked.trajectory_ids],
        }, f)


def load_ranking(path) -> RankedSet:
    with open(path) as f:
        blob = json.load(f)
    return RankedSet(list(blob["order"]), blob["source"], blob["env"], blob["dataset_hash"])


def validate_order(order, dataset: OfflineDataset, expected_hash=None):
    """Shared order validation; raises RankingValidationError naming offenders."""
    known = {t.episode_id for t in split_trajectories(dataset)}
    seen = set()
    for eid in order:
        if eid not in known:
            raise RankingValidationError(f"unknown episode id {eid}")
        if eid in seen:
            raise RankingValidationError(f"duplicate episode id {eid}")
        seen.add(eid)
    if len(order) < 2:
        raise RankingValidationError("ranking must order at least 2 trajectories")
    if expected_hash is not None:
        actual = dataset_hash(dataset)
        if expected_hash != actual:
            raise RankingValidationError(
                f"stale ranking: dataset hash {expected_hash[:12]}... does not match "
                f"{actual[:12]}...")


def import_human_ranking(path, dataset: OfflineDataset) -> RankedSet:
    """Validate a UI-produced (or handwritten) ranking file against a dataset."""
    with open(path) as f:
        blob = json.load(f)
    order = [int(i) for i in blob["order"]]
    validate_order(order, dataset, expected_hash=blob.get("dataset_hash"))
    return RankedSet(order, "human", dataset.env_name, dataset_hash(dataset))
