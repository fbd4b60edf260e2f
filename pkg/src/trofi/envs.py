"""Deterministic toy continuous-control environments with known rewards.

Two tasks, both fixed-horizon double integrators:

- lineworld: 1-D cart pushed toward position 1.0; the fast smoke-test task.
- pointmass2d: 2-D point mass accelerating toward a per-episode goal.

State transitions are pure functions of (state, action, step counter), so
episodes can be rolled out in lockstep batches. `random_score` and
`expert_score` come from a checked-in calibration file (1000 episodes each)
and feed the normalized-score metric.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, PreconditionError
from .nn import Rng

ENV_NAMES = ("lineworld", "pointmass2d")

DT = 0.1
MAX_SPEED = 1.0
# PD gains for the built-in expert controller.
KP = 1.0
KD = 0.5

CALIBRATION_PATH = Path(__file__).parent / "calibration.json"


@dataclass(frozen=True)
class EnvSpec:
    name: str
    state_dim: int
    action_dim: int
    action_low: np.ndarray
    action_high: np.ndarray
    max_episode_steps: int
    random_score: float
    expert_score: float


def _load_calibration():
    if not CALIBRATION_PATH.exists():
        return {}
    with open(CALIBRATION_PATH) as f:
        entries = json.load(f)
    return {e["env"]: e for e in entries}


_CALIBRATION = _load_calibration()


def _make_spec(name, state_dim, action_dim, horizon):
    cal = _CALIBRATION.get(name, {})
    return EnvSpec(
        name=name,
        state_dim=state_dim,
        action_dim=action_dim,
        action_low=np.full(action_dim, -1.0),
        action_high=np.full(action_dim, 1.0),
        max_episode_steps=horizon,
        random_score=cal.get("random_score", float("nan")),
        expert_score=cal.get("expert_score", float("nan")),
    )


_REGISTRY = {
    "lineworld": _make_spec("lineworld", state_dim=2, action_dim=1, horizon=100),
    "pointmass2d": _make_spec("pointmass2d", state_dim=6, action_dim=2, horizon=200),
}


def get_env(name: str) -> EnvSpec:
    try:
        return _REGISTRY[name]
    except KeyError:
        raise ConfigError(f"unknown environment {name!r}; known: {sorted(_REGISTRY)}") from None


def _seed_generator(seed: int) -> np.random.Generator:
    return Rng(int(seed)).generator()


def reset(env: EnvSpec, seed: int) -> np.ndarray:
    """Deterministic initial state for this seed."""
    return reset_from(env, _seed_generator(seed))


def reset_from(env: EnvSpec, gen: np.random.Generator) -> np.ndarray:
    """Sample an initial state from an existing generator stream."""
    if env.name == "lineworld":
        pos = gen.uniform(-1.0, 0.5)
        return np.array([pos, 0.0])
    if env.name == "pointmass2d":
        pos = gen.uniform(-1.0, 1.0, size=2)
        goal = gen.uniform(-1.0, 1.0, size=2)
        return np.concatenate([pos, np.zeros(2), goal - pos])
    raise ConfigError(f"unknown environment {env.name!r}")


def _check_actions(env, actions):
    a = np.asarray(actions, dtype=np.float64)
    if np.any(np.abs(a) > env.action_high + 1e-12) or not np.all(np.isfinite(a)):
        raise PreconditionError(f"action out of bounds for {env.name}: {a}")
    return a


def step_batch(env: EnvSpec, states, actions):
    """Vectorized dynamics over (B, state_dim) x (B, action_dim).

    Returns (next_states, rewards). Rewards are evaluated on the next state
    (plus the action penalty where the task has one).
    """
    s = np.asarray(states, dtype=np.float64)
    a = _check_actions(env, actions)
    if env.name == "lineworld":
        vel = np.clip(s[:, 1] + DT * a[:, 0], -MAX_SPEED, MAX_SPEED)
        pos = s[:, 0] + DT * vel
        ns = np.stack([pos, vel], axis=1)
        rewards = -np.abs(pos - 1.0) - 0.01 * a[:, 0] ** 2
        return ns, rewards
    if env.name == "pointmass2d":
        pos, vel, offset = s[:, 0:2], s[:, 2:4], s[:, 4:6]
        goal = pos + offset
        vel = vel + DT * a
        speed = np.linalg.norm(vel, axis=1, keepdims=True)
        scale = np.where(speed > MAX_SPEED, MAX_SPEED / np.maximum(speed, 1e-12), 1.0)
        vel = vel * scale
        pos = pos + DT * vel
        new_offset = goal - pos
        ns = np.concatenate([pos, vel, new_offset], axis=1)
        rewards = -_offset_norm(new_offset)
        return ns, rewards
    raise ConfigError(f"unknown environment {env.name!r}")


def _offset_norm(offset):
    # single summation path so step and ground_truth_reward agree bit-for-bit
    return np.sqrt((offset * offset).sum(axis=-1))


def step(env: EnvSpec, state, action, t: int = 0):
    """Single transition; done is true iff the horizon is reached at t+1."""
    ns, r = step_batch(env, np.asarray(state)[None, :], np.asarray(action)[None, :])
    done = (t + 1) >= env.max_episode_steps
    return ns[0], float(r[0]), done


def ground_truth_reward(env: EnvSpec, state, action, next_state) -> float:
    """Pure reward function; equals the reward emitted by step."""
    a = np.asarray(action, dtype=np.float64)
    ns = np.asarray(next_state, dtype=np.float64)
    if env.name == "lineworld":
        return float(-np.abs(ns[0] - 1.0) - 0.01 * a[0] ** 2)
    if env.name == "pointmass2d":
        # goal - position is carried in the state, so the distance is just
        # the norm of the stored offset
        return float(-_offset_norm(ns[4:6]))
    raise ConfigError(f"unknown environment {env.name!r}")


def expert_action_batch(env: EnvSpec, states, noise=None):
    """PD controller toward the goal; optional pre-sampled unit noise."""
    s = np.asarray(states, dtype=np.float64)
    if env.name == "lineworld":
        raw = KP * (1.0 - s[:, 0:1]) - KD * s[:, 1:2]
    elif env.name == "pointmass2d":
        raw = KP * s[:, 4:6] - KD * s[:, 2:4]
    else:
        raise ConfigError(f"unknown environment {env.name!r}")
    if noise is not None:
        raw = raw + noise
    return np.clip(raw, env.action_low, env.action_high)


def expert_action(env: EnvSpec, state, noise_scale: float, rng: np.random.Generator):
    """Expert controller action with Gaussian exploration noise."""
    if noise_scale < 0:
        raise PreconditionError("noise_scale must be >= 0")
    noise = None
    if noise_scale > 0:
        noise = noise_scale * rng.normal(size=(1, env.action_dim))
    return expert_action_batch(env, np.asarray(state)[None, :], noise)[0]


def rollout_batch(env: EnvSpec, policy, init_states):
    """Run full lockstep episodes from (B, state_dim) initial states.

    policy(states, t) -> (B, action_dim) actions, already within bounds.
    Returns (states (B, H+1, d), actions (B, H, ad), rewards (B, H)).
    """
    b = init_states.shape[0]
    h = env.max_episode_steps
    states = np.empty((b, h + 1, env.state_dim))
    actions = np.empty((b, h, env.action_dim))
    rewards = np.empty((b, h))
    states[:, 0] = init_states
    cur = init_states
    for t in range(h):
        a = policy(cur, t)
        cur, r = step_batch(env, cur, a)
        states[:, t + 1] = cur
        actions[:, t] = a
        rewards[:, t] = r
    return states, actions, rewards


def _episode_inits_and_noise(env, seed, n_episodes, first_episode_id=0):
    """Per-episode streams derived from (seed, episode_id): the init draw
    comes first, then the episode's unit action noise."""
    inits = np.empty((n_episodes, env.state_dim))
    noise = np.empty((n_episodes, env.max_episode_steps, env.action_dim))
    for i in range(n_episodes):
        gen = Rng(seed, first_episode_id + i + 1).generator()
        inits[i] = reset_from(env, gen)
        noise[i] = gen.normal(size=(env.max_episode_steps, env.action_dim))
    return inits, noise


def run_expert_episodes(env: EnvSpec, n_episodes, seed, noise_scales, first_episode_id=0):
    """Expert episodes with per-episode noise scale (scalar or length-B array)."""
    scales = np.broadcast_to(np.asarray(noise_scales, dtype=np.float64), (n_episodes,))
    inits, noise = _episode_inits_and_noise(env, seed, n_episodes, first_episode_id)

    def policy(states, t):
        return expert_action_batch(env, states, scales[:, None] * noise[:, t])

    return rollout_batch(env, policy, inits)


def run_random_episodes(env: EnvSpec, n_episodes, seed):
    """Uniform-random policy episodes, one action stream per episode."""
    inits = np.empty((n_episodes, env.state_dim))
    acts = np.empty((n_episodes, env.max_episode_steps, env.action_dim))
    for i in range(n_episodes):
        gen = Rng(seed, i + 1).generator()
        inits[i] = reset_from(env, gen)
        acts[i] = gen.uniform(env.action_low, env.action_high,
                              size=(env.max_episode_steps, env.action_dim))
    return rollout_batch(env, lambda s, t: acts[:, t], inits)


def calibrate(env_name: str, episodes=1000, seed=0) -> dict:
    """Mean episodic return of the random policy and the clean expert."""
    env = get_env(env_name)
    _, _, rr = run_random_episodes(env, episodes, seed)
    _, _, er = run_expert_episodes(env, episodes, seed, 0.0)
    return {
        "env": env_name,
        "random_score": float(rr.sum(axis=1).mean()),
        "expert_score": float(er.sum(axis=1).mean()),
        "episodes": episodes,
        "seed": seed,
    }
