"""Command-line pipeline: gen-data, rank, train-reward, label, train-policy,
evaluate, analyze, pipeline, serve-rank.

Each stage consumes the previous stage's files from the output directory and
records what it wrote (with checksums) in manifest.json. Exit codes: 0 ok,
2 usage, 3 missing upstream artifact, 4 numeric failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import analysis, dataset as ds, envs, policy, ranking, reward_model as rm, server
from .errors import (ConfigError, DataFormatError, DependencyError, DivergenceError,
                     PreconditionError, RankingValidationError, ShapeError)

DATASET_FILE = "dataset.jsonl"
DATASET_GT_FILE = "dataset.gt.jsonl"
DATASET_LABELED_FILE = "dataset.labeled.jsonl"
RANKING_FILE = "ranking.json"
REWARD_MODEL_FILE = "reward_model.json"
REWARD_LOG_FILE = "reward_train_log.csv"
AGENT_FILE = "agent.json"
POLICY_LOG_FILE = "policy_train_log.csv"
EVAL_FILE = "eval.json"
REPORT_FILE = "report.json"
MANIFEST_FILE = "manifest.json"

REWARD_SOURCES = ("trofi", "gt", "constant", "random")
PIPELINE_METHODS = ("trofi", "bc", "gt", "constant", "random")

# The evaluation protocol: a fixed number of fresh episodes after training
# finishes, rather than the trailing episodes of periodic evaluation.
PROTOCOL_NOTE = "evaluation runs after training completes (100 fresh episodes)"


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class Manifest:
    """Per-output-directory record of stages, artifacts, and checksums."""

    def __init__(self, out_dir):
        self.dir = Path(out_dir)
        self.path = self.dir / MANIFEST_FILE
        if self.path.exists():
            with open(self.path) as f:
                self.blob = json.load(f)
        else:
            self.blob = {"stages": {}, "artifacts": {}, "metrics": {},
                         "protocol_notes": [PROTOCOL_NOTE]}

    def record(self, stage, config, files, elapsed, metrics=None):
        self.blob["stages"][stage] = {
            "config": config,
            "elapsed_s": round(elapsed, 3),
            "completed": datetime.now(timezone.utc).isoformat(),
        }
        for f in files:
            rel = str(Path(f).relative_to(self.dir))
            self.blob["artifacts"][rel] = sha256_file(f)
        if metrics:
            self.blob["metrics"].update(metrics)
        with open(self.path, "w") as f:
            json.dump(self.blob, f, indent=2, sort_keys=True)


def out_dir(args):
    d = Path(args.out or os.environ.get("TROFI_OUT") or ".")
    d.mkdir(parents=True, exist_ok=True)
    return d


def require(path, hint):
    if not Path(path).exists():
        raise DependencyError(f"missing {path}; run `{hint}` first")
    return path


def load_policy_config(args):
    cfg = policy.PolicyConfig(seed=args.seed)
    for name in ("alpha", "gamma", "tau", "batch_size"):
        if getattr(args, name, None) is not None:
            cfg = replace(cfg, **{name: getattr(args, name)})
    if args.policy_updates is not None:
        cfg = replace(cfg, updates=args.policy_updates)
    if getattr(args, "hidden", None):
        cfg = replace(cfg, hidden_sizes=[int(h) for h in args.hidden.split(",")])
    return cfg.validate()


def load_reward_config(args):
    cfg = rm.RewardTrainConfig(seed=args.seed)
    if args.reward_updates is not None:
        cfg = replace(cfg, updates=args.reward_updates)
    if args.snippet_length is not None:
        cfg = replace(cfg, snippet_length=args.snippet_length)
    if args.pairs_per_update is not None:
        cfg = replace(cfg, pairs_per_update=args.pairs_per_update)
    if getattr(args, "hidden", None):
        cfg = replace(cfg, hidden_sizes=[int(h) for h in args.hidden.split(",")])
    return cfg


def cmd_gen_data(args):
    d = out_dir(args)
    env = envs.get_env(args.env)
    t0 = time.time()
    data = ds.generate_dataset(env, args.tier, args.n, args.seed)
    gt_path = d / DATASET_GT_FILE
    free_path = d / DATASET_FILE
    ds.save_dataset(data, gt_path)
    ds.save_dataset(ds.strip_rewards(data), free_path)
    trajs = ds.split_trajectories(data)
    rets = [t.episodic_return for t in trajs]
    Manifest(d).record(
        "gen-data",
        {"env": args.env, "tier": args.tier, "n": args.n, "seed": args.seed},
        [gt_path, free_path], time.time() - t0,
        metrics={"episodes": len(trajs),
                 "mean_episodic_return": float(np.mean(rets))},
    )
    print(f"wrote {free_path} and {gt_path} ({len(trajs)} episodes)")
    return 0


def cmd_rank(args):
    d = out_dir(args)
    t0 = time.time()
    if args.source == "human":
        if not args.infile:
            raise ConfigError("--source human requires --in <ranking file>")
        data = ds.load_dataset(require(d / DATASET_FILE, "trofi gen-data"))
        ranked = ranking.import_human_ranking(args.infile, data)
    else:
        gt = require(d / DATASET_GT_FILE,
                     "trofi gen-data (oracle ranking needs the ground-truth companion)")
        data = ds.load_dataset(gt)
        ranked = ranking.oracle_rank_dataset(data, args.fraction, args.seed)
    if args.perturb:
        ranked = ranking.perturb_ranking(ranked, args.perturb, args.seed)
    path = d / RANKING_FILE
    ranking.save_ranking(ranked, path)
    Manifest(d).record(
        "rank",
        {"source": args.source, "fraction": args.fraction,
         "perturb": args.perturb, "seed": args.seed},
        [path], time.time() - t0,
        metrics={"ranked_trajectories": len(ranked)},
    )
    print(f"wrote {path} ({len(ranked)} trajectories, source={ranked.source})")
    return 0


def cmd_train_reward(args):
    d = out_dir(args)
    data = ds.load_dataset(require(d / DATASET_FILE, "trofi gen-data"))
    ranked = ranking.load_ranking(require(d / RANKING_FILE, "trofi rank"))
    ranking.validate_order(ranked.trajectory_ids, data, expected_hash=ranked.dataset_hash)
    cfg = load_reward_config(args)
    t0 = time.time()
    model, log = rm.train_reward(ranked, data, cfg)
    model_path = d / REWARD_MODEL_FILE
    log_path = d / REWARD_LOG_FILE
    rm.save_reward_model(model, cfg, model_path)
    rm.save_training_log(log, log_path)
    Manifest(d).record(
        "train-reward", vars(cfg).copy(), [model_path, log_path], time.time() - t0,
        metrics={"reward_final_loss": log[-1]["loss"],
                 "reward_holdout_accuracy": log[-1]["holdout_accuracy"]},
    )
    print(f"wrote {model_path} (final holdout accuracy "
          f"{log[-1]['holdout_accuracy']:.3f})")
    return 0


def cmd_label(args):
    d = out_dir(args)
    data = ds.load_dataset(require(d / DATASET_FILE, "trofi gen-data"))
    model = rm.load_reward_model(require(d / REWARD_MODEL_FILE, "trofi train-reward"))
    t0 = time.time()
    labeled = rm.label_dataset(data, model)
    path = d / DATASET_LABELED_FILE
    ds.save_dataset(labeled, path)
    Manifest(d).record("label", {}, [path], time.time() - t0)
    print(f"wrote {path}")
    return 0


def _policy_dataset(args, d):
    """Pick the training dataset for the requested reward source."""
    if args.bc:
        return ds.load_dataset(require(d / DATASET_FILE, "trofi gen-data"))
    if args.reward == "trofi":
        return ds.load_dataset(require(d / DATASET_LABELED_FILE, "trofi label"))
    if args.reward == "gt":
        return ds.load_dataset(require(d / DATASET_GT_FILE, "trofi gen-data"))
    base = ds.load_dataset(require(d / DATASET_FILE, "trofi gen-data"))
    mode = "constant_zero" if args.reward == "constant" else "uniform_random"
    return policy.substitute_rewards(base, mode, args.seed)


def cmd_train_policy(args):
    d = out_dir(args)
    data = _policy_dataset(args, d)
    cfg = load_policy_config(args)
    t0 = time.time()
    if args.bc:
        agent, log = policy.train_bc(data, cfg)
    else:
        agent, log = policy.train_policy(data, cfg)
    agent_path = d / AGENT_FILE
    log_path = d / POLICY_LOG_FILE
    policy.save_agent(agent, agent_path, cfg)
    with open(log_path, "w") as f:
        keys = sorted({k for row in log for k in row})
        f.write(",".join(keys) + "\n")
        for row in log:
            f.write(",".join(repr(row.get(k, "")) for k in keys) + "\n")
    stage = "train-policy-bc" if args.bc else f"train-policy-{args.reward}"
    Manifest(d).record(stage, vars(cfg).copy() | {"reward": args.reward, "bc": args.bc},
                       [agent_path, log_path], time.time() - t0)
    print(f"wrote {agent_path}")
    return 0


def cmd_evaluate(args):
    d = out_dir(args)
    agent = policy.load_agent(require(d / AGENT_FILE, "trofi train-policy"))
    env = envs.get_env(agent.env_name)
    t0 = time.time()
    result = policy.evaluate(agent, env, n_episodes=args.episodes, seed=args.seed)
    path = d / EVAL_FILE
    with open(path, "w") as f:
        json.dump({"env": env.name, "episodes": args.episodes, "seed": args.seed,
                   "mean_return": result.mean, "std_return": result.std,
                   "normalized_score": result.normalized_score,
                   "per_episode_returns": result.per_episode_returns}, f, indent=2)
    Manifest(d).record("evaluate", {"episodes": args.episodes, "seed": args.seed},
                       [path], time.time() - t0,
                       metrics={"normalized_score": result.normalized_score})
    print(f"normalized score {result.normalized_score:.1f} "
          f"({result.mean:.1f} +- {result.std:.1f} raw)")
    return 0


def cmd_analyze(args):
    d = out_dir(args)
    agent_path = require(args.agent or d / AGENT_FILE, "trofi train-policy")
    agent = policy.load_agent(agent_path)
    train_path = require(args.train_data or d / DATASET_LABELED_FILE, "trofi label")
    train_data = ds.load_dataset(train_path)
    expert_path = require(args.expert_data or d / "expert.gt.jsonl",
                          "trofi gen-data --tier expert (expert data for goodness)")
    expert_data = ds.load_dataset(expert_path)
    env = envs.get_env(agent.env_name)

    with open(agent_path) as f:
        saved_cfg = json.load(f).get("config") or {}
    cfg = analysis.AnalysisConfig(gamma=saved_cfg.get("gamma", 0.99), seed=args.seed)
    t0 = time.time()
    report = analysis.build_report(agent, env, train_data, expert_data, cfg,
                                   reward_source=args.reward_source,
                                   eval_episodes=args.episodes)
    path = d / REPORT_FILE
    analysis.save_report(report, path, provenance={
        "agent": sha256_file(agent_path),
        "train_data": sha256_file(train_path),
        "expert_data": sha256_file(expert_path),
        "gamma": cfg.gamma,
        "pearson_aggregation": "per-trajectory mean",
    })
    Manifest(d).record("analyze", {"reward_source": args.reward_source},
                       [path], time.time() - t0)
    print(analysis.format_report(report))
    return 0


def _run_method(method, seed_dir, data, gt_data, args, base_cfg):
    """One method on one seed's data; returns its EvalResult."""
    mdir = seed_dir / method
    mdir.mkdir(parents=True, exist_ok=True)
    cfg = replace(base_cfg, seed=base_cfg.seed)
    if method == "bc":
        agent, _ = policy.train_bc(data, cfg)
    elif method == "gt":
        agent, _ = policy.train_policy(gt_data, cfg)
    elif method in ("constant", "random"):
        mode = "constant_zero" if method == "constant" else "uniform_random"
        agent, _ = policy.train_policy(
            policy.substitute_rewards(data, mode, cfg.seed), cfg)
    elif method == "trofi":
        ranked = ranking.oracle_rank_dataset(gt_data, args.fraction, cfg.seed)
        if args.perturb:
            ranked = ranking.perturb_ranking(ranked, args.perturb, cfg.seed)
        ranking.save_ranking(ranked, seed_dir / RANKING_FILE)
        rw_cfg = load_reward_config(args)
        rw_cfg = replace(rw_cfg, seed=cfg.seed)
        model, rw_log = rm.train_reward(ranked, data, rw_cfg)
        rm.save_reward_model(model, rw_cfg, seed_dir / REWARD_MODEL_FILE)
        rm.save_training_log(rw_log, seed_dir / REWARD_LOG_FILE)
        labeled = rm.label_dataset(data, model)
        ds.save_dataset(labeled, seed_dir / DATASET_LABELED_FILE)
        agent, _ = policy.train_policy(labeled, cfg)
    else:
        raise ConfigError(f"unknown method {method!r}")
    policy.save_agent(agent, mdir / AGENT_FILE, cfg)
    env = envs.get_env(data.env_name)
    result = policy.evaluate(agent, env, n_episodes=args.episodes,
                             seed=cfg.seed + 1000)
    with open(mdir / EVAL_FILE, "w") as f:
        json.dump({"normalized_score": result.normalized_score,
                   "mean_return": result.mean, "std_return": result.std}, f)
    return agent, result


def cmd_pipeline(args):
    d = out_dir(args)
    env = envs.get_env(args.env)
    methods = [m.strip() for m in args.methods.split(",")]
    for m in methods:
        if m not in PIPELINE_METHODS:
            raise ConfigError(f"unknown method {m!r}; known: {list(PIPELINE_METHODS)}")
    seeds = [args.seed + i for i in range(args.n_seeds)]
    t0 = time.time()

    scores = {m: [] for m in methods}
    failures = {}
    produced = []
    for seed in seeds:
        seed_dir = d / f"seed_{seed}"
        seed_dir.mkdir(parents=True, exist_ok=True)
        gt_data = ds.generate_dataset(env, args.tier, args.n, seed)
        data = ds.strip_rewards(gt_data)
        ds.save_dataset(gt_data, seed_dir / DATASET_GT_FILE)
        ds.save_dataset(data, seed_dir / DATASET_FILE)
        produced += [seed_dir / DATASET_GT_FILE, seed_dir / DATASET_FILE]
        base_cfg = load_policy_config(args)
        base_cfg = replace(base_cfg, seed=seed)
        trofi_agent = None
        for method in methods:
            try:
                agent, result = _run_method(method, seed_dir, data, gt_data,
                                            args, base_cfg)
                scores[method].append(result.normalized_score)
                produced += [seed_dir / method / AGENT_FILE,
                             seed_dir / method / EVAL_FILE]
                if method == "trofi":
                    trofi_agent = agent
                    produced += [seed_dir / RANKING_FILE,
                                 seed_dir / REWARD_MODEL_FILE,
                                 seed_dir / REWARD_LOG_FILE,
                                 seed_dir / DATASET_LABELED_FILE]
            except Exception as e:  # partial results survive single failures
                failures[f"{method}/seed_{seed}"] = f"{type(e).__name__}: {e}"
        if trofi_agent is not None and args.analyze:
            expert = ds.generate_dataset(env, "expert", args.n, seed)
            ds.save_dataset(expert, seed_dir / "expert.gt.jsonl")
            labeled = ds.load_dataset(seed_dir / DATASET_LABELED_FILE)
            cfg = analysis.AnalysisConfig(gamma=base_cfg.gamma, seed=seed)
            report = analysis.build_report(trofi_agent, env, labeled, expert, cfg,
                                           reward_source="trofi",
                                           eval_episodes=args.episodes)
            analysis.save_report(report, seed_dir / REPORT_FILE)
            produced += [seed_dir / "expert.gt.jsonl", seed_dir / REPORT_FILE]

    lines = [f"# Results: {args.env} / {args.tier}", "",
             f"{args.n_seeds} seeds (base {args.seed}), "
             f"{args.episodes} evaluation episodes per seed, "
             f"normalized score mean +- std over seed means.", "",
             "| method | score |", "| --- | --- |"]
    for m in methods:
        if scores[m]:
            lines.append(f"| {m} | {np.mean(scores[m]):.1f} "
                         f"&plusmn; {np.std(scores[m]):.1f} |")
        else:
            lines.append(f"| {m} | FAILED |")
    if failures:
        lines += ["", "## Failures", ""]
        lines += [f"- {k}: {v}" for k, v in sorted(failures.items())]
    results_path = d / "results.md"
    results_path.write_text("\n".join(lines) + "\n")
    produced.append(results_path)

    Manifest(d).record(
        "pipeline",
        {"env": args.env, "tier": args.tier, "n": args.n, "seeds": seeds,
         "methods": methods, "fraction": args.fraction, "perturb": args.perturb},
        produced, time.time() - t0,
        metrics={f"score_{m}": float(np.mean(v)) for m, v in scores.items() if v},
    )
    print(results_path.read_text())
    if failures:
        print(f"{len(failures)} run(s) failed; see results.md", file=sys.stderr)
    return 0


def cmd_serve_rank(args):
    d = out_dir(args)
    data = ds.load_dataset(require(d / DATASET_FILE, "trofi gen-data"))
    out_path = d / RANKING_FILE
    print(f"serving ranking session on http://127.0.0.1:{args.port} "
          f"({len(ds.split_trajectories(data))} episodes, fraction {args.fraction})")
    try:
        server.serve(data, out_path, fraction=args.fraction, seed=args.seed,
                     port=args.port, ui_dir=args.ui_dir)
    except OSError as e:
        print(f"cannot serve on port {args.port}: {e}", file=sys.stderr)
        return 1
    Manifest(d).record("serve-rank", {"fraction": args.fraction, "seed": args.seed},
                       [out_path], 0.0)
    print(f"wrote {out_path}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(
        prog="trofi",
        description="Offline RL from ranked trajectories: learn a reward from "
                    "preferences, label the dataset, train TD3+BC.")
    p.add_argument("--config", help="JSON file whose values override flags")
    sub = p.add_subparsers(dest="command", required=True)

    def add_out(sp):
        sp.add_argument("--out", help="output directory (default $TROFI_OUT or .)")
        sp.add_argument("--seed", type=int, default=0)

    sp = sub.add_parser("gen-data", help="collect an offline dataset")
    add_out(sp)
    sp.add_argument("--env", required=True, choices=envs.ENV_NAMES)
    sp.add_argument("--tier", required=True, choices=ds.TIERS)
    sp.add_argument("--n", type=int, default=10000, help="transition budget")

    sp = sub.add_parser("rank", help="rank a subset of trajectories")
    add_out(sp)
    sp.add_argument("--fraction", type=float, default=1.0)
    sp.add_argument("--source", choices=("oracle", "human"), default="oracle")
    sp.add_argument("--perturb", type=float, default=0.0,
                    help="swap this fraction of ranked positions")
    sp.add_argument("--in", dest="infile", help="human ranking file to import")

    sp = sub.add_parser("train-reward", help="fit the reward model to the ranking")
    add_out(sp)
    sp.add_argument("--reward-updates", type=int, default=None)
    sp.add_argument("--snippet-length", type=int, default=None)
    sp.add_argument("--pairs-per-update", type=int, default=None)
    sp.add_argument("--hidden", default=None, help="comma-separated layer sizes")

    sp = sub.add_parser("label", help="label the dataset with the reward model")
    add_out(sp)

    sp = sub.add_parser("train-policy", help="offline policy optimization")
    add_out(sp)
    sp.add_argument("--reward", choices=REWARD_SOURCES, default="trofi")
    sp.add_argument("--bc", action="store_true", help="behavioral cloning baseline")
    sp.add_argument("--policy-updates", type=int, default=None)
    sp.add_argument("--alpha", type=float, default=None)
    sp.add_argument("--gamma", type=float, default=None)
    sp.add_argument("--tau", type=float, default=None)
    sp.add_argument("--batch-size", type=int, default=None)
    sp.add_argument("--hidden", default=None)

    sp = sub.add_parser("evaluate", help="run evaluation episodes")
    add_out(sp)
    sp.add_argument("--episodes", type=int, default=100)

    sp = sub.add_parser("analyze", help="value-function diagnostics report")
    add_out(sp)
    sp.add_argument("--agent", default=None)
    sp.add_argument("--train-data", default=None)
    sp.add_argument("--expert-data", default=None)
    sp.add_argument("--reward-source", default="trofi")
    sp.add_argument("--episodes", type=int, default=100)

    sp = sub.add_parser("pipeline", help="full multi-seed experiment")
    add_out(sp)
    sp.add_argument("--env", required=True, choices=envs.ENV_NAMES)
    sp.add_argument("--tier", required=True, choices=ds.TIERS)
    sp.add_argument("--n", type=int, default=10000)
    sp.add_argument("--n-seeds", type=int, default=5)
    sp.add_argument("--methods", default=",".join(PIPELINE_METHODS))
    sp.add_argument("--fraction", type=float, default=1.0)
    sp.add_argument("--perturb", type=float, default=0.0)
    sp.add_argument("--episodes", type=int, default=100)
    sp.add_argument("--analyze", action="store_true",
                    help="emit report.json for the trofi agent per seed")
    sp.add_argument("--reward-updates", type=int, default=None)
    sp.add_argument("--snippet-length", type=int, default=None)
    sp.add_argument("--pairs-per-update", type=int, default=None)
    sp.add_argument("--policy-updates", type=int, default=None)
    sp.add_argument("--alpha", type=float, default=None)
    sp.add_argument("--gamma", type=float, default=None)
    sp.add_argument("--tau", type=float, default=None)
    sp.add_argument("--batch-size", type=int, default=None)
    sp.add_argument("--hidden", default=None)

    sp = sub.add_parser("serve-rank", help="serve the ranking UI endpoint")
    add_out(sp)
    sp.add_argument("--port", type=int, default=8712)
    sp.add_argument("--fraction", type=float, default=1.0)
    sp.add_argument("--ui-dir", default=None, help="built UI assets to serve at /")

    return p


COMMANDS = {
    "gen-data": cmd_gen_data,
    "rank": cmd_rank,
    "train-reward": cmd_train_reward,
    "label": cmd_label,
    "train-policy": cmd_train_policy,
    "evaluate": cmd_evaluate,
    "analyze": cmd_analyze,
    "pipeline": cmd_pipeline,
    "serve-rank": cmd_serve_rank,
}


def apply_config_file(args):
    if not args.config:
        return args
    with open(args.config) as f:
        overrides = json.load(f)
    for key, value in overrides.items():
        attr = key.replace("-", "_")
        if not hasattr(args, attr):
            raise ConfigError(f"config file sets unknown option {key!r}")
        setattr(args, attr, value)
    return args


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args = apply_config_file(args)
        return COMMANDS[args.command](args)
    except (ConfigError, PreconditionError, RankingValidationError,
            DataFormatError, ShapeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except DependencyError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except (DivergenceError, FloatingPointError) as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
