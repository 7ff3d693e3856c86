"""Multi-seed experiment harness: training runs, evaluation, comparison.

A *run* is one (algorithm, reward scheme) cell trained on several seeds.
Each seed writes two CSVs (per-episode training log, periodic greedy
evaluations), a final and a best checkpoint, and a summary.  The run root
holds the fully-resolved config and a manifest.  ``compare`` aggregates
several runs into a small report with mean/std across seeds.

Numbers written to the CSVs are deterministic for a given config and seed:
floats are rendered with repr (shortest round-trip form) and no wall-clock
data goes into them, so re-running a seed reproduces its files byte for
byte.  Timestamps and durations live only in the manifest.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .dqn import DqnConfig, dqn_train
from .env import SortingLineEnv
from .factory import ConfigError, FactoryConfig
from .ppo import PpoConfig, ppo_train
from .neural import Network, save_checkpoint

ALGOS = ("dqn", "ppo")
REWARDS = ("r1", "r2")
ALL_CELLS = tuple((a, r) for a in ALGOS for r in REWARDS)

EPISODE_HEADER = ["episode", "reward", "length", "success", "correct", "missort", "collision"]
EVAL_HEADER = ["episode", "eval_success", "eval_correct_pct", "eval_len_mean"]


class MissingRun(Exception):
    """A comparison cell has no completed run behind it."""


@dataclass
class RunConfig:
    algo: str = "dqn"
    reward: str = "r1"
    seeds: tuple = (1, 2, 3, 4, 5)
    episodes: int = 20_000
    n_products: int = 3
    max_steps: int = 100
    eval_every: int = 100
    eval_episodes: int = 5
    final_eval_episodes: int = 100
    smooth_window: int = 200
    parallel: int = 1
    out: str = "runs/run"
    durations: dict = field(default_factory=dict)
    dqn: DqnConfig = field(default_factory=DqnConfig)
    ppo: PpoConfig = field(default_factory=PpoConfig)

    def __post_init__(self):
        if self.algo not in ALGOS:
            raise ConfigError(f"algo must be one of {ALGOS}, got {self.algo!r}")
        if self.reward not in REWARDS:
            raise ConfigError(f"reward must be one of {REWARDS}, got {self.reward!r}")
        self.seeds = tuple(int(s) for s in self.seeds)
        if not self.seeds:
            raise ConfigError("need at least one seed")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError(f"duplicate seeds in {self.seeds}")
        for name in ("episodes", "max_steps", "eval_every", "eval_episodes",
                     "final_eval_episodes", "smooth_window", "parallel"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        doc = dict(doc)
        kwargs = {}
        for sub_name, sub_cls in (("dqn", DqnConfig), ("ppo", PpoConfig)):
            sub = doc.pop(sub_name, {})
            if not isinstance(sub, dict):
                raise ConfigError(f"'{sub_name}' section must be an object")
            known = {f.name for f in dataclasses.fields(sub_cls)}
            bad = set(sub) - known
            if bad:
                raise ConfigError(f"unknown {sub_name} option(s): {', '.join(sorted(bad))}")
            if "hidden" in sub:
                sub["hidden"] = tuple(sub["hidden"])
            kwargs[sub_name] = sub_cls(**sub)
        known = {f.name for f in dataclasses.fields(cls)} - {"dqn", "ppo"}
        bad = set(doc) - known
        if bad:
            raise ConfigError(f"unknown option(s): {', '.join(sorted(bad))}")
        return cls(**doc, **kwargs)


def config_hash(cfg: RunConfig) -> str:
    blob = json.dumps(cfg.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def make_env(cfg: RunConfig) -> SortingLineEnv:
    return SortingLineEnv(reward=cfg.reward, n_products=cfg.n_products,
                          max_steps=cfg.max_steps,
                          config=FactoryConfig(durations=dict(cfg.durations)))


# ---------------------------------------------------------------- CSV I/O

def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header, rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_cell(row[h]) for h in header))
    Path(path).write_text("\n".join(lines) + "\n")


def read_csv(path) -> list:
    """Read a CSV written by write_csv; numeric cells come back as floats."""
    lines = Path(path).read_text().strip().splitlines()
    header = lines[0].split(",")

    def parse(v):
        try:
            return float(v)
        except ValueError:
            return v

    out = []
    for line in lines[1:]:
        out.append({k: parse(v) for k, v in zip(header, line.split(","))})
    return out


# ------------------------------------------------------------- evaluation

@dataclass
class EvalMetrics:
    success_rate: float
    correct_pct: float
    len_mean: float  # mean length of the successful episodes (0 when none)
    reward_mean: float
    episode_rows: list = field(default_factory=list, repr=False)


def evaluate_policy(env, policy, episodes: int, seed_parts) -> EvalMetrics:
    """Run deterministic-policy episodes; aggregate success and accuracy.

    ``policy(obs) -> action``.  Episode k is reset with seed
    ``[*seed_parts, k]`` so any two calls with equal arguments see the very
    same product sequences.  The reported mean length covers successful
    episodes only (the time-to-complete metric); failures would otherwise
    drown it in truncation lengths.
    """
    if episodes < 1:
        raise ConfigError(f"need at least one evaluation episode, got {episodes}")
    succ = 0
    correct_total = 0
    products_total = 0
    succ_len_sum = 0
    reward_sum = 0.0
    per_episode = []
    for k in range(episodes):
        obs = env.reset(seed=[*list(seed_parts), k])
        ep_reward = 0.0
        steps = 0
        while True:
            res = env.step(policy(obs))
            obs = res.observation
            ep_reward += res.reward
            steps += 1
            if res.terminated or res.truncated:
                break
        won = res.info.get("event") == "goal-reached"
        succ += int(won)
        if won:
            succ_len_sum += steps
        correct_total += int(res.info.get("correct", 0))
        products_total += int(getattr(env, "n_products", 1))
        reward_sum += ep_reward
        per_episode.append({"episode": k + 1, "success": int(won),
                            "correct": int(res.info.get("correct", 0)),
                            "length": steps, "reward": ep_reward})
    return EvalMetrics(
        success_rate=succ / episodes,
        correct_pct=100.0 * correct_total / max(products_total, 1),
        len_mean=succ_len_sum / succ if succ else 0.0,
        reward_mean=reward_sum / episodes,
        episode_rows=per_episode,
    )


def random_policy(n_actions: int, seed) -> callable:
    rng = np.random.default_rng(seed)
    return lambda obs: int(rng.integers(0, n_actions))


def greedy_from_model(algo: str, model) -> callable:
    if algo == "dqn":
        return lambda obs: int(np.argmax(model.forward(obs)))
    return model.greedy


def snapshot_from_model(algo: str, model) -> dict:
    if algo == "dqn":
        return {"algo": "dqn", "net": model.to_dict()}
    return {"algo": "ppo", **model.snapshot()}


def load_policy(doc: dict) -> callable:
    """Rebuild a greedy policy function from a checkpoint payload."""
    algo = doc.get("algo")
    if algo == "dqn":
        net = Network.from_dict(doc["net"])
        return lambda obs: int(np.argmax(net.forward(obs)))
    if algo == "ppo":
        if doc["mode"] == "shared":
            net = Network.from_dict(doc["net"])
            n_actions = net.layer_sizes[-1] - 1
            return lambda obs: int(np.argmax(net.forward(obs)[:n_actions]))
        net = Network.from_dict(doc["policy"])
        return lambda obs: int(np.argmax(net.forward(obs)))
    raise ConfigError(f"checkpoint has unknown algo {algo!r}")


# ---------------------------------------------------------------- training

def run_seed(cfg: RunConfig, seed: int) -> dict:
    """Train one seed of one cell; write its artifacts; return its summary."""
    seed_dir = Path(cfg.out) / f"seed_{seed}"
    seed_dir.mkdir(parents=True, exist_ok=True)
    env_fn = lambda: make_env(cfg)  # noqa: E731
    eval_env = make_env(cfg)

    eval_rows = []
    best = {"success": -1.0, "snapshot": None, "episode": 0}

    def on_episode(ep_count, model):
        if ep_count % cfg.eval_every != 0:
            return
        met = evaluate_policy(eval_env, greedy_from_model(cfg.algo, model),
                              cfg.eval_episodes, [seed, 5, ep_count])
        eval_rows.append({"episode": ep_count, "eval_success": met.success_rate,
                          "eval_correct_pct": met.correct_pct,
                          "eval_len_mean": met.len_mean})
        if met.success_rate >= best["success"]:
            best.update(success=met.success_rate,
                        snapshot=snapshot_from_model(cfg.algo, model),
                        episode=ep_count)

    t0 = time.perf_counter()
    if cfg.algo == "dqn":
        result = dqn_train(env_fn, cfg.dqn, cfg.episodes, seed, callback=on_episode)
        final_model = result.qnet
    else:
        result = ppo_train(env_fn, cfg.ppo, cfg.episodes, seed, callback=on_episode)
        final_model = result.agent
    duration = time.perf_counter() - t0

    write_csv(seed_dir / "episodes.csv", EPISODE_HEADER, result.episode_rows)
    write_csv(seed_dir / "evals.csv", EVAL_HEADER, eval_rows)

    meta = {"format": 1, "algo": cfg.algo, "reward": cfg.reward, "seed": seed,
            "config_hash": config_hash(cfg)}
    final_snapshot = snapshot_from_model(cfg.algo, final_model)
    save_checkpoint(seed_dir / "checkpoint_final.json", {**meta, **final_snapshot})
    if best["snapshot"] is None:
        best.update(snapshot=final_snapshot, episode=cfg.episodes, success=0.0)
    save_checkpoint(seed_dir / "checkpoint_best.json",
                    {**meta, **best["snapshot"], "best_eval_success": best["success"],
                     "best_at_episode": best["episode"]})

    final_eval = evaluate_policy(eval_env, greedy_from_model(cfg.algo, final_model),
                                 cfg.final_eval_episodes, [seed, 6])
    best_eval = evaluate_policy(eval_env, load_policy(best["snapshot"]),
                                cfg.final_eval_episodes, [seed, 6])
    write_csv(seed_dir / "final_eval.csv",
              ["episode", "success", "correct", "length", "reward"],
              final_eval.episode_rows)

    def _metrics(m: EvalMetrics) -> dict:
        return {"success_rate": m.success_rate, "correct_pct": m.correct_pct,
                "len_mean": m.len_mean, "reward_mean": m.reward_mean}

    summary = {
        "seed": seed,
        "episodes": cfg.episodes,
        "env_steps": result.env_steps,
        "duration_s": duration,
        "final_eval": _metrics(final_eval),
        "best_eval": _metrics(best_eval),
        "best_at_episode": best["episode"],
    }
    # the summary file doubles as the completion marker for resume
    (seed_dir / "seed_summary.json").write_text(json.dumps(summary, indent=2))
    return summary


def run_training(cfg: RunConfig) -> Path:
    """Train every seed of the cell (skipping completed ones), write manifest."""
    run_dir = Path(cfg.out)
    run_dir.mkdir(parents=True, exist_ok=True)
    cfg_path = run_dir / "config.json"
    if cfg_path.exists():
        old = json.loads(cfg_path.read_text())
        if old.get("config_hash") != config_hash(cfg):
            raise ConfigError(f"{run_dir} already holds a run with a different config")
    else:
        cfg_path.write_text(json.dumps(
            {"config_hash": config_hash(cfg), **cfg.to_dict()}, indent=2))

    started = time.strftime("%Y-%m-%dT%H:%M:%S")
    summaries = {}
    pending = []
    for seed in cfg.seeds:
        marker = run_dir / f"seed_{seed}" / "seed_summary.json"
        if marker.exists():
            summaries[seed] = json.loads(marker.read_text())
        else:
            pending.append(seed)

    if cfg.parallel > 1 and len(pending) > 1:
        with ProcessPoolExecutor(max_workers=cfg.parallel) as pool:
            for seed, summary in zip(pending, pool.map(run_seed,
                                                       [cfg] * len(pending), pending)):
                summaries[seed] = summary
    else:
        for seed in pending:
            summaries[seed] = run_seed(cfg, seed)

    manifest = {
        "format": 1,
        "algo": cfg.algo,
        "reward": cfg.reward,
        "config": cfg.to_dict(),
        "config_hash": config_hash(cfg),
        "package_version": __version__,
        "numpy_version": np.__version__,
        "started": started,
        "finished": time.strftime("%Y-%m-%dT%H:%M:%S"),
        "seeds": {str(s): summaries[s] for s in cfg.seeds},
    }
    (run_dir / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return run_dir


# --------------------------------------------------------------- analysis

def smooth(series, window: int) -> np.ndarray:
    """Trailing moving average; early points average what exists so far."""
    x = np.asarray(series, dtype=np.float64)
    if window < 1:
        raise ConfigError(f"window must be >= 1, got {window}")
    if x.size == 0:
        return x.copy()
    c = np.cumsum(x)
    out = np.empty_like(x)
    n = x.shape[0]
    head = min(window, n)
    out[:head] = c[:head] / np.arange(1, head + 1)
    if n > window:
        out[window:] = (c[window:] - c[:-window]) / window
    return out


@dataclass
class ComparisonReport:
    cells: dict      # (algo, reward) -> stats dict
    window: int
    flags: list
    out_dir: Path


def _load_run(run_dir: Path) -> dict:
    manifest_path = Path(run_dir) / "manifest.json"
    if not manifest_path.exists():
        raise MissingRun(f"no manifest.json under {run_dir}")
    return json.loads(manifest_path.read_text())


def compare(run_dirs, out_dir, window: int = 200, allow_partial: bool = False) -> ComparisonReport:
    """Aggregate completed runs into per-cell statistics and curves.

    Expects one run per (algorithm, reward) cell; raises :class:`MissingRun`
    listing the absent cells unless ``allow_partial``.  Statistics are the
    mean and population std across seeds of each seed's final greedy
    evaluation; curves are the periodic evaluations, smoothed per seed with
    a trailing window, then averaged across seeds.
    """
    by_cell = {}
    for rd in run_dirs:
        man = _load_run(Path(rd))
        cell = (man["algo"], man["reward"])
        store = by_cell.setdefault(cell, {"seeds": {}, "dirs": []})
        store["dirs"].append(str(rd))
        for s, summary in man["seeds"].items():
            if s in store["seeds"]:
                raise ConfigError(f"seed {s} of cell {cell} appears in two runs")
            seed_dir = Path(rd) / f"seed_{s}"
            store["seeds"][s] = {
                "summary": summary,
                "evals": read_csv(seed_dir / "evals.csv"),
                "finals": read_csv(seed_dir / "final_eval.csv"),
            }

    missing = [c for c in ALL_CELLS if c not in by_cell]
    if missing and not allow_partial:
        raise MissingRun("no completed run for cell(s): "
                         + ", ".join(f"{a}/{r}" for a, r in missing))

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cells = {}
    flags = []
    summary_rows = []
    curve_rows = []
    length_rows = []
    for cell in sorted(by_cell):
        algo, reward = cell
        seeds = by_cell[cell]["seeds"]
        order = sorted(seeds, key=int)
        finals = [seeds[s]["summary"]["final_eval"] for s in order]
        succ = np.array([f["success_rate"] for f in finals])
        corr = np.array([f["correct_pct"] for f in finals])
        lens = np.array([f["len_mean"] for f in finals])
        if len(order) == 1:
            flags.append(f"{algo}/{reward}: single seed, std is degenerate")
        stats = {
            "algo": algo, "reward": reward, "n_seeds": len(order),
            "success_mean": float(succ.mean()), "success_std": float(succ.std()),
            "correct_pct_mean": float(corr.mean()), "correct_pct_std": float(corr.std()),
            "len_mean": float(lens.mean()), "len_std": float(lens.std()),
            "seeds": [int(s) for s in order],
        }
        cells[cell] = stats
        summary_rows.append({**stats, "note": "single-seed" if len(order) == 1 else ""})

        # episode-length distribution over successful final-eval episodes
        hist = {}
        for s in order:
            for row in seeds[s]["finals"]:
                if row["success"]:
                    L = int(row["length"])
                    hist[L] = hist.get(L, 0) + 1
        for L in sorted(hist):
            length_rows.append({"algo": algo, "reward": reward,
                                "length": L, "count": hist[L]})

        # curves: per-seed smoothed eval success on a common episode grid
        grids = [tuple(int(r["episode"]) for r in seeds[s]["evals"]) for s in order]
        if grids and all(g == grids[0] for g in grids) and grids[0]:
            eps = grids[0]
            mat = np.stack([smooth([r["eval_success"] for r in seeds[s]["evals"]], window)
                            for s in order])
            mean = mat.mean(axis=0)
            std = mat.std(axis=0)
            for j, e in enumerate(eps):
                curve_rows.append({"algo": algo, "reward": reward, "episode": e,
                                   "success_mean": float(mean[j]),
                                   "success_std": float(std[j])})

    write_csv(out_dir / "summary.csv",
              ["algo", "reward", "n_seeds", "success_mean", "success_std",
               "correct_pct_mean", "correct_pct_std", "len_mean", "len_std", "note"],
              summary_rows)
    write_csv(out_dir / "curves.csv",
              ["algo", "reward", "episode", "success_mean", "success_std"],
              curve_rows)
    write_csv(out_dir / "lengths.csv",
              ["algo", "reward", "length", "count"], length_rows)
    report = {
        "window": window,
        "cells": {f"{a}/{r}": cells[(a, r)] for a, r in sorted(cells)},
        "flags": flags,
    }
    (out_dir / "report.json").write_text(json.dumps(report, indent=2))
    return ComparisonReport(cells, window, flags, out_dir)
