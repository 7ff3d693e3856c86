"""Command line front end.

    sortline train    --config cfg.json [--algo ppo --reward r2 ...]
    sortline eval     --checkpoint runs/ppo_r1/seed_1/checkpoint_final.json
    sortline compare  runs/dqn_r1 runs/dqn_r2 runs/ppo_r1 runs/ppo_r2 --out cmp
    sortline describe [--json]
    sortline validate [--net net.json]

Option precedence for ``train``: built-in defaults, then the --config file,
then SORTLINE_* environment variables, then explicit flags.  Exit codes:
0 on success, 2 for configuration errors, 3 for missing runs or files.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .env import REWARD_TABLES, SortingLineEnv
from .factory import ConfigError, build_factory, base_marking, inject_products
from .harness import (MissingRun, RunConfig, compare, evaluate_policy,
                      load_policy, run_training)
from .neural import load_checkpoint
from .petri import from_json, to_json, validate_net

ENV_PREFIX = "SORTLINE_"
# train options that may come from the environment, with their parsers
_ENV_KEYS = {
    "algo": str, "reward": str, "out": str,
    "episodes": int, "parallel": int, "n_products": int, "max_steps": int,
    "eval_every": int, "seeds": lambda s: [int(x) for x in s.split(",") if x],
}


def _apply_env(doc: dict, environ) -> dict:
    for key, parse in _ENV_KEYS.items():
        raw = environ.get(ENV_PREFIX + key.upper())
        if raw is not None:
            try:
                doc[key] = parse(raw)
            except ValueError as exc:
                raise ConfigError(f"bad {ENV_PREFIX}{key.upper()}={raw!r}: {exc}") from exc
    return doc


def _cmd_train(args) -> int:
    doc = {}
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise MissingRun(f"config file not found: {path}")
        doc = json.loads(path.read_text())
        if not isinstance(doc, dict):
            raise ConfigError("config file must hold a JSON object")
        doc.pop("config_hash", None)  # allow reusing an emitted config.json
    _apply_env(doc, os.environ)
    for key in ("algo", "reward", "out"):
        val = getattr(args, key)
        if val is not None:
            doc[key] = val
    for key in ("episodes", "parallel", "n_products", "max_steps", "eval_every"):
        val = getattr(args, key)
        if val is not None:
            doc[key] = val
    if args.seeds is not None:
        doc["seeds"] = [int(x) for x in args.seeds.split(",") if x]

    cfg = RunConfig.from_dict(doc)
    run_dir = run_training(cfg)
    manifest = json.loads((run_dir / "manifest.json").read_text())
    print(f"run complete: {run_dir}")
    for seed, summary in manifest["seeds"].items():
        fe = summary["final_eval"]
        print(f"  seed {seed}: eval success {fe['success_rate']:.2f}, "
              f"correct {fe['correct_pct']:.1f}%, mean length {fe['len_mean']:.1f}")
    return 0


def _cmd_eval(args) -> int:
    path = Path(args.checkpoint)
    if not path.exists():
        raise MissingRun(f"checkpoint not found: {path}")
    doc = load_checkpoint(path)
    policy = load_policy(doc)
    reward = args.reward or doc.get("reward", "r1")
    env = SortingLineEnv(reward=reward, n_products=args.n_products,
                         max_steps=args.max_steps)
    metrics = evaluate_policy(env, policy, args.episodes, [args.seed, 6])
    print(json.dumps({
        "checkpoint": str(path), "algo": doc.get("algo"), "reward": reward,
        "episodes": args.episodes, "success_rate": metrics.success_rate,
        "correct_pct": metrics.correct_pct, "len_mean": metrics.len_mean,
        "reward_mean": metrics.reward_mean,
    }, indent=2))
    return 0


def _cmd_compare(args) -> int:
    report = compare(args.run_dirs, args.out, window=args.window,
                     allow_partial=args.allow_partial)
    print(f"comparison written to {report.out_dir}")
    for (algo, reward), stats in sorted(report.cells.items()):
        print(f"  {algo}/{reward}: success {stats['success_mean']:.3f} "
              f"+- {stats['success_std']:.3f} over {stats['n_seeds']} seed(s)")
    for flag in report.flags:
        print(f"  note: {flag}")
    return 0


def _cmd_describe(args) -> int:
    topo = build_factory()
    net = topo.net
    doc = {
        "places": [{"name": p.name, "class": p.cls, "capacity": p.capacity}
                   for p in net.places],
        "transitions": [{
            "action": t, "name": tr.name, "duration": tr.duration,
            "transform": tr.transform,
            "inputs": [net.places[p].name for p in range(len(net.places))
                       for _ in range(int(net.pre[p, t]))],
            "outputs": [net.places[p].name for p in range(len(net.places))
                        for _ in range(int(net.post[p, t]))],
        } for t, tr in enumerate(net.transitions)],
        "non_action_index": topo.non_action,
        "n_actions": topo.n_actions,
        "observation_length": topo.obs_length,
        "observation_blocks": {
            "resource (2 each)": len(topo.resource_places),
            "storage (1 each)": len(topo.storage_places),
            "regular (6 each)": len(topo.regular_places),
            "regular_short (4 each)": len(topo.short_places),
            "hidden (5 each)": len(topo.hidden_places),
        },
        "rewards": REWARD_TABLES,
    }
    if args.json:
        print(json.dumps(doc, indent=2))
        return 0
    print(f"sorting line: {len(net.places)} places, {len(net.transitions)} transitions, "
          f"{topo.n_actions} actions (index {topo.non_action} = wait), "
          f"observation length {topo.obs_length}")
    print("\nactions:")
    for tr in doc["transitions"]:
        arrows = f"{' + '.join(tr['inputs']) or '-'} -> {' + '.join(tr['outputs']) or '-'}"
        print(f"  [{tr['action']:2d}] {tr['name']:24s} {tr['duration']} tick(s)  {arrows}")
    print(f"  [{topo.non_action:2d}] wait")
    print("\nreward schemes:")
    for name, table in REWARD_TABLES.items():
        row = ", ".join(f"{k}={v}" for k, v in table.items())
        print(f"  {name}: {row}")
    return 0


def _cmd_validate(args) -> int:
    if args.net:
        path = Path(args.net)
        if not path.exists():
            raise MissingRun(f"net file not found: {path}")
        net = from_json(path.read_text())
        initial = None
    else:
        topo = build_factory()
        net = topo.net
        initial = inject_products(topo, base_marking(topo), ["green", "blue"])
    diags = validate_net(net, initial, budget=args.budget)
    if args.emit:
        Path(args.emit).write_text(to_json(net))
        print(f"net structure written to {args.emit}")
    if diags:
        print(f"{len(diags)} problem(s) found:")
        for d in diags:
            print(f"  - {d}")
        return 2
    print(f"net ok: {len(net.places)} places, {len(net.transitions)} transitions"
          + ("" if initial is None else ", all transitions reachable"))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sortline",
                                     description="sorting-line RL experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one (algo, reward) cell over seeds")
    p.add_argument("--config", help="JSON file with run options")
    p.add_argument("--algo", choices=["dqn", "ppo"])
    p.add_argument("--reward", choices=["r1", "r2"])
    p.add_argument("--seeds", help="comma-separated, e.g. 1,2,3,4,5")
    p.add_argument("--episodes", type=int)
    p.add_argument("--out")
    p.add_argument("--parallel", type=int)
    p.add_argument("--n-products", dest="n_products", type=int)
    p.add_argument("--max-steps", dest="max_steps", type=int)
    p.add_argument("--eval-every", dest="eval_every", type=int)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint greedily")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--episodes", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--reward", choices=["r1", "r2"])
    p.add_argument("--n-products", dest="n_products", type=int, default=3)
    p.add_argument("--max-steps", dest="max_steps", type=int, default=100)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("compare", help="aggregate runs into a comparison report")
    p.add_argument("run_dirs", nargs="+")
    p.add_argument("--out", default="compare")
    p.add_argument("--window", type=int, default=200)
    p.add_argument("--allow-partial", action="store_true")
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("describe", help="print the line topology and rewards")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_describe)

    p = sub.add_parser("validate", help="lint a net and probe reachability")
    p.add_argument("--net", help="net JSON file (default: the built-in line)")
    p.add_argument("--budget", type=int, default=10_000)
    p.add_argument("--emit", help="also write the net structure to this file")
    p.set_defaults(func=_cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except MissingRun as exc:
        print(f"missing: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
