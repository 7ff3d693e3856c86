"""End-to-end mini experiment: train both learners, then compare.

Runs two seeds each of the value learner and the policy learner at a toy
budget (60 episodes, small networks), then builds the comparison report
the way the real experiment does.  At this budget nobody solves the line;
the point is to watch the whole pipeline produce its artifacts in about a
minute.
"""

import tempfile
from pathlib import Path

from sortline.dqn import DqnConfig
from sortline.ppo import PpoConfig
from sortline.harness import RunConfig, compare, read_csv, run_training


def tiny(algo, reward, out):
    return RunConfig(
        algo=algo, reward=reward, seeds=(1, 2), episodes=60,
        eval_every=20, eval_episodes=3, final_eval_episodes=5, out=str(out),
        dqn=DqnConfig(hidden=(32,), warmup=64, batch_size=32),
        ppo=PpoConfig(hidden=(32,), horizon=256, minibatch=64, epochs=2),
    )


def main():
    root = Path(tempfile.mkdtemp(prefix="sortline_quick_"))
    runs = []
    for algo in ("dqn", "ppo"):
        for reward in ("r1", "r2"):
            cfg = tiny(algo, reward, root / f"{algo}_{reward}")
            print(f"training {algo} {reward}, seeds {cfg.seeds}, "
                  f"{cfg.episodes} episodes ...")
            runs.append(run_training(cfg))

    rows = read_csv(runs[0] / "seed_1" / "episodes.csv")
    print(f"\n{runs[0].name}: seed 1 logged {len(rows)} episodes, "
          f"columns {list(rows[0])}")
    print(f"  last episode row: {rows[-1]}")

    report = compare(runs, root / "comparison", window=20)
    print(f"\ncomparison over {len(report.cells)} cells "
          f"(smoothing window {report.window}):")
    for (algo, reward), stats in sorted(report.cells.items()):
        print(f"  {algo}/{reward}: final eval success {stats['success_mean']:.3f} "
              f"+/- {stats['success_std']:.3f} over {stats['n_seeds']} seeds")
    print(f"\nartifacts in {root}")
    for p in sorted((root / "comparison").iterdir()):
        print(f"  comparison/{p.name}")


if __name__ == "__main__":
    main()
