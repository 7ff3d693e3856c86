"""One random-policy episode through the RL interface, traced to JSONL.

Shows the reset/step loop, the observation layout, the reward events a
random controller actually triggers, and the per-step trace file you can
replay offline.
"""

import collections
import json
import tempfile

import numpy as np

from sortline.env import SortingLineEnv


def main():
    env = SortingLineEnv(reward="r2", max_steps=100, record_trace=True)
    rng = np.random.default_rng(7)

    obs = env.reset(seed=7)
    print(f"observation: shape {obs.shape}, dtype {obs.dtype}, "
          f"nonzero entries {int(np.count_nonzero(obs))}")
    print(f"products this episode: {list(env.colors)}")

    events = collections.Counter()
    total = 0.0
    while True:
        action = int(rng.integers(env.action_count))
        res = env.step(action)
        total += res.reward
        events[res.info["event"]] += 1
        if res.terminated or res.truncated:
            print(f"episode over: terminated={res.terminated} truncated={res.truncated} "
                  f"after {env.steps} steps, return {total:+.3f}")
            break

    print("event counts:")
    for ev, n in events.most_common():
        print(f"  {ev:18s} {n}")

    with tempfile.NamedTemporaryFile("r", suffix=".jsonl", delete=False) as fh:
        path = fh.name
    env.write_trace(path)
    with open(path) as fh:
        lines = fh.readlines()
    print(f"\ntrace: {len(lines)} lines at {path}")
    first, last = json.loads(lines[0]), json.loads(lines[-1])
    print(f"  first: step {first['step']}, event {first['event']}, "
          f"occupied places {sorted(first['marking'])}")
    print(f"  last:  step {last['step']}, event {last['event']}")


if __name__ == "__main__":
    main()
