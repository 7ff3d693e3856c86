"""Tour of the full sorting line and one hand-scripted episode.

Prints the station layout (places grouped by role, transition durations),
then lets the built-in scripted operator run a three-product episode to
completion while we watch the deliveries land.
"""


from sortline.env import SortingLineEnv
from sortline.factory import build_factory, scripted_action


def tour(topo):
    net = topo.net
    print("places by role:")
    groups = [
        ("resource", topo.resource_places),
        ("storage", topo.storage_places),
        ("regular", topo.regular_places),
        ("regular_short", topo.short_places),
        ("hidden", topo.hidden_places),
    ]
    for role, idx in groups:
        names = [net.places[i].name for i in idx]
        print(f"  {role:13s} ({len(idx):2d}): {', '.join(names)}")

    print("\ntransitions (action index, duration in ticks):")
    for t, tr in enumerate(net.transitions):
        print(f"  {t:2d}  {tr.name:22s} d={tr.duration}")
    print(f"  {topo.non_action:2d}  (wait / do nothing)")
    print(f"\nactions: {topo.n_actions}   observation length: {topo.obs_length}")


def run_scripted(colors):
    env = SortingLineEnv(reward="r1", max_steps=100)
    obs = env.reset(colors=colors)
    print(f"\nscripted operator, products: {list(colors)}")
    total = 0.0
    while True:
        a = scripted_action(env.topology, env.marking)
        res = env.step(a)
        total += res.reward
        ev = res.info["event"]
        if ev not in ("transition-fired", "non-action"):
            name = "wait" if a == env.topology.non_action else env.topology.net.transitions[a].name
            print(f"  step {env.steps:3d}  action={name:18s} event={ev}")
        if res.terminated or res.truncated:
            break
    print(f"episode return {total:+.3f}, correct deliveries {env.correct}/{env.n_products}, "
          f"{env.steps} steps")


def main():
    topo = build_factory()
    tour(topo)
    run_scripted(["blue", "green", "blue"])
    run_scripted(["green", "green", "green"])


if __name__ == "__main__":
    main()
