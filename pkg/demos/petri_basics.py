"""Walk through the Petri net engine on a three-stage mini pipeline.

Two machines with different speeds move a part from an input buffer to an
output buffer.  Shows enabling, timed firing (tokens vanish into a hidden
countdown place until the work finishes), tick delivery, and what a
capacity collision looks like.

Run:  python3 demos/petri_basics.py
"""

import numpy as np

from sortline.petri import (CARRIAGE, CollisionDetected, Marking, PetriNet,
                            Place, Transition, enabled_transitions, fire,
                            tick, validate_net)


def show(net: PetriNet, m: Marking) -> None:
    cells = []
    for i, p in enumerate(net.places):
        if p.cls == "hidden":
            continue
        toks = m.contents[i]
        cells.append(f"{p.name}={len(toks)}")
    busy = [net.places[tr.hidden].name
            for tr in net.transitions if m.contents[tr.hidden]]
    print(f"  tick {m.tick}: " + "  ".join(cells)
          + (f"   (working: {', '.join(busy)})" if busy else ""))


def build():
    places = [
        Place("input", "storage", None),      # unbounded buffer
        Place("station", "regular", 1),       # single fixture
        Place("output", "regular", 1),        # single outgoing slot
        Place("h_load", "hidden", 1),
        Place("h_mill", "hidden", 1),
    ]
    #                 load  mill
    pre = np.array([[1, 0],     # input
                    [0, 1],     # station
                    [0, 0],     # output
                    [0, 0],
                    [0, 0]])
    post = np.array([[0, 0],
                     [1, 0],
                     [0, 1],
                     [0, 0],
                     [0, 0]])
    transitions = [
        Transition("load", 1, "move", 3),   # one tick to load the fixture
        Transition("mill", 2, "move", 4),   # two ticks of machining
    ]
    return PetriNet(places, transitions, pre, post)


def main():
    net = build()
    LOAD, MILL = net.transition_index("load"), net.transition_index("mill")
    m = net.marking({"input": [CARRIAGE, CARRIAGE, CARRIAGE]})
    problems = validate_net(net, m)
    print(f"structural check: {'clean' if not problems else problems}")

    print("\nnormal flow:")
    show(net, m)
    m = fire(net, m, LOAD)           # token leaves input, timer starts
    show(net, m)
    m, done = tick(net, m)            # timer expires, station receives
    print(f"  completed: {[net.transitions[c.transition].name for c in done]}")
    show(net, m)
    m = fire(net, m, MILL)
    m, _ = tick(net, m)               # 1 of 2 ticks done, nothing delivered
    show(net, m)
    m, done = tick(net, m)
    print(f"  completed: {[net.transitions[c.transition].name for c in done]}")
    show(net, m)

    print("\nwhat the engine refuses or catches:")
    print(f"  enabled now: {[net.transitions[t].name for t in enabled_transitions(net, m)]}")
    # drive a second part into the occupied output slot
    m = fire(net, m, LOAD)
    m, _ = tick(net, m)
    m = fire(net, m, MILL)
    m, _ = tick(net, m)
    try:
        tick(net, m)
    except CollisionDetected as exc:
        print(f"  collision: {net.places[exc.place].name} already full when "
              f"{net.transitions[exc.transition].name} finished")


if __name__ == "__main__":
    main()
