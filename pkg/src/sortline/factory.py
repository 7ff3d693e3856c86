"""The material sorting line, built as a colored timed Petri net.

Layout (one possible walk of a product through the line):

    stores --load--> entry --belt--> rotary table --> assembly belt
        --rivet--> assembly station --belt back--> rotary table
        --> storage (green products)  or  --> exit belt --> exit (blue)

Carriage + lower part + upper part are assembled into one raw product when
the entry loader fires.  The assembly station installs rivets.  Green
products belong in the main storage, blue products must leave through the
exit; delivering anything else to those two sinks is a missort.  The rotary
table and the assembly station are guarded by resource tokens so only one
item can occupy them at a time.

Every action of the operator is one transition of the net; index 11 is the
deliberate non-action that just lets time pass.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .petri import (CARRIAGE, KIND_PRODUCT, RESOURCE, Marking, PetriNet,
                    Place, Transition, enabled_transitions, part)

COLOR_GREEN = "green"
COLOR_BLUE = "blue"
COLORS = (COLOR_GREEN, COLOR_BLUE)

# Step event kinds, ordered by classification precedence (strongest first).
EVENT_COLLISION = "collision"
EVENT_MISSORT = "missort"
EVENT_GOAL = "goal-reached"
EVENT_CORRECT = "correct-delivery"
EVENT_INVALID = "invalid"
EVENT_FIRED = "transition-fired"
EVENT_NON_ACTION = "non-action"
EVENT_NONE = "none"

NON_ACTION = 11

DEFAULT_DURATIONS = {
    "load_entry": 2,
    "entry_to_belt": 2,
    "belt_to_rotary": 1,
    "rotary_to_assembly_belt": 1,
    "install_rivets": 4,
    "assembly_to_belt": 2,
    "return_to_rotary": 1,
    "rotary_to_exit_belt": 1,
    "exit_belt_to_exit": 2,
    "rotary_to_storage": 1,
    "ship_from_exit": 1,
}


class ConfigError(Exception):
    """Bad user-supplied configuration value."""


@dataclass
class FactoryConfig:
    durations: dict = field(default_factory=dict)  # overrides by transition name
    max_products: int = 3


@dataclass
class FactoryTopology:
    """The net plus the role indices the environment layer needs."""

    net: PetriNet
    n_actions: int
    non_action: int
    max_products: int
    # place roles
    r_rotary: int
    r_assembly: int
    p_store_carriage: int
    p_store_lower: int
    p_store_upper: int
    p_storage: int
    p_rotary: int
    p_belt_assembly: int
    p_assembly: int
    p_belt_exit: int
    p_exit: int
    p_entry: int
    p_belt_entry: int
    # transition roles
    t_load: int
    t_storage_delivery: int
    t_ship: int
    # encoding layout
    resource_places: list
    storage_places: list
    regular_places: list
    short_places: list
    hidden_places: list
    obs_length: int
    # rest state: machines free, nothing injected
    initial_marking: Marking = None


@dataclass(frozen=True)
class StepEvents:
    """Outcome of one environment step after the tick settled."""

    event: str
    correct: int = 0  # correct deliveries during this step
    missorted: int = 0
    to_remove: tuple = ()  # (place, token) pairs the environment must discard


def build_factory(config: Optional[FactoryConfig] = None) -> FactoryTopology:
    """Construct the sorting-line net and check its shape invariants."""
    config = config or FactoryConfig()
    if not isinstance(config.max_products, int) or config.max_products < 1:
        raise ConfigError(f"max_products must be a positive integer, got {config.max_products!r}")

    durations = dict(DEFAULT_DURATIONS)
    for name, d in config.durations.items():
        if name not in durations:
            raise ConfigError(f"unknown transition '{name}' in durations "
                              f"(known: {', '.join(sorted(durations))})")
        if not isinstance(d, int) or not (0 <= d <= 4):
            raise ConfigError(f"duration for '{name}' must be an integer in [0, 4], got {d!r}")
        durations[name] = d

    places = [
        Place("rotary_free", "resource", 1),
        Place("assembly_free", "resource", 1),
        Place("store_carriage", "storage", None),
        Place("store_lower", "storage", None),
        Place("store_upper", "storage", None),
        Place("storage_main", "storage", None),
        Place("rotary", "regular", 1),
        Place("belt_rotary_assembly", "regular", 1),
        Place("assembly", "regular", 1),
        Place("belt_rotary_exit", "regular", 1),
        Place("exit_slot", "regular", 1),
        Place("entry", "regular_short", 1),
        Place("belt_entry_rotary", "regular_short", 1),
    ]
    P = {p.name: i for i, p in enumerate(places)}

    # (name, transform, inputs, outputs); durations come from the config
    spec_rows = [
        ("load_entry", "assemble",
         ["store_carriage", "store_lower", "store_upper"], ["entry"]),
        ("entry_to_belt", "move", ["entry"], ["belt_entry_rotary"]),
        ("belt_to_rotary", "move", ["belt_entry_rotary", "rotary_free"], ["rotary"]),
        ("rotary_to_assembly_belt", "move", ["rotary"], ["belt_rotary_assembly", "rotary_free"]),
        ("install_rivets", "rivet", ["belt_rotary_assembly", "assembly_free"], ["assembly"]),
        ("assembly_to_belt", "move", ["assembly"], ["belt_rotary_assembly", "assembly_free"]),
        ("return_to_rotary", "move", ["belt_rotary_assembly", "rotary_free"], ["rotary"]),
        ("rotary_to_exit_belt", "move", ["rotary"], ["belt_rotary_exit", "rotary_free"]),
        ("exit_belt_to_exit", "move", ["belt_rotary_exit"], ["exit_slot"]),
        ("rotary_to_storage", "move", ["rotary"], ["storage_main", "rotary_free"]),
        ("ship_from_exit", "move", ["exit_slot"], []),
    ]

    transitions = []
    for t, (name, transform, _ins, _outs) in enumerate(spec_rows):
        hidden_idx = len(places)
        places.append(Place(f"h_{name}", "hidden", 1))
        transitions.append(Transition(name, durations[name], transform, hidden_idx))

    pre = np.zeros((len(places), len(transitions)), dtype=np.int64)
    post = np.zeros_like(pre)
    for t, (_name, _transform, ins, outs) in enumerate(spec_rows):
        for pname in ins:
            pre[P[pname], t] += 1
        for pname in outs:
            post[P[pname], t] += 1

    net = PetriNet(places, transitions, pre, post)

    by_class = {cls: [i for i, p in enumerate(places) if p.cls == cls]
                for cls in ("resource", "storage", "regular", "regular_short", "hidden")}
    census = tuple(len(by_class[c]) for c in
                   ("resource", "storage", "regular", "regular_short", "hidden"))
    # the observation layout everything downstream depends on
    assert census == (2, 4, 5, 2, 11), census
    assert len(places) == 24 and len(transitions) == 11
    obs_length = 2 * 2 + 4 * 1 + 5 * 6 + 2 * 4 + 11 * 5
    assert obs_length == 101

    T = {tr.name: i for i, tr in enumerate(transitions)}
    return FactoryTopology(
        net=net,
        n_actions=len(transitions) + 1,
        non_action=NON_ACTION,
        max_products=config.max_products,
        r_rotary=P["rotary_free"], r_assembly=P["assembly_free"],
        p_store_carriage=P["store_carriage"], p_store_lower=P["store_lower"],
        p_store_upper=P["store_upper"], p_storage=P["storage_main"],
        p_rotary=P["rotary"], p_belt_assembly=P["belt_rotary_assembly"],
        p_assembly=P["assembly"], p_belt_exit=P["belt_rotary_exit"],
        p_exit=P["exit_slot"], p_entry=P["entry"], p_belt_entry=P["belt_entry_rotary"],
        t_load=T["load_entry"], t_storage_delivery=T["rotary_to_storage"],
        t_ship=T["ship_from_exit"],
        resource_places=by_class["resource"], storage_places=by_class["storage"],
        regular_places=by_class["regular"], short_places=by_class["regular_short"],
        hidden_places=by_class["hidden"], obs_length=obs_length,
        initial_marking=net.marking({P["rotary_free"]: [RESOURCE],
                                     P["assembly_free"]: [RESOURCE]}),
    )


def base_marking(topo: FactoryTopology) -> Marking:
    """Empty line: both machine resources free, nothing injected yet."""
    return topo.initial_marking


def inject_products(topo: FactoryTopology, m: Marking, colors) -> Marking:
    """Stock the entry stores for one run of ``len(colors)`` products.

    Adds one carriage, one lower part and one upper part per product.  The
    lower-part queue carries the colors in order; the loader reads them
    first-in-first-out, so ``colors`` is exactly the product sequence.
    """
    colors = list(colors)
    if not (1 <= len(colors) <= topo.max_products):
        raise ConfigError(f"number of products must be in [1, {topo.max_products}], "
                          f"got {len(colors)}")
    for c in colors:
        if c not in COLORS:
            raise ConfigError(f"unknown product color {c!r} (expected one of {COLORS})")
    contents = list(m.contents)
    contents[topo.p_store_carriage] = contents[topo.p_store_carriage] + tuple(
        CARRIAGE for _ in colors)
    contents[topo.p_store_lower] = contents[topo.p_store_lower] + tuple(
        part(c) for c in colors)
    contents[topo.p_store_upper] = contents[topo.p_store_upper] + tuple(
        part(c) for c in colors)
    return Marking(tuple(contents), m.tick)


def delivery_outcomes(topo: FactoryTopology, completions) -> list:
    """Classify finished deliveries into ('correct'|'missort', place, token).

    Only the two sink transitions count: storage wants riveted green
    products, the exit ships riveted blue ones.  Everything else that lands
    in a sink is a missort.
    """
    out = []
    for comp in completions:
        if comp.transition == topo.t_storage_delivery:
            tok = comp.payload
            good = (tok is not None and tok.kind == KIND_PRODUCT
                    and tok.color == COLOR_GREEN and tok.riveted)
            out.append(("correct" if good else "missort", topo.p_storage, tok))
        elif comp.transition == topo.t_ship:
            tok = comp.payload
            good = (tok is not None and tok.kind == KIND_PRODUCT
                    and tok.color == COLOR_BLUE and tok.riveted)
            # shipped tokens leave the net entirely, nothing to remove
            out.append(("correct" if good else "missort", None, tok))
    return out


def classify_step(topo: FactoryTopology, action: int, fired: bool, collided: bool,
                  completions, correct_before: int, n_products: int) -> StepEvents:
    """Reduce one step's raw outcomes to a single event, by precedence.

    Precedence: collision > missort > goal-reached > correct-delivery >
    invalid > transition-fired / non-action.  ``completions`` are the timed
    deliveries that finished during this step's tick; ``correct_before`` is
    how many products had already been delivered correctly.
    """
    if collided:
        return StepEvents(EVENT_COLLISION)

    outcomes = delivery_outcomes(topo, completions)
    correct = sum(1 for kind, _, _ in outcomes if kind == "correct")
    missort = sum(1 for kind, _, _ in outcomes if kind == "missort")
    to_remove = tuple((p, tok) for kind, p, tok in outcomes
                      if kind == "missort" and p is not None)

    if missort:
        return StepEvents(EVENT_MISSORT, correct, missort, to_remove)
    if correct:
        if correct_before + correct >= n_products:
            return StepEvents(EVENT_GOAL, correct, 0)
        return StepEvents(EVENT_CORRECT, correct, 0)
    if action != topo.non_action and not fired:
        return StepEvents(EVENT_INVALID)
    if action == topo.non_action:
        return StepEvents(EVENT_NON_ACTION)
    return StepEvents(EVENT_FIRED)


def line_is_empty(topo: FactoryTopology, m: Marking) -> bool:
    """No goods on the line and nothing in flight (stores don't count)."""
    for p in topo.regular_places + topo.short_places:
        if m.contents[p]:
            return False
    for h in topo.hidden_places:
        if m.contents[h]:
            return False
    return True


def scripted_action(topo: FactoryTopology, m: Marking) -> int:
    """A conservative hand-written operator that runs the line correctly.

    Keeps exactly one product in the loop at a time, drains downstream
    stages before feeding upstream ones, and therefore never collides or
    missorts.  Useful as a sanity baseline and for demos.
    """
    net = topo.net
    en = set(enabled_transitions(net, m))
    T = net.transition_index

    if T("ship_from_exit") in en:
        return T("ship_from_exit")
    rot = m.contents[topo.p_rotary]
    if rot:
        tok = rot[0]
        if tok.kind == KIND_PRODUCT and tok.riveted:
            t = T("rotary_to_storage") if tok.color == COLOR_GREEN else T("rotary_to_exit_belt")
        else:
            t = T("rotary_to_assembly_belt")
        if t in en:
            return t
    if m.contents[topo.p_belt_exit] and T("exit_belt_to_exit") in en \
            and not m.contents[topo.p_exit]:
        return T("exit_belt_to_exit")
    if m.contents[topo.p_assembly] and T("assembly_to_belt") in en \
            and not m.contents[topo.p_belt_assembly]:
        return T("assembly_to_belt")
    belt = m.contents[topo.p_belt_assembly]
    if belt:
        tok = belt[0]
        if tok.kind == KIND_PRODUCT and not tok.riveted and T("install_rivets") in en:
            return T("install_rivets")
        if tok.kind == KIND_PRODUCT and tok.riveted and T("return_to_rotary") in en:
            return T("return_to_rotary")
    if m.contents[topo.p_belt_entry] and T("belt_to_rotary") in en:
        return T("belt_to_rotary")
    if m.contents[topo.p_entry] and T("entry_to_belt") in en:
        return T("entry_to_belt")
    if line_is_empty(topo, m) and m.contents[topo.p_store_lower] and T("load_entry") in en:
        return T("load_entry")
    return topo.non_action
