"""Colored Petri net engine with tick-based timed transitions.

A net is a set of typed places, a set of transitions, and a pair of dense
integer incidence matrices (pre, post) of shape ``(n_places, n_transitions)``.
Markings are immutable: every place holds an ordered tuple of tokens, and
firing or ticking returns a fresh marking.

Timed transitions do not deliver their outputs immediately.  Each transition
owns a dedicated hidden place; firing consumes the inputs and parks a
countdown token there that remembers the pending deposits.  ``tick`` advances
global time by one unit, decrements every countdown, and performs the
deposits of the countdowns that reach zero.  A transition whose hidden place
is occupied is busy and cannot fire again.

Deposits respect place capacities.  Overflowing a finite-capacity place
raises :class:`CollisionDetected`, which the environment layer treats as a
physical crash on the line.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

# Place classes.  The class decides capacity conventions, what the state
# encoder does with the place, and which token kinds are admissible.
PLACE_CLASSES = ("resource", "storage", "regular", "regular_short", "hidden")

# Token kinds.
KIND_CARRIAGE = "carriage"
KIND_PART = "part"
KIND_PRODUCT = "product"
KIND_RESOURCE = "resource"
KIND_COUNTDOWN = "countdown"

MAX_DURATION = 4


class NotEnabled(Exception):
    """Raised when ``fire`` is asked to fire a disabled transition."""


class CollisionDetected(Exception):
    """A deposit overflowed a finite-capacity place."""

    def __init__(self, place: int, transition: int, message: str = ""):
        self.place = place
        self.transition = transition
        super().__init__(message or f"collision at place {place} while delivering transition {transition}")


@dataclass(frozen=True)
class Token:
    """One colored token.

    ``kind`` is always set.  ``color``/``riveted`` are only meaningful for
    parts and products, ``remaining``/``payload`` only for countdown tokens.
    ``payload`` stores the pending deposits of an in-flight transition as a
    tuple of ``(place_index, token)`` pairs.
    """

    kind: str
    color: Optional[str] = None
    riveted: bool = False
    remaining: int = 0
    payload: tuple = ()

    def describe(self) -> str:
        if self.kind == KIND_PRODUCT:
            state = "riveted" if self.riveted else "raw"
            return f"product({self.color},{state})"
        if self.kind == KIND_PART:
            return f"part({self.color})"
        if self.kind == KIND_COUNTDOWN:
            return f"countdown({self.remaining})"
        return self.kind


CARRIAGE = Token(KIND_CARRIAGE)
RESOURCE = Token(KIND_RESOURCE)


def part(color: str) -> Token:
    return Token(KIND_PART, color=color)


def product(color: str, riveted: bool = False) -> Token:
    return Token(KIND_PRODUCT, color=color, riveted=riveted)


@dataclass(frozen=True)
class Place:
    name: str
    cls: str
    capacity: Optional[int] = 1  # None means unbounded


@dataclass(frozen=True)
class Transition:
    """A timed transition.

    ``duration`` is in ticks, 0..4.  ``transform`` describes what happens to
    the goods token as it moves:

        move     -- the consumed non-resource token is deposited unchanged
        rivet    -- the consumed product is deposited with riveted=True
        assemble -- consumed carriage+parts become one raw product whose
                    color is taken from the first consumed part
        unit     -- outputs are plain tokens fabricated per place class
                    (resource for resource places, carriage otherwise)

    ``hidden`` is the index of the transition's dedicated hidden place.
    """

    name: str
    duration: int = 1
    transform: str = "move"
    hidden: int = -1


@dataclass(frozen=True)
class Marking:
    """Immutable snapshot: per-place token tuples plus the global tick."""

    contents: tuple
    tick: int = 0

    def count(self, place: int) -> int:
        return len(self.contents[place])

    def counts(self) -> np.ndarray:
        return np.array([len(c) for c in self.contents], dtype=np.int64)

    def key(self):
        """Hashable identity that ignores the tick counter (for search)."""
        return self.contents


@dataclass(frozen=True)
class Completion:
    """Report of one timed transition finishing during a tick."""

    transition: int
    payload: Optional[Token]  # the goods token that was carried, if any
    deposits: tuple  # ((place_index, token), ...)


@dataclass
class PetriNet:
    places: list
    transitions: list
    pre: np.ndarray
    post: np.ndarray

    def __post_init__(self):
        self.pre = np.asarray(self.pre, dtype=np.int64)
        self.post = np.asarray(self.post, dtype=np.int64)
        self._index = {p.name: i for i, p in enumerate(self.places)}
        self._tindex = {t.name: i for i, t in enumerate(self.transitions)}

    def place_index(self, name: str) -> int:
        return self._index[name]

    def transition_index(self, name: str) -> int:
        return self._tindex[name]

    def empty_marking(self) -> Marking:
        return Marking(tuple(() for _ in self.places), 0)

    def marking(self, tokens_by_place: dict) -> Marking:
        """Build a marking from {place name or index: iterable of tokens}."""
        contents = [[] for _ in self.places]
        for key, toks in tokens_by_place.items():
            idx = key if isinstance(key, int) else self._index[key]
            contents[idx].extend(toks)
        return Marking(tuple(tuple(c) for c in contents), 0)


def enabled_transitions(net: PetriNet, m: Marking) -> list:
    """Indices of transitions that may fire in ``m``.

    A transition is enabled when every input place holds at least the
    required number of tokens and its own hidden place is empty (a busy
    transition cannot be re-fired).  Destination capacity is deliberately
    not checked here; overfull deliveries surface later as collisions.
    """
    counts = m.counts()
    ok = np.all(counts[:, None] >= net.pre, axis=0)
    out = []
    for t in np.nonzero(ok)[0]:
        h = net.transitions[t].hidden
        if h >= 0 and m.contents[h]:
            continue
        out.append(int(t))
    return out


def _deposit(contents: list, place_idx: int, token: Token, net: PetriNet, transition: int):
    cap = net.places[place_idx].capacity
    if cap is not None and len(contents[place_idx]) >= cap:
        raise CollisionDetected(place_idx, transition,
                                f"place '{net.places[place_idx].name}' over capacity "
                                f"delivering '{net.transitions[transition].name}'")
    contents[place_idx] = contents[place_idx] + (token,)


def _plan_outputs(net: PetriNet, t: int, consumed: list) -> tuple:
    """Compute the deposit list for transition ``t`` from the consumed tokens.

    Returns ``(deposits, carried)`` where deposits is a tuple of
    ``(place_index, token)`` pairs ordered by place index and carried is the
    goods token travelling through the transition (None for unit transforms).
    """
    tr = net.transitions[t]
    goods = [tok for tok in consumed if tok.kind not in (KIND_RESOURCE, KIND_COUNTDOWN)]

    carried = None
    if tr.transform == "move":
        carried = goods[0] if goods else None
    elif tr.transform == "rivet":
        carried = replace(goods[0], riveted=True)
    elif tr.transform == "assemble":
        parts = [tok for tok in goods if tok.kind == KIND_PART]
        if not parts:
            raise ValueError(f"transition '{tr.name}' assembles but consumed no parts")
        carried = product(parts[0].color, riveted=False)
    elif tr.transform != "unit":
        raise ValueError(f"unknown transform '{tr.transform}'")

    deposits = []
    used_carry = False
    for p in np.nonzero(net.post[:, t])[0]:
        p = int(p)
        for _ in range(int(net.post[p, t])):
            if net.places[p].cls == "resource":
                deposits.append((p, RESOURCE))
            elif carried is not None and not used_carry:
                deposits.append((p, carried))
                used_carry = True
            else:
                deposits.append((p, CARRIAGE))
    return tuple(deposits), carried


def fire_with_report(net: PetriNet, m: Marking, t: int) -> tuple:
    """Fire transition ``t``: consume inputs, start the countdown.

    Tokens are consumed FIFO from each input place.  For duration zero the
    outputs are deposited immediately, the hidden place stays empty, and the
    instantaneous delivery is reported as a :class:`Completion`; otherwise a
    countdown token carrying the pending deposits is parked in the
    transition's hidden place and the completion is ``None``.  The tick
    counter does not move here.
    """
    if t not in enabled_transitions(net, m):
        raise NotEnabled(f"transition {t} ('{net.transitions[t].name}') is not enabled")

    contents = list(m.contents)
    consumed = []
    for p in np.nonzero(net.pre[:, t])[0]:
        p = int(p)
        k = int(net.pre[p, t])
        consumed.extend(contents[p][:k])
        contents[p] = contents[p][k:]

    deposits, carried = _plan_outputs(net, t, consumed)
    tr = net.transitions[t]
    completion = None
    if tr.duration == 0:
        for p, tok in deposits:
            _deposit(contents, p, tok, net, t)
        completion = Completion(t, carried, deposits)
    else:
        # the countdown remembers both the pending deposits and the goods
        # token in transit (which may leave the net without any deposit)
        timer = Token(KIND_COUNTDOWN, remaining=tr.duration, payload=(carried, deposits))
        contents[tr.hidden] = (timer,)
    return Marking(tuple(contents), m.tick), completion


def fire(net: PetriNet, m: Marking, t: int) -> Marking:
    """Fire transition ``t`` and return the new marking (see fire_with_report)."""
    m2, _ = fire_with_report(net, m, t)
    return m2


def tick(net: PetriNet, m: Marking) -> tuple:
    """Advance time by one unit.

    Every countdown token loses one remaining tick; the ones that reach zero
    perform their deposits (in transition-index order) and are removed.
    Returns ``(marking, completions)``.  Raises :class:`CollisionDetected`
    if a deposit overflows a finite place.
    """
    contents = list(m.contents)
    completions = []
    for t, tr in enumerate(net.transitions):
        h = tr.hidden
        if h < 0 or not contents[h]:
            continue
        timer = contents[h][0]
        rem = timer.remaining - 1
        if rem > 0:
            contents[h] = (replace(timer, remaining=rem),)
            continue
        contents[h] = ()
        carried, deposits = timer.payload
        for p, tok in deposits:
            _deposit(contents, p, tok, net, t)
        completions.append(Completion(t, carried, deposits))
    return Marking(tuple(contents), m.tick + 1), completions


def has_pending(m: Marking, net: PetriNet) -> bool:
    """True when at least one countdown token is in flight."""
    return any(m.contents[tr.hidden] for tr in net.transitions if tr.hidden >= 0)


def validate_net(net: PetriNet, initial: Optional[Marking] = None, budget: int = 10_000) -> list:
    """Structural lint plus an optional bounded reachability probe.

    Returns a list of human-readable diagnostics; an empty list means the
    net passed every check.  With an initial marking the probe explores up
    to ``budget`` distinct markings (firing and ticking) and reports any
    transition that was never enabled.
    """
    diags = []
    n_p, n_t = len(net.places), len(net.transitions)
    if net.pre.shape != (n_p, n_t) or net.post.shape != (n_p, n_t):
        diags.append(f"incidence shape mismatch: pre {net.pre.shape}, post {net.post.shape}, "
                     f"expected {(n_p, n_t)}")
        return diags  # everything else would index out of bounds
    if (net.pre < 0).any() or (net.post < 0).any():
        diags.append("negative arc weight in pre/post")

    for p in net.places:
        if p.cls not in PLACE_CLASSES:
            diags.append(f"place '{p.name}' has unknown class '{p.cls}'")
        if p.cls == "storage" and p.capacity is not None:
            diags.append(f"storage place '{p.name}' should be unbounded")
        if p.cls in ("resource", "regular", "regular_short", "hidden") and p.capacity != 1:
            diags.append(f"place '{p.name}' of class {p.cls} should have capacity 1")

    seen_hidden = set()
    for t, tr in enumerate(net.transitions):
        if not (0 <= tr.duration <= MAX_DURATION):
            diags.append(f"transition '{tr.name}' duration {tr.duration} outside [0, {MAX_DURATION}]")
        if tr.hidden < 0:
            if tr.duration > 0:
                diags.append(f"timed transition '{tr.name}' has no hidden place")
            continue
        if not (0 <= tr.hidden < n_p):
            diags.append(f"transition '{tr.name}' hidden index {tr.hidden} out of range")
            continue
        if net.places[tr.hidden].cls != "hidden":
            diags.append(f"transition '{tr.name}' hidden place '{net.places[tr.hidden].name}' "
                         f"is not of class hidden")
        if tr.hidden in seen_hidden:
            diags.append(f"hidden place '{net.places[tr.hidden].name}' shared by several transitions")
        seen_hidden.add(tr.hidden)
        if net.pre[tr.hidden].any() or net.post[tr.hidden].any():
            diags.append(f"hidden place '{net.places[tr.hidden].name}' appears in arc matrices")

    for t, tr in enumerate(net.transitions):
        goods_in = sum(int(net.pre[p, t]) for p in range(n_p)
                       if net.places[p].cls not in ("resource", "hidden"))
        if tr.transform in ("move", "rivet") and goods_in != 1:
            diags.append(f"transition '{tr.name}' ({tr.transform}) consumes {goods_in} goods tokens, "
                         f"expected exactly 1")
        if tr.transform == "assemble" and goods_in < 2:
            diags.append(f"transition '{tr.name}' (assemble) consumes {goods_in} goods tokens, "
                         f"expected at least 2")

    if diags or initial is None:
        return diags

    # Bounded forward search: which transitions ever become enabled?
    fired = set()
    seen = {initial.key()}
    frontier = [initial]
    explored = 0
    while frontier and explored < budget:
        m = frontier.pop()
        explored += 1
        for t in enabled_transitions(net, m):
            fired.add(t)
            try:
                m2 = fire(net, m, t)
            except CollisionDetected:
                continue
            if m2.key() not in seen:
                seen.add(m2.key())
                frontier.append(m2)
        if has_pending(m, net):
            try:
                m3, _ = tick(net, m)
            except CollisionDetected:
                continue
            if m3.key() not in seen:
                seen.add(m3.key())
                frontier.append(m3)
    for t, tr in enumerate(net.transitions):
        if t not in fired:
            diags.append(f"transition '{tr.name}' never enabled within {explored} explored markings")
    return diags


def to_json(net: PetriNet) -> str:
    """Serialize the net structure (not a marking) to a JSON string."""
    doc = {
        "format": 1,
        "places": [{"name": p.name, "cls": p.cls, "capacity": p.capacity} for p in net.places],
        "transitions": [{"name": t.name, "duration": t.duration,
                         "transform": t.transform, "hidden": t.hidden}
                        for t in net.transitions],
        "pre": net.pre.tolist(),
        "post": net.post.tolist(),
    }
    return json.dumps(doc, indent=2)


def from_json(text: str) -> PetriNet:
    doc = json.loads(text)
    if doc.get("format") != 1:
        raise ValueError(f"unsupported net format {doc.get('format')!r}")
    places = [Place(d["name"], d["cls"], d["capacity"]) for d in doc["places"]]
    transitions = [Transition(d["name"], d["duration"], d["transform"], d["hidden"])
                   for d in doc["transitions"]]
    return PetriNet(places, transitions, np.array(doc["pre"]), np.array(doc["post"]))
