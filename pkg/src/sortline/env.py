"""RL environment wrapped around the sorting line.

One environment step = (optionally) fire one transition, then advance the
net by exactly one tick.  Choosing a disabled transition is legal but does
nothing except let time pass; index 11 is the deliberate wait.  An episode
ends in success when every injected product has been delivered to its
correct sink, in failure when a delivery overflows an occupied place
(collision), or by truncation after ``max_steps`` steps.

The observation is a fixed-length vector built from the marking:

    resource places   2 components each, one-hot (available / taken)
    storage places    1 component each, raw token count
    regular places    6 components each, one-hot over
                      (empty, carriage, blue raw, green raw,
                       blue riveted, green riveted)
    short places      4 components each, one-hot over the first four values
    hidden places     5 components each, one-hot over remaining time
                      (idle, 1, 2, 3, 4)

With the default factory that is 2*2 + 4*1 + 5*6 + 2*4 + 11*5 = 101.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import factory as fac
from .petri import (KIND_CARRIAGE, KIND_PART, KIND_PRODUCT, KIND_RESOURCE,
                    CollisionDetected, Marking, enabled_transitions,
                    fire_with_report, tick)
from .factory import (COLOR_BLUE, COLOR_GREEN, ConfigError, EVENT_COLLISION,
                      EVENT_CORRECT, EVENT_FIRED, EVENT_GOAL, EVENT_INVALID,
                      EVENT_MISSORT, EVENT_NON_ACTION, EVENT_NONE,
                      FactoryConfig, FactoryTopology, build_factory,
                      base_marking, classify_step, inject_products)


class EncodingError(Exception):
    """The marking holds a token its place cannot represent."""


class EpisodeOver(Exception):
    """step() was called after the episode already ended."""


# Step rewards by event kind.  The two tables differ only in the cost of an
# ordinary step: the second one charges a small time penalty so that faster
# solutions score strictly higher.
REWARD_TABLES = {
    "r1": {
        EVENT_COLLISION: -1.0,
        EVENT_MISSORT: -0.5,
        EVENT_INVALID: -0.01,
        EVENT_GOAL: 1.0,
        EVENT_CORRECT: 0.0,
        EVENT_FIRED: 0.0,
        EVENT_NON_ACTION: 0.0,
    },
    "r2": {
        EVENT_COLLISION: -1.0,
        EVENT_MISSORT: -0.5,
        EVENT_INVALID: -0.01,
        EVENT_GOAL: 1.0,
        EVENT_CORRECT: -0.001,
        EVENT_FIRED: -0.001,
        EVENT_NON_ACTION: -0.001,
    },
}

# every reward any table can emit; the environment never returns anything else
LEGAL_REWARDS = sorted({v for table in REWARD_TABLES.values() for v in table.values()})

_GOODS_INDEX = {  # one-hot slot for a goods token in regular/short places
    (KIND_CARRIAGE, None, False): 1,
    (KIND_PRODUCT, COLOR_BLUE, False): 2,
    (KIND_PRODUCT, COLOR_GREEN, False): 3,
    (KIND_PRODUCT, COLOR_BLUE, True): 4,
    (KIND_PRODUCT, COLOR_GREEN, True): 5,
}


def _goods_slot(tok) -> int:
    key = (tok.kind, tok.color, tok.riveted)
    if tok.kind == KIND_CARRIAGE:
        key = (KIND_CARRIAGE, None, False)
    if key not in _GOODS_INDEX:
        raise EncodingError(f"token {tok.describe()} not representable on a belt/station place")
    return _GOODS_INDEX[key]


def encode_state(topo: FactoryTopology, m: Marking) -> np.ndarray:
    """Encode a marking into the flat observation vector.

    Raises :class:`EncodingError` when the marking violates the place type
    system (wrong token kind, over-capacity, countdown out of range).
    """
    obs = np.zeros(topo.obs_length, dtype=np.float64)
    i = 0
    for p in topo.resource_places:
        toks = m.contents[p]
        if len(toks) > 1 or any(t.kind != KIND_RESOURCE for t in toks):
            raise EncodingError(f"bad resource place contents at '{topo.net.places[p].name}'")
        obs[i if toks else i + 1] = 1.0
        i += 2
    for p in topo.storage_places:
        toks = m.contents[p]
        if any(t.kind not in (KIND_CARRIAGE, KIND_PART, KIND_PRODUCT) for t in toks):
            raise EncodingError(f"bad storage contents at '{topo.net.places[p].name}'")
        obs[i] = float(len(toks))
        i += 1
    for p in topo.regular_places:
        toks = m.contents[p]
        if len(toks) > 1:
            raise EncodingError(f"over-capacity at '{topo.net.places[p].name}'")
        obs[i + (_goods_slot(toks[0]) if toks else 0)] = 1.0
        i += 6
    for p in topo.short_places:
        toks = m.contents[p]
        if len(toks) > 1:
            raise EncodingError(f"over-capacity at '{topo.net.places[p].name}'")
        slot = _goods_slot(toks[0]) if toks else 0
        if slot >= 4:
            raise EncodingError(f"riveted product on pre-assembly place "
                                f"'{topo.net.places[p].name}'")
        obs[i + slot] = 1.0
        i += 4
    for p in topo.hidden_places:
        toks = m.contents[p]
        if len(toks) > 1:
            raise EncodingError(f"over-capacity at hidden place '{topo.net.places[p].name}'")
        if toks:
            rem = toks[0].remaining
            if not (1 <= rem <= 4):
                raise EncodingError(f"countdown remaining {rem} out of range")
            obs[i + rem] = 1.0
        else:
            obs[i] = 1.0
        i += 5
    assert i == topo.obs_length
    return obs


@dataclass
class StepResult:
    observation: np.ndarray
    reward: float
    terminated: bool
    truncated: bool
    info: dict


class SortingLineEnv:
    """Episodic control of the sorting line with scalar rewards."""

    def __init__(self, reward: str = "r1", n_products: int = 3, max_steps: int = 100,
                 config: Optional[FactoryConfig] = None, seed=None, record_trace: bool = False):
        if reward not in REWARD_TABLES:
            raise ConfigError(f"unknown reward scheme {reward!r} "
                              f"(expected one of {sorted(REWARD_TABLES)})")
        if max_steps < 1:
            raise ConfigError(f"max_steps must be >= 1, got {max_steps}")
        self.reward_name = reward
        self.reward_table = REWARD_TABLES[reward]
        self.topology = build_factory(config)
        if not (1 <= n_products <= self.topology.max_products):
            raise ConfigError(f"n_products must be in [1, {self.topology.max_products}], "
                              f"got {n_products}")
        self.default_n_products = n_products
        self.max_steps = max_steps
        self.rng = np.random.default_rng(seed)
        self.record_trace = record_trace
        self.trace = []
        self.marking = None
        self.done = True

    @property
    def action_count(self) -> int:
        return self.topology.n_actions

    @property
    def observation_length(self) -> int:
        return self.topology.obs_length

    def reset(self, seed=None, n_products: Optional[int] = None, colors=None) -> np.ndarray:
        """Start a new episode and return the first observation.

        ``colors`` fixes the product sequence explicitly; otherwise it is
        sampled uniformly from the environment's random stream (reseeded
        when ``seed`` is given, so equal seeds replay equal episodes).
        """
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        n = self.default_n_products if n_products is None else n_products
        if colors is None:
            colors = [fac.COLORS[j] for j in self.rng.integers(0, len(fac.COLORS), size=n)]
        else:
            colors = list(colors)
            if n_products is not None and len(colors) != n:
                raise ConfigError(f"got {len(colors)} colors but n_products={n}")
        self.marking = inject_products(self.topology, base_marking(self.topology), colors)
        self.colors = tuple(colors)
        self.n_products = len(colors)
        self.steps = 0
        self.correct = 0
        self.missorted = 0
        self.done = False
        self.trace = []
        obs = encode_state(self.topology, self.marking)
        if self.record_trace:
            self.trace.append({"step": 0, "event": EVENT_NONE, "colors": list(colors),
                               "marking": self._compact_marking()})
        return obs

    def step(self, action: int) -> StepResult:
        """Fire ``action`` if it is a transition and enabled, then tick once."""
        if self.done:
            raise EpisodeOver("call reset() before stepping again")
        action = int(action)
        if not (0 <= action < self.topology.n_actions):
            raise ValueError(f"action index {action} out of range "
                             f"[0, {self.topology.n_actions})")

        topo = self.topology
        m = self.marking
        fired = False
        collided = False
        completions = []
        if action != topo.non_action and action in enabled_transitions(topo.net, m):
            try:
                m, comp = fire_with_report(topo.net, m, action)
                fired = True
                if comp is not None:
                    completions.append(comp)
            except CollisionDetected:
                collided = True
        if not collided:
            try:
                m, comps = tick(topo.net, m)
                completions.extend(comps)
            except CollisionDetected:
                collided = True

        events = classify_step(topo, action, fired, collided, completions,
                               self.correct, self.n_products)
        if events.to_remove:
            contents = list(m.contents)
            for p, tok in events.to_remove:
                held = list(contents[p])
                held.remove(tok)  # discard the missorted item
                contents[p] = tuple(held)
            m = Marking(contents=tuple(contents), tick=m.tick)
        if not collided:
            self.marking = m  # on collision keep the last consistent marking

        self.correct += events.correct
        self.missorted += events.missorted
        self.steps += 1
        reward = self.reward_table[events.event]
        terminated = events.event in (EVENT_COLLISION, EVENT_GOAL)
        truncated = not terminated and self.steps >= self.max_steps
        self.done = terminated or truncated

        obs = encode_state(topo, self.marking)
        info = {"event": events.event, "fired": fired, "correct": self.correct,
                "missorted": self.missorted, "tick": self.marking.tick}
        if self.record_trace:
            self.trace.append({"step": self.steps, "action": action,
                               "event": events.event, "reward": reward,
                               "marking": self._compact_marking()})
        return StepResult(obs, reward, terminated, truncated, info)

    def _compact_marking(self) -> dict:
        return {self.topology.net.places[p].name: [t.describe() for t in toks]
                for p, toks in enumerate(self.marking.contents) if toks}

    def write_trace(self, path) -> None:
        """Dump the recorded episode trace as JSON lines."""
        with open(path, "w") as fh:
            for row in self.trace:
                fh.write(json.dumps(row) + "\n")
