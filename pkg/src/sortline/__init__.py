"""Petri-net production line simulator with from-scratch deep RL on top.

The package is organised bottom-up:

    petri    -- colored Petri net engine with tick-based timed transitions
    factory  -- the sorting-line topology, product injection, event rules
    env      -- RL environment: observation encoding, rewards, episodes
    neural   -- plain numpy MLP, Adam, gradient checking, checkpoints
    dqn      -- deep Q-learning (replay buffer, target network, training loop)
    ppo      -- clipped-surrogate policy optimisation with GAE
    harness  -- multi-seed runs, evaluation protocol, CSV artifacts, compare
    cli      -- `sortline` command line entry point
"""

__version__ = "0.1.0"

from . import petri, factory, env, neural, dqn, ppo, harness  # noqa: F401
