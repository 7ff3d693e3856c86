"""Tiny deterministic chain MDP with a value-iteration oracle.

Five states in a row, one-hot observations, two actions (0 = left,
1 = right).  State 2 is terminal: entering it pays +1 on top of the
-0.05 step cost.  Walking off either end bounces in place.  Episodes
start uniformly over the four non-terminal states.  Small enough that
value iteration gives exact targets for both trainers.
"""

import numpy as np

N_STATES = 5
TERMINAL = 2
STEP_COST = -0.05
GOAL_REWARD = 1.0
GAMMA = 0.9
START_STATES = (0, 1, 3, 4)


def transition(state: int, action: int) -> tuple:
    """(next_state, reward, terminated) under the deterministic dynamics."""
    nxt = min(max(state + (1 if action == 1 else -1), 0), N_STATES - 1)
    reward = STEP_COST + (GOAL_REWARD if nxt == TERMINAL else 0.0)
    return nxt, reward, nxt == TERMINAL


class ToyStep:
    def __init__(self, observation, reward, terminated, truncated):
        self.observation = observation
        self.reward = reward
        self.terminated = terminated
        self.truncated = truncated
        self.info = {}


class ChainEnv:
    """Duck-typed stand-in for the sorting-line environment."""

    action_count = 2
    observation_length = N_STATES

    def __init__(self, max_steps: int = 20):
        self.max_steps = max_steps
        self.state = None
        self.steps = 0

    @staticmethod
    def _obs(state: int) -> np.ndarray:
        v = np.zeros(N_STATES)
        v[state] = 1.0
        return v

    def reset(self, seed=None) -> np.ndarray:
        rng = np.random.default_rng(seed)
        self.state = int(rng.choice(START_STATES))
        self.steps = 0
        return self._obs(self.state)

    def step(self, action: int) -> ToyStep:
        self.state, reward, terminated = transition(self.state, int(action))
        self.steps += 1
        truncated = not terminated and self.steps >= self.max_steps
        return ToyStep(self._obs(self.state), reward, terminated, truncated)


def value_iteration(gamma: float = GAMMA, tol: float = 1e-10) -> tuple:
    """Exact (Q*, V*, greedy policy); the terminal state has value 0."""
    q = np.zeros((N_STATES, 2))
    while True:
        v = q.max(axis=1)
        v[TERMINAL] = 0.0
        q_new = np.zeros_like(q)
        for s in range(N_STATES):
            for a in range(2):
                nxt, r, done = transition(s, a)
                q_new[s, a] = r + (0.0 if done else gamma * v[nxt])
        if np.abs(q_new - q).max() < tol:
            return q_new, q_new.max(axis=1), q_new.argmax(axis=1)
        q = q_new
