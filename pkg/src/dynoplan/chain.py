"""The 19-state random-walk chain with five options and noisy models.

States are indexed 1..20; 20 is the absorbing goal reached by stepping right
from 19, which pays reward +1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from dynoplan.errors import StateError
from dynoplan.options import OptionSpec
from dynoplan.state import StateSpace, StateVector
from dynoplan.trajectory import Trajectory, TrajectoryStep

N_STATES = 20
FIRST = 1
GOAL = N_STATES
LEFT, RIGHT = -1, 1

SPACE = StateSpace(dim=1, discrete=True, low=FIRST, high=GOAL)

# option order: three right-movers (longest-running first), random, left
DEFAULT_BETAS = (0.2, 0.5, 0.9, 0.5, 0.5)


class ChainEnv:
    """Mutable chain environment; ``step`` takes -1 (left) or +1 (right)."""

    def __init__(self, start: int = FIRST):
        if not FIRST <= start <= GOAL:
            raise StateError(f"chain start {start} outside [{FIRST}, {GOAL}]")
        self.index = int(start)
        self.t = 0
        self.reward = 0.0

    @property
    def state(self) -> StateVector:
        return StateVector.index(self.index)

    @property
    def terminal(self) -> bool:
        return self.index == GOAL

    def step(self, action) -> float:
        if self.terminal:
            raise StateError("cannot step a terminal chain")
        a = int(np.asarray(action).reshape(-1)[0])
        if a not in (LEFT, RIGHT):
            raise ValueError(f"chain action must be -1 or +1, got {a}")
        self.index = min(max(self.index + a, FIRST), GOAL)
        self.t += 1
        r = 1.0 if self.index == GOAL else 0.0
        self.reward += r
        return r


def make_chain_env(start: int = FIRST) -> ChainEnv:
    return ChainEnv(start)


def transition(states: np.ndarray, actions: np.ndarray) -> np.ndarray:
    """Exact environment transition for a batch, with the goal absorbing."""
    s = states[:, 0]
    nxt = np.clip(s + np.asarray(actions).reshape(-1), FIRST, GOAL)
    return np.where(s == GOAL, GOAL, nxt)[:, None].astype(np.int64)


def true_goal(states: np.ndarray) -> np.ndarray:
    return (np.asarray(states, dtype=float).reshape(len(states), -1)[:, 0] - FIRST) / (GOAL - FIRST)


def _constant_policy(action):
    def policy(states, rng):
        return np.full(len(states), action, dtype=np.int64)
    return policy


def _random_policy(states, rng):
    return np.where(rng.random(len(states)) < 0.5, LEFT, RIGHT).astype(np.int64)


def _termination(beta):
    def rate(states):
        return np.where(states[:, 0] >= GOAL, 1.0, beta)
    return rate


def _initiation(states):
    return states[:, 0] < GOAL


def make_chain_options(betas: Sequence[float] = DEFAULT_BETAS) -> list[OptionSpec]:
    """Options 1-3 go right, 4 acts uniformly at random, 5 goes left.

    Each option's dynamics is the exact environment transition under its
    policy; swap in noisy models with :func:`make_noisy_models`.
    """
    betas = tuple(float(b) for b in betas)
    if len(betas) != 5:
        raise ValueError(f"need 5 termination rates, got {len(betas)}")
    for b in betas:
        if not 0.0 < b <= 1.0:
            raise ValueError(f"termination rate {b} outside (0, 1]")
    policies = [_constant_policy(RIGHT)] * 3 + [_random_policy, _constant_policy(LEFT)]
    names = ["right", "right", "right", "random", "left"]
    options = []
    for i, (policy, beta, name) in enumerate(zip(policies, betas, names), start=1):
        def dynamics(states, rng, policy=policy):
            return transition(states, policy(states, rng))
        options.append(OptionSpec(i, SPACE, policy, _initiation, _termination(beta), dynamics,
                                  kind="tabular", name=f"{name} (beta={beta:g})"))
    return options


@dataclass(frozen=True)
class NoisyModelConfig:
    epsilon: float = 0.2
    perturbation: str = "uniform-neighbor"

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        if self.perturbation != "uniform-neighbor":
            raise ValueError(f"unknown perturbation scheme {self.perturbation!r}")


def perturb(states: np.ndarray, epsilon: float, rng: np.random.Generator) -> np.ndarray:
    """With probability ``epsilon`` replace each index by a uniformly chosen
    distinct neighbour inside the chain."""
    s = np.asarray(states, dtype=np.int64).reshape(-1)
    flip = rng.random(s.size) < epsilon
    up = rng.random(s.size) < 0.5
    step = np.where(up, 1, -1)
    step = np.where(s == FIRST, 1, np.where(s == GOAL, -1, step))
    return np.where(flip, s + step, s)


class NoisyDynamics:
    """True transition under the option's policy, mispredicted with prob. epsilon."""

    def __init__(self, option: OptionSpec, epsilon: float):
        self.option = option
        self.epsilon = epsilon

    def __call__(self, states, rng):
        nxt = self.option.dynamics(states, rng)
        return perturb(nxt, self.epsilon, rng)[:, None]


class ChainGoal:
    """Exact progress ``(s - 1) / 19``."""

    def evaluate(self, state: StateVector) -> tuple[float, float]:
        SPACE.check(state)
        return float(true_goal(state.array()[None])[0]), 0.0

    def mean_batch(self, states, rng=None):
        return true_goal(states)


class NoisyChainGoal:
    """Progress reported for a mispredicted neighbour with probability epsilon.

    ``mean_batch`` samples the noise; ``evaluate`` returns the exact mean and
    variance of the reported value.
    """

    def __init__(self, epsilon: float):
        self.epsilon = epsilon

    def mean_batch(self, states, rng=None):
        s = np.asarray(states).reshape(len(states), -1)[:, 0]
        if rng is None or self.epsilon == 0.0:
            return true_goal(s[:, None])
        return true_goal(perturb(s, self.epsilon, rng)[:, None])

    def evaluate(self, state: StateVector) -> tuple[float, float]:
        i = SPACE.check(state).values[0]
        nbrs = [j for j in (i - 1, i + 1) if FIRST <= j <= GOAL]
        vals = np.array([i] + nbrs, dtype=float)
        probs = np.array([1.0 - self.epsilon] + [self.epsilon / len(nbrs)] * len(nbrs))
        g = (vals - FIRST) / (GOAL - FIRST)
        mean = float(probs @ g)
        return mean, float(probs @ (g - mean) ** 2)


def make_noisy_models(options: Sequence[OptionSpec], cfg: NoisyModelConfig = NoisyModelConfig()):
    """Noisy per-option dynamics (keyed by option id) and a noisy goal model.

    The noise draws come from the generator handed to each call, so the
    models stay deterministic for a fixed rollout seed.
    """
    dynamics = {opt.id: NoisyDynamics(opt, cfg.epsilon) for opt in options}
    return dynamics, NoisyChainGoal(cfg.epsilon)


def chain_demonstrations(count: int = 1, task_id: str = "chain") -> list[Trajectory]:
    """Straight right walks from state 1 to the goal."""
    demos = []
    for k in range(count):
        steps = [TrajectoryStep(t, StateVector.index(FIRST + t), 1, FIRST + t == GOAL)
                 for t in range(GOAL - FIRST + 1)]
        demos.append(Trajectory(task_id, f"walk-{k}", steps))
    return demos
