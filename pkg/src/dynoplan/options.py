"""Options extended with a dynamics model, and their rollout/execution semantics.

Every callable on an :class:`OptionSpec` works on a batch of states, an array
of shape ``(B, d)``, so that many model rollouts can advance in lock-step.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Protocol, Sequence

import numpy as np

from dynoplan.errors import HorizonError, InitiationError, StateError
from dynoplan.state import StateSpace, StateVector
from dynoplan.trajectory import TrajectoryStep

MAX_HORIZON = 10_000

KINDS = ("planner-surrogate", "learned-surrogate", "mixed", "tabular")

Policy = Callable[[np.ndarray, np.random.Generator], np.ndarray]
Dynamics = Callable[[np.ndarray, np.random.Generator], np.ndarray]
StatePredicate = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class OptionSpec:
    """An option: policy, initiation set, termination rate and dynamics model.

    ``policy(states, rng)`` returns one action per row, ``initiation(states)``
    a boolean per row, ``termination_rate(states)`` a probability per row and
    ``dynamics(states, rng)`` the predicted next states under the policy.
    Deterministic callables must not draw from ``rng``.
    """

    id: int
    space: StateSpace
    policy: Policy
    initiation: StatePredicate
    termination_rate: StatePredicate
    dynamics: Dynamics
    kind: str = "tabular"
    name: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown option kind {self.kind!r}")

    def with_dynamics(self, dynamics: Dynamics) -> OptionSpec:
        return replace(self, dynamics=dynamics)


def with_dynamics(options: Sequence[OptionSpec], models) -> list[OptionSpec]:
    """Swap each option's dynamics for the model keyed by its id."""
    return [opt.with_dynamics(models[opt.id]) for opt in options]


class Environment(Protocol):
    """A mutable, single-owner world the options act on."""

    t: int

    @property
    def state(self) -> StateVector: ...

    @property
    def terminal(self) -> bool: ...

    def step(self, action) -> float: ...


@dataclass(frozen=True)
class RolloutResult:
    states: tuple[StateVector, ...]
    terminated_at: int | None
    active_mask: tuple[bool, ...]

    @property
    def final(self) -> StateVector:
        return self.states[-1]


@dataclass(frozen=True)
class BatchRollout:
    final: np.ndarray
    terminated_at: np.ndarray  # -1 where the option never terminated


def _termination(option: OptionSpec, states: np.ndarray) -> np.ndarray:
    beta = np.asarray(option.termination_rate(states), dtype=float)
    if np.any((beta < 0.0) | (beta > 1.0)) or not np.all(np.isfinite(beta)):
        raise StateError(f"option {option.id}: termination rate outside [0, 1]")
    return beta


def _check_horizon(horizon: int, max_horizon: int):
    if horizon < 0:
        raise HorizonError(f"horizon must be >= 0, got {horizon}")
    if horizon > max_horizon:
        raise HorizonError(f"horizon {horizon} exceeds the maximum {max_horizon}")


def _simulate(option, x, horizon, rng, path=None):
    active = np.ones(len(x), dtype=bool)
    terminated_at = np.full(len(x), -1, dtype=np.int64)
    for t in range(horizon):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            if path is not None:
                path.append((x.copy(), active.copy()))
            continue
        nxt = np.asarray(option.dynamics(x[idx], rng))
        if nxt.shape != (idx.size, x.shape[1]):
            raise StateError(f"option {option.id}: dynamics changed the state shape")
        was_active = active.copy()
        x[idx] = nxt
        stop = rng.random(idx.size) < _termination(option, x[idx])
        active[idx[stop]] = False
        terminated_at[idx[stop]] = t + 1
        if path is not None:
            path.append((x.copy(), was_active))
    return x, terminated_at


def rollout(option: OptionSpec, start: StateVector, horizon: int, seed,
            max_horizon: int = MAX_HORIZON) -> RolloutResult:
    """Chain the option's dynamics model ``horizon`` steps from ``start``.

    After every transition a Bernoulli draw with the termination rate of the
    new state decides whether the option stops; once stopped the state is
    frozen for the remaining steps.
    """
    x0 = option.space.to_array(start)
    _check_horizon(horizon, max_horizon)
    rng = np.random.default_rng(seed)
    path = []
    x = x0[None].copy()
    _, term = _simulate(option, x, horizon, rng, path)
    states = [start] + [option.space.to_state(p[0][0]) for p in path]
    mask = tuple(bool(p[1][0]) for p in path)
    return RolloutResult(tuple(states), None if term[0] < 0 else int(term[0]), mask)


def rollout_batch(option: OptionSpec, start: StateVector, horizon: int, n: int,
                  rng: np.random.Generator, max_horizon: int = MAX_HORIZON) -> BatchRollout:
    """``n`` independent rollouts from the same start, advanced together."""
    x0 = option.space.to_array(start)
    _check_horizon(horizon, max_horizon)
    if n < 1:
        raise ValueError("need at least one rollout")
    x = np.repeat(x0[None], n, axis=0)
    final, term = _simulate(option, x, horizon, rng)
    return BatchRollout(final, term)


def indicator_initiation(option: OptionSpec, state: StateVector) -> int:
    x = option.space.to_array(state)
    return int(bool(np.asarray(option.initiation(x[None]))[0]))


def execute_option(option: OptionSpec, env: Environment, seed, max_steps: int = 1000
                   ) -> tuple[list[TrajectoryStep], StateVector]:
    """Run the option's policy on the real environment until it terminates.

    Returns the post-transition steps (the last one flagged ``done`` if a
    termination draw succeeded) and the final state. Raises
    :class:`InitiationError` when the option cannot start from the current
    state.
    """
    if not indicator_initiation(option, env.state):
        raise InitiationError(f"option {option.id} is not applicable in {env.state!r}")
    rng = np.random.default_rng(seed)
    segment: list[TrajectoryStep] = []
    for _ in range(max_steps):
        if env.terminal:
            break
        x = option.space.to_array(env.state)[None]
        action = np.asarray(option.policy(x, rng))[0]
        env.step(action)
        state = env.state
        beta = _termination(option, option.space.to_array(state)[None])[0]
        done = bool(rng.random() < beta)
        segment.append(TrajectoryStep(env.t, state, option.id, done))
        if done:
            break
    return segment, env.state


def derive_seed(*keys: int) -> int:
    """A 63-bit seed derived deterministically from integer keys."""
    state = np.random.SeedSequence([int(k) for k in keys]).generate_state(1, np.uint64)[0]
    return int(state) >> 1
