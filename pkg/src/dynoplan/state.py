"""Task states and the state spaces they live in."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from dynoplan.errors import DimensionError, StateError


@dataclass(frozen=True)
class StateVector:
    """A single task state.

    Discrete states hold one non-negative index (``values == (i,)``);
    continuous states hold a fixed-length tuple of finite floats.
    """

    values: tuple
    discrete: bool = False

    def __post_init__(self):
        if self.discrete:
            if len(self.values) != 1:
                raise StateError("a discrete state holds exactly one index")
            idx = self.values[0]
            if isinstance(idx, bool) or int(idx) != idx or idx < 0:
                raise StateError(f"discrete index must be a non-negative integer, got {idx!r}")
            object.__setattr__(self, "values", (int(idx),))
        else:
            vals = tuple(float(v) for v in self.values)
            if not all(math.isfinite(v) for v in vals):
                raise StateError("continuous state entries must be finite")
            object.__setattr__(self, "values", vals)

    @classmethod
    def index(cls, i: int) -> StateVector:
        return cls((i,), discrete=True)

    @classmethod
    def continuous(cls, values: Iterable[float]) -> StateVector:
        return cls(tuple(values), discrete=False)

    @classmethod
    def from_array(cls, arr, discrete: bool) -> StateVector:
        arr = np.asarray(arr).reshape(-1)
        if discrete:
            return cls((int(arr[0]),), discrete=True)
        return cls(tuple(arr.tolist()), discrete=False)

    @property
    def dim(self) -> int:
        return len(self.values)

    def array(self) -> np.ndarray:
        dtype = np.int64 if self.discrete else np.float64
        return np.asarray(self.values, dtype=dtype)

    def to_json(self):
        return self.values[0] if self.discrete else list(self.values)

    @classmethod
    def from_json(cls, value) -> StateVector:
        """Inverse of :meth:`to_json`: an int is a discrete index, a list a vector."""
        if isinstance(value, int) and not isinstance(value, bool):
            return cls.index(value)
        if isinstance(value, list):
            return cls.continuous(value)
        raise StateError(f"cannot read a state from {value!r}")

    def __repr__(self):
        if self.discrete:
            return f"StateVector.index({self.values[0]})"
        return f"StateVector.continuous({list(self.values)})"


@dataclass(frozen=True)
class StateSpace:
    """Shape of the states of one task.

    For discrete spaces ``low``/``high`` bound the valid indices (inclusive).
    Continuous spaces only check dimension and finiteness.
    """

    dim: int
    discrete: bool = False
    low: int | None = None
    high: int | None = None

    def check(self, state: StateVector) -> StateVector:
        if not isinstance(state, StateVector):
            raise StateError(f"expected a StateVector, got {type(state).__name__}")
        if state.discrete != self.discrete:
            kind = "discrete" if self.discrete else "continuous"
            raise DimensionError(f"expected a {kind} state, got {state!r}")
        if state.dim != self.dim:
            raise DimensionError(f"state has dimension {state.dim}, task dimension is {self.dim}")
        if self.discrete:
            i = state.values[0]
            if (self.low is not None and i < self.low) or (self.high is not None and i > self.high):
                raise StateError(f"discrete index {i} outside [{self.low}, {self.high}]")
        return state

    def check_batch(self, states: np.ndarray) -> np.ndarray:
        states = np.asarray(states)
        if states.ndim != 2 or states.shape[1] != self.dim:
            raise DimensionError(f"expected a batch of shape (B, {self.dim}), got {states.shape}")
        return states

    def to_array(self, state: StateVector) -> np.ndarray:
        return self.check(state).array()

    def to_state(self, arr: np.ndarray) -> StateVector:
        return StateVector.from_array(arr, self.discrete)


def stack(states: Sequence[StateVector]) -> np.ndarray:
    """Stack states into a ``(B, d)`` batch array."""
    if not states:
        raise StateError("cannot stack an empty list of states")
    dims = {s.dim for s in states}
    if len(dims) != 1:
        raise DimensionError(f"states of differing dimension {sorted(dims)}")
    return np.stack([s.array() for s in states])
