"""Nearness-to-goal heuristic learned from demonstrations.

Each demonstrated state at time ``t`` of a trajectory with ``T`` steps gets
the progress label ``t / (T - 1)``. A query is answered by Gaussian-kernel
weighted averaging over its ``k`` nearest training states, measured in
per-dimension standardized coordinates.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Protocol, Sequence

import numpy as np
from scipy import stats
from scipy.spatial import cKDTree
from scipy.spatial.distance import pdist

from dynoplan.errors import DimensionError, FitError
from dynoplan.state import StateVector
from dynoplan.trajectory import Trajectory

_EXACT = 1e-12
_MIN_SCALE = 1e-9


class GoalModel(Protocol):
    """What the planner needs from a goal estimator."""

    def evaluate(self, state: StateVector) -> tuple[float, float]: ...

    def mean_batch(self, states: np.ndarray, rng: np.random.Generator | None = None) -> np.ndarray: ...


@dataclass(frozen=True)
class GoalFitConfig:
    k: int = 8
    bandwidth: float | None = None  # None: median pairwise distance
    labels: str = "normalized-time"
    max_bandwidth_samples: int = 2000

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.bandwidth is not None and not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")
        if self.labels != "normalized-time":
            raise ValueError(f"unknown label scheme {self.labels!r}")


class GoalHeuristic:
    """Kernel k-NN progress estimator. Immutable once constructed."""

    def __init__(self, states, labels, k: int, bandwidth: float, center, scale,
                 discrete: bool = False, task_id: str = ""):
        self.states = np.asarray(states, dtype=float)
        self.labels = np.asarray(labels, dtype=float)
        self.k = int(k)
        self.bandwidth = float(bandwidth)
        self.center = np.asarray(center, dtype=float)
        self.scale = np.asarray(scale, dtype=float)
        self.discrete = bool(discrete)
        self.task_id = task_id
        for arr in (self.states, self.labels, self.center, self.scale):
            arr.setflags(write=False)
        self._tree = cKDTree(self._standardize(self.states))

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    def _standardize(self, x: np.ndarray) -> np.ndarray:
        return (x - self.center) / self.scale

    def _check(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim != 2 or x.shape[1] != self.dim:
            raise DimensionError(f"goal heuristic expects dimension {self.dim}, got shape {x.shape}")
        return x

    def evaluate_batch(self, states: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        x = self._check(states)
        k = min(self.k, len(self.states))
        dist, idx = self._tree.query(self._standardize(x), k=k)
        dist = dist.reshape(len(x), k)
        idx = idx.reshape(len(x), k)
        y = self.labels[idx]
        exact = dist <= _EXACT
        # exact hits interpolate their own labels
        w = np.where(exact.any(axis=1, keepdims=True), exact.astype(float),
                     np.exp(-(dist ** 2 - dist[:, :1] ** 2) / (2.0 * self.bandwidth ** 2)))
        w /= w.sum(axis=1, keepdims=True)
        mean = (w * y).sum(axis=1)
        var = (w * (y - mean[:, None]) ** 2).sum(axis=1)
        return np.clip(mean, 0.0, 1.0), np.maximum(var, 0.0)

    def evaluate(self, state: StateVector) -> tuple[float, float]:
        if state.dim != self.dim or state.discrete != self.discrete:
            raise DimensionError(f"goal heuristic expects dimension {self.dim}, got {state!r}")
        mean, var = self.evaluate_batch(state.array()[None])
        return float(mean[0]), float(var[0])

    def mean_batch(self, states: np.ndarray, rng=None) -> np.ndarray:
        return self.evaluate_batch(states)[0]

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "discrete": self.discrete,
            "k": self.k,
            "bandwidth": self.bandwidth,
            "center": self.center.tolist(),
            "scale": self.scale.tolist(),
            "states": self.states.tolist(),
            "labels": self.labels.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> GoalHeuristic:
        return cls(d["states"], d["labels"], d["k"], d["bandwidth"], d["center"], d["scale"],
                   discrete=d["discrete"], task_id=d["task_id"])

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> GoalHeuristic:
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def progress_labels(trajectory: Trajectory) -> np.ndarray:
    n = len(trajectory)
    if n < 2:
        raise FitError(f"trajectory {trajectory.trajectory_id!r} has {n} step(s); need >= 2")
    return np.arange(n) / (n - 1)


def fit_goal_heuristic(demos: Sequence[Trajectory], cfg: GoalFitConfig = GoalFitConfig()) -> GoalHeuristic:
    demos = list(demos)
    if not demos:
        raise FitError("empty demonstration set")
    labels = np.concatenate([progress_labels(d) for d in demos])
    states = np.concatenate([d.states() for d in demos]).astype(float)
    discrete = demos[0].steps[0].state.discrete
    # canonical row order makes the fit independent of demo ordering
    order = np.lexsort(np.column_stack([labels, states]).T[::-1])
    states, labels = states[order], labels[order]

    center = states.mean(axis=0)
    scale = states.std(axis=0)
    scale = np.where(scale < _MIN_SCALE, 1.0, scale)

    bandwidth = cfg.bandwidth
    if bandwidth is None:
        z = (states - center) / scale
        if len(z) > cfg.max_bandwidth_samples:
            z = z[np.linspace(0, len(z) - 1, cfg.max_bandwidth_samples).astype(int)]
        bandwidth = float(np.median(pdist(z))) if len(z) > 1 else 1.0
        if not bandwidth > 0:
            bandwidth = 1.0
    return GoalHeuristic(states, labels, cfg.k, bandwidth, center, scale,
                         discrete=discrete, task_id=demos[0].task_id)


class Monotonicity(NamedTuple):
    score: float
    degenerate: bool


def monotonicity_score(gh: GoalModel, trajectory: Trajectory) -> Monotonicity:
    """Spearman rank correlation between step index and goal mean."""
    if len(trajectory) < 3:
        raise ValueError("monotonicity needs a trajectory with >= 3 steps")
    means = np.array([gh.evaluate(s.state)[0] for s in trajectory.steps])
    if np.all(means == means[0]):
        return Monotonicity(0.0, True)
    rho = stats.spearmanr(np.arange(len(means)), means).statistic
    return Monotonicity(float(rho), False)
