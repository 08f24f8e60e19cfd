"""Gaussian-mixture safety regions over demonstration states.

A mixture is fitted to all demonstrated states by EM, and each component is
handed to the option whose states carry most of its responsibility mass.
The likelihood of an option operating at ``s`` is the largest raw component
density ``N(s | mu_i, Sigma_i)`` over that option's components; mixture
weights do not enter it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, NamedTuple, Sequence

import numpy as np
from scipy.special import logsumexp

from dynoplan.errors import DimensionError, FitError, StateError
from dynoplan.state import StateVector

_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class EmConfig:
    components: int = 3
    max_iter: int = 200
    tol: float = 1e-6
    reg_covar: float = 1e-6
    init: str = "kmeans++"
    seed: int = 0

    def __post_init__(self):
        if self.components < 1:
            raise ValueError("need at least one component")
        if self.max_iter < 1 or not self.tol > 0 or not self.reg_covar > 0:
            raise ValueError("max_iter, tol and reg_covar must be positive")
        if self.init != "kmeans++":
            raise ValueError(f"unknown init scheme {self.init!r}")


@dataclass
class GmmFit:
    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    responsibilities: np.ndarray
    log_likelihood: list[float]
    n_iter: int
    converged: bool
    repaired: list[int] = field(default_factory=list)  # components held up by the floor


def _as_matrix(states) -> np.ndarray:
    if isinstance(states, np.ndarray):
        x = states
    else:
        states = list(states)
        if states and isinstance(states[0], StateVector):
            if any(s.discrete for s in states):
                raise StateError("mixture regions need continuous states")
            if len({s.dim for s in states}) != 1:
                raise DimensionError("states of differing dimension")
            x = np.stack([s.array() for s in states])
        else:
            x = np.asarray(states)
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise DimensionError(f"expected an (N, d) array of states, got shape {x.shape}")
    return x


def gaussian_log_density(x: np.ndarray, means: np.ndarray, covariances: np.ndarray) -> np.ndarray:
    """``log N(x_n | mu_i, Sigma_i)`` for every row and component, shape (N, M)."""
    n, d = x.shape
    out = np.empty((n, len(means)))
    for i, (mu, cov) in enumerate(zip(means, covariances)):
        chol = np.linalg.cholesky(cov)
        z = np.linalg.solve(chol, (x - mu).T)
        out[:, i] = -0.5 * (d * _LOG_2PI + (z * z).sum(axis=0)) - np.log(np.diag(chol)).sum()
    return out


def _kmeanspp(x: np.ndarray, m: int, rng: np.random.Generator) -> np.ndarray:
    centers = [x[rng.integers(len(x))]]
    d2 = ((x - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, m):
        total = d2.sum()
        if total <= 0:
            idx = rng.integers(len(x))
        else:
            idx = rng.choice(len(x), p=d2 / total)
        centers.append(x[idx])
        d2 = np.minimum(d2, ((x - x[idx]) ** 2).sum(axis=1))
    return np.asarray(centers)


def _m_step(x, resp, reg):
    """Weights, means, and covariances maximizing the expected complete
    log-likelihood subject to ``Sigma >= reg * I``.

    Clipping the scatter matrix's eigenvalues at ``reg`` is the exact
    constrained maximizer, so the likelihood still never decreases.
    """
    n, d = x.shape
    nk = resp.sum(axis=0) + 10 * np.finfo(float).eps
    weights = nk / nk.sum()
    means = resp.T @ x / nk[:, None]
    covs = np.empty((len(nk), d, d))
    repaired = []
    for i in range(len(nk)):
        diff = x - means[i]
        cov = (resp[:, i, None] * diff).T @ diff / nk[i]
        w, v = np.linalg.eigh(0.5 * (cov + cov.T))
        if w[0] < reg:
            repaired.append(i)
            w = np.maximum(w, reg)
        covs[i] = (v * w) @ v.T
        covs[i] = 0.5 * (covs[i] + covs[i].T)
    return weights, means, covs, repaired


def fit_gmm(states, cfg: EmConfig = EmConfig()) -> GmmFit:
    """Expectation-maximization for a full-covariance Gaussian mixture."""
    x = _as_matrix(states)
    n, d = x.shape
    m = cfg.components
    if m >= n:
        raise FitError(f"need more states ({n}) than components ({m})")
    rng = np.random.default_rng(cfg.seed)
    centers = _kmeanspp(x, m, rng)
    nearest = ((x[:, None, :] - centers[None]) ** 2).sum(axis=2).argmin(axis=1)
    resp = np.zeros((n, m))
    resp[np.arange(n), nearest] = 1.0
    weights, means, covs, repaired = _m_step(x, resp, cfg.reg_covar)

    lls: list[float] = []
    converged = False
    ever_repaired = set(repaired)
    for it in range(cfg.max_iter):
        log_prob = gaussian_log_density(x, means, covs) + np.log(weights)
        norm = logsumexp(log_prob, axis=1)
        resp = np.exp(log_prob - norm[:, None])
        lls.append(float(norm.sum()))
        if len(lls) > 1 and abs(lls[-1] - lls[-2]) <= cfg.tol * n:
            converged = True
            break
        weights, means, covs, repaired = _m_step(x, resp, cfg.reg_covar)
        ever_repaired.update(repaired)
    else:
        log_prob = gaussian_log_density(x, means, covs) + np.log(weights)
        norm = logsumexp(log_prob, axis=1)
        resp = np.exp(log_prob - norm[:, None])
        lls.append(float(norm.sum()))
    return GmmFit(weights, means, covs, resp, lls, len(lls), converged, sorted(ever_repaired))


class Assignment(NamedTuple):
    J: dict[int, tuple[int, ...]]
    duplicates: list[tuple[int, int]]  # (option id, copied component)


def assign_components(responsibilities: np.ndarray, labels: Sequence[int]) -> Assignment:
    """Give each component to the option with the most responsibility mass.

    An option left without components gets a copy of its highest-mass
    component, numbered after the fitted ones.
    """
    resp = np.asarray(responsibilities, dtype=float)
    labels = np.asarray(labels)
    if labels.shape != (len(resp),):
        raise FitError("every state needs exactly one option label")
    if labels.dtype.kind not in "iu":
        raise FitError("option labels must be integers")
    option_ids = np.unique(labels)
    mass = np.stack([resp[labels == o].sum(axis=0) for o in option_ids])  # (options, M)
    winner = option_ids[mass.argmax(axis=0)]  # first max: lowest id wins ties
    J = {int(o): [int(i) for i in np.flatnonzero(winner == o)] for o in option_ids}
    duplicates = []
    next_index = resp.shape[1]
    for row, o in enumerate(option_ids):
        if not J[int(o)]:
            src = int(mass[row].argmax())
            duplicates.append((int(o), src))
            J[int(o)] = [next_index]
            next_index += 1
    return Assignment({o: tuple(v) for o, v in J.items()}, duplicates)


class GaussianMixtureRegions:
    def __init__(self, weights, means, covariances, J: Mapping[int, Sequence[int]],
                 duplicated: Sequence[tuple[int, int]] = (), repaired: Sequence[int] = (),
                 log_floors: Mapping[int, float] | None = None):
        self.weights = np.asarray(weights, dtype=float)
        self.means = np.asarray(means, dtype=float)
        self.covariances = np.asarray(covariances, dtype=float)
        self.J = {int(k): tuple(int(i) for i in v) for k, v in sorted(J.items())}
        self.duplicated = [tuple(p) for p in duplicated]
        self.repaired = list(repaired)
        # per-option region boundaries, if fitted alongside the mixture
        self.log_floors = None if log_floors is None else {int(k): float(v) for k, v in sorted(log_floors.items())}
        self._check()

    def _check(self):
        m = len(self.weights)
        if abs(self.weights.sum() - 1.0) > 1e-9 or np.any(self.weights <= 0):
            raise FitError("mixture weights must be positive and sum to 1")
        seen = sorted(i for v in self.J.values() for i in v)
        if seen != list(range(m)):
            raise FitError("every component must belong to exactly one option")
        if any(not v for v in self.J.values()):
            raise FitError("every option needs at least one component")
        if self.log_floors is not None and set(self.log_floors) != set(self.J):
            raise FitError("log floors must cover exactly the mapped options")

    @classmethod
    def from_fit(cls, fit: GmmFit, labels: Sequence[int]) -> GaussianMixtureRegions:
        assignment = assign_components(fit.responsibilities, labels)
        weights = fit.weights.copy()
        means, covs = list(fit.means), list(fit.covariances)
        extra_w = []
        for _, src in assignment.duplicates:
            weights[src] /= 2.0
            extra_w.append(weights[src])
            means.append(fit.means[src])
            covs.append(fit.covariances[src])
        return cls(np.concatenate([weights, extra_w]), means, covs, assignment.J,
                   assignment.duplicates, fit.repaired)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def option_ids(self) -> list[int]:
        return list(self.J)

    def _components(self, option_id: int) -> tuple[int, ...]:
        try:
            return self.J[int(option_id)]
        except KeyError:
            raise KeyError(f"unknown option id {option_id}") from None

    def log_density(self, states) -> np.ndarray:
        x = _as_matrix(states)
        if x.shape[1] != self.dim:
            raise DimensionError(f"regions have dimension {self.dim}, states have {x.shape[1]}")
        return gaussian_log_density(x, self.means, self.covariances)

    def option_log_likelihood(self, states, option_id: int) -> np.ndarray:
        comps = list(self._components(option_id))
        return self.log_density(states)[:, comps].max(axis=1)

    def log_likelihood_table(self, states) -> np.ndarray:
        """(N, options) table of option log-likelihoods, columns in ``option_ids`` order."""
        logd = self.log_density(states)
        return np.column_stack([logd[:, list(c)].max(axis=1) for c in self.J.values()])

    def classify(self, states) -> np.ndarray:
        ids = np.asarray(self.option_ids)
        return ids[self.log_likelihood_table(states).argmax(axis=1)]

    def to_dict(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "covariances": self.covariances.tolist(),
            "J": {str(k): list(v) for k, v in self.J.items()},
            "duplicated": [list(p) for p in self.duplicated],
            "repaired": list(self.repaired),
            "log_floors": None if self.log_floors is None else {str(k): v for k, v in self.log_floors.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> GaussianMixtureRegions:
        floors = d.get("log_floors")
        return cls(d["weights"], d["means"], d["covariances"],
                   {int(k): v for k, v in d["J"].items()}, d["duplicated"], d["repaired"],
                   None if floors is None else {int(k): v for k, v in floors.items()})

    def with_log_floors(self, log_floors: Mapping[int, float]) -> GaussianMixtureRegions:
        return GaussianMixtureRegions(self.weights, self.means, self.covariances, self.J,
                                      self.duplicated, self.repaired, log_floors)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> GaussianMixtureRegions:
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def option_likelihood(state: StateVector, option_id: int, regions: GaussianMixtureRegions) -> float:
    """Largest raw component density of ``state`` over the option's components."""
    return float(np.exp(regions.option_log_likelihood([state], option_id)[0]))


def _floor_of(floor, option_id, log: bool) -> float:
    value = float(floor[option_id] if isinstance(floor, Mapping) else floor)
    if log:
        return value
    return float(np.log(value)) if value > 0 else -np.inf


def region_overlap(a: int, b: int, regions: GaussianMixtureRegions, density_floor, probes,
                   log: bool = False) -> float:
    """Fraction of probe states lying inside both options' regions, a state
    being inside when its option likelihood reaches the floor.

    ``density_floor`` is a density, or a mapping from option id to one. With
    ``log=True`` the floors are log-densities, which avoids underflow for
    peaked high-dimensional components.
    """
    x = _as_matrix(probes)
    if len(x) == 0:
        raise ValueError("need at least one probe state")
    in_a = regions.option_log_likelihood(x, a) >= _floor_of(density_floor, a, log)
    in_b = regions.option_log_likelihood(x, b) >= _floor_of(density_floor, b, log)
    return float(np.mean(in_a & in_b))


def overlap_matrix(regions: GaussianMixtureRegions, probes, log_floor) -> np.ndarray:
    """Pairwise :func:`region_overlap` with log-density floors, rows and
    columns in ``option_ids`` order."""
    x = _as_matrix(probes)
    if len(x) == 0:
        raise ValueError("need at least one probe state")
    table = regions.log_likelihood_table(x)
    floors = np.array([_floor_of(log_floor, o, True) for o in regions.option_ids])
    inside = table >= floors
    return (inside.T.astype(float) @ inside.astype(float)) / len(x)


def region_log_floors(regions: GaussianMixtureRegions, states, labels, quantile: float = 0.0) -> dict[int, float]:
    """Per-option log-density floor: the given quantile of the option's own
    log-likelihood over its labelled states (-inf for unlabelled options)."""
    if not 0.0 <= quantile <= 1.0:
        raise ValueError("quantile must lie in [0, 1]")
    x = _as_matrix(states)
    labels = np.asarray(labels)
    if labels.shape != (len(x),):
        raise FitError("every state needs exactly one option label")
    floors = {}
    for o in regions.option_ids:
        own = x[labels == o]
        floors[o] = float(np.quantile(regions.option_log_likelihood(own, o), quantile)) if len(own) else -np.inf
    return floors
