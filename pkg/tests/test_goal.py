import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dynoplan.chain import chain_demonstrations
from dynoplan.errors import DimensionError, FitError
from dynoplan.goal import (GoalFitConfig, GoalHeuristic, fit_goal_heuristic, monotonicity_score,
                           progress_labels)
from dynoplan.state import StateVector
from dynoplan.trajectory import Trajectory, TrajectoryStep


def _walk(points, tid="w"):
    steps = [TrajectoryStep(t, StateVector.continuous(p), 1, t == len(points) - 1) for t, p in enumerate(points)]
    return Trajectory("toy", tid, steps)


def test_labels_run_from_zero_to_one():
    assert progress_labels(_walk([[0.0], [1.0], [2.0], [3.0], [4.0]])).tolist() == [0, 0.25, 0.5, 0.75, 1]
    with pytest.raises(FitError):
        progress_labels(_walk([[0.0]]))


def test_single_demo_endpoints():
    walk = _walk([[0.0, 0.0], [1.0, 0.5], [2.0, 0.7], [3.0, 2.0]])
    gh = fit_goal_heuristic([walk])
    assert gh.evaluate(walk.steps[0].state) == (0.0, 0.0)
    assert gh.evaluate(walk.steps[-1].state) == (1.0, 0.0)


def test_chain_demo_interpolates_position():
    gh = fit_goal_heuristic(chain_demonstrations(1))
    mean, _ = gh.evaluate(StateVector.index(10))
    assert abs(mean - 9 / 19) < 0.05
    assert gh.evaluate(StateVector.index(20))[0] == 1.0


def test_exact_match_returns_the_label_with_k_one():
    walk = _walk([[0.0], [1.0], [2.0]])
    gh = fit_goal_heuristic([walk], GoalFitConfig(k=1))
    assert gh.evaluate(StateVector.continuous([1.0])) == (0.5, 0.0)


def test_equidistant_neighbours_average():
    # training states at 0 and 2 with labels 0.2 and 0.8, queried halfway
    gh = GoalHeuristic([[0.0], [2.0]], [0.2, 0.8], k=2, bandwidth=1.0, center=[0.0], scale=[1.0])
    mean, var = gh.evaluate(StateVector.continuous([1.0]))
    assert mean == pytest.approx(0.5, abs=1e-12)
    assert var == pytest.approx(0.09, abs=1e-12)


def test_kernel_weights_favour_the_closer_neighbour():
    gh = GoalHeuristic([[0.0], [2.0]], [0.0, 1.0], k=2, bandwidth=1.0, center=[0.0], scale=[1.0])
    mean, _ = gh.evaluate(StateVector.continuous([0.5]))
    # weights exp(-0.25/2) and exp(-2.25/2)
    w0, w1 = np.exp(-0.125), np.exp(-1.125)
    assert mean == pytest.approx(w1 / (w0 + w1), abs=1e-12)


def test_far_queries_stay_in_unit_interval():
    gh = fit_goal_heuristic([_walk([[0.0], [1.0], [2.0]])])
    means, var = gh.evaluate_batch(np.array([[-1e6], [1e6], [1e-300]]))
    assert np.all((means >= 0) & (means <= 1)) and np.all(var >= 0)


def test_monotonicity_scores():
    walk = _walk([[float(i)] for i in range(10)])
    gh = fit_goal_heuristic([walk])
    up = monotonicity_score(gh, walk)
    assert up.score == pytest.approx(1.0, abs=1e-12) and not up.degenerate
    down = monotonicity_score(gh, _walk([[float(i)] for i in reversed(range(10))]))
    assert down.score == pytest.approx(-1.0, abs=1e-12)
    flat = GoalHeuristic([[0.0]], [0.3], k=1, bandwidth=1.0, center=[0.0], scale=[1.0])
    assert monotonicity_score(flat, walk) == (0.0, True)
    with pytest.raises(ValueError):
        monotonicity_score(gh, _walk([[0.0], [1.0]]))


def test_chain_demo_is_monotone():
    demos = chain_demonstrations(3)
    gh = fit_goal_heuristic(demos)
    assert all(monotonicity_score(gh, d).score >= 0.99 for d in demos)


def test_fit_errors():
    with pytest.raises(FitError):
        fit_goal_heuristic([])
    with pytest.raises(ValueError):
        GoalFitConfig(k=0)
    with pytest.raises(ValueError):
        GoalFitConfig(bandwidth=0.0)


def test_dimension_mismatch():
    gh = fit_goal_heuristic([_walk([[0.0, 1.0], [1.0, 1.0]])])
    with pytest.raises(DimensionError):
        gh.evaluate(StateVector.continuous([0.0]))
    with pytest.raises(DimensionError):
        gh.evaluate_batch(np.zeros((3, 3)))


def test_constant_dimension_does_not_divide_by_zero():
    gh = fit_goal_heuristic([_walk([[0.0, 5.0], [1.0, 5.0], [2.0, 5.0]])])
    assert np.all(np.isfinite(gh.scale)) and gh.evaluate(StateVector.continuous([1.0, 5.0]))[0] == 0.5


def test_save_load_is_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    demos = [_walk(np.cumsum(rng.normal(size=(12, 3)), axis=0).tolist(), tid=str(i)) for i in range(4)]
    gh = fit_goal_heuristic(demos)
    gh.save(tmp_path / "g.json")
    back = GoalHeuristic.load(tmp_path / "g.json")
    q = rng.normal(size=(200, 3)) * 3
    for a, b in zip(gh.evaluate_batch(q), back.evaluate_batch(q)):
        assert np.array_equal(a, b)


@settings(max_examples=50)
@given(seed=st.integers(0, 2 ** 32 - 1), perm_seed=st.integers(0, 2 ** 32 - 1))
def test_fit_ignores_demo_order(seed, perm_seed):
    rng = np.random.default_rng(seed)
    demos = [_walk(np.cumsum(rng.normal(size=(int(rng.integers(2, 9)), 2)), axis=0).tolist(), tid=str(i))
             for i in range(int(rng.integers(1, 5)))]
    shuffled = [demos[i] for i in np.random.default_rng(perm_seed).permutation(len(demos))]
    q = rng.normal(size=(50, 2)) * 2
    a, b = fit_goal_heuristic(demos), fit_goal_heuristic(shuffled)
    assert np.array_equal(a.evaluate_batch(q)[0], b.evaluate_batch(q)[0])
