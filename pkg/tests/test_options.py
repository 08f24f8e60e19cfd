from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from dynoplan.chain import ChainEnv, make_chain_options
from dynoplan.errors import DimensionError, HorizonError, InitiationError, StateError
from dynoplan.options import (MAX_HORIZON, OptionSpec, derive_seed, execute_option, indicator_initiation,
                              rollout, rollout_batch, with_dynamics)
from dynoplan.state import StateSpace, StateVector

OPTIONS = make_chain_options()
RIGHT_SLOW = OPTIONS[0]  # beta 0.2
S = StateVector.index


class Counter:
    """A one-dimensional world whose action is added to the state."""

    def __init__(self):
        self.x = 0.0
        self.t = 0

    @property
    def state(self):
        return StateVector.continuous([self.x])

    @property
    def terminal(self):
        return False

    def step(self, action):
        self.x += float(action)
        self.t += 1
        return 0.0


def _line_option(beta, init=lambda x: np.ones(len(x), bool), move=0.0):
    space = StateSpace(dim=1)
    return OptionSpec(
        id=7, space=space,
        policy=lambda x, rng: np.full(len(x), move),
        initiation=init,
        termination_rate=lambda x: np.full(len(x), beta),
        dynamics=lambda x, rng: x + move)


def test_horizon_zero_returns_start():
    res = rollout(RIGHT_SLOW, S(4), 0, seed=3)
    assert res.states == (S(4),) and res.final == S(4) and res.terminated_at is None


@pytest.mark.parametrize("seed", range(25))
def test_rollout_replays_bernoulli_draws(seed):
    # right-moving dynamics draws nothing, so every uniform goes to termination
    res = rollout(RIGHT_SLOW, S(1), 10, seed=seed)
    t = oracles.first_success(np.random.default_rng(seed).random(10), 0.2)
    steps = 10 if t is None else t
    assert res.final == S(1 + steps)
    assert res.terminated_at == t
    assert len(res.states) == 11
    # the state freezes after termination
    assert all(s == S(1 + steps) for s in res.states[steps:])
    assert res.active_mask == tuple(i < steps for i in range(10))


def test_batch_mean_matches_truncated_geometric():
    out = rollout_batch(RIGHT_SLOW, S(1), 10, 100_000, np.random.default_rng(0))
    expected = float(oracles.expected_right_steps(Fraction(1, 5), 10)) + 1  # about 5.463
    assert abs(out.final[:, 0].mean() - expected) < 0.03


def test_batch_terminated_at_bounds():
    out = rollout_batch(OPTIONS[2], S(5), 10, 1000, np.random.default_rng(1))
    t = out.terminated_at
    assert np.all((t == -1) | ((t >= 1) & (t <= 10)))
    assert np.all(out.final[t > 0, 0] == 5 + t[t > 0])


def test_horizon_limits():
    with pytest.raises(HorizonError):
        rollout(RIGHT_SLOW, S(1), MAX_HORIZON + 1, seed=0)
    with pytest.raises(HorizonError):
        rollout(RIGHT_SLOW, S(1), -1, seed=0)
    rollout(RIGHT_SLOW, S(1), 12, seed=0, max_horizon=12)
    with pytest.raises(ValueError):
        rollout_batch(RIGHT_SLOW, S(1), 3, 0, np.random.default_rng(0))


def test_dimension_checked_on_entry():
    with pytest.raises(DimensionError):
        rollout(_line_option(0.5), StateVector.continuous([0.0, 1.0]), 3, seed=0)
    with pytest.raises(StateError):
        rollout(RIGHT_SLOW, S(25), 3, seed=0)


def test_bad_termination_rate_rejected():
    with pytest.raises(StateError):
        rollout(_line_option(1.5), StateVector.continuous([0.0]), 2, seed=0)


def test_shape_changing_dynamics_rejected():
    opt = _line_option(0.5)
    bad = OptionSpec(1, opt.space, opt.policy, opt.initiation, opt.termination_rate,
                     lambda x, rng: np.zeros((len(x), 2)))
    with pytest.raises(StateError):
        rollout(bad, StateVector.continuous([0.0]), 2, seed=0)


def test_unknown_kind_rejected():
    opt = _line_option(0.5)
    with pytest.raises(ValueError):
        OptionSpec(1, opt.space, opt.policy, opt.initiation, opt.termination_rate, opt.dynamics, kind="x")


def test_with_dynamics_swaps_by_id():
    models = {o.id: (lambda x, rng: x) for o in OPTIONS}
    swapped = with_dynamics(OPTIONS, models)
    assert rollout(swapped[0], S(3), 5, seed=0).final == S(3)
    assert [o.id for o in swapped] == [o.id for o in OPTIONS]


def test_execute_certain_termination_takes_one_step():
    env = Counter()
    steps, final = execute_option(_line_option(1.0, move=0.0), env, seed=0)
    assert len(steps) == 1 and steps[0].done and steps[0].t == 1
    assert final == StateVector.continuous([0.0])


@pytest.mark.parametrize("seed", range(10))
def test_execute_replays_bernoulli_draws(seed):
    env = ChainEnv(1)
    steps, final = execute_option(OPTIONS[1], env, seed=seed)
    # constant policy draws nothing; one uniform per step decides termination
    t = oracles.first_success(np.random.default_rng(seed).random(40), 0.5)
    assert len(steps) == t and final == S(1 + t)
    assert [s.t for s in steps] == list(range(1, t + 1))
    assert [s.done for s in steps] == [False] * (t - 1) + [True]


def test_execute_left_moves_left():
    for seed in range(20):
        env = ChainEnv(3)
        _, final = execute_option(OPTIONS[4], env, seed=seed)
        assert final.values[0] < 3


def test_execute_stops_at_terminal_and_max_steps():
    env = ChainEnv(19)
    steps, final = execute_option(make_chain_options((0.01,) * 5)[0], env, seed=0)
    assert final == S(20) and len(steps) == 1 and steps[0].done
    steps, _ = execute_option(_line_option(0.0, move=1.0), Counter(), seed=0, max_steps=7)
    assert len(steps) == 7 and not any(s.done for s in steps)


def test_execute_refuses_outside_initiation():
    opt = _line_option(0.5, init=lambda x: x[:, 0] > 1.0)
    env = Counter()
    with pytest.raises(InitiationError):
        execute_option(opt, env, seed=0)
    assert env.t == 0


def test_indicator_initiation():
    assert all(indicator_initiation(o, S(s)) == 1 for o in OPTIONS for s in range(1, 20))
    assert all(indicator_initiation(o, S(20)) == 0 for o in OPTIONS)
    with pytest.raises(StateError):
        indicator_initiation(OPTIONS[0], S(0))


def test_derive_seed_is_stable_and_distinct():
    a = derive_seed(0, 1, 2)
    assert a == derive_seed(0, 1, 2)
    assert 0 <= a < 2 ** 63
    assert len({derive_seed(0, 1, k) for k in range(1000)}) == 1000


@settings(max_examples=200)
@given(option=st.integers(0, 4), start=st.integers(1, 20), horizon=st.integers(0, 30),
       seed=st.integers(0, 2 ** 32))
def test_rollout_is_deterministic_and_in_range(option, start, horizon, seed):
    a = rollout(OPTIONS[option], S(start), horizon, seed)
    b = rollout(OPTIONS[option], S(start), horizon, seed)
    assert a == b
    assert all(1 <= s.values[0] <= 20 for s in a.states)
    # consecutive states differ by at most one cell
    vals = [s.values[0] for s in a.states]
    assert all(abs(x - y) <= 1 for x, y in zip(vals, vals[1:]))
