import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from dynoplan.chain import (ChainEnv, ChainGoal, NoisyChainGoal, NoisyModelConfig, chain_demonstrations,
                            make_chain_options, make_noisy_models, perturb, transition, true_goal)
from dynoplan.errors import StateError
from dynoplan.options import rollout, with_dynamics
from dynoplan.state import StateVector

S = StateVector.index


def test_nineteen_right_steps_reach_the_goal():
    env = ChainEnv(1)
    rewards = [env.step(+1) for _ in range(19)]
    assert env.terminal and env.state == S(20) and env.t == 19
    assert rewards == [0.0] * 18 + [1.0] and env.reward == 1.0
    with pytest.raises(StateError):
        env.step(+1)


def test_left_wall_clips():
    env = ChainEnv(1)
    assert env.step(-1) == 0.0 and env.state == S(1) and env.t == 1
    with pytest.raises(ValueError):
        env.step(0)
    with pytest.raises(StateError):
        ChainEnv(21)


def test_batch_transition_matches_oracle():
    for s in range(1, 21):
        for a in (-1, 1):
            assert transition(np.array([[s]]), np.array([a]))[0, 0] == oracles.chain_step(s, a)


def test_random_option_is_fair():
    opt = make_chain_options()[3]
    acts = opt.policy(np.full((10_000, 1), 5), np.random.default_rng(0))
    assert abs(np.mean(acts == 1) - 0.5) < 0.02 and set(np.unique(acts)) == {-1, 1}


def test_option_definitions():
    opts = make_chain_options()
    assert [o.id for o in opts] == [1, 2, 3, 4, 5]
    x = np.array([[3], [20]])
    assert [o.termination_rate(x).tolist() for o in opts[:3]] == [[0.2, 1.0], [0.5, 1.0], [0.9, 1.0]]
    assert opts[4].policy(x, None).tolist() == [-1, -1]
    for bad in ((0.2,) * 4, (0.0, 0.5, 0.5, 0.5, 0.5), (1.2, 0.5, 0.5, 0.5, 0.5)):
        with pytest.raises(ValueError):
            make_chain_options(bad)


def test_perturb_limits():
    rng = np.random.default_rng(0)
    s = rng.integers(1, 21, size=1000)
    assert np.array_equal(perturb(s, 0.0, rng), s)
    moved = perturb(s, 1.0, rng)
    assert np.all(np.abs(moved - s) == 1) and np.all((moved >= 1) & (moved <= 20))


def test_perturb_rate():
    s = np.full(100_000, 10)
    moved = perturb(s, 0.2, np.random.default_rng(1))
    assert abs(np.mean(moved != s) - 0.2) < 0.005
    assert abs(np.mean(moved == 11) - 0.1) < 0.005


def test_noisy_models_with_zero_noise_are_exact():
    opts = make_chain_options()
    dyn, goal = make_noisy_models(opts, NoisyModelConfig(epsilon=0.0))
    noisy = with_dynamics(opts, dyn)
    # the noise still consumes draws, so compare paths by shape, not by seed
    for seed in range(50):
        res = rollout(noisy[0], S(1), 10, seed)
        steps = 10 if res.terminated_at is None else res.terminated_at
        assert [s.values[0] for s in res.states] == [min(1 + t, 1 + steps) for t in range(11)]
    assert goal.evaluate(S(7)) == ChainGoal().evaluate(S(7))
    with pytest.raises(ValueError):
        NoisyModelConfig(epsilon=1.5)
    with pytest.raises(ValueError):
        NoisyModelConfig(perturbation="gaussian")


def test_true_goal_endpoints():
    assert ChainGoal().evaluate(S(1)) == (0.0, 0.0)
    assert ChainGoal().evaluate(S(20)) == (1.0, 0.0)
    assert np.allclose(true_goal(np.arange(1, 21)[:, None]), [oracles.progress(s) for s in range(1, 21)])


@settings(max_examples=100)
@given(s=st.integers(1, 20), eps=st.floats(0, 1))
def test_noisy_goal_mean_matches_samples_and_stays_in_range(s, eps):
    goal = NoisyChainGoal(eps)
    mean, var = goal.evaluate(S(s))
    assert 0.0 <= mean <= 1.0 and var >= 0.0
    samples = goal.mean_batch(np.full((4000, 1), s), np.random.default_rng(s))
    assert np.all((samples >= 0) & (samples <= 1))
    assert abs(samples.mean() - mean) < 5 * np.sqrt(var / 4000) + 1e-12


def test_demonstrations_walk_right():
    (demo,) = chain_demonstrations(1)
    assert [s.state.values[0] for s in demo.steps] == list(range(1, 21))
    assert demo.steps[-1].done and not any(s.done for s in demo.steps[:-1])
    demo.validate()
