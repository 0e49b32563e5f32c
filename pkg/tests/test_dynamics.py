import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from chaosrom.dynamics import (DatasetConfig, Trajectory, TruthModel, generate_dataset,
                               generate_forecast_ensemble, l96_rhs, read_trajectories,
                               rk4_propagate, trajectories_to_csv)
from chaosrom.errors import ConfigError, InvalidModelError

finite = st.floats(-50, 50, allow_nan=False)


def test_rhs_fixed_point():
    assert np.max(np.abs(l96_rhs(np.full(40, 8.0), 8.0))) <= 1e-14


def test_rhs_zero_state_is_forcing():
    assert np.array_equal(l96_rhs(np.zeros(40), 8.0), np.full(40, 8.0))


def test_rhs_hand_case():
    assert np.array_equal(l96_rhs(np.array([1.0, 2, 3, 4]), 8.0), [3.0, 5, 11, 1])


def test_rhs_rejects_small_dimension():
    with pytest.raises(InvalidModelError):
        l96_rhs(np.ones(3), 8.0)


@settings(max_examples=100, deadline=None)
@given(arrays(float, st.integers(4, 60), elements=finite))
def test_quadratic_term_conserves_energy(x):
    q = l96_rhs(x, 0.0) + x
    # rounding scales with the summed terms, not with |q|, which may cancel to ~0
    n = np.linalg.norm(x)
    assert abs(x @ q) <= 1e-12 * (n ** 3 + n ** 2) + 1e-300


@settings(max_examples=50, deadline=None)
@given(arrays(float, 12, elements=finite), st.integers(0, 11), st.floats(-10, 10))
def test_shift_equivariance(x, k, F):
    assert np.allclose(l96_rhs(np.roll(x, k), F), np.roll(l96_rhs(x, F), k), rtol=0, atol=1e-12)


def test_batch_rhs_matches_rows(rng):
    X = rng.standard_normal((5, 40))
    assert np.array_equal(l96_rhs(X, 8.0), np.array([l96_rhs(x, 8.0) for x in X]))


def test_rk4_lands_on_fixed_point():
    x = np.full(40, 8.0)
    assert np.array_equal(rk4_propagate(x, 1.0), x)


@pytest.mark.parametrize("k, n_traj, length", [(1, 50, 2), (9, 10, 10)])
def test_dataset_shape(k, n_traj, length):
    trajs = generate_dataset(DatasetConfig(n_points=100, rollout=k, burn_in=1.0))
    assert len(trajs) == n_traj
    assert all(len(tr) == length and tr.dim == 40 for tr in trajs)
    for tr in trajs:
        assert np.all(np.abs(np.diff(tr.times) - 0.05) <= 1e-12)
    starts = np.array([tr.times[0] for tr in trajs])
    assert np.allclose(np.diff(starts), 6.0, rtol=0, atol=1e-12)


def test_dataset_divisibility():
    with pytest.raises(ConfigError):
        DatasetConfig(n_points=100, rollout=6)


def test_dataset_is_deterministic():
    cfg = DatasetConfig(n_points=20, rollout=1, burn_in=2.0)
    a, b = generate_dataset(cfg), generate_dataset(cfg)
    assert trajectories_to_csv(a) == trajectories_to_csv(b)


def test_dataset_lies_on_one_solution():
    # consecutive trajectory starts are one gap apart along the same solution
    cfg = DatasetConfig(n_points=6, rollout=1, burn_in=2.0, trajectory_gap=1.0)
    trajs = generate_dataset(cfg)
    nxt = rk4_propagate(trajs[0].states[0], 1.0)
    assert np.allclose(nxt, trajs[1].states[0], atol=1e-9)


def test_csv_round_trip(rng):
    trajs = [Trajectory(np.array([0.0, 0.05]), rng.standard_normal((2, 5))),
             Trajectory(np.array([6.0, 6.05]), rng.standard_normal((2, 5)))]
    text = trajectories_to_csv(trajs)
    assert text.startswith("time,x1,x2,x3,x4,x5\n")
    back = read_trajectories(io.StringIO(text))
    for a, b in zip(trajs, back):
        assert np.array_equal(a.times, b.times) and np.array_equal(a.states, b.states)


def test_trajectory_requires_increasing_times():
    with pytest.raises(ConfigError):
        Trajectory(np.array([0.0, 0.0]), np.zeros((2, 4)))


def test_ensemble_shape_determinism_and_bulk():
    cfg = DatasetConfig(n_points=10, rollout=1, burn_in=10.0, seed=3)
    one = generate_forecast_ensemble(1, cfg)
    assert one.shape == (1, 40) and np.all(np.isfinite(one))
    assert np.array_equal(generate_forecast_ensemble(3, cfg), generate_forecast_ensemble(3, cfg))
    X = generate_forecast_ensemble(100, cfg)
    assert np.all(np.abs(X.mean(axis=0)) < 10)


def test_ensemble_is_disjoint_from_training_window():
    cfg = DatasetConfig(n_points=10, rollout=1, burn_in=2.0, trajectory_gap=1.0)
    train_states = np.vstack([tr.states for tr in generate_dataset(cfg)])
    X = generate_forecast_ensemble(5, cfg)
    d = np.linalg.norm(X[:, None] - train_states[None], axis=2)
    assert d.min() > 1e-6


def test_truth_forecast_stays_in_bulk():
    cfg = DatasetConfig(n_points=10, rollout=1, burn_in=10.0)
    x0 = generate_forecast_ensemble(1, cfg)[0]
    tr = TruthModel().forecast(x0, 0.05 * np.arange(241))
    assert np.all(np.abs(tr.states) < 20)
