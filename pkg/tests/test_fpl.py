"""Perturbed-leader baseline."""

import numpy as np
import pytest

from dphedge.dp import solve_min_sum_edges
from dphedge.fpl import FollowPerturbedLeader, FplState, fpl_predict
from dphedge.kdag import check_multipath, enumerate_multipaths

from conftest import fuzz_dags


def test_zero_scale_equals_offline_solver(two_choice_dag):
    state = FplState(two_choice_dag, perturbation_scale=0.0)
    state.add_losses(np.array([0.7, 0.2]))
    rng = np.random.default_rng(50)
    pi = fpl_predict(state, two_choice_dag, rng)
    _, expected = solve_min_sum_edges(two_choice_dag, state.cumulative_edge_losses)
    assert pi == expected


def test_zero_history_zero_scale_returns_first_multipath(two_choice_dag):
    state = FplState(two_choice_dag, perturbation_scale=0.0)
    rng = np.random.default_rng(51)
    assert fpl_predict(state, two_choice_dag, rng) == enumerate_multipaths(two_choice_dag)[0]


def test_large_gap_cannot_be_bridged(two_choice_dag):
    state = FplState(two_choice_dag, perturbation_scale=1.0)
    state.add_losses(np.array([0.0, 10.0]))
    rng = np.random.default_rng(52)
    first = enumerate_multipaths(two_choice_dag)[0]
    assert all(fpl_predict(state, two_choice_dag, rng) == first for _ in range(200))


def test_tied_losses_split_evenly(two_choice_dag):
    state = FplState(two_choice_dag, perturbation_scale=1.0)
    rng = np.random.default_rng(53)
    first = enumerate_multipaths(two_choice_dag)[0]
    draws = 100_000
    hits = sum(fpl_predict(state, two_choice_dag, rng) == first for _ in range(draws))
    assert hits / draws == pytest.approx(0.5, abs=0.01)


def test_predictions_always_valid():
    rng = np.random.default_rng(54)
    for dag in fuzz_dags(8, start_seed=1500, safe=False, max_count=2000):
        learner = FollowPerturbedLeader(dag, perturbation_scale=2.0)
        for _ in range(10):
            pi = learner.predict(rng)
            assert check_multipath(dag, pi.counts) == []
            learner.update(rng.uniform(0, 1, dag.n_edges))


def test_negative_scale_rejected(two_choice_dag):
    with pytest.raises(ValueError):
        FplState(two_choice_dag, perturbation_scale=-1.0)
