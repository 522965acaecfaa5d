"""Product-form weights: pushing, updates, sampling, and the explicit-weights oracle."""

import numpy as np
import pytest

from dphedge.expanded_hedge import (
    ExpandedHedge,
    local_normalization_error,
    mean_edge_flow,
    multipath_probability,
    sample_multipath,
    uniform_weights,
    update_weights,
    weight_push,
)
from dphedge.kdag import (
    build_kdag,
    check_multipath,
    count_multipaths,
    enumerate_multipaths,
    multipath_loss,
    multipath_multiplicity,
)
from dphedge.problems import BstInstance, RodInstance, build_bst, build_rod

from conftest import fuzz_dags


def explicit_probabilities(dag, hat):
    """Normalize raw products over the enumerated multipaths (independent route)."""
    paths = enumerate_multipaths(dag)
    raw = np.array(
        [
            multipath_multiplicity(p)
            * np.prod(np.asarray(hat, dtype=float) ** p.multiedge_counts())
            for p in paths
        ]
    )
    return paths, raw / raw.sum()


class TestInit:
    def test_single_path_weight_one(self, single_path_dag):
        w = uniform_weights(single_path_dag)
        assert np.allclose(w.w, 1.0)

    def test_two_choices_half_half(self, two_choice_dag):
        w = uniform_weights(two_choice_dag)
        assert w.w == pytest.approx([0.5, 0.5])

    def test_bst3_uniform_over_trees(self):
        dag = build_bst(BstInstance(3)).dag
        w = uniform_weights(dag)
        for pi in enumerate_multipaths(dag):
            assert multipath_probability(w, pi) == pytest.approx(0.2, abs=1e-12)


class TestWeightPush:
    def test_unit_weights_count_paths_rod4(self):
        dag = build_rod(RodInstance(4)).dag
        _, z = weight_push(dag, np.ones(dag.n_multiedges))
        assert z[dag.source] == pytest.approx(8.0, rel=1e-12)

    def test_parallel_chain_pushes_to_half(self, parallel_chain_dag):
        w, z = weight_push(parallel_chain_dag, np.ones(4))
        assert w.w == pytest.approx([0.5, 0.5, 0.5, 0.5])
        assert z[parallel_chain_dag.source] == pytest.approx(4.0, rel=1e-12)

    def test_matches_enumeration_normalization(self, layered_2dag):
        rng = np.random.default_rng(11)
        hat = rng.uniform(0.1, 2.0, layered_2dag.n_multiedges)
        pushed, _ = weight_push(layered_2dag, hat)
        paths, probs = explicit_probabilities(layered_2dag, hat)
        for pi, target in zip(paths, probs):
            assert multipath_probability(pushed, pi) == pytest.approx(target, abs=1e-12)

    def test_local_normalization_on_fuzz(self):
        rng = np.random.default_rng(12)
        for dag in fuzz_dags(20, start_seed=800, safe=False, max_count=3000):
            hat = rng.uniform(1e-3, 5.0, dag.n_multiedges)
            pushed, _ = weight_push(dag, hat)
            assert local_normalization_error(pushed) < 1e-12

    def test_idempotent_to_machine_precision(self):
        rng = np.random.default_rng(13)
        for dag in fuzz_dags(20, start_seed=900, safe=False, max_count=3000):
            pushed, _ = weight_push(dag, rng.uniform(0.05, 2.0, dag.n_multiedges))
            again, _ = weight_push(dag, pushed.w)
            assert np.abs(again.w - pushed.w).max() <= 1e-15

    def test_all_zero_group_names_vertex(self, two_choice_dag):
        with pytest.raises(ValueError, match="'s'"):
            weight_push(two_choice_dag, np.zeros(2))

    def test_extreme_weights_take_log_route(self, parallel_chain_dag):
        hat = np.array([1e-300, 1e-320, 1e-300, 1e-300])
        pushed, _ = weight_push(parallel_chain_dag, hat)
        assert local_normalization_error(pushed) < 1e-12


class TestUpdate:
    def test_zero_losses_leave_weights(self):
        dag = build_bst(BstInstance(3)).dag
        w = uniform_weights(dag)
        w2 = update_weights(w, np.zeros(dag.n_edges), eta=0.7)
        assert np.abs(w2.w - w.w).max() <= 1e-15

    def test_zero_eta_leaves_weights(self):
        dag = build_bst(BstInstance(3)).dag
        w = uniform_weights(dag)
        rng = np.random.default_rng(14)
        w2 = update_weights(w, rng.uniform(0, 1, dag.n_edges), eta=0.0)
        assert np.abs(w2.w - w.w).max() <= 1e-15

    def test_one_update_matches_exponential_weights(self):
        dag = build_bst(BstInstance(3)).dag
        rng = np.random.default_rng(15)
        losses = rng.uniform(0, 1, dag.n_edges)
        eta = 0.9
        w = update_weights(uniform_weights(dag), losses, eta)
        paths = enumerate_multipaths(dag)
        raw = np.array([np.exp(-eta * multipath_loss(p, losses)) for p in paths])
        raw /= raw.sum()
        for pi, target in zip(paths, raw):
            assert multipath_probability(w, pi) == pytest.approx(target, abs=1e-12)

    def test_exponential_weights_equivalence_over_many_trials(self):
        # the central property: after any loss history the implicit state
        # matches one explicit weight per object
        eta = 0.5
        rng = np.random.default_rng(16)
        for dag in fuzz_dags(8, start_seed=1000, safe=True, max_count=1000):
            w = uniform_weights(dag)
            paths = enumerate_multipaths(dag)
            counts = np.stack([p.counts for p in paths]).astype(float)
            cumulative = np.zeros(dag.n_edges)
            for _ in range(50):
                losses = rng.uniform(0, 1, dag.n_edges)
                w = update_weights(w, losses, eta)
                cumulative += losses
                logw = -eta * (counts @ cumulative)
                logw -= logw.max()
                target = np.exp(logw)
                target /= target.sum()
                got = np.array([multipath_probability(w, p) for p in paths])
                assert np.abs(got - target).max() < 1e-9

    def test_normalization_after_updates(self):
        rng = np.random.default_rng(17)
        for dag in fuzz_dags(10, start_seed=1100, safe=False, max_count=2000):
            w = uniform_weights(dag)
            for _ in range(5):
                w = update_weights(w, rng.uniform(0, 1, dag.n_edges), eta=1.3)
            assert local_normalization_error(w) < 1e-12


class TestSampling:
    def test_single_path_always(self, single_path_dag):
        w = uniform_weights(single_path_dag)
        rng = np.random.default_rng(18)
        pi = enumerate_multipaths(single_path_dag)[0]
        assert all(sample_multipath(w, rng) == pi for _ in range(20))

    def test_two_path_frequencies(self, two_choice_dag):
        w = uniform_weights(two_choice_dag)
        rng = np.random.default_rng(19)
        hits = sum(sample_multipath(w, rng).counts[0] for _ in range(100_000))
        assert hits / 100_000 == pytest.approx(0.5, abs=0.01)

    def test_bst3_tree_frequencies(self):
        dag = build_bst(BstInstance(3)).dag
        w = uniform_weights(dag)
        rng = np.random.default_rng(20)
        paths = {p.digest(): 0 for p in enumerate_multipaths(dag)}
        draws = 100_000
        for _ in range(draws):
            paths[sample_multipath(w, rng).digest()] += 1
        for c in paths.values():
            assert c / draws == pytest.approx(0.2, abs=0.01)

    def test_samples_are_valid_multipaths(self, layered_2dag):
        rng = np.random.default_rng(21)
        w = uniform_weights(layered_2dag)
        for _ in range(200):
            pi = sample_multipath(w, rng)
            assert check_multipath(layered_2dag, pi.counts) == []

    def test_empirical_mean_matches_forward_flow(self, layered_2dag):
        rng = np.random.default_rng(22)
        losses = rng.uniform(0, 1, layered_2dag.n_edges)
        w = update_weights(uniform_weights(layered_2dag), losses, 0.8)
        draws = 100_000
        acc = np.zeros(layered_2dag.n_edges)
        for _ in range(draws):
            acc += sample_multipath(w, rng).counts
        empirical = acc / draws
        expected = mean_edge_flow(w)
        # per-edge tolerance: three standard errors with count variance <= 2
        se = 3 * np.sqrt(2.0 / draws)
        assert np.abs(empirical - expected).max() < max(se, 0.02)

    def test_mean_flow_matches_enumeration(self, layered_2dag):
        rng = np.random.default_rng(23)
        w = update_weights(
            uniform_weights(layered_2dag), rng.uniform(0, 1, layered_2dag.n_edges), 0.5
        )
        paths = enumerate_multipaths(layered_2dag)
        probs = np.array([multipath_probability(w, p) for p in paths])
        assert probs.sum() == pytest.approx(1.0, abs=1e-12)
        by_enum = sum(pr * p.counts for pr, p in zip(probs, paths))
        assert np.abs(by_enum - mean_edge_flow(w)).max() < 1e-12


class TestProbability:
    def test_single_path_probability_one(self, single_path_dag):
        w = uniform_weights(single_path_dag)
        pi = enumerate_multipaths(single_path_dag)[0]
        assert multipath_probability(w, pi) == pytest.approx(1.0)

    def test_probabilities_sum_to_one_with_multiplicities(self):
        for dag in fuzz_dags(10, start_seed=1200, safe=False, max_count=2000):
            w = uniform_weights(dag)
            total = sum(multipath_probability(w, p) for p in enumerate_multipaths(dag))
            assert total == pytest.approx(1.0, abs=1e-10)


class TestLearnerWrapper:
    def test_predict_update_cycle(self):
        dag = build_bst(BstInstance(3)).dag
        learner = ExpandedHedge(dag, eta=0.3)
        rng = np.random.default_rng(24)
        for _ in range(5):
            pi = learner.predict(rng)
            assert check_multipath(dag, pi.counts) == []
            learner.update(rng.uniform(0, 1, dag.n_edges))
        assert local_normalization_error(learner.weights) < 1e-12
