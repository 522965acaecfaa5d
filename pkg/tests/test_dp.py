"""Loss lowering and the offline min-sum solver against enumeration."""

import numpy as np
import pytest

from dphedge.dp import DpLosses, lower_edge_losses, solve_min_sum, solve_min_sum_edges
from dphedge.kdag import (
    build_kdag,
    check_multipath,
    enumerate_multipaths,
    multipath_loss,
)
from dphedge.problems import BstInstance, build_bst

from conftest import fuzz_dags


def random_dp_losses(dag, rng) -> DpLosses:
    return DpLosses(
        rng.uniform(0.0, 1.0, dag.n_multiedges),
        {dag.name_of(s): float(rng.uniform(0.0, 1.0)) for s in dag.sinks},
    )


class TestLowering:
    def test_zero_losses_lower_to_zero(self, single_path_dag):
        lowered = lower_edge_losses(single_path_dag, DpLosses.zeros(single_path_dag))
        assert np.all(lowered == 0.0)

    def test_multiedge_loss_split_evenly_between_non_sinks(self):
        raw = {
            "k": 2,
            "vertices": ["s", "a", "b", "t1", "t2", "t3", "t4"],
            "source": "s",
            "sinks": ["t1", "t2", "t3", "t4"],
            "multiedges": [
                {"from": "s", "targets": ["a", "b"]},
                {"from": "a", "targets": ["t1", "t2"]},
                {"from": "b", "targets": ["t3", "t4"]},
            ],
        }
        dag = build_kdag(raw)
        losses = DpLosses(
            np.array([1.0, 0.0, 0.0]), {t: 0.0 for t in ["t1", "t2", "t3", "t4"]}
        )
        lowered = lower_edge_losses(dag, losses)
        assert lowered[0] == 0.5 and lowered[1] == 0.5

    def test_sink_loss_added_on_entering_edges(self):
        bundle = build_bst(BstInstance(1))
        p, q = np.array([0.5]), np.array([0.25, 0.25])
        lowered = lower_edge_losses(bundle.dag, bundle.losses((p, q)))
        pi = enumerate_multipaths(bundle.dag)[0]
        # single tree: key at depth 1, both gaps at depth 2
        assert multipath_loss(pi, lowered) == pytest.approx(0.5 + 2 * 0.25 + 2 * 0.25)

    def test_missing_sink_entry_names_the_vertex(self, two_choice_dag):
        losses = DpLosses(np.zeros(2), {"t1": 0.0})
        with pytest.raises(ValueError, match="t2"):
            lower_edge_losses(two_choice_dag, losses)

    def test_non_finite_rejected(self, single_path_dag):
        losses = DpLosses(np.array([np.inf, 0.0]), {"t": 0.0})
        with pytest.raises(ValueError, match="multiedge 0"):
            lower_edge_losses(single_path_dag, losses)

    def test_linearity_identity_on_fuzz(self):
        rng = np.random.default_rng(5)
        for dag in fuzz_dags(20, start_seed=500, safe=False, max_count=2000):
            losses = random_dp_losses(dag, rng)
            lowered = lower_edge_losses(dag, losses)
            sink_loss = {s: losses.sink_loss[dag.name_of(s)] for s in dag.sinks}
            for pi in enumerate_multipaths(dag):
                direct = float(
                    np.dot(pi.multiedge_counts(), losses.multiedge_loss)
                ) + sum(pi.inflow(s) * sink_loss[s] for s in dag.sinks)
                assert multipath_loss(pi, lowered) == pytest.approx(direct, abs=1e-12)


class TestSolver:
    def test_zero_losses_pick_first_multipath(self):
        for dag in fuzz_dags(10, start_seed=600, safe=False, max_count=2000):
            value, argmin = solve_min_sum(dag, DpLosses.zeros(dag))
            assert value == 0.0
            assert argmin == enumerate_multipaths(dag)[0]

    def test_matches_enumeration_exactly_on_fuzz(self):
        rng = np.random.default_rng(6)
        for dag in fuzz_dags(25, start_seed=700, safe=False, max_count=5000):
            losses = random_dp_losses(dag, rng)
            value, argmin = solve_min_sum(dag, losses)
            assert check_multipath(dag, argmin.counts) == []
            lowered = lower_edge_losses(dag, losses)
            best = min(multipath_loss(p, lowered) for p in enumerate_multipaths(dag))
            assert value == best
            assert multipath_loss(argmin, lowered) == value

    def test_tie_breaking_prefers_smaller_multiedge_id(self, two_choice_dag):
        _, argmin = solve_min_sum_edges(two_choice_dag, np.array([0.5, 0.5]))
        assert argmin.counts.tolist() == [1, 0]

    def test_edge_level_solver_agrees_with_lowered(self):
        rng = np.random.default_rng(7)
        bundle = build_bst(BstInstance(4))
        freq = rng.dirichlet(np.ones(9))
        losses = bundle.losses((freq[:4], freq[4:]))
        v1, a1 = solve_min_sum(bundle.dag, losses)
        v2, a2 = solve_min_sum_edges(bundle.dag, lower_edge_losses(bundle.dag, losses))
        assert v1 == v2 and a1 == a2
