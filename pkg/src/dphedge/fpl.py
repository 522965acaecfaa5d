"""Follow-the-perturbed-leader baseline: perturb cumulative losses, re-solve."""

from __future__ import annotations

import numpy as np

from .dp import solve_min_sum_edges
from .kdag import KDag, Multipath

__all__ = ["FplState", "fpl_predict", "FollowPerturbedLeader"]


class FplState:
    """Running sum of revealed edge losses plus the perturbation scale."""

    def __init__(self, dag: KDag, perturbation_scale: float):
        if perturbation_scale < 0:
            raise ValueError("perturbation scale must be nonnegative")
        self.dag = dag
        self.perturbation_scale = float(perturbation_scale)
        self.cumulative_edge_losses = np.zeros(dag.n_edges)

    def add_losses(self, edge_losses: np.ndarray) -> None:
        losses = np.asarray(edge_losses, dtype=float)
        if losses.shape != (self.dag.n_edges,):
            raise ValueError(f"expected {self.dag.n_edges} edge losses, got {losses.shape}")
        self.cumulative_edge_losses += losses


def fpl_predict(state: FplState, dag: KDag, rng: np.random.Generator) -> Multipath:
    """Minimizer of cumulative losses plus fresh one-sided uniform noise per edge.

    Scale zero reduces to the plain offline solver on the running sums.
    """
    noise = rng.uniform(0.0, state.perturbation_scale, dag.n_edges) \
        if state.perturbation_scale > 0 else 0.0
    _, argmin = solve_min_sum_edges(dag, state.cumulative_edge_losses + noise)
    return argmin


class FollowPerturbedLeader:
    """Trial-loop wrapper matching the other learners."""

    def __init__(self, dag: KDag, perturbation_scale: float):
        self.dag = dag
        self.state = FplState(dag, perturbation_scale)

    def predict(self, rng: np.random.Generator) -> Multipath:
        return fpl_predict(self.state, self.dag, rng)

    def update(self, edge_losses: np.ndarray) -> None:
        self.state.add_losses(edge_losses)
