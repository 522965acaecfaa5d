"""Offline min-sum solver over a KDag and the loss lowering onto edges."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, Mapping

import numpy as np

from .kdag import KDag, Multipath, multipath_loss

__all__ = ["DpLosses", "lower_edge_losses", "solve_min_sum", "solve_min_sum_edges"]


@dataclass(frozen=True)
class DpLosses:
    """Per-trial losses of the recursion: one real per multiedge and per sink."""

    multiedge_loss: np.ndarray  # float64, one entry per multiedge id
    sink_loss: Mapping[Hashable, float]  # keyed by sink vertex name

    def __add__(self, other: "DpLosses") -> "DpLosses":
        sinks = {v: self.sink_loss[v] + other.sink_loss[v] for v in self.sink_loss}
        return DpLosses(self.multiedge_loss + other.multiedge_loss, sinks)

    @staticmethod
    def zeros(dag: KDag) -> "DpLosses":
        return DpLosses(
            np.zeros(dag.n_multiedges),
            {dag.name_of(s): 0.0 for s in dag.sinks},
        )


def lower_edge_losses(dag: KDag, losses: DpLosses) -> np.ndarray:
    """Spread recursion losses onto edges.

    Every edge of a multiedge carries an equal share of the multiedge loss,
    plus the full sink loss when it ends at a sink.  For every multipath the
    resulting edge-loss dot product equals the recursion loss: the multiedge
    part because a multipath uses all k edges of a chosen multiedge with the
    same count, the sink part because the count entering a sink is the number
    of times its base case is consumed.
    """
    lm = np.asarray(losses.multiedge_loss, dtype=float)
    if lm.shape != (dag.n_multiedges,):
        raise ValueError(f"expected {dag.n_multiedges} multiedge losses, got {lm.shape}")
    if not np.all(np.isfinite(lm)):
        bad = int(np.flatnonzero(~np.isfinite(lm))[0])
        raise ValueError(f"non-finite loss for multiedge {bad}")
    sink_by_id = {}
    for s in dag.sinks:
        name = dag.name_of(s)
        if name not in losses.sink_loss:
            raise ValueError(f"missing sink loss for vertex {name!r}")
        val = float(losses.sink_loss[name])
        if not np.isfinite(val):
            raise ValueError(f"non-finite loss for sink {name!r}")
        sink_by_id[s] = val
    edge = np.repeat(lm / dag.k, dag.k)
    for e in range(dag.n_edges):
        dst = int(dag.edge_dst[e])
        if dst in sink_by_id:
            edge[e] += sink_by_id[dst]
    return edge


def solve_min_sum_edges(dag: KDag, edge_losses: np.ndarray) -> tuple[float, Multipath]:
    """Minimize the edge-loss dot product over all multipaths.

    Classic backward recursion: the optimum below a vertex is the best
    multiedge by (multiedge edge losses + optima of its targets); ties go to
    the smallest multiedge id, which is also the earliest declared.  The
    minimizing count vector is reconstructed by a forward walk pushing the
    whole inflow of each vertex through its chosen multiedge.  The reported
    value is recomputed from the count vector so it matches a direct
    evaluation of the same multipath bit for bit.
    """
    losses = np.asarray(edge_losses, dtype=float)
    if losses.shape != (dag.n_edges,):
        raise ValueError(f"expected {dag.n_edges} edge losses, got {losses.shape}")
    k = dag.k
    opt = np.zeros(dag.n_vertices)
    choice = np.full(dag.n_vertices, -1, dtype=np.int64)
    for v in reversed(dag.topo_order):
        v = int(v)
        if v in dag.sinks:
            continue
        best = np.inf
        best_m = -1
        for m in dag.vertex_multiedges[v]:
            total = 0.0
            for j in range(k):
                e = m * k + j
                total += losses[e] + opt[dag.edge_dst[e]]
            if total < best:
                best = total
                best_m = m
        opt[v] = best
        choice[v] = best_m

    counts = np.zeros(dag.n_edges, dtype=np.int64)
    inflow = np.zeros(dag.n_vertices, dtype=np.int64)
    inflow[dag.source] = 1
    for v in dag.topo_order:
        v = int(v)
        if v in dag.sinks or inflow[v] == 0:
            continue
        m = int(choice[v])
        counts[m * k : (m + 1) * k] = inflow[v]
        for j in range(k):
            inflow[dag.edge_dst[m * k + j]] += inflow[v]
    argmin = Multipath(dag, counts)
    return multipath_loss(argmin, losses), argmin


def solve_min_sum(dag: KDag, losses: DpLosses) -> tuple[float, Multipath]:
    """Offline optimum of the recursion losses; see solve_min_sum_edges."""
    return solve_min_sum_edges(dag, lower_edge_losses(dag, losses))
