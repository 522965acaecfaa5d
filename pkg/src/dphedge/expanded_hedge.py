"""Multiplicative-weights learner over multipaths, kept in product form.

State is one weight per multiedge, locally normalized at every non-sink
vertex; the induced multipath distribution is the product of the weights of
the multiedges a multipath uses (to the power of their counts), which makes
ancestral sampling and multiplicative updates cheap.  After each update the
per-vertex normalization is restored by pushing normalization constants
backward through the graph without changing the multipath distribution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .kdag import KDag, Multipath, multipath_multiplicity

__all__ = [
    "MultiedgeWeights",
    "uniform_weights",
    "weight_push",
    "update_weights",
    "sample_multipath",
    "multipath_probability",
    "mean_edge_flow",
    "local_normalization_error",
    "ExpandedHedge",
]

# switch to all-log arithmetic once weights decay below this
_LOG_SPACE_FLOOR = 1e-280


@dataclass(frozen=True)
class MultiedgeWeights:
    """Locally normalized multiedge weights with a log-space shadow copy."""

    dag: KDag
    w: np.ndarray       # float64, one weight per multiedge, in [0, 1]
    log_w: np.ndarray   # log of w, kept exact when weights underflow

    @staticmethod
    def from_linear(dag: KDag, w: np.ndarray) -> "MultiedgeWeights":
        with np.errstate(divide="ignore"):
            return MultiedgeWeights(dag, w, np.log(w))

    @staticmethod
    def from_log(dag: KDag, log_w: np.ndarray) -> "MultiedgeWeights":
        return MultiedgeWeights(dag, np.exp(log_w), log_w)


def local_normalization_error(weights: MultiedgeWeights) -> float:
    """max over non-sink vertices of |sum of local weights - 1|."""
    dag = weights.dag
    worst = 0.0
    for v in range(dag.n_vertices):
        mes = dag.vertex_multiedges[v]
        if not mes:
            continue
        worst = max(worst, abs(sum(weights.w[m] for m in mes) - 1.0))
    return worst


def _push_linear(dag: KDag, hat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    z = np.ones(dag.n_vertices)
    for v in reversed(dag.topo_order):
        v = int(v)
        if v in dag.sinks:
            continue
        total = 0.0
        for m in dag.vertex_multiedges[v]:
            term = hat[m]
            for u in dag.multiedge_targets[m]:
                term *= z[u]
            total += term
        z[v] = total
    w = np.empty(dag.n_multiedges)
    for m in range(dag.n_multiedges):
        term = hat[m]
        for u in dag.multiedge_targets[m]:
            term *= z[u]
        w[m] = term / z[dag.multiedge_src[m]]
    return w, z


def _push_log(dag: KDag, log_hat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    log_z = np.zeros(dag.n_vertices)
    for v in reversed(dag.topo_order):
        v = int(v)
        if v in dag.sinks:
            continue
        terms = []
        for m in dag.vertex_multiedges[v]:
            t = log_hat[m]
            for u in dag.multiedge_targets[m]:
                t += log_z[u]
            terms.append(t)
        arr = np.asarray(terms)
        mx = arr.max()
        if not np.isfinite(mx):
            raise ValueError(
                f"all multiedge weights vanish at vertex {dag.name_of(v)!r}; "
                "distribution undefined"
            )
        log_z[v] = mx + math.log(np.exp(arr - mx).sum())
    log_w = np.empty(dag.n_multiedges)
    for m in range(dag.n_multiedges):
        t = log_hat[m]
        for u in dag.multiedge_targets[m]:
            t += log_z[u]
        log_w[m] = t - log_z[dag.multiedge_src[m]]
    return log_w, log_z


def weight_push(dag: KDag, hat: np.ndarray) -> tuple[MultiedgeWeights, dict[int, float]]:
    """Renormalize unnormalized multiedge weights without moving the distribution.

    Computes one constant per vertex (the total weight of everything below
    it; 1 at sinks) and divides it out of the local weights, so the output
    sums to one at every vertex while the product along any multipath only
    changes by the single global constant at the source.  Runs in O(edges).

    Returns the normalized weights and the per-vertex constants keyed by
    dense vertex id.
    """
    hat = np.asarray(hat, dtype=float)
    if hat.shape != (dag.n_multiedges,):
        raise ValueError(f"expected {dag.n_multiedges} weights, got {hat.shape}")
    if np.any(hat < 0) or not np.all(np.isfinite(hat)):
        raise ValueError("multiedge weights must be finite and nonnegative")
    for v in range(dag.n_vertices):
        mes = dag.vertex_multiedges[v]
        if mes and not any(hat[m] > 0 for m in mes):
            raise ValueError(
                f"all multiedge weights vanish at vertex {dag.name_of(v)!r}; "
                "distribution undefined"
            )
    with np.errstate(invalid="ignore", divide="ignore"):
        w, z = _push_linear(dag, hat)
    if np.all(np.isfinite(z)) and not np.any((w == 0) & (hat > 0)) and np.all(np.isfinite(w)):
        return MultiedgeWeights.from_linear(dag, w), {v: float(z[v]) for v in range(dag.n_vertices)}
    with np.errstate(divide="ignore"):
        log_w, log_z = _push_log(dag, np.log(hat))
    weights = MultiedgeWeights.from_log(dag, log_w)
    return weights, {v: float(np.exp(log_z[v])) for v in range(dag.n_vertices)}


def uniform_weights(dag: KDag) -> MultiedgeWeights:
    """Weights inducing the uniform distribution: all ones, then pushed."""
    weights, _ = weight_push(dag, np.ones(dag.n_multiedges))
    return weights


def update_weights(
    weights: MultiedgeWeights, edge_losses: np.ndarray, eta: float
) -> MultiedgeWeights:
    """One multiplicative step: scale by exp(-eta * local loss), then push.

    The local loss of a multiedge is the sum of the losses of its edges, so
    the induced multipath distribution is reweighted by exp(-eta * count
    vector dot edge losses), exactly the exponential-weights rule over the
    expanded set of multipaths.
    """
    if eta < 0:
        raise ValueError("learning rate must be nonnegative")
    dag = weights.dag
    losses = np.asarray(edge_losses, dtype=float)
    if losses.shape != (dag.n_edges,):
        raise ValueError(f"expected {dag.n_edges} edge losses, got {losses.shape}")
    if not np.all(np.isfinite(losses)):
        raise ValueError("edge losses must be finite")
    me_loss = losses.reshape(dag.n_multiedges, dag.k).sum(axis=1)
    log_hat = weights.log_w - eta * me_loss
    finite = np.isfinite(log_hat)
    if np.any(finite) and log_hat[finite].min() > math.log(_LOG_SPACE_FLOOR):
        hat = weights.w * np.exp(-eta * me_loss)
        new, _ = weight_push(dag, hat)
        return new
    log_w, _ = _push_log(dag, log_hat)
    return MultiedgeWeights.from_log(dag, log_w)


def sample_multipath(weights: MultiedgeWeights, rng: np.random.Generator) -> Multipath:
    """Ancestral sampling: one multiedge at the source, inflow-many below."""
    dag = weights.dag
    k = dag.k
    me_counts = np.zeros(dag.n_multiedges, dtype=np.int64)
    inflow = np.zeros(dag.n_vertices, dtype=np.int64)
    inflow[dag.source] = 1
    for v in dag.topo_order:
        v = int(v)
        if v in dag.sinks or inflow[v] == 0:
            continue
        mes = dag.vertex_multiedges[v]
        probs = np.clip(weights.w[list(mes)], 0.0, None)
        probs = probs / probs.sum()
        draws = rng.multinomial(int(inflow[v]), probs)
        for m, c in zip(mes, draws):
            if c == 0:
                continue
            me_counts[m] += c
            for u in dag.multiedge_targets[m]:
                inflow[u] += c
    return Multipath(dag, np.repeat(me_counts, k))


def multipath_probability(weights: MultiedgeWeights, pi: Multipath) -> float:
    """Probability the sampler produces this count vector.

    Product of multiedge weights raised to their counts, times the number of
    distinct generation orders of the vector (1 on graphs where no vertex is
    ever entered twice with more than one local choice).
    """
    dag = weights.dag
    me_counts = pi.multiedge_counts()
    used = me_counts > 0
    if np.any(weights.w[used] == 0):
        return 0.0
    log_p = float(np.dot(me_counts[used], weights.log_w[used]))
    return multipath_multiplicity(pi) * math.exp(log_p)


def mean_edge_flow(weights: MultiedgeWeights) -> np.ndarray:
    """Expected edge counts under the sampling distribution (forward pass)."""
    dag = weights.dag
    flow = np.zeros(dag.n_vertices)
    flow[dag.source] = 1.0
    me_flow = np.zeros(dag.n_multiedges)
    for v in dag.topo_order:
        v = int(v)
        if v in dag.sinks or flow[v] == 0.0:
            continue
        for m in dag.vertex_multiedges[v]:
            f = weights.w[m] * flow[v]
            me_flow[m] = f
            for u in dag.multiedge_targets[m]:
                flow[u] += f
    return np.repeat(me_flow, dag.k)


class ExpandedHedge:
    """Trial-loop wrapper: sample a multipath, then absorb the revealed losses."""

    def __init__(self, dag: KDag, eta: float):
        self.dag = dag
        self.eta = float(eta)
        self.weights = uniform_weights(dag)

    def predict(self, rng: np.random.Generator) -> Multipath:
        return sample_multipath(self.weights, rng)

    def update(self, edge_losses: np.ndarray) -> None:
        self.weights = update_weights(self.weights, edge_losses, self.eta)

    def expected_loss(self, edge_losses: np.ndarray) -> float:
        return float(np.dot(mean_edge_flow(self.weights), edge_losses))
