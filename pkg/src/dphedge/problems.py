"""Builders mapping the five benchmark problems onto decision DAGs.

Each builder returns a :class:`ProblemBundle`: the graph, an adapter turning
the per-trial parameters revealed by the adversary into recursion losses, a
sampler for those parameters, and the declared loss / path-size bounds used
for learning-rate tuning.  Max-gain problems (knapsack, rod cutting,
interval scheduling) are converted to min-loss form edge by edge as
loss = 1 - gain, after padding the graph so every source-sink path has the
same number of edges.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from typing import Any, Callable, Hashable

import numpy as np

from .dp import DpLosses
from .kdag import KDag

__all__ = [
    "BstInstance",
    "MatrixChainInstance",
    "KnapsackInstance",
    "RodInstance",
    "WisInstance",
    "ProblemBundle",
    "build_bst",
    "build_matrix_chain",
    "build_knapsack",
    "build_rod",
    "build_wis",
    "gains_to_losses",
    "equalize_path_lengths",
    "make_problem",
    "PROBLEM_NAMES",
]

PROBLEM_NAMES = ("bst", "matrix_chain", "knapsack", "rod", "wis")


@dataclass(frozen=True)
class BstInstance:
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("need at least one key")


@dataclass(frozen=True)
class MatrixChainInstance:
    n: int
    d_max: int

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("need at least two matrices")
        if self.d_max < 1:
            raise ValueError("dimension cap must be positive")


@dataclass(frozen=True)
class KnapsackInstance:
    n: int
    capacity: int
    heaviness: tuple[int, ...]

    def __post_init__(self):
        if len(self.heaviness) != self.n:
            raise ValueError("need one heaviness per item")
        if any(h < 1 or h > self.capacity for h in self.heaviness):
            raise ValueError("heaviness must lie in [1, capacity]")


@dataclass(frozen=True)
class RodInstance:
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("rod length must be positive")


@dataclass(frozen=True)
class WisInstance:
    intervals: tuple[tuple[float, float], ...]

    def __post_init__(self):
        ends = [e for _, e in self.intervals]
        if any(s >= e for s, e in self.intervals):
            raise ValueError("intervals must have start < end")
        if ends != sorted(ends):
            raise ValueError("intervals must be sorted by end")


@dataclass
class ProblemBundle:
    """Everything the experiment loop needs to drive one problem."""

    name: str
    dag: KDag
    losses: Callable[[Any], DpLosses]
    sample_params: Callable[[np.random.Generator], Any]
    params_from_json: Callable[[Any], Any]
    loss_bound: float  # the constant fed into tuning and regret envelopes
    path_bound: float  # upper bound on the 1-norm of any multipath
    loss_sup: float | None = None  # provable per-trial maximum, if it exceeds loss_bound
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.loss_sup is None:
            self.loss_sup = self.loss_bound


# ---------------------------------------------------------------------------
# binary search trees (k = 2)


def build_bst(inst: BstInstance) -> ProblemBundle:
    """Subproblems (i, j): best tree over keys i..j with gaps i-1..j.

    Source (1, n); base cases (i, i-1) carry the gap weight q_{i-1}.  The
    multiedges at (i, j) are ordered by root r = i..j, the r-th one targeting
    (i, r-1) and (r+1, j) and charging the total frequency mass of the
    subproblem.  A multipath's loss telescopes to the depth-weighted average
    search cost of its tree, root at depth 1.
    """
    n = inst.n
    vertices = [(i, j) for i in range(1, n + 2) for j in range(i - 1, n + 1)]
    sinks = [(i, i - 1) for i in range(1, n + 2)]
    multiedges = []
    spans = []  # (i, j) of each multiedge, for the loss adapter
    for i in range(1, n + 2):
        for j in range(i, n + 1):
            for r in range(i, j + 1):
                multiedges.append(((i, j), [(i, r - 1), (r + 1, j)]))
                spans.append((i, j))
    dag = KDag(2, vertices, (1, n), sinks, multiedges)

    def losses(params) -> DpLosses:
        p, q = params
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        if p.shape != (n,) or q.shape != (n + 1,):
            raise ValueError(f"expected {n} key and {n + 1} gap frequencies")
        total = p.sum() + q.sum()
        if abs(total - 1.0) > 1e-6:
            raise ValueError(f"frequencies must sum to 1, got {total!r}")
        if abs(total - 1.0) > 1e-9:
            p = p / total
            q = q / total
        cp = np.concatenate(([0.0], np.cumsum(p)))  # cp[j] = sum p_1..p_j
        cq = np.concatenate(([0.0], np.cumsum(q)))  # cq[j] = sum q_0..q_{j-1}
        lm = np.array(
            [cp[j] - cp[i - 1] + cq[j + 1] - cq[i - 1] for i, j in spans]
        )
        lt = {(i, i - 1): float(q[i - 1]) for i in range(1, n + 2)}
        return DpLosses(lm, lt)

    def sample_params(rng: np.random.Generator):
        freq = rng.dirichlet(np.ones(2 * n + 1))
        return freq[:n], freq[n:]

    def params_from_json(obj):
        return np.asarray(obj["p"], dtype=float), np.asarray(obj["q"], dtype=float)

    return ProblemBundle(
        name="bst",
        dag=dag,
        losses=losses,
        sample_params=sample_params,
        params_from_json=params_from_json,
        loss_bound=float(n),
        path_bound=float(2 * n),
        # a gap can sit at depth n+1, so extreme frequency draws can push a
        # trial loss slightly past the tuning constant n
        loss_sup=float(n + 1),
    )


# ---------------------------------------------------------------------------
# matrix chain multiplication (k = 2)


def build_matrix_chain(inst: MatrixChainInstance) -> ProblemBundle:
    """Subproblems (i, j): best parenthesization of the partial product i..j.

    Multiedges at (i, j) are ordered by split point s = i..j-1, targeting
    (i, s) and (s+1, j) and charging d_{i-1} * d_s * d_j scalar
    multiplications; base cases (i, i) are free.
    """
    n = inst.n
    vertices = [(i, j) for i in range(1, n + 1) for j in range(i, n + 1)]
    sinks = [(i, i) for i in range(1, n + 1)]
    multiedges = []
    splits = []  # (i, s, j) per multiedge
    for i in range(1, n + 1):
        for j in range(i + 1, n + 1):
            for s in range(i, j):
                multiedges.append(((i, j), [(i, s), (s + 1, j)]))
                splits.append((i, s, j))
    dag = KDag(2, vertices, (1, n), sinks, multiedges)

    def losses(dims) -> DpLosses:
        d = np.asarray(dims, dtype=float)
        if d.shape != (n + 1,):
            raise ValueError(f"expected {n + 1} dimensions")
        if np.any(d < 1) or np.any(d > inst.d_max):
            raise ValueError(f"dimensions must lie in [1, {inst.d_max}]")
        lm = np.array([d[i - 1] * d[s] * d[j] for i, s, j in splits])
        lt = {(i, i): 0.0 for i in range(1, n + 1)}
        return DpLosses(lm, lt)

    def sample_params(rng: np.random.Generator):
        return rng.integers(1, inst.d_max + 1, size=n + 1).astype(float)

    def params_from_json(obj):
        return np.asarray(obj["d"], dtype=float)

    return ProblemBundle(
        name="matrix_chain",
        dag=dag,
        losses=losses,
        sample_params=sample_params,
        params_from_json=params_from_json,
        loss_bound=float((n - 1) * inst.d_max**3),
        path_bound=float(2 * (n - 1)),
    )


# ---------------------------------------------------------------------------
# gain-to-loss machinery shared by the k = 1 problems


def _path_length_range(dag: KDag) -> tuple[int, int]:
    lo = np.zeros(dag.n_vertices, dtype=np.int64)
    hi = np.zeros(dag.n_vertices, dtype=np.int64)
    for v in reversed(dag.topo_order):
        v = int(v)
        if v in dag.sinks:
            continue
        best_lo, best_hi = None, None
        for m in dag.vertex_multiedges[v]:
            u = dag.multiedge_targets[m][0]
            best_lo = lo[u] + 1 if best_lo is None else min(best_lo, lo[u] + 1)
            best_hi = hi[u] + 1 if best_hi is None else max(best_hi, hi[u] + 1)
        lo[v], hi[v] = best_lo, best_hi
    return int(lo[dag.source]), int(hi[dag.source])


def _extreme_path(dag: KDag, longest: bool) -> list[Hashable]:
    length = np.zeros(dag.n_vertices, dtype=np.int64)
    nxt = np.full(dag.n_vertices, -1, dtype=np.int64)
    for v in reversed(dag.topo_order):
        v = int(v)
        if v in dag.sinks:
            continue
        for m in dag.vertex_multiedges[v]:
            u = dag.multiedge_targets[m][0]
            cand = length[u] + 1
            if nxt[v] < 0 or (cand > length[v] if longest else cand < length[v]):
                length[v] = cand
                nxt[v] = u
    path = [dag.name_of(dag.source)]
    v = dag.source
    while nxt[v] >= 0:
        v = int(nxt[v])
        path.append(dag.name_of(v))
    return path


def gains_to_losses(dag: KDag, gains: np.ndarray) -> np.ndarray:
    """Edge losses 1 - gain, valid only when all paths have equal length.

    On an equal-length graph, for every path: loss = length - gain, so
    maximizing total gain and minimizing total loss pick the same path.
    """
    gains = np.asarray(gains, dtype=float)
    if gains.shape != (dag.n_edges,):
        raise ValueError(f"expected {dag.n_edges} edge gains, got {gains.shape}")
    if np.any(gains < 0) or np.any(gains > 1):
        raise ValueError("edge gains must lie in [0, 1]")
    lo, hi = _path_length_range(dag)
    if lo != hi:
        raise ValueError(
            "paths have unequal lengths, e.g. "
            f"{_extreme_path(dag, longest=False)} ({lo} edges) vs "
            f"{_extreme_path(dag, longest=True)} ({hi} edges); equalize first"
        )
    return 1.0 - gains


def equalize_path_lengths(dag: KDag) -> KDag:
    """Pad a k=1 graph with zero-gain chains so all paths share one length."""
    new_dag, _ = _equalize_with_labels(dag, list(range(dag.n_multiedges)))
    return new_dag


def _equalize_with_labels(
    dag: KDag, me_labels: list[int]
) -> tuple[KDag, list[int]]:
    """Layered copy of a k=1 graph with per-depth vertices and padding chains.

    Vertex (v, d) stands for reaching v after d edges; original sinks hit
    before the longest path length continue through a chain of padding
    vertices carrying label -1 (gain zero).  Multiedges of a layered vertex
    keep the declaration order of the original vertex, so labels transfer by
    rank.  Returns the new graph and one label per new multiedge.
    """
    if dag.k != 1:
        raise ValueError("path-length equalization requires branching factor 1")
    lo, hi = _path_length_range(dag)
    if lo == hi:
        return dag, list(me_labels)
    depth_of: dict[int, set[int]] = {dag.source: {0}}
    for v in dag.topo_order:
        v = int(v)
        for m in dag.vertex_multiedges[v]:
            u = dag.multiedge_targets[m][0]
            depth_of.setdefault(u, set()).update(d + 1 for d in depth_of[v])

    def layered(v: int, d: int) -> tuple:
        return (dag.name_of(v), d)

    def pad(v: int, d: int) -> tuple:
        return ("pad", dag.name_of(v), d)

    vertices: list[tuple] = []
    multiedges: list[tuple] = []
    labels: list[int] = []
    sinks: list[tuple] = []
    pad_needed: dict[int, int] = {}  # original sink -> earliest pad depth
    for v in dag.topo_order:
        v = int(v)
        for d in sorted(depth_of[v]):
            name = layered(v, d)
            vertices.append(name)
            if v in dag.sinks:
                if d == hi:
                    sinks.append(name)
                else:
                    multiedges.append((name, [pad(v, d + 1)]))
                    labels.append(-1)
                    pad_needed[v] = min(pad_needed.get(v, hi), d + 1)
            else:
                for m in dag.vertex_multiedges[v]:
                    u = dag.multiedge_targets[m][0]
                    multiedges.append((name, [layered(u, d + 1)]))
                    labels.append(me_labels[m])
    for v, first in pad_needed.items():
        for d in range(first, hi + 1):
            vertices.append(pad(v, d))
            if d == hi:
                sinks.append(pad(v, d))
            else:
                multiedges.append((pad(v, d), [pad(v, d + 1)]))
                labels.append(-1)
    new_dag = KDag(1, vertices, layered(dag.source, 0), sinks, multiedges)
    # KDag keeps declaration order for multiedges, so labels line up by index
    return new_dag, labels


def _gain_adapter(
    dag: KDag, labels: list[int], n_params: int
) -> Callable[[np.ndarray], DpLosses]:
    label_arr = np.asarray(labels, dtype=np.int64)
    sink_names = [dag.name_of(s) for s in dag.sinks]

    def losses(profits) -> DpLosses:
        p = np.asarray(profits, dtype=float)
        if p.shape != (n_params,):
            raise ValueError(f"expected {n_params} profits")
        if np.any(p < 0) or np.any(p > 1):
            raise ValueError("profits must lie in [0, 1]")
        gains = np.where(label_arr >= 0, p[np.clip(label_arr, 0, None)], 0.0)
        return DpLosses(1.0 - gains, {s: 0.0 for s in sink_names})

    return losses


def _uniform_sampler(n: int):
    def sample_params(rng: np.random.Generator):
        return rng.uniform(0.0, 1.0, size=n)

    return sample_params


def _profit_json(obj):
    return np.asarray(obj["p"], dtype=float)


# ---------------------------------------------------------------------------
# knapsack (k = 1)


def build_knapsack(inst: KnapsackInstance) -> ProblemBundle:
    """States (i, c): items 1..i still undecided, capacity c left... walked
    top-down from (n, C).  Each state offers skip (to (i-1, c), gain 0) and,
    when the item fits, take (to (i-1, c - h_i), gain p_i); multiedge order
    is [skip, take].  Paths are exactly the feasible packings and all have n
    edges, so no padding is needed.  States unreachable from (n, C) are
    dropped; their number is recorded under meta["pruned_states"].
    """
    n, cap, h = inst.n, inst.capacity, inst.heaviness
    reachable: set[tuple[int, int]] = {(n, cap)}
    frontier = [(n, cap)]
    while frontier:
        i, c = frontier.pop()
        if i == 0:
            continue
        nxt = [(i - 1, c)]
        if c >= h[i - 1]:
            nxt.append((i - 1, c - h[i - 1]))
        for state in nxt:
            if state not in reachable:
                reachable.add(state)
                frontier.append(state)
    vertices = sorted(reachable, key=lambda vc: (-vc[0], -vc[1]))
    sinks = [vc for vc in vertices if vc[0] == 0]
    multiedges: list[tuple] = []
    labels: list[int] = []
    for i, c in vertices:
        if i == 0:
            continue
        multiedges.append(((i, c), [(i - 1, c)]))
        labels.append(-1)
        if c >= h[i - 1]:
            multiedges.append(((i, c), [(i - 1, c - h[i - 1])]))
            labels.append(i - 1)
    dag = KDag(1, vertices, (n, cap), sinks, multiedges)
    return ProblemBundle(
        name="knapsack",
        dag=dag,
        losses=_gain_adapter(dag, labels, n),
        sample_params=_uniform_sampler(n),
        params_from_json=_profit_json,
        loss_bound=float(n),
        path_bound=float(n),
        meta={"pruned_states": (n + 1) * (cap + 1) - len(vertices)},
    )


# ---------------------------------------------------------------------------
# rod cutting (k = 1)


def build_rod(inst: RodInstance) -> ProblemBundle:
    """States i = remaining rod length; cutting off a piece of length l moves
    i -> i - l with gain p_l.  Multiedges at i are ordered by piece length
    1..i.  Path lengths vary with the number of pieces, so the graph is
    padded to the uniform length n before the gain-to-loss flip.
    """
    n = inst.n
    vertices = list(range(n, -1, -1))
    multiedges: list[tuple] = []
    labels: list[int] = []
    for i in range(n, 0, -1):
        for piece in range(1, i + 1):
            multiedges.append((i, [i - piece]))
            labels.append(piece - 1)
    raw = KDag(1, vertices, n, [0], multiedges)
    dag, labels = _equalize_with_labels(raw, labels)
    return ProblemBundle(
        name="rod",
        dag=dag,
        losses=_gain_adapter(dag, labels, n),
        sample_params=_uniform_sampler(n),
        params_from_json=_profit_json,
        loss_bound=float(n),
        path_bound=float(n),
        meta={"raw_dag": raw},
    )


# ---------------------------------------------------------------------------
# weighted interval scheduling (k = 1)


def _predecessors(intervals: tuple[tuple[float, float], ...]) -> list[int]:
    ends = [e for _, e in intervals]
    pred = []
    for i, (start, _) in enumerate(intervals, start=1):
        # rightmost earlier interval ending at or before this start
        pred.append(bisect.bisect_right(ends, start, 0, i - 1))
    return pred


def build_wis(inst: WisInstance) -> ProblemBundle:
    """States i = first i intervals decided, walked from n down to 0.

    Multiedge order at i is [skip -> i-1 (gain 0), take -> pred(i) (gain
    p_i)], where pred(i) is the rightmost interval disjoint from i.  Take
    edges can jump, so the graph is padded to uniform length n before the
    gain-to-loss flip.
    """
    n = len(inst.intervals)
    if n < 1:
        raise ValueError("need at least one interval")
    pred = _predecessors(inst.intervals)
    vertices = list(range(n, -1, -1))
    multiedges: list[tuple] = []
    labels: list[int] = []
    for i in range(n, 0, -1):
        multiedges.append((i, [i - 1]))
        labels.append(-1)
        multiedges.append((i, [pred[i - 1]]))
        labels.append(i - 1)
    raw = KDag(1, vertices, n, [0], multiedges)
    dag, labels = _equalize_with_labels(raw, labels)
    return ProblemBundle(
        name="wis",
        dag=dag,
        losses=_gain_adapter(dag, labels, n),
        sample_params=_uniform_sampler(n),
        params_from_json=_profit_json,
        loss_bound=float(n),
        path_bound=float(n),
        meta={"raw_dag": raw, "pred": pred},
    )


# ---------------------------------------------------------------------------
# registry


def make_problem(config: dict) -> ProblemBundle:
    """Build a bundle from a JSON-style {"problem": ..., "params": {...}} config."""
    name = config.get("problem")
    params = config.get("params") or {}
    if name == "bst":
        return build_bst(BstInstance(n=int(params["n"])))
    if name == "matrix_chain":
        return build_matrix_chain(
            MatrixChainInstance(n=int(params["n"]), d_max=int(params["d_max"]))
        )
    if name == "knapsack":
        h = tuple(int(x) for x in params["h"])
        return build_knapsack(
            KnapsackInstance(n=len(h), capacity=int(params["C"]), heaviness=h)
        )
    if name == "rod":
        return build_rod(RodInstance(n=int(params["n"])))
    if name == "wis":
        ivals = tuple((float(s), float(e)) for s, e in params["intervals"])
        return build_wis(WisInstance(intervals=ivals))
    raise ValueError(f"unknown problem {name!r}; expected one of {PROBLEM_NAMES}")
