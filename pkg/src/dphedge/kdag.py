"""Branching-DAG representation for dynamic-programming decision graphs.

A :class:`KDag` is a DAG with a single source, a set of sinks, and the
outgoing edges of every non-sink vertex partitioned into groups of exactly
``k`` edges ("multiedges").  A "multipath" is a nonnegative integer count
vector over edges with source outflow ``k``, equal counts inside every
multiedge, and outflow equal to ``k`` times inflow at internal vertices.
Each multipath encodes one solution of the underlying recursion.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Any, Hashable, Iterator, Sequence

import numpy as np

__all__ = [
    "KDag",
    "Multipath",
    "ValidationReport",
    "Violation",
    "GraphValidationError",
    "EnumerationCapError",
    "validate_kdag",
    "build_kdag",
    "enumerate_multipaths",
    "count_multipaths",
    "log_count_multipaths",
    "multipath_loss",
    "multipath_multiplicity",
    "check_multipath",
]

DEFAULT_ENUMERATION_CAP = 10**6


class GraphValidationError(ValueError):
    """Raised when a graph description violates the structural rules."""

    def __init__(self, report: "ValidationReport"):
        self.report = report
        lines = "; ".join(f"[{v.rule}] {v.subject}: {v.message}" for v in report.violations)
        super().__init__(f"invalid graph: {lines}")


class EnumerationCapError(RuntimeError):
    """Raised when enumeration would produce more multipaths than the cap."""

    def __init__(self, cap: int):
        self.count_lower_bound = cap
        super().__init__(f"more than {cap} multipaths; enumeration refused")


@dataclass(frozen=True)
class Violation:
    rule: str
    subject: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    violations: tuple[Violation, ...]

    def __bool__(self) -> bool:
        return self.ok


class KDag:
    """Immutable decision DAG with dense vertex/edge/multiedge ids.

    Vertices keep their declared names (any hashable); internally everything
    is indexed by dense integers assigned in declaration order.  Edge ids are
    grouped by multiedge: edge ``m * k + j`` is the ``j``-th edge of
    multiedge ``m``, so per-multiedge views are contiguous slices.
    """

    def __init__(
        self,
        k: int,
        vertex_names: Sequence[Hashable],
        source: Hashable,
        sinks: Sequence[Hashable],
        multiedges: Sequence[tuple[Hashable, Sequence[Hashable]]],
    ):
        report = validate_kdag(
            {"k": k, "vertices": list(vertex_names), "source": source,
             "sinks": list(sinks), "multiedges": [{"from": f, "targets": list(t)} for f, t in multiedges]}
        )
        if not report.ok:
            raise GraphValidationError(report)

        self.k = int(k)
        self.vertex_names: tuple[Hashable, ...] = tuple(vertex_names)
        self.vertex_index: dict[Hashable, int] = {v: i for i, v in enumerate(self.vertex_names)}
        self.source: int = self.vertex_index[source]
        self.sinks: frozenset[int] = frozenset(self.vertex_index[s] for s in sinks)
        self.n_vertices = len(self.vertex_names)
        self.n_multiedges = len(multiedges)
        self.n_edges = self.n_multiedges * self.k

        self.multiedge_src = np.empty(self.n_multiedges, dtype=np.int64)
        self.multiedge_targets: tuple[tuple[int, ...], ...] = tuple(
            tuple(self.vertex_index[t] for t in targets) for _, targets in multiedges
        )
        self.vertex_multiedges: tuple[tuple[int, ...], ...]
        per_vertex: list[list[int]] = [[] for _ in range(self.n_vertices)]
        for m, (frm, _) in enumerate(multiedges):
            v = self.vertex_index[frm]
            self.multiedge_src[m] = v
            per_vertex[v].append(m)
        self.vertex_multiedges = tuple(tuple(ms) for ms in per_vertex)

        self.edge_src = np.repeat(self.multiedge_src, self.k)
        self.edge_dst = np.empty(self.n_edges, dtype=np.int64)
        for m, targets in enumerate(self.multiedge_targets):
            for j, u in enumerate(targets):
                self.edge_dst[m * self.k + j] = u
        self.edge_multiedge = np.repeat(np.arange(self.n_multiedges, dtype=np.int64), self.k)

        in_edges: list[list[int]] = [[] for _ in range(self.n_vertices)]
        for e in range(self.n_edges):
            in_edges[self.edge_dst[e]].append(e)
        self.vertex_in_edges: tuple[np.ndarray, ...] = tuple(
            np.asarray(ie, dtype=np.int64) for ie in in_edges
        )

        self.topo_order: np.ndarray = self._topo_sort()
        # longest-distance level from the source; edges always go level-up,
        # so vertices inside one level never share an edge
        level = np.zeros(self.n_vertices, dtype=np.int64)
        for v in self.topo_order:
            for m in self.vertex_multiedges[v]:
                for u in self.multiedge_targets[m]:
                    level[u] = max(level[u], level[v] + 1)
        self.vertex_level = level

    def _topo_sort(self) -> np.ndarray:
        import heapq

        indeg = np.zeros(self.n_vertices, dtype=np.int64)
        for u in self.edge_dst:
            indeg[u] += 1
        heap = [self.source]
        order = []
        while heap:
            v = heapq.heappop(heap)
            order.append(v)
            for m in self.vertex_multiedges[v]:
                for u in self.multiedge_targets[m]:
                    indeg[u] -= 1
                    if indeg[u] == 0:
                        heapq.heappush(heap, u)
        return np.asarray(order, dtype=np.int64)

    def multiedge_edge_ids(self, m: int) -> range:
        return range(m * self.k, (m + 1) * self.k)

    def name_of(self, v: int) -> Hashable:
        return self.vertex_names[v]

    def to_dict(self) -> dict[str, Any]:
        """JSON-ready description with the canonical field names."""
        name = _json_name
        return {
            "k": self.k,
            "vertices": [name(v) for v in self.vertex_names],
            "source": name(self.vertex_names[self.source]),
            "sinks": [name(self.vertex_names[s]) for s in sorted(self.sinks)],
            "multiedges": [
                {
                    "from": name(self.vertex_names[self.multiedge_src[m]]),
                    "targets": [name(self.vertex_names[u]) for u in self.multiedge_targets[m]],
                }
                for m in range(self.n_multiedges)
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def content_hash(self) -> str:
        return hashlib.blake2b(self.to_json().encode(), digest_size=16).hexdigest()

    def __repr__(self) -> str:
        return (
            f"KDag(k={self.k}, vertices={self.n_vertices}, "
            f"multiedges={self.n_multiedges}, sinks={len(self.sinks)})"
        )


def _json_name(v: Hashable) -> Any:
    if isinstance(v, (str, int)):
        return v
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    return repr(v)


@dataclass(frozen=True)
class Multipath:
    """Edge count vector; counts agree inside every multiedge."""

    dag: KDag
    counts: np.ndarray  # int64, one entry per edge

    def multiedge_counts(self) -> np.ndarray:
        return self.counts[:: self.dag.k] if self.dag.k > 0 else self.counts

    def inflow(self, v: int) -> int:
        return int(self.counts[self.dag.vertex_in_edges[v]].sum())

    def digest(self) -> str:
        return hashlib.blake2b(self.counts.tobytes(), digest_size=8).hexdigest()

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Multipath) and np.array_equal(self.counts, other.counts)

    def __hash__(self) -> int:
        return hash(self.counts.tobytes())


# ---------------------------------------------------------------------------
# validation


def validate_kdag(raw: dict[str, Any]) -> ValidationReport:
    """Check a raw graph description against the structural rules.

    Never raises; every defect is reported as a violation.  When the report
    is ok the same description can be materialized with :func:`build_kdag`.
    """
    out: list[Violation] = []

    def bad(rule: str, subject: Any, message: str) -> None:
        out.append(Violation(rule, str(subject), message))

    k = raw.get("k")
    if not isinstance(k, int) or k < 1:
        bad("k_positive", "k", f"branching factor must be a positive integer, got {k!r}")
        return ValidationReport(False, tuple(out))

    vertices = raw.get("vertices") or []
    names = list(vertices)
    if len(set(names)) != len(names):
        bad("duplicate_vertex", "vertices", "duplicate vertex ids in declaration")
    known = set(names)

    source = raw.get("source")
    if source not in known:
        bad("unknown_source", source, "source is not a declared vertex")
    sinks = list(raw.get("sinks") or [])
    if not sinks:
        bad("empty_sinks", "sinks", "sink set must be nonempty")
    for s in sinks:
        if s not in known:
            bad("unknown_sink", s, "sink is not a declared vertex")
    sink_set = set(sinks)
    if source in sink_set:
        bad("source_is_sink", source, "source cannot be a sink")

    multiedges = raw.get("multiedges") or []
    out_count: dict[Hashable, int] = {v: 0 for v in names}
    in_count: dict[Hashable, int] = {v: 0 for v in names}
    adj: dict[Hashable, list[Hashable]] = {v: [] for v in names}
    for i, me in enumerate(multiedges):
        frm = me.get("from")
        targets = list(me.get("targets") or [])
        if frm not in known:
            bad("unknown_vertex", frm, f"multiedge {i} leaves an undeclared vertex")
            continue
        if len(targets) != k:
            bad(
                "multiedge_size",
                frm,
                f"multiedge partition impossible: multiedge {i} has {len(targets)} edges, need exactly {k}",
            )
        if frm in sink_set:
            bad("sink_outgoing", frm, f"sink has outgoing multiedge {i}")
        ok_targets = True
        for t in targets:
            if t not in known:
                bad("unknown_vertex", t, f"multiedge {i} targets an undeclared vertex")
                ok_targets = False
        if not ok_targets:
            continue
        out_count[frm] = out_count.get(frm, 0) + len(targets)
        for t in targets:
            in_count[t] = in_count.get(t, 0) + 1
            adj[frm].append(t)

    if source in known and in_count.get(source, 0) > 0:
        bad("source_incoming", source, "source has incoming edges")
    for v in names:
        if v not in sink_set and out_count.get(v, 0) == 0:
            bad("missing_multiedge", v, "non-sink vertex has no multiedge")

    # cycle check over the multiedge adjacency
    state: dict[Hashable, int] = {}

    def has_cycle(v: Hashable) -> bool:
        stack = [(v, iter(adj.get(v, ())))]
        state[v] = 1
        while stack:
            node, it = stack[-1]
            advanced = False
            for u in it:
                st = state.get(u, 0)
                if st == 1:
                    return True
                if st == 0:
                    state[u] = 1
                    stack.append((u, iter(adj.get(u, ()))))
                    advanced = True
                    break
            if not advanced:
                state[node] = 2
                stack.pop()
        return False

    cyclic = False
    for v in names:
        if state.get(v, 0) == 0 and has_cycle(v):
            bad("cycle", v, "graph contains a directed cycle")
            cyclic = True
            break

    if not cyclic and source in known:
        reach = {source}
        frontier = [source]
        while frontier:
            v = frontier.pop()
            for u in adj.get(v, ()):
                if u not in reach:
                    reach.add(u)
                    frontier.append(u)
        for v in names:
            if v not in reach:
                bad("unreachable", v, "vertex not reachable from the source")
        # co-reachability: every vertex must reach some sink
        co = set(sink_set)
        changed = True
        while changed:
            changed = False
            for v in names:
                if v in co:
                    continue
                if any(u in co for u in adj.get(v, ())):
                    co.add(v)
                    changed = True
        for v in names:
            if v not in co:
                bad("dead_end", v, "vertex cannot reach any sink")

    return ValidationReport(not out, tuple(out))


def build_kdag(raw: dict[str, Any]) -> KDag:
    """Materialize a validated description; raises GraphValidationError."""
    return KDag(
        k=raw["k"],
        vertex_names=list(raw["vertices"]),
        source=raw["source"],
        sinks=list(raw["sinks"]),
        multiedges=[(me["from"], list(me["targets"])) for me in raw["multiedges"]],
    )


# ---------------------------------------------------------------------------
# enumeration / counting


def _compositions(total: int, parts: int) -> Iterator[tuple[int, ...]]:
    # first part takes as much as possible first: the very first composition
    # routes everything through the lowest multiedge id
    if parts == 1:
        yield (total,)
        return
    for head in range(total, -1, -1):
        for tail in _compositions(total - head, parts - 1):
            yield (head,) + tail


def enumerate_multipaths(dag: KDag, cap: int = DEFAULT_ENUMERATION_CAP) -> list[Multipath]:
    """All distinct multipath count vectors, in a fixed deterministic order.

    Vertices are processed in topological order; at each vertex the inflow is
    split over the local multiedges in lexicographically decreasing
    composition order.  Raises :class:`EnumerationCapError` past ``cap``.
    """
    k = dag.k
    counts = np.zeros(dag.n_edges, dtype=np.int64)
    results: list[Multipath] = []
    topo = dag.topo_order

    def rec(pos: int) -> None:
        if pos == len(topo):
            results.append(Multipath(dag, counts.copy()))
            if len(results) > cap:
                raise EnumerationCapError(cap)
            return
        v = topo[pos]
        if v in dag.sinks:
            rec(pos + 1)
            return
        flow = 1 if v == dag.source else int(counts[dag.vertex_in_edges[v]].sum())
        if flow == 0:
            rec(pos + 1)
            return
        mes = dag.vertex_multiedges[v]
        for comp in _compositions(flow, len(mes)):
            for m, c in zip(mes, comp):
                counts[m * k : (m + 1) * k] = c
            rec(pos + 1)
        for m in mes:
            counts[m * k : (m + 1) * k] = 0

    rec(0)
    return results


def count_multipaths(dag: KDag) -> int:
    """Number of multipaths via the backward per-vertex normalization recursion.

    Exact integer arithmetic; linear in the number of edges.  At vertices a
    multipath can enter more than once through multiple choices the recursion
    counts generation orders, which coincides with the number of distinct
    count vectors on graphs where every multipath determines its generation
    uniquely (true for all built-in problem graphs).
    """
    z: dict[int, int] = {}
    for v in reversed(dag.topo_order):
        v = int(v)
        if v in dag.sinks:
            z[v] = 1
            continue
        total = 0
        for m in dag.vertex_multiedges[v]:
            term = 1
            for u in dag.multiedge_targets[m]:
                term *= z[u]
            total += term
        z[v] = total
    return z[dag.source]


def log_count_multipaths(dag: KDag) -> float:
    """Natural log of :func:`count_multipaths`, safe for huge graphs."""
    logz = np.zeros(dag.n_vertices)
    for v in reversed(dag.topo_order):
        v = int(v)
        if v in dag.sinks:
            continue
        terms = []
        for m in dag.vertex_multiedges[v]:
            t = 0.0
            for u in dag.multiedge_targets[m]:
                t += logz[u]
            terms.append(t)
        arr = np.asarray(terms)
        mx = arr.max()
        logz[v] = mx + math.log(np.exp(arr - mx).sum())
    return float(logz[dag.source])


def multipath_loss(pi: Multipath, edge_losses: np.ndarray) -> float:
    """Count vector dotted with per-edge losses, summed exactly.

    Exact summation makes the value independent of edge order, so two
    multipaths hitting the same multiset of per-edge losses (permuted rod
    cuttings, say) evaluate bit-for-bit equal.
    """
    losses = np.asarray(edge_losses, dtype=float)
    if losses.shape != (pi.dag.n_edges,):
        raise ValueError(f"expected {pi.dag.n_edges} edge losses, got {losses.shape}")
    return math.fsum(pi.counts * losses)


def multipath_multiplicity(pi: Multipath) -> int:
    """Number of distinct generation orders of the count vector.

    Product over non-sink vertices of the multinomial coefficient of the
    local multiedge counts; equals 1 whenever no vertex is entered twice
    with more than one local choice.
    """
    dag = pi.dag
    total = 1
    for v in range(dag.n_vertices):
        if v in dag.sinks:
            continue
        flow = 1 if v == dag.source else pi.inflow(v)
        if flow <= 1:
            continue
        coeff = math.factorial(flow)
        for m in dag.vertex_multiedges[v]:
            coeff //= math.factorial(int(pi.counts[m * dag.k]))
        total *= coeff
    return total


def check_multipath(dag: KDag, counts: np.ndarray) -> list[str]:
    """Re-verify the multipath rules for a raw count vector; [] when valid."""
    problems: list[str] = []
    counts = np.asarray(counts)
    if counts.shape != (dag.n_edges,):
        return [f"expected {dag.n_edges} counts, got shape {counts.shape}"]
    if np.any(counts < 0):
        problems.append("negative counts")
    for m in range(dag.n_multiedges):
        grp = counts[m * dag.k : (m + 1) * dag.k]
        if np.any(grp != grp[0]):
            problems.append(f"unequal counts inside multiedge {m}")
    out_src = int(counts[dag.edge_src == dag.source].sum())
    if out_src != dag.k:
        problems.append(f"source outflow {out_src} != k={dag.k}")
    for v in range(dag.n_vertices):
        if v == dag.source or v in dag.sinks:
            continue
        inflow = int(counts[dag.vertex_in_edges[v]].sum())
        outflow = int(counts[dag.edge_src == v].sum())
        if outflow != dag.k * inflow:
            problems.append(
                f"vertex {dag.name_of(v)}: outflow {outflow} != k*inflow {dag.k * inflow}"
            )
    return problems
