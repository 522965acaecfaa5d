"""Mean-vector learner over the flow polytope of a KDag.

The state is a nonnegative vector with one entry per edge, kept inside the
polytope cut out by three constraint families: source outflow equals k,
equal weights inside every multiedge, and outflow equal to k times inflow at
internal vertices.  Each trial multiplies the weights by exp(-eta * loss)
and projects back under the unnormalized relative entropy by cycling
closed-form single-constraint projections.  Predictions are drawn by
greedily decomposing the mean vector into at most one multipath per
multiedge and sampling a part proportionally to its coefficient.
"""

from __future__ import annotations

import json
import math
import warnings
import weakref
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _flow_kernels as _fk
from .kdag import KDag, Multipath

__all__ = [
    "ProjectionConfig",
    "MeanVector",
    "Decomposition",
    "DecompositionError",
    "relative_entropy",
    "residual_families",
    "max_residual",
    "in_polytope",
    "project_constraint",
    "project_kflow",
    "init_mean_vector",
    "multiplicative_update",
    "decompose",
    "decompose_with_guard",
    "sample_mean_vector",
    "epsilon_budget",
    "ComponentHedge",
]

# residual at or below which a mean vector is treated as an exact polytope
# member by the sampler; looser results take the slack-padded path
EXACT_RESIDUAL = 1e-8

# greedy decomposition stops once the best source multiedge is this thin
_DECOMPOSE_STOP = 1e-14


class DecompositionError(RuntimeError):
    pass


@dataclass(frozen=True)
class ProjectionConfig:
    """Knobs for the iterative projection and the sampling slack budget."""

    tol: float = 1e-10
    max_cycles: int = 10_000
    epsilon: float = 0.0
    floor: float = 1e-300

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        if self.floor <= 0:
            raise ValueError("floor must be positive")


@dataclass(frozen=True)
class MeanVector:
    """Edge-weight vector plus the certificate of how well it sits in the polytope."""

    dag: KDag
    w: np.ndarray
    residual: float = 0.0
    converged: bool = True
    sweeps: int = 0
    skipped_steps: int = 0


@dataclass(frozen=True)
class Decomposition:
    """Convex combination of multipaths: coefficients, parts, and normalizer z."""

    coefficients: np.ndarray
    parts: tuple[Multipath, ...]
    z: float

    def mean_flow(self) -> np.ndarray:
        """Expected edge counts when sampling parts with probability c_i / z."""
        total = np.zeros(self.parts[0].dag.n_edges)
        for c, p in zip(self.coefficients, self.parts):
            total += c * p.counts
        return total / self.z


def relative_entropy(a: np.ndarray, b: np.ndarray) -> float:
    """Unnormalized relative entropy sum(a log(a/b) + b - a); inf if a>0 where b=0."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    pos = a > 0
    if np.any(b[pos] <= 0):
        return math.inf
    return float(np.sum(a[pos] * np.log(a[pos] / b[pos])) + b.sum() - a.sum())


# ---------------------------------------------------------------------------
# per-dag flattened index plan for the kernels

_plan_cache: "weakref.WeakKeyDictionary[KDag, _Plan]" = weakref.WeakKeyDictionary()


@dataclass(frozen=True)
class _Plan:
    src_out: np.ndarray
    lvl_ptr: np.ndarray
    in_ptr: np.ndarray
    in_ids: np.ndarray
    out_ptr: np.ndarray
    out_ids: np.ndarray
    vm_ptr: np.ndarray
    vm_ids: np.ndarray
    is_sink: np.ndarray
    internal_vertices: tuple[int, ...]


def _plan(dag: KDag) -> _Plan:
    cached = _plan_cache.get(dag)
    if cached is not None:
        return cached
    src_out = np.flatnonzero(dag.edge_src == dag.source).astype(np.int64)
    internal = [
        int(v) for v in dag.topo_order if int(v) != dag.source and int(v) not in dag.sinks
    ]
    internal.sort(key=lambda v: (dag.vertex_level[v], v))
    lvl_ptr = [0]
    in_ptr, in_ids, out_ptr, out_ids = [0], [], [0], []
    prev_level = None
    for v in internal:
        lv = int(dag.vertex_level[v])
        if prev_level is not None and lv != prev_level:
            lvl_ptr.append(len(in_ptr) - 1)
        prev_level = lv
        in_ids.extend(int(e) for e in dag.vertex_in_edges[v])
        in_ptr.append(len(in_ids))
        for m in dag.vertex_multiedges[v]:
            out_ids.extend(range(m * dag.k, (m + 1) * dag.k))
        out_ptr.append(len(out_ids))
    lvl_ptr.append(len(in_ptr) - 1)
    vm_ptr, vm_ids = [0], []
    for v in range(dag.n_vertices):
        vm_ids.extend(dag.vertex_multiedges[v])
        vm_ptr.append(len(vm_ids))
    is_sink = np.zeros(dag.n_vertices, dtype=np.bool_)
    for s in dag.sinks:
        is_sink[s] = True
    plan = _Plan(
        src_out=src_out,
        lvl_ptr=np.asarray(lvl_ptr, dtype=np.int64),
        in_ptr=np.asarray(in_ptr, dtype=np.int64),
        in_ids=np.asarray(in_ids, dtype=np.int64),
        out_ptr=np.asarray(out_ptr, dtype=np.int64),
        out_ids=np.asarray(out_ids, dtype=np.int64),
        vm_ptr=np.asarray(vm_ptr, dtype=np.int64),
        vm_ids=np.asarray(vm_ids, dtype=np.int64),
        is_sink=is_sink,
        internal_vertices=tuple(internal),
    )
    _plan_cache[dag] = plan
    return plan


# ---------------------------------------------------------------------------
# residuals and membership


def residual_families(dag: KDag, w: np.ndarray) -> tuple[float, float, float]:
    """(source |outflow-k|, worst multiedge spread / group mean, worst |outflow - k*inflow|)."""
    p = _plan(dag)
    w = np.ascontiguousarray(w, dtype=float)
    return _fk.residual_pass(
        w, dag.k, p.src_out, dag.n_multiedges, p.lvl_ptr, p.in_ptr, p.in_ids, p.out_ptr, p.out_ids
    )


def max_residual(dag: KDag, w: np.ndarray) -> float:
    return max(residual_families(dag, w))


def in_polytope(dag: KDag, w: np.ndarray, tol: float) -> bool:
    """Membership at absolute tolerance tol for all three constraint families."""
    w = np.asarray(w, dtype=float)
    if np.any(w < -tol):
        return False
    src = abs(w[_plan(dag).src_out].sum() - dag.k)
    groups = w.reshape(dag.n_multiedges, dag.k)
    spread = float((groups.max(axis=1) - groups.min(axis=1)).max()) if dag.n_multiedges else 0.0
    cons = 0.0
    for v in _plan(dag).internal_vertices:
        fin = float(w[dag.vertex_in_edges[v]].sum())
        fout = sum(
            float(w[m * dag.k : (m + 1) * dag.k].sum()) for m in dag.vertex_multiedges[v]
        )
        cons = max(cons, abs(fout - dag.k * fin))
    return src <= tol and spread <= tol and cons <= tol


# ---------------------------------------------------------------------------
# single-constraint projections (closed forms)


def project_constraint(dag: KDag, w: np.ndarray, target) -> np.ndarray:
    """Exact relative-entropy projection onto one constraint.

    ``target`` is ``"source"``, ``("multiedge", m)`` or ``("vertex", v)``.
    Source: scale the outgoing weights to sum to k.  Multiedge: set the k
    weights to their geometric mean.  Vertex: scale out-edges by
    (k*inflow/outflow)^(1/(k+1)) and in-edges by the compensating power so
    the new outflow is ((outflow^k) * k * inflow)^(1/(k+1)) and the new
    inflow is that value divided by k.
    """
    w = np.asarray(w, dtype=float).copy()
    k = dag.k
    if target == "source":
        ids = _plan(dag).src_out
        total = w[ids].sum()
        if total <= 0:
            raise ValueError("source outflow is zero; cannot normalize")
        w[ids] *= k / total
        return w
    kind, ident = target
    if kind == "multiedge":
        ids = slice(ident * k, (ident + 1) * k)
        vals = w[ids]
        if np.any(vals < 0):
            raise ValueError("multiedge weights must be nonnegative")
        w[ids] = float(np.prod(vals)) ** (1.0 / k)
        return w
    if kind == "vertex":
        v = ident
        if v == dag.source or v in dag.sinks:
            raise ValueError("vertex step applies to internal vertices only")
        in_ids = dag.vertex_in_edges[v]
        out_ids = np.asarray(
            [e for m in dag.vertex_multiedges[v] for e in dag.multiedge_edge_ids(m)],
            dtype=np.int64,
        )
        fin = float(w[in_ids].sum())
        fout = float(w[out_ids].sum())
        if fin <= 0.0 or fout <= 0.0:
            warnings.warn(
                f"skipping flow step at vertex {dag.name_of(v)!r}: dead region",
                RuntimeWarning,
                stacklevel=2,
            )
            return w
        beta = (k * fin / fout) ** (1.0 / (k + 1))
        w[out_ids] *= beta
        w[in_ids] *= beta ** (-k)
        return w
    raise ValueError(f"unknown constraint target {target!r}")


def sweep_reference(dag: KDag, w: np.ndarray) -> np.ndarray:
    """One full projection cycle composed from project_constraint steps.

    Slow path used to cross-check the batched kernel: source step, all
    multiedge steps in id order, all internal-vertex steps in topo order.
    """
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        w = project_constraint(dag, w, "source")
        for m in range(dag.n_multiedges):
            w = project_constraint(dag, w, ("multiedge", m))
        for v in _plan(dag).internal_vertices:
            w = project_constraint(dag, w, ("vertex", v))
    return w


# ---------------------------------------------------------------------------
# full projection


def project_kflow(dag: KDag, hat: np.ndarray, cfg: ProjectionConfig = ProjectionConfig()) -> MeanVector:
    """Project onto the flow polytope by cycling the three constraint steps.

    Runs full cycles (source, multiedges in id order, internal vertices in
    topological order) until the worst constraint violation drops below
    ``cfg.tol`` or ``cfg.max_cycles`` is exhausted; in the latter case the
    result is flagged unconverged and carries its final residual so the
    sampler can pad it with slack.
    """
    hat = np.asarray(hat, dtype=float)
    if hat.shape != (dag.n_edges,):
        raise ValueError(f"expected {dag.n_edges} edge weights, got {hat.shape}")
    if not np.all(np.isfinite(hat)):
        raise ValueError("edge weights must be finite")
    p = _plan(dag)
    w = np.clip(hat, cfg.floor, None)
    resid, cycles, skipped = _fk.project_cycles(
        w, dag.k, p.src_out, dag.n_multiedges,
        p.lvl_ptr, p.in_ptr, p.in_ids, p.out_ptr, p.out_ids,
        cfg.tol, cfg.max_cycles,
    )
    return MeanVector(
        dag=dag,
        w=w,
        residual=float(resid),
        converged=bool(resid < cfg.tol),
        sweeps=int(cycles),
        skipped_steps=int(skipped),
    )


def _tool_version() -> str:
    from . import __version__

    return __version__


def init_mean_vector(
    dag: KDag,
    cfg: ProjectionConfig = ProjectionConfig(),
    cache_dir: str | Path | None = None,
) -> MeanVector:
    """Starting point: project the flat vector 1/|V|^2 into the polytope.

    Starting from this particular exterior point keeps the divergence to any
    corner within 2*D*log|V| + D*log(D), which is what the learning-rate
    tuning assumes.  Because the result depends only on the graph, it can be
    cached on disk keyed by a content hash of the graph description.
    """
    cache_file = None
    if cache_dir is not None:
        cache_dir = Path(cache_dir)
        cache_dir.mkdir(parents=True, exist_ok=True)
        cache_file = cache_dir / f"init-{dag.content_hash()}.json"
        if cache_file.exists():
            payload = json.loads(cache_file.read_text())
            if (
                payload.get("tool_version") == _tool_version()
                and payload.get("dag_hash") == dag.content_hash()
                and payload.get("tol") == cfg.tol
            ):
                w = np.asarray(payload["weights"], dtype=float)
                return MeanVector(
                    dag=dag,
                    w=w,
                    residual=float(payload["residual"]),
                    converged=bool(payload["residual"] < cfg.tol),
                )
    hat = np.full(dag.n_edges, 1.0 / dag.n_vertices**2)
    out = project_kflow(dag, hat, cfg)
    if not out.converged:
        raise RuntimeError(
            f"initialization projection did not converge: residual {out.residual:.3e} "
            f"after {out.sweeps} cycles"
        )
    if cache_file is not None:
        cache_file.write_text(
            json.dumps(
                {
                    "dag_hash": dag.content_hash(),
                    "weights": out.w.tolist(),
                    "residual": out.residual,
                    "tol": cfg.tol,
                    "tool_version": _tool_version(),
                }
            )
        )
    return out


def multiplicative_update(w: MeanVector, edge_losses: np.ndarray, eta: float) -> np.ndarray:
    """Elementwise w_e * exp(-eta * loss_e); no projection performed."""
    if eta < 0:
        raise ValueError("learning rate must be nonnegative")
    losses = np.asarray(edge_losses, dtype=float)
    if losses.shape != (w.dag.n_edges,):
        raise ValueError(f"expected {w.dag.n_edges} edge losses, got {losses.shape}")
    return w.w * np.exp(-eta * losses)


# ---------------------------------------------------------------------------
# decomposition and sampling


def decompose(w: MeanVector, *, strict: bool = True) -> Decomposition:
    """Greedy corner decomposition of a polytope point.

    Repeatedly builds a multipath by routing, at every reached vertex, the
    whole inflow through the multiedge whose thinnest edge is fattest, then
    subtracts the largest feasible multiple and zeroes the binding
    multiedge.  Each round kills at least one multiedge, so there are at
    most one part per multiedge.  With ``strict`` a vertex holding inflow
    but no positive multiedge raises; the lenient mode (used for
    slack-padded vectors that sit slightly outside the polytope) stops
    gracefully instead.
    """
    dag = w.dag
    p = _plan(dag)
    r = np.ascontiguousarray(w.w, dtype=float).copy()
    coeffs = np.zeros(dag.n_multiedges)
    counts = np.zeros((dag.n_multiedges, dag.n_multiedges), dtype=np.int64)
    n_parts, stuck = _fk.decompose_loop(
        r, dag.k, dag.topo_order, p.is_sink, dag.source, dag.n_vertices, dag.n_multiedges,
        p.vm_ptr, p.vm_ids, dag.edge_dst, _DECOMPOSE_STOP, coeffs, counts,
    )
    if stuck >= 0 and strict:
        leftover = float(r[p.src_out].sum())
        if leftover > max(10 * w.residual * dag.n_edges, 1e-9):
            raise DecompositionError(
                f"stuck at vertex {dag.name_of(int(stuck))!r}: positive inflow but no "
                f"positive multiedge (source mass left: {leftover:.3e})"
            )
    if n_parts == 0:
        raise DecompositionError("no multipath could be extracted")
    parts = tuple(
        Multipath(dag, np.repeat(counts[i], dag.k)) for i in range(n_parts)
    )
    c = coeffs[:n_parts].copy()
    return Decomposition(coefficients=c, parts=parts, z=float(c.sum()))


def sample_mean_vector(
    w: MeanVector,
    cfg: ProjectionConfig,
    rng: np.random.Generator,
    decomposition: Decomposition | None = None,
) -> Multipath:
    """Draw a multipath whose expectation tracks the mean vector.

    Exact vectors are decomposed directly and a part is drawn with
    probability c_i / z.  A vector that is only approximately projected is
    first padded with a constant slack (the larger of the configured budget
    and its own residual) so the decomposition dominates the exact
    projection; the normalizer z then absorbs the padding.
    """
    if decomposition is None:
        decomposition = decompose_with_guard(w, cfg)
    probs = decomposition.coefficients / decomposition.z
    probs = np.clip(probs, 0.0, None)
    probs /= probs.sum()
    idx = rng.choice(len(decomposition.parts), p=probs)
    return decomposition.parts[idx]


def decompose_with_guard(w: MeanVector, cfg: ProjectionConfig) -> Decomposition:
    """Decomposition used for prediction, padding approximate vectors with slack."""
    if w.residual <= EXACT_RESIDUAL:
        return decompose(w)
    eps = max(cfg.epsilon, w.residual)
    padded = MeanVector(dag=w.dag, w=w.w + eps, residual=w.residual, converged=False)
    return decompose(padded, strict=False)


def epsilon_budget(dag: KDag, horizon: int, d_bound: float, tol: float) -> float:
    """Slack per trial that keeps the total extra loss under one unit.

    Sufficient condition evaluated with the crude bound (slack <= 1 inside
    the parenthesis): eps = 1 / (T * (1 + |E| + (2|V|/k) * (D + 2|E|))),
    additionally capped at tol * |E|.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    e = dag.n_edges
    v = dag.n_vertices
    denom = horizon * (1.0 + e + (2.0 * v / dag.k) * (d_bound + 2.0 * e))
    return min(tol * e, 1.0 / denom)


class ComponentHedge:
    """Trial-loop wrapper around update, projection, decomposition, sampling."""

    def __init__(
        self,
        dag: KDag,
        eta: float,
        cfg: ProjectionConfig = ProjectionConfig(),
        cache_dir: str | Path | None = None,
    ):
        self.dag = dag
        self.eta = float(eta)
        self.cfg = cfg
        self.mean = init_mean_vector(dag, cfg, cache_dir=cache_dir)
        self._decomposition: Decomposition | None = None

    def _current_decomposition(self) -> Decomposition:
        if self._decomposition is None:
            self._decomposition = decompose_with_guard(self.mean, self.cfg)
        return self._decomposition

    def predict(self, rng: np.random.Generator) -> Multipath:
        return sample_mean_vector(self.mean, self.cfg, rng, self._current_decomposition())

    def expected_flow(self) -> np.ndarray:
        return self._current_decomposition().mean_flow()

    def expected_loss(self, edge_losses: np.ndarray) -> float:
        return float(np.dot(self.expected_flow(), edge_losses))

    def update(self, edge_losses: np.ndarray) -> None:
        hat = multiplicative_update(self.mean, edge_losses, self.eta)
        self.mean = project_kflow(self.dag, hat, self.cfg)
        self._decomposition = None

    @property
    def last_residual(self) -> float:
        return self.mean.residual
