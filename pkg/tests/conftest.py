"""Shared fixtures: canned graphs and the random graph generator."""

from __future__ import annotations

import numpy as np
import pytest

from dphedge.kdag import KDag, build_kdag, count_multipaths


def random_kdag_raw(
    seed: int,
    k: int | None = None,
    max_vertices: int = 30,
    safe: bool = True,
    p_sink: float = 0.35,
    max_branch: int = 3,
    max_depth: int = 6,
) -> dict:
    """Random valid graph description, grown by recursive expansion.

    In safe mode a vertex may be entered more than once only when every
    choice below it is forced (single-multiedge chains down to sinks), which
    guarantees each multipath has exactly one generation order, so the
    counting recursion agrees with enumeration and product-form weights are
    honest probabilities.  Unsafe mode reuses any finished vertex and may
    create multipaths with several generation orders.
    """
    rng = np.random.default_rng(seed)
    if k is None:
        k = int(rng.integers(1, 4))
    names: list[int] = []
    sinks: list[int] = []
    multiedges: list[dict] = []
    finished: list[int] = []  # reusable targets (cone-only in safe mode)

    def new_vertex() -> int:
        names.append(len(names))
        return names[-1]

    def expand(v: int, depth: int) -> bool:
        if depth >= max_depth or len(names) >= max_vertices or (
            depth > 0 and rng.random() < p_sink
        ):
            sinks.append(v)
            finished.append(v)
            return True
        n_me = int(rng.integers(1, max_branch + 1))
        all_cone = True
        for _ in range(n_me):
            targets = []
            for _ in range(k):
                fresh = len(names) < max_vertices and (
                    not finished or rng.random() >= 0.35
                )
                if fresh:
                    u = new_vertex()
                    all_cone &= expand(u, depth + 1)
                    targets.append(u)
                else:
                    targets.append(finished[int(rng.integers(len(finished)))])
            multiedges.append({"from": v, "targets": targets})
        cone = n_me == 1 and all_cone
        if cone or not safe:
            finished.append(v)
        return cone

    source = new_vertex()
    expand(source, 0)
    return {
        "k": k,
        "vertices": names,
        "source": source,
        "sinks": sinks,
        "multiedges": multiedges,
    }


def fuzz_dags(
    n: int,
    *,
    start_seed: int = 0,
    safe: bool = True,
    max_count: int = 10_000,
    **kwargs,
) -> list[KDag]:
    """Deterministic list of n random graphs with at most max_count multipaths."""
    out: list[KDag] = []
    seed = start_seed
    while len(out) < n:
        dag = build_kdag(random_kdag_raw(seed, safe=safe, **kwargs))
        seed += 1
        if count_multipaths(dag) <= max_count:
            out.append(dag)
    return out


@pytest.fixture
def single_path_dag() -> KDag:
    """s -> a -> t with one 1-multiedge per vertex: exactly one multipath."""
    return build_kdag(
        {
            "k": 1,
            "vertices": ["s", "a", "t"],
            "source": "s",
            "sinks": ["t"],
            "multiedges": [{"from": "s", "targets": ["a"]}, {"from": "a", "targets": ["t"]}],
        }
    )


@pytest.fixture
def single_edge_dag() -> KDag:
    return build_kdag(
        {
            "k": 1,
            "vertices": ["s", "t"],
            "source": "s",
            "sinks": ["t"],
            "multiedges": [{"from": "s", "targets": ["t"]}],
        }
    )


@pytest.fixture
def two_choice_dag() -> KDag:
    """Source with two 1-multiedges to two sinks: two one-edge paths."""
    return build_kdag(
        {
            "k": 1,
            "vertices": ["s", "t1", "t2"],
            "source": "s",
            "sinks": ["t1", "t2"],
            "multiedges": [{"from": "s", "targets": ["t1"]}, {"from": "s", "targets": ["t2"]}],
        }
    )


@pytest.fixture
def two_disjoint_paths_dag() -> KDag:
    """Two edge-disjoint length-2 paths: s->a->t1 and s->b->t2."""
    return build_kdag(
        {
            "k": 1,
            "vertices": ["s", "a", "b", "t1", "t2"],
            "source": "s",
            "sinks": ["t1", "t2"],
            "multiedges": [
                {"from": "s", "targets": ["a"]},
                {"from": "s", "targets": ["b"]},
                {"from": "a", "targets": ["t1"]},
                {"from": "b", "targets": ["t2"]},
            ],
        }
    )


@pytest.fixture
def parallel_chain_dag() -> KDag:
    """s -> a -> t with two parallel 1-multiedges at s and at a: four paths."""
    return build_kdag(
        {
            "k": 1,
            "vertices": ["s", "a", "t"],
            "source": "s",
            "sinks": ["t"],
            "multiedges": [
                {"from": "s", "targets": ["a"]},
                {"from": "s", "targets": ["a"]},
                {"from": "a", "targets": ["t"]},
                {"from": "a", "targets": ["t"]},
            ],
        }
    )


@pytest.fixture
def layered_2dag() -> KDag:
    """Three-layer branching-2 graph: the source and both first-layer
    vertices offer two 2-multiedges, second-layer vertices one each; counts
    on the last layer reach 2."""
    return build_kdag(layered_2dag_raw())


def layered_2dag_raw() -> dict:
    return {
        "k": 2,
        "vertices": ["s", "a", "b", "c", "d", "t1", "t2"],
        "source": "s",
        "sinks": ["t1", "t2"],
        "multiedges": [
            {"from": "s", "targets": ["a", "b"]},
            {"from": "s", "targets": ["a", "b"]},
            {"from": "a", "targets": ["c", "d"]},
            {"from": "a", "targets": ["c", "d"]},
            {"from": "b", "targets": ["c", "d"]},
            {"from": "b", "targets": ["c", "d"]},
            {"from": "c", "targets": ["t1", "t2"]},
            {"from": "d", "targets": ["t1", "t2"]},
        ],
    }


def six_interval_instance() -> tuple[tuple[float, float], ...]:
    """Six intervals whose predecessor structure exercises skips and jumps:
    pred = [0, 0, 1, 0, 3, 3]; the set {1, 3, 5} is pairwise disjoint."""
    return ((0.0, 4.0), (3.0, 5.0), (4.0, 7.0), (3.5, 8.0), (7.0, 9.0), (7.5, 10.0))
