"""Experiment orchestration: adversaries, learning-rate tuning, the trial loop.

A run is fully determined by its configuration and seed.  The master seed is
split into one stream for the adversary and one for the learner, so the loss
sequence depends only on (problem, adversary, seed) and a longer run of the
same configuration replays the same prefix.  Multi-run sweeps derive one
seed per (algorithm x repetition) cell as ``seed ^ cell_index``.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterator

import numpy as np

from .component_hedge import ComponentHedge, ProjectionConfig, epsilon_budget
from .dp import DpLosses, lower_edge_losses, solve_min_sum
from .expanded_hedge import ExpandedHedge
from .fpl import FollowPerturbedLeader
from .kdag import (
    KDag,
    Multipath,
    count_multipaths,
    enumerate_multipaths,
    log_count_multipaths,
    multipath_loss,
)
from .problems import ProblemBundle, make_problem

__all__ = [
    "ExperimentConfig",
    "TrialRecord",
    "Trace",
    "HedgeOracle",
    "ProjectionBudgetError",
    "tune_eta",
    "cell_seed",
    "adversary_stream",
    "run_experiment",
    "compute_regret",
    "regret_bound",
    "write_trace_csv",
    "summarize",
    "TRACE_COLUMNS",
]

ALGORITHMS = ("eh", "ch", "fpl", "hedge_oracle")
ADVERSARIES = ("iid_dirichlet", "fixed_sequence_file", "piecewise_shift")
HEDGE_ORACLE_MAX_OBJECTS = 10_000
TRACE_COLUMNS = ("t", "loss", "cum_loss", "eta", "residual", "sample_hash", "ms")


@dataclass(frozen=True)
class ExperimentConfig:
    problem: dict
    algorithm: str
    horizon: int
    seed: int
    eta: float | str = "auto"
    adversary: str | dict = "iid_dirichlet"
    loss_bound: float | None = None
    path_bound: float | None = None
    projection: ProjectionConfig | None = None
    fpl_scale: float | None = None
    fpl_on_multiedge_losses: bool = False

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        kind = self.adversary if isinstance(self.adversary, str) else self.adversary.get("kind")
        if kind not in ADVERSARIES:
            raise ValueError(f"unknown adversary {kind!r}")
        if isinstance(self.eta, str) and self.eta != "auto":
            raise ValueError("eta must be a positive number or 'auto'")
        if not isinstance(self.eta, str) and self.eta <= 0:
            raise ValueError("eta must be a positive number or 'auto'")

    @staticmethod
    def from_dict(obj: dict) -> "ExperimentConfig":
        proj = obj.get("projection")
        horizon = obj.get("T", obj.get("horizon"))
        if horizon is None:
            raise ValueError("config needs a horizon field 'T'")
        return ExperimentConfig(
            problem=obj["problem"],
            algorithm=obj["algorithm"],
            horizon=int(horizon),
            seed=int(obj["seed"]),
            eta=obj.get("eta", "auto"),
            adversary=obj.get("adversary", "iid_dirichlet"),
            loss_bound=obj.get("B"),
            path_bound=obj.get("D"),
            projection=ProjectionConfig(**proj) if proj else None,
            fpl_scale=obj.get("fpl_scale"),
            fpl_on_multiedge_losses=bool(obj.get("fpl_on_multiedge_losses", False)),
        )

    def to_dict(self) -> dict:
        out: dict[str, Any] = {
            "problem": self.problem,
            "algorithm": self.algorithm,
            "T": self.horizon,
            "seed": self.seed,
            "eta": self.eta,
            "adversary": self.adversary,
        }
        if self.loss_bound is not None:
            out["B"] = self.loss_bound
        if self.path_bound is not None:
            out["D"] = self.path_bound
        if self.projection is not None:
            out["projection"] = {
                "tol": self.projection.tol,
                "max_cycles": self.projection.max_cycles,
                "epsilon": self.projection.epsilon,
            }
        if self.fpl_scale is not None:
            out["fpl_scale"] = self.fpl_scale
        if self.fpl_on_multiedge_losses:
            out["fpl_on_multiedge_losses"] = True
        return out


@dataclass(frozen=True)
class TrialRecord:
    t: int
    loss: float
    cum_loss: float
    eta: float
    residual: float
    sample_hash: str
    ms: float


@dataclass
class Trace:
    config: ExperimentConfig
    records: list[TrialRecord]
    cum_loss: float
    l_star: float
    best: Multipath
    regret: float
    eta: float
    meta: dict = field(default_factory=dict)


def cell_seed(seed: int, cell_index: int) -> int:
    """Seed for an independent (algorithm x repetition) cell: seed XOR index."""
    return int(seed) ^ int(cell_index)


def tune_eta(
    algorithm: str,
    horizon: int,
    dag: KDag,
    loss_bound: float,
    path_bound: float,
) -> float:
    """Learning rate reproducing the square-root regret guarantees.

    Exponential weights over objects: (1/B) * sqrt(2 ln N / T) with N the
    number of multipaths.  Mean-vector flavor: sqrt(2 * delta0 / (T * B))
    where delta0 = 2 D ln|V| + D ln D bounds the divergence from the
    initialization to any comparator.
    """
    if horizon < 1 or loss_bound <= 0 or path_bound <= 0:
        raise ValueError("horizon and bounds must be positive")
    if algorithm in ("eh", "hedge_oracle"):
        log_n = log_count_multipaths(dag)
        if log_n <= 0:
            raise ValueError("learning rate undefined: fewer than two multipaths")
        return math.sqrt(2.0 * log_n / horizon) / loss_bound
    if algorithm == "ch":
        d = path_bound
        delta0 = 2.0 * d * math.log(dag.n_vertices) + d * math.log(d)
        if delta0 <= 0:
            raise ValueError("learning rate undefined: degenerate divergence bound")
        return math.sqrt(2.0 * delta0 / (horizon * loss_bound))
    raise ValueError(f"no learning rate to tune for algorithm {algorithm!r}")


def regret_bound(
    algorithm: str, horizon: int, dag: KDag, loss_bound: float, path_bound: float
) -> float | None:
    """Worst-case envelope for the tuned algorithm; None when no bound is claimed."""
    if algorithm in ("eh", "hedge_oracle"):
        log_n = log_count_multipaths(dag)
        return loss_bound * math.sqrt(2.0 * horizon * log_n) + loss_bound * log_n
    if algorithm == "ch":
        # unit-count multipaths (true for all built-in problems)
        log_v = math.log(dag.n_vertices)
        return path_bound * math.sqrt(4.0 * horizon * log_v) + 2.0 * path_bound * log_v
    return None


# ---------------------------------------------------------------------------
# adversaries


def adversary_stream(
    cfg: ExperimentConfig, bundle: ProblemBundle, rng: np.random.Generator
) -> Iterator[Any]:
    """Per-trial problem parameters; deterministic given the adversary rng."""
    kind = cfg.adversary if isinstance(cfg.adversary, str) else cfg.adversary["kind"]
    if kind == "iid_dirichlet":
        for _ in range(cfg.horizon):
            yield bundle.sample_params(rng)
    elif kind == "piecewise_shift":
        segment = max(1, cfg.horizon // 5)
        current = None
        for t in range(cfg.horizon):
            if t % segment == 0:
                current = bundle.sample_params(rng)
            yield current
    elif kind == "fixed_sequence_file":
        path = cfg.adversary["path"] if isinstance(cfg.adversary, dict) else None
        if not path:
            raise ValueError("fixed_sequence_file adversary needs a 'path'")
        payload = json.loads(Path(path).read_text())
        trials = payload["trials"]
        if len(trials) < cfg.horizon:
            raise ValueError(
                f"loss file holds {len(trials)} trials, need {cfg.horizon}"
            )
        for t in range(cfg.horizon):
            yield bundle.params_from_json(trials[t])
    else:  # pragma: no cover - rejected in __post_init__
        raise ValueError(f"unknown adversary {kind!r}")


def adversary_rng(cfg: ExperimentConfig) -> np.random.Generator:
    adv_seq, _ = np.random.SeedSequence(cfg.seed).spawn(2)
    return np.random.default_rng(adv_seq)


def algorithm_rng(cfg: ExperimentConfig) -> np.random.Generator:
    _, algo_seq = np.random.SeedSequence(cfg.seed).spawn(2)
    return np.random.default_rng(algo_seq)


# ---------------------------------------------------------------------------
# explicit exponential weights over the enumerated objects


class HedgeOracle:
    """Reference learner holding one weight per enumerated multipath.

    Only viable on small graphs; used to certify that the implicit learner
    induces the same per-trial distribution.
    """

    def __init__(self, dag: KDag, eta: float, max_objects: int = HEDGE_ORACLE_MAX_OBJECTS):
        n = count_multipaths(dag)
        if n > max_objects:
            raise ValueError(f"{n} objects exceed the explicit-weights cap {max_objects}")
        self.dag = dag
        self.eta = float(eta)
        self.paths = enumerate_multipaths(dag, cap=max_objects)
        self.count_matrix = np.stack([p.counts for p in self.paths]).astype(float)
        self.cumulative = np.zeros(dag.n_edges)

    def probabilities(self) -> np.ndarray:
        logw = -self.eta * (self.count_matrix @ self.cumulative)
        logw -= logw.max()
        w = np.exp(logw)
        return w / w.sum()

    def predict(self, rng: np.random.Generator) -> Multipath:
        idx = rng.choice(len(self.paths), p=self.probabilities())
        return self.paths[idx]

    def update(self, edge_losses: np.ndarray) -> None:
        self.cumulative = self.cumulative + np.asarray(edge_losses, dtype=float)

    def expected_loss(self, edge_losses: np.ndarray) -> float:
        per_path = self.count_matrix @ np.asarray(edge_losses, dtype=float)
        return float(self.probabilities() @ per_path)


# ---------------------------------------------------------------------------
# the trial loop


def _build_learner(cfg: ExperimentConfig, bundle: ProblemBundle, eta: float):
    dag = bundle.dag
    if cfg.algorithm == "eh":
        return ExpandedHedge(dag, eta)
    if cfg.algorithm == "hedge_oracle":
        return HedgeOracle(dag, eta)
    if cfg.algorithm == "ch":
        proj = cfg.projection or ProjectionConfig()
        if proj.epsilon == 0.0:
            d_bound = cfg.path_bound or bundle.path_bound
            proj = ProjectionConfig(
                tol=proj.tol,
                max_cycles=proj.max_cycles,
                epsilon=epsilon_budget(dag, cfg.horizon, d_bound, proj.tol),
                floor=proj.floor,
            )
        return ComponentHedge(dag, eta, proj)
    if cfg.algorithm == "fpl":
        if bundle.name == "matrix_chain" and not cfg.fpl_on_multiedge_losses:
            raise ValueError(
                "the perturbed-leader baseline is disabled for matrix chains: the "
                "revealed dimensions are not a linear loss; pass "
                "fpl_on_multiedge_losses=True to run it on the derived edge losses"
            )
        d_bound = cfg.path_bound or bundle.path_bound
        scale = cfg.fpl_scale
        if scale is None:
            scale = math.sqrt(cfg.horizon * d_bound / dag.n_edges)
        return FollowPerturbedLeader(dag, scale)
    raise ValueError(f"unknown algorithm {cfg.algorithm!r}")


class ProjectionBudgetError(RuntimeError):
    def __init__(self, trial: int, residual: float, budget: float):
        self.trial = trial
        super().__init__(
            f"trial {trial}: projection residual {residual:.3e} exceeds the "
            f"slack budget {budget:.3e}"
        )


def run_experiment(cfg: ExperimentConfig) -> Trace:
    """Play the full protocol: sample, reveal, score, update, account regret."""
    bundle = make_problem(cfg.problem)
    dag = bundle.dag
    loss_bound = cfg.loss_bound if cfg.loss_bound is not None else bundle.loss_bound
    path_bound = cfg.path_bound if cfg.path_bound is not None else bundle.path_bound
    if loss_bound <= 0 or path_bound <= 0:
        raise ValueError("loss and path bounds must be positive")
    if cfg.loss_bound is not None and cfg.loss_bound < bundle.loss_bound:
        raise ValueError(
            f"declared loss bound {cfg.loss_bound} is below the problem's {bundle.loss_bound}"
        )
    if cfg.path_bound is not None and cfg.path_bound < bundle.path_bound:
        raise ValueError(
            f"declared path bound {cfg.path_bound} is below the problem's {bundle.path_bound}"
        )
    if cfg.algorithm in ("eh", "ch", "hedge_oracle"):
        eta = (
            tune_eta(cfg.algorithm, cfg.horizon, dag, loss_bound, path_bound)
            if isinstance(cfg.eta, str)
            else float(cfg.eta)
        )
    else:
        eta = 0.0 if isinstance(cfg.eta, str) else float(cfg.eta)

    learner = _build_learner(cfg, bundle, eta)
    adv_rng = adversary_rng(cfg)
    algo_rng = algorithm_rng(cfg)
    records: list[TrialRecord] = []
    total = DpLosses.zeros(dag)
    cum = 0.0
    for t, params in enumerate(adversary_stream(cfg, bundle, adv_rng)):
        t0 = time.perf_counter()
        prediction = learner.predict(algo_rng)
        dp_losses = bundle.losses(params)
        edge_losses = lower_edge_losses(dag, dp_losses)
        loss = multipath_loss(prediction, edge_losses)
        learner.update(edge_losses)
        residual = 0.0
        if isinstance(learner, ComponentHedge):
            residual = learner.last_residual
            if not learner.mean.converged and residual > learner.cfg.epsilon:
                raise ProjectionBudgetError(t, residual, learner.cfg.epsilon)
        total = total + dp_losses
        cum += loss
        records.append(
            TrialRecord(
                t=t,
                loss=loss,
                cum_loss=cum,
                eta=eta,
                residual=residual,
                sample_hash=prediction.digest(),
                ms=(time.perf_counter() - t0) * 1e3,
            )
        )
    l_star, best = solve_min_sum(dag, total)
    trace = Trace(
        config=cfg,
        records=records,
        cum_loss=cum,
        l_star=l_star,
        best=best,
        regret=cum - l_star,
        eta=eta,
        meta={
            "loss_bound": loss_bound,
            "loss_sup": max(loss_bound, bundle.loss_sup),
            "path_bound": path_bound,
            "bound": regret_bound(cfg.algorithm, cfg.horizon, dag, loss_bound, path_bound),
        },
    )
    return trace


def compute_regret(trace: Trace) -> float:
    """Total recorded loss minus the loss of the best object in hindsight."""
    return float(sum(r.loss for r in trace.records) - trace.l_star)


def write_trace_csv(trace: Trace, path: str | Path) -> None:
    lines = [",".join(TRACE_COLUMNS)]
    for r in trace.records:
        lines.append(
            f"{r.t},{r.loss!r},{r.cum_loss!r},{r.eta!r},{r.residual!r},{r.sample_hash},{r.ms:.3f}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def summarize(trace: Trace) -> dict:
    bound = trace.meta.get("bound")
    return {
        "config": trace.config.to_dict(),
        "L_star": trace.l_star,
        "cum_loss": trace.cum_loss,
        "regret": trace.regret,
        "bound": bound,
        "within_bound": (trace.regret <= bound) if bound is not None else None,
    }
