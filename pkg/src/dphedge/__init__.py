"""Online learning of combinatorial objects solvable by min-sum recursions.

Objects (search trees, parenthesizations, packings, cuttings, schedulings)
are encoded as integer flows in the decision DAG of their dynamic program.
Two learners with square-root regret guarantees run implicitly on that
graph: exponential weights in product form over multiedges, and a
mean-vector method over the flow polytope; a perturbed-leader baseline and
brute-force oracles round out the toolbox.
"""

from .component_hedge import (
    ComponentHedge,
    Decomposition,
    MeanVector,
    ProjectionConfig,
    decompose,
    epsilon_budget,
    init_mean_vector,
    multiplicative_update,
    project_constraint,
    project_kflow,
    relative_entropy,
    residual_families,
    sample_mean_vector,
)
from .dp import DpLosses, lower_edge_losses, solve_min_sum, solve_min_sum_edges
from .expanded_hedge import (
    ExpandedHedge,
    MultiedgeWeights,
    mean_edge_flow,
    multipath_probability,
    sample_multipath,
    uniform_weights,
    update_weights,
    weight_push,
)
from .fpl import FollowPerturbedLeader, FplState, fpl_predict
from .harness import (
    ExperimentConfig,
    HedgeOracle,
    Trace,
    TrialRecord,
    cell_seed,
    compute_regret,
    regret_bound,
    run_experiment,
    summarize,
    tune_eta,
    write_trace_csv,
)
from .kdag import (
    KDag,
    Multipath,
    ValidationReport,
    Violation,
    build_kdag,
    check_multipath,
    count_multipaths,
    enumerate_multipaths,
    log_count_multipaths,
    multipath_loss,
    multipath_multiplicity,
    validate_kdag,
)
from .problems import (
    BstInstance,
    KnapsackInstance,
    MatrixChainInstance,
    ProblemBundle,
    RodInstance,
    WisInstance,
    build_bst,
    build_knapsack,
    build_matrix_chain,
    build_rod,
    build_wis,
    equalize_path_lengths,
    gains_to_losses,
    make_problem,
)

__version__ = "0.1.0"
