"""Microcanonical and canonical ensembles of multilayer random graphs."""

__version__ = "0.1.0"

from .canonical import (  # noqa: E402
    CanonicalSolution,
    ConvergenceError,
    NonInteriorError,
    log_partition,
    log_prob,
    solve_bipartite,
    solve_bipartite_top_only,
    solve_link_count,
    solve_model,
    solve_unipartite,
    sparse_p_hat,
)
from .core import (  # noqa: E402
    ConstraintSet,
    DegreeConstraint,
    DegreeDistribution,
    LayerLimits,
    LinkCountConstraint,
    MasterGraph,
    ModelSpec,
    MultilayerGraph,
    degree_matrix,
    empirical_distribution,
    validate,
)
from .entropy import (  # noqa: E402
    EntropyReport,
    LimitClass,
    g,
    g_binomial,
    l1_g_norm,
    poissonisation_g,
    relative_entropy,
    relative_entropy_direct_kl,
    relative_entropy_exact,
    s_infinity,
    s_n_top_only,
)
from .graphical import erdos_gallai, gale_ryser, realize_bipartite, realize_model, realize_unipartite  # noqa: E402
from .microcanonical import (  # noqa: E402
    count_asymptotic_bipartite,
    count_asymptotic_unipartite,
    count_exact_bipartite,
    count_exact_unipartite,
    count_link_only,
    count_model,
    count_top_only,
)
