"""Spike-and-slab Bayesian linear regression with Gaussian and Student-t
slabs, an R2-induced hyperprior, and a prior-sensitivity experiment harness."""

__version__ = "0.1.0"

from .model_core import (  # noqa: F401
    GAUSSIAN,
    STUDENT_T,
    ChainState,
    ConstantColumnError,
    Dataset,
    GaussianSlab,
    LaplaceSlab,
    SlabSpec,
    StudentTSlab,
    VbarX,
    compute_vbar,
    gamma2_from_r2_q,
    grid_midpoints,
    r2_from_gamma2_q,
    slab_moments,
    standardize,
)
from .marginal import (  # noqa: F401
    ActiveSet,
    MarginalWorkspace,
    NumericalDegeneracyError,
    log_bayes_factor,
    log_marginal,
    log_marginal_norm_const,
)
from .gibbs import (  # noqa: F401
    ChainSchedule,
    TraceStore,
    initial_state,
    run_chain,
    run_chains,
    update_beta_phi,
    update_lambda2,
    update_q_r2,
    update_sigma2,
    update_sigma2_collapsed,
    update_z,
)
from .geweke import GewekeReport, geweke_joint_test  # noqa: F401
from .baselines import (  # noqa: F401
    PenaltySpec,
    lasso_fit,
    lasso_kkt_violation,
    lasso_objective,
    ridge_fit,
)
from .experiments import (  # noqa: F401
    DEFAULT_NUS,
    GAUSSIAN_KEY,
    SimScenario,
    inject_random,
    nu_sweep,
    simulate_dataset,
)
from .reporting import (  # noqa: F401
    DensityGrid,
    HeatmapMatrix,
    PosteriorSummary,
    density_estimate,
    heatmap_matrix,
    summarize,
)
