"""Partialled-out (Frisch-Waugh-Lovell) regression with certified covariance estimates."""

from ._kernels import BACKEND
from .covariance import (
    ClusterMap,
    CovarianceEstimate,
    DofMode,
    Estimator,
    HacSpec,
    Scope,
    cov_classical,
    cov_cluster,
    cov_hac,
    cov_hc,
    full_covariance,
    partial_cov,
)
from .errors import *  # noqa: F401,F403
from .linalg import GramInverseBlocks, cholesky, cholesky_solve, partitioned_gram_inverse
from .regression import (
    Intercept,
    PartialFit,
    PartitionedDesign,
    RegressionFit,
    detrend_linear,
    full_fit,
    fwl_fit,
    hat_diagonal,
    leverages,
    ols_fit,
    residualize,
    saturated,
)
from .verify import (
    EquivalenceReport,
    check_block_relation,
    check_cov_equivalence,
    check_lovell_identities,
    check_projection_decomposition,
    check_yule_identity,
    cramer_oracle_fit,
    run_suite,
)

__version__ = "0.1.0"
