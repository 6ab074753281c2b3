"""Numerical laboratory for mollification commutators of transport noise.

The package verifies, on a discrete periodic torus, that the smoothing
errors generated by divergence-form gradient noise vanish as the kernel
width shrinks: the first-order commutator, the double commutator with
its eight-term decomposition and closed-form limits, and the
entropy-weighted combination that controls renormalisation.  A path
simulator for the underlying stochastic equation and a config-driven
experiment harness round out the artifact.
"""

from .errors import (
    CflError,
    ConfigError,
    CostGuardError,
    GridMismatchError,
    KernelWidthError,
    MollabError,
    PreconditionError,
)
from .fields import (
    Exponents,
    GridSpec,
    ScalarField,
    SigmaField,
    VectorFieldM,
    derivative,
    exponents,
    gen_sigma,
    gen_u,
    lq_norm,
    make_grid,
    sobolev_norm,
)
from .mollifier import (
    MollifierKernel,
    build_kernel,
    delta_ladder,
    direct_convolution,
    mollify,
    second_moment_matrix,
    weighted_moment_first,
)
from .operators import apply_K_scalar, apply_K_vector, div_sigma, ito_correction
from .commutators import (
    DecompositionTerms,
    LimitFields,
    analytic_limits,
    decompose,
    double_commutator,
    e2,
    e3,
    limit_residuals,
)
from .entropy import (
    Entropy,
    growth_certificate,
    make_entropy,
    proof_identity,
    theorem_combination,
    weighted_integral,
)
from .spde import (
    BrownianDriver,
    DriftSpec,
    MonteCarloEstimate,
    SpdeState,
    cfl_dt,
    estimate_apriori,
    run_path,
    sample_increments,
    step_ito,
    step_strat_heun,
)

__version__ = "0.1.0"
