"""Simulation laboratory for mean-field interacting particle systems.

Building blocks: coefficient kernels with growth/modulus metadata,
empirical measures with exact Wasserstein distances, reproducible Brownian
increment bundles, Euler simulators for the interacting and limit systems,
a distribution-iteration solver for the limit law, and convergence-study
experiment runners behind the ``mvsde`` command line tool.
"""

__version__ = "0.1.0"

from .analysis import RateFit, RhoEta, alpha_envelope_check, bihari_bound, fit_rate, rho_eta
from .kernels import (
    KernelPair,
    ModulusFn,
    ValidationReport,
    eval_diffusion,
    eval_drift,
    make_kernel,
    mean_field_diffusion,
    mean_field_drift,
    validate_conditions,
)
from .measure import (
    EmpiricalMeasure,
    TransportPlan,
    moment,
    w2sq_upper_bound,
    wasserstein_1d,
    wasserstein_assignment,
    wasserstein_bruteforce,
)
from .paths import (
    BrownianBundle,
    InitialSample,
    TimeGrid,
    derive_seed,
    generate_bundle,
    restrict,
    sample_initial,
)
from .picard import LawFlow, PicardReport, analytic_linear_flow, picard_solve, picard_step
from .simulator import (
    BlowUpError,
    ChaosErrorReport,
    ParticleCloud,
    Trajectory,
    centered_kernel_stats,
    coupled_chaos_error,
    euler_interacting,
    euler_limit_particles,
    reference_interacting,
)

__all__ = [name for name in dir() if not name.startswith("_")]
