"""Preconditioned Hamiltonian Monte Carlo on discretized function spaces.

The sampler targets densities exp(-Phi(q)) relative to a centred Gaussian
prior whose covariance is trace class, so the algorithm and its step size are
well defined uniformly in the discretization dimension.  A synchronous
coupling harness measures the contraction of two chains driven by shared
randomness and audits the regularity conditions behind the geometric rate.
"""

from .coupling import (
    AssumptionReport,
    CoupledState,
    CouplingRecord,
    CouplingTrace,
    PointMass,
    ShiftedPrior,
    TrajectoryBoundReport,
    WassersteinDecayResult,
    audit_assumptions,
    audit_trajectory_bounds,
    coupled_step,
    estimate_contraction_rate,
    fit_log_distance,
    run_coupling,
    theorem_contraction_rate,
    wasserstein_decay_experiment,
)
from .integrator import (
    IntegratorParams,
    PhaseState,
    TrajectoryDivergence,
    exact_flow_affine,
    kick_flow,
    rotate_flow,
    strang_step,
    strang_step_closed_form,
    trajectory,
)
from .potentials import (
    POTENTIALS,
    Potential,
    PotentialConstants,
    double_well_potential,
    gaussian_potential,
    linear_potential,
    make_potential,
    quartic_norm_potential,
    zero_potential,
)
from .sampler import (
    ADJUSTED,
    EXACT,
    ChainError,
    HmcConfig,
    StepOutcome,
    adjusted_step,
    energy_error,
    exact_step,
    run_chain,
)
from .space import (
    GRID,
    SPECTRAL,
    BridgeGridCovariance,
    CovarianceModel,
    Field,
    SpectralCovariance,
    apply_covariance,
    bridge_eigenvalues,
    l2_inner,
    l2_norm,
    sample_prior,
    sobolev_inner,
    sobolev_norm,
    to_grid,
    to_spectral,
)

__version__ = "0.1.0"
