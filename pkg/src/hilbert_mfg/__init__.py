"""Spectral solver and verification harness for mean field games on a
separable Hilbert space.

The state operator A is diagonal with strictly negative eigenvalues, so all
computations run on the first N mode coordinates: Ornstein-Uhlenbeck
semigroup evaluation by tensor Gauss-Hermite quadrature, a mild-form HJB
Picard solver on a time mesh x spatial grid, an exponential-Euler particle
scheme for the Fokker-Planck flow, and a damped fixed-point iteration
coupling the two.  Alongside the solvers, audit routines verify the
quantitative structure the theory provides: per-mode moment bounds,
compactness-set membership, weak-form residuals, Lasry-Lions monotonicity,
and two-start uniqueness probes.
"""

from .config import SolverConfig
from .fp_particles import (
    DriftField,
    FourierTestFunction,
    bootstrap_stderr,
    propagate,
    residual_audit_cases,
    weak_form_residual,
    weak_residual_profile,
)
from .hjb import (
    GeneralHamiltonian,
    GridValueField,
    SeparatedHamiltonian,
    default_box,
    hjb_residual,
    solve_hjb_mild,
    solve_kolmogorov,
    weighted_gradient_change,
    zero_hamiltonian,
)
from .measures import (
    Dirac,
    MeasurePath,
    ParticleMeasure,
    ProductGaussian,
    check_Qm0_membership,
    mixture_paths,
    path_from_dir,
    path_modulus,
    path_sup_distance,
    path_to_dir,
    wasserstein1,
    wasserstein1_sliced,
)
from .mfg import (
    MFGProblem,
    MFGSolution,
    calibrate_c0,
    drift_from_gradient,
    fixed_point_iterate,
    membership_report,
    mode_bounds,
    moment_bound_audit,
    psi_map,
    uniqueness_experiment,
)
from .models import (
    MODEL_NAMES,
    CappedControlHamiltonian,
    ConvolutionCoupling,
    F1Coupling,
    F2Coupling,
    QuadraticCost,
    assumption_check,
    coupling_value,
    default_pair_sampler,
    eval_DH1,
    eval_H1,
    make_convolution_coupling,
    make_model,
    monotonicity_check,
)
from .ou_kernel import OUKernel, QuadratureRule
from .rng import derive_seed, generator, normal_stream, uniform_stream
from .spectrum import (
    SpectrumSpec,
    alpha_beta,
    covariance_diag,
    covariance_qk,
    semigroup_factors,
    stationary_variances,
    validate_spectrum,
)

__version__ = "0.1.0"

__all__ = [
    "SolverConfig",
    "DriftField",
    "FourierTestFunction",
    "bootstrap_stderr",
    "propagate",
    "residual_audit_cases",
    "weak_form_residual",
    "weak_residual_profile",
    "GeneralHamiltonian",
    "GridValueField",
    "SeparatedHamiltonian",
    "default_box",
    "hjb_residual",
    "solve_hjb_mild",
    "solve_kolmogorov",
    "weighted_gradient_change",
    "zero_hamiltonian",
    "Dirac",
    "MeasurePath",
    "ParticleMeasure",
    "ProductGaussian",
    "check_Qm0_membership",
    "mixture_paths",
    "path_from_dir",
    "path_modulus",
    "path_sup_distance",
    "path_to_dir",
    "wasserstein1",
    "wasserstein1_sliced",
    "MFGProblem",
    "MFGSolution",
    "calibrate_c0",
    "drift_from_gradient",
    "fixed_point_iterate",
    "membership_report",
    "mode_bounds",
    "moment_bound_audit",
    "psi_map",
    "uniqueness_experiment",
    "MODEL_NAMES",
    "CappedControlHamiltonian",
    "ConvolutionCoupling",
    "F1Coupling",
    "F2Coupling",
    "QuadraticCost",
    "assumption_check",
    "coupling_value",
    "default_pair_sampler",
    "eval_DH1",
    "eval_H1",
    "make_convolution_coupling",
    "make_model",
    "monotonicity_check",
    "OUKernel",
    "QuadratureRule",
    "derive_seed",
    "generator",
    "normal_stream",
    "uniform_stream",
    "SpectrumSpec",
    "alpha_beta",
    "covariance_diag",
    "covariance_qk",
    "semigroup_factors",
    "stationary_variances",
    "validate_spectrum",
]
