"""Diffusion-limit toolkit for Oja's streaming PCA iteration.

The iterate w <- Pi[w + beta Z Z' w] on the unit sphere, viewed in the
eigenbasis of E[Z Z'] = Lambda, admits three tractable approximations at
small stepsize beta: a deterministic logistic flow on the timescale
t = beta n, Ornstein-Uhlenbeck fluctuations of size sqrt(beta) around the
flow's stationary points, and a three-phase decomposition of the journey
from a saddle start to the stationary fluctuation level.  This package
implements the iteration, the closed-form limits, the phase and rate
formulas, and Monte Carlo experiments that check each limit against
simulated ensembles.
"""

from .spectrum import (
    EigenSpectrum,
    make_spectrum,
    sample_bounded,
    sample_gaussian,
    random_rotation,
    chain_rng,
    derive_seed,
)
from .oja import (
    OjaConfig,
    Trajectory,
    IncrementParts,
    oja_step,
    sin2_angle,
    increment_parts,
    empirical_drift,
    resolve_init,
    run_chain,
)
from .ode import (
    ode_rhs,
    logistic_solution,
    integrate_rk4,
    ode_crossing_time,
    export_curve,
)
from .sde import (
    OuSpec,
    OuPath,
    ou_mean_cov,
    ou_stationary_var,
    simulate_ou,
    ou_ensemble_moments,
    stationary_sin2,
    Phase1ExitLaw,
    phase1_exit_law,
    equator_drift_coeff,
    simulate_equator_sde,
    equator_ensemble_second_moment,
)
from .phases import (
    PhaseThresholds,
    CrossingPrediction,
    EmpiricalCrossings,
    CrossingReport,
    predict_crossings,
    detect_phases,
    crossing_report,
    stepsize_rule,
    rate_bound_sin2,
    rate_bound_rayleigh,
    minimax_lower_bound,
    table1_rows,
    cutoff_ratios,
    RateReport,
    rate_report,
)
from .montecarlo import (
    EnsembleConfig,
    EnsembleSummary,
    ExperimentResult,
    run_ensemble_states,
    ensemble_summary,
    ode_convergence_experiment,
    sde_covariance_experiment,
    finite_sample_experiment,
    phase_portrait_experiment,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # spectrum
    "EigenSpectrum", "make_spectrum", "sample_bounded", "sample_gaussian",
    "random_rotation", "chain_rng", "derive_seed",
    # oja
    "OjaConfig", "Trajectory", "IncrementParts", "oja_step", "sin2_angle",
    "increment_parts", "empirical_drift", "resolve_init", "run_chain",
    # ode
    "ode_rhs", "logistic_solution", "integrate_rk4", "ode_crossing_time",
    "export_curve",
    # sde
    "OuSpec", "OuPath", "ou_mean_cov", "ou_stationary_var", "simulate_ou",
    "ou_ensemble_moments", "stationary_sin2", "Phase1ExitLaw",
    "phase1_exit_law", "equator_drift_coeff", "simulate_equator_sde",
    "equator_ensemble_second_moment",
    # phases
    "PhaseThresholds", "CrossingPrediction", "EmpiricalCrossings",
    "CrossingReport", "predict_crossings", "detect_phases", "crossing_report",
    "stepsize_rule", "rate_bound_sin2", "rate_bound_rayleigh",
    "minimax_lower_bound", "table1_rows", "cutoff_ratios", "RateReport",
    "rate_report",
    # montecarlo
    "EnsembleConfig", "EnsembleSummary", "ExperimentResult",
    "run_ensemble_states", "ensemble_summary", "ode_convergence_experiment",
    "sde_covariance_experiment", "finite_sample_experiment",
    "phase_portrait_experiment",
]
