"""Pseudo-spectral toolkit for N coupled stochastic damped wave equations
on the 2D torus, their Wick renormalization, mean-field limit, and
invariant Gibbs dynamics."""

__version__ = "0.1.0"

from .grid import (ComponentEnsemble, GridSpec, PairState, SpectralField,
                   apply_i_operator, ball_mask, dealias_mask, load_field, project,
                   random_field, rms, save_field, sobolev_norm, sup_sobolev_norm)
from .propagator import (apply_damped_propagator, apply_homogeneous_flow,
                         duhamel_weights, etd2_step, flow_entries, mode_frequency)
from .noise import (ConvolutionState, NoiseKind, NoiseStream, RenormConstants,
                    alpha_m, sample_mu1_mu0_pair, sigma_m, step_convolution,
                    transition_covariance)
from .wick import (WickContext, hermite, wick_cube, wick_pair, wick_quartic,
                   wick_square, wick_triple)
from .dynamics import (BlowupError, HlsmState, MeanFieldState, TrajectoryRecord,
                       renormalized_drift, run_trajectory,
                       step_deterministic_meanfield, step_deterministic_nlw,
                       step_hlsm, step_linear_ensemble, step_meanfield,
                       step_renormalized_wave)
from .gibbs import (GibbsSamplerConfig, GibbsSamples, InvarianceReport,
                    coupled_gibbs_gaussian_pair, evolve_gibbs_samples, gibbs_drift,
                    gibbs_potential, gibbs_vs_gaussian_covariance,
                    integrated_autocorrelation, invariance_check, sample_gibbs)
from .diagnostics import (RateFit, commutator_defect, difference_norms, energy_en,
                          energy_meanfield, fit_rate, lln_estimator, modified_energy,
                          write_csv, zn_norm)

__all__ = [
    "__version__",
    # grid
    "GridSpec", "SpectralField", "PairState", "ComponentEnsemble", "project",
    "apply_i_operator", "ball_mask", "dealias_mask", "random_field", "rms",
    "sobolev_norm", "sup_sobolev_norm", "save_field", "load_field",
    # propagator
    "mode_frequency", "flow_entries", "apply_damped_propagator",
    "apply_homogeneous_flow", "duhamel_weights", "etd2_step",
    # noise
    "NoiseKind", "NoiseStream", "alpha_m", "sigma_m", "RenormConstants",
    "transition_covariance", "sample_mu1_mu0_pair", "ConvolutionState",
    "step_convolution",
    # wick
    "WickContext", "hermite", "wick_pair", "wick_triple", "wick_square",
    "wick_cube", "wick_quartic",
    # dynamics
    "HlsmState", "MeanFieldState", "TrajectoryRecord", "BlowupError",
    "run_trajectory", "step_hlsm", "step_meanfield", "renormalized_drift",
    "step_renormalized_wave", "step_linear_ensemble", "step_deterministic_nlw",
    "step_deterministic_meanfield",
    # gibbs
    "GibbsSamplerConfig", "GibbsSamples", "InvarianceReport", "sample_gibbs",
    "gibbs_potential", "gibbs_drift", "coupled_gibbs_gaussian_pair",
    "evolve_gibbs_samples", "invariance_check", "gibbs_vs_gaussian_covariance",
    "integrated_autocorrelation",
    # diagnostics
    "energy_en", "energy_meanfield", "modified_energy", "zn_norm",
    "lln_estimator", "commutator_defect", "difference_norms", "RateFit",
    "fit_rate", "write_csv",
]
