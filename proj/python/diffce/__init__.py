"""Diffusion counterfactual generation: python bindings for the C++ core."""

from ._core import (
    GaussianMixture,
    MixtureComponent,
    MixturePredictor,
    VpSchedule,
    boltzmann_approx_score_1d,
    boltzmann_exact_score_1d,
    boltzmann_slope,
    ce_distances,
    derive_seed,
    erfcx,
    generate_ce,
    guided_noise,
    neighborhood_score,
    stable_erfc_ratio,
)

__all__ = [
    "GaussianMixture",
    "MixtureComponent",
    "MixturePredictor",
    "VpSchedule",
    "boltzmann_approx_score_1d",
    "boltzmann_exact_score_1d",
    "boltzmann_slope",
    "ce_distances",
    "derive_seed",
    "erfcx",
    "generate_ce",
    "guided_noise",
    "neighborhood_score",
    "stable_erfc_ratio",
]
