"""Projected Wasserstein gradient flow (pWGF) for discrete distributions."""

from .distributions import (
    Bernoulli,
    Categorical,
    DiscreteDistribution,
    FactorizedProduct,
    ParticleSet,
    Poisson,
    RngStream,
)

__all__ = [
    "Bernoulli",
    "Categorical",
    "DiscreteDistribution",
    "FactorizedProduct",
    "ParticleSet",
    "Poisson",
    "RngStream",
]
