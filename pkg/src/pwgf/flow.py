"""Projected Wasserstein gradient flow.

One iteration draws particles from the current distribution, pushes them a
step ``epsilon`` along ``-grad f`` and projects the moved cloud back onto the
parametric family. Descent convention throughout: the flow minimizes
F[mu] = E_mu[f]; maximization problems should negate their cost.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field

import numpy as np

from .cost import CostFunction
from .distributions import (
    DEFAULT_MASS_TOL,
    Bernoulli,
    DiscreteDistribution,
    FactorizedProduct,
    ParticleSet,
    Poisson,
    RngStream,
    as_marginals,
    product_support,
)
from .errors import NumericError
from .wasserstein import KernelSpec, median_heuristic_bandwidth, mmd2_grad

PARAM_FLOOR = 1e-6
_MC_KEY = 1 << 40


class Projection(str, enum.Enum):
    EXPECTATION_MATCH = "expectation_match"
    MMD_GRADIENT = "mmd_gradient"
    EXACT_BERNOULLI = "exact_bernoulli"


@dataclass(frozen=True)
class FlowConfig:
    epsilon: float = 0.1
    n_particles: int = 64
    projection: Projection = Projection.EXPECTATION_MATCH
    inner_steps: int = 10
    inner_lr: float = 1.0
    bandwidth: float | None = None  # None: median heuristic on the moved particles
    mass_tol: float = DEFAULT_MASS_TOL
    delta: float = PARAM_FLOOR

    def __post_init__(self):
        object.__setattr__(self, "projection", Projection(self.projection))
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if self.n_particles < 1:
            raise ValueError(f"n_particles must be >= 1, got {self.n_particles}")
        if self.projection is Projection.MMD_GRADIENT and self.inner_steps < 1:
            raise ValueError("MMD projection needs inner_steps >= 1")


@dataclass
class TrajectoryRecord:
    iteration: int
    params: np.ndarray
    objective: float
    wall_clock: float


@dataclass
class Trajectory:
    records: list = field(default_factory=list)
    error: str | None = None

    def append(self, iteration, params, objective, wall_clock):
        if self.records and iteration <= self.records[-1].iteration:
            raise ValueError("iteration indices must be strictly increasing")
        self.records.append(TrajectoryRecord(iteration, np.array(params), objective, wall_clock))

    @property
    def objectives(self) -> np.ndarray:
        return np.array([r.objective for r in self.records])

    @property
    def params(self) -> np.ndarray:
        return np.array([r.params for r in self.records])


def wgf_step(particles: ParticleSet, cost: CostFunction, epsilon: float) -> ParticleSet:
    """Push every particle to z - epsilon * grad f(z)."""
    if not epsilon > 0:
        raise ValueError(f"epsilon must be > 0, got {epsilon}")
    z = particles.values
    g = cost.gradient(z)
    bad = ~np.all(np.isfinite(g), axis=1)
    if bad.any():
        i = int(np.argmax(bad))
        raise NumericError(f"non-finite cost gradient at particle {i} (value {z[i]})")
    return ParticleSet(z - epsilon * g)


def clamp_to_domain(marginal: DiscreteDistribution, value: float, delta: float = PARAM_FLOOR) -> float:
    """Bernoulli p into [delta, 1 - delta]; Poisson lambda into [delta, inf)."""
    if isinstance(marginal, Bernoulli):
        return float(np.clip(value, delta, 1.0 - delta))
    if isinstance(marginal, Poisson):
        return float(max(value, delta))
    raise ValueError(f"projection needs a Bernoulli or Poisson family, got {type(marginal).__name__}")


def _rebuild(dist: DiscreteDistribution, marginals) -> DiscreteDistribution:
    return FactorizedProduct(tuple(marginals)) if isinstance(dist, FactorizedProduct) else marginals[0]


def project_expectation_match(dist: DiscreteDistribution, tilde: ParticleSet,
                              delta: float = PARAM_FLOOR) -> DiscreteDistribution:
    """Family member whose mean equals the particle mean (clamped to the domain)."""
    means = tilde.mean()
    margs = [m.with_params([clamp_to_domain(m, means[i], delta)]) for i, m in enumerate(as_marginals(dist))]
    return _rebuild(dist, margs)


def project_bernoulli_exact(tilde: ParticleSet) -> DiscreteDistribution:
    """Exact W2 projection of a particle cloud onto the Bernoulli family.

    A particle is closer to 1 than to 0 iff it exceeds 1/2, so the optimal
    p is the fraction of particles above 1/2 (ties go to 0). Factorized
    clouds are projected coordinatewise.
    """
    p = (tilde.values > 0.5).mean(axis=0)
    if tilde.dim == 1:
        return Bernoulli(float(p[0]))
    return FactorizedProduct(tuple(Bernoulli(float(q)) for q in p))


def project_mmd(dist: DiscreteDistribution, tilde: ParticleSet, k: KernelSpec | None,
                cfg: FlowConfig) -> DiscreteDistribution:
    """Warm-started gradient descent on the semi-analytic MMD, per coordinate."""
    margs = []
    for i, m in enumerate(as_marginals(dist)):
        col = tilde.column(i)
        kern = k if k is not None else KernelSpec(median_heuristic_bandwidth(col))
        theta = float(m.params[0])
        for _ in range(cfg.inner_steps):
            g = mmd2_grad(m.with_params([theta]), col, kern, cfg.mass_tol)
            theta = clamp_to_domain(m, theta - cfg.inner_lr * g, cfg.delta)
        margs.append(m.with_params([theta]))
    return _rebuild(dist, margs)


def project(dist: DiscreteDistribution, tilde: ParticleSet, cfg: FlowConfig) -> DiscreteDistribution:
    if cfg.projection is Projection.EXPECTATION_MATCH:
        return project_expectation_match(dist, tilde, cfg.delta)
    if cfg.projection is Projection.EXACT_BERNOULLI:
        if not all(isinstance(m, Bernoulli) for m in as_marginals(dist)):
            raise ValueError("exact projection is only available for Bernoulli families")
        return project_bernoulli_exact(tilde)
    kern = KernelSpec(cfg.bandwidth) if cfg.bandwidth is not None else None
    return project_mmd(dist, tilde, kern, cfg)


def expected_cost(dist: DiscreteDistribution, cost: CostFunction,
                  mass_tol: float = DEFAULT_MASS_TOL, rng: RngStream | None = None,
                  max_atoms: int = 10**6, mc_samples: int = 10**5) -> float:
    """F[mu] = E_mu[f]: exact enumeration if feasible, Monte Carlo otherwise."""
    try:
        points, probs = product_support(dist, mass_tol, max_atoms=max_atoms)
    except (ValueError, ArithmeticError):
        if rng is None:
            raise
        return float(np.mean(cost(dist.sample(mc_samples, rng).values)))
    return float(probs @ cost(points))


def pwgf_step(dist: DiscreteDistribution, cost: CostFunction, cfg: FlowConfig,
              rng: RngStream) -> DiscreteDistribution:
    particles = dist.sample(cfg.n_particles, rng)
    return project(dist, wgf_step(particles, cost, cfg.epsilon), cfg)


def pwgf_descent_loop(initial: DiscreteDistribution, cost: CostFunction, cfg: FlowConfig,
                      iters: int, rng: RngStream) -> Trajectory:
    """Run ``iters`` sample -> push -> project iterations.

    Iteration 0 records the initial distribution. A numeric failure stops the
    loop and is reported in ``Trajectory.error``.
    """
    traj = Trajectory()
    start = time.perf_counter()
    dist = initial
    traj.append(0, dist.params, expected_cost(dist, cost, cfg.mass_tol, rng.child(_MC_KEY)), 0.0)
    for k in range(1, iters + 1):
        try:
            dist = pwgf_step(dist, cost, cfg, rng.child(k))
            if not np.all(np.isfinite(dist.params)):
                raise NumericError(f"non-finite parameters at iteration {k}")
            obj = expected_cost(dist, cost, cfg.mass_tol, rng.child(_MC_KEY + k))
        except (NumericError, FloatingPointError) as exc:
            traj.error = str(exc)
            break
        traj.append(k, dist.params, obj, time.perf_counter() - start)
    return traj
