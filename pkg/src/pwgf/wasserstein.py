"""Squared 2-Wasserstein distances and the RBF-kernel MMD surrogate.

One-dimensional transport is solved exactly by the monotone (quantile)
coupling. Multi-dimensional finite supports go through a generic transport
LP, which also serves as the independent oracle in the test-suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog
from scipy.spatial.distance import pdist

from .distributions import (
    DEFAULT_MASS_TOL,
    Bernoulli,
    DiscreteDistribution,
    FactorizedProduct,
    ParticleSet,
    Poisson,
)

MAX_LP_ATOMS = 64


@dataclass(frozen=True)
class FiniteDistribution:
    """Finitely supported measure; atoms have shape (k,) or (k, d)."""

    atoms: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        atoms = np.array(self.atoms, dtype=float)
        probs = np.array(self.probs, dtype=float).reshape(-1)
        if atoms.ndim == 1:
            atoms = atoms[:, None]
        if atoms.shape[0] != probs.size or probs.size == 0:
            raise ValueError("atoms and probs must be non-empty and of matching length")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
            raise ValueError(f"probs must be nonnegative and sum to 1, got sum {probs.sum()!r}")
        if np.unique(atoms, axis=0).shape[0] != atoms.shape[0]:
            raise ValueError("atoms must be distinct")
        atoms.setflags(write=False)
        probs.setflags(write=False)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "probs", probs)

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]

    def mean(self) -> np.ndarray:
        return self.probs @ self.atoms

    @classmethod
    def from_particles(cls, particles) -> "FiniteDistribution":
        """Uniform empirical measure; repeated values are merged."""
        v = particles.values if isinstance(particles, ParticleSet) else np.asarray(particles, float)
        if v.ndim == 1:
            v = v[:, None]
        atoms, counts = np.unique(v, axis=0, return_counts=True)
        return cls(atoms, counts / counts.sum())

    @classmethod
    def from_distribution(cls, dist: DiscreteDistribution,
                          mass_tol: float = DEFAULT_MASS_TOL) -> "FiniteDistribution":
        """Truncated support of a parametric family, renormalized; zero-mass atoms dropped."""
        if isinstance(dist, FactorizedProduct):
            from .distributions import product_support

            atoms, probs = product_support(dist, mass_tol)
        else:
            atoms, probs = dist.truncated_support(mass_tol)
        keep = probs > 0
        return cls(atoms[keep], probs[keep] / probs[keep].sum())

    @classmethod
    def product(cls, *marginals: "FiniteDistribution") -> "FiniteDistribution":
        """Product measure of one-dimensional finite marginals."""
        grids = np.meshgrid(*[m.atoms[:, 0] for m in marginals], indexing="ij")
        wgrids = np.meshgrid(*[m.probs for m in marginals], indexing="ij")
        atoms = np.stack([g.reshape(-1) for g in grids], axis=1)
        probs = np.prod(np.stack([w.reshape(-1) for w in wgrids], axis=1), axis=1)
        return cls(atoms, probs / probs.sum())


@dataclass(frozen=True)
class Coupling:
    row_atoms: np.ndarray
    col_atoms: np.ndarray
    plan: np.ndarray

    def cost(self) -> float:
        diff = self.row_atoms[:, None, :] - self.col_atoms[None, :, :]
        return float(np.sum(self.plan * np.sum(diff**2, axis=-1)))


@dataclass(frozen=True)
class KernelSpec:
    """RBF kernel exp(-(x - y)^2 / (2 h^2))."""

    bandwidth: float
    kind: str = "rbf"

    def __post_init__(self):
        if self.kind != "rbf":
            raise ValueError(f"unsupported kernel {self.kind!r}")
        if not (self.bandwidth > 0) or not np.isfinite(self.bandwidth):
            raise ValueError(f"kernel bandwidth must be > 0, got {self.bandwidth}")

    def __call__(self, x, y):
        return rbf_kernel(x, y, self)


def _to_finite(x, mass_tol=DEFAULT_MASS_TOL) -> FiniteDistribution:
    if isinstance(x, FiniteDistribution):
        return x
    if isinstance(x, DiscreteDistribution):
        return FiniteDistribution.from_distribution(x, mass_tol)
    return FiniteDistribution.from_particles(x)


def _check_mass(mu: FiniteDistribution, nu: FiniteDistribution):
    if abs(mu.probs.sum() - nu.probs.sum()) > 1e-12:
        raise ValueError("marginal mass mismatch")
    if mu.dim != nu.dim:
        raise ValueError(f"dimension mismatch: {mu.dim} vs {nu.dim}")


def monotone_coupling(mu: FiniteDistribution, nu: FiniteDistribution) -> Coupling:
    """Quantile (north-west corner on sorted atoms) coupling of 1-D measures."""
    ia, ib = np.argsort(mu.atoms[:, 0]), np.argsort(nu.atoms[:, 0])
    cdf_a = np.cumsum(mu.probs[ia])
    cdf_b = np.cumsum(nu.probs[ib])
    cdf_a /= cdf_a[-1]
    cdf_b /= cdf_b[-1]
    cuts = np.union1d(cdf_a, cdf_b)
    lo = np.concatenate([[0.0], cuts[:-1]])
    mass = cuts - lo
    keep = mass > 0
    mid = 0.5 * (lo + cuts)[keep]
    i = np.minimum(np.searchsorted(cdf_a, mid), ia.size - 1)
    j = np.minimum(np.searchsorted(cdf_b, mid), ib.size - 1)
    plan = np.zeros((mu.atoms.shape[0], nu.atoms.shape[0]))
    np.add.at(plan, (ia[i], ib[j]), mass[keep])
    return Coupling(mu.atoms, nu.atoms, plan)


def transport_lp(mu: FiniteDistribution, nu: FiniteDistribution) -> Coupling:
    """Generic squared-Euclidean transport LP (any dimension) via HiGHS."""
    m, n = mu.atoms.shape[0], nu.atoms.shape[0]
    cost = np.sum((mu.atoms[:, None, :] - nu.atoms[None, :, :]) ** 2, axis=-1)
    a_eq = np.zeros((m + n, m * n))
    for i in range(m):
        a_eq[i, i * n:(i + 1) * n] = 1.0
    for j in range(n):
        a_eq[m + j, j::n] = 1.0
    b_eq = np.concatenate([mu.probs, nu.probs])
    # one marginal row is implied by the others; keeping it lets rounding in
    # the totals make tiny-mass problems look infeasible
    res = linprog(cost.reshape(-1), A_eq=a_eq[:-1], b_eq=b_eq[:-1], bounds=(0, None),
                  method="highs-ds",
                  options={"primal_feasibility_tolerance": 1e-10,
                           "dual_feasibility_tolerance": 1e-10})
    if res.status != 0:
        raise RuntimeError(f"transport LP failed: {res.message}")
    plan = np.clip(res.x.reshape(m, n), 0.0, None)
    return Coupling(mu.atoms, nu.atoms, plan)


def w2_lp_oracle(mu, nu, method: str = "auto"):
    """Exact squared 2-Wasserstein distance and an optimal coupling.

    ``method='auto'`` uses the monotone coupling in one dimension and the
    transport LP otherwise; ``'lp'`` forces the LP.
    """
    mu, nu = _to_finite(mu), _to_finite(nu)
    _check_mass(mu, nu)
    if max(mu.atoms.shape[0], nu.atoms.shape[0]) > MAX_LP_ATOMS and (method == "lp" or mu.dim > 1):
        raise ValueError(f"LP oracle limited to {MAX_LP_ATOMS} atoms per side")
    if method == "lp" or (method == "auto" and mu.dim > 1):
        plan = transport_lp(mu, nu)
    elif method in ("auto", "monotone"):
        if mu.dim != 1:
            raise ValueError("monotone coupling needs one-dimensional atoms")
        plan = monotone_coupling(mu, nu)
    else:
        raise ValueError(f"unknown method {method!r}")
    return plan.cost(), plan


def w2_empirical_1d(xs, ys) -> float:
    xs = np.sort(np.asarray(xs, dtype=float).reshape(-1))
    ys = np.sort(np.asarray(ys, dtype=float).reshape(-1))
    if xs.size != ys.size:
        raise ValueError(f"length mismatch: {xs.size} vs {ys.size}")
    return float(np.mean((xs - ys) ** 2))


def w2_bernoulli(p: float, q: float) -> float:
    return abs(p - q)


def w2_bernoulli_vs_empirical(p: float, particles) -> float:
    """W^2 between Bern(p) and a 1-D empirical (or finite) measure.

    The top ``p`` of the mass moves to 1 and the rest to 0; an atom that
    straddles the threshold is split fractionally.
    """
    if not (0.0 <= p <= 1.0):
        raise ValueError(f"p must lie in [0, 1], got {p}")
    nu = _to_finite(particles)
    if nu.dim != 1:
        raise ValueError("expected one-dimensional particles")
    order = np.argsort(nu.atoms[:, 0])[::-1]
    y = nu.atoms[order, 0]
    w = nu.probs[order]
    above = np.concatenate([[0.0], np.cumsum(w)[:-1]])
    to_one = np.clip(p - above, 0.0, w)
    return float(np.sum(to_one * (y - 1.0) ** 2 + (w - to_one) * y**2))


def w2_1d(a, b, mass_tol: float = DEFAULT_MASS_TOL) -> float:
    """Squared W2 between two 1-D objects, using closed forms where they exist."""
    if isinstance(a, Bernoulli) and isinstance(b, Bernoulli):
        return w2_bernoulli(a.p, b.p)
    if isinstance(a, Bernoulli) and not isinstance(b, DiscreteDistribution):
        return w2_bernoulli_vs_empirical(a.p, b)
    if isinstance(b, Bernoulli) and not isinstance(a, DiscreteDistribution):
        return w2_bernoulli_vs_empirical(b.p, a)
    return w2_lp_oracle(_to_finite(a, mass_tol), _to_finite(b, mass_tol), method="monotone")[0]


def w2_factorized(marginal_pairs) -> float:
    """Sum of per-coordinate squared distances between factorized measures."""
    return float(sum(w2_1d(a, b) for a, b in marginal_pairs))


def _mean_of(x) -> np.ndarray:
    if isinstance(x, (DiscreteDistribution, FiniteDistribution, ParticleSet)):
        return np.atleast_1d(x.mean())
    return np.atleast_1d(np.mean(np.asarray(x, dtype=float)))


def expectation_gap(mu, nu) -> float:
    """|E_mu - E_nu|, a lower bound on W(mu, nu) in one dimension."""
    return float(np.abs(_mean_of(mu) - _mean_of(nu)).sum())


def rbf_kernel(x, y, k: KernelSpec):
    d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    out = np.exp(-(d**2) / (2.0 * k.bandwidth**2))
    return float(out) if out.ndim == 0 else out


def median_heuristic_bandwidth(particles) -> float:
    """Median pairwise distance, or 1.0 when that median is zero."""
    v = particles.flat() if isinstance(particles, ParticleSet) else np.asarray(particles, float)
    v = v.reshape(-1, 1)
    if v.shape[0] < 2:
        return 1.0
    h = float(np.median(pdist(v)))
    return h if h > 0 else 1.0


def _tilde_values(tilde) -> np.ndarray:
    if isinstance(tilde, ParticleSet):
        return tilde.flat()
    return np.asarray(tilde, dtype=float).reshape(-1)


def _mu_support(mu: DiscreteDistribution, mass_tol: float):
    if isinstance(mu, FactorizedProduct):
        raise ValueError("MMD is computed per coordinate; pass a one-dimensional distribution")
    if isinstance(mu, Bernoulli):
        return np.array([0.0, 1.0]), np.array([1.0 - mu.p, mu.p])
    return mu.truncated_support(mass_tol)


def mmd2(mu: DiscreteDistribution, tilde, k: KernelSpec,
         mass_tol: float = DEFAULT_MASS_TOL) -> float:
    """Semi-analytic squared MMD: exact under mu, empirical over ``tilde``."""
    a, w = _mu_support(mu, mass_tol)
    z = _tilde_values(tilde)
    k_aa = rbf_kernel(a[:, None], a[None, :], k)
    k_zz = rbf_kernel(z[:, None], z[None, :], k)
    k_az = rbf_kernel(a[:, None], z[None, :], k)
    return float(w @ k_aa @ w + k_zz.mean() - 2.0 * w @ k_az.mean(axis=1))


def mmd2_grad(mu: DiscreteDistribution, tilde, k: KernelSpec,
              mass_tol: float = DEFAULT_MASS_TOL) -> float:
    """Derivative of :func:`mmd2` with respect to the parameter of ``mu``."""
    z = _tilde_values(tilde)
    if isinstance(mu, Bernoulli):
        p = mu.p
        k10 = np.exp(-1.0 / (2.0 * k.bandwidth**2))
        diff = rbf_kernel(1.0, z, k) - rbf_kernel(0.0, z, k)
        return float(-2.0 * (1.0 - 2.0 * p) * (1.0 - k10) - 2.0 * np.mean(diff))
    if isinstance(mu, Poisson):
        a, w = mu.truncated_support(mass_tol)
        dw = w * (a / mu.lam - 1.0)
        k_aa = rbf_kernel(a[:, None], a[None, :], k)
        k_az = rbf_kernel(a[:, None], z[None, :], k).mean(axis=1)
        return float(2.0 * dw @ k_aa @ w - 2.0 * dw @ k_az)
    raise ValueError(f"mmd2_grad supports Bernoulli and Poisson, got {type(mu).__name__}")


def mmd2_metric(mu: DiscreteDistribution, k: KernelSpec,
                mass_tol: float = DEFAULT_MASS_TOL) -> float:
    """Curvature of the semi-analytic MMD in the parameter at a perfect match.

    Equals 2 (dw)^T K (dw) with dw the parameter derivative of the pmf; it is
    the exact second derivative of :func:`mmd2` for Bernoulli and the
    expected one (over tilde drawn from ``mu``) for Poisson.
    """
    if isinstance(mu, Bernoulli):
        return float(4.0 * (1.0 - np.exp(-1.0 / (2.0 * k.bandwidth**2))))
    if isinstance(mu, Poisson):
        a, w = mu.truncated_support(mass_tol)
        dw = w * (a / mu.lam - 1.0)
        return float(2.0 * dw @ rbf_kernel(a[:, None], a[None, :], k) @ dw)
    raise ValueError(f"mmd2_metric supports Bernoulli and Poisson, got {type(mu).__name__}")
