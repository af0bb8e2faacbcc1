"""Parametric discrete distributions with seeded sampling.

Four families are supported: Bernoulli(p), Poisson(lam), Categorical over
explicit real-valued atoms, and FactorizedProduct of one-dimensional
marginals. All numerical methods are batch oriented and take particle arrays
of shape (N, d); the module-level helpers (``pmf``, ``score``, ...) accept a
single point for convenience.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import gammaln

from .errors import BoundaryError, ParameterDomainError, SupportError

DEFAULT_MASS_TOL = 1e-12


@dataclass(frozen=True)
class RngStream:
    """Explicit, hashable source of randomness.

    Identical ``(seed, stream)`` pairs always produce identical draws. Use
    :meth:`child` to derive independent sub-streams (one per iteration,
    coordinate, replicate, ...).
    """

    seed: int
    stream: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream,))
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, key: int) -> "RngStream":
        mixed = np.random.SeedSequence([self.stream, key]).generate_state(1, np.uint64)[0]
        return RngStream(self.seed, int(mixed))


@dataclass(frozen=True)
class ParticleSet:
    """N real-valued particles of common dimension d, uniformly weighted."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise ValueError(f"particles must have shape (N, d) with N >= 1, got {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_points(cls, points) -> "ParticleSet":
        return cls(np.asarray(points, dtype=float))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def column(self, i: int) -> np.ndarray:
        return self.values[:, i]

    def flat(self) -> np.ndarray:
        if self.dim != 1:
            raise ValueError(f"expected 1-D particles, got dimension {self.dim}")
        return self.values[:, 0]

    def mean(self) -> np.ndarray:
        return self.values.mean(axis=0)

    def __len__(self):
        return self.n


class DiscreteDistribution:
    """Base class for the parametric families."""

    dim: int = 1
    n_params: int = 1
    mean_parameterized: bool = True

    @property
    def params(self) -> np.ndarray:
        raise NotImplementedError

    def with_params(self, params) -> "DiscreteDistribution":
        raise NotImplementedError

    def mean(self) -> np.ndarray:
        raise NotImplementedError

    def variance(self) -> np.ndarray:
        raise NotImplementedError

    def pmf(self, values: np.ndarray) -> np.ndarray:
        """Mass at each row of ``values`` (shape (N, d)); zero off-support."""
        raise NotImplementedError

    def score(self, values: np.ndarray) -> np.ndarray:
        """Rows of grad_theta log p_theta(z), shape (N, n_params)."""
        raise NotImplementedError

    def truncated_support(self, mass_tol: float = DEFAULT_MASS_TOL):
        raise NotImplementedError

    def sample(self, n: int, rng: RngStream) -> ParticleSet:
        raise NotImplementedError


def _as_rows(values, dim: int) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    if v.ndim == 0:
        v = v.reshape(1, 1)
    elif v.ndim == 1:
        v = v[:, None] if dim == 1 else v[None, :]
    if v.shape[-1] != dim:
        raise ValueError(f"expected points of dimension {dim}, got shape {v.shape}")
    return v


def _is_integer(x: np.ndarray) -> np.ndarray:
    return np.isfinite(x) & (x == np.round(x))


@dataclass(frozen=True)
class Bernoulli(DiscreteDistribution):
    p: float

    def __post_init__(self):
        if not (0.0 <= self.p <= 1.0) or not np.isfinite(self.p):
            raise ParameterDomainError(f"Bernoulli p must lie in [0, 1], got {self.p}")

    @property
    def params(self):
        return np.array([self.p])

    def with_params(self, params):
        return Bernoulli(float(np.asarray(params).reshape(-1)[0]))

    def mean(self):
        return np.array([self.p])

    def variance(self):
        return np.array([self.p * (1.0 - self.p)])

    def pmf(self, values):
        z = _as_rows(values, 1)[:, 0]
        return np.where(z == 1.0, self.p, np.where(z == 0.0, 1.0 - self.p, 0.0))

    def score(self, values):
        z = _as_rows(values, 1)[:, 0]
        if self.p in (0.0, 1.0):
            raise BoundaryError(f"Bernoulli score undefined at boundary p={self.p}")
        if not np.all((z == 0.0) | (z == 1.0)):
            raise SupportError("Bernoulli score requested outside {0, 1}")
        return (z / self.p - (1.0 - z) / (1.0 - self.p))[:, None]

    def truncated_support(self, mass_tol=DEFAULT_MASS_TOL):
        if 1.0 - self.p >= 1.0 - mass_tol:
            return np.array([0.0]), np.array([1.0 - self.p])
        return np.array([0.0, 1.0]), np.array([1.0 - self.p, self.p])

    def sample(self, n, rng):
        _check_count(n)
        u = rng.generator().random(n)
        return ParticleSet((u < self.p).astype(float))


@dataclass(frozen=True)
class Poisson(DiscreteDistribution):
    lam: float

    def __post_init__(self):
        if not (self.lam > 0.0) or not np.isfinite(self.lam):
            raise ParameterDomainError(f"Poisson rate must be > 0, got {self.lam}")

    @property
    def params(self):
        return np.array([self.lam])

    def with_params(self, params):
        return Poisson(float(np.asarray(params).reshape(-1)[0]))

    def mean(self):
        return np.array([self.lam])

    def variance(self):
        return np.array([self.lam])

    def _log_pmf_int(self, k: np.ndarray) -> np.ndarray:
        return k * np.log(self.lam) - self.lam - gammaln(k + 1.0)

    def pmf(self, values):
        z = _as_rows(values, 1)[:, 0]
        ok = _is_integer(z) & (z >= 0)
        out = np.zeros_like(z)
        out[ok] = np.exp(self._log_pmf_int(z[ok]))
        return out

    def score(self, values):
        z = _as_rows(values, 1)[:, 0]
        if not np.all(_is_integer(z) & (z >= 0)):
            raise SupportError("Poisson score requested outside the non-negative integers")
        return (z / self.lam - 1.0)[:, None]

    def _cdf_table(self, mass_tol: float):
        # Sequential search over k = 0, 1, 2, ... until enough mass is covered.
        kmax = int(np.ceil(self.lam + 12.0 * np.sqrt(self.lam) + 30.0))
        while True:
            k = np.arange(kmax + 1, dtype=float)
            probs = np.exp(self._log_pmf_int(k))
            cdf = np.cumsum(probs)
            hit = np.nonzero(cdf >= 1.0 - mass_tol)[0]
            if hit.size:
                m = hit[0] + 1
                return k[:m], probs[:m], cdf[:m]
            if probs[-1] < 1e-300 and k[-1] > self.lam:
                # Floating-point sum saturated below the requested mass.
                return k, probs, cdf
            kmax *= 2

    def truncated_support(self, mass_tol=DEFAULT_MASS_TOL):
        k, probs, _ = self._cdf_table(mass_tol)
        return k, probs

    def sample(self, n, rng):
        _check_count(n)
        _, _, cdf = self._cdf_table(1e-14)
        u = rng.generator().random(n)
        # inversion: smallest k with F(k) > u; u beyond the table lands on the last atom
        k = np.searchsorted(cdf, u, side="right")
        return ParticleSet(np.minimum(k, cdf.size - 1).astype(float))


@dataclass(frozen=True)
class Categorical(DiscreteDistribution):
    """Probability vector over explicit real-valued atom locations."""

    atoms: tuple
    probs: tuple
    mean_parameterized = False

    def __post_init__(self):
        atoms = tuple(float(a) for a in self.atoms)
        probs = tuple(float(q) for q in self.probs)
        if len(atoms) != len(probs) or not atoms:
            raise ParameterDomainError("Categorical needs matching, non-empty atoms and probs")
        if len(set(atoms)) != len(atoms):
            raise ParameterDomainError("Categorical atoms must be distinct")
        if any(q < 0.0 or q > 1.0 for q in probs) or abs(sum(probs) - 1.0) > 1e-12:
            raise ParameterDomainError("Categorical probs must lie in [0, 1] and sum to 1")
        order = np.argsort(atoms)
        object.__setattr__(self, "atoms", tuple(atoms[i] for i in order))
        object.__setattr__(self, "probs", tuple(probs[i] for i in order))

    @property
    def n_params(self):
        return len(self.probs)

    @property
    def params(self):
        return np.array(self.probs)

    def with_params(self, params):
        return Categorical(self.atoms, tuple(np.asarray(params, dtype=float)))

    def mean(self):
        return np.array([np.dot(self.atoms, self.probs)])

    def variance(self):
        a, q = np.array(self.atoms), np.array(self.probs)
        return np.array([np.dot(q, a**2) - np.dot(q, a) ** 2])

    def _index(self, z: np.ndarray) -> np.ndarray:
        atoms = np.array(self.atoms)
        idx = np.searchsorted(atoms, z)
        idx = np.clip(idx, 0, atoms.size - 1)
        return np.where(atoms[idx] == z, idx, -1)

    def pmf(self, values):
        z = _as_rows(values, 1)[:, 0]
        idx = self._index(z)
        q = np.array(self.probs)
        return np.where(idx >= 0, q[np.maximum(idx, 0)], 0.0)

    def score(self, values):
        # gradient w.r.t. the probability vector treated as free coordinates
        z = _as_rows(values, 1)[:, 0]
        idx = self._index(z)
        q = np.array(self.probs)
        if np.any(idx < 0) or np.any(q[np.maximum(idx, 0)] == 0.0):
            raise SupportError("Categorical score requested at a zero-mass point")
        out = np.zeros((z.size, q.size))
        out[np.arange(z.size), idx] = 1.0 / q[idx]
        return out

    def truncated_support(self, mass_tol=DEFAULT_MASS_TOL):
        atoms, q = np.array(self.atoms), np.array(self.probs)
        m = int(np.nonzero(np.cumsum(q) >= 1.0 - mass_tol)[0][0]) + 1
        return atoms[:m], q[:m]

    def sample(self, n, rng):
        _check_count(n)
        cdf = np.cumsum(self.probs)
        u = rng.generator().random(n) * cdf[-1]
        idx = np.minimum(np.searchsorted(cdf, u, side="right"), len(self.atoms) - 1)
        return ParticleSet(np.array(self.atoms)[idx])


@dataclass(frozen=True)
class FactorizedProduct(DiscreteDistribution):
    """Independent product of one-dimensional marginals.

    Coordinate ``i`` is sampled from ``rng.child(i)`` so each marginal sees
    the same draws it would get when sampled on its own with that stream.
    """

    marginals: tuple = field(default_factory=tuple)

    def __post_init__(self):
        margs = tuple(self.marginals)
        if not margs:
            raise ParameterDomainError("FactorizedProduct needs at least one marginal")
        for m in margs:
            if isinstance(m, FactorizedProduct) or not isinstance(m, DiscreteDistribution):
                raise ParameterDomainError("marginals must be one-dimensional distributions")
        object.__setattr__(self, "marginals", margs)

    @property
    def dim(self):
        return len(self.marginals)

    @property
    def n_params(self):
        return sum(m.n_params for m in self.marginals)

    @property
    def mean_parameterized(self):
        return all(m.mean_parameterized for m in self.marginals)

    @property
    def params(self):
        return np.concatenate([m.params for m in self.marginals])

    def _split(self, vec):
        vec = np.asarray(vec, dtype=float).reshape(-1)
        out, start = [], 0
        for m in self.marginals:
            out.append(vec[start:start + m.n_params])
            start += m.n_params
        return out

    def with_params(self, params):
        return FactorizedProduct(
            tuple(m.with_params(p) for m, p in zip(self.marginals, self._split(params)))
        )

    def mean(self):
        return np.concatenate([m.mean() for m in self.marginals])

    def variance(self):
        return np.concatenate([m.variance() for m in self.marginals])

    def pmf(self, values):
        z = _as_rows(values, self.dim)
        out = np.ones(z.shape[0])
        for i, m in enumerate(self.marginals):
            out = out * m.pmf(z[:, i])
        return out

    def score(self, values):
        z = _as_rows(values, self.dim)
        return np.concatenate([m.score(z[:, i]) for i, m in enumerate(self.marginals)], axis=1)

    def truncated_support(self, mass_tol=DEFAULT_MASS_TOL):
        raise ValueError("truncated_support is defined for one-dimensional distributions only")

    def sample(self, n, rng):
        _check_count(n)
        cols = [m.sample(n, rng.child(i)).flat() for i, m in enumerate(self.marginals)]
        return ParticleSet(np.stack(cols, axis=1))


def _check_count(n: int):
    if int(n) != n or n < 1:
        raise ValueError(f"sample count must be a positive integer, got {n}")


def product_support(dist: DiscreteDistribution, mass_tol: float = DEFAULT_MASS_TOL,
                    max_atoms: int | None = None):
    """Enumerate the truncated support of ``dist`` as (points (M, d), probs (M,)).

    For a product the per-marginal tolerance is ``mass_tol / d`` so the joint
    retained mass is still at least ``1 - mass_tol``.
    """
    from .errors import CapacityError

    if not isinstance(dist, FactorizedProduct):
        atoms, probs = dist.truncated_support(mass_tol)
        if max_atoms is not None and atoms.size > max_atoms:
            raise CapacityError(f"{atoms.size} atoms exceeds budget {max_atoms}")
        return atoms[:, None], probs
    parts = [m.truncated_support(mass_tol / dist.dim) for m in dist.marginals]
    total = int(np.prod([a.size for a, _ in parts]))
    if max_atoms is not None and total > max_atoms:
        raise CapacityError(f"{total} joint atoms exceeds budget {max_atoms}")
    grids = np.meshgrid(*[a for a, _ in parts], indexing="ij")
    wgrids = np.meshgrid(*[q for _, q in parts], indexing="ij")
    points = np.stack([g.reshape(-1) for g in grids], axis=1)
    probs = np.prod(np.stack([w.reshape(-1) for w in wgrids], axis=1), axis=1)
    return points, probs


def sample(dist: DiscreteDistribution, n: int, rng: RngStream) -> ParticleSet:
    return dist.sample(n, rng)


def mean(dist: DiscreteDistribution) -> np.ndarray:
    return dist.mean()


def pmf(dist: DiscreteDistribution, z) -> float:
    return float(dist.pmf(_as_rows(z, dist.dim)[:1])[0])


def score(dist: DiscreteDistribution, z) -> np.ndarray:
    """grad_theta log p_theta(z) at a single point."""
    rows = _as_rows(z, dist.dim)[:1]
    if dist.pmf(rows)[0] == 0.0:
        raise SupportError(f"score requested at zero-mass point {z}")
    return dist.score(rows)[0]


def truncated_support(dist: DiscreteDistribution, mass_tol: float = DEFAULT_MASS_TOL):
    """Smallest ascending prefix of the support holding at least 1 - mass_tol."""
    return dist.truncated_support(mass_tol)


def product(*marginals: DiscreteDistribution) -> FactorizedProduct:
    return FactorizedProduct(tuple(marginals))


def as_marginals(dist: DiscreteDistribution) -> Sequence[DiscreteDistribution]:
    return dist.marginals if isinstance(dist, FactorizedProduct) else (dist,)
