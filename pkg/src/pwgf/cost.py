"""Differentiable cost functions on the continuous extension of the support."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

Array = np.ndarray


@dataclass(frozen=True)
class CostFunction:
    """Scalar cost f with gradient, both vectorized over rows.

    ``eval`` maps an (N, d) array to (N,); ``grad`` maps (N, d) to (N, d).
    The pair is checked against central finite differences on construction
    unless ``validate=False``.
    """

    eval: Callable[[Array], Array]
    grad: Callable[[Array], Array]
    dim: int = 1
    validate: bool = True
    check_points: Array | None = None

    def __post_init__(self):
        if self.validate:
            check_gradient(self)

    def __call__(self, z) -> Array:
        return np.asarray(self.eval(_rows(z, self.dim)), dtype=float).reshape(-1)

    def gradient(self, z) -> Array:
        return np.asarray(self.grad(_rows(z, self.dim)), dtype=float).reshape(-1, self.dim)


def _rows(z, dim):
    z = np.asarray(z, dtype=float)
    if z.ndim == 0:
        return z.reshape(1, 1)
    if z.ndim == 1:
        return z[:, None] if dim == 1 else z[None, :]
    return z


def check_gradient(cost: CostFunction, step: float = 1e-5, rtol: float = 1e-5,
                   atol: float = 1e-7, n_points: int = 8):
    """Raise ValueError when ``cost.grad`` disagrees with finite differences."""
    if cost.check_points is not None:
        pts = _rows(cost.check_points, cost.dim)
    else:
        rs = np.random.default_rng(12345)
        pts = rs.uniform(-2.0, 6.0, size=(n_points, cost.dim))
    g = np.asarray(cost.grad(pts), dtype=float).reshape(-1, cost.dim)
    fd = np.empty_like(g)
    for j in range(cost.dim):
        e = np.zeros(cost.dim)
        e[j] = step
        fd[:, j] = (np.asarray(cost.eval(pts + e)) - np.asarray(cost.eval(pts - e))) / (2 * step)
    if not np.allclose(g, fd, rtol=rtol, atol=atol):
        worst = int(np.argmax(np.abs(g - fd).max(axis=1)))
        raise ValueError(
            f"cost gradient disagrees with finite differences at {pts[worst]}: "
            f"{g[worst]} vs {fd[worst]}"
        )


def elementwise(f: Callable[[Array], Array], df: Callable[[Array], Array],
                **kwargs) -> CostFunction:
    """Separable cost sum_i f(z_i) built from a scalar function and its derivative."""
    return CostFunction(
        eval=lambda z: f(z).sum(axis=1),
        grad=lambda z: df(z),
        **kwargs,
    )


def quadratic(center: float = 0.0, dim: int = 1) -> CostFunction:
    """f(z) = sum_i (z_i - center)^2."""
    return elementwise(lambda z: (z - center) ** 2, lambda z: 2.0 * (z - center), dim=dim)


def linear(slope=1.0, offset: float = 0.0, dim: int = 1) -> CostFunction:
    a = np.broadcast_to(np.asarray(slope, dtype=float), (dim,))
    return CostFunction(
        eval=lambda z: z @ a + offset,
        grad=lambda z: np.broadcast_to(a, z.shape).copy(),
        dim=dim,
    )


def constant(value: float = 0.0, dim: int = 1) -> CostFunction:
    return CostFunction(
        eval=lambda z: np.full(z.shape[0], float(value)),
        grad=lambda z: np.zeros_like(z, dtype=float),
        dim=dim,
    )
