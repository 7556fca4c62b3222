"""Deterministic Gauss-Legendre quadrature on boxes and on balls.

Box integrals use a tensor-product rule mapped affinely to the box.  Ball
integrals (the supports of the mollifiers) use a polar rule: Gauss-Legendre in
the radius times a uniform rule on the unit sphere, which resolves the flat
edge of the mollifier far better than a cut-off box rule of the same size.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "QuadratureRule",
    "QuadratureError",
    "DEFAULT_ORDER",
    "nodes_weights",
    "ball_nodes_weights",
    "integrate_box",
    "integrate_ball_support",
]

DEFAULT_ORDER = 48


class QuadratureError(ValueError):
    """Raised for invalid rules or non-finite integrand values."""


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss-Legendre rule with ``order_per_dim`` nodes per direction.

    For ball supports the same number is used for the radial nodes and, in
    two dimensions, for the equispaced angular nodes.
    """

    order_per_dim: int = DEFAULT_ORDER
    kind: str = "gauss_legendre"

    def __post_init__(self):
        if int(self.order_per_dim) != self.order_per_dim or self.order_per_dim < 2:
            raise QuadratureError(f"order_per_dim must be an integer >= 2, got {self.order_per_dim}")
        if self.kind != "gauss_legendre":
            raise QuadratureError(f"unsupported quadrature kind {self.kind!r}")

    def refined(self) -> "QuadratureRule":
        return QuadratureRule(2 * self.order_per_dim, self.kind)


@functools.lru_cache(maxsize=64)
def _reference_rule(order: int, dim: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(order)
    grids = np.meshgrid(*([x] * dim), indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=-1)
    wgrids = np.meshgrid(*([w] * dim), indexing="ij")
    weights = np.prod(np.stack([g.ravel() for g in wgrids], axis=-1), axis=-1)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def nodes_weights(rule: QuadratureRule, lower, upper) -> tuple[np.ndarray, np.ndarray]:
    """Tensor-product nodes ``(order**d, d)`` and weights mapped to a box.

    Parameters
    ----------
    rule : QuadratureRule
    lower, upper : array_like
        Box corners; ``lower[i] < upper[i]``.
    """
    lower = np.atleast_1d(np.asarray(lower, dtype=float))
    upper = np.atleast_1d(np.asarray(upper, dtype=float))
    if lower.shape != upper.shape or lower.ndim != 1:
        raise QuadratureError("box corners must be 1-d arrays of equal length")
    if np.any(upper <= lower):
        raise QuadratureError("box must satisfy lower < upper in every coordinate")
    ref_x, ref_w = _reference_rule(rule.order_per_dim, lower.size)
    half = 0.5 * (upper - lower)
    nodes = lower + half * (ref_x + 1.0)
    weights = ref_w * np.prod(half)
    return nodes, weights


@functools.lru_cache(maxsize=64)
def _unit_ball_rule(order: int, dim: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(order)
    rho = 0.5 * (x + 1.0)
    wr = 0.5 * w * rho ** (dim - 1)
    if dim == 1:
        dirs = np.array([[1.0], [-1.0]])
        wd = np.array([1.0, 1.0])
    elif dim == 2:
        theta = 2.0 * np.pi * np.arange(order) / order
        dirs = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
        wd = np.full(order, 2.0 * np.pi / order)
    else:
        raise QuadratureError("ball rules are only available for d in {1, 2}")
    nodes = (rho[:, None, None] * dirs[None, :, :]).reshape(-1, dim)
    weights = (wr[:, None] * wd[None, :]).ravel()
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def ball_nodes_weights(rule: QuadratureRule, center, r: float) -> tuple[np.ndarray, np.ndarray]:
    """Polar nodes and weights for the ball ``B(center, r)`` (d = 1 or 2)."""
    center = np.atleast_1d(np.asarray(center, dtype=float))
    if not r > 0:
        raise QuadratureError(f"radius must be positive, got {r}")
    ref_x, ref_w = _unit_ball_rule(rule.order_per_dim, center.size)
    return center + r * ref_x, ref_w * r ** center.size


def _checked_sum(values, weights) -> float:
    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)):
        raise QuadratureError("integrand returned a non-finite value at a quadrature node")
    return float(np.dot(weights, values))


def integrate_box(f: Callable[[np.ndarray], np.ndarray], lower, upper,
                  rule: QuadratureRule = QuadratureRule()) -> float:
    """Integrate a vectorized integrand ``f(nodes) -> (m,)`` over a box."""
    nodes, weights = nodes_weights(rule, lower, upper)
    return _checked_sum(f(nodes), weights)


def integrate_ball_support(f: Callable[[np.ndarray], np.ndarray], center, r: float,
                           rule: QuadratureRule = QuadratureRule()) -> float:
    """Integrate ``f`` over ``B(center, r)``.

    Meant for integrands that vanish outside the ball (mollifier products);
    values outside the ball are never sampled.
    """
    nodes, weights = ball_nodes_weights(rule, center, r)
    return _checked_sum(f(nodes), weights)
