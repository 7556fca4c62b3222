"""Positive definite base kernels with closed-form mixed partial derivatives.

Every kernel acts on arrays of points whose last axis is the spatial
dimension; leading axes broadcast.  ``deriv(alpha, beta, x, y)`` returns
``D_x^alpha D_y^beta K(x, y)``.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.polynomial import hermite_e

__all__ = [
    "Kernel",
    "BoxDomain",
    "DimensionError",
    "OrderExceededError",
    "kernel_eval",
    "kernel_deriv",
    "as_points",
]

FAMILIES = ("gaussian", "matern52", "brownian_min")
_SMOOTHNESS = {"gaussian": 4, "matern52": 2, "brownian_min": 0}


class DimensionError(ValueError):
    pass


class OrderExceededError(ValueError):
    pass


def as_points(x, dim: int) -> np.ndarray:
    """Coerce ``x`` to a float array whose last axis has length ``dim``.

    In one dimension a bare scalar or a flat array of coordinates is accepted
    and gets a trailing axis.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1)
    if x.shape[-1] != dim:
        if dim == 1:
            return x[..., None]
        raise DimensionError(f"expected points of dimension {dim}, got shape {x.shape}")
    return x


def _multi_index(alpha, dim: int) -> tuple[int, ...]:
    if alpha is None:
        return (0,) * dim
    alpha = tuple(int(a) for a in np.atleast_1d(alpha))
    if len(alpha) != dim:
        raise DimensionError(f"multi-index {alpha} does not match dimension {dim}")
    if any(a < 0 for a in alpha):
        raise ValueError(f"multi-index entries must be non-negative, got {alpha}")
    return alpha


@dataclass(frozen=True)
class Kernel:
    """A symmetric positive definite kernel on a subset of R^d.

    Parameters
    ----------
    family : {"gaussian", "matern52", "brownian_min"}
    lengthscale : float
        Ignored by ``brownian_min``.
    dimension : int
    """

    family: str = "gaussian"
    lengthscale: float = 1.0
    dimension: int = 1

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}; choose from {FAMILIES}")
        if int(self.dimension) != self.dimension or self.dimension < 1:
            raise ValueError(f"dimension must be a positive integer, got {self.dimension}")
        if self.family != "brownian_min" and not self.lengthscale > 0:
            raise ValueError(f"lengthscale must be positive, got {self.lengthscale}")
        if self.family == "brownian_min" and self.dimension != 1:
            raise ValueError("brownian_min is only defined for dimension 1")

    @property
    def smoothness_order(self) -> int:
        return _SMOOTHNESS[self.family]

    def to_dict(self) -> dict:
        return {"family": self.family, "lengthscale": float(self.lengthscale),
                "dimension": int(self.dimension)}

    @classmethod
    def from_dict(cls, d: dict) -> "Kernel":
        return cls(family=d["family"], lengthscale=float(d.get("lengthscale", 1.0)),
                   dimension=int(d.get("dimension", 1)))

    def __call__(self, x, y) -> np.ndarray:
        return self.deriv(None, None, x, y)

    def deriv(self, alpha, beta, x, y) -> np.ndarray:
        d = self.dimension
        alpha = _multi_index(alpha, d)
        beta = _multi_index(beta, d)
        if sum(alpha) > self.smoothness_order or sum(beta) > self.smoothness_order:
            raise OrderExceededError(
                f"{self.family} kernel supports derivative order <= {self.smoothness_order} "
                f"per argument, got {alpha} and {beta}")
        x = as_points(x, d)
        y = as_points(y, d)
        if self.family == "gaussian":
            return _gaussian_deriv(alpha, beta, x, y, self.lengthscale)
        if self.family == "matern52":
            gamma = tuple(a + b for a, b in zip(alpha, beta))
            sign = -1.0 if sum(beta) % 2 else 1.0
            return sign * _matern52_deriv(gamma, x - y, self.lengthscale)
        if np.any(x < 0) or np.any(y < 0):
            raise ValueError("brownian_min is only defined on [0, inf)")
        return np.minimum(x, y)[..., 0]


def _gaussian_deriv(alpha, beta, x, y, ell):
    # separable: prod_i (-1)^alpha_i ell^-k_i He_k_i(t_i / ell) * exp(-|t|^2 / 2 ell^2)
    t = (x - y) / ell
    out = np.exp(-0.5 * np.sum(t * t, axis=-1))
    for i, (a, b) in enumerate(zip(alpha, beta)):
        k = a + b
        if k == 0:
            continue
        coef = np.zeros(k + 1)
        coef[k] = 1.0
        factor = (-1.0) ** a * ell ** (-k)
        out = out * (factor * hermite_e.hermeval(t[..., i], coef))
    return out


@functools.lru_cache(maxsize=None)
def _radial_terms(gamma: tuple[int, ...]) -> tuple[tuple[int, tuple[tuple[tuple[int, ...], float], ...]], ...]:
    """Expand D^gamma psi(|h|^2 / 2) as sum_k psi^(k)(|h|^2/2) * p_k(h)."""
    dim = len(gamma)
    zero = (0,) * dim
    terms: dict[int, dict[tuple[int, ...], float]] = {0: {zero: 1.0}}
    for i, g in enumerate(gamma):
        for _ in range(g):
            new: dict[int, dict[tuple[int, ...], float]] = {}
            for k, poly in terms.items():
                for mono, c in poly.items():
                    if mono[i] > 0:
                        m = mono[:i] + (mono[i] - 1,) + mono[i + 1:]
                        new.setdefault(k, {})
                        new[k][m] = new[k].get(m, 0.0) + c * mono[i]
                    m = mono[:i] + (mono[i] + 1,) + mono[i + 1:]
                    new.setdefault(k + 1, {})
                    new[k + 1][m] = new[k + 1].get(m, 0.0) + c
            terms = new
    return tuple((k, tuple((m, c) for m, c in poly.items() if c != 0.0))
                 for k, poly in sorted(terms.items()))


def _matern52_psi(k: int, r: np.ndarray, ell: float) -> np.ndarray:
    """k-th derivative of the Matern-5/2 profile with respect to t = r^2/2."""
    a = math.sqrt(5.0) / ell
    e = np.exp(-a * r)
    if k == 0:
        return (1.0 + a * r + (a * r) ** 2 / 3.0) * e
    if k == 1:
        return -(a * a / 3.0) * (1.0 + a * r) * e
    if k == 2:
        return (a ** 4 / 3.0) * e
    if k == 3:
        return -(a ** 5 / 3.0) * e / r
    if k == 4:
        return (a ** 5 / 3.0) * (1.0 + a * r) * e / r ** 3
    raise OrderExceededError("Matern-5/2 profile derivatives are implemented up to order 4")


def _matern52_deriv(gamma, h, ell):
    r = np.sqrt(np.sum(h * h, axis=-1))
    tiny = r < 1e-100
    r_safe = np.where(tiny, 1.0, r)
    out = np.zeros(r.shape)
    for k, poly in _radial_terms(gamma):
        p = np.zeros(r.shape)
        for mono, c in poly:
            p = p + c * np.prod(h ** np.asarray(mono), axis=-1)
        term = p * _matern52_psi(k, r_safe if k >= 3 else r, ell)
        if k >= 3:
            # the polynomial factor vanishes faster than psi^(k) blows up
            term = np.where(tiny, 0.0, term)
        out = out + term
    return out


def kernel_eval(K: Kernel, x, y) -> np.ndarray:
    """``K(x, y)``; returns a scalar array for single points."""
    return K(x, y)


def kernel_deriv(K: Kernel, alpha, beta, x, y) -> np.ndarray:
    """Mixed partial ``D_x^alpha D_y^beta K(x, y)`` from closed forms."""
    return K.deriv(alpha, beta, x, y)


@dataclass(frozen=True)
class BoxDomain:
    """Axis-aligned box ``[lower, upper]`` in R^d."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lower))
        hi = tuple(float(v) for v in np.atleast_1d(self.upper))
        if len(lo) != len(hi):
            raise DimensionError("box corners differ in dimension")
        if any(a >= b for a, b in zip(lo, hi)):
            raise ValueError("box requires lower[i] < upper[i] for every i")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def unit(cls, dim: int) -> "BoxDomain":
        return cls((0.0,) * dim, (1.0,) * dim)

    @property
    def dimension(self) -> int:
        return len(self.lower)

    def to_dict(self) -> dict:
        return {"lower": list(self.lower), "upper": list(self.upper)}

    @classmethod
    def from_dict(cls, d: dict) -> "BoxDomain":
        return cls(tuple(d["lower"]), tuple(d["upper"]))

    def contains(self, x, tol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= np.asarray(self.lower) - tol) and np.all(x <= np.asarray(self.upper) + tol))

    def on_boundary(self, x, tol: float = 1e-12) -> bool:
        x = np.asarray(x, dtype=float)
        lo, hi = np.asarray(self.lower), np.asarray(self.upper)
        if not self.contains(x, tol):
            return False
        return bool(np.any(np.abs(x - lo) <= tol) or np.any(np.abs(x - hi) <= tol))

    def ball_inside(self, x, r: float) -> bool:
        """True when the closed ball ``B(x, r)`` lies in the box."""
        x = np.asarray(x, dtype=float)
        return bool(np.all(x - r >= np.asarray(self.lower)) and np.all(x + r <= np.asarray(self.upper)))

    def grid(self, n: int = 101) -> np.ndarray:
        axes = [np.linspace(a, b, n) for a, b in zip(self.lower, self.upper)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def boundary_sites(self, n_per_edge: int) -> np.ndarray:
        """Boundary collocation points.

        In 1-D the two endpoints.  In 2-D ``n_per_edge`` equispaced points on
        every edge, corners included once.
        """
        if self.dimension == 1:
            return np.array([[self.lower[0]], [self.upper[0]]])
        if self.dimension != 2:
            raise DimensionError("boundary sites are implemented for d in {1, 2}")
        if n_per_edge < 2:
            raise ValueError("need at least the two corners per edge")
        (x0, y0), (x1, y1) = self.lower, self.upper
        t = np.linspace(0.0, 1.0, n_per_edge)[:-1]
        edges = [
            np.stack([x0 + t * (x1 - x0), np.full_like(t, y0)], axis=-1),
            np.stack([np.full_like(t, x1), y0 + t * (y1 - y0)], axis=-1),
            np.stack([x1 - t * (x1 - x0), np.full_like(t, y1)], axis=-1),
            np.stack([np.full_like(t, x0), y1 - t * (y1 - y0)], axis=-1),
        ]
        return np.concatenate(edges, axis=0)
