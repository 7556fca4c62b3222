"""Bounded linear functionals used as data sites.

A functional is one of :class:`PointEval`, :class:`DerivEval`,
:class:`WeakMollifier` or a finite :class:`Combination` of those.  For
computation every functional is expanded into *atoms*: weighted derivative
evaluations ``w * D^alpha(.)(y)``.  Weak functionals become atoms through the
ball quadrature rule, so the same expansion drives :func:`apply`,
:func:`riesz` and :func:`cov` and the three stay mutually consistent.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import sparse

from .kernel import DimensionError, Kernel, OrderExceededError, as_points
from .quadrature import (QuadratureError, QuadratureRule, ball_nodes_weights,
                         integrate_ball_support)

__all__ = [
    "Functional",
    "PointEval",
    "DerivEval",
    "WeakMollifier",
    "Combination",
    "FunctionHandle",
    "Mollifier",
    "MissingCapabilityError",
    "mollifier_kappa",
    "mollifier_value",
    "mollifier_gradient",
    "apply",
    "riesz",
    "riesz_matrix",
    "cov",
    "cross_cov",
    "functional_from_dict",
]


class MissingCapabilityError(ValueError):
    """The function handle cannot provide a derivative the functional needs."""


def _vec(x) -> tuple[float, ...]:
    return tuple(float(v) for v in np.atleast_1d(np.asarray(x, dtype=float)))


class Functional:
    """Base class; concrete functionals are frozen dataclasses."""

    @property
    def dimension(self) -> int:
        raise NotImplementedError

    @property
    def order(self) -> int:
        """Largest derivative order applied to a function."""
        raise NotImplementedError

    @property
    def has_weak(self) -> bool:
        return False

    def to_dict(self) -> dict:
        raise NotImplementedError

    def __add__(self, other):
        return Combination(((1.0, self), (1.0, other)))

    def __rmul__(self, w):
        return Combination(((float(w), self),))


@dataclass(frozen=True)
class PointEval(Functional):
    x: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "x", _vec(self.x))

    @property
    def dimension(self):
        return len(self.x)

    @property
    def order(self):
        return 0

    def to_dict(self):
        return {"type": "point", "x": list(self.x)}


@dataclass(frozen=True)
class DerivEval(Functional):
    x: tuple[float, ...]
    alpha: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "x", _vec(self.x))
        alpha = tuple(int(a) for a in np.atleast_1d(self.alpha))
        if len(alpha) != len(self.x):
            raise DimensionError(f"multi-index {alpha} does not match point dimension {len(self.x)}")
        if any(a < 0 for a in alpha):
            raise ValueError("multi-index entries must be non-negative")
        object.__setattr__(self, "alpha", alpha)

    @property
    def dimension(self):
        return len(self.x)

    @property
    def order(self):
        return sum(self.alpha)

    def to_dict(self):
        return {"type": "deriv", "x": list(self.x), "alpha": list(self.alpha)}


@dataclass(frozen=True)
class WeakMollifier(Functional):
    """``omega -> integral of grad(omega)(y) . grad(phi_r)(y - x) dy``."""

    x: tuple[float, ...]
    r: float

    def __post_init__(self):
        object.__setattr__(self, "x", _vec(self.x))
        if not self.r > 0:
            raise ValueError(f"mollifier radius must be positive, got {self.r}")
        object.__setattr__(self, "r", float(self.r))

    @property
    def dimension(self):
        return len(self.x)

    @property
    def order(self):
        return 1

    @property
    def has_weak(self):
        return True

    def to_dict(self):
        return {"type": "weak", "x": list(self.x), "r": self.r}


@dataclass(frozen=True)
class Combination(Functional):
    """Finite linear combination; nested combinations are flattened."""

    terms: tuple = field(default=())

    def __post_init__(self):
        flat = []
        for w, L in self.terms:
            if isinstance(L, Combination):
                flat.extend((float(w) * w2, L2) for w2, L2 in L.terms)
            elif isinstance(L, Functional):
                flat.append((float(w), L))
            else:
                raise TypeError(f"combination terms must be functionals, got {type(L).__name__}")
        dims = {L.dimension for _, L in flat}
        if len(dims) > 1:
            raise DimensionError(f"combination mixes dimensions {sorted(dims)}")
        object.__setattr__(self, "terms", tuple(flat))

    @property
    def dimension(self):
        return self.terms[0][1].dimension if self.terms else 0

    @property
    def order(self):
        return max((L.order for _, L in self.terms), default=0)

    @property
    def has_weak(self):
        return any(L.has_weak for _, L in self.terms)

    def to_dict(self):
        return {"type": "combo", "terms": [[w, L.to_dict()] for w, L in self.terms]}


def functional_from_dict(d: dict) -> Functional:
    kind = d.get("type")
    if kind == "point":
        return PointEval(d["x"])
    if kind == "deriv":
        return DerivEval(d["x"], d["alpha"])
    if kind == "weak":
        return WeakMollifier(d["x"], d["r"])
    if kind == "combo":
        return Combination(tuple((float(w), functional_from_dict(t)) for w, t in d["terms"]))
    raise ValueError(f"unknown functional type {kind!r}")


@dataclass(frozen=True)
class FunctionHandle:
    """A concrete function on R^d with optional derivatives.

    All callables are vectorized: they receive points of shape ``(m, d)``.
    ``value`` and ``derivative(X, alpha)`` return ``(m,)``; ``gradient``
    returns ``(m, d)``.
    """

    value: Callable[[np.ndarray], np.ndarray]
    gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None
    derivative: Optional[Callable[[np.ndarray, tuple], np.ndarray]] = None

    def eval_deriv(self, X: np.ndarray, alpha: tuple[int, ...]) -> np.ndarray:
        k = sum(alpha)
        if k == 0:
            return np.asarray(self.value(X), dtype=float)
        if k == 1 and self.gradient is not None:
            return np.asarray(self.gradient(X), dtype=float)[:, alpha.index(1)]
        if self.derivative is not None:
            return np.asarray(self.derivative(X, alpha), dtype=float)
        raise MissingCapabilityError(f"function handle provides no derivative of order {alpha}")

    @classmethod
    def kernel_section(cls, K: Kernel, x) -> "FunctionHandle":
        """The function ``y -> K(x, y)`` with exact derivatives."""
        x = as_points(x, K.dimension).reshape(-1)

        def derivative(Y, alpha):
            return K.deriv(None, alpha, x, Y)

        def gradient(Y):
            eye = np.eye(K.dimension, dtype=int)
            return np.stack([K.deriv(None, tuple(e), x, Y) for e in eye], axis=-1)

        return cls(value=lambda Y: K(x, Y), gradient=gradient, derivative=derivative)


# ---------------------------------------------------------------------------
# mollifiers

_KAPPA_CHECK_ORDER = 64


@functools.lru_cache(maxsize=8)
def _kappa(dim: int, order: int) -> float:
    def bump(Y):
        s = np.sum(Y * Y, axis=-1)
        return np.where(s < 1.0, np.exp(-1.0 / np.where(s < 1.0, 1.0 - s, 1.0)), 0.0)

    rule = QuadratureRule(order)
    coarse = integrate_ball_support(bump, np.zeros(dim), 1.0, rule)
    fine = integrate_ball_support(bump, np.zeros(dim), 1.0, rule.refined())
    if abs(fine - coarse) > 1e-8 * abs(fine):
        raise QuadratureError(f"mollifier normalization did not converge ({coarse} vs {fine})")
    return 1.0 / fine


def mollifier_kappa(dim: int, rule: Optional[QuadratureRule] = None) -> float:
    """Constant making the unit bump integrate to one over R^d (d in {1, 2})."""
    if dim not in (1, 2):
        raise ValueError("mollifiers are implemented for d in {1, 2}")
    order = _KAPPA_CHECK_ORDER if rule is None else max(rule.order_per_dim, _KAPPA_CHECK_ORDER)
    return _kappa(dim, order)


@dataclass(frozen=True)
class Mollifier:
    """``phi(x) = kappa * exp(-1 / (1 - |x|^2))`` on the unit ball, zero outside."""

    dimension: int
    kappa: float = 0.0

    def __post_init__(self):
        if self.kappa <= 0.0:
            object.__setattr__(self, "kappa", mollifier_kappa(self.dimension))

    def value(self, x, r: float = 1.0) -> np.ndarray:
        x = as_points(x, self.dimension) / r
        s = np.sum(x * x, axis=-1)
        inside = s < 1.0
        gap = np.where(inside, 1.0 - s, 1.0)
        return np.where(inside, self.kappa * np.exp(-1.0 / gap), 0.0) / r ** self.dimension

    def gradient(self, x, r: float = 1.0) -> np.ndarray:
        x = as_points(x, self.dimension) / r
        s = np.sum(x * x, axis=-1)
        inside = s < 1.0
        gap = np.where(inside, 1.0 - s, 1.0)
        scale = np.where(inside, -2.0 * self.kappa * np.exp(-1.0 / gap) / gap ** 2, 0.0)
        return scale[..., None] * x / r ** (self.dimension + 1)


@functools.lru_cache(maxsize=4)
def _mollifier(dim: int) -> Mollifier:
    return Mollifier(dim)


def mollifier_value(m: Mollifier, x, r: float) -> np.ndarray:
    """``phi_r(x) = r^-d phi(x / r)``."""
    if not r > 0:
        raise ValueError("r must be positive")
    return m.value(x, r)


def mollifier_gradient(m: Mollifier, x, r: float) -> np.ndarray:
    if not r > 0:
        raise ValueError("r must be positive")
    return m.gradient(x, r)


# ---------------------------------------------------------------------------
# atom expansion

@dataclass
class _Atoms:
    """Per multi-index: nodes ``(m, d)`` and a sparse ``(m, n)`` weight matrix."""

    n: int
    groups: dict


def _atom_list(L: Functional, rule: QuadratureRule, weight: float, out: dict, col: int):
    if isinstance(L, PointEval):
        key = (0,) * L.dimension
        out.setdefault(key, []).append((np.asarray(L.x)[None, :], np.array([weight]), col))
    elif isinstance(L, DerivEval):
        out.setdefault(L.alpha, []).append((np.asarray(L.x)[None, :], np.array([weight]), col))
    elif isinstance(L, WeakMollifier):
        d = L.dimension
        nodes, qw = ball_nodes_weights(rule, L.x, L.r)
        grad = _mollifier(d).gradient(nodes - np.asarray(L.x), L.r)
        for i in range(d):
            key = tuple(int(j == i) for j in range(d))
            out.setdefault(key, []).append((nodes, weight * qw * grad[:, i], col))
    elif isinstance(L, Combination):
        for w, term in L.terms:
            _atom_list(term, rule, weight * w, out, col)
    else:
        raise TypeError(f"not a functional: {L!r}")


def _expand(Ls: Sequence[Functional], rule: QuadratureRule) -> _Atoms:
    raw: dict = {}
    for j, L in enumerate(Ls):
        _atom_list(L, rule, 1.0, raw, j)
    groups = {}
    for alpha, parts in raw.items():
        nodes = np.concatenate([p[0] for p in parts], axis=0)
        vals = np.concatenate([p[1] for p in parts])
        cols = np.concatenate([np.full(p[1].size, p[2]) for p in parts])
        rows = np.arange(vals.size)
        W = sparse.csr_matrix((vals, (rows, cols)), shape=(vals.size, len(Ls)))
        groups[alpha] = (nodes, W)
    return _Atoms(len(Ls), groups)


def _check_dims(K: Kernel, Ls: Sequence[Functional]):
    for L in Ls:
        if isinstance(L, Combination) and not L.terms:
            continue
        if L.dimension != K.dimension:
            raise DimensionError(f"functional of dimension {L.dimension} used with a "
                                 f"{K.dimension}-d kernel")
        if L.order > K.smoothness_order:
            raise OrderExceededError(f"functional of order {L.order} exceeds the "
                                     f"{K.family} kernel smoothness {K.smoothness_order}")


_CHUNK_ELEMENTS = 2_000_000


def _cross(K: Kernel, A: _Atoms, B: _Atoms) -> np.ndarray:
    out = np.zeros((A.n, B.n))
    for alpha, (NA, WA) in A.groups.items():
        WAt = WA.T.tocsr()
        for beta, (NB, WB) in B.groups.items():
            step = max(1, _CHUNK_ELEMENTS // max(1, NB.shape[0]))
            for s in range(0, NA.shape[0], step):
                block = K.deriv(alpha, beta, NA[s:s + step, None, :], NB[None, :, :])
                # (n_a x c) @ ((c x m_b) @ (m_b x n_b))
                out += WAt[:, s:s + step] @ np.asarray((WB.T @ block.T).T)
    return out


def cross_cov(K: Kernel, Ls1: Sequence[Functional], Ls2: Sequence[Functional],
              rule: QuadratureRule = QuadratureRule()) -> np.ndarray:
    """Matrix of ``Ker(L1_i, L2_j) = L1_i,x L2_j,y K(x, y)``."""
    _check_dims(K, Ls1)
    _check_dims(K, Ls2)
    return _cross(K, _expand(Ls1, rule), _expand(Ls2, rule))


def cov(K: Kernel, L1: Functional, L2: Functional, rule: QuadratureRule = QuadratureRule()) -> float:
    return float(cross_cov(K, [L1], [L2], rule)[0, 0])


def riesz_matrix(K: Kernel, X, Ls: Sequence[Functional],
                 rule: QuadratureRule = QuadratureRule()) -> np.ndarray:
    """Rows ``(L_1,y K(x, y), ..., L_n,y K(x, y))`` for every point ``x`` in ``X``."""
    X = as_points(X, K.dimension).reshape(-1, K.dimension)
    return cross_cov(K, [PointEval(x) for x in X], Ls, rule)


def riesz(K: Kernel, L: Functional, x, rule: QuadratureRule = QuadratureRule()) -> float:
    """``L`` applied to the second kernel argument, ``L_y K(x, y)``."""
    return cov(K, PointEval(as_points(x, K.dimension).reshape(-1)), L, rule)


def apply(L: Functional, f: FunctionHandle, rule: QuadratureRule = QuadratureRule()) -> float:
    """Action ``<f, L>`` of a functional on a concrete function."""
    return float(apply_many([L], f, rule)[0])


def apply_many(Ls: Sequence[Functional], f: FunctionHandle,
               rule: QuadratureRule = QuadratureRule()) -> np.ndarray:
    atoms = _expand(Ls, rule)
    out = np.zeros(atoms.n)
    for alpha, (nodes, W) in atoms.groups.items():
        vals = f.eval_deriv(nodes, alpha)
        if not np.all(np.isfinite(vals)):
            raise QuadratureError("function handle returned a non-finite value")
        out += W.T @ vals
    return out
