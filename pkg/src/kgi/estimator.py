"""Conditional-mean estimators for exact and noisy functional data.

With the Gaussian measure of mean ``mu`` and covariance ``Ker``, the
estimator at a functional ``L`` is ``L mu + b(L)^T c`` where ``c`` is the
minimum-norm least-squares solution of ``A c = rhs``.  For exact data
``rhs = f - L_n mu``; for noisy data ``rhs = eta - L_n mu`` with ``eta`` the
mean of the data block truncated to the noise region, estimated here by
seeded Monte Carlo.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .functional import DerivEval, Functional, FunctionHandle, PointEval, apply_many, cross_cov
from .kernel import Kernel
from .linalg import GramSystem, assemble_gram, gram_from_matrix, lambda_min_pos, pinv_apply
from .quadrature import QuadratureRule

log = logging.getLogger(__name__)

__all__ = [
    "MeanElement",
    "ZERO_MEAN",
    "NoisyEvent",
    "MonteCarloConfig",
    "EtaResult",
    "Estimator",
    "EmptyEventError",
    "VarianceInconsistencyError",
    "estimator_from_dict",
    "fit_exact",
    "fit_noisy",
    "evaluate",
    "evaluate_many",
    "conditional_variance",
    "conditional_variances",
    "sample_prior",
    "truncated_mean_eta",
    "coefficient_gap_bound",
    "mc_conditional_mean_oracle",
    "rkhs_norm_of_interpolant",
    "noisy_standard_error",
]


class EmptyEventError(RuntimeError):
    """The noise region carries (numerically) no prior mass."""


class VarianceInconsistencyError(ArithmeticError):
    """Conditional variance came out clearly negative."""


@dataclass(frozen=True)
class MeanElement:
    """Mean element of the measure: zero, or a concrete function handle."""

    handle: Optional[FunctionHandle] = None
    name: str = "zero"

    @property
    def is_zero(self) -> bool:
        return self.handle is None

    def values(self, Ls: Sequence[Functional], rule: QuadratureRule) -> np.ndarray:
        if self.is_zero or not Ls:
            return np.zeros(len(Ls))
        return apply_many(Ls, self.handle, rule)


ZERO_MEAN = MeanElement()


@dataclass(frozen=True)
class NoisyEvent:
    """Noise region ``values + eps * ball`` (Euclidean) or ``values + [-eps, eps]^n``."""

    values: np.ndarray
    epsilon: float
    geometry: str = "ball"

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float).reshape(-1))
        if not self.epsilon > 0:
            raise ValueError(f"noise margin epsilon must be > 0, got {self.epsilon}")
        if self.geometry not in ("ball", "cube"):
            raise ValueError(f"geometry must be 'ball' or 'cube', got {self.geometry!r}")

    def contains(self, Z: np.ndarray) -> np.ndarray:
        D = np.atleast_2d(Z) - self.values
        if self.geometry == "ball":
            return np.sum(D * D, axis=-1) <= self.epsilon ** 2
        return np.max(np.abs(D), axis=-1) <= self.epsilon

    def project(self, z: np.ndarray) -> np.ndarray:
        """Nearest point of the region."""
        d = z - self.values
        if self.geometry == "cube":
            return self.values + np.clip(d, -self.epsilon, self.epsilon)
        norm = np.linalg.norm(d)
        if norm <= self.epsilon:
            return z
        return self.values + d * (self.epsilon / norm)

    @property
    def diameter(self) -> float:
        if self.geometry == "ball":
            return 2.0 * self.epsilon
        return 2.0 * self.epsilon * math.sqrt(self.values.size)


@dataclass(frozen=True)
class MonteCarloConfig:
    seed: int
    max_draws: int = 200_000
    min_accepted: int = 1000
    importance_fallback: bool = True
    batch_size: int = 100_000

    def __post_init__(self):
        if self.min_accepted < 1:
            raise ValueError("min_accepted must be positive")
        if self.max_draws < self.min_accepted:
            raise ValueError("max_draws must be >= min_accepted")


@dataclass
class EtaResult:
    """Monte Carlo estimate of the truncated mean and its diagnostics."""

    eta: np.ndarray
    mean_cov: np.ndarray  # covariance matrix of the estimator of eta
    method: str
    draws: int
    accepted: int
    ess: float
    projected: bool = False

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.maximum(np.diag(self.mean_cov), 0.0))

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.draws if self.draws else 0.0

    def to_dict(self) -> dict:
        return {"eta": self.eta.tolist(), "se": self.se.tolist(), "method": self.method,
                "draws": self.draws, "accepted": self.accepted,
                "acceptance_rate": self.acceptance_rate, "ess": self.ess,
                "projected": self.projected}


@dataclass(eq=False)
class Estimator:
    kernel: Kernel
    mean: MeanElement
    functionals: list
    values: np.ndarray
    coefficients: np.ndarray
    gram: GramSystem
    rule: QuadratureRule = field(default_factory=QuadratureRule)
    provenance: dict = field(default_factory=lambda: {"kind": "exact"})
    eta: Optional[EtaResult] = None

    def __call__(self, L: Functional) -> float:
        return evaluate(self, L)

    def to_dict(self) -> dict:
        return {
            "kernel": self.kernel.to_dict(),
            "mean": self.mean.name,
            "functionals": [L.to_dict() for L in self.functionals],
            "values": self.values.tolist(),
            "coefficients": self.coefficients.tolist(),
            "quad_order": self.rule.order_per_dim,
            "gram": {"rank": self.gram.rank, "threshold": self.gram.threshold,
                     "lambda_min_pos": self.gram.lambda_min_pos if self.gram.rank else None},
            "provenance": self.provenance,
        }


def estimator_from_dict(d: dict, mean: Optional[MeanElement] = None) -> Estimator:
    """Rebuild an estimator from :meth:`Estimator.to_dict` output.

    A non-zero mean cannot be serialized; pass it back in as ``mean``.
    """
    from .functional import functional_from_dict

    if mean is None:
        if d.get("mean", "zero") != "zero":
            raise ValueError(f"mean element {d['mean']!r} must be supplied explicitly")
        mean = ZERO_MEAN
    K = Kernel.from_dict(d["kernel"])
    rule = QuadratureRule(int(d.get("quad_order", QuadratureRule().order_per_dim)))
    Ls = [functional_from_dict(t) for t in d["functionals"]]
    gram = assemble_gram(K, Ls, rule) if Ls else gram_from_matrix(np.zeros((0, 0)))
    return Estimator(K, mean, Ls, np.asarray(d["values"], dtype=float),
                     np.asarray(d["coefficients"], dtype=float), gram, rule,
                     dict(d.get("provenance", {})))


def _prepare(K, mean, Ls, rule, gram):
    Ls = list(Ls)
    if gram is None:
        gram = assemble_gram(K, Ls, rule) if Ls else gram_from_matrix(np.zeros((0, 0)))
    return Ls, gram, mean.values(Ls, rule)


def fit_exact(K: Kernel, mean: MeanElement, Ls: Sequence[Functional], f,
              rule: QuadratureRule = QuadratureRule(), gram: Optional[GramSystem] = None) -> Estimator:
    """Estimator conditioned on exact data ``L_i u = f_i``."""
    f = np.asarray(f, dtype=float).reshape(-1)
    if len(Ls) != f.size:
        raise ValueError(f"{len(Ls)} functionals but {f.size} data values")
    Ls, gram, zeta = _prepare(K, mean, Ls, rule, gram)
    c = pinv_apply(gram, f - zeta) if Ls else np.zeros(0)
    return Estimator(K, mean, Ls, f, c, gram, rule, {"kind": "exact"})


def evaluate_many(est: Estimator, Ls: Sequence[Functional]) -> np.ndarray:
    """``L mu + b(L)^T c`` for each functional."""
    Ls = list(Ls)
    out = est.mean.values(Ls, est.rule)
    if est.functionals and np.any(est.coefficients != 0.0):
        out = out + cross_cov(est.kernel, Ls, est.functionals, est.rule) @ est.coefficients
    return out


def evaluate(est: Estimator, L: Functional) -> float:
    return float(evaluate_many(est, [L])[0])


def _prior_variances(K: Kernel, tests: Sequence[Functional], rule: QuadratureRule) -> np.ndarray:
    out = np.empty(len(tests))
    simple = [i for i, L in enumerate(tests) if isinstance(L, (PointEval, DerivEval))]
    by_alpha: dict = {}
    for i in simple:
        L = tests[i]
        alpha = L.alpha if isinstance(L, DerivEval) else (0,) * K.dimension
        by_alpha.setdefault(alpha, []).append(i)
    for alpha, idx in by_alpha.items():
        X = np.array([tests[i].x for i in idx])
        out[idx] = K.deriv(alpha, alpha, X, X)
    for i in sorted(set(range(len(tests))) - set(simple)):
        out[i] = cross_cov(K, [tests[i]], [tests[i]], rule)[0, 0]
    return out


def conditional_variances(K: Kernel, Ls: Sequence[Functional], tests: Sequence[Functional],
                          rule: QuadratureRule = QuadratureRule(),
                          gram: Optional[GramSystem] = None) -> tuple[np.ndarray, np.ndarray]:
    """Conditional variances at ``tests`` and a mask of clamped entries.

    The square root of the variance is the generalized power function.
    """
    tests = list(tests)
    prior = _prior_variances(K, tests, rule)
    if not Ls:
        return prior, np.zeros(len(tests), dtype=bool)
    if gram is None:
        gram = assemble_gram(K, Ls, rule)
    B = cross_cov(K, tests, Ls, rule)
    E = gram.retained_vectors
    proj = (B @ E) / np.sqrt(gram.retained_values)
    raw = prior - np.sum(proj * proj, axis=1)
    bad = raw < -1e-8 * np.maximum(prior, np.finfo(float).tiny)
    if np.any(bad):
        raise VarianceInconsistencyError(
            f"conditional variance {raw[bad].min():.3e} is negative beyond round-off; "
            "check quadrature order and functional placement")
    clamped = raw < 0.0
    if np.any(clamped):
        log.debug("clamped %d slightly negative conditional variances", int(clamped.sum()))
    return np.maximum(raw, 0.0), clamped


def conditional_variance(K: Kernel, Ls: Sequence[Functional], L: Functional,
                         rule: QuadratureRule = QuadratureRule(),
                         gram: Optional[GramSystem] = None) -> float:
    """``Ker(L, L) - b(L)^T A^+ b(L)``, clamped at zero."""
    return float(conditional_variances(K, Ls, [L], rule, gram)[0][0])


def sample_prior(K: Kernel, mean: MeanElement, Ls: Sequence[Functional], cfg: MonteCarloConfig,
                 count: int, rule: QuadratureRule = QuadratureRule(),
                 gram: Optional[GramSystem] = None) -> np.ndarray:
    """``count`` draws of ``(L_1 omega, ..., L_n omega)`` under the prior."""
    Ls, gram, zeta = _prepare(K, mean, Ls, rule, gram)
    rng = np.random.default_rng(cfg.seed)
    return _draw(rng, gram, zeta, count)


def _draw(rng, gram: GramSystem, center: np.ndarray, count: int) -> np.ndarray:
    if gram.rank == 0:
        return np.tile(center, (count, 1))
    g = rng.standard_normal((count, gram.rank))
    return center + (g * np.sqrt(gram.retained_values)) @ gram.retained_vectors.T


def _weighted_mean(Z: np.ndarray, w: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    sw = w.sum()
    eta = (w @ Z) / sw
    D = (Z - eta) * (w / sw)[:, None]
    mean_cov = D.T @ D
    ess = sw * sw / np.sum(w * w)
    return eta, mean_cov, float(ess)


def _rejection(rng, gram, zeta, event, cfg):
    n = zeta.size
    s1 = np.zeros(n)
    s2 = np.zeros((n, n))
    accepted = 0
    drawn = 0
    while drawn < cfg.max_draws:
        m = min(cfg.batch_size, cfg.max_draws - drawn)
        Z = _draw(rng, gram, zeta, m)
        drawn += m
        D = Z[event.contains(Z)] - event.values
        accepted += D.shape[0]
        s1 += D.sum(axis=0)
        s2 += D.T @ D
    if accepted < 2:
        return None, drawn, accepted
    mean_d = s1 / accepted
    sample_cov = (s2 - accepted * np.outer(mean_d, mean_d)) / (accepted - 1)
    res = EtaResult(event.values + mean_d, sample_cov / accepted, "rejection", drawn, accepted,
                    float(accepted))
    return res, drawn, accepted


def _unit_ball_uniform(rng, m: int, dim: int) -> np.ndarray:
    g = rng.standard_normal((m, dim))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return g * rng.random((m, 1)) ** (1.0 / dim)


def _importance(rng, gram: GramSystem, zeta, event: NoisyEvent, cfg: MonteCarloConfig) -> EtaResult:
    """Self-normalized importance sampling on the affine support ``zeta + range(A)``.

    The proposal is centred at the projection of the noisy values onto the
    support and covers the section of the region by it.  In eigen-directions
    where the prior is narrow compared with the section it draws from the
    prior truncated to the section's extent; the remaining directions are
    uniform on the part of the section's ball those draws leave free.  The
    weights are the prior pseudo-density over the proposal density, up to a
    constant that cancels on normalization.
    """
    n, r = zeta.size, gram.rank
    if r == 0:
        if event.contains(zeta)[0]:
            return EtaResult(zeta.copy(), np.zeros((n, n)), "degenerate", 0, 0, math.inf)
        raise EmptyEventError("prior is a point mass outside the noise region")
    E, lam = gram.retained_vectors, gram.retained_values
    center = zeta + E @ (E.T @ (event.values - zeta))
    off2 = float(np.sum((event.values - center) ** 2))
    full_cube = event.geometry == "cube" and r == n
    if event.geometry == "ball":
        rad2 = event.epsilon ** 2 - off2
    else:
        rad2 = n * event.epsilon ** 2 - off2
    if not full_cube and rad2 <= 0.0:
        raise EmptyEventError("noise region does not meet the support of the prior")
    rad = math.sqrt(max(rad2, 0.0))
    y0 = E.T @ (center - zeta)
    tight = np.sqrt(lam) < 0.5 * rad
    wide = ~tight
    sd = np.sqrt(lam[tight])

    Zs, logws = [], []
    drawn = 0
    while drawn < cfg.max_draws:
        m = min(cfg.batch_size, cfg.max_draws - drawn)
        drawn += m
        if full_cube:
            Z = event.values + event.epsilon * (2.0 * rng.random((m, n)) - 1.0)
            Y = (Z - zeta) @ E
            logp = -0.5 * np.sum(Y * Y / lam, axis=1)
        else:
            Y = np.empty((m, r))
            left = np.full(m, rad)
            if tight.any():
                a, b = (y0[tight] - rad) / sd, (y0[tight] + rad) / sd
                Y[:, tight] = sd * stats.truncnorm.rvs(a, b, size=(m, int(tight.sum())), random_state=rng)
                if event.geometry == "ball":
                    # the wide block only needs to cover what the tight block leaves of the ball
                    left = np.sqrt(np.maximum(rad2 - np.sum((Y[:, tight] - y0[tight]) ** 2, axis=1), 0.0))
            n_wide = int(wide.sum())
            if n_wide:
                Y[:, wide] = y0[wide] + left[:, None] * _unit_ball_uniform(rng, m, n_wide)
            Z = zeta + Y @ E.T
            keep = event.contains(Z) & (left > 0)
            Z, Y, left = Z[keep], Y[keep], left[keep]
            logp = -0.5 * np.sum(Y[:, wide] ** 2 / lam[wide], axis=1) + n_wide * np.log(left)
        Zs.append(Z)
        logws.append(logp)
    Z = np.concatenate(Zs)
    logw = np.concatenate(logws)
    if Z.shape[0] == 0:
        raise EmptyEventError("importance proposal produced no points inside the region")
    w = np.exp(logw - logw.max())
    eta, mean_cov, ess = _weighted_mean(Z, w)
    if ess < cfg.min_accepted:
        raise EmptyEventError(f"importance fallback effective sample size {ess:.1f} "
                              f"is below {cfg.min_accepted}")
    return EtaResult(eta, mean_cov, "importance", drawn, Z.shape[0], ess)


def _eta(gram: GramSystem, zeta: np.ndarray, event: NoisyEvent, cfg: MonteCarloConfig) -> EtaResult:
    if event.values.size != zeta.size:
        raise ValueError(f"event has {event.values.size} values for {zeta.size} functionals")
    rng = np.random.default_rng(cfg.seed)
    if gram.rank == 0:
        return _importance(rng, gram, zeta, event, cfg)
    res, drawn, accepted = _rejection(rng, gram, zeta, event, cfg)
    if res is None or accepted < cfg.min_accepted or accepted < 1e-6 * drawn:
        if not cfg.importance_fallback:
            raise EmptyEventError(f"only {accepted} of {drawn} prior draws fell in the noise region")
        log.info("rejection accepted %d of %d draws; switching to importance sampling",
                 accepted, drawn)
        res = _importance(rng, gram, zeta, event, cfg)
    if not event.contains(res.eta)[0]:
        res.eta = event.project(res.eta)
        res.projected = True
    return res


def truncated_mean_eta(K: Kernel, mean: MeanElement, Ls: Sequence[Functional], event: NoisyEvent,
                       cfg: MonteCarloConfig, rule: QuadratureRule = QuadratureRule(),
                       gram: Optional[GramSystem] = None) -> EtaResult:
    """Mean of ``(L_1 omega, ..., L_n omega)`` conditioned to lie in the event region."""
    Ls, gram, zeta = _prepare(K, mean, Ls, rule, gram)
    return _eta(gram, zeta, event, cfg)


def fit_noisy(K: Kernel, mean: MeanElement, Ls: Sequence[Functional], event: NoisyEvent,
              cfg: MonteCarloConfig, rule: QuadratureRule = QuadratureRule(),
              gram: Optional[GramSystem] = None) -> Estimator:
    """Estimator conditioned on noisy data within margin ``event.epsilon``."""
    if len(Ls) != event.values.size:
        raise ValueError(f"{len(Ls)} functionals but {event.values.size} data values")
    Ls, gram, zeta = _prepare(K, mean, Ls, rule, gram)
    res = _eta(gram, zeta, event, cfg)
    c = pinv_apply(gram, res.eta - zeta)
    provenance = {"kind": "noisy", "epsilon": event.epsilon, "geometry": event.geometry,
                  "seed": cfg.seed, "max_draws": cfg.max_draws, **res.to_dict()}
    return Estimator(K, mean, Ls, event.values.copy(), c, gram, rule, provenance, res)


def noisy_standard_error(est: Estimator, L: Functional) -> float:
    """Monte Carlo standard error of ``evaluate(est, L)`` for a noisy fit."""
    if est.eta is None:
        return 0.0
    b = cross_cov(est.kernel, [L], est.functionals, est.rule)[0]
    beta = pinv_apply(est.gram, b)
    return float(math.sqrt(max(beta @ est.eta.mean_cov @ beta, 0.0)))


def coefficient_gap_bound(epsilon: float, G: GramSystem, geometry: str = "ball") -> float:
    """Upper bound on ``||c - c_noisy||_2``: region diameter over ``lambda_min``.

    The Euclidean ball has diameter ``2 eps``; the cube ``2 eps sqrt(n)``.
    """
    diameter = 2.0 * epsilon if geometry == "ball" else 2.0 * epsilon * math.sqrt(G.n)
    return diameter / lambda_min_pos(G)


def mc_conditional_mean_oracle(K: Kernel, mean: MeanElement, Ls: Sequence[Functional],
                               L: Functional, event: NoisyEvent, cfg: MonteCarloConfig,
                               rule: QuadratureRule = QuadratureRule()) -> tuple[float, float]:
    """Rejection-sampling estimate of ``E(S_L | S_Ln in region)`` and its standard error.

    Samples the joint normal of ``(S_L, S_L1, ..., S_Ln)`` directly, so it
    shares nothing with the truncated-mean formula path except the Gram
    entries.
    """
    joint = [L] + list(Ls)
    gram = assemble_gram(K, joint, rule)
    zeta = mean.values(joint, rule)
    # separate stream from the truncated-mean sampler so the two paths stay independent
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(1,)))
    s1 = s2 = 0.0
    accepted = drawn = 0
    while drawn < cfg.max_draws:
        m = min(cfg.batch_size, cfg.max_draws - drawn)
        Z = _draw(rng, gram, zeta, m)
        drawn += m
        hit = Z[event.contains(Z[:, 1:]), 0]
        accepted += hit.size
        s1 += hit.sum()
        s2 += float(hit @ hit)
    if accepted < cfg.min_accepted:
        raise EmptyEventError(f"oracle accepted only {accepted} of {drawn} joint draws")
    est = s1 / accepted
    var = max(s2 / accepted - est * est, 0.0) * accepted / (accepted - 1)
    return float(est), float(math.sqrt(var / accepted))


def rkhs_norm_of_interpolant(G: GramSystem, c) -> float:
    """``sqrt(c^T A c)``: the norm of ``sum_i c_i`` (Riesz element of ``L_i``)."""
    c = np.asarray(c, dtype=float)
    if c.size != G.n:
        raise ValueError("coefficient length does not match the Gram system")
    return float(math.sqrt(max(c @ G.A @ c, 0.0)))
