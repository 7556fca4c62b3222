"""Kernel collocation for the Poisson problem ``Lap u = f``, ``u = g`` on a box.

Interior data are weak mollified functionals ``L_(x,r) u = int grad u . grad phi_r(. - x)``,
boundary data are point evaluations.  Integration by parts gives
``L_(x,r) u = -int f phi_r(. - x)`` for a solution ``u``; the interior
right-hand side therefore carries a minus sign.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .estimator import ZERO_MEAN, Estimator, MeanElement, conditional_variances, fit_exact, evaluate_many
from .functional import FunctionHandle, Functional, PointEval, WeakMollifier, _mollifier
from .kernel import BoxDomain, Kernel
from .quadrature import QuadratureRule, integrate_ball_support

__all__ = [
    "PoissonProblem",
    "CollocationSystem",
    "ManufacturedCase",
    "ScheduleError",
    "RHS_SIGN_NOTE",
    "MANUFACTURED",
    "weak_rhs",
    "build_collocation",
    "solve_poisson",
    "grid_errors",
    "equispaced_interior",
    "make_problem",
    "convergence_study",
    "StudyReport",
]

RHS_SIGN_NOTE = "interior data = -int f phi_r (integration by parts)"


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class ManufacturedCase:
    """A closed-form solution with its source and boundary data."""

    name: str
    domain: BoxDomain
    solution: FunctionHandle
    source: FunctionHandle


def _sin_pi_1d() -> ManufacturedCase:
    pi = np.pi
    u = FunctionHandle(lambda X: np.sin(pi * X[:, 0]),
                       gradient=lambda X: pi * np.cos(pi * X[:, :1]))
    f = FunctionHandle(lambda X: -pi * pi * np.sin(pi * X[:, 0]))
    return ManufacturedCase("sin_pi_1d", BoxDomain.unit(1), u, f)


def _sin_sin_2d() -> ManufacturedCase:
    pi = np.pi

    def grad(X):
        sx, sy = np.sin(pi * X[:, 0]), np.sin(pi * X[:, 1])
        cx, cy = np.cos(pi * X[:, 0]), np.cos(pi * X[:, 1])
        return pi * np.stack([cx * sy, sx * cy], axis=-1)

    u = FunctionHandle(lambda X: np.sin(pi * X[:, 0]) * np.sin(pi * X[:, 1]), gradient=grad)
    f = FunctionHandle(lambda X: -2 * pi * pi * np.sin(pi * X[:, 0]) * np.sin(pi * X[:, 1]))
    return ManufacturedCase("sin_sin_2d", BoxDomain.unit(2), u, f)


MANUFACTURED = {"sin_pi_1d": _sin_pi_1d, "sin_sin_2d": _sin_sin_2d}


@dataclass(frozen=True)
class PoissonProblem:
    domain: BoxDomain
    source: FunctionHandle
    boundary: FunctionHandle
    interior_sites: tuple = ()
    boundary_sites: np.ndarray = field(default_factory=lambda: np.zeros((0, 1)))
    solution: Optional[FunctionHandle] = None

    def __post_init__(self):
        d = self.domain.dimension
        sites = tuple((tuple(float(v) for v in np.atleast_1d(x)), float(r))
                      for x, r in self.interior_sites)
        for x, r in sites:
            if len(x) != d:
                raise ValueError(f"interior site {x} does not match domain dimension {d}")
            if not r > 0 or not self.domain.ball_inside(x, r):
                raise ValueError(f"ball B({x}, {r}) is not inside the domain")
        Z = np.asarray(self.boundary_sites, dtype=float).reshape(-1, d)
        for z in Z:
            if not self.domain.on_boundary(z):
                raise ValueError(f"boundary site {z} is not on the domain boundary")
        object.__setattr__(self, "interior_sites", sites)
        object.__setattr__(self, "boundary_sites", Z)


@dataclass(frozen=True)
class CollocationSystem:
    functionals: list
    values: np.ndarray
    blocks: dict

    @property
    def n(self) -> int:
        return len(self.functionals)


def weak_rhs(problem: PoissonProblem, x, r: float, rule: QuadratureRule = QuadratureRule()) -> float:
    """``-int f(y) phi_r(y - x) dy``, the value of ``L_(x,r)`` on the solution."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    moll = _mollifier(x.size)
    h = integrate_ball_support(lambda Y: problem.source.value(Y) * moll.value(Y - x, r), x, r, rule)
    return -h


def build_collocation(problem: PoissonProblem, rule: QuadratureRule = QuadratureRule()) -> CollocationSystem:
    """Interior weak functionals first, boundary point evaluations second."""
    Ls: list[Functional] = [WeakMollifier(x, r) for x, r in problem.interior_sites]
    vals = [weak_rhs(problem, x, r, rule) for x, r in problem.interior_sites]
    n1 = len(Ls)
    Z = problem.boundary_sites
    Ls += [PointEval(z) for z in Z]
    if Z.shape[0]:
        vals += list(np.asarray(problem.boundary.value(Z), dtype=float))
    blocks = {"interior": range(0, n1), "boundary": range(n1, len(Ls))}
    return CollocationSystem(Ls, np.asarray(vals, dtype=float), blocks)


def solve_poisson(problem: PoissonProblem, K: Kernel, mean: MeanElement = ZERO_MEAN,
                  rule: QuadratureRule = QuadratureRule()) -> Estimator:
    """Kernel-based approximate solution; evaluate it with point functionals."""
    if K.smoothness_order < 1:
        raise ValueError("the weak functionals need a kernel with at least first derivatives")
    system = build_collocation(problem, rule)
    est = fit_exact(K, mean, system.functionals, system.values, rule)
    est.provenance.update({"pde": "poisson_dirichlet", "rhs_sign": RHS_SIGN_NOTE,
                           "n1": len(system.blocks["interior"]),
                           "n2": len(system.blocks["boundary"])})
    return est


def equispaced_interior(domain: BoxDomain, n1: int) -> np.ndarray:
    """``m`` points per axis at ``lower + i (upper-lower)/(m+1)``; ``n1 = m^d``."""
    d = domain.dimension
    m = int(round(n1 ** (1.0 / d)))
    if m ** d != n1:
        raise ScheduleError(f"n1={n1} is not a perfect {d}-th power")
    axes = [a + (b - a) * np.arange(1, m + 1) / (m + 1) for a, b in zip(domain.lower, domain.upper)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in mesh], axis=-1)


def make_problem(case: ManufacturedCase, n1: int, n2: int, r: Optional[float] = None) -> PoissonProblem:
    """Problem on a manufactured case with equispaced interior and boundary sites.

    The default radius is half the interior spacing.
    """
    dom = case.domain
    X = equispaced_interior(dom, n1) if n1 else np.zeros((0, dom.dimension))
    if r is None:
        spacing = min((b - a) for a, b in zip(dom.lower, dom.upper)) / (round(n1 ** (1 / dom.dimension)) + 1)
        r = 0.5 * spacing
    if n2 == 0:
        Z = np.zeros((0, dom.dimension))
    elif dom.dimension == 1:
        if n2 != 2:
            raise ScheduleError("a 1-d box has exactly two boundary sites")
        Z = dom.boundary_sites(2)
    else:
        if n2 % 4:
            raise ScheduleError("2-d boundary site counts must be multiples of 4")
        Z = dom.boundary_sites(n2 // 4 + 1)
    return PoissonProblem(dom, case.source, case.solution, tuple((x, r) for x in X), Z, case.solution)


def grid_errors(est: Estimator, problem: PoissonProblem, n_per_dim: int = 101,
                with_sigma: bool = True) -> dict:
    """Evaluate the approximation on a uniform grid."""
    X = problem.domain.grid(n_per_dim)
    pts = [PointEval(x) for x in X]
    approx = evaluate_many(est, pts)
    out = {"points": X, "approx": approx}
    if problem.solution is not None:
        exact = problem.solution.value(X)
        out["exact"] = exact
        out["error"] = np.abs(approx - exact)
    if with_sigma:
        var, _ = conditional_variances(est.kernel, est.functionals, pts, est.rule, est.gram)
        out["sigma"] = np.sqrt(var)
    return out


@dataclass
class StudyReport:
    rows: list

    HEADER = ("level", "n1", "n2", "r", "max_err", "sigma_max")

    def column(self, name: str) -> np.ndarray:
        return np.array([row[name] for row in self.rows])

    def to_csv(self) -> str:
        lines = [",".join(self.HEADER)]
        for row in self.rows:
            lines.append(f"{row['level']},{row['n1']},{row['n2']},{row['r']!r},"
                         f"{row['max_err']!r},{row['sigma_max']!r}")
        return "\n".join(lines) + "\n"


def _check_schedule(schedule):
    if len(schedule) < 3:
        raise ScheduleError("a convergence study needs at least three levels")
    for prev, cur in zip(schedule, schedule[1:]):
        if cur["n1"] < prev["n1"] or cur["n2"] < prev["n2"]:
            raise ScheduleError("site counts must not decrease across levels")
        if cur.get("r") is not None and prev.get("r") is not None and cur["r"] > prev["r"]:
            raise ScheduleError("mollifier radius must not increase across levels")


def convergence_study(case: ManufacturedCase, K: Kernel, schedule: Sequence[dict],
                      rule: QuadratureRule = QuadratureRule(), grid_n: int = 101,
                      min_decay: Optional[float] = None) -> StudyReport:
    """Solve on every level and tabulate max grid error and max power function.

    ``schedule`` entries are dicts with ``n1``, ``n2`` and optional ``r``.
    With ``min_decay`` set and a refining schedule, raise unless the final
    error is at most ``first_error / min_decay``.
    """
    schedule = [dict(s) for s in schedule]
    _check_schedule(schedule)
    rows = []
    for level, entry in enumerate(schedule):
        problem = make_problem(case, entry["n1"], entry["n2"], entry.get("r"))
        est = solve_poisson(problem, K, ZERO_MEAN, rule)
        res = grid_errors(est, problem, grid_n)
        r = problem.interior_sites[0][1] if problem.interior_sites else float("nan")
        rows.append({"level": level, "n1": entry["n1"], "n2": entry["n2"], "r": r,
                     "max_err": float(res["error"].max()), "sigma_max": float(res["sigma"].max())})
    report = StudyReport(rows)
    refining = any(a != b for a, b in zip(schedule, schedule[1:]))
    if min_decay is not None and refining:
        first, last = rows[0]["max_err"], rows[-1]["max_err"]
        if not last * min_decay <= first:
            raise ScheduleError(f"final error {last:.3e} did not improve on {first:.3e} "
                                f"by a factor {min_decay}")
    return report
