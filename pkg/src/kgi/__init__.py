"""Kernel-based generalized interpolation with Gaussian conditional means."""

__version__ = "0.1.0"

from .kernel import BoxDomain, Kernel, kernel_deriv, kernel_eval
from .quadrature import QuadratureRule
from .functional import (Combination, DerivEval, FunctionHandle, Mollifier, PointEval,
                         WeakMollifier, apply, cov, riesz)
from .linalg import GramSystem, assemble_b, assemble_gram, lambda_min_pos, pinv_apply
from .estimator import (ZERO_MEAN, EmptyEventError, Estimator, MeanElement, MonteCarloConfig,
                        NoisyEvent, coefficient_gap_bound, conditional_variance, evaluate,
                        fit_exact, fit_noisy, mc_conditional_mean_oracle,
                        rkhs_norm_of_interpolant, sample_prior, truncated_mean_eta)
from .pde import PoissonProblem, build_collocation, convergence_study, solve_poisson, weak_rhs

__all__ = [
    "BoxDomain", "Kernel", "kernel_deriv", "kernel_eval", "QuadratureRule",
    "Combination", "DerivEval", "FunctionHandle", "Mollifier", "PointEval", "WeakMollifier",
    "apply", "cov", "riesz", "GramSystem", "assemble_b", "assemble_gram", "lambda_min_pos",
    "pinv_apply", "ZERO_MEAN", "EmptyEventError", "Estimator", "MeanElement",
    "MonteCarloConfig", "NoisyEvent", "coefficient_gap_bound", "conditional_variance",
    "evaluate", "fit_exact", "fit_noisy", "mc_conditional_mean_oracle",
    "rkhs_norm_of_interpolant", "sample_prior", "truncated_mean_eta", "PoissonProblem",
    "build_collocation", "convergence_study", "solve_poisson", "weak_rhs",
]
