"""Command-line front end.

Every subcommand writes CSV (plus a JSON sidecar where noted).  Exit status
is 0 on success, 1 on input errors and 2 when a noise region is numerically
null.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .data import Dataset, format_float, read_dataset
from .estimator import (ZERO_MEAN, EmptyEventError, MonteCarloConfig, NoisyEvent,
                        conditional_variances, evaluate_many, fit_exact, fit_noisy,
                        mc_conditional_mean_oracle, noisy_standard_error, sample_prior)
from .functional import PointEval, functional_from_dict
from .kernel import BoxDomain, DimensionError, Kernel, OrderExceededError
from .linalg import assemble_gram
from .pde import (MANUFACTURED, PoissonProblem, RHS_SIGN_NOTE, convergence_study,
                  grid_errors, make_problem, solve_poisson)
from .quadrature import DEFAULT_ORDER, QuadratureError, QuadratureRule

log = logging.getLogger("kgi")

COMMANDS = ("interpolate", "noisy", "variance", "sample", "oracle", "poisson", "study")
STOCHASTIC = ("noisy", "sample", "oracle")

# option defaults, applied after --config values are merged in
DEFAULTS = {
    "kernel": "gaussian", "lengthscale": 1.0, "dim": 1, "geometry": "ball",
    "mc_draws": 200_000, "count": 1000, "grid_n": 101, "min_accepted": 1000,
}


class InputError(ValueError):
    pass


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON file with option values (flags win)")
    p.add_argument("--kernel", choices=["gaussian", "matern52", "brownian_min"])
    p.add_argument("--lengthscale", type=float)
    p.add_argument("--dim", type=int)
    p.add_argument("--data", help="CSV of functional,value rows")
    p.add_argument("--eval", help="CSV of functionals to evaluate at")
    p.add_argument("--out", help="output CSV path (stdout when omitted)")
    p.add_argument("--epsilon", type=float, help="noise margin (> 0)")
    p.add_argument("--geometry", choices=["ball", "cube"])
    p.add_argument("--seed", type=int)
    p.add_argument("--mc-draws", dest="mc_draws", type=int)
    p.add_argument("--min-accepted", dest="min_accepted", type=int)
    p.add_argument("--quad-order", dest="quad_order", type=int)
    p.add_argument("--dump-gram", dest="dump_gram", help="write the Gram matrix as CSV")
    p.add_argument("--count", type=int, help="number of prior draws (sample)")
    p.add_argument("--lower", help="comma-separated lower box corner (variance grid)")
    p.add_argument("--upper", help="comma-separated upper box corner (variance grid)")
    p.add_argument("--grid-n", dest="grid_n", type=int, help="grid points per dimension")
    p.add_argument("--case", help="manufactured case name for poisson")
    p.add_argument("--n1", type=int)
    p.add_argument("--n2", type=int)
    p.add_argument("--r", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kgi", description="Kernel-based generalized interpolation")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        _common(sub.add_parser(name))
    return parser


def _merge_config(args: argparse.Namespace) -> argparse.Namespace:
    cfg = {}
    if args.config:
        try:
            cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read config {args.config}: {exc}") from exc
    args.raw_config = cfg
    if isinstance(cfg.get("kernel"), dict):
        k = cfg["kernel"]
        cfg = {**cfg, "kernel": k.get("family"), "lengthscale": k.get("lengthscale"),
               "dim": k.get("dimension")}
    for key, value in cfg.items():
        key = key.replace("-", "_")
        if hasattr(args, key) and getattr(args, key) is None and value is not None:
            setattr(args, key, value)
    for key, value in DEFAULTS.items():
        if getattr(args, key) is None:
            setattr(args, key, value)
    if args.quad_order is None:
        env = os.environ.get("KGI_QUAD_ORDER")
        args.quad_order = int(env) if env else DEFAULT_ORDER
    return args


def _validate(args):
    if args.command in STOCHASTIC and args.seed is None:
        raise InputError(f"{args.command} requires --seed")
    if args.command in ("noisy", "oracle"):
        if args.epsilon is None:
            raise InputError(f"{args.command} requires --epsilon")
        if not args.epsilon > 0:
            raise InputError(f"epsilon must be > 0, got {args.epsilon}")
    if args.command in ("interpolate", "noisy", "variance", "sample", "oracle") and not args.data:
        raise InputError(f"{args.command} requires --data")


def _kernel(args) -> Kernel:
    return Kernel(args.kernel, float(args.lengthscale), int(args.dim))


def _mc(args) -> MonteCarloConfig:
    return MonteCarloConfig(seed=int(args.seed), max_draws=int(args.mc_draws),
                            min_accepted=min(int(args.min_accepted), int(args.mc_draws)))


def _emit(args, header_lines, columns, rows):
    buf = io.StringIO()
    for line in header_lines:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([format_float(v) if isinstance(v, (float, np.floating)) else v for v in row])
    if args.out:
        Path(args.out).write_text(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())


def _sidecar(args, payload: dict):
    if args.out:
        Path(str(args.out) + ".json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _fjson(L) -> str:
    return json.dumps(L.to_dict(), separators=(",", ":"))


def _dump_gram(args, gram):
    if args.dump_gram:
        np.savetxt(args.dump_gram, gram.A, delimiter=",", fmt="%.17g")


def _eval_functionals(args, data: Dataset):
    if args.eval:
        return list(read_dataset(args.eval, require_values=False).functionals)
    return list(data.functionals)


def _load(args, require_values=True) -> Dataset:
    data = read_dataset(args.data, require_values=require_values)
    if not len(data):
        raise InputError(f"{args.data} holds no functionals")
    return data


def cmd_interpolate(args):
    K, rule = _kernel(args), QuadratureRule(args.quad_order)
    data = _load(args)
    est = fit_exact(K, ZERO_MEAN, data.functionals, data.values, rule)
    _dump_gram(args, est.gram)
    tests = _eval_functionals(args, data)
    s = evaluate_many(est, tests)
    var, _ = conditional_variances(K, est.functionals, tests, rule, est.gram)
    _emit(args, [], ["functional", "estimate", "sigma"],
          [(_fjson(L), s[i], float(np.sqrt(var[i]))) for i, L in enumerate(tests)])
    _sidecar(args, est.to_dict())


def cmd_noisy(args):
    K, rule = _kernel(args), QuadratureRule(args.quad_order)
    data = _load(args)
    event = NoisyEvent(data.values, args.epsilon, args.geometry)
    cfg = _mc(args)
    est = fit_noisy(K, ZERO_MEAN, data.functionals, event, cfg, rule)
    _dump_gram(args, est.gram)
    tests = _eval_functionals(args, data)
    s = evaluate_many(est, tests)
    var, _ = conditional_variances(K, est.functionals, tests, rule, est.gram)
    p = est.provenance
    header = [f"seed={cfg.seed} method={p['method']} draws={p['draws']} accepted={p['accepted']} "
              f"acceptance_rate={format_float(p['acceptance_rate'])} ess={format_float(p['ess'])}"]
    rows = [(_fjson(L), s[i], float(np.sqrt(var[i])), noisy_standard_error(est, L))
            for i, L in enumerate(tests)]
    _emit(args, header, ["functional", "estimate", "sigma", "mc_se"], rows)
    _sidecar(args, est.to_dict())


def cmd_variance(args):
    K, rule = _kernel(args), QuadratureRule(args.quad_order)
    data = _load(args, require_values=False)
    if args.eval:
        tests = _eval_functionals(args, data)
    else:
        lower = [float(v) for v in str(args.lower).split(",")] if args.lower else [0.0] * K.dimension
        upper = [float(v) for v in str(args.upper).split(",")] if args.upper else [1.0] * K.dimension
        tests = [PointEval(x) for x in BoxDomain(tuple(lower), tuple(upper)).grid(int(args.grid_n))]
    gram = assemble_gram(K, list(data.functionals), rule)
    _dump_gram(args, gram)
    var, clamped = conditional_variances(K, list(data.functionals), tests, rule, gram)
    _emit(args, [], ["functional", "variance", "power", "clamped"],
          [(_fjson(L), var[i], float(np.sqrt(var[i])), int(clamped[i])) for i, L in enumerate(tests)])


def cmd_sample(args):
    K, rule = _kernel(args), QuadratureRule(args.quad_order)
    data = _load(args, require_values=False)
    cfg = _mc(args)
    gram = assemble_gram(K, list(data.functionals), rule)
    _dump_gram(args, gram)
    Z = sample_prior(K, ZERO_MEAN, data.functionals, cfg, int(args.count), rule, gram)
    header = [f"seed={cfg.seed} count={int(args.count)} rank={gram.rank}"]
    _emit(args, header, [f"L{i + 1}" for i in range(len(data))], [tuple(z) for z in Z])


def cmd_oracle(args):
    K, rule = _kernel(args), QuadratureRule(args.quad_order)
    data = _load(args)
    event = NoisyEvent(data.values, args.epsilon, args.geometry)
    cfg = _mc(args)
    est = fit_noisy(K, ZERO_MEAN, data.functionals, event, cfg, rule)
    tests = _eval_functionals(args, data)
    rows = []
    for L in tests:
        formula = evaluate_many(est, [L])[0]
        se_formula = noisy_standard_error(est, L)
        mc, se_mc = mc_conditional_mean_oracle(K, ZERO_MEAN, data.functionals, L, event, cfg, rule)
        se = float(np.hypot(se_mc, se_formula))
        z = (mc - formula) / se if se > 0 else 0.0
        rows.append((_fjson(L), mc, formula, se, z))
    p = est.provenance
    header = [f"seed={cfg.seed} draws={cfg.max_draws} eta_method={p['method']} "
              f"eta_acceptance_rate={format_float(p['acceptance_rate'])}"]
    _emit(args, header, ["functional", "estimate", "formula", "se", "z_score"], rows)


def _problem_from_config(cfg: dict, args) -> PoissonProblem:
    case_name = cfg.get("source") or args.case
    if case_name not in MANUFACTURED:
        raise InputError(f"unknown builtin case {case_name!r}; known: {sorted(MANUFACTURED)}")
    case = MANUFACTURED[case_name]()
    boundary = cfg.get("boundary", case_name)
    if boundary != case_name:
        raise InputError("boundary data must come from the same builtin case as the source")
    if "interior_sites" in cfg or "boundary_sites" in cfg:
        domain = BoxDomain.from_dict(cfg["domain"]) if "domain" in cfg else case.domain
        sites = tuple((s["x"], s["r"]) for s in cfg.get("interior_sites", []))
        Z = np.asarray(cfg.get("boundary_sites", []), dtype=float).reshape(-1, domain.dimension)
        return PoissonProblem(domain, case.source, case.solution, sites, Z, case.solution)
    n1 = cfg.get("n1", args.n1)
    n2 = cfg.get("n2", args.n2)
    if n1 is None or n2 is None:
        raise InputError("poisson needs interior/boundary sites or --n1/--n2")
    return make_problem(case, int(n1), int(n2), cfg.get("r", args.r))


def cmd_poisson(args):
    K, rule = _kernel(args), QuadratureRule(args.quad_order)
    problem = _problem_from_config(args.raw_config, args)
    if problem.domain.dimension != K.dimension:
        raise DimensionError("kernel and domain dimensions differ")
    est = solve_poisson(problem, K, ZERO_MEAN, rule)
    _dump_gram(args, est.gram)
    res = grid_errors(est, problem, int(args.grid_n))
    d = K.dimension
    cols = [f"x{i + 1}" for i in range(d)] + ["u_hat", "u_exact", "abs_err", "sigma"]
    rows = [tuple(res["points"][k]) + (res["approx"][k], res["exact"][k], res["error"][k], res["sigma"][k])
            for k in range(res["points"].shape[0])]
    _emit(args, [f"rhs_sign: {RHS_SIGN_NOTE}"], cols, rows)
    _sidecar(args, {**est.to_dict(), "max_err": float(res["error"].max()),
                    "sigma_max": float(res["sigma"].max())})


def cmd_study(args):
    K, rule = _kernel(args), QuadratureRule(args.quad_order)
    cfg = args.raw_config
    case_name = cfg.get("case") or args.case
    if case_name not in MANUFACTURED:
        raise InputError(f"unknown builtin case {case_name!r}")
    levels = cfg.get("levels")
    if not levels:
        raise InputError("study needs a 'levels' list in --config")
    report = convergence_study(MANUFACTURED[case_name](), K, levels, rule, int(args.grid_n))
    text = report.to_csv()
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


HANDLERS = {"interpolate": cmd_interpolate, "noisy": cmd_noisy, "variance": cmd_variance,
            "sample": cmd_sample, "oracle": cmd_oracle, "poisson": cmd_poisson, "study": cmd_study}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args = _merge_config(args)
        _validate(args)
        HANDLERS[args.command](args)
    except EmptyEventError as exc:
        print(f"kgi: empty event: {exc}", file=sys.stderr)
        return 2
    except (InputError, DimensionError, OrderExceededError, QuadratureError, ValueError,
            KeyError, OSError) as exc:
        print(f"kgi: error: {exc}", file=sys.stderr)
        return 1
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
