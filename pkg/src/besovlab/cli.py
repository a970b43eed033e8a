"""Command-line entry point.

Exit codes: 0 when every check passes, 1 when a verdict fails, 2 on usage
errors (including configurations that violate an estimate's hypotheses).

CSV outputs:
  weights.csv            k, t, e, omega
  norms_<name>.csv       t, k, block_norm
  hypothesis_trace.csv   t, h1, min_density, h1_margin, h2, min_ellipticity, h2_margin,
                         h3, h3_value, h3_margin, h4, h4_a, h4_a_margin, h4_u, h4_u_margin
JSON reports carry the fields lemma, params, trials, max_ratio, scale_drift, verdict.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from ._validation import HypothesisError

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _value(text):
    if "," in text:
        return tuple(_value(x) for x in text.split(",") if x)
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    if text.lower() in ("inf", "infinity"):
        return math.inf
    return text


def _params(items):
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ValueError(f"--param expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = _value(v.strip())
    return out


def _emit(args, payload, name):
    text = json.dumps(payload, indent=2, sort_keys=True)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, name), "w") as fh:
            fh.write(text + "\n")
    if args.json:
        print(text)


def _report_exit(args, report):
    _emit(args, report.as_dict(), f"{report.lemma}.json")
    if not args.json:
        print(report.line())
    return EXIT_OK if report.passed else EXIT_FAIL


def _campaign(args, lemma, params=None, trials=None):
    from .estimate_lab import CampaignConfig, campaign

    cfg = CampaignConfig(grid=args.grid, dim=args.dim, trials=trials or args.trials, seed=args.seed,
                         drift_bound=args.drift_bound, params=params or {})
    return _report_exit(args, campaign(lemma, cfg))


def _grid(args, default=128):
    from .fourier_field import Grid

    return Grid(args.dim, args.grid or default)


# subcommands

def cmd_partition_check(args):
    from .estimate_lab import FieldRecipe, generate
    from .fourier_field import lp_norm
    from .littlewood_paley import build_partition, delta_j, low_part

    grid = _grid(args)
    part = build_partition(grid)
    cov = part.covered()
    sum_err = float(np.abs(part.partition_sum()[cov] - 1.0).max())
    worst = 0.0
    for i in range(args.trials):
        f = generate(FieldRecipe(seed=args.seed + i, spectrum="powerlaw", j_cut=int(math.log2(grid.nyquist)) - 1), grid)
        f = f + 0.3
        rebuilt = low_part(f, part)
        for j in part.indices:
            rebuilt = rebuilt + delta_j(f, j, part)
        worst = max(worst, lp_norm(rebuilt - f, 2.0) / lp_norm(f, 2.0))
    ok = sum_err <= 1e-10 and worst <= 1e-10
    payload = dict(check="partition", grid=grid.resolution, dim=grid.dim, j_min=part.j_min, j_max=part.j_max,
                   partition_sum_error=sum_err, reconstruction_error=worst, trials=args.trials,
                   verdict="pass" if ok else "fail")
    _emit(args, payload, "partition.json")
    if not args.json:
        print(f"partition: {payload['verdict']} sum error {sum_err:.2e}, reconstruction error {worst:.2e}")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_bernstein(args):
    params = dict(p=args.p, q=args.q, gamma=tuple(args.gamma))
    return _campaign(args, "bernstein", params)


def cmd_bony(args):
    return _campaign(args, "bony")


def cmd_weights(args):
    from .weighted_besov import WeightSequence, write_weight_table

    w = WeightSequence(c=args.c, j_min=0, j_max=args.kmax)
    ts = args.times or [0.0, 1e-4, 1e-3, 1e-2, 0.1, 1.0]
    ks = list(range(0, args.kmax + 1))
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, "weights.csv")
    write_weight_table(w, ks, ts, path)
    if args.json:
        print(json.dumps(dict(c=args.c, kmax=args.kmax, times=ts, csv=path), indent=2, sort_keys=True))
    else:
        print(f"weights: wrote {len(ks) * len(ts)} rows to {path}")
    return EXIT_OK


def cmd_product(args):
    ids = {"linf": "product-linf", "product": "product", "endpoint": "product-endpoint"}
    if args.weighted:
        lemma = {"product": "product-weighted", "endpoint": "product-weighted-endpoint"}.get(args.law)
        if lemma is None:
            raise ValueError("the weighted product law exists for --law product or endpoint")
    else:
        lemma = ids[args.law]
    params = {k: v for k, v in (("s1", args.s1), ("s2", args.s2), ("p", args.p)) if v is not None}
    return _campaign(args, lemma, params)


def cmd_compose(args):
    params = {k: v for k, v in (("s", args.s), ("amplitude", args.amplitude)) if v is not None}
    return _campaign(args, "composition-weighted" if args.weighted else "composition", params)


def cmd_transport(args):
    return _campaign(args, "transport-weighted" if args.weighted else "transport")


def cmd_momentum(args):
    from .fourier_field import Grid
    from .linear_solvers import mode_decay_fit

    from .littlewood_paley import build_partition

    grid = Grid(args.dim, args.grid or 64)
    top = build_partition(grid).j_max - 2
    blocks = tuple(j for j in range(3, 7) if j <= top) or (top,)
    fit = mode_decay_fit(grid, args.mu, args.lam + 2 * args.mu, curl_free=not args.div_free, seed=args.seed,
                         blocks=blocks)
    payload = dict(check="mode-decay", grid=grid.resolution, mu=args.mu, lam=args.lam, c=fit.c,
                   per_block={str(k): v for k, v in fit.per_block.items()}, spread=fit.spread,
                   residual=fit.residual, warning=fit.warning,
                   verdict="pass" if fit.spread <= 0.1 else "fail")
    _emit(args, payload, "mode_decay.json")
    if not args.json:
        print(f"mode decay: {payload['verdict']} c = {fit.c:.4f}, spread {fit.spread:.2%}")
    status = EXIT_OK if fit.spread <= 0.1 else EXIT_FAIL
    if args.trials:
        code = _campaign(args, args.variant, trials=args.trials)
        status = max(status, code)
    return status


def _setup(args):
    from .cns_solver import load_config

    if not args.config:
        raise ValueError("this subcommand needs --config FILE")
    setup = load_config(args.config)
    return setup


def cmd_solve(args):
    from .cns_solver import run_scheme

    setup = _setup(args)
    run = run_scheme(setup.a0, setup.u0, setup.laws, setup.config)
    out = args.out or "run"
    run.write(out, timestamp=not args.no_timestamp)
    summary = dict(out=out, healthy_horizon=run.budget.T_star, first_breach=run.first_breach,
                   min_density=run.min_density, mass_drift=run.mass_drift,
                   first_failing_predicate=None if run.budget.first_failure is None else run.budget.first_failure.name)
    if args.json:
        print(json.dumps(summary, indent=2, sort_keys=True))
    else:
        print(f"solve: wrote {out}; min density {run.min_density:.4g}, mass drift {run.mass_drift:.2e}, "
              f"first breach {run.first_breach}")
    return EXIT_OK if run.first_breach is None else EXIT_FAIL


def cmd_uniqueness(args):
    from .cns_solver import run_scheme, uniqueness_distance
    from .estimate_lab import FieldRecipe, generate

    setup = _setup(args)
    grid = setup.grid
    cut = max(int(math.log2(grid.nyquist)) - 2, 0)
    recipe = FieldRecipe(seed=args.seed + 7919, spectrum="powerlaw", j_cut=cut, amplitude=args.perturb)
    pert = generate(recipe, grid) if args.perturb else None
    r1 = run_scheme(setup.a0, setup.u0, setup.laws, setup.config)
    a2 = setup.a0 if pert is None else setup.a0 + pert
    r2 = run_scheme(a2, setup.u0, setup.laws, setup.config)
    rep = uniqueness_distance(r1, r2, eps=args.eps)
    payload = rep.as_dict()
    ok = rep.osgood[1e-20] > 10 and math.isfinite(rep.growth)
    payload["verdict"] = "pass" if ok else "fail"
    _emit(args, payload, "uniqueness.json")
    if not args.json:
        print(f"uniqueness: {payload['verdict']} growth {rep.growth:.4g}, C_T {rep.C_T:.3e}, "
              f"Osgood integral at 1e-20 = {rep.osgood[1e-20]:.3f}")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_campaign(args):
    from .estimate_lab import registered

    if args.list:
        reg = registered()
        if args.json:
            print(json.dumps(reg, indent=2, sort_keys=True))
        else:
            for k, v in reg.items():
                print(f"{k:28s} {v}")
        return EXIT_OK
    if not args.lemma:
        raise ValueError("campaign needs a lemma id (see campaign --list)")
    if args.lemma not in registered():
        raise ValueError(f"unknown lemma id {args.lemma!r} (see campaign --list)")
    return _campaign(args, args.lemma, _params(args.param))


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--grid", type=int, default=None, help="points per axis")
    common.add_argument("--dim", type=int, default=2)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("--config", default=None, help="INI configuration file")
    common.add_argument("--json", action="store_true", help="print JSON to stdout")
    common.add_argument("--trials", type=int, default=100)
    common.add_argument("--drift-bound", type=float, default=0.15)

    parser = argparse.ArgumentParser(prog="besovlab", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("partition-check", parents=[common], help="partition of unity and reconstruction")
    p.set_defaults(func=cmd_partition_check, trials=50)

    p = sub.add_parser("bernstein", parents=[common], help="Bernstein inequality campaign")
    p.add_argument("--p", type=_value, default=2.0)
    p.add_argument("--q", type=_value, default=math.inf)
    p.add_argument("--gamma", type=int, nargs="+", default=[1, 0])
    p.set_defaults(func=cmd_bernstein)

    p = sub.add_parser("bony", parents=[common], help="exact paraproduct decomposition")
    p.set_defaults(func=cmd_bony)

    p = sub.add_parser("weights", parents=[common], help="CSV table of e_k(t) and omega_k(t)")
    p.add_argument("--c", type=float, default=1.0)
    p.add_argument("--kmax", type=int, default=20)
    p.add_argument("--times", type=float, nargs="*")
    p.set_defaults(func=cmd_weights)

    p = sub.add_parser("product", parents=[common], help="product law campaigns")
    p.add_argument("--law", choices=["linf", "product", "endpoint"], default="product")
    p.add_argument("--weighted", action="store_true")
    p.add_argument("--s1", type=float)
    p.add_argument("--s2", type=float)
    p.add_argument("--p", type=float)
    p.set_defaults(func=cmd_product)

    p = sub.add_parser("compose", parents=[common], help="composition law campaigns")
    p.add_argument("--weighted", action="store_true")
    p.add_argument("--s", type=float)
    p.add_argument("--amplitude", type=float)
    p.set_defaults(func=cmd_compose)

    p = sub.add_parser("transport", parents=[common], help="transport estimate campaign")
    p.add_argument("--weighted", action="store_true")
    p.set_defaults(func=cmd_transport, trials=20)

    p = sub.add_parser("momentum", parents=[common], help="block decay fit, optionally an estimate campaign")
    p.add_argument("--mu", type=float, default=1.0)
    p.add_argument("--lam", type=float, default=0.0)
    p.add_argument("--div-free", action="store_true")
    p.add_argument("--variant", choices=["momentum-a", "momentum-b", "momentum-endpoint"], default="momentum-a")
    p.set_defaults(func=cmd_momentum, trials=0)

    p = sub.add_parser("solve", parents=[common], help="nonlinear run from a config file")
    p.add_argument("--no-timestamp", action="store_true", help="omit the creation time from the manifest")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("uniqueness", parents=[common], help="distance between two nearby runs")
    p.add_argument("--perturb", type=float, default=1e-6)
    p.add_argument("--eps", type=float, default=0.25)
    p.set_defaults(func=cmd_uniqueness)

    p = sub.add_parser("campaign", parents=[common], help="estimate-ratio campaign for a registered lemma")
    p.add_argument("lemma", nargs="?")
    p.add_argument("--list", action="store_true")
    p.add_argument("--param", action="append", help="override a parameter, key=value")
    p.set_defaults(func=cmd_campaign)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except (HypothesisError, ValueError, KeyError, FileNotFoundError) as exc:
        print(f"besovlab {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE


def _entry():
    sys.exit(main())


if __name__ == "__main__":
    _entry()
