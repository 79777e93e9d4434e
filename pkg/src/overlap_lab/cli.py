"""Command-line entry point: ``overlap-lab <subcommand> [options]``.

Exit status is 0 iff every pass flag of the run is true.
"""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import harness as hx
from . import limit_densities as ld
from .ensembles import EnsembleSpec, sample
from .flow import flow_invariant_report, trajectory
from .gauss_divisible import gauss_scalars
from .girko_stats import (ApproxOverlapParams, LeastSVConfig, approx_overlap_trial, least_sv_trial,
                          sv_overlap_scan, tail_curve, sv_overlap_exceedance, within_tolerance)
from .hermitization import hermitize
from .rng import trial_rng
from .self_consistent import eta_table


def _complex(text: str) -> complex:
    return complex(text.replace(" ", ""))


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x]


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x]


def _global(args, key, default):
    v = getattr(args, key, None)
    if v is not None:
        return v
    return args.config_data.get(key, default)


def _dim(args, default):
    return args.n if args.n is not None else args.config_data.get("N", default)


def _experiment_config(args, **overrides) -> hx.ExperimentConfig:
    base = dict(args.config_data)
    base.update({k: v for k, v in overrides.items() if v is not None})
    for key, attr in (("seed", "seed"), ("trials", "trials"), ("N", "n"), ("beta", "beta")):
        v = getattr(args, attr)
        if v is not None:
            base[key] = v
    base["threads"] = hx.resolve_threads(args.threads if args.threads is not None else base.get("threads"))
    if args.out is not None:
        base["out"] = args.out
    return hx.ExperimentConfig.from_dict(base)


def _finish(ds: hx.Dataset, args, stem: str | None = None) -> int:
    if args.out:
        for p in hx.emit(ds, args.out, stem):
            print(p, file=sys.stderr)
    else:
        sys.stdout.write(hx.to_csv(ds.columns, ds.rows))
    print(json.dumps(hx._jsonable({"kind": ds.kind, "passed": ds.passed, **ds.summaries}), sort_keys=True),
          file=sys.stderr)
    return 0 if ds.passed else 1


# ---------------------------------------------------------------------------
# subcommands


def cmd_overlap_dist(args):
    cfg = _experiment_config(args, kind="overlap-density", regime="bulk", z0=args.z0, r=args.r,
                             entry_law=args.law, t=args.t, ks_threshold=args.ks_threshold)
    return _finish(hx.run_overlap_experiment(cfg), args)


def cmd_edge_dist(args):
    cfg = _experiment_config(args, kind="overlap-density", regime="edge", z0=args.z0, r=args.r,
                             entry_law=args.law, t=args.t, ks_threshold=args.ks_threshold)
    return _finish(hx.run_overlap_experiment(cfg), args, "edge-density")


def cmd_chalker_mehlig(args):
    cfg = _experiment_config(args, kind="chalker-mehlig", entry_law=args.law)
    return _finish(hx.run_chalker_mehlig(cfg), args)


def cmd_det_approx(args):
    cfg = _experiment_config(args, kind="det-approx", slack=args.slack,
                             z_grid=tuple(args.z_grid) if args.z_grid else None)
    return _finish(hx.run_det_approx_experiment(cfg), args)


def cmd_least_sv(args):
    N = _dim(args, 512)
    beta = _global(args, "beta", 2)
    seed = _global(args, "seed", 0)
    cfg = LeastSVConfig(beta=beta, N=N, z0=args.z0, r=args.r, etas=tuple(args.etas or ()),
                        trials=_global(args, "trials", 400), seed=seed, entry_law=args.law, slack=args.slack)
    threads = hx.resolve_threads(args.threads)
    per_trial = hx.map_trials(lambda k: least_sv_trial(cfg, k), cfg.trials, threads)
    mins = np.array([m for _, m in per_trial])
    curve = tail_curve(mins, cfg.eta_grid(), N, beta, cfg.slack, cfg.confidence)
    cols = ["N", "beta", "z0", "eta", "seed", "count", "trials", "p_hat", "wilson_low", "wilson_high",
            "bound", "passed"]
    rows = [[N, beta, complex(cfg.z0), p.eta, seed, p.count, p.trials, p.p_hat, p.wilson_low, p.wilson_high,
             p.bound, p.passed] for p in curve]
    vac = sum(1 for c, _ in per_trial if c == 0)
    z0 = complex(cfg.z0)
    ds = hx.Dataset("least-sv", {**vars(cfg), "z0": [z0.real, z0.imag], "kind": "least-sv"}, cols, rows,
                    {"vacuous_trials": vac, "valid_trials": cfg.trials - vac}, all(p.passed for p in curve))
    return _finish(ds, args)


def cmd_sv_scan(args):
    N = _dim(args, 1000)
    beta = _global(args, "beta", 2)
    seed = _global(args, "seed", 0)
    X = sample(EnsembleSpec(beta, N, args.law, seed), 0, trial_rng(seed, 0))
    H = hermitize(X, args.z)
    ms = args.ms or [1, 10, 100, N]
    scans = sv_overlap_scan(H, ms)
    kmax = N // 2
    exc = sv_overlap_exceedance(H, kmax, args.slack * N**0.1, args.c1)
    cols = ["N", "beta", "z", "seed", "m", "spread"]
    rows = [[N, beta, complex(args.z), seed, s.m, s.spread] for s in scans]
    series = {f"m{s.m}": (["abs_lambda", "lambda", "overlap"], [list(r) for r in s.rows()]) for s in scans}
    ds = hx.Dataset("sv-scan", {"kind": "sv-scan", "N": N, "beta": beta, "z": [args.z.real, args.z.imag],
                                "seed": seed, "ms": ms, "slack": args.slack, "c1": args.c1},
                    cols, rows, {"exceedance": exc, "max_exceedance": args.max_exceedance},
                    exc <= args.max_exceedance, series)
    return _finish(ds, args)


def cmd_approx_overlap(args):
    N = _dim(args, 128)
    beta = _global(args, "beta", 2)
    seed = _global(args, "seed", 0)
    trials = _global(args, "trials", 10)
    params = ApproxOverlapParams(N, args.eps, args.zeta, "bulk")
    rows, good = [], 0
    for k in range(trials):
        X = sample(EnsembleSpec(beta, N, args.law, seed), k, trial_rng(seed, k))
        for zn, o, approx in approx_overlap_trial(X, params, args.z0, args.r):
            ok = within_tolerance(approx, o, N, args.rtol)
            good += ok
            rows.append([N, beta, complex(args.z0), params.eta, seed, k, zn, o, approx, int(ok)])
    frac = good / len(rows) if rows else 0.0
    ds = hx.Dataset("approx-overlap", {"kind": "approx-overlap", "N": N, "beta": beta, "seed": seed,
                                       "eps": args.eps, "zeta": args.zeta, "r": args.r, "trials": trials},
                    ["N", "beta", "z0", "eta", "seed", "trial", "z", "O", "O_approx", "within"], rows,
                    {"fraction_within": frac, "required": args.min_fraction},
                    bool(rows) and frac >= args.min_fraction)
    return _finish(ds, args)


def cmd_flow_check(args):
    rep = flow_invariant_report(args.z0, args.w0, args.t, steps=args.steps)
    ok = rep.all_monotone and rep.int1_residual < 1e-6 and rep.max_solver_gap < 1e-8
    ds = hx.Dataset("flow-check", {"kind": "flow-check", "z0": [args.z0.real, args.z0.imag],
                                   "w0": [args.w0.real, args.w0.imag], "T": args.t, "steps": args.steps},
                    ["flag", "value"], [[k, int(v)] for k, v in rep.monotone.items()],
                    {"int1_residual": rep.int1_residual, "max_solver_gap": rep.max_solver_gap,
                     "int2_constants": {str(k): v for k, v in rep.int2_constants.items()}}, ok)
    return _finish(ds, args)


def cmd_flow(args):
    states = trajectory(args.z0, args.w0, args.t, steps=args.steps)
    print(json.dumps([s.as_dict() for s in states], indent=1))
    return 0


def cmd_density(args):
    grid = np.asarray(args.s_grid) if args.s_grid else np.geomspace(1e-2, 1e2, 200)
    beta = _global(args, "beta", 2)
    if args.regime == "bulk":
        vals = ld.rho_bulk_conditional(beta, grid)
        cdf = ld.bulk_conditional_cdf(beta, grid)
    else:
        vals = ld.rho_edge_conditional(beta, args.delta, grid)
        cdf = ld.cdf_tables(beta, "edge", args.delta)(grid)
    ds = hx.Dataset("density", {"kind": "density", "beta": beta, "regime": args.regime, "delta": args.delta},
                    ["s", "density", "cdf"], [[s, v, c] for s, v, c in zip(grid, vals, cdf)])
    return _finish(ds, args)


def cmd_msolve(args):
    etas = args.eta_grid or list(np.geomspace(1e-4, 10.0, 21))
    table = eta_table(args.z, etas, args.E)
    ds = hx.Dataset("msolve", {"kind": "msolve", "z": [args.z.real, args.z.imag], "E": args.E},
                    ["eta", "sigma", "rho", "u_re", "u_im"], table.tolist())
    return _finish(ds, args)


def cmd_gauss_scalars(args):
    N = _dim(args, 512)
    beta = _global(args, "beta", 2)
    seed = _global(args, "seed", 0)
    X = sample(EnsembleSpec(beta, N, args.law, seed), 0, trial_rng(seed, 0))
    g = gauss_scalars(hermitize(X, args.z), args.t)
    out = {"N": N, "beta": beta, "seed": seed, "z": [args.z.real, args.z.imag], "t": g.t, "theta": g.theta,
           "phi": g.phi, "sigma": g.sigma, "delta": g.delta, "eta": [g.eta.real, g.eta.imag],
           "traces": {"H1": g.traces.H1, "H2": g.traces.H2, "HHt": g.traces.HHt,
                      "HXH": [g.traces.HXH.real, g.traces.HXH.imag], "log_mean": g.traces.log_mean},
           "diagnostics": g.diagnostics}
    print(json.dumps(hx._jsonable(out), indent=1))
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int)
    common.add_argument("--trials", type=int)
    common.add_argument("--n", type=int, help="matrix dimension N")
    common.add_argument("--beta", type=int, choices=(1, 2))
    common.add_argument("--threads", type=int, help=f"worker threads (fallback: ${hx.THREADS_ENV})")
    common.add_argument("--out", help="output directory")
    common.add_argument("--config", help="JSON file of experiment parameters")

    p = argparse.ArgumentParser(prog="overlap-lab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        sp = sub.add_parser(name, parents=[common], help=help_)
        sp.set_defaults(fn=fn)
        return sp

    for name, fn, z0, help_ in (("overlap-dist", cmd_overlap_dist, 0.3, "bulk overlap density"),
                                ("edge-dist", cmd_edge_dist, 1.0, "edge overlap density")):
        sp = add(name, fn, help_)
        sp.add_argument("--z0", type=_complex, default=None, help=f"window centre (default {z0})")
        sp.add_argument("--r", type=float, default=None, help="window radius in units of N^-1/2")
        sp.add_argument("--law", default=None)
        sp.add_argument("--t", type=float, default=None, help="Gaussian component")
        sp.add_argument("--ks-threshold", type=float, default=None)
        sp.set_defaults(z0_default=z0)

    sp = add("chalker-mehlig", cmd_chalker_mehlig, "mean overlap profile in the bulk")
    sp.add_argument("--law", default=None)

    sp = add("det-approx", cmd_det_approx, "deterministic-approximation error envelopes")
    sp.add_argument("--slack", type=float, default=None)
    sp.add_argument("--z-grid", type=_floats, default=None)

    sp = add("least-sv", cmd_least_sv, "tail of the second-smallest singular value at eigenvalues")
    sp.add_argument("--z0", type=_complex, default=1.0)
    sp.add_argument("--r", type=float, default=3.0)
    sp.add_argument("--etas", type=_floats, default=None)
    sp.add_argument("--law", default="gaussian")
    sp.add_argument("--slack", type=float, default=20.0)

    sp = add("sv-scan", cmd_sv_scan, "singular-vector overlap scan")
    sp.add_argument("--z", type=_complex, default=1.0)
    sp.add_argument("--ms", type=_ints, default=None)
    sp.add_argument("--law", default="gaussian")
    sp.add_argument("--slack", type=float, default=20.0, help="multiplied by N^0.1")
    sp.add_argument("--c1", type=float, default=0.1)
    sp.add_argument("--max-exceedance", type=float, default=0.01)

    sp = add("approx-overlap", cmd_approx_overlap, "overlap recovered from resolvent integrals")
    sp.add_argument("--z0", type=_complex, default=0.0)
    sp.add_argument("--r", type=float, default=3.0)
    sp.add_argument("--eps", type=float, default=0.05)
    sp.add_argument("--zeta", type=float, default=0.01)
    sp.add_argument("--rtol", type=float, default=0.15)
    sp.add_argument("--min-fraction", type=float, default=0.8)
    sp.add_argument("--law", default="gaussian")

    for name, fn, help_ in (("flow-check", cmd_flow_check, "flow monotonicity and integral identities"),
                            ("flow", cmd_flow, "characteristic trajectory as JSON")):
        sp = add(name, fn, help_)
        sp.add_argument("--z0", type=_complex, default=0.5)
        sp.add_argument("--w0", type=_complex, default=1j)
        sp.add_argument("--t", type=float, default=0.5)
        sp.add_argument("--steps", type=int, default=100)

    sp = add("density", cmd_density, "limiting conditional overlap density")
    sp.add_argument("--regime", choices=("bulk", "edge"), default="bulk")
    sp.add_argument("--delta", type=float, default=0.0)
    sp.add_argument("--s-grid", type=_floats, default=None)

    sp = add("msolve", cmd_msolve, "table of m_z(E + i eta)")
    sp.add_argument("--z", type=_complex, default=0.5)
    sp.add_argument("--E", type=float, default=0.0)
    sp.add_argument("--eta-grid", type=_floats, default=None)

    sp = add("gauss-scalars", cmd_gauss_scalars, "scalars of a Gauss-divisible matrix")
    sp.add_argument("--z", type=_complex, default=0.3)
    sp.add_argument("--t", type=float, default=0.1)
    sp.add_argument("--law", default="gaussian")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args.config_data = {}
    if args.config:
        try:
            with open(args.config) as fh:
                args.config_data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            parser.error(f"cannot read config {args.config}: {exc}")
    if hasattr(args, "z0_default") and args.z0 is None and "z0" not in args.config_data:
        args.z0 = args.z0_default
    if getattr(args, "command", "") == "edge-dist":
        if args.r is None and "r" not in args.config_data:
            args.config_data["r"] = None
        if args.ks_threshold is None and "ks_threshold" not in args.config_data:
            args.ks_threshold = 0.08
    try:
        return args.fn(args)
    except (ValueError, ArithmeticError, RuntimeError, OSError) as exc:
        print(f"overlap-lab: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
