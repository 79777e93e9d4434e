"""Acceptance criteria 1-15 at their stated tolerances.

Each test writes a single pass/fail line; the Monte Carlo ones are marked slow.
"""
import time

import numpy as np
import pytest
from scipy.stats import unitary_group

from overlap_lab import harness as hx
from overlap_lab import limit_densities as ld
from overlap_lab.eigen_overlaps import (condition_number_probe, eigensystem, overlap_from_schur, overlap_matrix,
                                        partial_schur, reassemble)
from overlap_lab.ensembles import EnsembleSpec, sample
from overlap_lab.flow import crossing_time, flow_forward, flow_invariant_report, flow_inverse
from overlap_lab.girko_stats import (ApproxOverlapParams, LeastSVConfig, approx_overlap_trial, least_sv_trial,
                                     sv_overlap_scan, tail_curve, sv_overlap_exceedance, within_tolerance)
from overlap_lab.hermitization import hermitize, rigidity_report
from overlap_lab.rng import trial_rng
from overlap_lab.self_consistent import cubic_residual, density_gap, solve_m, stability

slow = pytest.mark.slow


def test_criterion_01_exact_identities(report):
    t0 = time.perf_counter()
    worst = dict(biorth=0.0, diag_min=np.inf, rowsum=0.0, unitary=0.0, schur=0.0)
    for beta in (1, 2):
        for N in (4, 8, 16, 32):
            X = sample(EnsembleSpec(beta, N, seed=101))
            E = eigensystem(X)
            O = overlap_matrix(E)
            worst["biorth"] = max(worst["biorth"], np.abs(E.L.conj().T @ E.R - np.eye(N)).max())
            worst["diag_min"] = min(worst["diag_min"], np.diag(O).real.min())
            worst["rowsum"] = max(worst["rowsum"], np.abs(O.sum(axis=1) - 1).max())
            Q = unitary_group.rvs(N, random_state=N + beta)
            E2 = eigensystem(Q @ X @ Q.conj().T)
            k = [int(np.argmin(np.abs(E2.values - z))) for z in E.values]
            worst["unitary"] = max(worst["unitary"], np.abs(O - overlap_matrix(E2)[np.ix_(k, k)]).max())
            for j in range(N):
                ps = partial_schur(X, j, E)
                worst["schur"] = max(worst["schur"], np.linalg.norm(reassemble(ps.z, ps.v, ps.w, ps.M) - X))
    elapsed = time.perf_counter() - t0
    ok = (worst["biorth"] <= 1e-8 and worst["diag_min"] >= 1 - 1e-12 and worst["rowsum"] <= 1e-8
          and worst["unitary"] <= 1e-6 and worst["schur"] <= 1e-8 and elapsed <= 1.0)
    detail = ", ".join(f"{k}={v:.2e}" for k, v in worst.items()) + f", {elapsed:.2f}s"
    assert report(1, "exact identities", ok, detail)


def test_criterion_02_schur_oracle(report):
    t0 = time.perf_counter()
    worst = 0.0
    for beta in (1, 2):
        for N in (4, 8, 32, 64):
            X = sample(EnsembleSpec(beta, N, seed=202))
            E = eigensystem(X)
            O = E.diagonal_overlaps()
            for j in range(N):
                ps = partial_schur(X, j, E)
                worst = max(worst, abs(overlap_from_schur(ps.z, ps.w, ps.M) / O[j] - 1))
    a = 2.0
    O2 = overlap_matrix(eigensystem(np.array([[0.0, a], [0.0, 1.0]])))
    two = abs(O2[0, 0] - (1 + a * a))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-8 and two <= 1e-8 and elapsed <= 10
    assert report(2, "overlap oracle equivalence", ok, f"max rel diff {worst:.2e}, 2x2 err {two:.1e}, {elapsed:.2f}s")


def test_criterion_03_condition_probe(report):
    t0 = time.perf_counter()
    worst = 0.0
    rng = np.random.default_rng(303)
    for k in range(20):
        X = sample(EnsembleSpec(2, 8, seed=303), k)
        n = int(rng.integers(8))
        speed, root = condition_number_probe(X, n)
        worst = max(worst, abs(speed / root - 1))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-3 and elapsed <= 5
    assert report(3, "condition-number probe", ok, f"max rel err {worst:.2e}, {elapsed:.2f}s")


def test_criterion_04_solver(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(404)
    res = ident = 0.0
    for _ in range(2000):
        z = rng.uniform(0, 1.6) * np.exp(2j * np.pi * rng.uniform())
        w = rng.uniform(-2, 2) + 1j * 10 ** rng.uniform(-3, 0.5)
        s = solve_m(z, w)
        res = max(res, abs(cubic_residual(s.m, z, w)))
        ident = max(ident, abs(1 - abs(z) ** 2 * s.u + s.m * (s.m + w)))
    rho0 = max(abs(solve_m(r, 1e-9j).rho - np.sqrt(1 - r * r)) for r in (0, 0.3, 0.7, 0.95))
    ratios = [density_gap(r) / (r - 1) ** 1.5 for r in np.linspace(1.05, 1.5, 10)]
    gap_ok = all(0.5 <= q <= 50 for q in ratios)
    phi_ok = True
    for _ in range(1000):
        z = rng.uniform(0, 1.5) * np.exp(2j * np.pi * rng.uniform())
        w = rng.uniform(-2, 2) + 1j * 10 ** rng.uniform(-4, 1)
        q = stability(z, w, w)
        phi_ok &= q.phi >= q.phi_lower - 1e-12
    elapsed = time.perf_counter() - t0
    ok = res < 1e-12 and ident < 1e-10 and rho0 <= 1e-8 and gap_ok and phi_ok and elapsed <= 5
    detail = (f"residual {res:.1e}, identity {ident:.1e}, rho(0) err {rho0:.1e}, "
              f"gap ratios [{min(ratios):.2f}, {max(ratios):.2f}], phi bound {phi_ok}, {elapsed:.2f}s")
    assert report(4, "self-consistent solver", ok, detail)


def test_criterion_05_flow(report):
    t0 = time.perf_counter()
    starts = [(0.5, 1j), (1.0, 1j), (1.0, 0.5j), (1.2, 0.3 + 0.6j), (0.2, -0.4 + 0.3j), (0.9, 2j)]
    scale = inv = int1 = 0.0
    flags = True
    for z0, w0 in starts:
        T = 0.9 * crossing_time(z0, w0)
        m0 = solve_m(z0, w0).m
        for t in np.linspace(0, T, 7):
            s = flow_forward(z0, w0, t)
            scale = max(scale, abs(solve_m(s.z, s.w).m - np.exp(t / 2) * m0))
            z, w = flow_inverse(s.z, s.w, t)
            inv = max(inv, abs(z - z0), abs(w - w0))
        rep = flow_invariant_report(z0, w0, T)
        flags &= rep.all_monotone
        int1 = max(int1, rep.int1_residual)
    elapsed = time.perf_counter() - t0
    ok = scale <= 1e-8 and flags and int1 < 1e-6 and inv <= 1e-10 and elapsed <= 5
    detail = f"scaling {scale:.1e}, monotone {flags}, int1 {int1:.1e}, inverse {inv:.1e}, {elapsed:.2f}s"
    assert report(5, "characteristic flow", ok, detail)


def test_criterion_06_densities(report):
    from scipy import integrate

    t0 = time.perf_counter()
    v_err = max(abs(ld.v_beta(2) - np.pi), abs(ld.v_beta(1) - 2 * np.sqrt(2 * np.pi)))
    bulk_err = abs(ld.rho_bulk(2, 1.0) - 1 / (np.pi * np.e))
    mom = 0.0
    for delta in (-8.0, -1.0, 0.0, 2.0):
        tab = ld.EdgeMomentTable.build(delta, 4)
        for k in range(5):
            q = integrate.quad(lambda x: x**k * np.exp(-x * x / 2), delta, np.inf, epsabs=1e-13, epsrel=1e-13)[0]
            mom = max(mom, abs(tab[k] - q))
    s = np.linspace(0.2, 3.0, 281)
    e2, e1 = ld.edge_to_bulk_limit_check(2, -8, s), ld.edge_to_bulk_limit_check(1, -8, s)
    g = lambda x: x * ld.rho_bulk_conditional(2, x)  # noqa: E731
    mean = integrate.quad(g, 0, 1, epsabs=1e-14)[0] + integrate.quad(g, 1, np.inf, epsabs=1e-14)[0]
    elapsed = time.perf_counter() - t0
    ok = (v_err <= 1e-12 and bulk_err <= 1e-12 and mom <= 1e-10 and e2 < 0.02 and e1 < 0.05
          and abs(mean - 1) <= 1e-6 and elapsed <= 5)
    detail = (f"v err {v_err:.1e}, rho_bulk(1) err {bulk_err:.1e}, moments err {mom:.1e}, "
              f"edge->bulk at -8: beta2 {e2:.2%} (<2%), beta1 {e1:.2%} (<5%), mean {mean:.8f}, {elapsed:.2f}s")
    assert report(6, "density evaluators", ok, detail)


@pytest.fixture(scope="module")
def bulk_gaussian():
    cfg = hx.ExperimentConfig(beta=2, N=512, trials=200, z0=0.3, r=5.0, seed=7, ks_threshold=0.05)
    return cfg, hx.overlap_records(cfg)


@slow
def test_criterion_07_bulk_universality(report, bulk_gaussian):
    t0 = time.perf_counter()
    cfg, rec = bulk_gaussian
    g = hx.run_overlap_experiment(cfg, rec)
    rad_cfg = hx.ExperimentConfig(beta=2, N=512, trials=200, z0=0.3, r=5.0, seed=8, entry_law="rademacher",
                                  ks_threshold=0.05)
    r = hx.run_overlap_experiment(rad_cfg)
    real_cfg = hx.ExperimentConfig(beta=1, N=256, trials=2000, z0=0.3, r=5.0, seed=9, ks_threshold=0.08)
    b1 = hx.run_overlap_experiment(real_cfg)
    parts = [(name, ds.summaries["ks"]) for name, ds in (("gaussian", g), ("rademacher", r), ("beta1-real", b1))]
    ok = all(k["statistic"] < k["threshold"] for _, k in parts)
    detail = "; ".join(f"{n} D={k['statistic']:.4f}/{k['threshold']} (n={k['n']})" for n, k in parts)
    detail += f"; mean S {g.summaries['mean_S']:.3f}; {time.perf_counter() - t0:.0f}s"
    assert report(7, "bulk universality", ok, detail)


@slow
def test_criterion_08_edge_universality(report):
    t0 = time.perf_counter()
    cfg = hx.ExperimentConfig(beta=2, N=512, trials=300, regime="edge", z0=1.0, r=None, seed=10, ks_threshold=0.08)
    ds = hx.run_overlap_experiment(cfg)
    ks, pooled = ds.summaries["ks"], ds.summaries["ks_bin_pooled"]
    means = [b["mean_S"] for b in ds.summaries["trend_bins"].values()]
    ok = ks["statistic"] < 0.08 and ds.summaries["mean_trend_decreasing"]
    detail = (f"D vs delta=0 {ks['statistic']:.4f} (<0.08, n={ks['n']}), delta-pooled reference D="
              f"{pooled['statistic']:.4f}, bin means {[round(m, 3) for m in means]}; {time.perf_counter() - t0:.0f}s")
    assert report(8, "edge universality", ok, detail)


@slow
def test_criterion_09_chalker_mehlig(report, bulk_gaussian):
    cfg, rec = bulk_gaussian
    ds = hx.run_chalker_mehlig(cfg, rec)
    detail = ", ".join(f"[{r[0]:.1f},{r[1]:.1f}) {r[3]:.3f}" for r in ds.rows)
    assert report(9, "Chalker-Mehlig mean", ds.passed, detail)


@slow
def test_criterion_10_det_approx(report):
    t0 = time.perf_counter()
    cfg = hx.ExperimentConfig(kind="det-approx", N=1024, trials=20, seed=11, slack=10.0)
    ds = hx.run_det_approx_experiment(cfg)
    s = ds.summaries
    detail = (f"90th pct single {s['single_percentile']:.3f}, two {s['two_percentile']:.3f} (<=10), "
              f"grid z={list(cfg.z_grid)} eta=N^{[round(e, 3) for e in cfg.eta_exponents]}; "
              f"{time.perf_counter() - t0:.0f}s")
    assert report(10, "deterministic-approximation envelopes", ds.passed, detail)


@slow
def test_criterion_11_rigidity(report):
    t0 = time.perf_counter()
    N = 1024
    X = sample(EnsembleSpec(2, N, seed=12))
    fracs = []
    for z in (1.0, 1.0 + N**-0.5):
        rep = rigidity_report(hermitize(X, z), slack=10 * np.log(N))
        fracs.append(rep.pass_fraction)
    elapsed = time.perf_counter() - t0
    ok = min(fracs) >= 0.95 and elapsed <= 120
    assert report(11, "rigidity", ok, f"pass fractions {[round(f, 4) for f in fracs]}, {elapsed:.1f}s")


@slow
def test_criterion_12_sv_overlap_decay(report, tmp_path):
    t0 = time.perf_counter()
    N = 1000
    X = sample(EnsembleSpec(2, N, seed=13))
    H = hermitize(X, 1.0)
    scans = sv_overlap_scan(H, [1, 10, 100, 1000])
    exc = sv_overlap_exceedance(H, N // 2, 20 * N**0.1)
    ds = hx.Dataset("sv-scan", {"N": N, "seed": 13}, ["m", "spread"], [[s.m, s.spread] for s in scans],
                    series={f"m{s.m}": (["abs_lambda", "lambda", "overlap"], [list(r) for r in s.rows()])
                            for s in scans})
    paths = hx.emit(ds, tmp_path, formats=("csv",))
    files = [p for p in paths if "_m" in p.name]
    spreads = [s.spread for s in scans]
    sharpening = all(a > b for a, b in zip(spreads[:-1], spreads[1:]))
    elapsed = time.perf_counter() - t0
    ok = exc <= 0.01 and len(files) == 4 and sharpening and elapsed <= 180
    detail = (f"exceedance {exc:.2e} (<=1%), {len(files)} series files, spread by m "
              f"{[round(x, 3) for x in spreads]}, {elapsed:.0f}s")
    assert report(12, "singular-vector overlaps", ok, detail)


def _tail(beta, seed):
    cfg = LeastSVConfig(beta=beta, N=512, z0=1.0, r=3.0, trials=400, seed=seed, slack=20.0)
    per_trial = hx.map_trials(lambda k: least_sv_trial(cfg, k), cfg.trials)
    mins = np.array([m for _, m in per_trial])
    return tail_curve(mins, cfg.eta_grid(), cfg.N, beta, cfg.slack), sum(1 for c, _ in per_trial if c == 0)


@slow
def test_criterion_13_least_sv_tail(report):
    t0 = time.perf_counter()
    lines, ok = [], True
    for beta, seed in ((2, 14), (1, 15)):
        curve, vacuous = _tail(beta, seed)
        ok &= all(p.passed for p in curve)
        lines.append(f"beta={beta} vacuous={vacuous} " + " ".join(
            f"c={p.eta * 512**0.75:.2f}:{p.count}/{p.trials} p={p.p_hat:.4f} wilson<={p.wilson_high:.4f} "
            f"limit={20 * p.bound:.4f}" for p in curve))
    assert report(13, "least singular value tail", ok, "; ".join(lines) + f"; {time.perf_counter() - t0:.0f}s")


@slow
def test_criterion_14_approx_overlap(report):
    t0 = time.perf_counter()
    N = 128
    params = ApproxOverlapParams(N, 0.05, 0.01)
    hits = []
    for k in range(50):
        X = sample(EnsembleSpec(2, N, seed=16), k, trial_rng(16, k))
        hits += [within_tolerance(a, o, N, 0.15) for _, o, a in approx_overlap_trial(X, params, 0.0, 3.0)]
    frac = float(np.mean(hits))
    ok = frac >= 0.8
    assert report(14, "approximate overlap", ok,
                  f"{sum(hits)}/{len(hits)} = {frac:.3f} within tolerance (>=0.80), {time.perf_counter() - t0:.0f}s")


def test_criterion_15_determinism(report):
    out = {}
    for threads in (1, 2, 4):
        a = hx.run_overlap_experiment(hx.ExperimentConfig(N=96, trials=8, z0=0.2, r=6.0, seed=17, threads=threads))
        b = hx.run_det_approx_experiment(hx.ExperimentConfig(kind="det-approx", N=96, trials=3, seed=17,
                                                             threads=threads))
        out[threads] = (hx.to_csv(a.columns, a.rows).encode(), hx.to_csv(b.columns, b.rows).encode())
    ok = out[1] == out[2] == out[4]
    assert report(15, "determinism across thread counts", ok, f"{len(out[1][0])}+{len(out[1][1])} bytes compared")
