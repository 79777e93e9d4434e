"""Monte Carlo experiments, KS tests and result files.

Every trial draws from its own counter-based stream keyed by (seed, trial),
trials are mapped in index order, and BLAS runs single-threaded inside
experiments, so results do not depend on the worker count.
"""
from __future__ import annotations

import csv
import io
import json
import os
import subprocess
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import jsonschema
import numpy as np
from scipy import stats
from threadpoolctl import threadpool_limits

from . import limit_densities as ld
from .eigen_overlaps import DegenerateSpectrumError, eigensystem
from .ensembles import EnsembleSpec, gauss_divisible, sample
from .hermitization import hermitize, trace_resolvent, two_resolvent_trace
from .rng import trial_rng
from .self_consistent import det_approx_two, solve_m

THREADS_ENV = "OVERLAP_LAB_THREADS"
KINDS = ("overlap-density", "chalker-mehlig", "det-approx", "least-sv", "sv-scan")


class ExperimentError(RuntimeError):
    pass


@dataclass
class ExperimentConfig:
    """Self-describing experiment parameters (serialised into every output)."""

    kind: str = "overlap-density"
    beta: int = 2
    N: int = 512
    entry_law: str = "gaussian"
    regime: str = "bulk"
    z0: complex = 0.3
    r: float | None = 5.0  # window radius in units of N^{-1/2}; None = whole annulus (edge)
    trials: int = 200
    seed: int = 0
    t: float = 0.0  # Gaussian component; X + sqrt(t) Y is rescaled by 1/sqrt(1+t)
    real_only: bool | None = None  # defaults to beta == 1
    threads: int = 1
    ks_threshold: float = 0.05
    delta_bins: tuple = tuple((float(k), float(k + 1)) for k in range(-4, 4))
    trend_bins: tuple = ((-3.0, -1.0), (-1.0, 1.0), (1.0, 3.0))
    ks_bin: tuple = (-1.0, 1.0)
    cm_bins: tuple = tuple((round(0.1 * k, 1), round(0.1 * (k + 1), 1)) for k in range(7))
    cm_tolerance: float = 0.1
    z_grid: tuple = (0.9, 1.0)
    eta_exponents: tuple = (-2 / 3, -1 / 2, -1 / 3)
    slack: float = 10.0
    percentile: float = 90.0
    out: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ExperimentError(f"unknown experiment kind {self.kind!r}")
        if self.trials < 1:
            raise ExperimentError("trials must be >= 1")
        if self.r is not None and self.r <= 0:
            raise ExperimentError("window radius must be positive")
        EnsembleSpec(self.beta, self.N, self.entry_law, self.seed)
        self.z0 = complex(self.z0)

    @property
    def spec(self) -> EnsembleSpec:
        return EnsembleSpec(self.beta, self.N, self.entry_law, self.seed)

    @property
    def real_eigs_only(self) -> bool:
        return self.beta == 1 if self.real_only is None else bool(self.real_only)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["z0"] = [self.z0.real, self.z0.imag]
        return json.loads(json.dumps(d))

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        if isinstance(d.get("z0"), (list, tuple)):
            d["z0"] = complex(*d["z0"])
        for key in ("delta_bins", "trend_bins", "ks_bin", "cm_bins", "z_grid", "eta_exponents"):
            if key in d and d[key] is not None:
                d[key] = tuple(tuple(x) if isinstance(x, list) else x for x in d[key])
        return cls(**d)


def resolve_threads(threads: int | None) -> int:
    if threads is not None:
        return max(1, int(threads))
    return max(1, int(os.environ.get(THREADS_ENV, "1")))


def map_trials(fn, n: int, threads: int = 1) -> list:
    """Apply fn to 0..n-1 in index order with BLAS pinned to one thread."""
    with threadpool_limits(limits=1):
        if threads <= 1:
            return [fn(k) for k in range(n)]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, range(n)))


def trial_matrix(cfg: ExperimentConfig, trial: int) -> np.ndarray:
    X = sample(cfg.spec, trial, trial_rng(cfg.seed, trial, 0))
    if cfg.t > 0:
        X = gauss_divisible(X, cfg.t, trial_rng(cfg.seed, trial, 1), cfg.beta) / np.sqrt(1 + cfg.t)
    return X


# ---------------------------------------------------------------------------
# KS


@dataclass
class KSResult:
    statistic: float
    n: int
    reference: str
    threshold: float
    pvalue: float

    @property
    def passed(self) -> bool:
        return self.statistic < self.threshold


def ks_statistic(sample_values, cdf, reference: str = "", threshold: float = 0.05) -> KSResult:
    """One-sample Kolmogorov-Smirnov distance sup |ECDF - CDF|."""
    x = np.asarray(sample_values, dtype=float)
    if x.size == 0:
        raise ExperimentError("empty sample")
    if np.isnan(x).any():
        raise ExperimentError("NaN in sample")
    res = stats.kstest(x, cdf)
    return KSResult(float(res.statistic), int(x.size), reference, threshold, float(res.pvalue))


# ---------------------------------------------------------------------------
# datasets


@dataclass
class Dataset:
    kind: str
    config: dict
    columns: list
    rows: list
    summaries: dict = field(default_factory=dict)
    passed: bool = True
    series: dict = field(default_factory=dict)  # name -> (columns, rows) plot-data

    def column(self, name) -> np.ndarray:
        k = self.columns.index(name)
        return np.array([r[k] for r in self.rows])


# ---------------------------------------------------------------------------
# overlap experiments


def overlap_records(cfg: ExperimentConfig) -> Dataset:
    """Per-trial eigenvalues and diagonal overlaps for every eigenvalue.

    Trials hitting a near-degenerate spectrum are counted as rejected and
    contribute no records.
    """

    def one(trial):
        X = trial_matrix(cfg, trial)
        try:
            E = eigensystem(X)
        except DegenerateSpectrumError:
            return trial, None
        return trial, (E.values, E.diagonal_overlaps(), E.real_flags)

    out = map_trials(one, cfg.trials, cfg.threads)
    rows, rejected = [], 0
    for trial, res in out:
        if res is None:
            rejected += 1
            continue
        for k, (z, o, real) in enumerate(zip(*res)):
            rows.append([trial, k, float(z.real), float(z.imag), int(real), float(o)])
    return Dataset("overlap-records", cfg.to_dict(), ["trial", "index", "z_re", "z_im", "real", "O"], rows,
                   {"rejected_trials": rejected, "valid_trials": cfg.trials - rejected})


def _records_arrays(rec: Dataset):
    z = rec.column("z_re") + 1j * rec.column("z_im")
    return rec.column("trial").astype(int), z, rec.column("real").astype(bool), rec.column("O")


def run_overlap_experiment(cfg: ExperimentConfig, records: Dataset | None = None) -> Dataset:
    """Rescaled overlaps of windowed eigenvalues, KS-tested against the limiting law."""
    rec = overlap_records(cfg) if records is None else records
    trial, z, real, O = _records_arrays(rec)
    N = cfg.N
    keep = real if cfg.real_eigs_only else np.ones(len(z), dtype=bool)
    summaries = dict(rec.summaries)
    if cfg.regime == "bulk":
        keep &= np.sqrt(N) * np.abs(z - cfg.z0) < cfg.r
        S = O / (N * (1.0 - np.abs(z) ** 2))
        keep &= np.isfinite(S) & (np.abs(z) < 1)
        if not keep.any():
            raise ExperimentError("empty pooled sample")
        ks = ks_statistic(S[keep], lambda s: ld.bulk_conditional_cdf(cfg.beta, np.maximum(s, 1e-300)),
                          f"bulk beta={cfg.beta}", cfg.ks_threshold)
        summaries.update(ks=asdict(ks), ks_passed=ks.passed, n_records=int(keep.sum()),
                         mean_S=float(np.mean(S[keep])))
        rows = [[int(a), float(b.real), float(b.imag), float(c), float(d)]
                for a, b, c, d in zip(trial[keep], z[keep], O[keep], S[keep])]
        return Dataset("overlap-density", cfg.to_dict(), ["trial", "z_re", "z_im", "O", "S"], rows,
                       summaries, ks.passed)
    if cfg.regime != "edge":
        raise ExperimentError(f"unknown regime {cfg.regime!r}")
    if cfg.r is not None:
        keep &= np.sqrt(N) * np.abs(z - cfg.z0) < cfg.r
    delta = np.sqrt(N) * (np.abs(z) ** 2 - 1.0)
    S = O / np.sqrt(N)
    def bin_stats(bins):
        out = {}
        for lo, hi in bins:
            sel = keep & (delta >= lo) & (delta < hi)
            out[f"[{lo:g},{hi:g})"] = {"n": int(sel.sum()),
                                       "mean_S": float(np.mean(S[sel])) if sel.any() else None,
                                       "median_S": float(np.median(S[sel])) if sel.any() else None}
        return out

    bins = bin_stats(cfg.delta_bins)
    trend_stats = bin_stats(cfg.trend_bins)
    lo, hi = cfg.ks_bin
    sel = keep & (delta >= lo) & (delta <= hi)
    if not sel.any():
        raise ExperimentError("empty pooled sample")
    center = 0.5 * (lo + hi)
    table = ld.cdf_tables(cfg.beta, "edge", center)
    ks = ks_statistic(S[sel], table, f"edge beta={cfg.beta} delta={center:g}", cfg.ks_threshold)
    pooled = ks_statistic(S[sel], ld.edge_bin_cdf(cfg.beta, lo, hi), f"edge beta={cfg.beta} delta-pooled",
                          cfg.ks_threshold)
    means = [b["mean_S"] for b in trend_stats.values()]
    trend = all(a is not None and b is not None and a > b for a, b in zip(means[:-1], means[1:]))
    summaries.update(ks=asdict(ks), ks_passed=ks.passed, ks_bin_pooled=asdict(pooled), bins=bins,
                     trend_bins=trend_stats,
                     mean_trend_decreasing=trend,
                     n_records=int(sel.sum()))
    rows = [[int(a), float(b.real), float(b.imag), float(c), float(d), float(e)]
            for a, b, c, d, e in zip(trial[keep], z[keep], O[keep], S[keep], delta[keep])]
    return Dataset("overlap-density", cfg.to_dict(), ["trial", "z_re", "z_im", "O", "S", "delta"], rows,
                   summaries, ks.passed and trend)


def run_chalker_mehlig(cfg: ExperimentConfig, records: Dataset | None = None) -> Dataset:
    """Mean of O_nn / (N (1 - |z_n|^2)) per |z| bin; each bin must lie in 1 +- tolerance."""
    rec = overlap_records(cfg) if records is None else records
    _, z, _, O = _records_arrays(rec)
    r = np.abs(z)
    rows, ok = [], True
    for lo, hi in cfg.cm_bins:
        sel = (r >= lo) & (r < hi)
        if not sel.any():
            raise ExperimentError(f"empty |z| bin [{lo}, {hi})")
        ratio = O[sel] / (cfg.N * (1.0 - r[sel] ** 2))
        m = float(np.mean(ratio))
        se = float(np.std(ratio, ddof=1) / np.sqrt(sel.sum())) if sel.sum() > 1 else float("nan")
        good = abs(m - 1.0) <= cfg.cm_tolerance
        ok &= good
        rows.append([lo, hi, int(sel.sum()), m, se, int(good)])
    return Dataset("chalker-mehlig", cfg.to_dict(), ["r_lo", "r_hi", "n", "mean_ratio", "std_err", "passed"],
                   rows, dict(rec.summaries), bool(ok))


# ---------------------------------------------------------------------------
# deterministic approximations


def det_approx_grid(cfg: ExperimentConfig):
    return [(z, float(cfg.N ** e)) for z in cfg.z_grid for e in cfg.eta_exponents]


def run_det_approx_experiment(cfg: ExperimentConfig) -> Dataset:
    """Scaled errors of <G> against m and of (1/N) tr(G F G F^*) against A12.

    single = |<G(i eta)> - m| N eta, two = |(1/N) tr G F G F^* - A12| N^{1/2} eta^{3/2} / rho^{5/2};
    the experiment passes when both percentiles are <= slack.
    """
    grid = det_approx_grid(cfg)
    for z, eta in grid:
        if eta <= 0:
            raise ExperimentError("grid contains real-axis spectral parameters")
    theory = {}
    for z, eta in grid:
        sol = solve_m(z, 1j * eta)
        theory[(z, eta)] = (sol.m, sol.rho, det_approx_two(z, 1j * eta, 1j * eta).A12)

    def one(trial):
        X = trial_matrix(cfg, trial)
        out = []
        for z in cfg.z_grid:
            H = hermitize(X, z)
            for zz, eta in grid:
                if zz != z:
                    continue
                m, rho, a12 = theory[(z, eta)]
                w = 1j * eta
                g = trace_resolvent(H, w)
                two = 2.0 * two_resolvent_trace(H, w, w)
                e1 = abs(g - m) * cfg.N * eta
                e2 = abs(two - a12) * np.sqrt(cfg.N) * eta**1.5 / rho**2.5
                out.append([trial, z, eta, g.real, g.imag, two.real, two.imag, e1, e2])
        return out

    rows = [r for chunk in map_trials(one, cfg.trials, cfg.threads) for r in chunk]
    e1 = np.array([r[7] for r in rows])
    e2 = np.array([r[8] for r in rows])
    p1, p2 = float(np.percentile(e1, cfg.percentile)), float(np.percentile(e2, cfg.percentile))
    ok = p1 <= cfg.slack and p2 <= cfg.slack
    return Dataset("det-approx", cfg.to_dict(),
                   ["trial", "z", "eta", "G_re", "G_im", "two_re", "two_im", "single_scaled", "two_scaled"],
                   rows, {"single_percentile": p1, "two_percentile": p2, "slack": cfg.slack,
                          "percentile": cfg.percentile}, bool(ok))


# ---------------------------------------------------------------------------
# output


def git_describe() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], capture_output=True,
                             text=True, timeout=5, cwd=Path(__file__).resolve().parent)
        return out.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


JSON_SCHEMA = {
    "type": "object",
    "required": ["config", "git_describe", "seed", "records", "summaries"],
    "properties": {
        "config": {"type": "object"},
        "git_describe": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
        "records": {"type": "array", "items": {"type": "object"}},
        "summaries": {"type": "object"},
    },
}


def _cell(x):
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (complex, np.complexfloating)):
        return repr(complex(x))
    return str(x)


def to_csv(columns, rows) -> str:
    """RFC 4180 CSV with shortest round-trip float formatting."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(x) for x in r])
    return buf.getvalue()


def read_csv(path) -> tuple[list, list]:
    """Inverse of ``to_csv`` for numeric cells."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = []
        for r in reader:
            vals = []
            for c in r:
                try:
                    vals.append(int(c))
                except ValueError:
                    try:
                        vals.append(float(c))
                    except ValueError:
                        vals.append(complex(c))
            rows.append(vals)
    return header, rows


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        return float(x) if np.isfinite(x) else repr(float(x))
    if isinstance(x, (complex, np.complexfloating)):
        return [float(x.real), float(x.imag)]
    return x


def to_json(ds: Dataset) -> dict:
    doc = {
        "config": _jsonable(ds.config),
        "git_describe": git_describe(),
        "seed": int(ds.config.get("seed", 0)),
        "records": [_jsonable(dict(zip(ds.columns, r))) for r in ds.rows],
        "summaries": _jsonable({**ds.summaries, "passed": ds.passed}),
    }
    jsonschema.validate(doc, JSON_SCHEMA)
    return doc


def emit(ds: Dataset, out_dir, stem: str | None = None, formats=("csv", "json")) -> list[Path]:
    """Write <stem>.csv, <stem>.json and one CSV per plot series."""
    out_dir = Path(out_dir)
    stem = stem or ds.kind
    paths = []
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        if "csv" in formats:
            p = out_dir / f"{stem}.csv"
            p.write_bytes(to_csv(ds.columns, ds.rows).encode())
            paths.append(p)
        if "json" in formats:
            p = out_dir / f"{stem}.json"
            p.write_text(json.dumps(to_json(ds), indent=1, sort_keys=True))
            paths.append(p)
        for name, (cols, rows) in ds.series.items():
            p = out_dir / f"{stem}_{name}.csv"
            p.write_bytes(to_csv(cols, rows).encode())
            paths.append(p)
    except OSError as exc:
        raise OSError(f"cannot write results under {out_dir}: {exc}") from exc
    return paths
