"""Resolvent-based overlap and least-singular-value statistics.

* ``approx_overlap``: the overlap of an eigenvalue z_n recovered from
  Im G F Im G F^* integrated over a window of width N^zeta eta.
* ``g_eta``: detector of a small second singular value of X - z_n.
* least-singular-value tail experiment, singular-vector overlap scan and the
  two-regime overlap bound.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.linalg import svdvals

from .eigen_overlaps import eigensystem
from .ensembles import EnsembleSpec, sample
from .hermitization import Hermitization, hermitize
from .rng import trial_rng

ZERO_MODE_TOL = 1e-8


class ParameterError(ValueError):
    pass


@dataclass(frozen=True)
class ApproxOverlapParams:
    """eta = N^{-1-eps} (bulk) or N^{-3/4-eps} (edge); window [0, N^zeta eta]; eps > 3 zeta > 0."""

    N: int
    eps: float
    zeta: float
    regime: str = "bulk"

    def __post_init__(self):
        if not self.eps > 3 * self.zeta > 0:
            raise ParameterError(f"need eps > 3 zeta > 0, got eps={self.eps}, zeta={self.zeta}")
        if self.regime not in ("bulk", "edge"):
            raise ParameterError(f"unknown regime {self.regime!r}")

    @property
    def eta(self) -> float:
        if self.regime == "bulk":
            return self.N ** (-1.0 - self.eps)
        return self.N ** (-0.75 - self.eps)

    @property
    def upper(self) -> float:
        return self.N**self.zeta * self.eta


def _lorentz_pair(s, E, eta):
    """B_n(E) = sum over +-s_n of eta / ((lambda - E)^2 + eta^2); shape (len(E), len(s))."""
    E = np.asarray(E)[:, None]
    return eta / ((s - E) ** 2 + eta**2) + eta / ((s + E) ** 2 + eta**2)


def imag_two_resolvent_tr(H: Hermitization, E, eta: float) -> np.ndarray:
    """Unnormalised tr(Im G F Im G F^*) at w = E + i eta for an array of E."""
    B = _lorentz_pair(H.sv, E, eta)
    return np.einsum("en,nm,em->e", B, H.overlap_sq, B) / 4.0


def _panels(H, upper, eta, per_eta):
    width = eta / per_eta
    edges = np.linspace(0.0, upper, max(2, int(np.ceil(upper / width))) + 1)
    # refine around singular values inside the window
    inside = H.sv[(H.sv > 0) & (H.sv < upper)]
    extra = np.concatenate([inside + k * width for k in (-1, 0, 1)]) if len(inside) else []
    edges = np.unique(np.clip(np.concatenate([edges, extra]), 0.0, upper))
    return edges


def approx_overlap(H: Hermitization, params: ApproxOverlapParams, per_eta: int = 8,
                   order: int = 16, prefactor: float = 4.0 / np.pi) -> float:
    """O_{eta,zeta}(z_n) from 1/O = prefactor * int_0^{N^zeta eta} eta tr(Im G F Im G F^*) dE.

    The default prefactor 4/pi makes an isolated zero mode with |u_1^* v_1|^2 = 1/O
    integrate back to exactly 1/O over [0, inf). Panels have width eta/per_eta
    with ``order`` Gauss-Legendre nodes each.
    """
    if H.sv[0] > ZERO_MODE_TOL * max(1.0, H.sv[-1]):
        raise ParameterError(f"z is not an eigenvalue: s_1 = {H.sv[0]:.2e}")
    eta = params.eta
    edges = _panels(H, params.upper, eta, per_eta)
    x, w = np.polynomial.legendre.leggauss(order)
    lo, hi = edges[:-1, None], edges[1:, None]
    nodes = (0.5 * (hi - lo) * x + 0.5 * (hi + lo)).ravel()
    weights = (0.5 * (hi - lo) * w).ravel()
    integral = float(weights @ imag_two_resolvent_tr(H, nodes, eta)) * eta
    if not np.isfinite(integral) or integral <= 0:
        raise ParameterError("approximate overlap quadrature did not converge")
    return 1.0 / (prefactor * integral)


def within_tolerance(O_approx, O, N: int, rtol: float = 0.15) -> bool:
    """|N/O_approx - N/O| <= rtol N/O + N^{-0.02}."""
    return bool(abs(N / O_approx - N / O) <= rtol * N / O + N**-0.02)


def approx_overlap_trial(X: np.ndarray, params: ApproxOverlapParams, z0: complex, r: float):
    """(z_n, O_nn, O_{eta,zeta}(z_n)) for every eigenvalue with sqrt(N)|z_n - z0| < r."""
    E = eigensystem(X)
    O = E.diagonal_overlaps()
    N = X.shape[0]
    out = []
    for zn, o in zip(E.values, O):
        if np.sqrt(N) * abs(zn - z0) < r:
            out.append((complex(zn), float(o), approx_overlap(hermitize(X, zn), params)))
    return out


def g_eta(H: Hermitization, eta: float, zero_mass: int = 2) -> float:
    """eta Im tr G_z(i eta) - zero_mass with the unnormalised 2N trace.

    eta Im tr G(i eta) = 2 sum_n eta^2 / (s_n^2 + eta^2), so an exact zero mode
    contributes exactly 2. ``zero_mass=1`` gives the alternative variant.
    """
    if eta <= 0:
        raise ValueError("eta must be positive")
    return float(2.0 * np.sum(eta**2 / (H.sv**2 + eta**2)) - zero_mass)


# ---------------------------------------------------------------------------
# least singular value tail


def least_sv_bound(N: int, eta, beta: int):
    """N^{3/2} eta^2 |log(N^{3/4} eta)|^{2 - beta}."""
    eta = np.asarray(eta, dtype=float)
    return N**1.5 * eta**2 * np.abs(np.log(N**0.75 * eta)) ** (2 - beta)


@dataclass
class LeastSVConfig:
    beta: int = 2
    N: int = 512
    z0: complex = 1.0
    r: float = 3.0
    etas: tuple = ()
    trials: int = 400
    seed: int = 0
    entry_law: str = "gaussian"
    slack: float = 20.0
    confidence: float = 0.95

    def eta_grid(self):
        if self.etas:
            return np.asarray(self.etas, dtype=float)
        return np.array([0.3, 0.1, 0.03]) * self.N**-0.75


def second_sv(X: np.ndarray, z: complex) -> float:
    s = svdvals(X - z * np.eye(X.shape[0]))
    return float(s[-2])


def least_sv_trial(cfg: LeastSVConfig, trial: int) -> tuple[int, float]:
    """(number of windowed eigenvalues, min s_2(z_n)) for one trial (inf when none)."""
    spec = EnsembleSpec(cfg.beta, cfg.N, cfg.entry_law, cfg.seed)
    X = sample(spec, trial, trial_rng(cfg.seed, trial))
    ev = np.linalg.eigvals(X)
    sel = ev[np.sqrt(cfg.N) * np.abs(ev - cfg.z0) < cfg.r]
    if len(sel) == 0:
        return 0, float("inf")
    return len(sel), min(second_sv(X, zn) for zn in sel)


@dataclass
class TailPoint:
    eta: float
    count: int
    trials: int
    p_hat: float
    wilson_low: float
    wilson_high: float
    bound: float
    passed: bool


def tail_curve(min_s2: np.ndarray, etas, N: int, beta: int, slack: float = 20.0,
               confidence: float = 0.95) -> list[TailPoint]:
    """P(min s_2 < eta) with Wilson intervals over the valid (non-vacuous) trials.

    A point passes when p_hat <= slack * bound if any event was seen, or when
    the Wilson upper limit is <= slack * bound if none was.
    """
    vals = np.asarray(min_s2, dtype=float)
    vals = vals[np.isfinite(vals)]
    n = len(vals)
    if n == 0:
        raise ValueError("no valid trials")
    out = []
    for eta in etas:
        k = int(np.sum(vals < eta))
        ci = stats.binomtest(k, n).proportion_ci(confidence_level=confidence, method="wilson")
        b = float(least_sv_bound(N, eta, beta))
        p = k / n
        ok = p <= slack * b if k > 0 else ci.high <= slack * b
        out.append(TailPoint(float(eta), k, n, p, float(ci.low), float(ci.high), b, bool(ok)))
    return out


def least_sv_experiment(cfg: LeastSVConfig, map_fn=map):
    """Run all trials; returns (per-trial (count, min_s2) list, tail curve)."""
    per_trial = list(map_fn(lambda k: least_sv_trial(cfg, k), range(cfg.trials)))
    mins = np.array([m for _, m in per_trial])
    return per_trial, tail_curve(mins, cfg.eta_grid(), cfg.N, cfg.beta, cfg.slack, cfg.confidence)


# ---------------------------------------------------------------------------
# singular-vector overlaps


def sv_overlap_bound(n: int, m: int, N: int, c1: float = 0.1, c2: float | None = None) -> float:
    """(min/N)^{1/4} when min >= c1 max, else (N max)^{-1/4}, over (|n|, |m|)."""
    a, b = abs(n), abs(m)
    lo, hi = min(a, b), max(a, b)
    if lo < 1 or (c2 is not None and hi > c2 * N):
        raise IndexError(f"indices ({n}, {m}) outside [1, c2 N]")
    if lo >= c1 * hi:
        return (lo / N) ** 0.25
    return (N * hi) ** -0.25


def sv_overlap_bound_matrix(N: int, kmax: int, c1: float = 0.1) -> np.ndarray:
    """sv_overlap_bound for all 1 <= |n|, |m| <= kmax."""
    k = np.arange(1, kmax + 1, dtype=float)
    lo = np.minimum.outer(k, k)
    hi = np.maximum.outer(k, k)
    return np.where(lo >= c1 * hi, (lo / N) ** 0.25, (N * hi) ** -0.25)


@dataclass
class OverlapScan:
    m: int
    lam: np.ndarray  # signed eigenvalues of W_z, -s_N..-s_1, s_1..s_N
    overlap: np.ndarray  # |w_n^* F w_m|
    spread: float  # sum_n |C_nm|^2 |log(s_n / s_m)|

    def rows(self):
        return zip(np.abs(self.lam), self.lam, self.overlap)


def sv_overlap_scan(H: Hermitization, ms) -> list[OverlapScan]:
    """|w_n^* F w_m| against lambda_n for each requested m (both signs of n).

    ``spread`` is the |C_nm|^2-weighted mean distance |log(s_n/s_m)|, a scalar
    measure of how sharply the column is concentrated near n = m.
    """
    out = []
    lam = H.eigenvalues()
    for m in ms:
        if not 1 <= abs(m) <= H.N:
            raise IndexError(f"m={m} outside +-[1, {H.N}]")
        col = np.abs(H.overlap_table[:, abs(m) - 1]) / 2.0
        sq = H.overlap_sq[:, abs(m) - 1]
        spread = float(np.sum(sq * np.abs(np.log(H.sv / H.sv[abs(m) - 1]))) / sq.sum())
        out.append(OverlapScan(int(m), lam, np.concatenate([col[::-1], col]), spread))
    return out


def sv_overlap_exceedance(H: Hermitization, kmax: int, slack: float, c1: float = 0.1) -> float:
    """Fraction of pairs 1 <= |n|, |m| <= kmax with |w_n^* F w_m| > slack * bound."""
    vals = np.abs(H.overlap_table[:kmax, :kmax]) / 2.0
    return float(np.mean(vals > slack * sv_overlap_bound_matrix(H.N, kmax, c1)))
