"""Scalars controlling the overlap law of Gauss-divisible matrices X + sqrt(t) Y.

With X_z = X - z = U S V^* and theta = eta^2 (negative values allowed down to
-s_1^2), H_z = (theta + |X_z|^2)^{-1} = V (S^2 + theta)^{-1} V^* and
H~_z = (theta + |X_z^*|^2)^{-1} = U (S^2 + theta)^{-1} U^*.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .hermitization import Hermitization


class CriticalPointError(ValueError):
    pass


@dataclass(frozen=True)
class TraceFunctionals:
    """Normalised traces <H>, <H^2>, <H H~>, <H X_z H> at a given theta."""

    theta: float
    H1: float
    H2: float
    HHt: float
    HXH: complex
    log_mean: float  # <log(theta + |X_z|^2)>


def _shifted(H: Hermitization, theta: float) -> np.ndarray:
    d = H.sv**2 + theta
    if d[0] <= 1e-14:
        raise CriticalPointError(f"theta = {theta} is not above -s_1^2 = {-H.sv[0] ** 2}")
    return d


def trace_functionals(H: Hermitization, theta: float) -> TraceFunctionals:
    """All trace functionals from the SVD.

    <H H~> = (1/N) sum_{k,l} |u_l^* v_k|^2 / ((s_k^2+theta)(s_l^2+theta)) and
    <H X_z H> = (1/N) sum_k s_k (v_k^* u_k) / (s_k^2+theta)^2.
    """
    d = _shifted(H, theta)
    inv = 1.0 / d
    N = H.N
    HHt = float(inv @ H.overlap_sq @ inv) / N
    vu = np.conj(np.diag(H.overlap_table))
    HXH = complex(np.sum(H.sv * vu * inv**2) / N)
    return TraceFunctionals(float(theta), float(inv.mean()), float((inv**2).mean()), HHt, HXH,
                            float(np.log(d).mean()))


def critical_residual(H: Hermitization, t: float, theta: float) -> float:
    return t * float(np.mean(1.0 / _shifted(H, theta))) - 1.0


def solve_critical(H: Hermitization, t: float) -> float:
    """Root theta of t <H_z(theta)> = 1 on (-s_1^2, inf).

    The left side decreases strictly from +inf to 0, so the root is unique. It is
    bracketed in x = theta + s_1^2 on a log scale and refined with brentq.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    s1sq = H.sv[0] ** 2
    f = lambda x: t * np.mean(1.0 / (H.sv**2 - s1sq + x)) - 1.0  # noqa: E731
    lo = max(s1sq, 1e-300) * 1e-12 + 1e-300
    hi = max(1.0, s1sq, 2.0 * t)
    if f(lo) <= 0:
        raise CriticalPointError("t <H> < 1 just above -s_1^2: no admissible root")
    while f(hi) > 0:
        hi *= 4.0
    x = optimize.brentq(f, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    theta = x - s1sq
    res = abs(critical_residual(H, t, theta))
    if res > 1e-10:
        raise CriticalPointError(f"critical equation residual {res:.2e}")
    return float(theta)


@dataclass(frozen=True)
class GaussScalars:
    t: float
    theta: float
    phi: float
    sigma: float
    delta: float
    traces: TraceFunctionals
    N: int
    diagnostics: dict = field(default_factory=dict)

    @property
    def eta(self) -> complex:
        """eta_{z,t}; purely imaginary when theta < 0."""
        return complex(np.sqrt(complex(self.theta)))

    def s0(self, regime: str) -> float:
        """Scale s_0 as printed: N theta / (t^2 sigma) in the bulk, sqrt(N) sigma / (t^2 <H^2>^{1/2}) at the edge."""
        if regime == "bulk":
            return self.N * self.theta / (self.t**2 * self.sigma)
        if regime == "edge":
            return np.sqrt(self.N) * self.sigma / (self.t**2 * np.sqrt(self.traces.H2))
        raise ValueError(f"unknown regime {regime!r}")

    def rescale(self, O, regime: str):
        """S_n from O_nn: t^2 sigma O / (N theta) (bulk) or t^2 <H^2>^{1/2} sigma O / sqrt(N) (edge)."""
        O = np.asarray(O, dtype=float)
        if regime == "bulk":
            return self.t**2 * self.sigma * O / (self.N * self.theta)
        if regime == "edge":
            return self.t**2 * np.sqrt(self.traces.H2) * self.sigma * O / np.sqrt(self.N)
        raise ValueError(f"unknown regime {regime!r}")


def gauss_scalars(H: Hermitization, t: float) -> GaussScalars:
    """theta_{z,t}, phi_{z,t}, sigma_{z,t} and delta_{z,t} for the Hermitisation of X at z."""
    theta = solve_critical(H, t)
    tf = trace_functionals(H, theta)
    phi = theta / t - tf.log_mean
    sigma = theta * tf.HHt + abs(tf.HXH) ** 2 / tf.H2
    delta = np.sqrt(H.N * tf.H2) * theta
    diag = {
        "eta_over_t": float(np.sqrt(theta) / t) if theta > 0 else float("nan"),
        "edge_theta_scale": float(abs(theta) * np.sqrt(H.N) / t**2),
        "critical_residual": critical_residual(H, t, theta),
    }
    return GaussScalars(float(t), theta, float(phi), float(sigma), float(delta), tf, H.N, diag)


# ---------------------------------------------------------------------------
# condition sets


@dataclass
class ConditionReport:
    regime: str
    C: float
    measured: dict  # condition -> (min, max) of the normalised quantity
    passed: dict

    @property
    def all_passed(self) -> bool:
        return all(self.passed.values())


def _asymp(vals, C):
    """a ~ 1: every value within [1/C, C]."""
    vals = np.asarray(vals, dtype=float)
    return bool(np.all((vals >= 1.0 / C) & (vals <= C)))


def _lesssim(vals, C):
    return bool(np.all(np.asarray(vals, dtype=float) <= C))


def check_conditions(hs, t: float, regime: str, C: float = 100.0, z0: complex | None = None,
                     X_norm: float | None = None, eps: float = 0.1, n_eta: int = 12) -> ConditionReport:
    """Evaluate the bulk (A1-A5) or edge (B1-B6) condition sets.

    ``hs`` is a list of Hermitizations of the same X at different z. Bulk
    conditions are scanned over eta in [N^-eps t, 1]. Edge conditions use
    delta_0 = |z0|^2 - 1; the |z - z0| right-hand sides are floored at
    N^{-1/2}, the scale of the allowed neighbourhood.
    """
    hs = list(hs)
    N = hs[0].N
    if X_norm is None:
        # ||X|| <= ||X - z|| + |z|
        X_norm = float(np.min([h.sv[-1] + abs(h.z) for h in hs]))
    norm_ok = bool(X_norm <= np.exp(np.log(N) ** 2))
    measured, passed = {}, {}

    def record(name, vals, ok):
        vals = np.asarray(vals, dtype=float)
        measured[name] = (float(vals.min()), float(vals.max()))
        passed[name] = ok

    if regime == "bulk":
        etas = np.geomspace(N**-eps * t, 1.0, n_eta)
        a2, a3, a4, a5 = [], [], [], []
        for h in hs:
            for eta in etas:
                tf = trace_functionals(h, eta * eta)
                a2.append(eta * tf.H1)
                a3.append(eta**3 * tf.H2)
                a4.append(eta**2 * tf.HHt)
                a5.append(eta * abs(tf.HXH))
        record("A1", [X_norm], norm_ok)
        record("A2", a2, _asymp(a2, C))
        record("A3", a3, _asymp(a3, C))
        record("A4", a4, _lesssim(a4, C))
        record("A5", a5, _lesssim(a5, C))
    elif regime == "edge":
        if z0 is None:
            raise ValueError("edge conditions need z0")
        d0 = abs(z0) ** 2 - 1.0
        if d0 <= 0:
            raise ValueError("edge conditions need |z0| > 1")
        b2, b3, b4, b5, b6 = [], [], [], [], []
        b3_ok = True
        for h in hs:
            dz = max(abs(h.z - z0), N**-0.5)
            b2.append(h.sv[0] / d0**1.5)
            tf0 = trace_functionals(h, 0.0)
            dev = abs(d0 * tf0.H1 - 1.0)
            b3.append(dev / (dz / d0))
            b3_ok &= dev <= C * dz / d0
            b4.append(tf0.H2 * d0**4)
            b5.append(tf0.HHt * d0**3)
            span = min(d0**2 * dz, 0.5 * h.sv[0] ** 2)
            for theta in np.linspace(-span, span, 5):
                b6.append(abs(trace_functionals(h, theta).HXH) * d0**2)
        record("B1", [X_norm], norm_ok)
        record("B2", b2, bool(np.all(np.asarray(b2) >= 1.0 / C)))
        record("B3", b3, bool(b3_ok))
        record("B4", b4, _asymp(b4, C))
        record("B5", b5, _asymp(b5, C))
        record("B6", b6, _asymp(b6, C))
    else:
        raise ValueError(f"unknown regime {regime!r}")
    return ConditionReport(regime, C, measured, passed)
