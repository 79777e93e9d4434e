"""Limiting joint densities of (eigenvalue, rescaled diagonal overlap).

Bulk:  rho_bulk(beta, s) = exp(-beta / (2 s)) / (v_beta s^(beta+1))
Edge:  rho_edge(beta, delta, s) = exp(-beta (1 - 2 delta s) / (4 s^2)) / (v_beta s^(2 beta+1))
                                  * (2 pi)^(-beta/2) * det[J_{j+k-2}]_{j,k=1..beta}

with J_k = I_k(delta) + s (I_{k+1}(delta) - delta I_k(delta)) and
I_k(delta) = int_delta^inf x^k exp(-x^2/2) dx.

Both are joint densities in (z, s); the ``*_conditional`` functions divide by
the s-marginal so they integrate to one over s.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import gamma

import numpy as np
from scipy import integrate, special


class QuadratureError(RuntimeError):
    pass


def v_beta(beta: int) -> float:
    """Normalising constant: v_1 = 2 sqrt(2 pi), v_2 = pi."""
    if beta == 1:
        return 2.0 * np.sqrt(2.0 * np.pi)
    if beta == 2:
        return np.pi
    raise ValueError(f"beta must be 1 or 2, got {beta!r}")


def _check_s(s):
    s = np.asarray(s, dtype=float)
    if np.any(s <= 0):
        raise ValueError("s must be positive")
    return s


def rho_bulk(beta: int, s):
    """Joint bulk density of (z, s); constant in z."""
    s = _check_s(s)
    return np.exp(-beta / (2.0 * s)) / (v_beta(beta) * s ** (beta + 1))


def bulk_marginal(beta: int) -> float:
    """int_0^inf rho_bulk ds: 1/pi for beta=2, 1/sqrt(2 pi) for beta=1."""
    return (2.0 / beta) ** beta * gamma(beta) / v_beta(beta)


def rho_bulk_conditional(beta: int, s):
    """Density of S given the eigenvalue location (integrates to 1 in s)."""
    return rho_bulk(beta, s) / bulk_marginal(beta)


def bulk_conditional_cdf(beta: int, s):
    """Closed-form CDF of the bulk conditional law."""
    s = _check_s(s)
    if beta == 2:
        return (1.0 + 1.0 / s) * np.exp(-1.0 / s)
    if beta == 1:
        return np.exp(-1.0 / (2.0 * s))
    raise ValueError(f"beta must be 1 or 2, got {beta!r}")


@dataclass(frozen=True)
class EdgeMomentTable:
    """I_k(delta) = int_delta^inf x^k exp(-x^2/2) dx for k = 0..kmax."""

    delta: float
    values: tuple

    @classmethod
    def build(cls, delta: float, kmax: int = 4) -> "EdgeMomentTable":
        if not np.isfinite(delta):
            raise ValueError("delta must be finite")
        g = np.exp(-0.5 * delta * delta)
        I = [np.sqrt(np.pi / 2.0) * special.erfc(delta / np.sqrt(2.0)), g]
        for k in range(2, kmax + 1):
            I.append(delta ** (k - 1) * g + (k - 1) * I[k - 2])
        return cls(float(delta), tuple(float(x) for x in I[: kmax + 1]))

    def __getitem__(self, k):
        return self.values[k]


def _edge_det(beta, table, s):
    d = table.delta
    J = lambda k: table[k] + s * (table[k + 1] - d * table[k])  # noqa: E731
    if beta == 1:
        return J(0)
    return J(0) * J(2) - J(1) ** 2


def rho_edge(beta: int, delta: float, s):
    """Joint edge density of (z, s) at edge coordinate delta."""
    if beta not in (1, 2):
        raise ValueError(f"beta must be 1 or 2, got {beta!r}")
    s = _check_s(s)
    table = EdgeMomentTable.build(delta, 2 * beta)
    expo = -beta * (1.0 - 2.0 * delta * s) / (4.0 * s * s)
    pref = np.exp(expo) / (v_beta(beta) * s ** (2 * beta + 1) * (2 * np.pi) ** (beta / 2))
    return pref * _edge_det(beta, table, s)


def _mass(f, scale=1.0):
    total = 0.0
    edges = scale * np.array([0.0, 0.05, 0.2, 1.0, 5.0, 50.0])
    for a, b in zip(edges[:-1], edges[1:]):
        val, err = integrate.quad(f, a, b, epsabs=1e-14, epsrel=1e-12, limit=200)
        total += val
    val, err = integrate.quad(f, edges[-1], np.inf, epsabs=1e-14, epsrel=1e-12, limit=200)
    return total + val


def edge_marginal(beta: int, delta: float) -> float:
    """int_0^inf rho_edge(beta, delta, s) ds by adaptive quadrature."""
    scale = max(1.0, -delta) if delta < 0 else 1.0
    return _mass(lambda s: float(rho_edge(beta, delta, s)) if s > 0 else 0.0, scale)


def rho_edge_conditional(beta: int, delta: float, s):
    return rho_edge(beta, delta, s) / edge_marginal(beta, delta)


def edge_to_bulk_limit_check(beta: int, delta: float, s_grid) -> float:
    """Sup relative error between the rescaled edge density and the bulk one.

    With S_edge = -delta * S_bulk, the bulk-coordinate edge density is
    -delta * rho_edge(beta, delta, -delta * s).
    """
    if delta > -4:
        raise ValueError("limit check needs delta <= -4")
    s = _check_s(s_grid)
    edge = -delta * rho_edge(beta, delta, -delta * s)
    bulk = rho_bulk(beta, s)
    return float(np.max(np.abs(edge - bulk) / bulk))


@dataclass
class CDFTable:
    """Tabulated CDF on a grid plus the tail beyond it."""

    grid: np.ndarray
    cdf: np.ndarray
    mass: float
    reference_mass: float | None
    label: str

    @property
    def renormalisation(self) -> float:
        return self.mass

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        ls = np.log(np.clip(s, self.grid[0], self.grid[-1]))
        out = np.interp(ls, np.log(self.grid), self.cdf)
        out = np.where(s <= self.grid[0], self.cdf[0] * np.clip(s / self.grid[0], 0, 1), out)
        # 1/s tail beyond the grid
        top = self.cdf[-1]
        tail = top + (1 - top) * (1 - self.grid[-1] / np.maximum(s, self.grid[-1]))
        return np.where(s >= self.grid[-1], tail, out)


def cdf_table(density, grid, reference_mass=None, label="", rtol=0.01) -> CDFTable:
    """Cumulative table of a density on an increasing positive grid.

    Interval masses come from adaptive Gauss-Kronrod quadrature; the table is
    divided by the total mass (grid plus both tails), which must agree with
    ``reference_mass`` to ``rtol`` when one is given.
    """
    grid = np.asarray(grid, dtype=float)
    if np.any(np.diff(grid) <= 0) or grid[0] <= 0:
        raise ValueError("grid must be positive and increasing")
    f = lambda s: float(density(s)) if s > 0 else 0.0  # noqa: E731
    head, _ = integrate.quad(f, 0.0, grid[0], epsabs=1e-15, limit=200)
    pieces = [head]
    for a, b in zip(grid[:-1], grid[1:]):
        val, err = integrate.quad(f, a, b, epsabs=1e-15, epsrel=1e-11, limit=100)
        pieces.append(val)
    tail, err = integrate.quad(f, grid[-1], np.inf, epsabs=1e-15, limit=200)
    if not np.isfinite(tail):
        raise QuadratureError("tail quadrature failed")
    cum = np.cumsum(pieces)
    mass = cum[-1] + tail
    if reference_mass is not None and abs(mass / reference_mass - 1) > rtol:
        raise QuadratureError(f"mass {mass} differs from reference {reference_mass}")
    return CDFTable(grid, cum / mass, float(mass), reference_mass, label)


def default_s_grid(smin=1e-3, smax=1e3, n=1200):
    return np.geomspace(smin, smax, n)


def cdf_tables(beta: int, regime: str, delta: float = 0.0, grid=None) -> CDFTable:
    """Conditional CDF table of S for the bulk or edge law."""
    grid = default_s_grid() if grid is None else np.asarray(grid, dtype=float)
    if regime == "bulk":
        return cdf_table(lambda s: rho_bulk(beta, s), grid, bulk_marginal(beta), f"bulk beta={beta}")
    if regime == "edge":
        return cdf_table(lambda s: rho_edge(beta, delta, s), grid, edge_marginal(beta, delta),
                         f"edge beta={beta} delta={delta}")
    raise ValueError(f"unknown regime {regime!r}")


def edge_bin_cdf(beta: int, lo: float, hi: float, nodes: int = 8, grid=None) -> CDFTable:
    """Conditional CDF of S pooled over delta in [lo, hi].

    Each delta is weighted by its s-marginal, the eigenvalue density, using
    Gauss-Legendre nodes in delta.
    """
    if not hi > lo:
        raise ValueError("need hi > lo")
    x, w = np.polynomial.legendre.leggauss(nodes)
    deltas = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
    tables = [cdf_tables(beta, "edge", d, grid) for d in deltas]
    weights = np.array([wk * t.mass for wk, t in zip(w, tables)])
    weights /= weights.sum()
    cdf = sum(wk * t.cdf for wk, t in zip(weights, tables))
    return CDFTable(tables[0].grid, cdf, float(np.dot(w, [t.mass for t in tables]) * 0.5 * (hi - lo)), None,
                    f"edge beta={beta} delta in [{lo:g},{hi:g}]")
