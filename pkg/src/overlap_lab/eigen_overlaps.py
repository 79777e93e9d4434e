"""Bi-orthogonal eigensystems, overlaps and the partial Schur oracle.

For a diagonalisable X with right eigenvectors r_n and left eigenvectors l_n
normalised so that l_n^* r_m = delta_nm, the overlap matrix is

    O_nm = (l_n^* l_m)(r_m^* r_n),

and O_nn = ||l_n||^2 ||r_n||^2 >= 1 is the squared eigenvalue condition number.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

DEGENERACY_RTOL = 1e-10
REAL_TOL = 1e-8


class DegenerateSpectrumError(ArithmeticError):
    """Two eigenvalues closer than the degeneracy threshold."""


class EigenError(ArithmeticError):
    """Eigen-decomposition failed its residual checks."""


@dataclass(frozen=True)
class EigenSystem:
    """Eigenvalues with unit right eigenvectors R[:, n] and dual left ones L[:, n].

    For real input the eigenvalues with |Im z| < 1e-8 come first.
    """

    values: np.ndarray
    R: np.ndarray
    L: np.ndarray
    real_flags: np.ndarray

    @property
    def N(self) -> int:
        return len(self.values)

    @property
    def n_real(self) -> int:
        return int(self.real_flags.sum())

    def diagonal_overlaps(self) -> np.ndarray:
        """O_nn = ||l_n||^2 ||r_n||^2."""
        return np.sum(np.abs(self.L) ** 2, axis=0) * np.sum(np.abs(self.R) ** 2, axis=0)


def _min_gap(values: np.ndarray) -> float:
    if len(values) < 2:
        return np.inf
    d = np.abs(values[:, None] - values[None, :])
    np.fill_diagonal(d, np.inf)
    return float(d.min())


def eigensystem(X: np.ndarray, check: bool = True) -> EigenSystem:
    """Eigenvalues and bi-orthogonal eigenvectors of X.

    The left eigenvectors are the conjugated rows of R^{-1}, which makes
    l_n^* r_m = delta_nm hold up to solve error and pairs each l_n with its r_n
    without a second eigensolve.

    Raises
    ------
    DegenerateSpectrumError
        If two eigenvalues are closer than 1e-10 ||X||.
    EigenError
        If the residual or bi-orthogonality checks fail.
    """
    X = np.asarray(X)
    if X.ndim != 2 or X.shape[0] != X.shape[1]:
        raise ValueError("X must be square")
    norm = max(np.linalg.norm(X, 2), np.finfo(float).tiny)
    vals, R = linalg.eig(X)
    gap = _min_gap(vals)
    if gap < DEGENERACY_RTOL * norm:
        raise DegenerateSpectrumError(f"eigenvalue gap {gap:.3e} below {DEGENERACY_RTOL:g} * ||X||")

    if np.isrealobj(X):
        flags = np.abs(vals.imag) < REAL_TOL
    else:
        flags = np.zeros(len(vals), dtype=bool)
    order = np.lexsort((vals.imag, vals.real, ~flags))
    vals, R, flags = vals[order], R[:, order], flags[order]
    R = R / np.linalg.norm(R, axis=0)
    try:
        Rinv = linalg.inv(R)
    except linalg.LinAlgError as exc:
        raise DegenerateSpectrumError("eigenvector matrix is singular") from exc
    L = Rinv.conj().T

    if check:
        res_r = np.linalg.norm(X @ R - R * vals, axis=0).max()
        res_l = np.linalg.norm(L.conj().T @ X - vals[:, None] * L.conj().T, axis=1).max()
        res_l /= np.linalg.norm(L, axis=0).max()
        if max(res_r, res_l) > 1e-8 * norm:
            raise EigenError(f"eigen residual {max(res_r, res_l):.2e} exceeds 1e-8 ||X||")
        bi = np.abs(L.conj().T @ R - np.eye(len(vals))).max()
        if bi > 1e-8:
            raise EigenError(f"bi-orthogonality defect {bi:.2e}")
    return EigenSystem(vals, R, L, flags)


def overlap_matrix(E: EigenSystem) -> np.ndarray:
    """O_nm = (l_n^* l_m)(r_m^* r_n)."""
    LL = E.L.conj().T @ E.L
    RR = E.R.conj().T @ E.R
    return LL * RR.T


@dataclass(frozen=True)
class OverlapRecord:
    z: complex
    O: float
    S: float
    regime: str
    skipped: bool = False


def rescale(O, z, N: int, regime: str):
    """S_bulk = O / (N (1 - |z|^2)) or S_edge = O / sqrt(N); NaN where bulk has |z| >= 1."""
    O = np.asarray(O, dtype=float)
    if regime == "bulk":
        denom = N * (1.0 - np.abs(z) ** 2)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(denom > 0, O / denom, np.nan)
    if regime == "edge":
        return O / np.sqrt(N)
    raise ValueError(f"unknown regime {regime!r}")


def rescaled_overlaps(E: EigenSystem, regime: str, real_only: bool = False) -> list[OverlapRecord]:
    """One record per eigenvalue; bulk records with |z_n| >= 1 are flagged as skipped."""
    O = E.diagonal_overlaps()
    S = rescale(O, E.values, E.N, regime)
    out = []
    for zn, o, s, real in zip(E.values, O, S, E.real_flags):
        if real_only and not real:
            continue
        out.append(OverlapRecord(complex(zn), float(o), float(s), regime, bool(np.isnan(s))))
    return out


# ---------------------------------------------------------------------------
# partial Schur decomposition


@dataclass(frozen=True)
class PartialSchur:
    """X = R(v) [[z, w^*], [0, M]] R(v) with the Householder reflection R(v)."""

    z: complex
    v: np.ndarray
    w: np.ndarray
    M: np.ndarray
    residual: float


def householder(v: np.ndarray) -> np.ndarray:
    """Hermitian unitary R with R v = -e_1 (and R e_1 = -v) for unit v with v_1 >= 0."""
    y = np.array(v, dtype=complex)
    y[0] += 1.0
    R = np.eye(len(v), dtype=complex) - 2.0 * np.outer(y, y.conj()) / np.vdot(y, y).real
    return R


def _phase_fixed(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=complex)
    v = v / np.linalg.norm(v)
    if abs(v[0]) > 0:
        v = v * (abs(v[0]) / v[0])
    return v


def partial_schur(X: np.ndarray, which: int, E: EigenSystem | None = None) -> PartialSchur:
    """Partial Schur form around eigenvalue ``which`` (index into ``eigensystem`` order).

    The unit eigenvector v carries the phase making v_1 real and non-negative.
    """
    X = np.asarray(X)
    E = eigensystem(X) if E is None else E
    z = complex(E.values[which])
    v = _phase_fixed(E.R[:, which])
    R = householder(v)
    B = R @ X @ R
    w = B[0, 1:].conj()
    M = B[1:, 1:]
    norm = max(np.linalg.norm(X, 2), 1.0)
    residual = max(abs(B[0, 0] - z), np.linalg.norm(B[1:, 0]) if len(B) > 1 else 0.0)
    if residual > 1e-8 * norm:
        raise EigenError(f"partial Schur residual {residual:.2e}")
    return PartialSchur(z, v, w, M, float(residual))


def reassemble(z: complex, v: np.ndarray, w: np.ndarray, M: np.ndarray) -> np.ndarray:
    """Inverse map T(z, v, w, M) = R(v) [[z, w^*], [0, M]] R(v)."""
    n = len(v)
    B = np.zeros((n, n), dtype=complex)
    B[0, 0] = z
    B[0, 1:] = np.conj(w)
    B[1:, 1:] = M
    R = householder(_phase_fixed(v))
    return R @ B @ R


def overlap_from_schur(z: complex, w: np.ndarray, M: np.ndarray) -> float:
    """O = 1 + ||(M^* - conj(z))^{-1} w||^2."""
    w = np.atleast_1d(np.asarray(w, dtype=complex))
    M = np.atleast_2d(np.asarray(M, dtype=complex))
    A = M.conj().T - np.conj(z) * np.eye(len(M))
    try:
        x = linalg.solve(A, w, check_finite=True)
    except linalg.LinAlgError as exc:
        raise DegenerateSpectrumError("M^* - conj(z) is singular") from exc
    if not np.all(np.isfinite(x)):
        raise DegenerateSpectrumError("M^* - conj(z) is numerically singular")
    return float(1.0 + np.vdot(x, x).real)


# ---------------------------------------------------------------------------
# condition number as eigenvalue speed


def condition_number_probe(X: np.ndarray, n: int, h: float = 1e-5) -> tuple[float, float]:
    """Central-difference speed of z_n along Y = l_n r_n^* / (||l_n|| ||r_n||).

    Returns ``(speed, sqrt(O_nn))``; first-order perturbation theory makes
    them equal up to O(h^2).
    """
    X = np.asarray(X)
    E = eigensystem(X)
    l, r = E.L[:, n], E.R[:, n]
    Y = np.outer(l, r.conj()) / (np.linalg.norm(l) * np.linalg.norm(r))
    zn = E.values[n]
    others = np.delete(E.values, n)
    sep = np.abs(others - zn).min() if len(others) else np.inf
    tracked = []
    for sign in (1.0, -1.0):
        ev = np.linalg.eigvals(X + sign * h * Y)
        d = np.abs(ev - zn)
        k = np.argsort(d)
        if len(ev) > 1 and d[k[1]] < 0.5 * sep and d[k[0]] > 0.25 * sep:
            raise EigenError("eigenvalue tracking is ambiguous; reduce h")
        tracked.append(ev[k[0]])
    speed = abs(tracked[0] - tracked[1]) / (2 * h)
    return float(speed), float(np.sqrt(E.diagonal_overlaps()[n]))
