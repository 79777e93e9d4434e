"""Hermitisation of X - z through its singular value decomposition.

W_z = [[0, X - z], [(X - z)^*, 0]] has eigenvalues +-s_n with eigenvectors
w_{+-n} = (u_n, +-v_n) / sqrt(2), where (X - z) v_n = s_n u_n. Every resolvent
functional below is a spectral sum over this decomposition, so arbitrarily
small |Im w| is safe. Normalised traces divide by 2N.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import linalg, optimize

from .self_consistent import density_gap, rho_real, support_edge


class HermitizationError(RuntimeError):
    pass


class QuantileError(ValueError):
    pass


@dataclass(frozen=True)
class Hermitization:
    """SVD of X - z with ascending singular values.

    ``U[:, n]`` and ``V[:, n]`` are u_n and v_n. Immutable; the overlap table
    ``C = U^* V`` is computed on first use and cached.
    """

    z: complex
    sv: np.ndarray
    U: np.ndarray
    V: np.ndarray

    @property
    def N(self) -> int:
        return len(self.sv)

    @cached_property
    def overlap_table(self) -> np.ndarray:
        """C[n, m] = u_n^* v_m."""
        return self.U.conj().T @ self.V

    @cached_property
    def overlap_sq(self) -> np.ndarray:
        return np.abs(self.overlap_table) ** 2

    def eigenvalues(self) -> np.ndarray:
        """Spectrum of W_z ordered as (-s_N, ..., -s_1, s_1, ..., s_N)."""
        return np.concatenate([-self.sv[::-1], self.sv])

    def dense(self) -> np.ndarray:
        """Explicit 2N x 2N Hermitisation (for small-N checks)."""
        n = self.N
        A = self.U @ np.diag(self.sv) @ self.V.conj().T
        W = np.zeros((2 * n, 2 * n), dtype=complex)
        W[:n, n:] = A
        W[n:, :n] = A.conj().T
        return W


def hermitize(X: np.ndarray, z: complex, check: bool = True) -> Hermitization:
    """Full SVD of X - z.

    Raises HermitizationError when LAPACK fails or the reconstruction
    residual exceeds 1e-8 * ||X - z||.
    """
    X = np.asarray(X)
    if X.ndim != 2 or X.shape[0] != X.shape[1]:
        raise ValueError("X must be square")
    A = X - z * np.eye(X.shape[0])
    try:
        Uf, s, Vh = linalg.svd(A, lapack_driver="gesdd")
    except linalg.LinAlgError:
        try:
            Uf, s, Vh = linalg.svd(A, lapack_driver="gesvd")
        except linalg.LinAlgError as exc:
            raise HermitizationError(
                f"SVD failed for N={A.shape[0]}, z={z}, ||A||_F={np.linalg.norm(A):.3e}"
            ) from exc
    U = np.ascontiguousarray(Uf[:, ::-1])
    V = np.ascontiguousarray(Vh[::-1].conj().T)
    s = s[::-1].copy()
    H = Hermitization(complex(z), s, U, V)
    if check:
        scale = max(s[-1], 1.0)
        res = np.linalg.norm(A @ V - U * s, axis=0).max()
        if res > 1e-8 * scale:
            cond = s[-1] / max(s[0], 1e-300)
            raise HermitizationError(f"SVD residual {res:.2e} exceeds tolerance (cond ~ {cond:.2e})")
    return H


def _require_offaxis(*ws):
    for w in ws:
        if complex(w).imag == 0:
            raise ValueError(f"spectral parameter {w} lies on the real axis")


def trace_resolvent(H: Hermitization, w: complex) -> complex:
    """<G_z(w)> = (1/2N) sum_{+-, n} 1/(+-s_n - w)."""
    _require_offaxis(w)
    s2 = H.sv**2
    return complex(np.mean(w / (s2 - w * w)))


def trace_resolvent_unnormalized(H: Hermitization, w: complex) -> complex:
    """tr G_z(w) over the full 2N-dimensional space."""
    return 2 * H.N * trace_resolvent(H, w)


def _pair_weights(s, w, mode):
    if mode == "plain":
        return 2.0 * w / (s * s - w * w)
    E, eta = w.real, w.imag
    return eta / ((s - E) ** 2 + eta**2) + eta / ((s + E) ** 2 + eta**2)


def two_resolvent_trace(H: Hermitization, w1: complex, w2: complex, mode: str = "plain") -> complex:
    """<G(w1) F G(w2) F^*> (plain) or <Im G(w1) F Im G(w2) F^*> (imaginary).

    Summing over the signs of the eigenvalue pairs gives
    (1/2N) sum_{n,m} |u_n^* v_m|^2 / 4 * a_n(w1) a_m(w2).
    """
    _require_offaxis(w1, w2)
    if mode not in ("plain", "imaginary"):
        raise ValueError(f"unknown mode {mode!r}")
    w1, w2 = complex(w1), complex(w2)
    a1 = _pair_weights(H.sv, w1, mode)
    a2 = _pair_weights(H.sv, w2, mode)
    total = a1 @ (H.overlap_sq @ a2) / 4.0
    if mode == "imaginary":
        return float(np.real(total)) / (2 * H.N)
    return complex(total) / (2 * H.N)


def sv_overlap(H: Hermitization, n: int, m: int) -> float:
    """|w_n^* F w_m| = |u_|n|^* v_|m|| / 2 for signed indices 1 <= |n|, |m| <= N."""
    for k in (n, m):
        if not 1 <= abs(k) <= H.N:
            raise IndexError(f"index {k} outside +-[1, {H.N}]")
    return float(abs(H.overlap_table[abs(n) - 1, abs(m) - 1]) / 2.0)


# ---------------------------------------------------------------------------
# quantiles and rigidity


class _CumulativeDensity:
    """(1/pi) int_a^E rho_z on the support [a, b] via sin^2-mapped Gauss-Legendre panels.

    The map E = a + (b - a) sin^2(pi x / 2) flattens the square-root edges,
    so a modest panel count reaches ~1e-13 accuracy.
    """

    def __init__(self, z, panels=200, order=16):
        self.z = z
        self.a = density_gap(z) / 2.0
        self.b = support_edge(z)
        self.nodes, self.weights = np.polynomial.legendre.leggauss(order)
        self.x = np.linspace(0.0, 1.0, panels + 1)
        pieces = [self._panel(lo, hi) for lo, hi in zip(self.x[:-1], self.x[1:])]
        self.cum = np.concatenate([[0.0], np.cumsum(pieces)])

    def energy(self, x):
        return self.a + (self.b - self.a) * np.sin(0.5 * np.pi * x) ** 2

    def _integrand(self, x):
        jac = (self.b - self.a) * 0.5 * np.pi * np.sin(np.pi * x)
        return rho_real(self.z, self.energy(x)) * jac / np.pi

    def _panel(self, lo, hi):
        xs = 0.5 * (hi - lo) * self.nodes + 0.5 * (hi + lo)
        return 0.5 * (hi - lo) * float(self.weights @ self._integrand(xs))

    @property
    def total(self) -> float:
        return float(self.cum[-1])

    def at(self, x) -> float:
        k = min(int(np.searchsorted(self.x, x, side="right")) - 1, len(self.x) - 2)
        return float(self.cum[k] + self._panel(self.x[k], x))


def quantiles(z: complex, N: int, count: int | None = None) -> np.ndarray:
    """gamma_1, ..., gamma_count with (1/pi) int_0^gamma_n rho_z = n / (2N).

    Negative indices follow from gamma_{-n} = -gamma_n. Roots are located in
    the mapped variable to 1e-15, well inside a 1e-8 relative tolerance on
    gamma.
    """
    count = N if count is None else int(count)
    if not 1 <= count <= N:
        raise ValueError("count must lie in [1, N]")
    cd = _CumulativeDensity(z)
    targets = np.arange(1, count + 1) / (2.0 * N)
    if targets[-1] > cd.total * (1 + 1e-10):
        raise QuantileError(f"target mass {targets[-1]} exceeds reachable mass {cd.total}")
    out = np.empty(count)
    for i, t in enumerate(targets):
        t = min(t, cd.total)
        k = int(np.searchsorted(cd.cum, t, side="left"))
        lo, hi = cd.x[max(k - 1, 0)], cd.x[min(k, len(cd.x) - 1)]
        if t >= cd.total:
            out[i] = cd.b
            continue
        x = optimize.brentq(lambda x: cd.at(x) - t, lo, hi, xtol=1e-15, rtol=1e-14)
        out[i] = cd.energy(x)
    return out


@dataclass
class RigidityReport:
    indices: np.ndarray
    deviation: np.ndarray
    bound: np.ndarray
    slack: float
    c: float
    gap: float

    @property
    def passed(self) -> np.ndarray:
        return self.deviation <= self.bound

    @property
    def pass_fraction(self) -> float:
        return float(np.mean(self.passed))


def rigidity_bound(n, N, gap):
    n = np.asarray(n, dtype=float)
    return np.maximum(N ** -0.75 * n ** -0.25, gap ** (1 / 9) * N ** (-2 / 3) * n ** (-1 / 3))


def rigidity_report(H: Hermitization, gammas=None, slack: float = 1.0, c: float = 0.5) -> RigidityReport:
    """Compare s_n with gamma_n for 1 <= n <= c N against slack * rigidity_bound."""
    N = H.N
    nmax = max(1, int(np.floor(c * N)))
    if gammas is None:
        gammas = quantiles(H.z, N, nmax)
    gammas = np.asarray(gammas)[:nmax]
    idx = np.arange(1, nmax + 1)
    gap = density_gap(H.z)
    dev = np.abs(H.sv[:nmax] - gammas)
    return RigidityReport(idx, dev, slack * rigidity_bound(idx, N, gap), slack, c, gap)
