"""Self-consistent density of the Hermitisation of X - z.

The Stieltjes transform m = m_z(w) of the symmetrised singular value law of
X - z solves

    -1/m = m + w - |z|^2 / (m + w),    Im w * Im m > 0,

which after clearing denominators is the monic cubic

    m^3 + 2 w m^2 + (w^2 - |z|^2 + 1) m + w = 0.

All three roots are produced in closed form (Cardano) and the admissible one
is selected by the sign condition, with a continuation from large Im w as a
fallback when the sign filter is ambiguous.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

BOUNDARY_ETA = 1e-9
GAP_THRESHOLD = 1e-8
_OMEGA = np.exp(2j * np.pi / 3)


class SolverError(RuntimeError):
    """No admissible root of the cubic could be selected."""


class StabilityError(ArithmeticError):
    """The two-resolvent denominator vanishes."""


# ---------------------------------------------------------------------------
# cubic roots


def cubic_coefficients(z, w):
    """Coefficients (a, b, c) of the monic cubic m^3 + a m^2 + b m + c."""
    w = np.asarray(w, dtype=complex)
    z2 = np.abs(z) ** 2
    return 2.0 * w, w * w - z2 + 1.0, w


def cubic_residual(m, z, w):
    a, b, c = cubic_coefficients(z, w)
    return ((m + a) * m + b) * m + c


def _cardano(a, b, c):
    """All roots of x^3 + a x^2 + b x + c (complex, vectorised), shape (..., 3)."""
    a, b, c = np.broadcast_arrays(np.asarray(a, complex), np.asarray(b, complex), np.asarray(c, complex))
    p = b - a * a / 3.0
    q = 2.0 * a**3 / 27.0 - a * b / 3.0 + c
    s = np.sqrt(q * q / 4.0 + p**3 / 27.0)
    # larger-modulus branch avoids cancellation
    t1, t2 = -q / 2.0 + s, -q / 2.0 - s
    t = np.where(np.abs(t1) >= np.abs(t2), t1, t2)
    C = np.where(t == 0, 0.0, t ** (1.0 / 3.0))
    ys = []
    for k in range(3):
        Ck = C * _OMEGA**k
        with np.errstate(divide="ignore", invalid="ignore"):
            yk = np.where(Ck == 0, 0.0, Ck - p / (3.0 * Ck))
        ys.append(yk - a / 3.0)
    roots = np.stack(ys, axis=-1)
    return _polish(roots, a[..., None], b[..., None], c[..., None])


def _polish(x, a, b, c, steps=3):
    """Newton steps on each root, kept only where they reduce the residual."""
    for _ in range(steps):
        f = ((x + a) * x + b) * x + c
        df = (3.0 * x + 2.0 * a) * x + b
        with np.errstate(divide="ignore", invalid="ignore"):
            xn = x - f / df
        fn = ((xn + a) * xn + b) * xn + c
        better = np.isfinite(xn) & (np.abs(fn) < np.abs(f))
        x = np.where(better, xn, x)
    return x


def cubic_roots(z, w):
    """The three roots of the monic cubic at (z, w)."""
    return _cardano(*cubic_coefficients(z, w))


# ---------------------------------------------------------------------------
# root selection


def _continuation(z, w, ratio=0.9):
    """Track the admissible root from Im w = max(10, 10|w|) down to Im w."""
    E, eta = w.real, abs(w.imag)
    eta_hi = max(10.0, 10.0 * abs(w))
    m = -1.0 / complex(E, eta_hi)
    etas = [eta_hi]
    while etas[-1] * ratio > eta:
        etas.append(etas[-1] * ratio)
    etas.append(eta)
    for e in etas:
        r = cubic_roots(z, complex(E, e))
        m = r[np.argmin(np.abs(r - m))]
    if not m.imag > 0:
        raise SolverError(f"continuation ended on an inadmissible root m={m} at z={z}, w={w}")
    return m if w.imag > 0 else np.conj(m)


def solve_m_array(z, w):
    """Vectorised m_z(w) for ``Im w != 0`` (real w uses Im w = BOUNDARY_ETA)."""
    w = np.array(w, dtype=complex, copy=True)
    scalar = w.ndim == 0
    w = np.atleast_1d(w)
    w = np.where(w.imag == 0, w + 1j * BOUNDARY_ETA, w)
    roots = cubic_roots(z, w)
    sgn = np.sign(w.imag)[:, None]
    admissible = sgn * roots.imag > 0
    count = admissible.sum(axis=1)
    pick = np.argmax(np.where(admissible, sgn * roots.imag, -np.inf), axis=1)
    m = roots[np.arange(len(w)), pick]
    for i in np.flatnonzero(count != 1):
        m[i] = _continuation(z, w[i])
    return m[0] if scalar else m


@dataclass(frozen=True)
class StieltjesSolution:
    z: complex
    w: complex
    m: complex
    u: complex
    residual: float

    @property
    def sigma(self) -> float:
        return self.m.real

    @property
    def rho(self) -> float:
        return self.m.imag


def solve_m(z: complex, w: complex) -> StieltjesSolution:
    """Solve the cubic for m_z(w) and return m, u = m/(m+w) and the residual."""
    w = complex(w)
    if w.imag == 0:
        w = complex(w.real, BOUNDARY_ETA)
    m = complex(solve_m_array(z, w))
    res = abs(complex(cubic_residual(m, z, w)))
    return StieltjesSolution(complex(z), w, m, m / (m + w), res)


def u_of(m, w):
    return m / (m + w)


# ---------------------------------------------------------------------------
# density on the real axis


def _real_cubic_pair_imag(z, E):
    """|Im| of the complex-conjugate root pair of the real cubic at w = E (0 if all real).

    Works in real arithmetic with a cancellation-free form of the Cardano
    difference, so the result is accurate down to ~1e-16 near the edges.
    """
    E = np.asarray(E, dtype=float)
    a = 2.0 * E
    b = E * E - abs(z) ** 2 + 1.0
    c = E
    p = b - a * a / 3.0
    q = 2.0 * a**3 / 27.0 - a * b / 3.0 + c
    disc = q * q / 4.0 + p**3 / 27.0
    out = np.zeros(np.broadcast(E, disc).shape)
    pos = disc > 0
    sd = np.sqrt(np.where(pos, disc, 0.0))
    A = np.cbrt(-q / 2.0 + sd)
    B = np.cbrt(-q / 2.0 - sd)
    denom = A * A + A * B + B * B
    with np.errstate(divide="ignore", invalid="ignore"):
        diff = np.where(denom > 0, 2.0 * sd / denom, 0.0)
    out = np.where(pos, 0.5 * np.sqrt(3.0) * np.abs(diff), 0.0)
    real_root = A + B - a / 3.0
    pair_real = -(A + B) / 2.0 - a / 3.0
    return out, real_root, pair_real


def rho_real(z, E):
    """Boundary value rho_z(E) = Im m_z(E + i0) for real E (vectorised).

    Of the real cubic's roots, the boundary value is the one continuing the
    proxy solution at E + i*BOUNDARY_ETA; this discards the far-away complex
    pair that exists outside the support when |z| < 1.
    """
    E = np.atleast_1d(np.asarray(E, dtype=float))
    im, real_root, pair_real = _real_cubic_pair_imag(z, E)
    proxy = solve_m_array(z, E + 1j * BOUNDARY_ETA)
    d_pair = np.abs(proxy - (pair_real + 1j * im))
    d_real = np.abs(proxy - real_root)
    return np.where((im > 0) & (d_pair <= d_real), im, 0.0)


def density_gap(z: complex) -> float:
    """Width Delta_z of the gap [-Delta/2, Delta/2] in the support of rho_z.

    Zero for |z| <= 1; otherwise twice the largest E with rho_z < 1e-8 on
    [0, E], located by bisection.
    """
    if abs(z) <= 1.0:
        return 0.0
    r = abs(z)
    grid = np.linspace(0.0, r + 2.0, 4001)
    above = rho_real(z, grid) >= GAP_THRESHOLD
    if not above.any():
        raise SolverError(f"no support found for z={z}")
    k = int(np.argmax(above))
    lo, hi = grid[max(k - 1, 0)], grid[k]
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if rho_real(z, mid)[0] < GAP_THRESHOLD:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * max(hi, 1e-300):
            break
    return 2.0 * lo


def support_edge(z: complex) -> float:
    """Outer edge E_+ of the support of rho_z on the positive axis."""
    inner = density_gap(z) / 2.0
    grid = np.linspace(inner, abs(z) + 3.0, 4001)[1:]
    inside = rho_real(z, grid) > 0
    k = len(grid) - 1 - int(np.argmax(inside[::-1]))
    lo, hi = grid[k], grid[min(k + 1, len(grid) - 1)]
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if rho_real(z, mid)[0] > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * hi:
            break
    return hi


# ---------------------------------------------------------------------------
# deterministic approximations


def det_approx_single(z: complex, w: complex) -> np.ndarray:
    """2x2 block coefficients of M_z(w) = [[m, -z u], [-conj(z) u, m]]."""
    sol = solve_m(z, w)
    m, u = sol.m, sol.u
    return np.array([[m, -z * u], [-np.conj(z) * u, m]], dtype=complex)


@dataclass(frozen=True)
class DetApprox2:
    """Blocks of M_z(w1, F, w2); the block-normalised trace against F* is A12."""

    A11: complex
    A12: complex
    A21: complex
    A22: complex
    denominator: complex

    def matrix(self) -> np.ndarray:
        return np.array([[self.A11, self.A12], [self.A21, self.A22]])


def _two_blocks(z, m1, u1, m2, u2):
    z2 = abs(z) ** 2
    zb = np.conj(z)
    den = (1 - z2 * u1 * u2) ** 2 - m1**2 * m2**2
    if abs(den) < 1e-14:
        raise StabilityError(f"vanishing two-resolvent denominator {den} (phi ~ 0)")
    A11 = -zb * m1 * (1 - u1) * u2 / den
    A12 = m1 * m2 * (1 - u1 * u2) / den
    A21 = zb**2 * (u1 * u2 + (m1**2 * (1 - u1) * u2**2 + m2**2 * (1 - u2) * u1**2) / den)
    A22 = -zb * m2 * (1 - u2) * u1 / den
    return DetApprox2(A11, A12, A21, A22, den)


def det_approx_two(z: complex, w1: complex, w2: complex) -> DetApprox2:
    """Deterministic approximation of G(w1) F G(w2) in 2x2 block form."""
    s1, s2 = solve_m(z, w1), solve_m(z, w2)
    return _two_blocks(z, s1.m, s1.u, s2.m, s2.u)


def det_approx_two_imag(z: complex, w1: complex, w2: complex) -> complex:
    """A12-entry of the approximation of Im G(w1) F Im G(w2).

    Uses Im G(w) = (G(w) - G(conj w)) / 2i and linearity in each slot.
    """
    total = 0.0
    for a, sa in ((w1, 1), (np.conj(w1), -1)):
        for b, sb in ((w2, 1), (np.conj(w2), -1)):
            total += sa * sb * det_approx_two(z, a, b).A12
    return -0.25 * total


@dataclass(frozen=True)
class StabilityQuantities:
    l1: float
    l2: float
    phi: float
    phi2_av: float
    phi1_iso: float
    phi2_iso: float
    phi_lower: float

    def as_dict(self):
        return dict(self.__dict__)


def stability(z: complex, w1: complex, w2: complex) -> StabilityQuantities:
    """Stability factor phi and the derived bounds phi2_av, phi1_iso, phi2_iso.

    ``phi_lower`` is (1/2)(eta1/(rho1+eta1) + eta2/(rho2+eta2) + (|m1|-|m2|)^2).
    """
    s1, s2 = solve_m(z, w1), solve_m(z, w2)
    m1, m2, u1, u2 = s1.m, s2.m, s1.u, s2.u
    e1, e2 = s1.w.imag, s2.w.imag
    r1, r2 = m1.imag, m2.imag
    phi = 1.0 - abs(z) ** 2 * abs((u1 * u2).real) - abs((m1 * m2).real)
    lower = 0.5 * (e1 / (r1 + e1) + e2 / (r2 + e2) + (abs(m1) - abs(m2)) ** 2)
    return StabilityQuantities(
        l1=e1 * r1,
        l2=e2 * r2,
        phi=phi,
        phi2_av=abs(m1 * m2) / phi,
        phi1_iso=max(abs(m1), abs(m2)) / phi,
        phi2_iso=abs(m1 * m2) / (abs(e1) * phi),
        phi_lower=lower,
    )


def eta_table(z: complex, etas, E: float = 0.0):
    """Rows (eta, sigma, rho, Re u, Im u) of m_z(E + i eta) over an eta grid."""
    etas = np.asarray(etas, dtype=float)
    w = E + 1j * etas
    m = solve_m_array(z, w)
    u = m / (m + w)
    return np.column_stack([etas, m.real, m.imag, u.real, u.imag])
