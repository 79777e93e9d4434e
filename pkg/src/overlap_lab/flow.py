"""Characteristic flow of the self-consistent equation.

Along dz/dt = -z/2, dw/dt = -m_z(w) - w/2 the solution scales as
m_t = e^{t/2} m_0 (and u_t = e^t u_0), which gives the closed form

    z_t = z_0 e^{-t/2},
    w_t = w_0 e^{-t/2} - m_0 (e^{t/2} - e^{-t/2}).
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy import integrate

from .self_consistent import solve_m, solve_m_array


class FlowCrossingError(ValueError):
    """The characteristic reaches the real axis before the requested time."""

    def __init__(self, message, crossing_time):
        super().__init__(message)
        self.crossing_time = crossing_time


@dataclass(frozen=True)
class FlowState:
    t: float
    z: complex
    w: complex
    m: complex
    u: complex
    solver_gap: float  # |solve_m(z_t, w_t) - e^{t/2} m_0|

    def as_dict(self):
        d = asdict(self)
        for k in ("z", "w", "m", "u"):
            d[k] = [d[k].real, d[k].imag]
        return d


def crossing_time(z0: complex, w0: complex) -> float:
    """Time at which Im w_t vanishes: log(1 + eta_0 / rho_0)."""
    s = solve_m(z0, w0)
    return float(np.log1p(s.w.imag / s.m.imag))


def _closed_form(z0, w0, m0, t):
    a, b = np.exp(-0.5 * t), np.exp(0.5 * t)
    return z0 * a, w0 * a - m0 * (b - a), b * m0


def flow_forward(z0: complex, w0: complex, t: float, check: bool = True) -> FlowState:
    """Closed-form state at time t; raises FlowCrossingError past the crossing time."""
    if t < 0:
        raise ValueError("t must be non-negative")
    s0 = solve_m(z0, w0)
    tc = float(np.log1p(s0.w.imag / s0.m.imag))
    if t >= tc:
        raise FlowCrossingError(f"characteristic crosses the real axis at t = {tc:.6g}", tc)
    zt, wt, mt = _closed_form(complex(z0), s0.w, s0.m, t)
    ut = np.exp(t) * s0.u
    gap = abs(solve_m(zt, wt).m - mt) if check else float("nan")
    return FlowState(float(t), complex(zt), complex(wt), complex(mt), complex(ut), float(gap))


def flow_inverse(zt: complex, wt: complex, t: float) -> tuple[complex, complex]:
    """(z_0, w_0) with w_0 = (w_t + m_t (1 - e^{-t})) e^{t/2} and z_0 = z_t e^{t/2}."""
    mt = solve_m(zt, wt).m
    e = np.exp(0.5 * t)
    return complex(zt * e), complex((wt + mt * (1.0 - np.exp(-t))) * e)


def trajectory(z0: complex, w0: complex, T: float, steps: int = 100) -> list[FlowState]:
    return [flow_forward(z0, w0, t) for t in np.linspace(0.0, T, steps + 1)]


def rk4_flow(z0: complex, w0: complex, t: float, steps: int = 200, form: str = "closed") -> tuple[complex, complex]:
    """Integrate the characteristic ODE with classical RK4.

    ``form="closed"`` uses dw/dt = -m - w/2 (the form whose solution is the
    closed form above); ``form="printed"`` uses dw/dt = -m/2 - w for comparison.
    """
    if form == "closed":
        rhs_w = lambda z, w: -solve_m(z, w).m - 0.5 * w  # noqa: E731
    elif form == "printed":
        rhs_w = lambda z, w: -0.5 * solve_m(z, w).m - w  # noqa: E731
    else:
        raise ValueError(f"unknown form {form!r}")

    def rhs(y):
        return np.array([-0.5 * y[0], rhs_w(y[0], y[1])])

    y = np.array([complex(z0), complex(w0)])
    h = t / steps
    for _ in range(steps):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * h * k1)
        k3 = rhs(y + 0.5 * h * k2)
        k4 = rhs(y + h * k3)
        y = y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return complex(y[0]), complex(y[1])


def _phi_diag(z, m, u):
    return 1.0 - abs(z) ** 2 * np.abs((u * u).real) - np.abs((m * m).real)


@dataclass
class FlowReport:
    T: float
    steps: int
    monotone: dict
    int1_residual: float
    int2_constants: dict
    max_solver_gap: float

    @property
    def all_monotone(self) -> bool:
        return all(self.monotone.values())


def _nonincreasing(x, rtol=1e-12):
    x = np.asarray(x, dtype=float)
    return bool(np.all(np.diff(x) <= rtol * np.abs(x[:-1])))


def flow_invariant_report(z0: complex, w0: complex, T: float, steps: int = 100,
                          quad_points: int = 10_001, alphas=(1.5, 2.0)) -> FlowReport:
    """Monotonicity along the trajectory plus the two integral identities.

    ``monotone`` holds the five flags: |z_t|, |eta_t|, |eta_t|/rho_t,
    |eta_t| rho_t and phi_t (all non-increasing). Since m_t = e^{t/2} m_0 and
    u_t = e^t u_0, phi_t is decreasing and hence 1/phi_t is increasing.
    """
    ts = np.linspace(0.0, T, steps + 1)
    s0 = solve_m(z0, w0)
    tc = np.log1p(s0.w.imag / s0.m.imag)
    if T >= tc:
        raise FlowCrossingError(f"characteristic crosses the real axis at t = {tc:.6g}", tc)
    zt, wt, mt = _closed_form(complex(z0), s0.w, s0.m, ts)
    solved = solve_m_array(zt, wt)
    ut = np.exp(ts) * s0.u
    eta, rho = np.abs(wt.imag), np.abs(solved.imag)
    monotone = {
        "abs_z": _nonincreasing(np.abs(zt)),
        "eta": _nonincreasing(eta),
        "eta_over_rho": _nonincreasing(eta / rho),
        "eta_times_rho": _nonincreasing(eta * rho),
        "phi": _nonincreasing(_phi_diag(zt, mt, ut)),
    }
    if T == 0:
        return FlowReport(T, steps, {k: True for k in monotone}, 0.0, {a: 0.0 for a in alphas}, 0.0)

    r = np.linspace(0.0, T, quad_points)
    zr, wr, _ = _closed_form(complex(z0), s0.w, s0.m, r)
    mr = solve_m_array(zr, wr)
    er, pr = np.abs(wr.imag), np.abs(mr.imag)
    lhs = integrate.simpson(pr / er, x=r)
    rhs = np.log(er[0] / er[-1]) - T / 2.0
    constants = {}
    for a in alphas:
        integral = integrate.simpson(er ** (-a), x=r)
        constants[a] = float(integral * er[-1] ** (a - 1) * pr[-1])
    return FlowReport(T, steps, monotone, float(abs(lhs - rhs)), constants,
                      float(np.max(np.abs(solved - mt))))
