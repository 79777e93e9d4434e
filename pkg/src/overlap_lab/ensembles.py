"""Random matrix ensembles with i.i.d. entries of variance 1/N.

Supported entry laws are ``gaussian`` (the Ginibre ensembles Gin_1, Gin_2),
``rademacher`` and ``uniform``. For ``beta=2`` the real and imaginary parts
are independent and each carries half the variance.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import prod

import numpy as np

from .rng import trial_rng

LAWS = ("gaussian", "rademacher", "uniform")


class EnsembleError(ValueError):
    """Invalid ensemble parameters."""


@dataclass(frozen=True)
class EnsembleSpec:
    beta: int
    dim: int
    entry_law: str = "gaussian"
    seed: int = 0

    def __post_init__(self):
        if self.beta not in (1, 2):
            raise EnsembleError(f"beta must be 1 or 2, got {self.beta!r}")
        if int(self.dim) < 2:
            raise EnsembleError(f"dim must be >= 2, got {self.dim!r}")
        if self.entry_law not in LAWS:
            raise EnsembleError(f"unknown entry law {self.entry_law!r}")
        if not 0 <= int(self.seed) < 2**64:
            raise EnsembleError("seed must be a 64-bit unsigned integer")


def _rng_for(spec: EnsembleSpec, trial: int, rng) -> np.random.Generator:
    return rng if rng is not None else trial_rng(spec.seed, trial)


def _standardized(law: str, size, rng: np.random.Generator) -> np.ndarray:
    """Real samples with mean 0 and variance 1 from the given law."""
    if law == "gaussian":
        return rng.standard_normal(size)
    if law == "rademacher":
        return 2.0 * rng.integers(0, 2, size=size).astype(float) - 1.0
    # uniform on [-sqrt(3), sqrt(3)]
    return np.sqrt(3.0) * rng.uniform(-1.0, 1.0, size=size)


def _sample(spec: EnsembleSpec, rng: np.random.Generator) -> np.ndarray:
    n = spec.dim
    if spec.beta == 1:
        return _standardized(spec.entry_law, (n, n), rng) / np.sqrt(n)
    re = _standardized(spec.entry_law, (n, n), rng)
    im = _standardized(spec.entry_law, (n, n), rng)
    return (re + 1j * im) / np.sqrt(2.0 * n)


def sample_ginibre(spec: EnsembleSpec, trial: int = 0, rng=None) -> np.ndarray:
    """Sample Gin_beta(N): i.i.d. Gaussian entries with mean 0 and variance 1/N.

    With ``rng=None`` the stream is derived from ``(spec.seed, trial)``, so the
    same spec and trial index always give the same matrix.
    """
    if spec.entry_law != "gaussian":
        raise EnsembleError("sample_ginibre requires entry_law='gaussian'")
    return _sample(spec, _rng_for(spec, trial, rng))


def sample_wigner(spec: EnsembleSpec, trial: int = 0, rng=None) -> np.ndarray:
    """Sample a non-Hermitian Wigner matrix with rademacher or uniform entries.

    rademacher: +-1/sqrt(N) for beta=1, (+-1 +- i)/sqrt(2N) for beta=2.
    uniform: centred uniform entries scaled to variance 1/N.
    """
    if spec.entry_law not in ("rademacher", "uniform"):
        raise EnsembleError(f"sample_wigner does not handle entry_law={spec.entry_law!r}")
    return _sample(spec, _rng_for(spec, trial, rng))


def sample(spec: EnsembleSpec, trial: int = 0, rng=None) -> np.ndarray:
    """Dispatch on ``spec.entry_law``."""
    if spec.entry_law == "gaussian":
        return sample_ginibre(spec, trial, rng)
    return sample_wigner(spec, trial, rng)


def gauss_divisible(X: np.ndarray, t: float, seed=0, beta: int | None = None) -> np.ndarray:
    """Return ``X + sqrt(t) Y`` with ``Y ~ Gin_beta(N)`` independent of X.

    ``seed`` may be an int or a numpy Generator. ``beta`` defaults to 1 for
    real X and 2 otherwise.
    """
    if t < 0:
        raise EnsembleError(f"noise variance must be non-negative, got {t}")
    X = np.asarray(X)
    if t == 0:
        return X.copy()
    if beta is None:
        beta = 1 if np.isrealobj(X) else 2
    rng = seed if isinstance(seed, np.random.Generator) else trial_rng(int(seed))
    Y = _sample(EnsembleSpec(beta, X.shape[0], "gaussian"), rng)
    return X + np.sqrt(t) * Y


# ---------------------------------------------------------------------------
# moment profiles


@dataclass
class MomentProfile:
    """Mixed moments E[(Re a)^p (Im a)^q] of sqrt(N) * entry for p + q <= 4."""

    moments: dict = field(default_factory=dict)
    label: str = ""

    def __getitem__(self, pq):
        return self.moments[pq]

    def complete(self, order: int = 4) -> bool:
        return all((p, q) in self.moments for p in range(order + 1) for q in range(order + 1 - p))


def _gauss_moment(k: int, var: float) -> float:
    if k % 2:
        return 0.0
    return var ** (k // 2) * prod(range(k - 1, 0, -2))


def _law_moment(law: str, k: int, var: float) -> float:
    """k-th moment of a real variable with the given law and variance."""
    if k == 0:
        return 1.0
    if k % 2:
        return 0.0
    if law == "gaussian":
        return _gauss_moment(k, var)
    if law == "rademacher":
        return var ** (k // 2)
    return (3.0 * var) ** (k // 2) / (k + 1)


def moment_profile(entry_law: str, beta: int, order: int = 4) -> MomentProfile:
    """Exact moment profile of the declared law."""
    if entry_law not in LAWS:
        raise EnsembleError(f"unknown entry law {entry_law!r}")
    if beta not in (1, 2):
        raise EnsembleError(f"beta must be 1 or 2, got {beta!r}")
    var = 1.0 if beta == 1 else 0.5
    out = {}
    for p in range(order + 1):
        for q in range(order + 1 - p):
            if beta == 1:
                out[(p, q)] = _law_moment(entry_law, p, var) if q == 0 else 0.0
            else:
                out[(p, q)] = _law_moment(entry_law, p, var) * _law_moment(entry_law, q, var)
    return MomentProfile(out, label=f"{entry_law}/beta={beta}")


def empirical_moment_profile(entries: np.ndarray, N: int, order: int = 4) -> MomentProfile:
    """Moment profile estimated from sampled (unscaled) matrix entries."""
    a = np.sqrt(N) * np.asarray(entries).ravel()
    re, im = a.real, (a.imag if np.iscomplexobj(a) else np.zeros_like(a.real))
    out = {}
    for p in range(order + 1):
        for q in range(order + 1 - p):
            out[(p, q)] = float(np.mean(re**p * im**q))
    return MomentProfile(out, label="empirical")


@dataclass
class MatchingReport:
    matching: bool
    low_order_gaps: dict
    fourth_order_gaps: dict
    constant: float
    t: float
    N: int

    @property
    def max_fourth_gap_raw(self) -> float:
        """Largest 4th-order gap for the unscaled entries (scaled gap / N^2)."""
        return max(self.fourth_order_gaps.values()) / self.N**2


def check_t_matching(a: MomentProfile, b: MomentProfile, t: float, N: int = 1,
                     C: float = 1.0, tol: float = 1e-12) -> MatchingReport:
    """Decide whether two entry laws are t-matching.

    Moments through order 3 must agree to ``tol``; raw 4th moments may differ
    by at most ``C * t / N**2``, i.e. the scaled profiles by ``C * t``.
    """
    if not (a.complete() and b.complete()):
        raise EnsembleError("moment profiles must be complete to order 4")
    low = {}
    fourth = {}
    for p in range(5):
        for q in range(5 - p):
            gap = abs(a[p, q] - b[p, q])
            if p + q <= 3:
                low[(p, q)] = gap
            elif p + q == 4:
                fourth[(p, q)] = gap
    ok = all(g <= tol for g in low.values()) and all(g <= C * t + tol for g in fourth.values())
    return MatchingReport(ok, low, fourth, C, t, N)
