import numpy as np
import pytest

from overlap_lab.ensembles import EnsembleSpec, sample
from overlap_lab.hermitization import (HermitizationError, hermitize, quantiles, rigidity_report, sv_overlap,
                                       trace_resolvent, trace_resolvent_unnormalized, two_resolvent_trace)
from overlap_lab.self_consistent import density_gap, solve_m

def _dense_F(N):
    F = np.zeros((2 * N, 2 * N))
    F[:N, N:] = np.eye(N)
    return F


def test_trivial_cases():
    H = hermitize(np.zeros((4, 4)), 1.0)
    assert np.allclose(H.sv, 1)
    H = hermitize(np.diag([0.0, 2.0]), 0.0)
    assert np.allclose(H.sv, [0, 2])


def test_reconstruction():
    X = sample(EnsembleSpec(2, 6, seed=1))
    H = hermitize(X, 0.3 + 0.1j)
    assert np.linalg.norm(X - (0.3 + 0.1j) * np.eye(6) - H.U @ np.diag(H.sv) @ H.V.conj().T) < 1e-10


def test_resolvents_against_dense():
    N = 8
    X = sample(EnsembleSpec(2, N, seed=2))
    H = hermitize(X, 0.4)
    W = H.dense()
    assert np.allclose(np.linalg.eigvalsh(W), H.eigenvalues(), atol=1e-12)
    F = _dense_F(N)
    for w1, w2 in ((0.1 + 0.2j, -0.3 + 0.05j), (0.5j, 0.5j)):
        G1 = np.linalg.inv(W - w1 * np.eye(2 * N))
        G2 = np.linalg.inv(W - w2 * np.eye(2 * N))
        assert trace_resolvent(H, w1) == pytest.approx(np.trace(G1) / (2 * N), abs=1e-12)
        assert trace_resolvent_unnormalized(H, w1) == pytest.approx(np.trace(G1), abs=1e-11)
        dense = np.trace(G1 @ F @ G2 @ F.T) / (2 * N)
        assert two_resolvent_trace(H, w1, w2) == pytest.approx(dense, abs=1e-12)
    eta = 0.3
    G = np.linalg.inv(W - 1j * eta * np.eye(2 * N))
    ImG = (G - G.conj().T) / 2j
    val = two_resolvent_trace(H, 1j * eta, 1j * eta, mode="imaginary")
    assert val.imag == pytest.approx(0, abs=1e-14) and val.real >= 0
    assert val == pytest.approx(np.trace(ImG @ F @ ImG @ F.T) / (2 * N), abs=1e-12)
    # double sum over eigenvectors w_n of W
    lam, Wv = np.linalg.eigh(W)
    ov = np.abs(Wv.conj().T @ F @ Wv) ** 2
    lor = eta / (lam**2 + eta**2)
    assert val.real == pytest.approx(lor @ ov @ lor / (2 * N), abs=1e-12)


def test_resolvent_large_eta():
    X = sample(EnsembleSpec(2, 16, seed=3))
    H = hermitize(X, 0.2)
    w = 1e4j
    assert abs(trace_resolvent(H, w) * -w - 1) < 1e-6


def test_local_law_single():
    N = 1024
    H = hermitize(sample(EnsembleSpec(2, N, seed=4)), 0.0)
    assert abs(trace_resolvent(H, 0.5j) - solve_m(0, 0.5j).m) <= 10 / (N * 0.5)


def test_zero_mode():
    X = np.diag([0.5, 1.0, -0.3 + 0.2j])
    H = hermitize(X, 0.5)
    eta = 1e-3
    assert eta * trace_resolvent_unnormalized(H, 1j * eta).imag >= 2 - 1e-12
    assert sv_overlap(H, 1, 1) == pytest.approx(0.5, abs=1e-12)


def test_sv_overlap_dense():
    N = 8
    X = sample(EnsembleSpec(2, N, seed=5))
    H = hermitize(X, 0.1)
    lam, Wv = np.linalg.eigh(H.dense())
    F = _dense_F(N)
    M = np.abs(Wv.conj().T @ F @ Wv)
    idx = lambda n: N + n - 1 if n > 0 else N + n  # noqa: E731
    for n in (1, -2, 5, 8):
        for m in (1, 3, -8):
            assert sv_overlap(H, n, m) == pytest.approx(M[idx(n), idx(m)], abs=1e-10)
    assert np.allclose(sv_overlap(hermitize(np.zeros((3, 3)), 1.0), 1, 1), 0.5)


def test_offaxis_required():
    H = hermitize(np.eye(3) * 0.5, 0.0)
    with pytest.raises(ValueError):
        trace_resolvent(H, 0.3)


def test_quantiles():
    g = quantiles(0.0, 256)
    assert g[-1] == pytest.approx(2.0, rel=0.01)
    assert np.all(np.diff(g) > 0)
    gap = density_gap(1.2)
    assert quantiles(1.2, 64, count=1)[0] >= gap / 2


def test_rigidity_slack():
    N = 256
    H = hermitize(sample(EnsembleSpec(2, N, seed=6)), 1.0)
    assert rigidity_report(H, slack=1e9).pass_fraction == 1.0
    rep = rigidity_report(H, slack=10 * np.log(N))
    assert rep.indices.max() <= N // 2


def test_nonfinite_rejected():
    X = np.eye(3)
    X[0, 0] = np.nan
    with pytest.raises((HermitizationError, ValueError)):
        hermitize(X, 0.0)
