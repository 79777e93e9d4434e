import numpy as np
import pytest
from scipy.stats import unitary_group

from overlap_lab.eigen_overlaps import (DegenerateSpectrumError, condition_number_probe, eigensystem,
                                        overlap_from_schur, overlap_matrix, partial_schur, reassemble, rescale,
                                        rescaled_overlaps)
from overlap_lab.ensembles import EnsembleSpec, sample


def test_normal_matrix():
    E = eigensystem(np.diag([1.0, 2.0, 3.0]))
    assert np.allclose(np.abs(E.R), np.eye(3)) and np.allclose(np.abs(E.L), np.eye(3))
    assert np.allclose(overlap_matrix(E), np.eye(3))


def test_two_by_two():
    a = 2.0
    E = eigensystem(np.array([[0.0, a], [0.0, 1.0]]))
    assert E.values[0] == 0
    O = overlap_matrix(E)
    assert np.allclose(O, [[1 + a * a, -a * a], [-a * a, 1 + a * a]])
    # l_1 is parallel to (1, -a)
    l1 = E.L[:, 0]
    assert abs(l1[1] / l1[0] + a) < 1e-12


@pytest.mark.parametrize("beta", [1, 2])
def test_identities(beta):
    X = sample(EnsembleSpec(beta, 8, seed=3))
    E = eigensystem(X)
    assert np.abs(E.L.conj().T @ E.R - np.eye(8)).max() < 1e-8
    O = overlap_matrix(E)
    assert np.all(np.diag(O).real >= 1 - 1e-12)
    assert np.allclose(O.sum(axis=1), 1, atol=1e-8)
    assert np.allclose(np.diag(O).real, E.diagonal_overlaps())


def test_real_eigenvalues_first():
    E = eigensystem(sample(EnsembleSpec(1, 32, seed=4)))
    k = E.n_real
    assert k >= 1 and np.all(E.real_flags[:k]) and not np.any(E.real_flags[k:])


def test_degenerate_rejected():
    with pytest.raises(DegenerateSpectrumError):
        eigensystem(np.eye(3))


def test_rescale():
    N = 100
    z = 0.6
    assert rescale(N * (1 - z * z), z, N, "bulk") == pytest.approx(1)
    assert rescale(np.sqrt(N), 1.0, N, "edge") == pytest.approx(1)
    assert np.isnan(rescale(5.0, 1.2, N, "bulk"))
    recs = rescaled_overlaps(eigensystem(sample(EnsembleSpec(1, 16, seed=2))), "bulk", real_only=True)
    assert all(abs(r.z.imag) < 1e-8 for r in recs)


def test_schur_upper_triangular():
    X = np.triu(np.arange(1.0, 17.0).reshape(4, 4))
    ps = partial_schur(X, 0)
    assert np.allclose(np.abs(ps.v), [1, 0, 0, 0])
    assert np.allclose(np.abs(ps.M), np.abs(X[1:, 1:]))


@pytest.mark.parametrize("beta", [1, 2])
def test_schur_round_trip_and_spectrum(beta):
    X = sample(EnsembleSpec(beta, 6, seed=8))
    E = eigensystem(X)
    for k in range(6):
        ps = partial_schur(X, k, E)
        assert np.linalg.norm(reassemble(ps.z, ps.v, ps.w, ps.M) - X) < 1e-8
        rest = np.delete(E.values, k)
        dist = np.abs(np.linalg.eigvals(ps.M)[:, None] - rest[None, :])
        assert dist.min(axis=1).max() < 1e-8 and dist.min(axis=0).max() < 1e-8
        assert overlap_from_schur(ps.z, ps.w, ps.M) == pytest.approx(E.diagonal_overlaps()[k], rel=1e-8)


def test_overlap_from_schur_trivial():
    assert overlap_from_schur(0.0, np.zeros(3), np.diag([1.0, 2.0, 3.0])) == 1.0
    assert overlap_from_schur(0.0, np.array([2.0]), np.array([[1.0]])) == pytest.approx(5.0)


def test_unitary_invariance():
    X = sample(EnsembleSpec(2, 16, seed=9))
    Q = unitary_group.rvs(16, random_state=1)
    E1, E2 = eigensystem(X), eigensystem(Q @ X @ Q.conj().T)
    k = [int(np.argmin(np.abs(E2.values - z))) for z in E1.values]
    assert np.allclose(overlap_matrix(E1), overlap_matrix(E2)[np.ix_(k, k)], atol=1e-6)


def test_condition_number_probe():
    speed, root = condition_number_probe(np.array([[0.0, 2.0], [0.0, 1.0]]), 0)
    assert speed == pytest.approx(np.sqrt(5), rel=1e-3) and root == pytest.approx(np.sqrt(5))
    speed, root = condition_number_probe(np.diag([0.0, 1.0, 3.0]), 1)
    assert speed == pytest.approx(1, rel=1e-6)


def test_probe_second_order():
    X = sample(EnsembleSpec(2, 6, seed=10))
    errs = []
    for h in (1e-2, 5e-3):
        s, r = condition_number_probe(X, 0, h)
        errs.append(abs(s - r))
    assert errs[1] < errs[0] / 3
