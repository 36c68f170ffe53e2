import numpy as np
import pytest

from conftest import random_symmetric
from qni_lab.errors import RejectedInput
from qni_lab.linalg import (
    complete_orthonormal,
    eigh_jacobi,
    extreme_eigenpair,
    thin_svd_wide,
    top_eigenpair,
)


@pytest.mark.parametrize("d", [1, 2, 3, 5, 8, 16])
def test_jacobi_matches_reference_eigenvalues(d):
    rng = np.random.default_rng(d)
    for _ in range(10):
        a = random_symmetric(d, rng)
        w, v = eigh_jacobi(a)
        ref = np.sort(np.linalg.eigvalsh(a))[::-1]
        assert np.allclose(w, ref, atol=1e-10)
        # defining property and orthonormality
        assert np.linalg.norm(a @ v - v @ np.diag(w)) < 1e-9
        assert np.linalg.norm(v.T @ v - np.eye(d)) < 1e-10


def test_jacobi_sign_convention_deterministic():
    rng = np.random.default_rng(7)
    a = random_symmetric(4, rng)
    w1, v1 = eigh_jacobi(a)
    w2, v2 = eigh_jacobi(a.copy())
    assert np.array_equal(w1, w2)
    assert np.array_equal(v1, v2)
    for j in range(4):
        first = v1[np.abs(v1[:, j]) > 1e-12, j][0]
        assert first > 0


def test_jacobi_rejects_nonsquare_and_asymmetric():
    with pytest.raises(RejectedInput):
        eigh_jacobi(np.ones((2, 3)))
    with pytest.raises(RejectedInput):
        eigh_jacobi(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_top_and_extreme_eigenpairs():
    a = np.diag([2.0, -5.0, 1.0])
    lam, vec = top_eigenpair(a)
    assert lam == pytest.approx(2.0)
    assert np.allclose(np.abs(vec), [1, 0, 0])
    lam_e, vec_e = extreme_eigenpair(a)
    assert lam_e == pytest.approx(-5.0)
    assert np.allclose(np.abs(vec_e), [0, 1, 0])


def test_complete_orthonormal_extends_to_square():
    rng = np.random.default_rng(3)
    q, _ = np.linalg.qr(rng.standard_normal((6, 2)))
    full = complete_orthonormal(q, 6)
    assert full.shape == (6, 6)
    assert np.linalg.norm(full.T @ full - np.eye(6)) < 1e-10
    assert np.allclose(full[:, :2], q)


@pytest.mark.parametrize("shape", [(2, 4), (3, 3), (4, 7)])
def test_thin_svd_reconstructs(shape):
    rng = np.random.default_rng(shape[0] * 10 + shape[1])
    theta = rng.standard_normal(shape)
    u, s, v = thin_svd_wide(theta)
    assert np.linalg.norm(u @ np.diag(s) @ v.T - theta) < 1e-9
    assert np.linalg.norm(u.T @ u - np.eye(shape[0])) < 1e-10
    assert np.linalg.norm(v.T @ v - np.eye(shape[0])) < 1e-9
    ref = np.linalg.svd(theta, compute_uv=False)
    assert np.allclose(np.sort(s)[::-1], ref, atol=1e-9)


def test_thin_svd_handles_rank_deficiency():
    theta = np.array([[1.0, 1.0, 0.0], [1.0, 1.0, 0.0]])  # rank 1, d=2, k=3
    u, s, v = thin_svd_wide(theta)
    assert s[1] < 1e-12
    assert np.linalg.norm(u @ np.diag(s) @ v.T - theta) < 1e-9
    assert np.linalg.norm(v.T @ v - np.eye(2)) < 1e-9


def test_thin_svd_rejects_tall():
    with pytest.raises(RejectedInput):
        thin_svd_wide(np.zeros((3, 2)))
