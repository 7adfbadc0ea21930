import numpy as np
import pytest
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from hypothesis import given, settings
from hypothesis import strategies as st

from hardylab.krylov import CGFailure, cg


def _spd(n, seed):
    rng = np.random.default_rng(seed)
    Q = rng.standard_normal((n, n))
    return Q @ Q.T + n * np.eye(n)


@settings(max_examples=30, deadline=None)
@given(n=st.integers(2, 40), seed=st.integers(0, 2**31 - 1))
def test_cg_solves_spd_systems(n, seed):
    A = _spd(n, seed)
    b = np.random.default_rng(seed + 1).standard_normal(n)
    res = cg(lambda x: A @ x, b, rtol=1e-12, max_iter=10 * n)
    assert res.converged
    assert np.linalg.norm(A @ res.x - b) <= 1e-10 * np.linalg.norm(b)
    assert res.history[0] == pytest.approx(1.0)
    assert len(res.history) == res.iterations + 1


def test_cg_matches_sparse_direct_solve():
    n = 200
    A = sp.diags([-1, 2.5, -1], [-1, 0, 1], shape=(n, n)).tocsr()
    b = np.linspace(0, 1, n)
    res = cg(lambda x: A @ x, b, rtol=1e-13, precond=lambda r: r / 2.5)
    assert np.allclose(res.x, spla.spsolve(A.tocsc(), b), atol=1e-11)


def test_zero_rhs_returns_zero():
    res = cg(lambda x: x, np.zeros(5))
    assert res.iterations == 0 and res.history == [0.0] and not np.any(res.x)


def test_failure_carries_history():
    A = _spd(30, 0)
    with pytest.raises(CGFailure) as exc:
        cg(lambda x: A @ x, np.ones(30), rtol=1e-14, max_iter=2)
    assert len(exc.value.history) == 3
    res = cg(lambda x: A @ x, np.ones(30), rtol=1e-14, max_iter=2, raise_on_fail=False)
    assert not res.converged


def test_indefinite_operator_detected():
    A = np.diag([1.0, -1.0])
    with pytest.raises(CGFailure):
        cg(lambda x: A @ x, np.array([1.0, 1.0]))


def test_complex_hermitian_with_real_inner_product():
    rng = np.random.default_rng(2)
    Z = rng.standard_normal((20, 20)) + 1j * rng.standard_normal((20, 20))
    H = Z @ Z.conj().T + 20 * np.eye(20)
    b = rng.standard_normal(20) + 1j * rng.standard_normal(20)
    res = cg(lambda x: H @ x, b, rtol=1e-12, max_iter=200)
    assert np.allclose(H @ res.x, b, atol=1e-9)
