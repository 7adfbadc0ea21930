import math

import numpy as np
import pytest
import scipy.linalg as sla

from hardylab.mesh import build_domain, generate_mesh
from hardylab.operators import assemble
from hardylab.spectral import (
    EigenFailure,
    dirichlet_eigenvalue,
    hardy_constant,
    hardy_series,
    improved_hardy_check,
    nearest_eigenpair,
    nested_levels,
    tu8_constant,
)

from conftest import uniform_interval


def test_hardy_constant_matches_dense_pencil(interval_ops):
    rep = hardy_constant(interval_ops)
    dense = sla.eigvalsh(interval_ops.K.toarray(), interval_ops.W.toarray(), subset_by_index=[0, 0])[0]
    assert rep.mu_h == pytest.approx(dense, rel=1e-10)
    assert rep.mu_h > 0.25
    assert rep.residual <= 1e-8
    assert rep.target == 0.25


def test_hardy_constant_on_disk_matches_dense(disk_ops):
    rep = hardy_constant(disk_ops)
    dense = sla.eigvalsh(disk_ops.K.toarray(), disk_ops.W.toarray(), subset_by_index=[0, 0])[0]
    assert rep.mu_h == pytest.approx(dense, rel=1e-10)
    assert rep.mu_h > 1.0


def test_hardy_constant_frozen_interval_values():
    # regression values at h = 1/100, 1/200 (uniform grid)
    vals = [hardy_constant(assemble(uniform_interval(n))).mu_h for n in (100, 200)]
    assert vals[0] == pytest.approx(0.40605, abs=5e-5)
    assert vals[1] == pytest.approx(0.37963, abs=5e-5)


def test_dirichlet_eigenvalue_tends_to_pi_squared():
    errs = [abs(dirichlet_eigenvalue(assemble(uniform_interval(n))) - math.pi**2) for n in (50, 100)]
    assert errs[1] < errs[0]
    # P1 eigenvalue error is pi^4 h^2 / 12 to leading order
    assert errs[1] == pytest.approx(math.pi**4 / 12 * 1e-4, rel=0.01)


def test_hardy_series_nested_is_monotone(disk_mesh):
    meshes = nested_levels(generate_mesh(build_domain("tangent_disk", radius=1.0), 0.2), 3)
    rep = hardy_series(meshes)
    mus = [m for _, m in rep.refinement_series]
    assert all(b < a for a, b in zip(mus, mus[1:]))
    assert all(m > 1.0 for m in mus)


def test_improved_hardy_floor(interval_ops, disk_ops, half_disk_ops):
    for ops in (interval_ops, disk_ops, half_disk_ops):
        rep = improved_hardy_check(ops)
        assert rep.inequality == "oeq3"
        assert rep.value >= 0.25 - 1e-8
        A = ops.A(ops.lambda_N).toarray()
        dense = sla.eigvalsh(A, ops.W_log.toarray(), subset_by_index=[0, 0])[0]
        assert rep.value == pytest.approx(dense, rel=1e-9)


def test_tu8_matches_dense_largest_eigenvalue(disk_ops):
    rep = tu8_constant(disk_ops)
    R = disk_ops.R_Omega
    B = (disk_ops.K_x2 - R**2 * disk_ops.A(1.0)).toarray()
    top = sla.eigvalsh(B, disk_ops.M.toarray())[-1]
    assert rep.value == pytest.approx(top, rel=1e-9)
    assert np.isfinite(rep.value)


def test_tu8_eps_two_is_the_same_path(interval_ops):
    a = tu8_constant(interval_ops)
    b = tu8_constant(interval_ops, 2.0)
    assert a.value == b.value and a.inequality == "tu8"
    c = tu8_constant(interval_ops, 1.0)
    assert c.inequality == "tuu8(1)"
    with pytest.raises(ValueError):
        tu8_constant(interval_ops, 0.0)


def test_tu8_quadratic_form_nonpositive_far_from_origin(disk_ops):
    # |x|^2 <= R^2 pointwise, so functions supported where |x| >= R/2 give a form <= 0
    R = disk_ops.R_Omega
    X = disk_ops.mesh.vertices[disk_ops.mesh.interior]
    rng = np.random.default_rng(3)
    B = disk_ops.K_x2 - R**2 * disk_ops.A(1.0)
    for _ in range(5):
        u = rng.standard_normal(disk_ops.ndof) * (np.linalg.norm(X, axis=1) >= 0.5 * R + disk_ops.mesh.h)
        assert u @ B @ u <= 0


def test_nearest_eigenpair_small_dense_branch():
    A = np.diag([1.0, 2.0, 5.0])
    B = np.eye(3)
    import scipy.sparse as sp

    mu, u, res, it = nearest_eigenpair(sp.csr_matrix(A), sp.csr_matrix(B), 1.9)
    assert mu == pytest.approx(2.0) and res < 1e-12


def test_eigen_failure_carries_last_iterate():
    err = EigenFailure("stagnated", 1.0, np.ones(2), 1e-3)
    assert err.value == 1.0 and err.residual == 1e-3
