import os
import subprocess
import sys

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from hardylab import _kernels
from hardylab.mesh import build_domain, generate_mesh
from hardylab.operators import (
    assemble,
    boundary_flux,
    coo_text,
    factored_form,
    hardy_form,
    lambda_N,
    lambda_star,
    truncated_factored_table,
)

from conftest import uniform_interval


def _hat(ops, x0):
    X = ops.mesh.vertices[ops.mesh.interior, 0]
    return (np.abs(X - x0) < 1e-12).astype(float)


def test_critical_couplings():
    assert [lambda_N(n) for n in (1, 2, 3)] == [0.25, 1.0, 2.25]
    assert [lambda_star(n) for n in (1, 2, 3)] == [0.25, 0.0, 0.25]


def test_hat_function_closed_forms():
    ops = assemble(uniform_interval(4))
    u = _hat(ops, 0.5)
    assert u @ ops.K @ u == pytest.approx(8.0, rel=1e-14)
    assert u @ ops.M @ u == pytest.approx(1.0 / 6.0, rel=1e-14)
    # the weighted mass against adaptive quadrature of phi^2 / x^2
    phi = lambda x: max(0.0, 1.0 - 4.0 * abs(x - 0.5))
    ref = integrate.quad(lambda x: phi(x) ** 2 / x**2, 0.25, 0.75, points=[0.5], epsabs=1e-14)[0]
    assert u @ ops.W @ u == pytest.approx(ref, abs=1e-6)
    # frozen value of the same integral
    assert u @ ops.W @ u == pytest.approx(0.72365996092449, abs=1e-12)


def test_lambda_zero_is_dirichlet_energy(disk_ops):
    u = np.random.default_rng(0).standard_normal(disk_ops.ndof)
    assert hardy_form(disk_ops, 0.0, u) == pytest.approx(u @ disk_ops.K @ u, rel=1e-14)
    assert hardy_form(disk_ops, 0.5, np.zeros(disk_ops.ndof)) == 0.0
    assert factored_form(disk_ops, 0.5, np.zeros(disk_ops.ndof)) == 0.0


def test_lambda_above_critical_rejected(disk_ops):
    with pytest.raises(ValueError, match=r"exceeds lambda\(N\)=1"):
        hardy_form(disk_ops, 1.01, np.ones(disk_ops.ndof))


def test_hardy_form_matches_adaptive_quadrature():
    ops = assemble(uniform_interval(1000))
    u = ops.mesh.interpolate(lambda x: x[:, 0] * (1 - x[:, 0]))
    ref = integrate.quad(lambda x: (1 - 2 * x) ** 2 - 0.25 * (1 - x) ** 2, 0, 1)[0]
    assert ref == pytest.approx(0.25)
    assert hardy_form(ops, 0.25, u) == pytest.approx(ref, abs=1e-4)


def test_factored_form_agrees_with_hardy_form():
    ops = assemble(uniform_interval(1000))
    u = ops.mesh.interpolate(lambda x: x[:, 0] * (1 - x[:, 0]) * np.sin(np.pi * x[:, 0]))
    h, f = hardy_form(ops, 0.25, u), factored_form(ops, 0.25, u)
    assert abs(f - h) / h <= 0.01


def test_form_consistency_improves_under_refinement():
    d = build_domain("tangent_disk", radius=1.0)
    g = lambda x: np.exp(-20 * np.sum((x - [0.0, 1.0]) ** 2, axis=1))  # supported away from the boundary
    res = []
    for h in (0.2, 0.1, 0.05):
        ops = assemble(generate_mesh(d, h))
        u = ops.mesh.interpolate(g)
        hf = hardy_form(ops, 0.6, u)
        res.append(abs(factored_form(ops, 0.6, u) - hf) / hf)
    assert res[-1] < 1e-8


@pytest.mark.parametrize("name", ["K", "M", "W", "W_log", "K_x2", "G"])
def test_assembled_matrices_exactly_symmetric(disk_ops, name):
    A = getattr(disk_ops, name)
    assert abs(A - A.T).max() == 0.0


def test_discrete_hardy_positivity(disk_ops, half_disk_ops, interval_ops):
    import scipy.linalg as sla

    for ops in (disk_ops, half_disk_ops, interval_ops):
        A = ops.A(ops.lambda_N).toarray()
        w = sla.eigvalsh(A, ops.W.toarray(), subset_by_index=[0, 0])[0]
        assert w >= -1e-10 * np.abs(np.diag(A)).max()


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), frac=st.floats(0.0, 1.0))
def test_hardy_form_positive_for_admissible_lambda(seed, frac):
    ops = _SMALL
    u = np.random.default_rng(seed).standard_normal(ops.ndof)
    assert hardy_form(ops, frac * ops.lambda_N, u) > 0


_SMALL = assemble(generate_mesh(build_domain("tangent_disk", radius=1.0), 0.2))


def test_mass_row_sums_integrate_basis(disk_ops):
    # sum_j M_ij = int phi_i minus the boundary-vertex contribution; compare with the load of 1
    ones = disk_ops.load(1.0)
    full = assemble(disk_ops.mesh).M  # same mesh, re-assembled: deterministic
    assert np.array_equal(full.data, disk_ops.M.data)
    assert ones.sum() <= disk_ops.mesh.cell_volumes().sum()


def test_boundary_flux_of_parabola():
    for n in (100, 200):
        ops = assemble(uniform_interval(n))
        u = ops.mesh.interpolate(lambda x: 0.5 * x[:, 0] * (1 - x[:, 0]))
        vals, bd = boundary_flux(ops, u)
        right = vals[np.argmax(bd.points[:, 0])]
        h = 1.0 / n
        # outward derivative at x = 1 is -1/2; P1 cell gradient is off by h/2
        assert right == pytest.approx(-0.5 + h / 2, abs=1e-12)
    vals, _ = boundary_flux(ops, np.zeros(ops.ndof))
    assert np.all(vals == 0)


def test_flux_exact_for_affine_data_on_one_cell(disk_ops):
    m = disk_ops.mesh
    f = 0
    c = m.facet_cell[f]
    g = np.array([0.3, -1.7])
    # nodal values of an affine function on the cell; boundary vertices carry zero trace already
    verts = m.cells[c]
    U = np.zeros(len(m.vertices))
    interior = [v for v in verts if m.dof[v] >= 0]
    bnd = [v for v in verts if m.dof[v] < 0]
    # affine function vanishing on the facet's vertices: l(x) = g.(x - x_b0) projected
    a, b = m.vertices[m.facets[f]]
    t = (b - a) / np.linalg.norm(b - a)
    nrm = np.array([t[1], -t[0]])
    for v in interior:
        U[v] = (m.vertices[v] - a) @ nrm * 2.5
    u = m.to_dofs(U)
    flux = disk_ops.facet_flux(u)[f]
    grad = disk_ops.cell_gradients(u)[c]
    assert flux == pytest.approx(grad @ m.normals[f], abs=1e-13)
    assert abs(flux) == pytest.approx(2.5, rel=1e-12)


def test_flux_consistency_with_divergence_theorem():
    # sum_f int du/dnu + int Delta u = 0 for u = bubble with Delta u = -4 on the tangent disk
    d = build_domain("tangent_disk", radius=1.0)
    prev = None
    for h in (0.1, 0.05):
        ops = assemble(generate_mesh(d, h))
        u = ops.mesh.interpolate(d.bubble)
        total = np.sum(ops.facet_flux(u) * ops.mesh.facet_measure) + 4 * ops.mesh.cell_volumes().sum()
        err = abs(total) / (4 * np.pi)
        if prev is not None:
            assert err < prev
        prev = err
    assert prev < 0.02


def test_numba_and_numpy_kernels_agree(disk_ops):
    if not _kernels.HAVE_NUMBA:
        pytest.skip("numba not installed")
    q = disk_ops.quad
    nq = len(q.w)
    rng = np.random.default_rng(1)
    args = (q.cell, q.bary, disk_ops.grads, q.w, rng.random(nq), rng.random((nq, 2)), rng.random((nq, 2)),
            rng.random(nq), len(disk_ops.mesh.cells))
    a = _kernels.form_local_numpy(*args)
    b = _kernels.form_local_numba(*args)
    assert np.max(np.abs(a - b)) <= 1e-13 * np.max(np.abs(a))


def test_numpy_fallback_selected_by_environment():
    code = "from hardylab import _kernels; print(_kernels.USE_NUMBA)"
    env = dict(os.environ, HARDYLAB_NUMBA="0")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "False"


def test_quad_order_and_delta_validation(disk_mesh):
    with pytest.raises(ValueError):
        assemble(disk_mesh, quad_order=1)
    with pytest.raises(ValueError):
        assemble(disk_mesh, delta=-1.0)
    reg = assemble(disk_mesh, delta=1e-2)
    u = np.ones(reg.ndof)
    assert u @ reg.W @ u < u @ assemble(disk_mesh).W @ u


def test_improved_weight_clamp_counts(disk_ops, interval_ops):
    assert disk_ops.n_clamped == 0
    assert interval_ops.n_clamped == 0


def test_truncated_table_approaches_factored_form():
    ops = assemble(uniform_interval(400))
    u = ops.mesh.interpolate(lambda x: x[:, 0] * (1 - x[:, 0]))
    table = truncated_factored_table(ops, 0.25, u, [0.5, 0.1, 0.01, 0.0])
    vals = [v for _, v in table]
    assert vals[-1] == pytest.approx(factored_form(ops, 0.25, u), rel=1e-12)
    assert all(abs(b - vals[-1]) <= abs(a - vals[-1]) for a, b in zip(vals, vals[1:]))


def test_coo_export_roundtrip(disk_ops):
    text = coo_text(disk_ops.K)
    lines = text.splitlines()
    n, m = map(int, lines[0].split()[2:])
    data = np.array([ln.split() for ln in lines[1:]], dtype=float)
    B = sp.coo_matrix((data[:, 2], (data[:, 0].astype(int), data[:, 1].astype(int))), shape=(n, m))
    assert abs(B - disk_ops.K).max() == 0.0


def test_kernel_benchmark_script_runs(capsys):
    import runpy
    from pathlib import Path

    script = Path(__file__).resolve().parents[1] / "benchmarks" / "bench_kernels.py"
    runpy.run_path(str(script), run_name="bench")["main"](0.2)
    out = capsys.readouterr().out
    assert "numpy kernel" in out and "sparse LU" in out
