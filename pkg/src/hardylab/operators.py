"""P1 finite element forms for the boundary-singular operator -Delta - lambda/|x|^2.

All matrices act on the Dirichlet degrees of freedom (interior vertices).
Cells away from the origin and the boundary use a fixed symmetric rule;
cells touching the boundary or lying near the origin use a Duffy-collapsed
product rule centred at the vertex nearest to the origin, so the singular
weights 1/|x|^2 and 1/x_N are sampled only at strictly interior points.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .mesh import Mesh, classify_boundary
from .quadrature import collapsed_triangle_rule, gauss_interval, simplex_rule

__all__ = [
    "OperatorSet",
    "QuadratureData",
    "assemble",
    "hardy_form",
    "factored_form",
    "boundary_flux",
    "truncated_factored_table",
    "export_coo",
    "coo_text",
    "lambda_N",
    "lambda_star",
]

LOG_CLAMP = 1e-8
SINGULAR_RADIUS = 4.0  # in units of h
SINGULAR_RULE_2D = (8, 16)
SINGULAR_ORDER_1D = 30


def lambda_N(N: int) -> float:
    return N * N / 4.0


def lambda_star(N: int) -> float:
    return (N - 2) ** 2 / 4.0


@dataclass(frozen=True)
class QuadratureData:
    """Cell quadrature points sorted by cell; weights include the cell volume."""

    cell: np.ndarray
    bary: np.ndarray
    x: np.ndarray
    w: np.ndarray
    r2: np.ndarray


def _barycentric_gradients(mesh: Mesh) -> np.ndarray:
    P = mesh.vertices[mesh.cells]
    if mesh.dim == 1:
        L = P[:, 1, 0] - P[:, 0, 0]
        return np.stack([-1.0 / L, 1.0 / L], axis=1)[:, :, None]
    e1, e2 = P[:, 1] - P[:, 0], P[:, 2] - P[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    g1 = np.column_stack([e2[:, 1], -e2[:, 0]]) / det[:, None]
    g2 = np.column_stack([-e1[:, 1], e1[:, 0]]) / det[:, None]
    return np.stack([-g1 - g2, g1, g2], axis=1)


def _singular_cells(mesh: Mesh) -> np.ndarray:
    on_bnd = mesh.dof[mesh.cells] < 0
    rmin = np.min(np.linalg.norm(mesh.vertices[mesh.cells], axis=2), axis=1)
    return on_bnd.any(axis=1) | (rmin <= SINGULAR_RADIUS * mesh.h)


def build_quadrature(mesh: Mesh, quad_order: int) -> QuadratureData:
    nc, nv = mesh.cells.shape
    sing = _singular_cells(mesh)
    vol = np.abs(mesh.cell_volumes())
    groups = []
    reg = np.flatnonzero(~sing)
    groups.append((reg, *simplex_rule(mesh.dim, quad_order)))
    if mesh.dim == 1:
        groups.append((np.flatnonzero(sing), *gauss_interval(SINGULAR_ORDER_1D)))
    else:
        r = np.linalg.norm(mesh.vertices[mesh.cells], axis=2)
        apex = np.argmin(r, axis=1)
        for a in range(nv):
            cs = np.flatnonzero(sing & (apex == a))
            groups.append((cs, *collapsed_triangle_rule(*SINGULAR_RULE_2D, apex=a)))
    cells, bary, wts = [], [], []
    for cs, b, w in groups:
        if cs.size == 0:
            continue
        cells.append(np.repeat(cs, len(w)))
        bary.append(np.tile(b, (cs.size, 1)))
        wts.append((vol[cs][:, None] * w[None, :]).ravel())
    cell = np.concatenate(cells)
    order = np.argsort(cell, kind="stable")
    cell = cell[order]
    bary = np.concatenate(bary)[order]
    w = np.concatenate(wts)[order]
    x = np.einsum("qk,qkd->qd", bary, mesh.vertices[mesh.cells[cell]])
    r2 = np.sum(x * x, axis=1)
    if np.any(r2 == 0.0):
        raise RuntimeError("a quadrature point coincides with the origin")
    if np.any(x[:, -1] <= 0.0):
        raise RuntimeError("a quadrature point lies on the plane x_N = 0")
    for a in (cell, bary, x, w, r2):
        a.setflags(write=False)
    return QuadratureData(cell, bary, x, w, r2)


def _assemble_form(mesh, quad, grads, a0=None, a1=None, b1=None, a2=None, symmetric=True):
    nq = len(quad.w)
    d = mesh.dim
    z = np.zeros(nq)
    zd = np.zeros((nq, d))
    local = _kernels.form_local(
        quad.cell, quad.bary, grads, quad.w,
        z if a0 is None else np.ascontiguousarray(a0, dtype=float),
        zd if a1 is None else np.ascontiguousarray(a1, dtype=float),
        zd if b1 is None else np.ascontiguousarray(b1, dtype=float),
        z if a2 is None else np.ascontiguousarray(a2, dtype=float),
        len(mesh.cells),
    )
    if not np.all(np.isfinite(local)):
        raise FloatingPointError("non-finite entry in assembled form")
    dof = mesh.dof[mesh.cells]
    nv = dof.shape[1]
    rows = np.repeat(dof, nv, axis=1).ravel()
    cols = np.tile(dof, (1, nv)).ravel()
    vals = local.ravel()
    keep = (rows >= 0) & (cols >= 0)
    n = mesh.ndof
    A = sp.coo_matrix((vals[keep], (rows[keep], cols[keep])), shape=(n, n)).tocsr()
    A.sum_duplicates()
    if symmetric:
        A = ((A + A.T) * 0.5).tocsr()
    A.sort_indices()
    return A


@dataclass(eq=False)
class OperatorSet:
    mesh: Mesh
    quad_order: int
    delta: float
    quad: QuadratureData
    grads: np.ndarray
    K: sp.csr_matrix
    M: sp.csr_matrix
    W: sp.csr_matrix
    W_log: sp.csr_matrix
    K_x2: sp.csr_matrix
    G: sp.csr_matrix
    C: sp.csr_matrix  # C[i, j] = int phi_i (x . grad phi_j)
    flux_map: sp.csr_matrix  # facet-wise outward normal derivative
    n_clamped: int
    _keps: dict = field(default_factory=dict, repr=False)

    @property
    def N(self) -> int:
        return self.mesh.dim

    @property
    def lambda_N(self) -> float:
        return lambda_N(self.N)

    @property
    def lambda_star(self) -> float:
        return lambda_star(self.N)

    @property
    def ndof(self) -> int:
        return self.mesh.ndof

    @property
    def R_Omega(self) -> float:
        return self.mesh.domain.R_Omega

    def A(self, lam: float) -> sp.csr_matrix:
        """The matrix K - lam W."""
        return (self.K - lam * self.W).tocsr()

    def K_eps(self, eps: float) -> sp.csr_matrix:
        """int |x|^eps grad phi_i . grad phi_j, built on first use."""
        key = float(eps)
        if key not in self._keps:
            if key == 2.0:
                self._keps[key] = self.K_x2
            else:
                self._keps[key] = _assemble_form(self.mesh, self.quad, self.grads, a2=self.quad.r2 ** (0.5 * key))
        return self._keps[key]

    # -- evaluation at quadrature points -------------------------------------
    def values(self, u: np.ndarray) -> np.ndarray:
        """u_h at the cell quadrature points (u a dof vector, real or complex)."""
        U = self.mesh.from_dofs(u)
        return np.einsum("qk,qk...->q...", self.quad.bary, U[self.mesh.cells[self.quad.cell]])

    def cell_gradients(self, u: np.ndarray) -> np.ndarray:
        U = self.mesh.from_dofs(u)
        return np.einsum("ckd,ck->cd", self.grads, U[self.mesh.cells])

    def gradients(self, u: np.ndarray) -> np.ndarray:
        return self.cell_gradients(u)[self.quad.cell]

    def integrate(self, g: np.ndarray):
        return np.sum(self.quad.w * g)

    def load(self, f) -> np.ndarray:
        """Vector b_i = int f phi_i for f a scalar, callable of x or dof vector."""
        fq = self.f_at_qp(f)
        b = np.zeros(len(self.mesh.vertices), dtype=np.result_type(fq, float))
        np.add.at(b, self.mesh.cells[self.quad.cell], (self.quad.w * fq)[:, None] * self.quad.bary)
        return b[self.mesh.interior]

    def f_at_qp(self, f) -> np.ndarray:
        if callable(f):
            return np.asarray(f(self.quad.x), dtype=float) * np.ones(len(self.quad.w))
        f = np.asarray(f)
        if f.ndim == 0:
            return np.full(len(self.quad.w), float(f))
        if f.shape[0] == self.ndof:
            return self.values(f)
        if f.shape[0] == len(self.mesh.vertices):
            return np.einsum("qk,qk->q", self.quad.bary, f[self.mesh.cells[self.quad.cell]])
        raise ValueError("load has incompatible length")

    def facet_flux(self, u: np.ndarray) -> np.ndarray:
        """Outward normal derivative per boundary facet (constant for P1)."""
        return self.flux_map @ u

    def weighted_flux_square(self, u: np.ndarray) -> float:
        """int_Gamma (x.nu) |du/dnu|^2 dsigma."""
        f = self.facet_flux(u)
        m = self.mesh
        return float(np.sum(m.xdotnu * m.facet_measure * np.abs(f) ** 2))


def _flux_map(mesh: Mesh, grads: np.ndarray) -> sp.csr_matrix:
    nf = len(mesh.facets)
    c = mesh.facet_cell
    coef = np.einsum("fkd,fd->fk", grads[c], mesh.normals)
    dof = mesh.dof[mesh.cells[c]]
    rows = np.repeat(np.arange(nf), dof.shape[1])
    keep = dof.ravel() >= 0
    F = sp.coo_matrix((coef.ravel()[keep], (rows[keep], dof.ravel()[keep])), shape=(nf, mesh.ndof))
    return F.tocsr()


def assemble(mesh: Mesh, quad_order: int | None = None, delta: float = 0.0) -> OperatorSet:
    """Assemble K, M, W, W_log, K_x2, G, C and the facet flux map on ``mesh``.

    ``delta`` regularises W as 1/(|x|^2 + delta); it exists for sensitivity
    runs only and defaults to 0.
    """
    if quad_order is None:
        quad_order = 6 if mesh.dim == 1 else 4
    if quad_order < 2:
        raise ValueError("quad_order must be >= 2")
    if delta < 0:
        raise ValueError("delta must be non-negative")
    quad = build_quadrature(mesh, quad_order)
    grads = _barycentric_gradients(mesh)
    N = mesh.dim
    r2, x = quad.r2, quad.x
    one = np.ones_like(r2)

    K = _assemble_form(mesh, quad, grads, a2=one)
    M = _assemble_form(mesh, quad, grads, a0=one)
    W = _assemble_form(mesh, quad, grads, a0=1.0 / (r2 + delta))
    R = mesh.domain.R_Omega
    r = np.sqrt(r2)
    rmax = R * (1.0 - LOG_CLAMP)
    n_clamped = int(np.sum(r > rmax))
    rc = np.minimum(r, rmax)
    W_log = _assemble_form(mesh, quad, grads, a0=1.0 / (rc**2 * np.log(R / rc) ** 2))
    K_x2 = _assemble_form(mesh, quad, grads, a2=r2)
    F = 0.5 * N * x / r2[:, None]
    F[:, -1] -= 1.0 / x[:, -1]
    G = _assemble_form(mesh, quad, grads, a0=np.sum(F * F, axis=1), a1=F, b1=F, a2=one)
    C = _assemble_form(mesh, quad, grads, b1=x, symmetric=False)
    flux = _flux_map(mesh, grads)
    grads.setflags(write=False)
    return OperatorSet(mesh, quad_order, delta, quad, grads, K, M, W, W_log, K_x2, G, C, flux, n_clamped)


def _check_lambda(ops: OperatorSet, lam: float) -> None:
    if lam > ops.lambda_N * (1 + 1e-14):
        raise ValueError(f"lambda={lam} exceeds lambda(N)={ops.lambda_N:g}")


def hardy_form(ops: OperatorSet, lam: float, u: np.ndarray) -> float:
    """u^T (K - lam W) u."""
    _check_lambda(ops, lam)
    u = np.asarray(u)
    val = np.vdot(u, ops.K @ u) - lam * np.vdot(u, ops.W @ u)
    return float(np.real(val))


def factored_form(ops: OperatorSet, lam: float, u: np.ndarray) -> float:
    """u^T G u + (lambda(N) - lam) u^T W u, the ground-state form of the energy."""
    _check_lambda(ops, lam)
    u = np.asarray(u)
    val = np.vdot(u, ops.G @ u) + (ops.lambda_N - lam) * np.vdot(u, ops.W @ u)
    return float(np.real(val))


def boundary_flux(ops: OperatorSet, u: np.ndarray, order: int = 5):
    """du/dnu at the facet quadrature points, with the matching BoundaryData."""
    bd = classify_boundary(ops.mesh, order)
    return ops.facet_flux(u)[bd.facet], bd


def truncated_factored_table(ops: OperatorSet, lam: float, u: np.ndarray, eps_list) -> list[tuple[float, float]]:
    """Partial sums of the factored integrand over quadrature points with |x| >= eps.

    A diagnostic of the truncation limit that defines the critical norm; the
    last column should approach factored_form as eps decreases.
    """
    _check_lambda(ops, lam)
    x, r2 = ops.quad.x, ops.quad.r2
    F = 0.5 * ops.N * x / r2[:, None]
    F[:, -1] -= 1.0 / x[:, -1]
    uq = ops.values(u)
    g = ops.gradients(u) + F * uq[:, None]
    dens = ops.quad.w * (np.sum(g * g, axis=1) + (ops.lambda_N - lam) * uq**2 / r2)
    r = np.sqrt(r2)
    return [(float(e), float(np.sum(dens[r >= e]))) for e in eps_list]


def coo_text(A: sp.spmatrix) -> str:
    """``row col value`` lines (0-based, row-major order) after a shape comment."""
    A = sp.coo_matrix(A)
    order = np.lexsort((A.col, A.row))
    lines = [f"# shape {A.shape[0]} {A.shape[1]}"]
    lines += [f"{int(i)} {int(j)} {float(v)!r}" for i, j, v in zip(A.row[order], A.col[order], A.data[order])]
    return "\n".join(lines) + "\n"


def export_coo(A: sp.spmatrix, path) -> None:
    """Write ``coo_text(A)`` to ``path`` for cross-checking."""
    Path(path).write_text(coo_text(A))
