"""Dirichlet problems for A_lambda u = f and the identities they satisfy.

* ``solve``: Jacobi-preconditioned CG on (K - lambda W) u = b, b_i = int f phi_i.
* ``pohozaev_check``: 1/2 int_Gamma (x.nu) (du/dnu)^2 against
  -int (x.grad u) f - (N-2)/2 B_lambda[u].
* ``trace_ratio``: int_Gamma |x|^2 (du/dnu)^2 / (B_lambda[u] + ||f||^2).
* ``lambda_continuation``: behaviour of u_eps at lambda(N) - eps as eps -> 0.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .krylov import cg
from .mesh import classify_boundary
from .operators import OperatorSet, _check_lambda
from .report import IdentityReport

__all__ = [
    "EllipticSolution",
    "solve",
    "pohozaev_check",
    "trace_ratio",
    "trace_battery",
    "standard_loads",
    "lambda_continuation",
]

SOLVE_RTOL = 1e-10


@dataclass
class EllipticSolution:
    u: np.ndarray
    lam: float
    f: object
    b: np.ndarray
    residual: float
    history: list = field(default_factory=list)
    energy: float = 0.0

    @property
    def iterations(self) -> int:
        return len(self.history) - 1


def solve(ops: OperatorSet, lam: float, f, rtol: float = SOLVE_RTOL, max_iter: int | None = None) -> EllipticSolution:
    """Solve (K - lam W) u = b with b the Galerkin load of ``f``.

    ``f`` may be a scalar, a callable of x (shape (n, N)), a dof vector or a
    vertex vector.  Non-convergence raises ``CGFailure`` carrying the history.
    """
    _check_lambda(ops, lam)
    A = ops.A(lam)
    b = ops.load(f)
    dinv = 1.0 / A.diagonal()
    if max_iter is None:
        max_iter = 20 * ops.ndof + 100
    res = cg(lambda v: A @ v, b, rtol=rtol, max_iter=max_iter, precond=lambda r: dinv * r)
    u = res.x
    bn = np.linalg.norm(b)
    true_res = float(np.linalg.norm(b - A @ u) / bn) if bn > 0 else 0.0
    return EllipticSolution(u, lam, f, b, true_res, res.history, float(u @ (A @ u)))


def pohozaev_check(ops: OperatorSet, sol: EllipticSolution) -> IdentityReport:
    N = ops.N
    lhs = 0.5 * ops.weighted_flux_square(sol.u)
    xg = np.sum(ops.quad.x * ops.gradients(sol.u), axis=1)
    fq = ops.f_at_qp(sol.f)
    rhs = -float(ops.integrate(xg * fq)) - 0.5 * (N - 2) * sol.energy
    return IdentityReport("pohozaev", float(lhs), rhs, ops.mesh.h, {"lambda": sol.lam})


def trace_ratio(ops: OperatorSet, sol: EllipticSolution) -> float:
    bd = classify_boundary(ops.mesh)
    fl = ops.facet_flux(sol.u)[bd.facet]
    num = float(np.sum(bd.weights * bd.r2 * fl**2))
    fq = ops.f_at_qp(sol.f)
    den = sol.energy + float(ops.integrate(fq**2))
    if den == 0.0:
        return 0.0
    return num / den


def standard_loads(ops: OperatorSet) -> dict:
    """The constant, linear (x_N) and sine-bump loads of the trace battery."""
    R = ops.mesh.domain.R_Omega
    return {
        "one": 1.0,
        "xN": lambda x: x[:, -1],
        "sin": lambda x: np.sin(np.pi * x[:, -1] / R),
    }


def trace_battery(ops: OperatorSet, lam: float, loads: dict | None = None) -> dict:
    """Trace ratio per load; key ``max`` holds the largest."""
    loads = standard_loads(ops) if loads is None else loads
    out = {name: trace_ratio(ops, solve(ops, lam, f)) for name, f in loads.items()}
    out["max"] = max(out.values())
    return out


def lambda_continuation(ops: OperatorSet, f, eps_list) -> tuple[list, list]:
    """Rows (eps, ||u_eps - u_0||_{B_lambda(N)}, eps u_eps^T W u_eps).

    u_0 solves the problem at lambda(N).  Columns that fail to decrease are
    reported as warnings (the second return value), not errors.
    """
    eps_list = [float(e) for e in eps_list]
    if any(e < 0 for e in eps_list):
        raise ValueError("eps values must be non-negative")
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be strictly decreasing")
    lamN = ops.lambda_N
    A0 = ops.A(lamN)
    u0 = solve(ops, lamN, f).u
    rows = []
    for e in eps_list:
        ue = u0 if e == 0.0 else solve(ops, lamN - e, f).u
        d = ue - u0
        rows.append((e, float(np.sqrt(max(d @ (A0 @ d), 0.0))), float(e * (ue @ (ops.W @ ue)))))
    notes = []
    for col, name in ((1, "seminorm difference"), (2, "eps * weighted mass")):
        vals = [r[col] for r in rows]
        if any(b >= a for a, b in zip(vals, vals[1:])):
            msg = f"{name} column is not strictly decreasing: {vals}"
            notes.append(msg)
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
    return rows, notes
