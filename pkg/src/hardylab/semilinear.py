"""Positive solutions of -Delta u - lambda u/|x|^2 = |u|^(alpha-1) u by normalized minimization.

The quotient J(u) = B_lambda[u] / ||u||_{alpha+1}^2 is decreased by the
normalized inverse iteration u <- A^{-1} N(u) / ||A^{-1} N(u)||_{alpha+1},
where N(u)_i = int |u_h|^(alpha-1) u_h phi_i is the derivative of
(1/(alpha+1)) int |u_h|^(alpha+1).  Once J stagnates, a few Newton steps on
A u = N(u) (after rescaling by the Lagrange factor) bring the discrete
Euler-Lagrange residual down to round-off.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .operators import OperatorSet, _assemble_form, _check_lambda
from .report import IdentityReport

__all__ = [
    "SemilinearResult",
    "SemilinearFailure",
    "criticality_coefficient",
    "critical_exponent",
    "default_seed",
    "power_integral",
    "nonlinearity",
    "quotient",
    "minimize_I",
    "pohozaev_defect",
]


class SemilinearFailure(RuntimeError):
    pass


@dataclass
class SemilinearResult:
    alpha: float
    lam: float
    u: np.ndarray
    I_value: float
    iterations: int
    history: list = field(default_factory=list)  # quotient per iteration
    el_residual: float = np.nan
    energy_identity: float = np.nan
    newton_steps: int = 0
    seed_index: int = 0
    pohozaev: IdentityReport | None = None


def criticality_coefficient(N: int, alpha: float) -> float:
    """N/(1+alpha) - (N-2)/2; zero exactly at the critical Sobolev exponent."""
    if N < 1 or not alpha > 1:
        raise ValueError("need N >= 1 and alpha > 1")
    return N / (1.0 + alpha) - (N - 2) / 2.0


def critical_exponent(N: int) -> float:
    """(N+2)/(N-2), infinite for N <= 2."""
    return np.inf if N <= 2 else (N + 2) / (N - 2)


def power_integral(ops: OperatorSet, u: np.ndarray, alpha: float) -> float:
    """int |u_h|^(alpha+1) at the cell quadrature points."""
    return float(ops.integrate(np.abs(ops.values(u)) ** (alpha + 1)))


def nonlinearity(ops: OperatorSet, u: np.ndarray, alpha: float) -> np.ndarray:
    """N(u)_i = int |u_h|^(alpha-1) u_h phi_i."""
    uq = ops.values(u)
    return _load_qp(ops, np.abs(uq) ** (alpha - 1) * uq)


def _load_qp(ops: OperatorSet, g: np.ndarray) -> np.ndarray:
    m = ops.mesh
    b = np.zeros(len(m.vertices))
    np.add.at(b, m.cells[ops.quad.cell], (ops.quad.w * g)[:, None] * ops.quad.bary)
    return b[m.interior]


def _jacobian(ops: OperatorSet, A, u, alpha):
    uq = ops.values(u)
    Nprime = _assemble_form(ops.mesh, ops.quad, ops.grads, a0=alpha * np.abs(uq) ** (alpha - 1))
    return (A - Nprime).tocsc()


def quotient(ops: OperatorSet, A, u: np.ndarray, alpha: float) -> float:
    return float(u @ (A @ u)) / power_integral(ops, u, alpha) ** (2.0 / (alpha + 1))


def default_seed(ops: OperatorSet) -> np.ndarray:
    """Interpolant of x_N times the distance to the boundary."""
    X = ops.mesh.vertices[ops.mesh.interior]
    dist = -ops.mesh.domain.signed_distance(X)
    return X[:, -1] * np.maximum(dist, 0.0)


def _alternate_seeds(ops: OperatorSet):
    X = ops.mesh.vertices[ops.mesh.interior]
    b = ops.mesh.domain.bubble(X)
    R = ops.mesh.domain.R_Omega
    yield b
    yield b * (1.0 + X[:, -1] / R) ** 2


def _normalize(ops, u, alpha):
    return u / power_integral(ops, u, alpha) ** (1.0 / (alpha + 1))


def minimize_I(ops: OperatorSet, lam: float, alpha: float, seed: np.ndarray | None = None,
               tol: float = 1e-8, max_iter: int = 500, newton_tol: float = 1e-12,
               max_newton: int = 20) -> SemilinearResult:
    """Ground state of the normalized quotient; the returned u solves A u = N(u)."""
    _check_lambda(ops, lam)
    if not alpha > 1:
        raise ValueError("alpha must exceed 1")
    if ops.N > 2:
        raise ValueError("the semilinear solver is restricted to N <= 2")
    seeds = [default_seed(ops) if seed is None else np.asarray(seed, float)]
    if not np.any(seeds[0]):
        raise ValueError("zero seed")
    seeds += list(_alternate_seeds(ops))
    A = ops.A(lam).tocsr()
    lu = spla.splu(A.tocsc())
    failures = []
    for si, s in enumerate(seeds[:3]):
        u = _normalize(ops, s, alpha)
        J = quotient(ops, A, u, alpha)
        hist = [J]
        ok = False
        for it in range(1, max_iter + 1):
            w = lu.solve(nonlinearity(ops, u, alpha))
            u = _normalize(ops, w, alpha)
            Jn = quotient(ops, A, u, alpha)
            hist.append(Jn)
            if Jn > J * (1 + 1e-12):
                break  # the quotient must not increase; treat as oscillation
            if abs(J - Jn) <= tol * abs(Jn):
                ok = True
                J = Jn
                break
            J = Jn
        if not ok:
            failures.append(f"seed {si}: no stagnation after {len(hist) - 1} iterations (J={J:.6g})")
            continue
        # rescale by the Lagrange factor: A (s u) = N(s u) with s^(alpha-1) = u^T A u
        kappa = float(u @ (A @ u))
        u = u * kappa ** (1.0 / (alpha - 1))
        nsteps = 0
        res = _el_residual(ops, A, u, alpha)
        while res > newton_tol and nsteps < max_newton:
            r = A @ u - nonlinearity(ops, u, alpha)
            u_new = u - spla.spsolve(_jacobian(ops, A, u, alpha), r)
            res_new = _el_residual(ops, A, u_new, alpha)
            nsteps += 1
            if not res_new < 0.5 * res:
                if res_new < res:
                    u, res = u_new, res_new
                break  # round-off floor reached
            u, res = u_new, res_new
        if not np.isfinite(res) or res > 1e-6 or np.linalg.norm(u) == 0:
            failures.append(f"seed {si}: Newton polish ended at residual {res:.3e}")
            continue
        if u.sum() < 0:
            u = -u
        uAu = float(u @ (A @ u))
        P = power_integral(ops, u, alpha)
        out = SemilinearResult(alpha, lam, u, quotient(ops, A, u, alpha), len(hist) - 1, hist, res,
                               abs(uAu - P) / max(abs(uAu), abs(P)), nsteps, si)
        return out
    raise SemilinearFailure("; ".join(failures) or "no seed converged")


def _el_residual(ops, A, u, alpha) -> float:
    Au = A @ u
    return float(np.linalg.norm(Au - nonlinearity(ops, u, alpha)) / max(np.linalg.norm(Au), 1e-300))


def pohozaev_defect(ops: OperatorSet, result: SemilinearResult | None, alpha: float | None = None) -> IdentityReport:
    """1/2 int_Gamma (x.nu)(du/dnu)^2 against (N/(1+alpha) - (N-2)/2) int |u|^(alpha+1)."""
    if result is None:
        return IdentityReport("pohozaev_defect", 0.0, 0.0, ops.mesh.h, {"alpha": alpha})
    u, a = result.u, result.alpha
    lhs = 0.5 * ops.weighted_flux_square(u)
    rhs = criticality_coefficient(ops.N, a) * power_integral(ops, u, a)
    rep = IdentityReport("pohozaev_defect", float(lhs), float(rhs), ops.mesh.h, {"alpha": a, "lambda": result.lam})
    result.pohozaev = rep
    return rep
