"""Conjugate gradients with an explicit residual history.

A small hand-written CG is used instead of scipy's so that the residual
history, the inner product (real part of a complex pairing for the
Schrodinger Gramian) and the stopping rule are all visible and auditable.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class CGFailure(RuntimeError):
    def __init__(self, message, x=None, history=None):
        super().__init__(message)
        self.x = x
        self.history = history or []


@dataclass
class CGResult:
    x: np.ndarray
    history: list = field(default_factory=list)  # relative residual norms, one per iterate
    iterations: int = 0
    converged: bool = False
    residual: np.ndarray | None = None


def _real_inner(a, b):
    return float(np.real(np.vdot(a, b)))


def cg(apply, b, rtol=1e-10, max_iter=1000, precond=None, inner=_real_inner, x0=None, raise_on_fail=True, callback=None):
    """Solve apply(x) = b for a symmetric positive (semi)definite operator.

    ``history[k]`` is ||r_k|| / ||b|| in the norm induced by ``inner``.  With
    ``b = 0`` the zero vector is returned after the initial residual check.
    """
    x = np.zeros_like(b) if x0 is None else np.array(x0, copy=True)
    r = b - apply(x) if x0 is not None else b.copy()
    bnorm = np.sqrt(inner(b, b))
    if bnorm == 0.0:
        return CGResult(x, [0.0], 0, True, r)
    z = precond(r) if precond is not None else r
    p = z.copy()
    rz = inner(r, z)
    history = [np.sqrt(inner(r, r)) / bnorm]
    k = 0
    while history[-1] > rtol and k < max_iter:
        Ap = apply(p)
        pAp = inner(p, Ap)
        if pAp <= 0:
            if raise_on_fail:
                raise CGFailure("operator is not positive definite along a search direction", x, history)
            break
        alpha = rz / pAp
        x = x + alpha * p
        r = r - alpha * Ap
        z = precond(r) if precond is not None else r
        rz_new = inner(r, z)
        p = z + (rz_new / rz) * p
        rz = rz_new
        k += 1
        history.append(np.sqrt(inner(r, r)) / bnorm)
        if callback is not None:
            callback(k, x, r)
    ok = history[-1] <= rtol
    if not ok and raise_on_fail:
        raise CGFailure(f"CG did not reach rtol={rtol:g} in {max_iter} iterations (last {history[-1]:.3e})", x, history)
    return CGResult(x, history, k, ok, r)
