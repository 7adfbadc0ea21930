"""Quadrature rules on simplices, expressed in barycentric coordinates.

Every rule returned here has strictly interior points and positive weights
normalised to sum to one, so that ``sum(w * g(x)) * |cell|`` approximates the
cell integral.  Interior points keep singular weights such as ``1/|x|**2`` and
``1/x_N`` finite even on cells that touch the origin or the plane ``x_N = 0``.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np

__all__ = ["gauss_interval", "triangle_rule", "collapsed_triangle_rule", "simplex_rule"]


def _gauss01(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def gauss_interval(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre rule on the unit interval exact to degree ``order``.

    Returns barycentric coordinates of shape (nq, 2) and weights (nq,).
    """
    n = max(1, (order + 2) // 2)
    xi, w = _gauss01(n)
    bary = np.column_stack([1.0 - xi, xi])
    return bary, w


# Symmetric interior rules (Strang-Fix / Dunavant), weights sum to 1.
_DUNAVANT = {
    1: [((1 / 3, 1 / 3, 1 / 3), 1.0)],
    2: [((2 / 3, 1 / 6, 1 / 6), 1 / 3)],
    4: [
        ((0.108103018168070, 0.445948490915965, 0.445948490915965), 0.223381589678011),
        ((0.816847572980459, 0.091576213509771, 0.091576213509771), 0.109951743655322),
    ],
    5: [
        ((1 / 3, 1 / 3, 1 / 3), 0.225),
        ((0.059715871789770, 0.470142064105115, 0.470142064105115), 0.132394152788506),
        ((0.797426985353087, 0.101286507323456, 0.101286507323456), 0.125939180544827),
    ],
}


def _orbit(b: tuple[float, float, float]) -> list[tuple[float, float, float]]:
    a0, a1, a2 = b
    pts = {(a0, a1, a2), (a1, a2, a0), (a2, a0, a1), (a0, a2, a1), (a2, a1, a0), (a1, a0, a2)}
    return sorted(pts)


@lru_cache(maxsize=None)
def collapsed_triangle_rule(n_radial: int, n_angular: int, apex: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Duffy-collapsed Gauss product rule with the collapse at vertex ``apex``.

    With ``x = v_apex + s((v_a - v_apex) + t(v_b - v_apex))`` the Jacobian
    carries a factor ``s``, which cancels a ``1/|x - v_apex|`` singularity and
    turns integrands homogeneous of degree zero about the apex into smooth
    functions of ``t``.
    """
    s, ws = _gauss01(n_radial)
    t, wt = _gauss01(n_angular)
    S, T = np.meshgrid(s, t, indexing="ij")
    W = 2.0 * S * np.outer(ws, wt)
    S, T, W = S.ravel(), T.ravel(), W.ravel()
    others = [k for k in range(3) if k != apex]
    bary = np.empty((S.size, 3))
    bary[:, apex] = 1.0 - S
    bary[:, others[0]] = S * (1.0 - T)
    bary[:, others[1]] = S * T
    return bary, W


@lru_cache(maxsize=None)
def triangle_rule(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Interior rule on the triangle exact to polynomial degree ``order``."""
    if order < 1:
        raise ValueError("quadrature order must be >= 1")
    if order == 3:
        order = 4
    if order in _DUNAVANT:
        pts, wts = [], []
        for b, w in _DUNAVANT[order]:
            for p in _orbit(b):
                pts.append(p)
                wts.append(w)
        bary = np.array(pts)
        w = np.array(wts)
        return bary, w / w.sum()
    n = (order + 3) // 2
    return collapsed_triangle_rule(n, n, 0)


def simplex_rule(dim: int, order: int) -> tuple[np.ndarray, np.ndarray]:
    if dim == 1:
        return gauss_interval(order)
    if dim == 2:
        return triangle_rule(order)
    raise ValueError(f"unsupported dimension {dim}")
