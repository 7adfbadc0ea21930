"""Element-level assembly kernels.

Two interchangeable implementations of the same loops: a numba ``@njit``
version and a vectorised numpy version.  ``HARDYLAB_NUMBA=0`` in the
environment forces the numpy path; it is also used when numba is missing.
The choice is made once, at import time.
"""
from __future__ import annotations

import os

import numpy as np

try:  # pragma: no cover - exercised implicitly
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("HARDYLAB_NUMBA", "1").strip().lower() not in ("0", "false", "no", "off")


def form_local_numpy(qp_cell, bary, grads, w, a0, a1, b1, a2, ncell):
    """Local matrices of the bilinear form

        sum_q w_q [ a2 grad(phi_i).grad(phi_j) + (a1.grad phi_i) phi_j
                    + phi_i (b1.grad phi_j) + a0 phi_i phi_j ]

    accumulated per cell; ``qp_cell`` must be sorted and cover every cell.
    """
    G = grads[qp_cell]
    term = a2[:, None, None] * np.einsum("qid,qjd->qij", G, G)
    term += np.einsum("qd,qid->qi", a1, G)[:, :, None] * bary[:, None, :]
    term += bary[:, :, None] * np.einsum("qd,qjd->qj", b1, G)[:, None, :]
    term += a0[:, None, None] * bary[:, :, None] * bary[:, None, :]
    term *= w[:, None, None]
    starts = np.flatnonzero(np.r_[True, qp_cell[1:] != qp_cell[:-1]])
    out = np.zeros((ncell,) + term.shape[1:])
    out[qp_cell[starts]] = np.add.reduceat(term, starts, axis=0)
    return out


def _form_local_loops(qp_cell, bary, grads, w, a0, a1, b1, a2, ncell):
    nq, nv = bary.shape
    d = grads.shape[2]
    out = np.zeros((ncell, nv, nv))
    for q in range(nq):
        c = qp_cell[q]
        for i in range(nv):
            gi_a = 0.0
            for k in range(d):
                gi_a += a1[q, k] * grads[c, i, k]
            for j in range(nv):
                gg = 0.0
                gj_b = 0.0
                for k in range(d):
                    gg += grads[c, i, k] * grads[c, j, k]
                    gj_b += b1[q, k] * grads[c, j, k]
                out[c, i, j] += w[q] * (
                    a2[q] * gg + gi_a * bary[q, j] + bary[q, i] * gj_b + a0[q] * bary[q, i] * bary[q, j]
                )
    return out


if HAVE_NUMBA:
    form_local_numba = numba.njit(cache=True)(_form_local_loops)
else:  # pragma: no cover
    form_local_numba = None


def form_local(qp_cell, bary, grads, w, a0, a1, b1, a2, ncell):
    if USE_NUMBA:
        return form_local_numba(qp_cell, bary, grads, w, a0, a1, b1, a2, ncell)
    return form_local_numpy(qp_cell, bary, grads, w, a0, a1, b1, a2, ncell)
