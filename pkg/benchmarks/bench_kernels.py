"""Element assembly kernel: numba loops against the vectorised numpy path.

Run with ``python3 benchmarks/bench_kernels.py [h]``.  Both kernels see the
same quadrature data (the full stiffness + Hardy-weight integrand on the
tangent disk); the script checks they agree, then reports the best of five
timings and, for context, the time of one sparse LU solve on the same mesh.
"""
import sys
import time

import numpy as np
import scipy.sparse.linalg as spla

from hardylab import _kernels
from hardylab.mesh import build_domain, generate_mesh
from hardylab.operators import assemble


def best_of(fn, repeat=5):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(h=0.02):
    mesh = generate_mesh(build_domain("tangent_disk", radius=1.0), h)
    ops = assemble(mesh)
    q = ops.quad
    nq = len(q.w)
    args = (q.cell, q.bary, ops.grads, q.w, 1.0 / q.r2, np.zeros((nq, 2)), np.zeros((nq, 2)), np.ones(nq),
            len(mesh.cells))
    ref = _kernels.form_local_numpy(*args)
    print(f"h={h}  cells={len(mesh.cells)}  quadrature points={nq}")
    t_np = best_of(lambda: _kernels.form_local_numpy(*args))
    print(f"numpy kernel  {t_np * 1e3:8.2f} ms")
    if _kernels.HAVE_NUMBA:
        out = _kernels.form_local_numba(*args)  # compile
        err = np.max(np.abs(out - ref)) / np.max(np.abs(ref))
        t_nb = best_of(lambda: _kernels.form_local_numba(*args))
        print(f"numba kernel  {t_nb * 1e3:8.2f} ms  (speed-up {t_np / t_nb:.1f}x, max rel diff {err:.1e})")
    else:
        print("numba not installed")
    A = ops.A(0.5).tocsc()
    t_lu = best_of(lambda: spla.splu(A), repeat=3)
    print(f"one sparse LU {t_lu * 1e3:8.2f} ms  (ndof={ops.ndof})")


if __name__ == "__main__":
    main(float(sys.argv[1]) if len(sys.argv) > 1 else 0.02)
