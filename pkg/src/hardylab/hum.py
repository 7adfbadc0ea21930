"""HUM boundary controls for the discrete wave and Schrodinger equations.

The adjoint solution started from zeta0 is observed through
y_n = (x.nu) dv/dnu on Gamma_0 facets at every time step.  The Gramian

    Lambda = sum_n tau_n (S^n)^T F^T W F (S^n)      (tau_n trapezoid weights)

is applied with one forward sweep (recording y_n) and one backward sweep with
the transposed step (the discrete transposition solve).  Unknowns live in the
span of the lowest rho-fraction of (K - lambda W, M)-eigenmodes, written in
energy-normalized coordinates so that the Euclidean norm of the CG residual is
exactly the filtered final-state norm of the controlled solution in
L^2 x H'_lambda (wave) or H'_lambda (Schrodinger).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from .evolution import (
    SchrodingerStepper,
    WaveStepper,
    observation_weights,
    schrodinger_solve,
    time_grid,
    trapezoid_weights,
    wave_solve,
)
from .krylov import cg
from .operators import OperatorSet, _check_lambda

__all__ = [
    "HUMProblem",
    "HUMResult",
    "Unobservable",
    "filtered_modes",
    "WaveGramian",
    "SchrodingerGramian",
    "gramian_apply",
    "hum_solve",
    "schrodinger_hum",
    "observability_scan",
    "GRAM_FLOOR",
]

GRAM_FLOOR = 1e-10
DENSE_MODE_LIMIT = 6000


class Unobservable(RuntimeError):
    """The filtered subspace is not observable at this (h, dt, rho, T)."""

    def __init__(self, message, gram_min=None):
        super().__init__(message)
        self.gram_min = gram_min


def filtered_modes(ops: OperatorSet, lam: float, rho: float):
    """Lowest floor(rho n) eigenpairs of (K - lam W, M), M-orthonormal, ascending."""
    if not 0 < rho <= 1:
        raise ValueError("filter fraction rho must lie in (0, 1]")
    n = ops.ndof
    if n > DENSE_MODE_LIMIT:
        raise ValueError(f"{n} degrees of freedom is too many for the dense modal filter")
    m = max(1, int(np.floor(rho * n)))
    A = ops.A(lam).toarray()
    mu, Phi = sla.eigh(A, ops.M.toarray(), subset_by_index=[0, m - 1])
    if mu[0] <= 0:
        raise ValueError("K - lambda W is not positive definite on this mesh")
    # fix signs so reruns are identical regardless of LAPACK's choice
    s = np.sign(Phi[np.argmax(np.abs(Phi), axis=0), np.arange(m)])
    return mu, Phi * s


@dataclass
class HUMProblem:
    ops: OperatorSet
    lam: float
    T: float
    dt: float | None = None
    u0: np.ndarray | None = None
    u1: np.ndarray | None = None
    kind: str = "wave"
    rho: float = 0.3
    cg_tol: float = 1e-6
    cg_max_iter: int = 200
    gram_floor: float = GRAM_FLOOR
    allow_short_time: bool = False

    def __post_init__(self):
        _check_lambda(self.ops, self.lam)
        if self.kind not in ("wave", "schrodinger"):
            raise ValueError("kind must be 'wave' or 'schrodinger'")
        if not self.T > 0:
            raise ValueError("T must be positive")
        two_R = 2 * self.ops.R_Omega
        if self.kind == "wave" and not self.T > two_R and not self.allow_short_time:
            raise ValueError(f"T={self.T} does not exceed 2 R_Omega = {two_R}; set allow_short_time for scans")
        n = self.ops.ndof
        dtype = complex if self.kind == "schrodinger" else float
        self.u0 = np.zeros(n, dtype) if self.u0 is None else np.asarray(self.u0, dtype)
        if self.kind == "wave":
            self.u1 = np.zeros(n) if self.u1 is None else np.asarray(self.u1, float)


@dataclass
class HUMResult:
    kind: str
    minimizer: tuple
    times: np.ndarray
    control: np.ndarray  # (nsteps + 1, n_facets), zero off Gamma_0
    cg_history: list
    iterations: int
    converged: bool
    final_state_norms: dict
    uncontrolled_norms: dict
    gram_min: float
    coefficients: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    @property
    def reduction(self) -> float:
        """Filtered final-state energy of the controlled run over the uncontrolled one."""
        u = self.uncontrolled_norms["filtered"]
        return (self.final_state_norms["filtered"] / u) ** 2 if u > 0 else 0.0


class _GramianBase:
    def __init__(self, ops, lam, T, dt, rho, modes=None):
        self.ops = ops
        self.lam = lam
        self.nsteps, self.dt = time_grid(T, ops.mesh.h / 2 if dt is None else dt)
        self.T = self.nsteps * self.dt
        self.tau = trapezoid_weights(self.nsteps, self.dt)
        self.w = observation_weights(ops)
        self.mu, self.Phi = filtered_modes(ops, lam, rho) if modes is None else modes
        self.m = len(self.mu)
        self.F = ops.flux_map
        self.napply = 0


class WaveGramian(_GramianBase):
    """Wave HUM Gramian; coordinates c = (a, b) with v = Phi a / omega, p = Phi b."""

    def __init__(self, ops, lam, T, dt=None, rho=0.3, modes=None):
        super().__init__(ops, lam, T, dt, rho, modes)
        self.omega = np.sqrt(self.mu)
        self.stepper = WaveStepper(ops, lam, self.dt)

    @property
    def dim(self) -> int:
        return 2 * self.m

    def to_state(self, c):
        a, b = c[: self.m], c[self.m:]
        om = self.omega if a.ndim == 1 else self.omega[:, None]
        return self.Phi @ (a / om), self.Phi @ b

    def reduce(self, gv, gp):
        return np.concatenate([(self.Phi.T @ gv) / self.omega, self.Phi.T @ gp])

    def observe(self, v0, p0) -> np.ndarray:
        """Normal derivatives F v^n for n = 0..nsteps (forward adjoint sweep)."""
        st = self.stepper
        v, p = np.array(v0, float), np.array(p0, float)
        out = np.empty((self.nsteps + 1,) + (self.F.shape[0],) + v.shape[1:])
        out[0] = self.F @ v
        for k in range(1, self.nsteps + 1):
            v, p = st.step(v, p)
            out[k] = self.F @ v
        return out

    def apply_full(self, v0, p0):
        """Lambda (v0, p0) as a pair of dual dof vectors."""
        self.napply += 1
        y = self.observe(v0, p0)
        wt = self.w[:, None] if y.ndim == 3 else self.w
        st = self.stepper
        FT = self.F.T
        gv = FT @ (self.tau[-1] * wt * y[-1])
        gp = np.zeros_like(gv)
        for k in range(self.nsteps - 1, -1, -1):
            gv, gp = st.step_transpose(gv, gp)
            gv = gv + FT @ (self.tau[k] * wt * y[k])
        return gv, gp

    def apply(self, c):
        return self.reduce(*self.apply_full(*self.to_state(c)))

    def rhs(self, u0, u1):
        """Reduced right-hand side for steering (u0, u1) to rest: T^T (M u1, -M u0)."""
        M = self.ops.M
        return self.reduce(M @ u1, -(M @ u0))

    def filtered_norm(self, u, q) -> float:
        """sqrt(||P u||_{L2}^2 + ||P q||_{H'}^2) over the filtered modes."""
        M = self.ops.M
        return float(np.sqrt(np.sum((self.Phi.T @ (M @ u)) ** 2) + np.sum(((self.Phi.T @ (M @ q)) / self.omega) ** 2)))

    def full_norm(self, u, q) -> float:
        M = self.ops.M
        Mq = M @ q
        hq = Mq @ spla.spsolve(self.stepper.A.tocsc(), Mq) if np.any(q) else 0.0
        return float(np.sqrt(u @ (M @ u) + hq))

    def modal_matrix(self) -> np.ndarray:
        """Closed-form reduced Gramian from the exact per-mode rotation of the scheme."""
        theta = 2.0 * np.arctan(0.5 * self.omega * self.dt)
        n = np.arange(self.nsteps + 1)[:, None]
        Cn, Sn = np.cos(n * theta), np.sin(n * theta)
        Psi = (self.F @ self.Phi) / self.omega
        P = Psi.T @ (self.w[:, None] * Psi)
        tC, tS = self.tau[:, None] * Cn, self.tau[:, None] * Sn
        G = np.block([[P * (Cn.T @ tC), P * (Cn.T @ tS)], [P * (Sn.T @ tC), P * (Sn.T @ tS)]])
        return 0.5 * (G + G.T)


class SchrodingerGramian(_GramianBase):
    """Schrodinger HUM Gramian; coordinates c (complex) with v = Phi c / sqrt(mu)."""

    def __init__(self, ops, lam, T, dt=None, rho=0.3, modes=None):
        super().__init__(ops, lam, T, dt, rho, modes)
        self.sq = np.sqrt(self.mu)
        self.stepper = SchrodingerStepper(ops, lam, self.dt)

    @property
    def dim(self) -> int:
        return self.m

    def to_state(self, c):
        return self.Phi @ (c / (self.sq if c.ndim == 1 else self.sq[:, None]))

    def reduce(self, g):
        return (self.Phi.T @ g) / self.sq

    def observe(self, v0) -> np.ndarray:
        st = self.stepper
        v = np.array(v0, complex)
        out = np.empty((self.nsteps + 1,) + (self.F.shape[0],) + v.shape[1:], complex)
        out[0] = self.F @ v
        for k in range(1, self.nsteps + 1):
            v = st.step(v)
            out[k] = self.F @ v
        return out

    def apply_full(self, v0):
        self.napply += 1
        y = self.observe(v0)
        wt = self.w[:, None] if y.ndim == 3 else self.w
        st = self.stepper
        FT = self.F.T
        g = FT @ (self.tau[-1] * wt * y[-1])
        for k in range(self.nsteps - 1, -1, -1):
            g = st.step_adjoint(g) + FT @ (self.tau[k] * wt * y[k])
        return g

    def apply(self, c):
        return self.reduce(self.apply_full(self.to_state(c)))

    def rhs(self, u0):
        return self.reduce(1j * (self.ops.M @ u0))

    def filtered_norm(self, u) -> float:
        return float(np.sqrt(np.sum(np.abs(self.Phi.T @ (self.ops.M @ u)) ** 2 / self.mu)))

    def full_norm(self, u) -> float:
        Mu = self.ops.M @ u
        A = self.stepper.A.tocsc()
        return float(np.sqrt(np.real(np.vdot(Mu, spla.spsolve(A, np.real(Mu)) + 1j * spla.spsolve(A, np.imag(Mu))))))

    def modal_matrix(self) -> np.ndarray:
        """Closed-form Hermitian reduced Gramian."""
        theta = 2.0 * np.arctan(0.5 * self.mu * self.dt)
        n = np.arange(self.nsteps + 1)[:, None]
        E = np.exp(-1j * n * theta)
        Psi = (self.F @ self.Phi) / self.sq
        P = Psi.T @ (self.w[:, None] * Psi)
        G = P * (np.conj(E).T @ (self.tau[:, None] * E))
        return 0.5 * (G + np.conj(G.T))


def _make_gramian(problem: HUMProblem):
    cls = WaveGramian if problem.kind == "wave" else SchrodingerGramian
    return cls(problem.ops, problem.lam, problem.T, problem.dt, problem.rho)


def gramian_apply(problem: HUMProblem, data, gram=None):
    """Lambda applied to adjoint initial data.

    Wave: ``data = (v0, v1)`` returns the pair of dual vectors paired with
    (v0, v1); Schrodinger: ``data = v0`` returns one complex dual vector.
    """
    gram = _make_gramian(problem) if gram is None else gram
    if problem.kind == "wave":
        return gram.apply_full(*data)
    return gram.apply_full(data)


def _smallest_quotient(G: np.ndarray) -> float:
    if np.iscomplexobj(G):
        return float(sla.eigvalsh(G)[0])
    return float(sla.eigvalsh(G)[0])


def _solve(problem: HUMProblem, gram):
    G = gram.modal_matrix()
    gmin = _smallest_quotient(G)
    if gmin <= problem.gram_floor:
        raise Unobservable(
            f"smallest Gramian quotient {gmin:.3e} is below gram_floor={problem.gram_floor:g}: "
            "the filtered subspace is not observable at this (h, dt, rho, T)",
            gmin,
        )
    b = gram.rhs(problem.u0, problem.u1) if problem.kind == "wave" else gram.rhs(problem.u0)
    res = cg(gram.apply, b, rtol=problem.cg_tol, max_iter=problem.cg_max_iter, raise_on_fail=False)
    return res, b, gmin


def hum_solve(problem: HUMProblem) -> HUMResult:
    """HUM control steering the wave data (u0, u1) to rest at time T."""
    if problem.kind != "wave":
        raise ValueError("hum_solve handles the wave problem; use schrodinger_hum")
    gram = _make_gramian(problem)
    res, b, gmin = _solve(problem, gram)
    v0, v1 = gram.to_state(res.x)
    control = gram.w / np.where(gram.ops.mesh.facet_measure > 0, gram.ops.mesh.facet_measure, 1.0) * gram.observe(v0, v1)
    ops = problem.ops
    ctrl = wave_solve(ops, problem.lam, problem.u0, problem.u1, gram.T, gram.dt, boundary_data=control,
                      stepper=gram.stepper)
    free = wave_solve(ops, problem.lam, problem.u0, problem.u1, gram.T, gram.dt, stepper=gram.stepper)
    fc, ff = ctrl.final, free.final
    final = {"filtered": gram.filtered_norm(fc.v, fc.v_t), "full": gram.full_norm(fc.v, fc.v_t)}
    unc = {"filtered": gram.filtered_norm(ff.v, ff.v_t), "full": gram.full_norm(ff.v, ff.v_t)}
    return HUMResult("wave", (v0, v1), ctrl.times, control, res.history, res.iterations, res.converged,
                     final, unc, gmin, res.x,
                     {"rhs_norm": float(np.linalg.norm(b)), "modes": gram.m, "dt": gram.dt, "T": gram.T,
                      "gramian_applications": gram.napply})


def schrodinger_hum(problem: HUMProblem) -> HUMResult:
    """HUM control steering the Schrodinger datum u0 to rest at time T."""
    if problem.kind != "schrodinger":
        raise ValueError("schrodinger_hum needs kind='schrodinger'")
    gram = _make_gramian(problem)
    res, b, gmin = _solve(problem, gram)
    v0 = gram.to_state(res.x)
    fm = gram.ops.mesh.facet_measure
    control = gram.w / fm * gram.observe(v0)
    ops = problem.ops
    ctrl = schrodinger_solve(ops, problem.lam, problem.u0, gram.T, gram.dt, boundary_data=control,
                             stepper=gram.stepper)
    free = schrodinger_solve(ops, problem.lam, problem.u0, gram.T, gram.dt, stepper=gram.stepper)
    final = {"filtered": gram.filtered_norm(ctrl.final.v), "full": gram.full_norm(ctrl.final.v)}
    unc = {"filtered": gram.filtered_norm(free.final.v), "full": gram.full_norm(free.final.v)}
    return HUMResult("schrodinger", (v0,), ctrl.times, control, res.history, res.iterations, res.converged,
                     final, unc, gmin, res.x,
                     {"rhs_norm": float(np.linalg.norm(b)), "modes": gram.m, "dt": gram.dt, "T": gram.T,
                      "gramian_applications": gram.napply})


def observability_scan(ops: OperatorSet, lam: float, T_list, sample_count: int = 64, rho: float = 0.3,
                       dt: float | None = None, seed: int = 0):
    """Minimal sampled observability quotient for each T in ``T_list``.

    Samples are Gaussian in the energy-normalized filtered coordinates,
    scaled to E(0) = 1, and share one batched trajectory up to max(T_list).
    Returns rows (T, min, mean, max) with T rounded to the time grid.
    """
    T_list = sorted(float(t) for t in T_list)
    gram = WaveGramian(ops, lam, T_list[-1], dt, rho)
    rng = np.random.default_rng(seed)
    c = rng.standard_normal((gram.dim, sample_count))
    c *= np.sqrt(2.0) / np.linalg.norm(c, axis=0)
    V, P = gram.to_state(c)
    y = gram.observe(V, P)  # (nsteps + 1, nf, samples)
    dens = np.einsum("f,nfs->ns", gram.w, y**2)
    cum = np.concatenate([np.zeros((1, sample_count)), np.cumsum(0.5 * gram.dt * (dens[1:] + dens[:-1]), axis=0)])
    rows = []
    for T in T_list:
        k = min(gram.nsteps, max(1, int(round(T / gram.dt))))
        q = cum[k]
        rows.append((k * gram.dt, float(q.min()), float(q.mean()), float(q.max())))
    return rows
