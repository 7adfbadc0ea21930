"""Conservative time stepping for the wave and Schrodinger equations with A_lambda.

Wave: the first-order system M v' = M p, M p' = -A v (A = K - lambda W) is
advanced with the implicit midpoint rule, which reduces to

    (M + dt^2/4 A) v1 = (M - dt^2/4 A) v0 + dt M p0,   p1 = 2 (v1 - v0)/dt - p0.

Schrodinger: i M v' = A v is advanced with Crank-Nicolson,

    (M + i dt/2 A) v1 = (M - i dt/2 A) v0.

Both maps preserve their quadratic invariants exactly (up to the direct
solver), and both preserve a symplectic pairing: q^T M v - u^T M p for the
wave, Im(z^H M z') for Schrodinger.  Boundary data enter as momentum kicks
dual to the normal-derivative observation; applying half a kick before and
after every step realises trapezoid quadrature of the duality pairing in
time (this is the discrete transposition solution).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import classify_boundary
from .operators import OperatorSet, _check_lambda
from .report import IdentityReport

__all__ = [
    "WaveState",
    "ComplexState",
    "EnergyTrace",
    "Trajectory",
    "WaveStepper",
    "SchrodingerStepper",
    "time_grid",
    "trapezoid_weights",
    "observation_weights",
    "wave_solve",
    "schrodinger_solve",
    "multiplier_check",
    "equipartition_check",
    "hidden_regularity_ratio",
    "smult_check",
    "random_smooth_data",
]


@dataclass(frozen=True)
class WaveState:
    v: np.ndarray
    v_t: np.ndarray
    t: float = 0.0


@dataclass(frozen=True)
class ComplexState:
    v: np.ndarray
    t: float = 0.0


@dataclass
class EnergyTrace:
    times: np.ndarray
    E_lambda: np.ndarray
    boundary_flux_integral: np.ndarray
    cross_term: tuple = (0.0, 0.0)
    mass: np.ndarray | None = None


@dataclass
class Trajectory:
    kind: str
    lam: float
    dt: float
    times: np.ndarray
    initial: object
    final: object
    flux: np.ndarray  # (nsteps + 1, n_facets) outward normal derivative
    trace: EnergyTrace
    kinetic: np.ndarray | None = None
    potential: np.ndarray | None = None
    vMp: tuple = (0.0, 0.0)
    snapshots: list = field(default_factory=list)

    @property
    def T(self) -> float:
        return float(self.times[-1])


def time_grid(T: float, dt: float) -> tuple[int, float]:
    """Number of steps and the step actually used, so that n * dt == T."""
    if not (T > 0 and dt > 0):
        raise ValueError("T and dt must be positive")
    n = max(1, int(round(T / dt)))
    return n, T / n


def trapezoid_weights(n: int, dt: float) -> np.ndarray:
    tau = np.full(n + 1, dt)
    tau[0] = tau[-1] = 0.5 * dt
    return tau


def observation_weights(ops: OperatorSet) -> np.ndarray:
    """|f| max(x.nu, 0) on Gamma_0 facets, zero elsewhere."""
    m = ops.mesh
    return m.facet_measure * np.clip(m.xdotnu, 0.0, None) * m.gamma0


class WaveStepper:
    """Implicit midpoint map S and its transpose for one (lambda, dt)."""

    def __init__(self, ops: OperatorSet, lam: float, dt: float):
        _check_lambda(ops, lam)
        self.ops = ops
        self.lam = lam
        self.dt = dt
        self.A = ops.A(lam)
        self.M = ops.M
        q = 0.25 * dt * dt
        self.B = (self.M - q * self.A).tocsr()
        try:
            self.lu = spla.splu((self.M + q * self.A).tocsc())
        except RuntimeError as exc:
            raise RuntimeError(f"factorization of the step matrix failed: {exc}") from exc
        self._Mlu = None

    def step(self, v, p, backward: bool = False):
        dt = -self.dt if backward else self.dt
        v1 = self.lu.solve(self.B @ v + dt * (self.M @ p))
        p1 = (2.0 / dt) * (v1 - v) - p
        return v1, p1

    def step_transpose(self, a, b):
        """Apply S^T to the pair (a, b)."""
        dt = self.dt
        s = self.lu.solve(a + (2.0 / dt) * b)
        return self.B @ s - (2.0 / dt) * b, dt * (self.M @ s) - b

    def mass_solve(self, r):
        if self._Mlu is None:
            self._Mlu = spla.splu(self.M.tocsc())
        return self._Mlu.solve(r)

    def kick(self, p, weighted_h, tau):
        """p <- p - tau M^{-1} F^T (weighted_h), the control momentum kick."""
        return p - tau * self.mass_solve(self.ops.flux_map.T @ weighted_h)


class SchrodingerStepper:
    """Crank-Nicolson map S and its adjoint S^H for one (lambda, dt)."""

    def __init__(self, ops: OperatorSet, lam: float, dt: float):
        _check_lambda(ops, lam)
        self.ops = ops
        self.lam = lam
        self.dt = dt
        self.A = ops.A(lam)
        self.M = ops.M
        half = 0.5j * dt
        self.L = (self.M + half * self.A).tocsc()
        self.B = (self.M - half * self.A).tocsr()
        self.lu = spla.splu(self.L)
        self._Mlu = None

    def step(self, v, backward: bool = False):
        if backward:
            # S^{-1} = B^{-1} L with B = conj(L)
            return np.conj(self.lu.solve(np.conj(self.L @ v)))
        return self.lu.solve(self.B @ v)

    def step_adjoint(self, g):
        """Apply S^H = L conj(L)^{-1}."""
        return self.L @ np.conj(self.lu.solve(np.conj(g)))

    def mass_solve(self, r):
        if self._Mlu is None:
            self._Mlu = spla.splu(self.M.tocsc())
        return self._Mlu.solve(np.real(r)) + 1j * self._Mlu.solve(np.imag(r))

    def kick(self, v, weighted_h, tau):
        """v <- v + i tau M^{-1} F^T (weighted_h)."""
        return v + 1j * tau * self.mass_solve(self.ops.flux_map.T @ weighted_h)


def _cross_wave(ops, v, p) -> float:
    return float(p @ (ops.C @ v) + 0.5 * (ops.N - 1) * (p @ (ops.M @ v)))


def wave_solve(ops: OperatorSet, lam: float, v0, v1, T: float, dt: float | None = None,
               boundary_data=None, store_every: int = 0, stepper: WaveStepper | None = None) -> Trajectory:
    """Integrate the wave equation from (v0, v1) over [0, T].

    ``dt`` defaults to h/2 and is adjusted so that an integer number of steps
    lands on T.  ``boundary_data`` (shape (nsteps+1, n_facets)) are the
    Dirichlet values (x.nu) dv/dnu-type controls, paired with the facet
    measure; they drive the solution through half kicks around every step.
    """
    _check_lambda(ops, lam)
    n, dt = time_grid(T, ops.mesh.h / 2 if dt is None else dt)
    st = stepper if stepper is not None and np.isclose(stepper.dt, dt) and stepper.lam == lam else WaveStepper(ops, lam, dt)
    A, M = st.A, st.M
    v = np.asarray(v0, dtype=float).copy()
    p = np.asarray(v1, dtype=float).copy()
    fm = ops.mesh.facet_measure
    if boundary_data is not None:
        boundary_data = np.asarray(boundary_data, dtype=float)
        if boundary_data.shape != (n + 1, len(fm)):
            raise ValueError(f"boundary data must have shape {(n + 1, len(fm))}")
    xw = ops.mesh.xdotnu * fm
    times = dt * np.arange(n + 1)
    flux = np.empty((n + 1, len(fm)))
    kin = np.empty(n + 1)
    pot = np.empty(n + 1)
    l2 = np.empty(n + 1)
    snaps = []
    init = WaveState(v.copy(), p.copy(), 0.0)
    cross0 = _cross_wave(ops, v, p)
    vMp0 = float(v @ (M @ p))
    for k in range(n + 1):
        if k > 0:
            if boundary_data is not None:
                p = st.kick(p, fm * boundary_data[k - 1], 0.5 * dt)
            v, p = st.step(v, p)
            if not (np.all(np.isfinite(v)) and np.all(np.isfinite(p))):
                raise FloatingPointError(f"non-finite state at step {k}")
            if boundary_data is not None:
                p = st.kick(p, fm * boundary_data[k], 0.5 * dt)
        flux[k] = ops.flux_map @ v
        kin[k] = p @ (M @ p)
        pot[k] = v @ (A @ v)
        l2[k] = v @ (M @ v)
        if store_every and k % store_every == 0:
            snaps.append(WaveState(v.copy(), p.copy(), float(times[k])))
    E = 0.5 * (kin + pot)
    dens = flux**2 @ xw
    cum = np.concatenate([[0.0], np.cumsum(0.5 * dt * (dens[1:] + dens[:-1]))])
    trace = EnergyTrace(times, E, cum, (cross0, _cross_wave(ops, v, p)), l2)
    return Trajectory("wave", lam, dt, times, init, WaveState(v, p, float(times[-1])), flux, trace,
                      kin, pot, (vMp0, float(v @ (M @ p))), snaps)


def schrodinger_solve(ops: OperatorSet, lam: float, v0, T: float, dt: float | None = None,
                      boundary_data=None, store_every: int = 0,
                      stepper: SchrodingerStepper | None = None) -> Trajectory:
    """Crank-Nicolson integration of i v_t = A_lambda v from v0 over [0, T]."""
    _check_lambda(ops, lam)
    n, dt = time_grid(T, ops.mesh.h / 2 if dt is None else dt)
    st = stepper if stepper is not None and np.isclose(stepper.dt, dt) and stepper.lam == lam else SchrodingerStepper(ops, lam, dt)
    A, M = st.A, st.M
    v = np.asarray(v0, dtype=complex).copy()
    fm = ops.mesh.facet_measure
    if boundary_data is not None:
        boundary_data = np.asarray(boundary_data, dtype=complex)
        if boundary_data.shape != (n + 1, len(fm)):
            raise ValueError(f"boundary data must have shape {(n + 1, len(fm))}")
    xw = ops.mesh.xdotnu * fm
    times = dt * np.arange(n + 1)
    flux = np.empty((n + 1, len(fm)), dtype=complex)
    mass = np.empty(n + 1)
    energy = np.empty(n + 1)
    snaps = []
    init = ComplexState(v.copy(), 0.0)
    cross0 = float(np.imag(v @ (ops.C @ np.conj(v))))
    for k in range(n + 1):
        if k > 0:
            if boundary_data is not None:
                v = st.kick(v, fm * boundary_data[k - 1], 0.5 * dt)
            v = st.step(v)
            if not np.all(np.isfinite(v)):
                raise FloatingPointError(f"non-finite state at step {k}")
            if boundary_data is not None:
                v = st.kick(v, fm * boundary_data[k], 0.5 * dt)
        flux[k] = ops.flux_map @ v
        mass[k] = np.real(np.vdot(v, M @ v))
        energy[k] = np.real(np.vdot(v, A @ v))
        if store_every and k % store_every == 0:
            snaps.append(ComplexState(v.copy(), float(times[k])))
    dens = np.abs(flux) ** 2 @ xw
    cum = np.concatenate([[0.0], np.cumsum(0.5 * dt * (dens[1:] + dens[:-1]))])
    cross1 = float(np.imag(v @ (ops.C @ np.conj(v))))
    trace = EnergyTrace(times, energy, cum, (cross0, cross1), mass)
    return Trajectory("schrodinger", lam, dt, times, init, ComplexState(v, float(times[-1])), flux, trace,
                      None, energy, (0.0, 0.0), snaps)


def multiplier_check(ops: OperatorSet, traj: Trajectory) -> IdentityReport:
    """Boundary flux identity for the homogeneous wave trajectory.

    lhs = 1/2 int_0^T int_Gamma (x.nu)(dv/dnu)^2,
    rhs = T E(0) + [int v_t (x.grad v + (N-1)/2 v)]_0^T.
    """
    if traj.kind != "wave":
        raise ValueError("multiplier_check needs a wave trajectory")
    lhs = 0.5 * traj.trace.boundary_flux_integral[-1]
    c0, c1 = traj.trace.cross_term
    rhs = traj.T * traj.trace.E_lambda[0] + (c1 - c0)
    eq = equipartition_check(ops, traj)
    return IdentityReport("multiplier", float(lhs), float(rhs), ops.mesh.h,
                          {"lambda": traj.lam, "dt": traj.dt, "T": traj.T,
                           "equipartition_rel_residual": eq.rel_residual})


def equipartition_check(ops: OperatorSet, traj: Trajectory) -> IdentityReport:
    """[int v v_t]_0^T against int_0^T (||v_t||^2 - ||v||_{H_lambda}^2) dt (trapezoid)."""
    lhs = traj.vMp[1] - traj.vMp[0]
    tau = trapezoid_weights(len(traj.times) - 1, traj.dt)
    rhs = float(tau @ (traj.kinetic - traj.potential))
    return IdentityReport("equipartition", float(lhs), rhs, ops.mesh.h, {"lambda": traj.lam, "dt": traj.dt})


def _facet_r2(ops: OperatorSet) -> np.ndarray:
    bd = classify_boundary(ops.mesh)
    return np.bincount(bd.facet, weights=bd.weights * bd.r2, minlength=len(ops.mesh.facets))


def hidden_regularity_ratio(ops: OperatorSet, traj: Trajectory) -> float:
    """int_0^T int_Gamma |x|^2 (dv/dnu)^2 / (||v0||_{H_lambda}^2 + ||v1||^2); 0 for zero data."""
    tau = trapezoid_weights(len(traj.times) - 1, traj.dt)
    num = float(tau @ (np.abs(traj.flux) ** 2 @ _facet_r2(ops)))
    den = 2.0 * traj.trace.E_lambda[0] if traj.kind == "wave" else traj.trace.E_lambda[0]
    return num / den if den > 0 else 0.0


def smult_check(ops: OperatorSet, traj: Trajectory) -> IdentityReport:
    """Boundary flux identity for a Schrodinger trajectory.

    lhs = 1/2 int_0^T int_Gamma (x.nu)|dv/dnu|^2,
    rhs = T ||v||_{H_lambda}^2 + 1/2 [Im int v x.grad(conj v)]_0^T.
    """
    if traj.kind != "schrodinger":
        raise ValueError("smult_check needs a Schrodinger trajectory")
    lhs = 0.5 * traj.trace.boundary_flux_integral[-1]
    c0, c1 = traj.trace.cross_term
    rhs = traj.T * traj.trace.E_lambda[0] + 0.5 * (c1 - c0)
    return IdentityReport("smult", float(lhs), float(rhs), ops.mesh.h, {"lambda": traj.lam, "dt": traj.dt, "T": traj.T})


def random_smooth_data(ops: OperatorSet, rng: np.random.Generator, degree: int = 3, count: int | None = None):
    """Dof vectors bubble(x) * (random polynomial of the given degree).

    Returns one vector, or an (ndof, count) array when ``count`` is given.
    """
    X = ops.mesh.vertices[ops.mesh.interior]
    b = ops.mesh.domain.bubble(X)
    R = ops.mesh.domain.R_Omega
    Y = X / R
    if ops.N == 1:
        powers = [(i,) for i in range(degree + 1)]
    else:
        powers = [(i, j) for i in range(degree + 1) for j in range(degree + 1 - i)]
    V = np.column_stack([np.prod(Y ** np.array(pw), axis=1) for pw in powers])
    k = 1 if count is None else count
    coef = rng.standard_normal((len(powers), k))
    out = b[:, None] * (V @ coef)
    return out[:, 0] if count is None else out
