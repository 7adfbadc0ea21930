"""Batch front-end: ``hardylab <command> [config] [--key value ...]``.

Every run parses and validates its configuration first (exit 2 on any
violation, nothing written), computes all results in memory, and only then
writes the output directory: CSV files that start with a provenance comment
line and a header row, plus ``summary.json`` listing the checks.

Exit codes: 0 all checks passed, 1 some check failed, 2 invalid
configuration, 3 a module raised (its message is printed on stderr).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import COMMANDS, KEYS, ConfigError, RunConfig, parse_config
from .elliptic import lambda_continuation, pohozaev_check, solve, standard_loads, trace_ratio
from .evolution import (
    hidden_regularity_ratio,
    multiplier_check,
    random_smooth_data,
    schrodinger_solve,
    smult_check,
    wave_solve,
)
from .hum import HUMProblem, SchrodingerGramian, WaveGramian, filtered_modes, hum_solve, observability_scan, schrodinger_hum
from .mesh import build_domain, generate_mesh
from .operators import assemble, coo_text
from .semilinear import criticality_coefficient, minimize_I, pohozaev_defect
from .spectral import hardy_constant, improved_hardy_check, nested_levels, tu8_constant

log = logging.getLogger("hardylab")

EXIT_OK, EXIT_CHECK_FAILED, EXIT_INVALID, EXIT_MODULE_ERROR = 0, 1, 2, 3

# pass thresholds of the checks written to summary.json
IDENTITY_RTOL = 0.05
DRIFT_TOL = 1e-10
SCHRODINGER_DRIFT_TOL = 1e-12
TRACE_GROWTH = 1.5
CONSTANT_STABILITY = 0.2
IMPROVED_FLOOR = 0.25 - 1e-8
POHOZAEV_1D_ABS = 1e-3
REDUCTION_TOL = 1e-4
ALGEBRA_RTOL = 1e-8
EL_TOL = 1e-6


def _num(x):
    """Plain Python scalar for CSV/JSON output."""
    if isinstance(x, (np.integer, int)) and not isinstance(x, bool):
        return int(x)
    if isinstance(x, (np.floating, float)):
        return float(x)
    return x


class Run:
    """In-memory artifacts of one command."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.files: dict[str, str] = {}
        self.checks: list[dict] = []
        self.results: dict = {}
        self.series: list[tuple] = []  # (h, value, residual, iterations) for study runs

    @property
    def provenance(self) -> str:
        return f"# hardylab {__version__} config={self.cfg.hash} seed={self.cfg['seed']}"

    def csv(self, name: str, header, rows) -> None:
        buf = io.StringIO()
        buf.write(self.provenance + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in map(_num, r)])
        self.files[name] = buf.getvalue()

    def check(self, name: str, lhs, rhs, residual, passed: bool, **extra) -> None:
        d = {"check": name, "lhs": _num(lhs), "rhs": _num(rhs), "residual": _num(residual), "pass": bool(passed)}
        d.update({k: _num(v) for k, v in extra.items()})
        self.checks.append(d)

    @property
    def passed(self) -> bool:
        return all(c["pass"] for c in self.checks)

    def summary(self) -> str:
        out = {
            "command": self.cfg.command,
            "version": __version__,
            "config_hash": self.cfg.hash,
            "seed": self.cfg["seed"],
            "passed": self.passed,
            "checks": self.checks,
            "results": self.results,
        }
        return json.dumps(_jsonable(out), indent=2, sort_keys=True) + "\n"

    def write(self, outdir: Path) -> None:
        outdir.mkdir(parents=True, exist_ok=True)
        for name, text in self.files.items():
            (outdir / name).write_text(text)
        (outdir / "summary.json").write_text(self.summary())


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    x = _num(x)
    if isinstance(x, float) and not math.isfinite(x):
        return repr(x)
    return x


# ---------------------------------------------------------------- levels

def _domain(cfg: RunConfig):
    if cfg["domain"] == "interval":
        return build_domain("interval", L=cfg["L"])
    return build_domain(cfg["domain"], radius=cfg["radius"])


def _levels(cfg: RunConfig):
    """(nominal h, mesh) per level: nested refinements, or re-meshed for a study."""
    dom = _domain(cfg)
    if cfg.command == "study":
        hs = sorted(cfg["h_list"], reverse=True)
        return [(h, generate_mesh(dom, h, cfg["grading"])) for h in hs]
    base = generate_mesh(dom, cfg["h"], cfg["grading"])
    meshes = nested_levels(base, cfg["levels"])
    return [(cfg["h"] / 2**k, m) for k, m in enumerate(meshes)]


def _level_ops(cfg: RunConfig, run: Run):
    levels = _levels(cfg)
    out = []
    for k, (hn, m) in enumerate(levels):
        ops = assemble(m, cfg["quad_order"], cfg["delta"])
        log.info("level %d: h=%.4g, %d dofs", k, m.h, ops.ndof)
        out.append((k, hn, ops))
    if cfg["export_matrices"]:
        ops = out[0][2]
        for name in ("K", "M", "W"):
            run.files[f"{name}.coo"] = coo_text(getattr(ops, name))
    return out


def _dt(cfg: RunConfig, hn: float, h0: float) -> float:
    if cfg["dt_ratio"] is not None:
        return cfg["dt_ratio"] * hn
    if cfg["dt"] is not None:
        return cfg["dt"] * hn / h0
    return hn / 2


def _decreasing(values, strict=True) -> bool:
    return all((b < a) if strict else (b <= a) for a, b in zip(values, values[1:]))


# ---------------------------------------------------------------- commands

def cmd_hardy(cfg: RunConfig, run: Run) -> None:
    rows, imp, const = [], [], []
    for k, hn, ops in _level_ops(cfg, run):
        h = ops.mesh.h
        hr = hardy_constant(ops)
        rows.append((k, h, ops.ndof, hr.mu_h, hr.target, hr.residual, hr.iterations))
        run.check("hardy_above_lambda_N", hr.mu_h, hr.target, hr.mu_h - hr.target, hr.mu_h > hr.target, level=k, h=h)
        ir = improved_hardy_check(ops)
        imp.append((k, h, ir.value, ir.residual, ir.iterations, ir.n_clamped))
        run.check("improved_hardy_floor", ir.value, 0.25, ir.value - 0.25, ir.value >= IMPROVED_FLOOR, level=k, h=h)
        for e in cfg["tu8_eps"]:
            cr = tu8_constant(ops, e)
            const.append((k, h, e, cr.value, cr.residual))
        run.series.append((h, hr.mu_h, hr.residual, hr.iterations))
    run.csv("hardy.csv", ["level", "h", "ndof", "mu_h", "lambda_N", "residual", "iterations"], rows)
    run.csv("improved_hardy.csv", ["level", "h", "nu_h", "residual", "iterations", "clamped"], imp)
    run.csv("constants.csv", ["level", "h", "eps", "C_h", "residual"], const)
    mus = [r[3] for r in rows]
    if len(mus) > 1:
        run.check("hardy_strictly_decreasing", mus[-1], mus[0], max(b - a for a, b in zip(mus, mus[1:])),
                  _decreasing(mus))
    for e in cfg["tu8_eps"]:
        cs = [r[3] for r in const if r[2] == e]
        finite = all(math.isfinite(c) for c in cs)
        worst = max((abs(b - a) / abs(a) for a, b in zip(cs, cs[1:])), default=0.0)
        run.check(f"constant_stable_eps={e:g}", cs[-1], cs[0], worst, finite and worst <= CONSTANT_STABILITY)
    run.results.update(mu_h=mus, nu_h=[r[2] for r in imp])


def cmd_elliptic(cfg: RunConfig, run: Run) -> None:
    lam = cfg["lambda"]
    levels = _level_ops(cfg, run)
    poh, traces = [], []
    lams = sorted({lam, levels[0][2].lambda_N})
    for k, hn, ops in levels:
        h = ops.mesh.h
        f = standard_loads(ops)[cfg["load"]]
        sol = solve(ops, lam, f)
        rep = pohozaev_check(ops, sol)
        poh.append((k, h, lam, rep.lhs, rep.rhs, rep.abs_residual, rep.rel_residual, sol.iterations, sol.residual))
        run.check("pohozaev", rep.lhs, rep.rhs, rep.rel_residual, rep.rel_residual <= IDENTITY_RTOL, level=k, h=h)
        run.check("solver_residual", sol.residual, 1e-10, sol.residual, sol.residual <= 1e-9, level=k, h=h)
        for lm in lams:
            for name, load in standard_loads(ops).items():
                traces.append((k, h, lm, name, trace_ratio(ops, solve(ops, lm, load))))
        run.series.append((h, rep.lhs, rep.rel_residual, sol.iterations))
    run.csv("pohozaev.csv", ["level", "h", "lambda", "lhs", "rhs", "abs_residual", "rel_residual",
                             "iterations", "solver_residual"], poh)
    run.csv("trace.csv", ["level", "h", "lambda", "load", "ratio"], traces)
    rels = [r[6] for r in poh]
    if len(rels) > 1:
        run.check("pohozaev_decreasing", rels[-1], rels[0], max(b - a for a, b in zip(rels, rels[1:])),
                  _decreasing(rels))
    for lm in lams:
        mx = [max(r[4] for r in traces if r[0] == k and r[2] == lm) for k, _, _ in levels]
        growth = max((b / a for a, b in zip(mx, mx[1:]) if a > 0), default=1.0)
        run.check(f"trace_growth_lambda={lm:g}", mx[-1], mx[0], growth, growth <= TRACE_GROWTH)
    if levels[0][2].N == 1 and lam == 0.0 and cfg["load"] == "one" and cfg["L"] == 1.0:
        # closed form: both sides equal 1/8 on (0, 1)
        k, h = poh[-1][0], poh[-1][1]
        err = max(abs(poh[-1][3] - 0.125), abs(poh[-1][4] - 0.125))
        run.check("pohozaev_closed_form", poh[-1][3], 0.125, err, err <= POHOZAEV_1D_ABS, level=k, h=h)
        errs = [abs(r[3] - 0.125) for r in poh]
        if len(errs) > 2:
            rates = [math.log(a / b) / math.log(ha / hb)
                     for a, b, ha, hb in zip(errs, errs[1:], [r[1] for r in poh], [r[1] for r in poh][1:])]
            run.check("pohozaev_first_order", min(rates), 1.0, min(rates), min(rates) >= 0.9)
            run.results["pohozaev_rates"] = rates
    if cfg["eps_list"]:
        ops = levels[-1][2]
        table, notes = lambda_continuation(ops, standard_loads(ops)[cfg["load"]], cfg["eps_list"])
        run.csv("continuation.csv", ["eps", "seminorm_difference", "eps_weighted_mass"], table)
        for col, name in ((1, "continuation_seminorm_decreasing"), (2, "continuation_weighted_mass_decreasing")):
            vals = [r[col] for r in table]
            run.check(name, vals[-1], vals[0], max(b - a for a, b in zip(vals, vals[1:])) if len(vals) > 1 else 0.0,
                      _decreasing(vals))
        run.results["continuation_notes"] = notes
    run.results["pohozaev_rel_residual"] = rels


def _wave_data(ops, seed):
    rng = np.random.default_rng(seed)
    return random_smooth_data(ops, rng), random_smooth_data(ops, rng)


def cmd_wave(cfg: RunConfig, run: Run) -> None:
    lam, T = cfg["lambda"], cfg["T"]
    levels = _level_ops(cfg, run)
    rows, traj = [], None
    for k, hn, ops in levels:
        dt = _dt(cfg, hn, levels[0][1])
        v0, v1 = _wave_data(ops, cfg["seed"])
        traj = wave_solve(ops, lam, v0, v1, T, dt)
        E = traj.trace.E_lambda
        drift = float(np.max(np.abs(E - E[0])) / E[0])
        mrep = multiplier_check(ops, traj)
        eq = mrep.extra["equipartition_rel_residual"]
        hr = hidden_regularity_ratio(ops, traj)
        h = ops.mesh.h
        rows.append((k, h, traj.dt, lam, traj.T, mrep.lhs, mrep.rhs, mrep.abs_residual, mrep.rel_residual, eq, drift, hr))
        run.check("energy_conservation", E[-1], E[0], drift, drift <= DRIFT_TOL, level=k, h=h)
        run.check("multiplier", mrep.lhs, mrep.rhs, mrep.rel_residual, mrep.rel_residual <= IDENTITY_RTOL, level=k, h=h)
        run.check("equipartition", eq, 0.0, eq, eq <= IDENTITY_RTOL, level=k, h=h)
        run.series.append((h, mrep.lhs, mrep.rel_residual, len(traj.times) - 1))
    run.csv("multiplier.csv", ["level", "h", "dt", "lambda", "T", "lhs", "rhs", "abs_residual", "rel_residual",
                               "equipartition_rel_residual", "energy_drift", "hidden_regularity_ratio"], rows)
    tr = traj.trace
    run.csv("trajectory.csv", ["t", "E_lambda", "mass", "boundary_flux"],
            zip(tr.times, tr.E_lambda, tr.mass, tr.boundary_flux_integral))
    rels = [r[8] for r in rows]
    if len(rels) > 1:
        run.check("multiplier_decreasing", rels[-1], rels[0], max(b - a for a, b in zip(rels, rels[1:])),
                  _decreasing(rels))
        hrs = [r[11] for r in rows]
        growth = max(b / a for a, b in zip(hrs, hrs[1:]))
        run.check("hidden_regularity_growth", hrs[-1], hrs[0], growth, growth <= TRACE_GROWTH)
    run.results.update(multiplier_rel_residual=rels, energy_drift=[r[10] for r in rows])


def _complex_data(ops, seed):
    rng = np.random.default_rng(seed)
    return random_smooth_data(ops, rng) + 1j * random_smooth_data(ops, rng)


def cmd_schrodinger(cfg: RunConfig, run: Run) -> None:
    lam, T = cfg["lambda"], cfg["T"]
    levels = _level_ops(cfg, run)
    rows, traj = [], None
    for k, hn, ops in levels:
        dt = _dt(cfg, hn, levels[0][1])
        traj = schrodinger_solve(ops, lam, _complex_data(ops, cfg["seed"]), T, dt)
        tr = traj.trace
        mdrift = float(np.max(np.abs(tr.mass - tr.mass[0])) / tr.mass[0])
        edrift = float(np.max(np.abs(tr.E_lambda - tr.E_lambda[0])) / tr.E_lambda[0])
        rep = smult_check(ops, traj)
        h = ops.mesh.h
        nsteps = len(traj.times) - 1
        rows.append((k, h, traj.dt, nsteps, lam, traj.T, rep.lhs, rep.rhs, rep.abs_residual, rep.rel_residual,
                     mdrift, edrift))
        run.check("mass_conservation", tr.mass[-1], tr.mass[0], mdrift, mdrift <= SCHRODINGER_DRIFT_TOL, level=k, h=h)
        run.check("energy_conservation", tr.E_lambda[-1], tr.E_lambda[0], edrift, edrift <= SCHRODINGER_DRIFT_TOL,
                  level=k, h=h)
        run.check("smult", rep.lhs, rep.rhs, rep.rel_residual, rep.rel_residual <= IDENTITY_RTOL, level=k, h=h)
        run.series.append((h, rep.lhs, rep.rel_residual, nsteps))
    run.csv("smult.csv", ["level", "h", "dt", "steps", "lambda", "T", "lhs", "rhs", "abs_residual", "rel_residual",
                          "mass_drift", "energy_drift"], rows)
    tr = traj.trace
    run.csv("trajectory.csv", ["t", "E_lambda", "mass", "boundary_flux"],
            zip(tr.times, tr.E_lambda, tr.mass, tr.boundary_flux_integral))
    rels = [r[9] for r in rows]
    if len(rels) > 1:
        run.check("smult_decreasing", rels[-1], rels[0], max(b - a for a, b in zip(rels, rels[1:])), _decreasing(rels))
    run.results.update(smult_rel_residual=rels, mass_drift=[r[10] for r in rows], energy_drift=[r[11] for r in rows])


def _hum_target(cfg, ops, modes, kind):
    mu, Phi = modes
    if cfg["data"] == "mode1":
        u0 = Phi[:, 0].copy()
        return (u0.astype(complex), None) if kind == "schrodinger" else (u0, np.zeros_like(u0))
    rng = np.random.default_rng(cfg["seed"])
    if kind == "schrodinger":
        return random_smooth_data(ops, rng) + 1j * random_smooth_data(ops, rng), None
    return random_smooth_data(ops, rng), random_smooth_data(ops, rng)


def _hum_problem(cfg, ops, u0, u1, tol=None):
    return HUMProblem(ops, cfg["lambda"], cfg["T"], cfg["dt"], u0, u1, cfg["equation"], cfg["rho"],
                      cfg["tol"] if tol is None else tol, cfg["cg_max_iter"],
                      allow_short_time=cfg["allow_short_time"])


def _inner(a, b) -> float:
    return float(np.real(np.vdot(a, b)))


def cmd_hum(cfg: RunConfig, run: Run) -> None:
    kind = cfg["equation"]
    k, hn, ops = _level_ops(cfg, run)[-1]
    lam = cfg["lambda"]
    modes = filtered_modes(ops, lam, cfg["rho"])
    u0, u1 = _hum_target(cfg, ops, modes, kind)
    problem = _hum_problem(cfg, ops, u0, u1)
    res = hum_solve(problem) if kind == "wave" else schrodinger_hum(problem)
    h = ops.mesh.h
    final_res = res.cg_history[-1]
    run.check("cg_residual", final_res, cfg["tol"], final_res,
              res.converged and final_res <= cfg["tol"] and res.iterations <= cfg["cg_max_iter"],
              iterations=res.iterations)
    red = res.reduction
    run.check("energy_reduction", res.final_state_norms["filtered"] ** 2,
              REDUCTION_TOL * res.uncontrolled_norms["filtered"] ** 2, red, red <= REDUCTION_TOL)
    run.csv("cg.csv", ["iteration", "relative_residual"], enumerate(res.cg_history))
    g0 = np.flatnonzero(ops.mesh.gamma0)
    ctrl = res.control
    rows = []
    for n, t in enumerate(res.times):
        for f in g0:
            val = ctrl[n, f]
            if kind == "wave":
                rows.append((t, int(f), float(val)))
            else:
                rows.append((t, int(f), float(val.real), float(val.imag)))
    run.csv("control.csv", ["t", "facet", "h"] if kind == "wave" else ["t", "facet", "h_real", "h_imag"], rows)
    off = float(np.max(np.abs(np.delete(ctrl, g0, axis=1)))) if ctrl.shape[1] > len(g0) else 0.0
    run.check("control_supported_on_gamma0", off, 0.0, off, off == 0.0)

    # Gramian algebra on random filtered pairs, through the time-stepping sweeps
    cls = WaveGramian if kind == "wave" else SchrodingerGramian
    gram = cls(ops, lam, cfg["T"], cfg["dt"], cfg["rho"], modes)
    rng = np.random.default_rng(cfg["seed"])
    ns = cfg["samples"]
    shape = (gram.dim, 2 * ns)
    C = rng.standard_normal(shape) if kind == "wave" else rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    LC = np.column_stack([gram.apply(C[:, j]) for j in range(2 * ns)])
    G = gram.modal_matrix()
    sym, pos, quad, alg = [], [], [], []
    for j in range(ns):
        a, b = C[:, 2 * j], C[:, 2 * j + 1]
        La, Lb = LC[:, 2 * j], LC[:, 2 * j + 1]
        qa, qb = _inner(a, La), _inner(b, Lb)
        scale = math.sqrt(abs(qa * qb)) or 1.0
        sym.append(abs(_inner(La, b) - _inner(a, Lb)) / scale)
        pos.append(qa / _inner(a, a))
        # the quadratic form equals the time-integrated weighted boundary observation
        y = gram.observe(*gram.to_state(a)) if kind == "wave" else gram.observe(gram.to_state(a))
        direct = float(gram.tau @ (np.abs(y) ** 2 @ gram.w))
        quad.append(abs(qa - direct) / abs(direct))
        alg.append(abs(qa - _inner(a, G @ a)) / abs(qa))
    run.check("gramian_symmetry", max(sym), 0.0, max(sym), max(sym) <= ALGEBRA_RTOL, samples=ns)
    run.check("gramian_positivity", min(pos), 0.0, max(quad), min(pos) > 0 and max(quad) <= ALGEBRA_RTOL, samples=ns)
    run.check("gramian_modal_agreement", max(alg), 0.0, max(alg), max(alg) <= ALGEBRA_RTOL, samples=ns)

    # linearity of data -> control, with tightly converged CG
    lt = cfg["linearity_tol"]
    if kind == "wave":
        d1 = (random_smooth_data(ops, rng), random_smooth_data(ops, rng))
        d2 = (random_smooth_data(ops, rng), random_smooth_data(ops, rng))
        d3 = (d1[0] + 2 * d2[0], d1[1] + 2 * d2[1])
    else:
        d1 = (random_smooth_data(ops, rng) + 1j * random_smooth_data(ops, rng), None)
        d2 = (random_smooth_data(ops, rng) + 1j * random_smooth_data(ops, rng), None)
        d3 = (d1[0] + 2 * d2[0], None)
    solver = hum_solve if kind == "wave" else schrodinger_hum
    h1, h2, h3 = (solver(_hum_problem(cfg, ops, *d, tol=lt)).control for d in (d1, d2, d3))
    lin = float(np.max(np.abs(h3 - h1 - 2 * h2)) / np.max(np.abs(h3)))
    run.check("hum_linearity", lin, 0.0, lin, lin <= ALGEBRA_RTOL)

    run.results.update(
        equation=kind, h=h, ndof=ops.ndof, modes=res.extra["modes"], dt=res.extra["dt"], T=res.extra["T"],
        iterations=res.iterations, final_state_norms=res.final_state_norms,
        uncontrolled_norms=res.uncontrolled_norms, reduction=red, gram_min=res.gram_min,
    )
    if cfg["T_list"]:
        if kind != "wave":
            raise ValueError("the observability scan is defined for the wave equation")
        scan = observability_scan(ops, lam, cfg["T_list"], cfg["scan_samples"], cfg["rho"], cfg["dt"], cfg["seed"])
        run.csv("scan.csv", ["T", "min", "mean", "max"], scan)
        mins = [r[1] for r in scan]
        run.check("scan_nondecreasing", mins[-1], mins[0],
                  max((a - b for a, b in zip(mins, mins[1:])), default=0.0), _decreasing(mins[::-1], strict=False))
        long = [r for r in scan if r[0] > 2 * ops.R_Omega]
        if long:
            run.check("scan_positive_beyond_2R", long[0][1], 0.0, long[0][1], all(r[1] > 0 for r in long),
                      T=long[0][0])
        run.results["scan"] = scan


def cmd_semilinear(cfg: RunConfig, run: Run) -> None:
    lam, alpha = cfg["lambda"], cfg["alpha"]
    rows, res = [], None
    for k, hn, ops in _level_ops(cfg, run):
        res = minimize_I(ops, lam, alpha)
        rep = pohozaev_defect(ops, res)
        h = ops.mesh.h
        rows.append((k, h, alpha, lam, res.I_value, res.iterations, res.newton_steps, res.el_residual,
                     res.energy_identity, rep.lhs, rep.rhs, rep.abs_residual, rep.rel_residual))
        run.check("euler_lagrange", res.el_residual, EL_TOL, res.el_residual, res.el_residual <= EL_TOL, level=k, h=h)
        run.check("energy_identity", res.energy_identity, EL_TOL, res.energy_identity, res.energy_identity <= EL_TOL,
                  level=k, h=h)
        run.check("pohozaev_defect", rep.lhs, rep.rhs, rep.rel_residual, rep.rel_residual <= IDENTITY_RTOL,
                  level=k, h=h)
        run.series.append((h, res.I_value, rep.rel_residual, res.iterations))
    run.csv("defect.csv", ["level", "h", "alpha", "lambda", "I", "iterations", "newton_steps", "el_residual",
                           "energy_identity", "lhs", "rhs", "abs_residual", "rel_residual"], rows)
    run.csv("iterations.csv", ["iteration", "quotient"], enumerate(res.history))
    for N, a in ((3, 5.0), (4, 3.0)):
        c = criticality_coefficient(N, a)
        run.check(f"criticality_zero_N={N}_alpha={a:g}", c, 0.0, abs(c), c == 0.0)
    run.results.update(I=[r[4] for r in rows], pohozaev_rel_residual=[r[12] for r in rows])


STUDY = {
    "hardy": cmd_hardy,
    "pohozaev": cmd_elliptic,
    "trace": cmd_elliptic,
    "multiplier": cmd_wave,
    "smult": cmd_schrodinger,
    "semilinear": cmd_semilinear,
}


def cmd_study(cfg: RunConfig, run: Run) -> None:
    STUDY[cfg["check"]](cfg, run)
    hs = [s[0] for s in run.series]
    rows = []
    for i, (h, v, r, it) in enumerate(run.series):
        rate = math.log(run.series[i - 1][2] / r) / math.log(hs[i - 1] / h) if i and r > 0 and run.series[i - 1][2] > 0 else float("nan")
        rows.append((h, v, r, it, rate))
    run.csv("convergence.csv", ["h", "value", "residual", "iterations", "observed_rate"], rows)


COMMAND_FUNCS = {
    "hardy": cmd_hardy,
    "elliptic": cmd_elliptic,
    "wave": cmd_wave,
    "schrodinger": cmd_schrodinger,
    "hum": cmd_hum,
    "semilinear": cmd_semilinear,
    "study": cmd_study,
}


def execute(cfg: RunConfig) -> Run:
    """Run a validated configuration in memory; module errors propagate."""
    run = Run(cfg)
    with np.errstate(all="ignore"):
        COMMAND_FUNCS[cfg.command](cfg, run)
    return run


def run(cfg: RunConfig, output: str | Path | None = None) -> int:
    """Execute and write artifacts; returns the exit code."""
    try:
        r = execute(cfg)
    except Exception as exc:  # noqa: BLE001 - every module error maps to one exit code
        print(f"hardylab {cfg.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_MODULE_ERROR
    outdir = Path(output if output is not None else cfg["output"])
    r.write(outdir)
    for c in r.checks:
        log.info("%-40s %s residual=%s", c["check"], "pass" if c["pass"] else "FAIL", c["residual"])
    return EXIT_OK if r.passed else EXIT_CHECK_FAILED


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hardylab", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=f"hardylab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("config", nargs="?", help="key = value configuration file")
        s.add_argument("-v", "--verbose", action="store_true")
        for key, (_, _, desc) in KEYS.items():
            if key == "command":
                continue
            s.add_argument(f"--{key}", dest=f"opt_{key}", metavar="VALUE", help=desc)
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    text = ""
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            print(f"hardylab: cannot read {args.config}: {exc}", file=sys.stderr)
            return EXIT_INVALID
    overrides = {k[4:]: v for k, v in vars(args).items() if k.startswith("opt_") and v is not None}
    try:
        cfg = parse_config(text, command=args.command, overrides=overrides)
    except ConfigError as exc:
        print(f"hardylab {args.command}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
