"""Case-C1 domains with the singular point on the boundary, and their meshes.

Three shapes are supported, all contained in the upper half space
``x_N > 0`` with the origin on the boundary:

* ``interval``      -- (0, L) in one dimension;
* ``tangent_disk``  -- the disk of radius r centred at (0, r);
* ``half_disk``     -- {|x| < r, x_2 > 0}.

One-dimensional meshes are uniform grids (optionally graded toward 0).  Two
dimensional meshes are Delaunay triangulations of a hexagonal point lattice
plus boundary points, with a vertex pinned at the origin.  Facet normals are
computed from the discrete geometry, so the divergence theorem
``sum_f (x.nu)|f| = N |Omega_h|`` holds exactly on the polygon.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import Delaunay

__all__ = [
    "TOL_GEOM",
    "DomainSpec",
    "Mesh",
    "BoundaryData",
    "MeshQualityError",
    "build_domain",
    "generate_mesh",
    "refine",
    "classify_boundary",
    "write_mesh",
    "read_mesh",
]

TOL_GEOM = 1e-12
MIN_RADIUS_RATIO = 0.05
# Lattice spacing relative to the requested h; keeps the max cell diameter ~h.
SPACING_FACTOR = 1.6


class MeshQualityError(RuntimeError):
    """Raised when a generated mesh contains degenerate or inverted cells."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report or {}


@dataclass(frozen=True)
class DomainSpec:
    kind: str
    dim: int
    size: float  # L for the interval, r for the disks
    R_Omega: float
    star_shaped: bool
    origin_on_boundary: bool = True
    center: tuple = (0.0,)

    @property
    def measure(self) -> float:
        if self.kind == "interval":
            return self.size
        if self.kind == "tangent_disk":
            return math.pi * self.size**2
        return 0.5 * math.pi * self.size**2

    def signed_distance(self, x: np.ndarray) -> np.ndarray:
        """Negative inside, zero on the boundary."""
        x = np.atleast_2d(x)
        if self.kind == "interval":
            return np.maximum(-x[:, 0], x[:, 0] - self.size)
        c = np.asarray(self.center)
        if self.kind == "tangent_disk":
            return np.linalg.norm(x - c, axis=1) - self.size
        return np.maximum(np.linalg.norm(x, axis=1) - self.size, -x[:, 1])

    def bubble(self, x: np.ndarray) -> np.ndarray:
        """Smooth function positive inside and vanishing on the boundary."""
        x = np.atleast_2d(x)
        r = self.size
        if self.kind == "interval":
            return x[:, 0] * (r - x[:, 0])
        if self.kind == "tangent_disk":
            return r**2 - np.sum((x - np.asarray(self.center)) ** 2, axis=1)
        return x[:, 1] * (r**2 - np.sum(x**2, axis=1))

    def radial_extent(self, theta: np.ndarray) -> np.ndarray:
        """Distance from the origin to the boundary along the ray of angle theta."""
        if self.kind == "tangent_disk":
            return 2.0 * self.size * np.sin(theta)
        return np.full_like(theta, self.size)

    def sample_boundary(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Points and exact outward normals on the analytic boundary."""
        if self.kind == "interval":
            return np.array([[0.0], [self.size]]), np.array([[-1.0], [1.0]])
        r = self.size
        if self.kind == "tangent_disk":
            phi = 2 * np.pi * (np.arange(n) + 0.5) / n
            nu = np.column_stack([np.cos(phi), np.sin(phi)])
            return np.asarray(self.center) + r * nu, nu
        na = n // 2
        phi = np.pi * (np.arange(na) + 0.5) / na
        nu_a = np.column_stack([np.cos(phi), np.sin(phi)])
        xs = r * (2 * (np.arange(n - na) + 0.5) / (n - na) - 1)
        pts = np.vstack([r * nu_a, np.column_stack([xs, np.zeros_like(xs)])])
        nus = np.vstack([nu_a, np.tile([0.0, -1.0], (n - na, 1))])
        return pts, nus


def build_domain(kind: str, **params) -> DomainSpec:
    """Describe a case-C1 domain.

    ``interval`` takes ``L`` (and optionally the left end ``a``, which must be
    0); ``tangent_disk`` takes ``radius`` and optionally ``center``;
    ``half_disk`` takes ``radius``.
    """
    if kind == "interval":
        L = float(params.get("L", params.get("length", 1.0)))
        a = float(params.get("a", 0.0))
        if L <= 0:
            raise ValueError("interval length must be positive")
        if a != 0.0:
            raise ValueError("the origin must lie on the boundary: the interval has to start at 0")
        return DomainSpec("interval", 1, L, L, True, True, (L / 2,))
    if kind in ("tangent_disk", "half_disk"):
        r = float(params.get("radius", params.get("r", 1.0)))
        if r <= 0:
            raise ValueError("radius must be positive")
        if kind == "half_disk":
            return DomainSpec("half_disk", 2, r, r, True, True, (0.0, 0.0))
        c = tuple(float(v) for v in params.get("center", (0.0, r)))
        if abs(math.hypot(*c) - r) > TOL_GEOM * max(1.0, r):
            raise ValueError("the origin is not on the boundary of this disk")
        if abs(c[0]) > TOL_GEOM * max(1.0, r) or c[1] <= 0:
            raise ValueError("disk is not contained in the upper half plane (case C2 is unsupported)")
        spec = DomainSpec("tangent_disk", 2, r, 2.0 * r, True, True, (0.0, r))
        pts, nus = spec.sample_boundary(4096)
        star = bool(np.min(np.sum(pts * nus, axis=1)) >= -TOL_GEOM)
        return DomainSpec("tangent_disk", 2, r, 2.0 * r, star, True, (0.0, r))
    raise ValueError(f"unsupported domain kind {kind!r}")


@dataclass(frozen=True)
class BoundaryData:
    """Facet quadrature data: points, weights, x.nu and |x|^2 at the points."""

    facet: np.ndarray
    points: np.ndarray
    weights: np.ndarray
    xdotnu: np.ndarray
    r2: np.ndarray
    gamma0: np.ndarray  # per facet


@dataclass(eq=False)
class Mesh:
    domain: DomainSpec
    vertices: np.ndarray
    cells: np.ndarray
    facets: np.ndarray = field(init=False)
    facet_cell: np.ndarray = field(init=False)
    normals: np.ndarray = field(init=False)
    facet_measure: np.ndarray = field(init=False)
    xdotnu: np.ndarray = field(init=False)
    gamma0: np.ndarray = field(init=False)
    dof: np.ndarray = field(init=False)
    h: float = field(init=False)

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=float)
        self.cells = np.ascontiguousarray(self.cells, dtype=np.int64)
        _orient(self)
        _extract_boundary(self)
        on_bnd = np.zeros(len(self.vertices), bool)
        on_bnd[self.facets.ravel()] = True
        self.dof = np.full(len(self.vertices), -1, dtype=np.int64)
        self.dof[~on_bnd] = np.arange(int((~on_bnd).sum()))
        self.h = float(self.cell_diameters().max())
        for a in ("vertices", "cells", "facets", "facet_cell", "normals", "facet_measure", "xdotnu", "gamma0", "dof"):
            getattr(self, a).setflags(write=False)

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def ndof(self) -> int:
        return int((self.dof >= 0).sum())

    @property
    def interior(self) -> np.ndarray:
        return np.flatnonzero(self.dof >= 0)

    @property
    def boundary_vertices(self) -> np.ndarray:
        return np.flatnonzero(self.dof < 0)

    def cell_volumes(self) -> np.ndarray:
        p = self.vertices[self.cells]
        if self.dim == 1:
            return p[:, 1, 0] - p[:, 0, 0]
        e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def cell_diameters(self) -> np.ndarray:
        p = self.vertices[self.cells]
        if self.dim == 1:
            return np.abs(p[:, 1, 0] - p[:, 0, 0])
        d = [np.linalg.norm(p[:, i] - p[:, j], axis=1) for i, j in ((0, 1), (1, 2), (2, 0))]
        return np.max(d, axis=0)

    def radius_ratios(self) -> np.ndarray:
        """2 r_in / r_circ per cell; 1 for equilateral triangles, 1 in 1D."""
        if self.dim == 1:
            return np.ones(len(self.cells))
        p = self.vertices[self.cells]
        a = np.linalg.norm(p[:, 1] - p[:, 2], axis=1)
        b = np.linalg.norm(p[:, 2] - p[:, 0], axis=1)
        c = np.linalg.norm(p[:, 0] - p[:, 1], axis=1)
        area = np.abs(self.cell_volumes())
        s = 0.5 * (a + b + c)
        r_in = area / s
        r_circ = a * b * c / (4 * area)
        return 2 * r_in / r_circ

    def to_dofs(self, values: np.ndarray) -> np.ndarray:
        """Restrict a vertex array to the Dirichlet degrees of freedom."""
        return np.asarray(values)[self.interior]

    def from_dofs(self, u: np.ndarray) -> np.ndarray:
        """Extend a dof vector by zero on the boundary vertices."""
        u = np.asarray(u)
        out = np.zeros((len(self.vertices),) + u.shape[1:], dtype=u.dtype)
        out[self.interior] = u
        return out

    def interpolate(self, f) -> np.ndarray:
        """Nodal interpolant of a callable, restricted to the dofs."""
        return np.asarray(f(self.vertices[self.interior]), dtype=float)

    def quality_report(self) -> dict:
        q = self.radius_ratios()
        return {
            "cells": int(len(self.cells)),
            "vertices": int(len(self.vertices)),
            "h": self.h,
            "min_radius_ratio": float(q.min()),
            "mean_radius_ratio": float(q.mean()),
            "min_volume": float(self.cell_volumes().min()),
        }


def _orient(mesh: Mesh) -> None:
    vol = mesh.cell_volumes()
    flip = vol < 0
    if np.any(flip):
        c = mesh.cells.copy()
        c[flip, 0], c[flip, 1] = mesh.cells[flip, 1], mesh.cells[flip, 0]
        mesh.cells = c


def _extract_boundary(mesh: Mesh) -> None:
    cells, X = mesh.cells, mesh.vertices
    if mesh.dim == 1:
        counts = np.bincount(cells.ravel(), minlength=len(X))
        bv = np.flatnonzero(counts == 1)
        facets = bv[:, None]
        fcell = np.array([np.flatnonzero((cells == v).any(axis=1))[0] for v in bv])
        other = np.where(cells[fcell, 0] == bv, cells[fcell, 1], cells[fcell, 0])
        normals = np.sign(X[bv, 0] - X[other, 0])[:, None]
        measure = np.ones(len(bv))
        mid = X[bv]
    else:
        loc = np.array([[1, 2], [2, 0], [0, 1]])
        edges = cells[:, loc].reshape(-1, 2)
        key = np.sort(edges, axis=1)
        _, inv, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
        inv = inv.ravel()
        bmask = counts[inv] == 1
        eidx = np.flatnonzero(bmask)
        facets = edges[eidx]
        fcell = eidx // 3
        opposite = cells[fcell, eidx % 3]
        e = X[facets[:, 1]] - X[facets[:, 0]]
        measure = np.linalg.norm(e, axis=1)
        normals = np.column_stack([e[:, 1], -e[:, 0]]) / measure[:, None]
        mid = 0.5 * (X[facets[:, 0]] + X[facets[:, 1]])
        s = np.sum(normals * (X[opposite] - mid), axis=1)
        normals[s > 0] *= -1
        if np.any(counts > 2):
            raise MeshQualityError("non-manifold edge in triangulation")
    mesh.facets = np.ascontiguousarray(facets, dtype=np.int64)
    mesh.facet_cell = np.asarray(fcell, dtype=np.int64)
    mesh.normals = np.asarray(normals, dtype=float)
    mesh.facet_measure = np.asarray(measure, dtype=float)
    mesh.xdotnu = np.sum(mid * normals, axis=1)
    mesh.gamma0 = mesh.xdotnu >= -TOL_GEOM


def _check_quality(mesh: Mesh) -> Mesh:
    report = mesh.quality_report()
    if report["min_volume"] <= 0 or report["min_radius_ratio"] < MIN_RADIUS_RATIO:
        raise MeshQualityError(
            f"degenerate cells: min radius ratio {report['min_radius_ratio']:.3g}", report
        )
    return mesh


def _boundary_points(domain: DomainSpec, h: float) -> np.ndarray:
    r = domain.size
    if domain.kind == "tangent_disk":
        n = max(8, math.ceil(2 * math.pi * r / h))
        phi = -0.5 * math.pi + 2 * math.pi * np.arange(n) / n
        pts = np.column_stack([r * np.cos(phi), r + r * np.sin(phi)])
        pts[0] = 0.0
        return pts
    na = max(4, math.ceil(math.pi * r / h))
    phi = math.pi * np.arange(na + 1) / na
    arc = r * np.column_stack([np.cos(phi), np.sin(phi)])
    arc[0, 1] = arc[-1, 1] = 0.0
    nf = max(2, math.ceil(2 * r / h))
    nf += nf % 2
    xs = r * (2 * np.arange(1, nf) / nf - 1)
    xs[nf // 2 - 1] = 0.0
    return np.vstack([arc, np.column_stack([xs, np.zeros_like(xs)])])


def _lattice_points(domain: DomainSpec, h: float) -> np.ndarray:
    c = np.asarray(domain.center if domain.kind == "tangent_disk" else (0.0, 0.5 * domain.size))
    r = domain.size
    dy = h * math.sqrt(3) / 2
    nx, ny = math.ceil(r / h) + 2, math.ceil(r / dy) + 2
    j, i = np.meshgrid(np.arange(-ny, ny + 1), np.arange(-nx, nx + 1), indexing="ij")
    x = c[0] + (i + 0.5 * (j % 2)) * h
    y = c[1] + j * dy
    pts = np.column_stack([x.ravel(), y.ravel()])
    return pts[domain.signed_distance(pts) < -0.5 * h]


def _radial_grading(domain: DomainSpec, X: np.ndarray, q: float) -> np.ndarray:
    rho = np.linalg.norm(X, axis=1)
    theta = np.arctan2(X[:, 1], X[:, 0])
    ext = np.maximum(domain.radial_extent(theta), rho)
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(rho > 0, (rho / ext) ** (q - 1.0), 0.0)
    return X * scale[:, None]


def generate_mesh(domain: DomainSpec, h: float, grading: float = 0.0) -> Mesh:
    """Mesh ``domain`` with target cell size ``h``.

    ``grading > 0`` clusters vertices geometrically toward the origin through
    the radial map rho -> rho_max (rho / rho_max)^(1 + grading), which keeps the
    boundary fixed.
    """
    if not (h > 0 and h < domain.R_Omega / 4):
        raise ValueError(f"mesh size h={h} must satisfy 0 < h < R_Omega/4 = {domain.R_Omega / 4}")
    if grading < 0:
        raise ValueError("grading must be non-negative")
    q = 1.0 + grading
    if domain.dim == 1:
        n = max(4, int(round(domain.size / h)))
        x = domain.size * (np.arange(n + 1) / n) ** q
        cells = np.column_stack([np.arange(n), np.arange(1, n + 1)])
        return _check_quality(Mesh(domain, x[:, None], cells))
    s = h / SPACING_FACTOR
    bnd = _boundary_points(domain, s)
    pts = np.vstack([bnd, _lattice_points(domain, s)])
    tri = Delaunay(pts)
    cells = tri.simplices
    p = pts[cells]
    e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    area = 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    cells = cells[area > 1e-10 * s * s]
    if grading > 0:
        pts = _radial_grading(domain, pts, q)
    mesh = Mesh(domain, pts, cells)
    bv = mesh.boundary_vertices
    if np.max(np.abs(domain.signed_distance(mesh.vertices[bv]))) > 1e-9 * domain.size:
        raise MeshQualityError("triangulation boundary does not follow the domain boundary")
    if not np.any(np.all(mesh.vertices[bv] == 0.0, axis=1)):
        raise MeshQualityError("origin is not a boundary vertex")
    return _check_quality(mesh)


def refine(mesh: Mesh, project: bool = False) -> Mesh:
    """Uniform midpoint refinement.

    With ``project=False`` new boundary vertices stay on the old facets, so the
    coarse finite element space is a subspace of the fine one.
    """
    X, cells = mesh.vertices, mesh.cells
    if mesh.dim == 1:
        mids = 0.5 * (X[cells[:, 0]] + X[cells[:, 1]])
        nv = len(X)
        newX = np.vstack([X, mids])
        m = nv + np.arange(len(cells))
        newc = np.vstack([np.column_stack([cells[:, 0], m]), np.column_stack([m, cells[:, 1]])])
        order = np.argsort(newX[:, 0], kind="stable")
        rank = np.empty_like(order)
        rank[order] = np.arange(len(order))
        newc = rank[newc]
        newc = newc[np.argsort(newc[:, 0])]
        return Mesh(mesh.domain, newX[order], newc)
    loc = np.array([[1, 2], [2, 0], [0, 1]])
    edges = np.sort(cells[:, loc].reshape(-1, 2), axis=1)
    uniq, inv = np.unique(edges, axis=0, return_inverse=True)
    inv = inv.ravel().reshape(-1, 3) + len(X)
    mids = 0.5 * (X[uniq[:, 0]] + X[uniq[:, 1]])
    if project:
        counts = np.bincount(inv.ravel() - len(X), minlength=len(uniq))
        bm = counts == 1
        mids[bm] = _project_to_boundary(mesh.domain, mids[bm])
    newX = np.vstack([X, mids])
    a, b, c = cells[:, 0], cells[:, 1], cells[:, 2]
    ma, mb, mc = inv[:, 0], inv[:, 1], inv[:, 2]  # opposite vertex a, b, c
    newc = np.vstack([
        np.column_stack([a, mc, mb]),
        np.column_stack([mc, b, ma]),
        np.column_stack([mb, ma, c]),
        np.column_stack([ma, mb, mc]),
    ])
    return _check_quality(Mesh(mesh.domain, newX, newc))


def _project_to_boundary(domain: DomainSpec, P: np.ndarray) -> np.ndarray:
    if domain.kind == "tangent_disk":
        c = np.asarray(domain.center)
        d = P - c
        return c + domain.size * d / np.linalg.norm(d, axis=1)[:, None]
    out = P.copy()
    arc = P[:, 1] > TOL_GEOM
    out[arc] = domain.size * P[arc] / np.linalg.norm(P[arc], axis=1)[:, None]
    return out


def classify_boundary(mesh: Mesh, order: int = 5) -> BoundaryData:
    """Facet quadrature with the Gamma_0 mask and the weights x.nu and |x|^2.

    On straight facets x.nu is constant; |x|^2 is quadratic and integrated
    exactly for ``order >= 2``.
    """
    X = mesh.vertices
    if mesh.dim == 1:
        pts = X[mesh.facets[:, 0]]
        w = np.ones(len(pts))
        fac = np.arange(len(pts))
    else:
        xi, wq = np.polynomial.legendre.leggauss(max(1, (order + 2) // 2))
        xi = 0.5 * (xi + 1)
        wq = 0.5 * wq
        a, b = X[mesh.facets[:, 0]], X[mesh.facets[:, 1]]
        pts = (a[:, None, :] * (1 - xi)[None, :, None] + b[:, None, :] * xi[None, :, None]).reshape(-1, 2)
        w = (mesh.facet_measure[:, None] * wq[None, :]).ravel()
        fac = np.repeat(np.arange(len(a)), len(xi))
    xn = np.sum(pts * mesh.normals[fac], axis=1)
    return BoundaryData(fac, pts, w, xn, np.sum(pts**2, axis=1), mesh.gamma0.copy())


# ---------------------------------------------------------------- text format

def write_mesh(mesh: Mesh, path) -> None:
    """Write the VERTICES / CELLS / BOUNDARY text format."""
    d = mesh.domain
    buf = io.StringIO()
    buf.write("# hardylab mesh v1\n")
    buf.write(f"DOMAIN {d.kind} size={d.size!r}\n")
    buf.write(f"VERTICES {len(mesh.vertices)} {mesh.dim}\n")
    for x in mesh.vertices:
        buf.write(" ".join(repr(float(v)) for v in x) + "\n")
    buf.write(f"CELLS {len(mesh.cells)} {mesh.cells.shape[1]}\n")
    for c in mesh.cells:
        buf.write(" ".join(str(int(v)) for v in c) + "\n")
    buf.write(f"BOUNDARY {len(mesh.facets)}\n")
    buf.write("# cell vertices... normal... xdotnu gamma0\n")
    for f in range(len(mesh.facets)):
        row = [str(int(mesh.facet_cell[f]))]
        row += [str(int(v)) for v in mesh.facets[f]]
        row += [repr(float(v)) for v in mesh.normals[f]]
        row += [repr(float(mesh.xdotnu[f])), str(int(mesh.gamma0[f]))]
        buf.write(" ".join(row) + "\n")
    Path(path).write_text(buf.getvalue())


def read_mesh(path) -> Mesh:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip() and not ln.startswith("#")]
    it = iter(lines)
    head = next(it).split()
    if head[0] != "DOMAIN":
        raise ValueError("missing DOMAIN section")
    kind = head[1]
    size = float(head[2].split("=")[1])
    domain = build_domain(kind, L=size) if kind == "interval" else build_domain(kind, radius=size)
    _, nv, dim = next(it).split()
    X = np.array([[float(v) for v in next(it).split()] for _ in range(int(nv))]).reshape(int(nv), int(dim))
    _, nc, k = next(it).split()
    C = np.array([[int(v) for v in next(it).split()] for _ in range(int(nc))]).reshape(int(nc), int(k))
    mesh = Mesh(domain, X, C)
    sec = next(it).split()
    if sec[0] != "BOUNDARY" or int(sec[1]) != len(mesh.facets):
        raise ValueError("BOUNDARY section inconsistent with the cells")
    return mesh
