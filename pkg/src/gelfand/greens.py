"""Planar domains, the 5-point Dirichlet solver, Green's regular part and the projection P.

Meshes are tensor products of two coordinate axes. Uniform axes give the
classical 5-point scheme; graded axes (fine core, geometric growth outward)
are used when a concentrated bubble has to be resolved. Where a stencil arm
crosses a curved boundary the arm is shortened to the crossing point
(Shortley-Weller), which keeps the scheme second order.
"""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import ndimage
from scipy.spatial import cKDTree

from ._fd import central_weights

log = logging.getLogger(__name__)

DIRECT_LIMIT = 600_000
TWO_PI = 2.0 * np.pi


class DomainError(ValueError):
    """Bad geometry or an evaluation point the domain cannot serve."""


class SolverError(RuntimeError):
    """Linear solve failed or did not reach the residual target."""


def graded_axis(lo: float, hi: float, core: tuple[float, float], h_core: float,
                h_far: float, ratio: float = 1.08) -> np.ndarray:
    """1D nodes: uniform spacing ``h_core`` on ``core``, geometric growth outside.

    Growth stops at ``h_far``. The end points ``lo`` and ``hi`` are always nodes.
    """
    a, b = core
    if not lo < a < b < hi:
        raise DomainError(f"core {core} must lie strictly inside ({lo}, {hi})")
    n_core = max(1, int(np.ceil((b - a) / h_core)))
    inner = np.linspace(a, b, n_core + 1)
    step = (b - a) / n_core

    def grow(start: float, stop: float, sign: float) -> list[float]:
        pts, x, s = [], start, step
        while True:
            s = min(s * ratio, h_far)
            x = x + sign * s
            if sign * (stop - x) < 0.5 * s:
                break
            pts.append(x)
        pts.append(stop)
        return pts

    right = grow(b, hi, 1.0)
    left = grow(a, lo, -1.0)[::-1]
    return np.concatenate([left, inner, right])


@dataclass(eq=False)
class Domain:
    """A planar region together with its tensor-product mesh.

    ``kind`` is ``"disk"`` (unit disk), ``"annulus"`` (inner radius
    ``inner_radius``, outer radius 1) or ``"mask"`` (boolean node mask on the
    mesh, boundary = excluded nodes next to included ones).
    """

    kind: str
    xs: np.ndarray
    ys: np.ndarray
    inner_radius: float = 0.0
    mask: np.ndarray | None = None
    analytic: bool = True
    name: str = ""
    _cache: dict = field(default_factory=dict, repr=False)

    # ---- constructors -------------------------------------------------
    @classmethod
    def unit_disk(cls, h: float = 1 / 64, analytic: bool = True) -> "Domain":
        n = int(round(2.0 / h))
        ax = np.linspace(-1.0, 1.0, n + 1)
        return cls("disk", ax, ax.copy(), analytic=analytic, name="UnitDisk")

    @classmethod
    def graded_disk(cls, core_half_width: float, h_core: float, h_far: float = 1 / 48,
                    ratio: float = 1.08, core_center: tuple[float, float] = (0.0, 0.0),
                    analytic: bool = True) -> "Domain":
        cx, cy = core_center
        xs = graded_axis(-1.0, 1.0, (cx - core_half_width, cx + core_half_width), h_core, h_far, ratio)
        ys = graded_axis(-1.0, 1.0, (cy - core_half_width, cy + core_half_width), h_core, h_far, ratio)
        return cls("disk", xs, ys, analytic=analytic, name="UnitDisk(graded)")

    @classmethod
    def annulus(cls, inner_radius: float, h: float = 1 / 64) -> "Domain":
        if not 0.0 < inner_radius < 1.0:
            raise DomainError("annulus inner radius must be in (0, 1)")
        n = int(round(2.0 / h))
        ax = np.linspace(-1.0, 1.0, n + 1)
        return cls("annulus", ax, ax.copy(), inner_radius=inner_radius, analytic=False,
                   name=f"Annulus({inner_radius})")

    @classmethod
    def from_mask(cls, mask: np.ndarray, h: float, origin: tuple[float, float] = (0.0, 0.0),
                  name: str = "GridMask") -> "Domain":
        mask = np.asarray(mask, dtype=bool)
        nx, ny = mask.shape
        if mask[0].any() or mask[-1].any() or mask[:, 0].any() or mask[:, -1].any():
            raise DomainError("mask must not include nodes on the bounding-box edge")
        xs = origin[0] + h * np.arange(nx)
        ys = origin[1] + h * np.arange(ny)
        dom = cls("mask", xs, ys, mask=mask, analytic=False, name=name)
        labels, count = ndimage.label(mask)
        if count != 1:
            raise DomainError(f"mask region must be connected (found {count} components)")
        return dom

    @classmethod
    def unit_square(cls, h: float = 1 / 64) -> "Domain":
        n = int(round(1.0 / h))
        mask = np.zeros((n + 1, n + 1), dtype=bool)
        mask[1:-1, 1:-1] = True
        return cls.from_mask(mask, 1.0 / n, (0.0, 0.0), name="UnitSquare")

    @classmethod
    def square_with_hole(cls, h: float = 1 / 40, outer: float = 1.0, hole: float = 0.3) -> "Domain":
        """[-outer, outer]^2 minus [-hole, hole]^2; both edges must sit on grid lines."""
        n = int(round(2 * outer / h))
        h = 2 * outer / n
        if abs(hole / h - round(hole / h)) > 1e-9:
            raise DomainError("hole edge must be grid aligned")
        ax = -outer + h * np.arange(n + 1)
        X, Y = np.meshgrid(ax, ax, indexing="ij")
        tol = 1e-9 * h
        mask = (np.abs(X) < outer - tol) & (np.abs(Y) < outer - tol)
        mask &= ~((np.abs(X) <= hole + tol) & (np.abs(Y) <= hole + tol))
        return cls.from_mask(mask, h, (-outer, -outer), name="SquareWithHole")

    @classmethod
    def from_config(cls, spec: dict) -> "Domain":
        kind = spec.get("kind", "disk").lower()
        h = float(spec.get("h", 1 / 64))
        if h <= 0:
            raise DomainError("h must be positive")
        if kind in ("disk", "unitdisk"):
            return cls.unit_disk(h, analytic=bool(spec.get("analytic", True)))
        if kind == "annulus":
            return cls.annulus(float(spec["inner_radius"]), h)
        if kind in ("square", "unitsquare"):
            return cls.unit_square(h)
        if kind in ("square_with_hole", "squarewithhole"):
            return cls.square_with_hole(h, hole=float(spec.get("hole", 0.3)))
        if kind in ("mask", "gridmask"):
            path = spec.get("mask_path")
            if path is None:
                raise DomainError("GridMask domain needs mask_path")
            mask = np.loadtxt(path, dtype=int).astype(bool)
            return cls.from_mask(mask, h, tuple(spec.get("origin", (0.0, 0.0))))
        raise DomainError(f"unknown domain kind {kind!r}")

    # ---- geometry -----------------------------------------------------
    @property
    def h(self) -> float:
        return float(min(np.diff(self.xs).min(), np.diff(self.ys).min()))

    @property
    def h_max(self) -> float:
        return float(max(np.diff(self.xs).max(), np.diff(self.ys).max()))

    @property
    def has_analytic_h(self) -> bool:
        return self.kind == "disk" and self.analytic

    @property
    def bounding_box(self) -> tuple[float, float, float, float]:
        return float(self.xs[0]), float(self.xs[-1]), float(self.ys[0]), float(self.ys[-1])

    def contains(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        x, y = pts[:, 0], pts[:, 1]
        if self.kind == "disk":
            return x * x + y * y < 1.0 - 1e-12
        if self.kind == "annulus":
            r2 = x * x + y * y
            return (r2 < 1.0 - 1e-12) & (r2 > self.inner_radius ** 2 + 1e-12)
        # a point is inside when its mesh cell has an interior corner and no exterior corner
        closed = self._closed_mask
        i = np.searchsorted(self.xs, x, side="right") - 1
        j = np.searchsorted(self.ys, y, side="right") - 1
        ok = (i >= 0) & (i < self.xs.size - 1) & (j >= 0) & (j < self.ys.size - 1)
        out = np.zeros(x.shape, dtype=bool)
        ii, jj = i[ok], j[ok]
        corners = [(ii, jj), (ii + 1, jj), (ii, jj + 1), (ii + 1, jj + 1)]
        any_in = np.zeros(ii.shape, dtype=bool)
        all_closed = np.ones(ii.shape, dtype=bool)
        for a, b in corners:
            any_in |= self.mask[a, b]
            all_closed &= closed[a, b]
        out[ok] = any_in & all_closed
        return out

    @cached_property
    def _closed_mask(self) -> np.ndarray:
        return ndimage.binary_dilation(self.mask, structure=np.ones((3, 3), dtype=bool))

    def boundary_distance(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        r = np.hypot(pts[:, 0], pts[:, 1])
        if self.kind == "disk":
            return 1.0 - r
        if self.kind == "annulus":
            return np.minimum(1.0 - r, r - self.inner_radius)
        d, _ = self._boundary_tree.query(pts)
        return d

    @cached_property
    def _boundary_tree(self) -> cKDTree:
        return cKDTree(self.boundary_points)

    @cached_property
    def hole_count(self) -> int:
        """Number of bounded complement components (flood fill on the node grid)."""
        if self.kind == "disk":
            return 0
        if self.kind == "annulus":
            return 1
        labels, count = ndimage.label(~self.mask)
        border = set(np.unique(np.concatenate([labels[0], labels[-1], labels[:, 0], labels[:, -1]])))
        return sum(1 for k in range(1, count + 1) if k not in border)

    @property
    def multiply_connected(self) -> bool:
        return self.hole_count > 0

    # ---- mesh topology ------------------------------------------------
    @cached_property
    def node_grid(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.xs, self.ys, indexing="ij")

    @cached_property
    def interior(self) -> np.ndarray:
        """Boolean (nx, ny) array of unknown (interior) nodes."""
        if self.kind == "mask":
            return self.mask.copy()
        X, Y = self.node_grid
        inside = self.contains(np.column_stack([X.ravel(), Y.ravel()])).reshape(X.shape)
        inside[0, :] = inside[-1, :] = inside[:, 0] = inside[:, -1] = False
        return inside

    @cached_property
    def index(self) -> np.ndarray:
        idx = -np.ones(self.interior.shape, dtype=np.int64)
        idx[self.interior] = np.arange(int(self.interior.sum()))
        return idx

    @property
    def n_interior(self) -> int:
        return int(self.interior.sum())

    @cached_property
    def nodes(self) -> np.ndarray:
        X, Y = self.node_grid
        return np.column_stack([X[self.interior], Y[self.interior]])

    def _crossing(self, p: np.ndarray, e: np.ndarray, length: np.ndarray) -> np.ndarray:
        """Distance from interior points p along unit direction e to the curved boundary."""
        pe = p @ e
        pp = np.einsum("ij,ij->i", p, p)
        t = -pe + np.sqrt(np.maximum(pe * pe - pp + 1.0, 0.0))
        if self.kind == "annulus":
            disc = pe * pe - pp + self.inner_radius ** 2
            ok = disc >= 0
            sq = np.sqrt(np.where(ok, disc, 0.0))
            for cand in (-pe - sq, -pe + sq):
                good = ok & (cand > 0)
                t = np.where(good & (cand < t), cand, t)
        return np.clip(t, 1e-12 * length, length)

    @cached_property
    def _stencil(self) -> dict:
        inner = self.interior
        idx = self.index
        I, J = np.nonzero(inner)
        p = np.column_stack([self.xs[I], self.ys[J]])
        n = I.size
        directions = {"E": (1, 0), "W": (-1, 0), "N": (0, 1), "S": (0, -1)}
        arms, nbr, bpts = {}, {}, []
        bkey: dict[tuple[int, int], int] = {}
        b_link = {}
        for name, (di, dj) in directions.items():
            I2, J2 = I + di, J + dj
            if di:
                length = np.abs(self.xs[I2] - self.xs[I])
            else:
                length = np.abs(self.ys[J2] - self.ys[J])
            is_int = inner[I2, J2]
            arm = length.copy()
            link = -np.ones(n, dtype=np.int64)
            out = np.nonzero(~is_int)[0]
            if out.size:
                if self.kind == "mask":
                    for k in out:
                        key = (int(I2[k]), int(J2[k]))
                        if key not in bkey:
                            bkey[key] = len(bpts)
                            bpts.append((self.xs[key[0]], self.ys[key[1]]))
                        link[k] = bkey[key]
                else:
                    e = np.array([di, dj], dtype=float)
                    t = self._crossing(p[out], e, length[out])
                    arm[out] = t
                    start = len(bpts)
                    bpts.extend(map(tuple, p[out] + t[:, None] * e))
                    link[out] = start + np.arange(out.size)
            arms[name] = arm
            nbr[name] = np.where(is_int, idx[I2, J2], -1)
            b_link[name] = link
        return {"arms": arms, "nbr": nbr, "blink": b_link,
                "bpts": np.array(bpts, dtype=float).reshape(-1, 2)}

    @property
    def boundary_points(self) -> np.ndarray:
        return self._stencil["bpts"]

    @cached_property
    def operator(self) -> tuple[sp.csr_matrix, sp.csr_matrix]:
        """(A, B) with A u = f + B g the discrete -Laplace Dirichlet problem."""
        st = self._stencil
        arms, nbr, blink = st["arms"], st["nbr"], st["blink"]
        n = self.n_interior
        m = st["bpts"].shape[0]
        rows, cols, vals = [], [], []
        brows, bcols, bvals = [], [], []
        diag = np.zeros(n)
        ar = np.arange(n)
        for a, b in (("E", "W"), ("N", "S")):
            ha, hb = arms[a], arms[b]
            for name, hh in ((a, ha), (b, hb)):
                c = 2.0 / (hh * (ha + hb))
                diag += c
                inn = nbr[name] >= 0
                rows.append(ar[inn]); cols.append(nbr[name][inn]); vals.append(-c[inn])
                bl = ~inn
                brows.append(ar[bl]); bcols.append(blink[name][bl]); bvals.append(c[bl])
        rows.append(ar); cols.append(ar); vals.append(diag)
        A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
        B = sp.csr_matrix((np.concatenate(bvals), (np.concatenate(brows), np.concatenate(bcols))), shape=(n, m))
        return A, B

    @cached_property
    def weights(self) -> np.ndarray:
        """Dual-cell areas of interior nodes (arms clipped at the boundary)."""
        arms = self._stencil["arms"]
        return 0.25 * (arms["E"] + arms["W"]) * (arms["N"] + arms["S"])

    @cached_property
    def factor(self):
        A, _ = self.operator
        if A.shape[0] > DIRECT_LIMIT:
            return None
        return spla.splu(A.tocsc())

    def describe(self) -> dict:
        return {"kind": self.kind, "name": self.name, "h": self.h, "h_max": self.h_max,
                "n_interior": self.n_interior, "inner_radius": self.inner_radius or None,
                "analytic_H": self.has_analytic_h, "holes": self.hole_count,
                "bounding_box": list(self.bounding_box)}


@dataclass
class GridFunction:
    """Nodal values on a domain's interior nodes plus values at its boundary points."""

    domain: Domain
    values: np.ndarray
    boundary: np.ndarray

    def to_grid(self, fill: float = np.nan) -> np.ndarray:
        out = np.full(self.domain.interior.shape, fill)
        out[self.domain.interior] = self.values
        return out

    def __add__(self, other: "GridFunction") -> "GridFunction":
        return GridFunction(self.domain, self.values + other.values, self.boundary + other.boundary)

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        return GridFunction(self.domain, self.values - other.values, self.boundary - other.boundary)

    def scale(self, c: float) -> "GridFunction":
        return GridFunction(self.domain, c * self.values, c * self.boundary)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))

    def integrate(self) -> float:
        return float(self.domain.weights @ self.values)

    def lp_norm(self, p: float) -> float:
        return float((self.domain.weights @ np.abs(self.values) ** p) ** (1.0 / p))

    def __call__(self, pts) -> np.ndarray:
        return interpolate(self, pts)

    def to_csv(self, path: str | Path, include_boundary: bool = True) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y", "value"])
            for (x, y), v in zip(self.domain.nodes, self.values):
                w.writerow([repr(float(x)), repr(float(y)), repr(float(v))])
            if include_boundary:
                for (x, y), v in zip(self.domain.boundary_points, self.boundary):
                    w.writerow([repr(float(x)), repr(float(y)), repr(float(v))])


def _as_nodal(domain: Domain, data, where: str) -> np.ndarray:
    pts = domain.nodes if where == "nodes" else domain.boundary_points
    if data is None:
        return np.zeros(pts.shape[0])
    if callable(data):
        return np.asarray(data(pts[:, 0], pts[:, 1]), dtype=float) * np.ones(pts.shape[0])
    arr = np.asarray(data, dtype=float)
    if arr.ndim == 0:
        return np.full(pts.shape[0], float(arr))
    if arr.shape != (pts.shape[0],):
        raise ValueError(f"{where} data has shape {arr.shape}, expected ({pts.shape[0]},)")
    return arr


def _inf_norm(A) -> float:
    return float(abs(A).sum(axis=1).max())


def poisson_solve(domain: Domain, rhs=None, boundary=None, rtol: float = 1e-10) -> GridFunction:
    """Solve -Lap_h u = rhs inside, u = boundary on the boundary points.

    ``rhs`` and ``boundary`` may be arrays, scalars or callables f(x, y).
    """
    f = _as_nodal(domain, rhs, "nodes")
    g = _as_nodal(domain, boundary, "boundary")
    if not (np.all(np.isfinite(f)) and np.all(np.isfinite(g))):
        raise ValueError("non-finite right-hand side or boundary trace")
    A, B = domain.operator
    b = f + B @ g
    if domain.factor is not None:
        u = domain.factor.solve(b)
        # iterative refinement: graded meshes make the factorization lose a few digits
        for _ in range(3):
            r = b - A @ u
            if np.linalg.norm(r) <= 0.1 * rtol * np.linalg.norm(b):
                break
            u = u + domain.factor.solve(r)
    else:
        ilu = spla.spilu(A.tocsc(), drop_tol=1e-5, fill_factor=20)
        M = spla.LinearOperator(A.shape, ilu.solve)
        u, info = spla.gmres(A, b, M=M, rtol=rtol * 1e-2, restart=100, maxiter=2000)
        if info != 0:
            raise SolverError(f"iterative solve did not converge (info={info})")
    # normwise backward error; plain ||r||/||b|| hits rounding on strongly graded meshes
    scale = max(_inf_norm(A) * np.linalg.norm(u) + np.linalg.norm(b), 1e-300)
    res = np.linalg.norm(A @ u - b) / scale
    if not np.isfinite(res) or (np.linalg.norm(b) > 0 and res > rtol):
        cond = spla.onenormest(A) if A.shape[0] < 5000 else float("nan")
        raise SolverError(f"linear residual {res:.2e} above {rtol:.0e} (1-norm estimate {cond:.2e})")
    if not np.all(np.isfinite(u)):
        raise SolverError("solution has non-finite entries")
    return GridFunction(domain, u, g.copy())


# ---- spectral harmonic extension on the unit disk ------------------------

def disk_fourier(trace: Callable, tol: float = 1e-15, max_modes: int = 2 ** 16) -> np.ndarray:
    """Complex Fourier coefficients c_k (k >= 0) of a real trace on the unit circle."""
    m = 256
    while True:
        th = TWO_PI * np.arange(m) / m
        g = np.asarray(trace(np.cos(th), np.sin(th)), dtype=float) * np.ones(m)
        c = np.fft.rfft(g) / m
        scale = max(1.0, float(np.abs(c).max()))
        tail = np.abs(c[-(m // 8):]).max()
        if tail < tol * scale or m >= max_modes:
            if tail >= 1e3 * tol * scale:
                log.warning("disk Fourier tail %.2e not resolved at %d modes", tail, m)
            break
        m *= 2
    keep = np.nonzero(np.abs(c) > tol * scale * 1e-2)[0]
    kmax = int(keep.max()) if keep.size else 0
    c = c[: kmax + 1].copy()
    c[1:] *= 2.0
    return c


def disk_harmonic_eval(coeffs: np.ndarray, pts) -> np.ndarray:
    """Harmonic extension Re(sum c_k z^k) at points of the closed unit disk."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    z = pts[:, 0] + 1j * pts[:, 1]
    return np.polynomial.polynomial.polyval(z, coeffs).real


def harmonic_extension(domain: Domain, trace: Callable) -> GridFunction:
    """Harmonic function with the given boundary trace, at the interior nodes."""
    if domain.has_analytic_h:
        c = disk_fourier(trace)
        vals = disk_harmonic_eval(c, domain.nodes)
        bp = domain.boundary_points
        return GridFunction(domain, vals, np.asarray(trace(bp[:, 0], bp[:, 1]), dtype=float) * np.ones(bp.shape[0]))
    return poisson_solve(domain, None, trace)


def harmonic_extension_at(domain: Domain, trace: Callable, pts) -> np.ndarray:
    """Harmonic extension evaluated at arbitrary interior points."""
    if domain.has_analytic_h:
        return disk_harmonic_eval(disk_fourier(trace), pts)
    return interpolate(poisson_solve(domain, None, trace), pts, method="poly")


# ---- interpolation ------------------------------------------------------

def _filled_grid(gf: GridFunction) -> np.ndarray:
    dom = gf.domain
    grid = gf.to_grid()
    outside = ~dom.interior
    if outside.any() and gf.boundary.size:
        X, Y = dom.node_grid
        tree = cKDTree(dom.boundary_points)
        _, k = tree.query(np.column_stack([X[outside], Y[outside]]))
        grid[outside] = gf.boundary[k]
    return grid


def interpolate(gf: GridFunction, pts, method: str = "bilinear") -> np.ndarray:
    """Evaluate a grid function at points: bilinear, or local quartic fit (``"poly"``)."""
    dom = gf.domain
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    inside = dom.contains(pts)
    if not inside.all():
        raise DomainError(f"evaluation point outside domain: {pts[~inside][0]}")
    if method == "poly":
        return np.array([local_fit(gf, p)[(0, 0)] for p in pts])
    grid = gf.__dict__.get("_filled")
    if grid is None:
        grid = _filled_grid(gf)
        gf.__dict__["_filled"] = grid
    i = np.clip(np.searchsorted(dom.xs, pts[:, 0]) - 1, 0, dom.xs.size - 2)
    j = np.clip(np.searchsorted(dom.ys, pts[:, 1]) - 1, 0, dom.ys.size - 2)
    tx = (pts[:, 0] - dom.xs[i]) / (dom.xs[i + 1] - dom.xs[i])
    ty = (pts[:, 1] - dom.ys[j]) / (dom.ys[j + 1] - dom.ys[j])
    return ((1 - tx) * (1 - ty) * grid[i, j] + tx * (1 - ty) * grid[i + 1, j]
            + (1 - tx) * ty * grid[i, j + 1] + tx * ty * grid[i + 1, j + 1])


def local_fit(gf: GridFunction, center, degree: int = 4, half_width: int = 6) -> dict[tuple[int, int], float]:
    """Partial derivatives at ``center`` from a least-squares polynomial fit to nearby nodes."""
    dom = gf.domain
    cx, cy = float(center[0]), float(center[1])
    i0 = int(np.searchsorted(dom.xs, cx))
    j0 = int(np.searchsorted(dom.ys, cy))
    sl = (slice(max(i0 - half_width, 0), i0 + half_width), slice(max(j0 - half_width, 0), j0 + half_width))
    inner = dom.interior[sl]
    if inner.sum() < 3 * (degree + 1) * (degree + 2) // 2 or not inner.all():
        raise DomainError("local fit stencil touches the boundary; move the point inward")
    X, Y = dom.node_grid
    scale = max(np.ptp(dom.xs[sl[0]]), np.ptp(dom.ys[sl[1]])) / 2
    dx = (X[sl][inner] - cx) / scale
    dy = (Y[sl][inner] - cy) / scale
    vals = gf.to_grid()[sl][inner]
    powers = [(a, b) for n in range(degree + 1) for a, b in ((n - k, k) for k in range(n + 1))]
    V = np.column_stack([dx ** a * dy ** b for a, b in powers])
    coef, *_ = np.linalg.lstsq(V, vals, rcond=None)
    fact = lambda k: float(np.prod(np.arange(1, k + 1)))
    return {(a, b): c * fact(a) * fact(b) / scale ** (a + b) for (a, b), c in zip(powers, coef)}


# ---- Green's regular part ----------------------------------------------

def _disk_H(x, y) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    xx = np.einsum("ij,ij->i", x, x)
    yy = np.einsum("ij,ij->i", y, y)
    xy = np.einsum("ij,ij->i", x, y)
    return np.log(xx * yy - 2.0 * xy + 1.0) / (4.0 * np.pi)


def disk_regular_part(x, y) -> np.ndarray:
    """Closed form H(x, y) = (1/2pi) log(|y| |x - y/|y|^2|) on the unit disk (vectorized)."""
    return _disk_H(x, y)


def _regular_part_solution(domain: Domain, y: tuple[float, float]) -> GridFunction:
    key = ("H", round(y[0], 15), round(y[1], 15))
    cache = domain._cache
    if key not in cache:
        cache[key] = poisson_solve(domain, None,
                                   lambda a, b: np.log(np.hypot(a - y[0], b - y[1])) / TWO_PI)
        if len(cache) > 256:
            cache.pop(next(iter(cache)))
    return cache[key]


def regular_part(domain: Domain, x, y, method: str = "bilinear") -> float:
    """H(x, y) = G(x, y) + (1/2pi) log|x - y|."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if not domain.contains(x[None])[0]:
        raise DomainError(f"x={x} outside the domain")
    if not domain.contains(y[None])[0]:
        raise DomainError(f"y={y} outside the domain")
    if domain.boundary_distance(y[None])[0] < 2 * domain.h_max:
        raise DomainError(f"y={y} is within 2h of the boundary; regular part inaccurate")
    if domain.has_analytic_h:
        return float(_disk_H(x, y)[0])
    u = _regular_part_solution(domain, (float(y[0]), float(y[1])))
    return float(interpolate(u, x[None], method=method)[0])


def robin(domain: Domain, xi, method: str = "bilinear") -> float:
    return regular_part(domain, xi, xi, method=method)


def regular_part_derivatives(domain: Domain, order: int, at, step: float | None = None) -> dict:
    """Derivatives of H at the diagonal point (at, at).

    Returns ``value`` H(at, at), ``grad_x`` (first slot gradient) and, for
    order 2, ``mixed`` [i][j] = d2 H / dx_i dy_j and ``grad_x_trace`` =
    grad_x (d2/dx1dy1 + d2/dx2dy2) H. Derivatives in y are central
    differences with one Richardson level; derivatives in x come from the
    closed form (disk) or a local quartic fit of the harmonic solve.
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    c = np.asarray(at, dtype=float)
    dist = domain.boundary_distance(c[None])[0]
    if step is None:
        # sqrt(h) capped so that the 10-step clearance rule can be met
        step = 1e-3 if domain.has_analytic_h else max(min(np.sqrt(domain.h), dist / 10), 1e-3)
    if dist < 10 * step and not domain.has_analytic_h:
        raise DomainError(f"point {c} closer than 10 steps ({10 * step:.3g}) to the boundary")

    if domain.has_analytic_h:
        def xjet(y):
            f = lambda p: float(_disk_H(np.array(p), y)[0])
            from ._fd import partial
            s = 1e-3
            return {k: partial(f, c, k, s) for k in [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]}
    else:
        def xjet(y):
            return local_fit(_regular_part_solution(domain, (float(y[0]), float(y[1]))), c)

    base = xjet(c)
    out = {"value": float(base[(0, 0)]), "grad_x": [float(base[(1, 0)]), float(base[(0, 1)])],
           "step": step}
    if order == 1:
        return out

    def ydiff(s: float):
        mixed = np.zeros((2, 2))
        gtr = np.zeros(2)
        for j, e in enumerate(np.eye(2)):
            jp, jm = xjet(c + s * e), xjet(c - s * e)
            d = {k: (jp[k] - jm[k]) / (2 * s) for k in jp}
            mixed[0, j] = d[(1, 0)]
            mixed[1, j] = d[(0, 1)]
            # d/dx_k of d2H/dx_j dy_j: need x-derivatives (k, j) of dH/dy_j
            if j == 0:
                gtr += [d[(2, 0)], d[(1, 1)]]
            else:
                gtr += [d[(1, 1)], d[(0, 2)]]
        return mixed, gtr

    m1, g1 = ydiff(step)
    m2, g2 = ydiff(step / 2)
    mixed = (4 * m2 - m1) / 3
    gtr = (4 * g2 - g1) / 3
    if not (np.all(np.isfinite(mixed)) and np.all(np.isfinite(gtr))):
        raise SolverError("non-finite difference quotient in regular_part_derivatives")
    out["mixed"] = mixed.tolist()
    out["trace_mixed"] = float(mixed[0, 0] + mixed[1, 1])
    out["grad_x_trace"] = gtr.tolist()
    out["symmetry_defect"] = float(abs(mixed[0, 1] - mixed[1, 0]))
    return out


# ---- projection and harmonic families ------------------------------------

def project(domain: Domain, u: Callable, minus_laplacian: Callable | None = None) -> GridFunction:
    """P u: same Laplacian as u, zero boundary trace.

    With ``minus_laplacian`` the Dirichlet problem -Lap(Pu) = -Lap u is solved
    directly; otherwise P u = u - (harmonic extension of u on the boundary),
    which is exact for u sampled at the nodes and preferred for peaked u.
    """
    if minus_laplacian is not None:
        return poisson_solve(domain, minus_laplacian, 0.0)
    nodes = domain.nodes
    uv = np.asarray(u(nodes[:, 0], nodes[:, 1]), dtype=float)
    ext = harmonic_extension(domain, u)
    return GridFunction(domain, uv - ext.values, np.zeros(domain.boundary_points.shape[0]))


def extension_traces(xi) -> dict[str, Callable]:
    x0, y0 = float(xi[0]), float(xi[1])

    def d(a, b):
        return a - x0, b - y0

    return {
        "L1": lambda a, b: np.log(np.hypot(*d(a, b))) ** 2,
        "L2": lambda a, b: (d(a, b)[0] ** 2 - d(a, b)[1] ** 2) / (d(a, b)[0] ** 2 + d(a, b)[1] ** 2),
        "L3": lambda a, b: d(a, b)[0] * d(a, b)[1] / (d(a, b)[0] ** 2 + d(a, b)[1] ** 2),
        "I": lambda a, b: 1.0 / (d(a, b)[0] ** 2 + d(a, b)[1] ** 2),
    }


def harmonic_extension_family(domain: Domain, xi) -> dict[str, float]:
    """L1, L2, L3 and I evaluated at (xi, xi)."""
    xi = np.asarray(xi, dtype=float)
    if domain.boundary_distance(xi[None])[0] < 10 * domain.h and not domain.has_analytic_h:
        raise DomainError("xi must be at least 10h away from the boundary")
    return {k: float(harmonic_extension_at(domain, tr, xi[None])[0]) for k, tr in extension_traces(xi).items()}


def load_domain(path: str | Path) -> Domain:
    with open(path) as fh:
        return Domain.from_config(json.load(fh))
