"""Bubble ansatz W, its residual, kernel functions and linearized diagnostics.

Residuals are evaluated semi-analytically: the Laplacians of the bubble and of the
local correction are known in closed form, the global correction satisfies its
discrete equation by construction, so only W itself is sampled.  Integrals against
e^U-type weights use a polar patch around the peak blended into mesh quadrature.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import greens
from .corrections import (CorrectionBundle, CorrectionError, default_profile, local_spacing,
                          local_spacing_nodes, solve_tau)
from .greens import Domain, GridFunction
from .reduced import Potential, ReducedFunctional, compute_eta0


class AnsatzError(RuntimeError):
    """Under-resolved bubble, overflow, or a failed eigensolve."""


def xi_scale(rho: float, N: int) -> float:
    """|xi| / |xi0| = rho^(2/N) log^(1/N)(1/rho)."""
    return rho ** (2.0 / N) * np.log(1.0 / rho) ** (1.0 / N)


def tau_limit(rf: ReducedFunctional, xi) -> float:
    """rho -> 0 value sqrt(V(xi)/8) e^{4 pi R(xi)}."""
    xi = np.asarray(xi, dtype=float)
    return float(np.sqrt(np.exp(rf.potential.log_v(xi[0], xi[1])) / 8.0) * np.exp(4 * np.pi * rf.robin(xi)))


def bubble_domain(rho: float, centers, tau: float, cells: float = 6.0, core: float = 20.0,
                  h_far: float = 1 / 48, ratio: float = 1.08) -> Domain:
    """Graded unit disk whose uniform core (spacing rho tau / cells) covers every center."""
    c = np.atleast_2d(np.asarray(centers, dtype=float))
    s = rho * tau
    lo, hi = c.min(axis=0), c.max(axis=0)
    mid = 0.5 * (lo + hi)
    half = float(0.5 * np.max(hi - lo) + core * s)
    if half > 0.5:
        raise AnsatzError(f"bubble core half width {half:.3f} too large for the disk")
    return Domain.graded_disk(half, s / cells, h_far, ratio, core_center=(float(mid[0]), float(mid[1])))


def bubble_values(pts, xi, s: float) -> np.ndarray:
    pts = np.atleast_2d(pts)
    r2 = np.sum((pts - xi) ** 2, axis=1)
    return np.log(8 * s * s / (s * s + r2) ** 2)


def build_bubble(rho: float, tau: float, xi, domain: Domain) -> GridFunction:
    """U(x) = log(8 rho^2 tau^2 / (rho^2 tau^2 + |x - xi|^2)^2) at nodes and boundary points."""
    xi = np.asarray(xi, dtype=float)
    s = rho * tau
    h = local_spacing(domain, xi)
    if s < 4 * h:
        raise AnsatzError(f"bubble under-resolved: rho*tau={s:.2e} < 4h={4 * h:.2e}")
    return GridFunction(domain, bubble_values(domain.nodes, xi, s), bubble_values(domain.boundary_points, xi, s))


def bubble_mass_error(rho: float, tau: float, xi, domain: Domain) -> float:
    """Relative error of (mesh integral of e^U) + (analytic tail beyond the domain) against 8 pi."""
    xi = np.asarray(xi, dtype=float)
    s = rho * tau
    q = PeakQuadrature(domain, xi, s)
    inside = q.integrate(lambda p: np.exp(bubble_values(p, xi, s)))
    # outside the unit disk e^U = 8 s^2/|x - xi|^4 (1 + O(s^2)), and that integral is pi/(1-|xi|^2)^2
    tail = 8 * np.pi * s * s / (1 - xi @ xi) ** 2 if domain.kind == "disk" else 0.0
    return abs(inside + tail - 8 * np.pi) / (8 * np.pi)


class Extension:
    """Harmonic extension of a trace, evaluable at nodes and at arbitrary points."""

    def __init__(self, domain: Domain, trace):
        self.domain = domain
        if domain.has_analytic_h:
            self.coef = greens.disk_fourier(trace)
            self.grid = None
        else:
            self.coef = None
            self.grid = greens.poisson_solve(domain, None, trace)

    def at(self, pts) -> np.ndarray:
        pts = np.atleast_2d(pts)
        if self.coef is not None:
            return greens.disk_harmonic_eval(self.coef, pts)
        return greens.interpolate(self.grid, pts, method="poly")

    @cached_property
    def nodes(self) -> np.ndarray:
        if self.coef is not None:
            return greens.disk_harmonic_eval(self.coef, self.domain.nodes)
        return self.grid.values


def _interp(gf: GridFunction, pts) -> np.ndarray:
    """Local polynomial interpolation, bilinear where the fit stencil would reach the boundary."""
    pts = np.atleast_2d(pts)
    dom = gf.domain
    far = dom.boundary_distance(pts) > 8 * local_spacing_nodes(dom, pts)
    out = np.empty(pts.shape[0])
    if far.any():
        out[far] = greens.interpolate(gf, pts[far], method="poly")
    if (~far).any():
        out[~far] = greens.interpolate(gf, pts[~far], method="bilinear")
    return out


def _smoothstep(t: np.ndarray) -> np.ndarray:
    t = np.clip(t, 0.0, 1.0)
    return t ** 3 * (10 - 15 * t + 6 * t * t)


@dataclass
class PeakQuadrature:
    """Quadrature for integrands peaked at xi on scale s.

    Inside |x - xi| < r_out * s a polar Gauss rule carries the weight chi(r); the mesh
    dual-cell weights carry 1 - chi.  chi falls smoothly from 1 at r_in*s to 0 at r_out*s.
    """

    domain: Domain
    xi: np.ndarray
    s: float
    r_in: float = 8.0
    r_out: float = 24.0
    n_gauss: int = 16
    n_theta: int = 96

    def __post_init__(self):
        self.xi = np.asarray(self.xi, dtype=float)
        R = self.r_out * self.s
        if self.domain.boundary_distance(self.xi[None])[0] <= R:
            raise AnsatzError("peak patch reaches the boundary; rho too large for this quadrature")
        # radial breakpoints: geometric in r/s, so each panel sees a comparable variation of e^U
        edges = np.concatenate([[0.0], self.s * np.geomspace(0.05, self.r_out, 24)])
        g, gw = np.polynomial.legendre.leggauss(self.n_gauss)
        r = np.concatenate([0.5 * (b - a) * g + 0.5 * (a + b) for a, b in zip(edges[:-1], edges[1:])])
        wr = np.concatenate([0.5 * (b - a) * gw for a, b in zip(edges[:-1], edges[1:])])
        th = 2 * np.pi * np.arange(self.n_theta) / self.n_theta
        Rg, Tg = np.meshgrid(r, th, indexing="ij")
        self.inner = np.column_stack([self.xi[0] + (Rg * np.cos(Tg)).ravel(),
                                      self.xi[1] + (Rg * np.sin(Tg)).ravel()])
        chi = self.chi(Rg.ravel())
        self.inner_w = (wr[:, None] * r[:, None] * np.full_like(Tg, 2 * np.pi / self.n_theta)).ravel() * chi
        rn = np.hypot(*(self.domain.nodes - self.xi).T)
        self.outer_w = self.domain.weights * (1.0 - self.chi(rn))

    def chi(self, r) -> np.ndarray:
        return 1.0 - _smoothstep((np.asarray(r) / self.s - self.r_in) / (self.r_out - self.r_in))

    def combine(self, inner_vals, node_vals) -> float:
        return float(self.inner_w @ inner_vals + self.outer_w @ node_vals)

    def integrate(self, f) -> float:
        """f maps an (n, 2) array of points to values."""
        return self.combine(f(self.inner), f(self.domain.nodes))

    def lp_norm(self, inner_vals, node_vals, p: float) -> float:
        return self.combine(np.abs(inner_vals) ** p, np.abs(node_vals) ** p) ** (1.0 / p)


@dataclass
class Ansatz:
    """W = PU + rho^2 tau^2 (P w-hat + W-tilde) (corrections on) or W = PU (off)."""

    domain: Domain
    rf: ReducedFunctional
    rho: float
    xi: np.ndarray
    tau: float
    bundle: CorrectionBundle
    corrections: bool = True
    xi0: np.ndarray | None = None

    @property
    def s(self) -> float:
        return self.rho * self.tau

    @property
    def potential(self) -> Potential:
        return self.rf.potential

    @cached_property
    def ext_U(self) -> Extension:
        return Extension(self.domain, lambda a, b: bubble_values(np.column_stack([np.ravel(a), np.ravel(b)]),
                                                                 self.xi, self.s).reshape(np.shape(a)))

    @cached_property
    def ext_w(self) -> Extension:
        return Extension(self.domain, lambda a, b: self.bundle.w_hat_x(a, b))

    def U(self, pts) -> np.ndarray:
        return bubble_values(pts, self.xi, self.s)

    def PU(self, pts) -> np.ndarray:
        return self.U(pts) - self.ext_U.at(pts)

    def correction(self, pts) -> np.ndarray:
        """rho^2 tau^2 (P w-hat + W-tilde) at arbitrary points."""
        pts = np.atleast_2d(pts)
        if not self.corrections:
            return np.zeros(pts.shape[0])
        pw = self.bundle.w_hat_x(pts[:, 0], pts[:, 1]) - self.ext_w.at(pts)
        # bilinear is ample: the term carries a factor rho^2 tau^2
        wt = greens.interpolate(self.bundle.W_tilde, pts, method="bilinear")
        return self.s ** 2 * (pw + wt)

    def W_at(self, pts) -> np.ndarray:
        return self.PU(pts) + self.correction(pts)

    @cached_property
    def W(self) -> GridFunction:
        nodes = self.domain.nodes
        vals = self.U(nodes) - self.ext_U.nodes
        if self.corrections:
            pw = self.bundle.w_hat_x(nodes[:, 0], nodes[:, 1]) - self.ext_w.nodes
            vals = vals + self.s ** 2 * (pw + self.bundle.W_tilde.values)
        return GridFunction(self.domain, vals, np.zeros(self.domain.boundary_points.shape[0]))

    # -- residual --
    def _residual(self, pts, W) -> np.ndarray:
        pts = np.atleast_2d(pts)
        lap_u = -np.exp(self.U(pts))
        if self.corrections:
            d = (pts - self.xi) / self.s
            # rho^2 tau^2 Lap_x(w-hat((x-xi)/s)) = Lap_y w-hat; Lap W-tilde = -rhs
            lap_u = lap_u - self.bundle.w_hat_minus_laplacian(d[:, 0], d[:, 1])
            cap = 3 * local_spacing_nodes(self.domain, pts)
            lap_u = lap_u - self.s ** 2 * self.bundle.W_tilde_rhs(pts, cap)
        with np.errstate(over="raise"):
            try:
                nl = self.rho ** 2 * np.exp(self.potential.log_v(pts[:, 0], pts[:, 1]) + W)
            except FloatingPointError as exc:
                raise AnsatzError("overflow in rho^2 V e^W") from exc
        return lap_u + nl

    def residual_at(self, pts) -> np.ndarray:
        """R = Lap W + rho^2 V e^W with the Laplacian taken analytically where it is known."""
        return self._residual(pts, self.W_at(pts))

    @cached_property
    def residual_nodes(self) -> np.ndarray:
        return self._residual(self.domain.nodes, self.W.values)

    def discrete_residual(self) -> GridFunction:
        """Lap_h W + rho^2 V e^W with the 5-point Laplacian (the Newton residual at the seed)."""
        return newton_residual(self.domain, self.potential, self.rho, self.W)

    @cached_property
    def quadrature(self) -> PeakQuadrature:
        return PeakQuadrature(self.domain, self.xi, self.s)

    def residual_norm(self, p: float = 1.2, radius: float | None = None) -> float:
        """||R||_p over the domain, or over |x - xi| < radius when given."""
        q = self.quadrature
        rn = self.residual_nodes
        if radius is not None:
            rn = np.where(np.hypot(*(self.domain.nodes - self.xi).T) < radius, rn, 0.0)
        return q.lp_norm(self.residual_at(q.inner), rn, p)

    def rx_structure(self, radii=(5.0, 10.0, 20.0), n_theta: int = 16) -> dict:
        """R/e^U against (1/2pi)<grad P(xi), x-xi> + Theta(x-xi) on circles |x-xi| = k rho tau."""
        th = 2 * np.pi * np.arange(n_theta) / n_theta
        pts = np.concatenate([self.xi + k * self.s * np.column_stack([np.cos(th), np.sin(th)]) for k in radii])
        lhs = self.residual_at(pts) / np.exp(self.U(pts))
        d = pts - self.xi
        # <grad_x g(xi), x - xi> with g the interaction exponent; equals (1/2pi)<grad P(xi), .> to leading order
        lead = d @ self.bundle.e_derivs["grad"] + self.bundle.theta(pts)
        return {"points": pts, "lhs": lhs, "leading": lead, "deviation": lhs - lead}


def newton_residual(domain: Domain, potential: Potential, rho: float, u: GridFunction) -> GridFunction:
    """F(u) = Lap_h u + rho^2 V e^u at interior nodes (u's boundary values enter through B)."""
    A, B = domain.operator
    nodes = domain.nodes
    with np.errstate(over="raise"):
        try:
            nl = rho ** 2 * np.exp(potential.log_v(nodes[:, 0], nodes[:, 1]) + u.values)
        except FloatingPointError as exc:
            raise AnsatzError("overflow in rho^2 V e^u") from exc
    lap = -(A @ u.values) + B @ u.boundary
    return GridFunction(domain, lap + nl, np.zeros_like(u.boundary))


def assemble_W(rho: float, xi0, domain: Domain | None, potential: Potential, N: int = 2,
               corrections: bool = True, rf: ReducedFunctional | None = None,
               mesh: dict | None = None, profile=None) -> Ansatz:
    """Ansatz at xi = xi_scale(rho, N) xi0; builds a graded disk mesh when ``domain`` is None."""
    xi0 = np.asarray(xi0, dtype=float)
    xi = xi_scale(rho, N) * xi0
    if domain is None:
        base = Domain.unit_disk(1 / 32)
        tau_est = tau_limit(ReducedFunctional(base, potential, N), xi)
        domain = bubble_domain(rho, [xi], tau_est, **(mesh or {}))
    rf = rf if rf is not None and rf.domain is domain else ReducedFunctional(domain, potential, N)
    bundle = CorrectionBundle(rf, xi, rho, profile=profile or default_profile())
    try:
        tau = solve_tau(bundle)
    except CorrectionError as exc:
        raise AnsatzError(str(exc)) from exc
    build_bubble(rho, tau, xi, domain)  # resolution check
    return Ansatz(domain, rf, rho, xi, tau, bundle, corrections, xi0)


def local_expansion_check(a: Ansatz, pts) -> dict:
    """W - U against 8pi(H(x,xi) - H(xi,xi)) - 2 log rho - log V(xi) + rho^2 tau^2 w-hat + Theta."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    xi = a.xi
    hx = np.array([greens.regular_part(a.domain, p, xi) for p in pts])
    hxx = a.rf.robin(xi)
    d = (pts - xi) / a.s
    pred = (8 * np.pi * (hx - hxx) - 2 * np.log(a.rho) - float(a.potential.log_v(xi[0], xi[1]))
            + a.s ** 2 * a.bundle.w_hat(d[:, 0], d[:, 1]) + a.bundle.theta(pts))
    lhs = a.W_at(pts) - a.U(pts)
    return {"lhs": lhs, "predicted": pred, "difference": lhs - pred}


# ---- kernel functions ----------------------------------------------------

def psi_values(pts, xi, s: float, i: int) -> np.ndarray:
    """psi_i(x) = (x_i - xi_i) / (s^2 + |x - xi|^2)."""
    pts = np.atleast_2d(pts)
    d = pts - xi
    return d[:, i] / (s * s + np.sum(d * d, axis=1))


@dataclass
class KernelPair:
    """psi_1, psi_2 and their projections; callables plus nodal GridFunctions."""

    ansatz: Ansatz

    @cached_property
    def ext(self) -> list[Extension]:
        a = self.ansatz

        def trace(i):
            return lambda x, y: psi_values(np.column_stack([np.ravel(x), np.ravel(y)]), a.xi, a.s, i).reshape(np.shape(x))

        return [Extension(a.domain, trace(i)) for i in range(2)]

    def psi(self, pts, i: int) -> np.ndarray:
        return psi_values(pts, self.ansatz.xi, self.ansatz.s, i)

    def P_psi(self, pts, i: int) -> np.ndarray:
        return self.psi(pts, i) - self.ext[i].at(pts)

    def grid(self, i: int, projected: bool = True) -> GridFunction:
        dom = self.ansatz.domain
        v = self.psi(dom.nodes, i)
        if projected:
            return GridFunction(dom, v - self.ext[i].nodes, np.zeros(dom.boundary_points.shape[0]))
        return GridFunction(dom, v, self.psi(dom.boundary_points, i))

    def bound_check(self) -> float:
        """max |psi_i| * 2 rho tau; the analytic bound says <= 1."""
        n = self.ansatz.domain.nodes
        return float(max(np.abs(self.psi(n, i)).max() for i in range(2)) * 2 * self.ansatz.s)

    def h1_norms(self) -> list[float]:
        """||P psi_i||^2 in H^1_0, via the discrete Dirichlet form u^T W A u."""
        dom = self.ansatz.domain
        A, _ = dom.operator
        out = []
        for i in range(2):
            u = self.grid(i).values
            out.append(float(u @ (dom.weights * (A @ u))))
        return out

    def laplacian_defect(self, i: int = 0) -> float:
        """Relative sup of -Lap_h P psi_i - e^U psi_i on nodes farther than 4 rho tau from xi."""
        a = self.ansatz
        dom = a.domain
        A, _ = dom.operator
        n = dom.nodes
        u = self.grid(i).values
        lhs = A @ u
        rhs = np.exp(a.U(n)) * self.psi(n, i)
        m = np.hypot(*(n - a.xi).T) > 4 * a.s
        return float(np.abs(lhs - rhs)[m].max() / np.abs(rhs).max())


def kernel_integrals(a: Ansatz, s_powers=(1.5, 2.0)) -> dict:
    """Integrals of e^U (x_i - xi_i) psi_j, the log-weighted family, and e^U |x-xi|^s |psi_j|."""
    q = a.quadrature
    xi, s = a.xi, a.s

    def eU(p):
        return np.exp(bubble_values(p, xi, s))

    table = np.zeros((2, 2))
    for i in range(2):
        for j in range(2):
            table[i, j] = q.integrate(lambda p: eU(p) * (p[:, i] - xi[i]) * psi_values(p, xi, s, j))
    logw = []
    for i in range(2):
        def f(p, i=i):
            r = np.hypot(*(p - xi).T)
            return eU(p) * (p[:, i] - xi[i]) * np.log(1.0 / np.maximum(r, 1e-300)) * psi_values(p, xi, s, i)
        logw.append(q.integrate(f))
    powers = {}
    for sp_ in s_powers:
        powers[sp_] = [q.integrate(lambda p, j=j: eU(p) * np.hypot(*(p - xi).T) ** sp_ * np.abs(psi_values(p, xi, s, j)))
                       for j in range(2)]
    lead = 2 * np.pi * np.log(1.0 / a.rho)
    return {"delta_table": table, "delta_deviation": float(np.abs(table - 2 * np.pi * np.eye(2)).max()),
            "log_weighted": logw, "log_ratio": [v / lead for v in logw], "powers": powers}


def lp_bubble_norm(a: Ansatz, s_exp: float = 1.0, p: float = 1.2) -> float:
    """|| e^U |x - xi|^s ||_p."""
    q = a.quadrature
    f = lambda P: np.exp(a.U(P)) * np.hypot(*(P - a.xi).T) ** s_exp
    return q.lp_norm(f(q.inner), f(a.domain.nodes), p)


def reduced_equation_check(a: Ansatz, P, eta0) -> dict:
    """Integral of R P psi_i against grad P(xi) - rho^2 log(1/rho) eta0."""
    kp = KernelPair(a)
    q = a.quadrature
    Ri, Rn = a.residual_at(q.inner), a.residual_nodes
    n = a.domain.nodes
    pair = np.array([q.combine(Ri * kp.P_psi(q.inner, i), Rn * kp.P_psi(n, i)) for i in range(2)])
    eta = a.rho ** 2 * np.log(1.0 / a.rho) * np.asarray(eta0, dtype=float)
    target = np.asarray(P.gradient(*a.xi), dtype=float) - eta
    scale = a.rho ** 2 * np.log(1.0 / a.rho)
    # self-consistency: the pair should equal 2 pi times the linear coefficient of R/e^U - Theta
    st = a.rx_structure(radii=(2.0, 3.0, 4.0), n_theta=32)
    d = st["points"] - a.xi
    c, *_ = np.linalg.lstsq(d, st["lhs"] - a.bundle.theta(st["points"]), rcond=None)
    return {"pair": pair, "target": target, "scaled_pair": float(np.linalg.norm(pair) / scale),
            "relative_error": float(np.linalg.norm(pair - target) / max(np.linalg.norm(target), 1e-300)),
            "linear_coefficient": c, "offset_O_rho2": 2 * np.pi * c - (target + eta) + eta,
            "pair_vs_linear": float(np.linalg.norm(pair - 2 * np.pi * c) / max(np.linalg.norm(pair), 1e-300))}


def nonlinear_term(a: Ansatz, phi: GridFunction) -> GridFunction:
    """N(phi) = rho^2 V e^W (e^phi - 1 - phi) at nodes."""
    if not np.all(np.isfinite(phi.values)):
        raise AnsatzError("phi has non-finite values")
    n = a.domain.nodes
    with np.errstate(over="raise"):
        try:
            base = a.rho ** 2 * np.exp(a.potential.log_v(n[:, 0], n[:, 1]) + a.W.values)
            val = base * (np.expm1(phi.values) - phi.values)
        except FloatingPointError as exc:
            raise AnsatzError("overflow in the nonlinear term") from exc
    return GridFunction(a.domain, val, np.zeros(a.domain.boundary_points.shape[0]))


# ---- linearized operator -------------------------------------------------

def linearized_matrices(a: Ansatz, u: GridFunction | None = None) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """(A_s, D): weighted stiffness, symmetrized, and the weighted potential term rho^2 V e^W.

    L = Lap_h + rho^2 V e^W corresponds to the pencil D - A_s in the weighted inner product.
    """
    dom = a.domain
    A, _ = dom.operator
    w = dom.weights
    WA = sp.diags(w) @ A
    A_s = ((WA + WA.T) * 0.5).tocsc()
    n = dom.nodes
    vals = (u or a.W).values
    d = a.rho ** 2 * np.exp(a.potential.log_v(n[:, 0], n[:, 1]) + vals)
    return A_s, sp.diags(w * d).tocsc()


def linearized_diagnostic(a: Ansatz, k: int = 12, max_nodes: int = 40000) -> dict:
    """Small singular values of L measured against the H^1_0 norm.

    Eigenpairs of D phi = lambda A_s phi nearest lambda = 1 give singular values |1 - lambda| of
    A_s^{-1} L.  The restriction to the A_s-orthogonal complement of span{P psi_1, P psi_2} is
    approximated by Rayleigh-Ritz on the computed eigenvectors after projecting out P psi_i.
    """
    dom = a.domain
    if dom.n_interior > max_nodes:
        raise AnsatzError(f"{dom.n_interior} interior nodes exceed the eigensolve budget {max_nodes}")
    A_s, D = linearized_matrices(a)
    try:
        lam, vec = spla.eigsh(D, k=k, M=A_s, sigma=1.0, which="LM", tol=1e-10)
    except (spla.ArpackNoConvergence, RuntimeError) as exc:
        raise AnsatzError(f"eigensolve failed: {exc}") from exc
    sig = np.abs(1.0 - lam)
    order = np.argsort(sig)
    sig, vec = sig[order], vec[:, order]
    kp = KernelPair(a)
    K = np.column_stack([kp.grid(i).values for i in range(2)])
    G = K.T @ (A_s @ K)
    Q = vec - K @ np.linalg.solve(G, K.T @ (A_s @ vec))
    Aq = Q.T @ (A_s @ Q)
    Dq = Q.T @ (D @ Q)
    # drop directions that Pψ projection nearly annihilated
    ev, U = np.linalg.eigh(Aq)
    keep = ev > 1e-8 * ev.max()
    B = U[:, keep] / np.sqrt(ev[keep])
    mu = np.linalg.eigvalsh(B.T @ Dq @ B)
    perp = float(np.min(np.abs(1.0 - mu)))
    # overlap of the two smallest modes with span{P psi}
    Kn = K @ np.linalg.cholesky(np.linalg.inv(G))
    overlap = [float(np.linalg.norm(Kn.T @ (A_s @ vec[:, j]))) for j in range(2)]
    return {"singular_values": sig.tolist(), "gap_ratio": float(sig[2] / max(sig[1], 1e-300)),
            "sigma_perp": perp, "sigma_perp_log": perp * np.log(1.0 / a.rho),
            "kernel_overlap": overlap, "n_interior": dom.n_interior}


def diagnostic_mesh(rho: float, tau: float, centers) -> Domain:
    """Coarse graded disk (<= 200^2 interior nodes) for eigen-diagnostics."""
    return bubble_domain(rho, centers, tau, cells=6.0, core=5.0, h_far=1 / 24, ratio=1.15)
