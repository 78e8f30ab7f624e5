"""Nodal lines, Brouwer degree and explicit solutions of grad P(xi) = eta0."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .reduced import AdmissibilityError, HomogeneousPoly, polynomial_admissibility


class DegreeError(RuntimeError):
    """Winding computation hit a zero on the circle or the refinement cap."""


@dataclass
class Solution:
    point: np.ndarray
    r: float
    t: float
    hessian_det: float
    local_degree: int
    stable: bool
    degenerate: bool = False

    def to_json(self) -> dict:
        return {"point": [float(v) for v in self.point], "polar": [self.r, self.t],
                "hessian_det": self.hessian_det, "local_degree": self.local_degree,
                "stable": self.stable, "degenerate": self.degenerate}


@dataclass
class CriticalPointReport:
    solutions: list[Solution]
    M: int
    degree_formula: int
    degree_winding: int
    eta0: list[float] = field(default_factory=list)
    radius: float = 0.0
    max_defect: float = 0.0

    @property
    def stable_solutions(self) -> list[Solution]:
        return [s for s in self.solutions if s.stable and not s.degenerate]

    def to_json(self) -> dict:
        return {"M": self.M, "degree_formula": self.degree_formula,
                "degree_winding": self.degree_winding, "eta0": self.eta0,
                "radius": self.radius, "max_defect": self.max_defect,
                "solutions": [s.to_json() for s in self.solutions]}


def _require_admissible(P: HomogeneousPoly) -> None:
    rep = polynomial_admissibility(P)
    if not rep["admissible"]:
        raise AdmissibilityError(rep["reason"])


def nodal_angles(P: HomogeneousPoly, intervals: int = 2048) -> list[float]:
    """Roots of p(t) in [0, pi)."""
    _require_admissible(P)
    # shift the grid by an irrational fraction so exact roots never sit on a node
    t = np.linspace(0.0, np.pi, intervals + 1) + np.pi * 1e-7 * np.sqrt(2)
    t[-1] = t[0] + np.pi
    v = P.polar(t)
    roots = []
    for i in np.nonzero(np.sign(v[:-1]) * np.sign(v[1:]) < 0)[0]:
        r = brentq(lambda s: float(P.polar(s)), t[i], t[i + 1], xtol=1e-14)
        roots.append(r % np.pi)
    return sorted(roots)


def nodal_line_count(P: HomogeneousPoly) -> int:
    return len(nodal_angles(P))


def degree_formula(P: HomogeneousPoly) -> int:
    return 1 - nodal_line_count(P)


def containment_radius(P: HomogeneousPoly, eta0) -> float:
    """Bound r <= (r0^2 / C)^(1/2N) with C = min of (N+1)^2 p^2 + p'^2."""
    N = P.order
    t = np.linspace(0, 2 * np.pi, 4096, endpoint=False)
    C = float(P.admissibility_function(t).min())
    r0 = float(np.hypot(*eta0))
    if C <= 0:
        raise AdmissibilityError("admissibility function vanishes")
    return (r0 * r0 / C) ** (1.0 / (2 * N))


def _field(P: HomogeneousPoly, eta0: np.ndarray, theta: np.ndarray, R: float) -> np.ndarray:
    g = P.gradient(R * np.cos(theta), R * np.sin(theta))
    return g - eta0[:, None]


def degree_winding(P: HomogeneousPoly, eta0=(0.0, 0.0), R: float | None = None,
                   cap: int = 2 ** 20) -> int:
    """Winding number of grad P - eta0 around the circle of radius R."""
    eta0 = np.asarray(eta0, dtype=float)
    if R is None:
        R = max(1.5 * containment_radius(P, eta0), 1.0) if np.any(eta0) else 1.0
    theta = np.linspace(0, 2 * np.pi, 65)
    vals = _field(P, eta0, theta, R)
    scale = P.scale * R ** P.order + np.hypot(*eta0)
    while True:
        if np.min(np.hypot(*vals)) < 1e-12 * scale:
            raise DegreeError("grad P - eta0 vanishes on the circle; choose another radius")
        ang = np.arctan2(vals[1], vals[0])
        inc = np.angle(np.exp(1j * np.diff(ang)))
        bad = np.abs(inc) >= np.pi / 2
        if not bad.any():
            return int(round(inc.sum() / (2 * np.pi)))
        if theta.size >= cap:
            raise DegreeError(f"winding refinement cap {cap} reached")
        mids = 0.5 * (theta[:-1] + theta[1:])[bad]
        theta = np.sort(np.concatenate([theta, mids]))
        vals = _field(P, eta0, theta, R)


def _polar_equation(P: HomogeneousPoly, t, t0: float) -> np.ndarray:
    d = P.degree
    p, dp = P.polar(t), P.polar(t, 1)
    q = np.sqrt(d * d * p * p + dp * dp)
    return (-dp * np.cos(t - t0) - d * p * np.sin(t - t0)) / q


def solve_reduced_equation(P: HomogeneousPoly, eta0, intervals: int = 4096,
                           degenerate_tol: float = 1e-8) -> CriticalPointReport:
    """All solutions of grad P(xi) = eta0 via the polar reduction, polished by Newton."""
    _require_admissible(P)
    eta0 = np.asarray(eta0, dtype=float)
    N, d = P.order, P.degree
    M = nodal_line_count(P)
    r0 = float(np.hypot(*eta0))
    if r0 == 0.0:
        idx = 1 - M
        sol = Solution(np.zeros(2), 0.0, 0.0, 0.0, idx, idx != 0, degenerate=True)
        return CriticalPointReport([sol], M, 1 - M, degree_winding(P, eta0), eta0.tolist(), 1.0, 0.0)
    t0 = float(np.arctan2(eta0[1], eta0[0]))
    t = np.linspace(0, 2 * np.pi, intervals + 1) + 1e-9 * np.sqrt(3)
    g = _polar_equation(P, t, t0)
    sols: list[Solution] = []
    for i in np.nonzero(np.sign(g[:-1]) * np.sign(g[1:]) < 0)[0]:
        ti = brentq(lambda s: float(_polar_equation(P, s, t0)), t[i], t[i + 1], xtol=1e-13)
        p, dp = float(P.polar(ti)), float(P.polar(ti, 1))
        # ((N+1)p, p') must point along (cos(t-t0), -sin(t-t0)), not against it
        if d * p * np.cos(ti - t0) - dp * np.sin(ti - t0) <= 0:
            continue
        q = d * d * p * p + dp * dp
        r = (r0 * r0 / q) ** (1.0 / (2 * N))
        xi = np.array([r * np.cos(ti), r * np.sin(ti)])
        for _ in range(8):
            res = P.gradient(*xi) - eta0
            H = P.hessian(*xi)
            try:
                step = np.linalg.solve(H, res)
            except np.linalg.LinAlgError:
                break
            xi = xi - step
            if np.linalg.norm(step) < 1e-15 * (1 + np.linalg.norm(xi)):
                break
        H = P.hessian(*xi)
        det = float(np.linalg.det(H))
        hscale = (d * (d - 1) * P.scale * max(r, 1e-300) ** (d - 2)) ** 2
        degenerate = abs(det) < degenerate_tol * hscale
        deg = 0 if degenerate else int(np.sign(det))
        rr = float(np.hypot(*xi))
        sols.append(Solution(xi, rr, float(np.arctan2(xi[1], xi[0]) % (2 * np.pi)), det, deg,
                             stable=not degenerate, degenerate=degenerate))
    # merge duplicates from adjacent intervals
    uniq: list[Solution] = []
    for s in sols:
        if all(np.linalg.norm(s.point - u.point) > 1e-8 * (1 + s.r) for u in uniq):
            uniq.append(s)
    R = 1.5 * containment_radius(P, eta0) + 1e-3
    wind = degree_winding(P, eta0, R)
    defect = max((float(np.linalg.norm(P.gradient(*s.point) - eta0)) for s in uniq), default=0.0)
    return CriticalPointReport(uniq, M, 1 - M, wind, eta0.tolist(), R, defect)


def qm_roots(M: int, eta0) -> np.ndarray:
    """Closed-form solutions of grad Re(z^M) = eta0: z = (r0/M)^(1/(M-1)) e^{i(2 pi k - t0)/(M-1)}."""
    if M < 2:
        raise ValueError("closed form needs M >= 2")
    r0 = float(np.hypot(*eta0))
    t0 = float(np.arctan2(eta0[1], eta0[0]))
    r = (r0 / M) ** (1.0 / (M - 1))
    ang = (2 * np.pi * np.arange(M - 1) - t0) / (M - 1)
    return np.column_stack([r * np.cos(ang), r * np.sin(ang)])


def lines_poly(angles, degree: int, quad: float = 0.0) -> HomogeneousPoly:
    """Product of the lines through 0 at ``angles`` times (|x|^2 + quad x y)^k filling the degree."""
    extra = degree - len(angles)
    if extra < 0 or extra % 2:
        raise ValueError("degree minus line count must be a nonnegative even number")
    poly = np.array([1.0])
    for a in angles:
        # x sin a - y cos a, as coefficients of x^(n-k) y^k
        poly = np.convolve(poly, [np.sin(a), -np.cos(a)])
    for _ in range(extra // 2):
        poly = np.convolve(poly, [1.0, quad, 1.0])
    return HomogeneousPoly(poly)


def default_corpus() -> list[tuple[str, HomogeneousPoly]]:
    """Admissible polynomials spanning M = 0..5 and degree 3..5 (N = 2..4)."""
    c = []
    c.append(("cubic alpha=1", HomogeneousPoly.cubic_example(1.0, 8 * np.pi ** 2)))
    c.append(("cubic alpha=2", HomogeneousPoly.cubic_example(2.0, 8 * np.pi ** 2)))
    c.append(("x^3 + x y^2", HomogeneousPoly([1.0, 0.0, 1.0, 0.0])))
    c.append(("Q3", HomogeneousPoly.q_m(3)))
    c.append(("one line, N=2", lines_poly([0.3], 3, 0.5)))
    c.append(("|x|^4", lines_poly([], 4, 0.0)))
    c.append(("|x|^4 tilted", lines_poly([], 4, 0.7)))
    c.append(("two lines, N=3", lines_poly([0.2, 1.4], 4, -0.3)))
    c.append(("Q4", HomogeneousPoly.q_m(4)))
    c.append(("four lines, N=3", lines_poly([0.1, 0.9, 1.7, 2.6], 4)))
    c.append(("one line, N=4", lines_poly([0.5], 5, 0.2)))
    c.append(("three lines, N=4", lines_poly([0.2, 1.0, 2.2], 5, 0.4)))
    c.append(("Q5", HomogeneousPoly.q_m(5)))
    c.append(("five lines, N=4", lines_poly([0.05, 0.7, 1.3, 2.0, 2.8], 5)))
    c.append(("Q2 surrogate", HomogeneousPoly.q_m(2)))
    return c
