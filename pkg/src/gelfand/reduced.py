"""Reduced functional F = R + logV/4pi, interaction functional E, the jet polynomial P and eta0."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from math import comb, factorial
from typing import Iterable

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from . import greens
from ._fd import multi_indices, partial
from .greens import Domain, DomainError

FOUR_PI = 4.0 * np.pi


class AdmissibilityError(ValueError):
    """Potential or polynomial fails the admissibility conditions."""


# ---- potentials --------------------------------------------------------

@dataclass
class Potential:
    """V = exp(logV) with logV a polynomial in (x - center)."""

    coeffs: dict[tuple[int, int], float]
    center: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        self.coeffs = {(int(a), int(b)): float(c) for (a, b), c in self.coeffs.items() if c != 0.0}
        if not all(np.isfinite(c) for c in self.coeffs.values()):
            raise ValueError("logV coefficients must be finite")
        self.center = (float(self.center[0]), float(self.center[1]))

    @classmethod
    def constant(cls, value: float) -> "Potential":
        if value <= 0:
            raise ValueError("V must be positive")
        return cls({(0, 0): float(np.log(value))})

    @property
    def degree(self) -> int:
        return max((a + b for a, b in self.coeffs), default=0)

    def log_v(self, x, y) -> np.ndarray:
        dx = np.asarray(x, dtype=float) - self.center[0]
        dy = np.asarray(y, dtype=float) - self.center[1]
        out = np.zeros(np.broadcast(dx, dy).shape)
        for (a, b), c in self.coeffs.items():
            out = out + c * dx ** a * dy ** b
        return out

    def __call__(self, x, y) -> np.ndarray:
        return np.exp(self.log_v(x, y))

    def derivative(self, index: tuple[int, int], point) -> float:
        """Exact partial derivative of logV."""
        i, j = index
        dx = float(point[0]) - self.center[0]
        dy = float(point[1]) - self.center[1]
        tot = 0.0
        for (a, b), c in self.coeffs.items():
            if a < i or b < j:
                continue
            tot += c * (factorial(a) // factorial(a - i)) * (factorial(b) // factorial(b - j)) \
                * dx ** (a - i) * dy ** (b - j)
        return tot

    def gradient(self, point) -> np.ndarray:
        return np.array([self.derivative((1, 0), point), self.derivative((0, 1), point)])

    def laplacian(self, point) -> float:
        return self.derivative((2, 0), point) + self.derivative((0, 2), point)

    def grad_laplacian(self, point) -> np.ndarray:
        return np.array([self.derivative((3, 0), point) + self.derivative((1, 2), point),
                         self.derivative((2, 1), point) + self.derivative((0, 3), point)])

    def positivity_report(self, domain: Domain, samples: int = 201) -> dict:
        """V = exp(logV) is positive by construction; this checks it stays finite and nonzero."""
        x0, x1, y0, y1 = domain.bounding_box
        X, Y = np.meshgrid(np.linspace(x0, x1, samples), np.linspace(y0, y1, samples))
        lv = self.log_v(X, Y)
        ok = bool(np.all(np.isfinite(lv)) and lv.max() < 700 and lv.min() > -700)
        return {"ok": ok, "logV_min": float(lv.min()), "logV_max": float(lv.max())}

    def to_json(self) -> dict:
        return {"center": list(self.center),
                "coefficients": [[a, b, c] for (a, b), c in sorted(self.coeffs.items())]}

    @classmethod
    def from_json(cls, data: dict) -> "Potential":
        return cls({(int(a), int(b)): float(c) for a, b, c in data["coefficients"]},
                   tuple(data.get("center", (0.0, 0.0))))

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


# ---- homogeneous polynomials ---------------------------------------------

@dataclass
class HomogeneousPoly:
    """sum_k coeffs[k] x^(d-k) y^k, with polar form P(r e^{it}) = r^d p(t)."""

    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)

    @property
    def degree(self) -> int:
        return self.coeffs.size - 1

    @property
    def order(self) -> int:
        """Degeneracy order N, so that degree = N + 1."""
        return self.degree - 1

    @classmethod
    def q_m(cls, m: int, scale: float = 1.0) -> "HomogeneousPoly":
        """Re(z^m) times ``scale``."""
        c = [scale * comb(m, k) * np.real(1j ** k) for k in range(m + 1)]
        return cls(np.array(c))

    @classmethod
    def cubic_example(cls, alpha: float, scale: float = 1.0) -> "HomogeneousPoly":
        return cls(scale * np.array([alpha, 0.0, -1.0, 0.0]))

    @property
    def scale(self) -> float:
        return float(np.abs(self.coeffs).max()) if self.coeffs.size else 0.0

    def __call__(self, x, y) -> np.ndarray:
        d = self.degree
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return sum(c * x ** (d - k) * y ** k for k, c in enumerate(self.coeffs))

    def _partial_coeffs(self, axis: int) -> np.ndarray:
        d = self.degree
        if axis == 0:
            return np.array([c * (d - k) for k, c in enumerate(self.coeffs)][:d])
        return np.array([c * k for k, c in enumerate(self.coeffs)][1:])

    def gradient(self, x, y) -> np.ndarray:
        return np.array([HomogeneousPoly(self._partial_coeffs(0))(x, y),
                         HomogeneousPoly(self._partial_coeffs(1))(x, y)])

    def hessian(self, x, y) -> np.ndarray:
        px = HomogeneousPoly(self._partial_coeffs(0))
        py = HomogeneousPoly(self._partial_coeffs(1))
        hxx = HomogeneousPoly(px._partial_coeffs(0))(x, y)
        hxy = HomogeneousPoly(px._partial_coeffs(1))(x, y)
        hyy = HomogeneousPoly(py._partial_coeffs(1))(x, y)
        return np.array([[hxx, hxy], [hxy, hyy]])

    @cached_property
    def fourier(self) -> np.ndarray:
        """Complex coefficients f_k, k=-d..d, with p(t) = sum f_k e^{ikt} (exact up to rounding)."""
        d = self.degree
        m = 4 * d + 4
        t = 2 * np.pi * np.arange(m) / m
        f = np.fft.fft(self(np.cos(t), np.sin(t))) / m
        ks = np.fft.fftfreq(m, 1.0 / m).astype(int)
        out = np.zeros(2 * d + 1, dtype=complex)
        for k, v in zip(ks, f):
            if abs(k) <= d:
                out[k + d] = v
        return out

    def polar(self, t, deriv: int = 0) -> np.ndarray:
        """p(t) or its derivatives from the trigonometric expansion."""
        d = self.degree
        t = np.asarray(t, dtype=float)
        ks = np.arange(-d, d + 1)
        return np.real(np.exp(1j * np.multiply.outer(t, ks)) @ (self.fourier * (1j * ks) ** deriv))

    def admissibility_function(self, t) -> np.ndarray:
        """(N+1)^2 p^2 + p'^2, which vanishes exactly at common zeros of p and p'."""
        d = self.degree
        return d * d * self.polar(t) ** 2 + self.polar(t, 1) ** 2

    def to_json(self) -> dict:
        return {"degree": self.degree, "coefficients": self.coeffs.tolist()}


# ---- reduced functional ------------------------------------------------

JET_STEPS = {1: 1e-2, 2: 1e-2, 3: 2.5e-2, 4: 2.5e-2, 5: 5e-2, 6: 5e-2}


def _disk_robin_taylor(order: int) -> dict[tuple[int, int], float]:
    """Monomial coefficients of (1/2pi) log(1 - x^2 - y^2) up to total degree ``order``."""
    out: dict[tuple[int, int], float] = {}
    for n in range(1, order // 2 + 1):
        # -(1/2pi) s^n / n with s = x^2 + y^2
        for k in range(n + 1):
            key = (2 * (n - k), 2 * k)
            out[key] = out.get(key, 0.0) - comb(n, k) / (n * 2 * np.pi)
    return out


@dataclass(eq=False)
class ReducedFunctional:
    domain: Domain
    potential: Potential
    N: int = 2
    _jets: dict = field(default_factory=dict, repr=False)

    @property
    def center(self) -> np.ndarray:
        return np.asarray(self.potential.center)

    def robin(self, xi) -> float:
        xi = np.asarray(xi, dtype=float)
        if self.domain.has_analytic_h:
            return float(np.log(1.0 - xi @ xi) / (2 * np.pi))
        return greens.regular_part(self.domain, xi, xi, method="poly")

    def robin_jet(self, index: tuple[int, int], step: float | None = None) -> float:
        """Partial derivative of R at the center (finite differences, Richardson once)."""
        n = index[0] + index[1]
        s = step or JET_STEPS.get(n, 5e-2)
        if n == 0:
            return self.robin(self.center)
        return partial(lambda p: self.robin(np.array(p)), self.center, index, s)

    def jet(self, index: tuple[int, int]) -> float:
        """Partial derivative of F at the center."""
        if index not in self._jets:
            self._jets[index] = self.robin_jet(index) + self.potential.derivative(index, self.center) / FOUR_PI
        return self._jets[index]

    def jets(self, max_order: int) -> dict[int, list[float]]:
        return {n: [self.jet(ix) for ix in multi_indices(n)] for n in range(max_order + 1)}

    def fd_noise(self, order: int) -> float:
        """Spread between FD jets at two step sizes, a proxy for truncation plus solver noise."""
        s = JET_STEPS.get(order, 5e-2)
        return max(abs(self.robin_jet(ix, s) - self.robin_jet(ix, 1.5 * s)) for ix in multi_indices(order))


def eval_F(rf: ReducedFunctional, xi) -> float:
    xi = np.asarray(xi, dtype=float)
    if not rf.domain.contains(xi[None])[0]:
        raise DomainError(f"xi={xi} outside the domain")
    return rf.robin(xi) + float(rf.potential.log_v(xi[0], xi[1])) / FOUR_PI


def _h_field(rf: ReducedFunctional, pts: np.ndarray, xi: np.ndarray) -> np.ndarray:
    if rf.domain.has_analytic_h:
        return greens.disk_regular_part(pts, np.broadcast_to(xi, pts.shape))
    sol = greens._regular_part_solution(rf.domain, (float(xi[0]), float(xi[1])))
    return greens.interpolate(sol, pts)


def interaction_exponent(rf: ReducedFunctional, pts, xi) -> np.ndarray:
    """g = 8pi(H(x,xi) - H(xi,xi)) + logV(x) - logV(xi), so that E = e^g - 1."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    xi = np.asarray(xi, dtype=float)
    h = _h_field(rf, pts, xi)
    hxi = _h_field(rf, xi[None], xi)[0]
    lv = rf.potential.log_v(pts[:, 0], pts[:, 1]) - rf.potential.log_v(xi[0], xi[1])
    return 8 * np.pi * (h - hxi) + lv


def eval_E(rf: ReducedFunctional, x, xi) -> float:
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    for p, name in ((x, "x"), (xi, "xi")):
        if not rf.domain.contains(p[None])[0]:
            raise DomainError(f"{name}={p} outside the domain")
    return float(np.expm1(interaction_exponent(rf, x[None], xi))[0])


def _disk_logq_jet(xi: np.ndarray, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Derivatives in x of log q, q = |xi|^2|x|^2 - 2 x.xi + 1, up to order 3."""
    s = xi @ xi
    q = s * (x @ x) - 2 * x @ xi + 1
    qi = 2 * s * x - 2 * xi
    qij = 2 * s * np.eye(2)
    d1 = qi / q
    d2 = qij / q - np.outer(qi, qi) / q ** 2
    d3 = np.zeros((2, 2, 2))
    for i in range(2):
        for j in range(2):
            for k in range(2):
                d3[i, j, k] = (-(qij[i, j] * qi[k] + qij[i, k] * qi[j] + qij[j, k] * qi[i]) / q ** 2
                               + 2 * qi[i] * qi[j] * qi[k] / q ** 3)
    return d1, d2, d3


def exponent_derivatives(rf: ReducedFunctional, xi) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradient, Hessian and third tensor of g(., xi) at x = xi."""
    xi = np.asarray(xi, dtype=float)
    pot = rf.potential
    lv1 = pot.gradient(xi)
    lv2 = np.array([[pot.derivative((2, 0), xi), pot.derivative((1, 1), xi)],
                    [pot.derivative((1, 1), xi), pot.derivative((0, 2), xi)]])
    lv3 = np.zeros((2, 2, 2))
    for i in range(2):
        for j in range(2):
            for k in range(2):
                a = (i == 0) + (j == 0) + (k == 0)
                lv3[i, j, k] = pot.derivative((a, 3 - a), xi)
    if rf.domain.has_analytic_h:
        h1, h2, h3 = (2.0 * d for d in _disk_logq_jet(xi, xi))  # 8pi * (1/4pi) log q
    else:
        fit = greens.local_fit(greens._regular_part_solution(rf.domain, (float(xi[0]), float(xi[1]))), xi)
        h1 = 8 * np.pi * np.array([fit[(1, 0)], fit[(0, 1)]])
        h2 = 8 * np.pi * np.array([[fit[(2, 0)], fit[(1, 1)]], [fit[(1, 1)], fit[(0, 2)]]])
        h3 = np.zeros((2, 2, 2))
        for i in range(2):
            for j in range(2):
                for k in range(2):
                    a = (i == 0) + (j == 0) + (k == 0)
                    h3[i, j, k] = 8 * np.pi * fit[(a, 3 - a)]
    return h1 + lv1, h2 + lv2, h3 + lv3


def interaction_derivatives(rf: ReducedFunctional, xi) -> dict:
    """Derivatives of E(., xi) at x = xi up to order 3 (E = e^g - 1, g(xi) = 0)."""
    g1, g2, g3 = exponent_derivatives(rf, xi)
    e2 = g2 + np.outer(g1, g1)
    e3 = g3.copy()
    for i in range(2):
        for j in range(2):
            for k in range(2):
                e3[i, j, k] += (g2[i, j] * g1[k] + g2[i, k] * g1[j] + g2[j, k] * g1[i]
                                + g1[i] * g1[j] * g1[k])
    return {"grad": g1, "hess": e2, "third": e3, "g_hess": g2}


# ---- potentials with prescribed jets -------------------------------------

def robin_taylor(domain: Domain, order: int, center=(0.0, 0.0)) -> dict[tuple[int, int], float]:
    """Monomial coefficients of the Robin function's Taylor polynomial about ``center``."""
    center = (float(center[0]), float(center[1]))
    if domain.has_analytic_h and center == (0.0, 0.0):
        return _disk_robin_taylor(order)
    rf = ReducedFunctional(domain, Potential({}, center))
    out = {}
    for n in range(order + 1):
        for a, b in multi_indices(n):
            out[(a, b)] = rf.robin_jet((a, b)) / (factorial(a) * factorial(b))
    return out


def build_admissible_potential(domain: Domain, target: HomogeneousPoly, N: int,
                               center=(0.0, 0.0), fit_tol: float = 1e-4) -> Potential:
    """logV = 4pi (target - T_{N+1}[R]) so that F = target + O(|x|^{N+2})."""
    if target.degree != N + 1:
        raise ValueError(f"target has degree {target.degree}, expected N+1 = {N + 1}")
    taylor = robin_taylor(domain, N + 1, center)
    coeffs = {k: -FOUR_PI * v for k, v in taylor.items()}
    d = N + 1
    for k, c in enumerate(target.coeffs):
        key = (d - k, k)
        coeffs[key] = coeffs.get(key, 0.0) + FOUR_PI * c
    pot = Potential(coeffs, center)
    # Taylor-fit residual: R - T should be O(|v|^{N+2}) on a small circle
    rf = ReducedFunctional(domain, Potential({}, center))
    r = 0.02
    worst = 0.0
    for th in np.linspace(0, 2 * np.pi, 8, endpoint=False):
        v = np.array([r * np.cos(th), r * np.sin(th)])
        t_val = sum(c * v[0] ** a * v[1] ** b for (a, b), c in taylor.items())
        worst = max(worst, abs(rf.robin(np.asarray(center) + v) - t_val))
    if worst > fit_tol:
        raise AdmissibilityError(f"Robin Taylor fit residual {worst:.2e} above {fit_tol:.0e}")
    rep = pot.positivity_report(domain)
    if not rep["ok"]:
        raise AdmissibilityError(f"V not positive/finite on the bounding box: {rep}")
    return pot


def build_P(rf: ReducedFunctional, N: int | None = None) -> HomogeneousPoly:
    N = rf.N if N is None else N
    d = N + 1
    c = [4 * np.pi ** 2 / d * comb(d, k) * rf.jet((d - k, k)) for k in range(d + 1)]
    return HomogeneousPoly(np.array(c))


def _min_admissibility(P: HomogeneousPoly, grid: int = 4096) -> tuple[float, float]:
    t = np.linspace(0, 2 * np.pi, grid, endpoint=False)
    q = P.admissibility_function(t)
    best_val, best_t = float(q.min()), float(t[q.argmin()])
    # refine around the smallest local minima
    order = np.argsort(q)[:8]
    dt = 2 * np.pi / grid
    for i in order:
        res = minimize_scalar(lambda s: float(P.admissibility_function(s)), bounds=(t[i] - dt, t[i] + dt),
                              method="bounded", options={"xatol": 1e-14})
        if res.fun < best_val:
            best_val, best_t = float(res.fun), float(res.x % (2 * np.pi))
    return best_val, best_t


def polynomial_admissibility(P: HomogeneousPoly, rel_tol: float = 1e-10) -> dict:
    scale = P.scale
    if scale == 0.0:
        return {"admissible": False, "reason": "P vanishes identically", "min_Q": 0.0, "argmin_t": None}
    qmin, tmin = _min_admissibility(P)
    ok = qmin > rel_tol * scale ** 2
    return {"admissible": bool(ok), "min_Q": qmin, "argmin_t": tmin,
            "reason": None if ok else f"p and p' share a zero near t={tmin:.6f}"}


def admissibility_check(rf: ReducedFunctional, N: int | None = None, rel_tol: float = 1e-5) -> dict:
    N = rf.N if N is None else N
    P = build_P(rf, N)
    top = max((abs(rf.jet(ix)) for ix in multi_indices(N + 1)), default=0.0)
    scale = max(top, 1e-300)
    failures = []
    lower = {}
    for n in range(1, N + 1):
        vals = [rf.jet(ix) for ix in multi_indices(n)]
        lower[n] = vals
        worst = max(abs(v) for v in vals)
        if worst > rel_tol * scale:
            failures.append(f"order-{n} derivatives of F do not vanish (max {worst:.2e})")
    poly = polynomial_admissibility(P)
    if not poly["admissible"]:
        failures.append(poly["reason"])
    return {"admissible": not failures, "failures": failures, "N": N,
            "jet_scale": top, "lower_jets": {str(k): v for k, v in lower.items()},
            "P": P.to_json(), "min_Q": poly["min_Q"], "argmin_t": poly["argmin_t"]}


# ---- eta0 ---------------------------------------------------------------

def compute_eta0(rf: ReducedFunctional, N: int | None = None) -> dict:
    """eta0 vector. N = 2 uses grad(Lap logV)(0); N >= 3 uses grad_x of the mixed-trace of H."""
    N = rf.N if N is None else N
    c = rf.center
    der = greens.regular_part_derivatives(rf.domain, 2, c)
    gx = np.array(der["grad_x"])
    s_h = der["trace_mixed"]
    factor = np.exp(float(rf.potential.log_v(c[0], c[1]))) / 8 * np.exp(8 * np.pi * der["value"])
    first = 64 * np.pi ** 3 * s_h * gx
    if N == 2:
        second = -np.pi * rf.potential.grad_laplacian(c)
    else:
        second = 16 * np.pi ** 2 * np.array(der["grad_x_trace"])
    eta = (first + second) * factor
    return {"eta0": eta.tolist(), "N": N, "factor": float(factor), "H00": der["value"],
            "grad_x_H": gx.tolist(), "mixed_trace": s_h, "grad_x_mixed_trace": der.get("grad_x_trace"),
            "symmetry_defect": der["symmetry_defect"]}


def eta0_vector(rf: ReducedFunctional, N: int | None = None) -> np.ndarray:
    return np.array(compute_eta0(rf, N)["eta0"])


def find_alpha0(domain: Domain, bracket: tuple[float, float] = (-10.0, 10.0)) -> float | None:
    """alpha at which eta0 of the cubic example vanishes (first component; the second is zero by symmetry)."""
    def f(a):
        pot = build_admissible_potential(domain, HomogeneousPoly.cubic_example(a), 2)
        return eta0_vector(ReducedFunctional(domain, pot, 2), 2)[0]

    lo, hi = bracket
    if f(lo) * f(hi) > 0:
        return None
    return float(brentq(f, lo, hi, xtol=1e-12))


def potential_from_spec(domain: Domain, spec: dict, N: int, alpha: float) -> Potential:
    """Build a potential from a config block: explicit coefficients, radial, or admissible target."""
    kind = spec.get("kind", "admissible")
    center = tuple(spec.get("center", (0.0, 0.0)))
    if kind == "coefficients":
        return Potential.from_json({"coefficients": spec["coefficients"], "center": center})
    if kind == "constant":
        return Potential.constant(float(spec.get("value", 1.0)))
    if kind == "radial":
        # V = exp(c |x|^2), radially symmetric about the center
        c = float(spec.get("c2", 0.0))
        return Potential({(2, 0): c, (0, 2): c, (0, 0): float(spec.get("c0", 0.0))}, center)
    if kind == "admissible":
        if "target" in spec:
            target = HomogeneousPoly(float(spec.get("scale", 1.0)) * np.asarray(spec["target"], dtype=float))
        elif N == 2:
            target = HomogeneousPoly.cubic_example(alpha, float(spec.get("scale", 1.0)))
        else:
            target = HomogeneousPoly.q_m(N + 1, float(spec.get("scale", 1.0)))
        return build_admissible_potential(domain, target, N, center)
    raise ValueError(f"unknown potential kind {kind!r}")


def reduced_report(rf: ReducedFunctional, N: int | None = None) -> dict:
    N = rf.N if N is None else N
    adm = admissibility_check(rf, N)
    eta = compute_eta0(rf, N)
    return {"N": N, "potential": rf.potential.to_json(), "jets": {str(k): v for k, v in rf.jets(N + 1).items()},
            "admissibility": adm, "eta0": eta, "fd_noise_top": rf.fd_noise(N + 1)}


def sample_points(n: int, radius: float, seed: int = 0) -> Iterable[np.ndarray]:
    rng = np.random.default_rng(seed)
    for _ in range(n):
        r = radius * np.sqrt(rng.random())
        t = 2 * np.pi * rng.random()
        yield np.array([r * np.cos(t), r * np.sin(t)])
