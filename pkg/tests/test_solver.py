import numpy as np
import pytest

from gelfand.ansatz import assemble_W, bubble_domain
from gelfand.greens import Domain, GridFunction
from gelfand.reduced import Potential
from gelfand.solver import (SolveError, _certificate, blowup_diagnostics, bubble_newton, newton_solve, peak_of)


def liouville_mu(rho: float) -> tuple[float, float]:
    """Roots of rho^2 (1 + mu)^2 = 8 mu: u = log(8 mu / (rho^2 (1 + mu r^2)^2)) solves the V = 1 disk problem."""
    a = rho ** 2
    small, large = sorted(np.roots([a, 2 * a - 8, a]).real)
    return small, large


def liouville(mu: float, rho: float, pts: np.ndarray) -> np.ndarray:
    return np.log(8 * mu / (rho ** 2 * (1 + mu * np.sum(pts ** 2, axis=1)) ** 2))


def test_minimal_solution_matches_exact_and_converges_quadratically():
    dom = Domain.unit_disk(1 / 64)
    res = newton_solve(dom, Potential.constant(1.0), 1.0)
    assert res.converged and res.newton_iterations <= 5
    assert res.quadratic_ratio < 1.0
    exact = liouville(liouville_mu(1.0)[0], 1.0, dom.nodes)
    assert np.abs(res.u.values - exact).max() < 5e-5


def test_zero_rho_gives_zero():
    dom = Domain.unit_disk(1 / 16)
    res = newton_solve(dom, Potential.constant(1.0), 0.0)
    assert res.converged and np.all(res.u.values == 0)


def test_no_solution_beyond_turning_point():
    # the disk problem with V = 1 has no solution for rho^2 > 2
    with pytest.raises(SolveError):
        newton_solve(Domain.unit_disk(1 / 16), Potential.constant(1.0), 1.6, max_iter=40)


def test_peak_of_quadratic_bump():
    dom = Domain.unit_disk(1 / 32)
    c = np.array([0.1037, -0.0521])
    vals = 3.0 - 10 * np.sum((dom.nodes - c) ** 2, axis=1)
    peak, height = peak_of(GridFunction(dom, vals, np.zeros(dom.boundary_points.shape[0])))
    assert np.allclose(peak, c, atol=1e-10) and height == pytest.approx(3.0, abs=1e-10)


@pytest.fixture(scope="module")
def radial_bubble():
    rho = 4e-3
    pot = Potential.constant(1.0)
    dom = bubble_domain(rho, [np.zeros(2)], np.sqrt(1 / 8), cells=6, core=8, h_far=1 / 24, ratio=1.15)
    res, xi = bubble_newton(assemble_W(rho, (0.2, 0.1), dom, pot, 2))
    return rho, pot, dom, res, xi


def test_bubble_newton_finds_radial_blowup_solution(radial_bubble):
    rho, pot, dom, res, xi = radial_bubble
    assert res.converged
    assert np.linalg.norm(xi) < 1e-6
    exact = liouville(liouville_mu(rho)[1], rho, dom.nodes)
    assert np.abs(res.u.values - exact).max() < 0.15


def test_blowup_diagnostics_of_radial_solution(radial_bubble):
    rho, pot, dom, res, xi = radial_bubble
    d = blowup_diagnostics(res, pot, rho)
    assert 0.99 < d["mass_ratio"] < 1.01
    # exact annulus sup: u at |x| = 0.2, about log(8/(mu rho^2 0.2^4)) for large mu
    mu = liouville_mu(rho)[1]
    assert d["annulus_sup"] == pytest.approx(float(liouville(mu, rho, np.array([[0.2, 0.0]]))[0]), abs=0.05)


def _row(h1, h2, ann, gap, mass=1.0, diff=5.0, ratio=1.0):
    b = [{"converged": True, "peak_height": h1, "annulus_sup": ann, "mass_ratio": mass},
         {"converged": True, "peak_height": h2, "annulus_sup": ann, "mass_ratio": mass}]
    p = [{"distinct": diff >= 1, "separation_ratio": ratio, "height_gap": gap, "sup_difference": diff}]
    return {"branches": b, "pairs": p}


def test_certificate_logic_accepts_clean_sweep():
    sweep = [_row(20, 20.1, 6.0, 1.0), _row(21, 21.1, 6.1, 1.2), _row(22, 22.1, 6.2, 1.3)]
    assert all(_certificate(sweep, 0.3, 2.0).values())


def test_certificate_logic_flags_merged_basins():
    sweep = [_row(20, 20, 6.0, 0.0, diff=0.01), _row(21, 21, 6.0, 0.0, diff=0.01)]
    checks = _certificate(sweep, 0.3, 2.0)
    assert not checks["distinct"] and not checks["height_gap_monotone"]


def test_certificate_requires_convergence():
    sweep = [_row(20, 20, 6.0, 1.0)]
    sweep[0]["branches"][1]["converged"] = False
    assert _certificate(sweep, 0.3, 2.0) == {"all_converged": False}
