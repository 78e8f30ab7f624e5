from dataclasses import replace

import numpy as np
import pytest

from gelfand.ansatz import (AnsatzError, assemble_W, bubble_domain, bubble_mass_error, bubble_values, build_bubble,
                            diagnostic_mesh, kernel_integrals, local_expansion_check, linearized_diagnostic, psi_values,
                            tau_limit, xi_scale)
from gelfand.greens import Domain
from gelfand.reduced import Potential, ReducedFunctional

RHO = 4e-3
XI0 = (0.0, 0.5)


@pytest.fixture(scope="module")
def light(cubic_potential):
    xi = xi_scale(RHO, 2) * np.array(XI0)
    dom = bubble_domain(RHO, [xi], np.sqrt(1 / 8), cells=6, core=8, h_far=1 / 24, ratio=1.15)
    return assemble_W(RHO, XI0, dom, cubic_potential, 2)


def test_xi_scale():
    assert xi_scale(1e-3, 2) == pytest.approx(1e-3 * np.sqrt(np.log(1e3)))
    assert xi_scale(1e-3, 3) == pytest.approx(1e-3 ** (2 / 3) * np.log(1e3) ** (1 / 3))


def test_tau_limit_for_unit_potential(coarse_disk):
    rf = ReducedFunctional(coarse_disk, Potential.constant(1.0), 2)
    assert tau_limit(rf, (0.0, 0.0)) == pytest.approx(np.sqrt(1 / 8), rel=1e-12)


def test_psi_is_quarter_translation_derivative():
    pts = np.array([[0.01, 0.02], [-0.03, 0.005]])
    xi, s, e = np.array([0.001, -0.002]), 0.004, 1e-8
    for i in range(2):
        d = np.zeros(2)
        d[i] = e
        fd = (bubble_values(pts, xi + d, s) - bubble_values(pts, xi - d, s)) / (2 * e)
        assert np.allclose(fd, 4 * psi_values(pts, xi, s, i), rtol=1e-5)


def test_under_resolved_bubble_rejected(coarse_disk):
    with pytest.raises(AnsatzError):
        build_bubble(1e-3, 0.35, (0.0, 0.0), coarse_disk)


def test_tau_converges_near_limit(light):
    # frozen from the fixed-point iteration on the production mesh: 0.353922
    assert light.tau == pytest.approx(0.353922, abs=1e-4)


def test_bubble_mass(light):
    assert bubble_mass_error(RHO, light.tau, light.xi, light.domain) < 1e-4


def test_kernel_identities(light):
    k = kernel_integrals(light)
    assert k["delta_deviation"] < 5e-3
    assert all(abs(v - 1) < 0.15 for v in k["log_ratio"])


def test_corrections_reduce_residual(light):
    on = light.residual_norm(1.2)
    off = replace(light, corrections=False).residual_norm(1.2)
    assert on < 0.05 * off


def test_local_expansion_of_W(light):
    pts = light.xi + np.array([[0.05, 0.0], [0.0, 0.1], [0.2, 0.2]])
    assert np.abs(local_expansion_check(light, pts)["difference"]).max() < 2e-3


def test_linearized_near_kernel(cubic_potential, light):
    dom = diagnostic_mesh(RHO, light.tau, [light.xi])
    d = linearized_diagnostic(assemble_W(RHO, XI0, dom, cubic_potential, 2))
    sv = d["singular_values"]
    assert sv[1] < 0.05 and d["gap_ratio"] > 5
    assert min(d["kernel_overlap"]) > 0.9


def test_bubble_domain_too_wide():
    with pytest.raises(AnsatzError):
        bubble_domain(0.05, [(0.0, 0.0), (0.9, 0.0)], 0.35)
