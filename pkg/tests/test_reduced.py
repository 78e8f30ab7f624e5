import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gelfand.greens import Domain
from gelfand.reduced import (AdmissibilityError, HomogeneousPoly, Potential, ReducedFunctional,
                             admissibility_check, build_admissible_potential, build_P, eta0_vector,
                             eval_F, polynomial_admissibility, potential_from_spec)


def test_cubic_example_polynomial(cubic_potential, coarse_disk):
    rf = ReducedFunctional(coarse_disk, cubic_potential, 2)
    P = build_P(rf, 2)
    c = 8 * np.pi ** 2
    assert np.allclose(P.coeffs, [c, 0.0, -c, 0.0], rtol=1e-4, atol=1e-4 * c)
    assert admissibility_check(rf, 2)["admissible"]


def test_F_matches_target_near_center(cubic_potential, coarse_disk):
    rf = ReducedFunctional(coarse_disk, cubic_potential, 2)
    F0 = eval_F(rf, np.zeros(2))
    for v in ([0.05, 0.0], [0.03, -0.04]):
        v = np.array(v)
        target = v[0] ** 3 - v[0] * v[1] ** 2
        assert eval_F(rf, v) - F0 == pytest.approx(target, abs=5e-5)


def test_pure_cube_is_not_admissible():
    rep = polynomial_admissibility(HomogeneousPoly([1.0, 0.0, 0.0, 0.0]))
    assert not rep["admissible"]


def test_degree_mismatch_rejected(coarse_disk):
    with pytest.raises(ValueError):
        build_admissible_potential(coarse_disk, HomogeneousPoly.q_m(4), 2)


def test_disk_eta0_vanishes_for_N3(coarse_disk):
    pot = build_admissible_potential(coarse_disk, HomogeneousPoly.q_m(4), 3)
    eta = eta0_vector(ReducedFunctional(coarse_disk, pot, 3), 3)
    assert np.linalg.norm(eta) < 2e-3


def test_eta0_scales_linearly_with_target(coarse_disk):
    e1 = eta0_vector(ReducedFunctional(coarse_disk, potential_from_spec(coarse_disk, {}, 2, 1.0), 2), 2)
    e2 = eta0_vector(ReducedFunctional(coarse_disk, potential_from_spec(coarse_disk, {"scale": 0.5}, 2, 1.0), 2), 2)
    assert np.allclose(e2, 0.5 * e1, rtol=1e-6, atol=1e-9)


def test_potential_json_roundtrip(cubic_potential):
    again = Potential.from_json(cubic_potential.to_json())
    assert again.dumps() == cubic_potential.dumps()
    assert again.log_v(0.2, -0.3) == pytest.approx(cubic_potential.log_v(0.2, -0.3))


def test_constant_potential_rejects_nonpositive():
    with pytest.raises(ValueError):
        Potential.constant(0.0)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=4, max_size=4), st.floats(-0.9, 0.9), st.floats(-0.9, 0.9))
def test_homogeneous_gradient_matches_finite_differences(coeffs, x, y):
    P = HomogeneousPoly(np.array(coeffs))
    g = P.gradient(x, y)
    e = 1e-6
    fd = [(P(x + e, y) - P(x - e, y)) / (2 * e), (P(x, y + e) - P(x, y - e)) / (2 * e)]
    assert np.allclose(g, fd, atol=1e-6)


def test_unknown_potential_kind(coarse_disk):
    with pytest.raises(ValueError):
        potential_from_spec(coarse_disk, {"kind": "mystery"}, 2, 1.0)
