import numpy as np
import pytest

from gelfand.corrections import (PHI1, default_profile, forcing_integral, integrand, phi, shoot_w1, w0, w2, w3,
                                 w1_certificate)


def _lap(f, y1, y2, e=1e-3):
    return (f(y1 + e, y2) + f(y1 - e, y2) + f(y1, y2 + e) + f(y1, y2 - e) - 4 * f(y1, y2)) / e ** 2


def _q(y1, y2):
    return 1 + y1 * y1 + y2 * y2


@pytest.mark.parametrize("pt", [(0.3, 0.1), (1.2, -0.7), (-2.0, 0.5)])
def test_w0_spans_the_radial_kernel(pt):
    f = lambda a, b: w0(np.hypot(a, b))
    y1, y2 = pt
    assert _lap(f, y1, y2) + 8 / _q(y1, y2) ** 2 * f(y1, y2) == pytest.approx(0.0, abs=1e-5)


@pytest.mark.parametrize("pt", [(0.3, 0.1), (1.2, -0.7), (-2.0, 0.5)])
def test_closed_forms_solve_their_equations(pt):
    # images derived symbolically: L w2 = -4(y1^2 - y2^2)/q^2, L w3 = -4 y1 y2/q^2
    y1, y2 = pt
    q2 = _q(y1, y2) ** 2
    assert _lap(w2, y1, y2) + 8 / q2 * w2(y1, y2) == pytest.approx(-4 * (y1 ** 2 - y2 ** 2) / q2, abs=1e-5)
    assert _lap(w3, y1, y2) + 8 / q2 * w3(y1, y2) == pytest.approx(-4 * y1 * y2 / q2, abs=1e-5)


def test_forcing_integral_derivative():
    s = np.array([0.2, 0.9, 1.7, 5.0])
    e = 1e-6
    d = (forcing_integral(s + e) - forcing_integral(s - e)) / (2 * e)
    assert np.allclose(d, s * w0(s) * 4 * s ** 2 / (1 + s ** 2) ** 2, rtol=1e-7)


def test_integrand_is_continuous_through_one():
    s = np.array([0.979, 0.981, 1.019, 1.021])
    v = integrand(s)
    assert abs(v[0] - v[1]) < 1e-3 and abs(v[2] - v[3]) < 1e-3
    assert np.isfinite(PHI1) and phi(1.0) == pytest.approx(PHI1)


@pytest.fixture(scope="module")
def profile():
    return default_profile()


def test_w1_ode_residual_small(profile):
    r = np.array([0.1, 0.5, 1.0, 3.0, 30.0, 100.0])
    assert np.abs(profile.ode_residual(r)).max() < 1e-6


def test_w1_far_field_asymptote(profile):
    d = profile.asymptote_defect(np.geomspace(20, 1e4, 30))
    assert np.all(np.isfinite(d))
    assert np.abs(d).max() < 10


def test_w1_agrees_with_shooting_oracle(profile):
    r = np.array([0.2, 1.0, 10.0, 300.0])
    assert np.abs(profile.exact(r) - shoot_w1(r)).max() < 1e-5


def test_w1_value_at_origin_is_frozen(profile):
    # oracle value from the independent shooting integration
    assert profile(np.array([0.0]))[0] == pytest.approx(float(shoot_w1(np.array([1e-3]))[0]), abs=1e-5)
    assert profile(np.array([0.0]))[0] == pytest.approx(-4.64493, abs=1e-4)


def test_certificate_bundle(profile):
    cert = w1_certificate(profile)
    assert cert["passed"]
