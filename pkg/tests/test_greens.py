import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gelfand import greens
from gelfand.greens import Domain, DomainError, graded_axis, poisson_solve


def test_disk_closed_form_is_symmetric(rng):
    for _ in range(20):
        x, y = rng.uniform(-0.5, 0.5, (2, 2))
        assert greens.disk_regular_part(x[None], y[None])[0] == pytest.approx(
            greens.disk_regular_part(y[None], x[None])[0], abs=1e-12)


def test_disk_robin_value():
    xi = np.array([0.3, -0.2])
    expected = np.log(1 - xi @ xi) / (2 * np.pi)
    assert greens.disk_regular_part(xi[None], xi[None])[0] == pytest.approx(expected, abs=1e-13)


def test_numeric_regular_part_matches_closed_form_on_disk():
    dom = Domain.unit_disk(1 / 64, analytic=False)
    for xi in ([0.0, 0.0], [0.4, 0.2], [-0.3, 0.5]):
        xi = np.array(xi)
        num = greens.regular_part(dom, xi, xi, method="poly")
        exact = greens.disk_regular_part(xi[None], xi[None])[0]
        assert abs(num - exact) < 2e-4


def test_poisson_manufactured_solution_second_order():
    errs = []
    for h in (1 / 32, 1 / 64):
        dom = Domain.unit_disk(h)
        u_exact = lambda x, y: (1 - x * x - y * y) * np.exp(x)
        # -Lap u = -e^x (1 - r^2 - 4x - 4)
        rhs = lambda x, y: -np.exp(x) * ((1 - x * x - y * y) - 4 * x - 4)
        gf = poisson_solve(dom, rhs, 0.0)
        n = dom.nodes
        errs.append(np.abs(gf.values - u_exact(n[:, 0], n[:, 1])).max())
    assert errs[1] < 1e-3
    assert errs[0] / errs[1] > 3.0


def test_spectral_extension_matches_grid_solve():
    trace = lambda x, y: x ** 3 - 3 * x * y * y + np.log(np.hypot(x - 0.1, y + 1.5))
    pts = np.array([[0.2, 0.1], [-0.5, 0.3]])
    spectral = greens.harmonic_extension_at(Domain.unit_disk(1 / 64), trace, pts)
    grid = greens.harmonic_extension_at(Domain.unit_disk(1 / 64, analytic=False), trace, pts)
    assert np.abs(spectral - grid).max() < 1e-3
    exact = pts[:, 0] ** 3 - 3 * pts[:, 0] * pts[:, 1] ** 2 + np.log(np.hypot(pts[:, 0] - 0.1, pts[:, 1] + 1.5))
    assert np.abs(spectral - exact).max() < 1e-10


@settings(max_examples=25, deadline=None)
@given(st.floats(0.01, 0.2), st.floats(1.02, 1.3))
def test_graded_axis_is_monotone_and_bounded(h_core, ratio):
    ax = graded_axis(-1.0, 1.0, (-0.1, 0.1), h_core / 10, 1 / 16, ratio)
    d = np.diff(ax)
    assert ax[0] == -1.0 and ax[-1] == 1.0
    assert np.all(d > 0)
    assert d.max() <= 1 / 16 * 1.5 + 1e-12


def test_from_config_errors():
    with pytest.raises(DomainError):
        Domain.from_config({"kind": "triangle"})
    with pytest.raises(DomainError):
        Domain.from_config({"kind": "disk", "h": -1})
    with pytest.raises(DomainError):
        Domain.square_with_hole(h=1 / 40, hole=0.013)


def test_regular_part_rejects_points_near_boundary():
    dom = Domain.unit_disk(1 / 32, analytic=False)
    with pytest.raises(DomainError):
        greens.regular_part(dom, np.array([0.0, 0.0]), np.array([0.99, 0.0]))


def test_square_with_hole_is_connected_and_excludes_hole():
    dom = Domain.square_with_hole(h=1 / 20, hole=0.3)
    assert not dom.contains(np.array([[0.0, 0.0]]))[0]
    assert dom.contains(np.array([[0.6, 0.0]]))[0]
