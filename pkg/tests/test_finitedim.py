import numpy as np
import pytest

from gelfand.finitedim import (DegreeError, default_corpus, degree_formula, degree_winding, nodal_line_count,
                               qm_roots, solve_reduced_equation)
from gelfand.reduced import HomogeneousPoly


def test_cubic_has_three_nodal_lines_and_degree_minus_two():
    P = HomogeneousPoly.cubic_example(1.0, 8 * np.pi ** 2)
    assert nodal_line_count(P) == 3
    assert degree_formula(P) == -2
    assert degree_winding(P, (-19.74, 0.0)) == -2


@pytest.mark.parametrize("name,P", default_corpus())
def test_formula_equals_winding_on_corpus(name, P):
    eta = (0.3, -0.2)
    assert degree_formula(P) == degree_winding(P, eta)


def test_corpus_covers_required_range():
    corpus = default_corpus()
    Ms = {nodal_line_count(P) for _, P in corpus}
    Ns = {P.degree - 1 for _, P in corpus}
    assert {0, 1, 2, 3, 4, 5} <= Ms
    assert {2, 3, 4} <= Ns
    assert len(corpus) >= 12


@pytest.mark.parametrize("M", [2, 3, 4, 5])
def test_qm_closed_form_roots(M):
    eta = np.array([0.7, -0.4])
    P = HomogeneousPoly.q_m(M)
    for z in qm_roots(M, eta):
        assert np.allclose(P.gradient(*z), eta, atol=1e-10)
    rep = solve_reduced_equation(P, eta)
    found = np.array([s.point for s in rep.solutions])
    for z in qm_roots(M, eta):
        assert np.min(np.linalg.norm(found - z, axis=1)) < 1e-10


def test_zero_eta_gives_only_origin():
    rep = solve_reduced_equation(HomogeneousPoly.q_m(3), (0.0, 0.0))
    assert len(rep.solutions) == 1
    assert np.allclose(rep.solutions[0].point, 0.0)


def test_cubic_example_stable_pair():
    P = HomogeneousPoly.cubic_example(1.0, 8 * np.pi ** 2)
    rep = solve_reduced_equation(P, (-2 * np.pi ** 2, 0.0))
    pts = sorted(tuple(np.round(s.point, 8)) for s in rep.stable_solutions)
    assert np.allclose(pts, [(0.0, -0.5), (0.0, 0.5)], atol=1e-8)


def test_winding_fails_when_zero_on_circle():
    P = HomogeneousPoly.q_m(2)
    eta = np.array(P.gradient(1.0, 0.0))
    with pytest.raises(DegreeError):
        degree_winding(P, eta, R=1.0)
