from math import factorial

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pbe_majorant import quadrature as Q
from pbe_majorant.mesh import Mesh, OMEGA1, build_square_with_polygon, rectangle

UNIT = Mesh.from_arrays([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], [[0, 1, 2]])


def monomial_exact(p, q):
    """Integral of x^p y^q over the unit right triangle."""
    return factorial(p) * factorial(q) / factorial(p + q + 2)


def integrate_unit(order, f):
    return Q.integrate(UNIT, lambda xy, lam: f(xy[..., 0], xy[..., 1]), order)


def test_order1_centroid():
    r = Q.rule(1)
    assert r.points.shape == (1, 3) and np.allclose(r.points, 1 / 3) and r.weights[0] == 1.0
    assert integrate_unit(1, lambda x, y: np.ones_like(x)) == 0.5


def test_order2_midpoints():
    r = Q.rule(2)
    assert len(r.weights) == 3 and np.allclose(r.weights, 1 / 3)
    assert np.isclose(integrate_unit(2, lambda x, y: x ** 2), 1 / 12, rtol=1e-14)


def test_order5_monomial():
    # 3! 2! / 7! = 1/420
    assert np.isclose(integrate_unit(5, lambda x, y: x ** 3 * y ** 2), 1 / 420, rtol=1e-13)


def test_unsupported_order():
    with pytest.raises(Q.QuadratureError):
        Q.rule(4)


@pytest.mark.parametrize("order", [1, 2, 3, 5, 7])
def test_exact_to_degree(order):
    for p in range(order + 1):
        for q in range(order + 1 - p):
            got = integrate_unit(order, lambda x, y: x ** p * y ** q)
            assert abs(got - monomial_exact(p, q)) <= 1e-12 * monomial_exact(p, q)


@given(st.integers(0, 5), st.integers(0, 5), st.integers(0, 3))
def test_composite_rules_stay_exact(p, q, levels):
    if p + q > 5:
        return
    qs = Q.quad_set(UNIT, 5, levels)
    xy = qs.points(UNIT)
    got = qs.element_integrals(UNIT, xy[..., 0] ** p * xy[..., 1] ** q).sum()
    assert abs(got - monomial_exact(p, q)) <= 1e-12 * monomial_exact(p, q)


def test_area_of_example1_square():
    mesh = build_square_with_polygon(20.0, np.zeros((0, 2)), 2.0)
    assert np.isclose(Q.integrate(mesh, lambda xy, lam: np.ones(xy.shape[:2])), 400.0, rtol=1e-14)


def test_cosh_zero_on_omega1():
    poly = np.array([[-0.5, -0.5], [0.5, -0.5], [0.5, 0.5], [-0.5, 0.5]])
    mesh = build_square_with_polygon(2.0, poly, 0.5)
    inner = np.flatnonzero(mesh.regions == OMEGA1)
    got = Q.integrate(mesh, lambda xy, lam: np.cosh(0 * xy[..., 0]), 5, elements=inner)
    assert abs(got - 1.0) < 1e-14


def test_nan_density_names_element():
    mesh = rectangle(2, 2)

    def dens(xy, lam):
        out = np.ones(xy.shape[:2])
        out[5, 1] = np.nan
        return out
    with pytest.raises(Q.NonFiniteError) as err:
        Q.integrate(mesh, dens)
    assert err.value.element == 5 and err.value.point == 1


def test_overflow_guard():
    with pytest.raises(Q.NonFiniteError):
        Q.check_argument(np.array([[0.0, 701.0]]))
    Q.check_argument(np.array([[0.0, 699.0]]))


def test_quad_set_mixed_levels_matches_area():
    mesh = rectangle(3, 3)
    levels = np.arange(mesh.n_triangles) % 3
    qs = Q.quad_set(mesh, 5, levels)
    assert np.allclose(qs.element_integrals(mesh, np.ones(qs.wts.shape)), mesh.areas, rtol=1e-14)
    assert np.all(np.diff(qs.elem) >= 0)


def test_local_moments_and_mass_against_plain_rule():
    mesh = rectangle(3, 2)
    qs = Q.quad_set(mesh, 5, 2)
    lam = qs.lam
    mom = qs.local_moments(mesh, np.ones(qs.wts.shape))
    assert np.allclose(mom, mesh.areas[:, None] / 3, rtol=1e-13)
    mass = qs.local_mass(mesh, np.ones(qs.wts.shape))
    ref = mesh.areas[:, None, None] * (np.ones((3, 3)) + np.eye(3)) / 12
    assert np.allclose(mass, ref, rtol=1e-13)
    assert lam.shape[-1] == 3


def test_refinement_for_span():
    assert Q.refinement_for_span(0.3) == 0
    assert Q.refinement_for_span(0.9) == 1
    assert Q.refinement_for_span(4.0) == 3
    assert Q.refinement_for_span(1e6) == 5
