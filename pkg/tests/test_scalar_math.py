import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, strategies as st

from pbe_majorant import scalar_math as sm
from pbe_majorant.scalar_math import NonlinearityParams, ScalarDomainError

finite = st.floats(-30, 30, allow_nan=False)


def test_theta_values():
    assert sm.theta(0.0) == 1.0
    assert sm.theta(0.75) == 2.0
    assert sm.theta(-0.75) == 0.5


@given(st.floats(-30, 30))
def test_theta_reciprocal(s):
    assert abs(sm.theta(s) * sm.theta(-s) - 1.0) <= 1e-14


def test_arsinh_negative_large():
    assert np.isclose(sm.arsinh(-1e8), float(mp.asinh(-1e8)), rtol=1e-15)
    assert np.isclose(sm.arsinh(-1e-9), -1e-9, rtol=1e-15)


def test_rho_k():
    assert sm.rho_k(0.0, NonlinearityParams(1.0, 0.0, 0.0)) == 0.0
    assert np.isclose(sm.rho_k(0.12, NonlinearityParams(0.16, 0.0, 0.04)), 1.0, rtol=1e-15)
    with pytest.raises(ScalarDomainError):
        sm.rho_k(0.0, NonlinearityParams(0.0, 0.0, 0.0))


def test_xi0():
    assert sm.xi0(0.0, 0.0) == 0.0
    assert np.isclose(sm.xi0(np.sinh(1.3), 0.3), 1.0, rtol=1e-14)
    for r in (-5.0, -1.0, 2.0, 10.0):
        assert abs(sm.xi0(r, 0.0)) <= abs(r)


def test_fstar_density():
    assert sm.fstar_density(0.0, NonlinearityParams(1.0, 0.0, 0.0)) == -1.0
    r = np.sinh(1.0) * 0.16
    assert np.isclose(sm.fstar_density(r, NonlinearityParams(0.16, 0.0, 0.0)), -0.0588607, atol=5e-8)
    assert sm.fstar_density(0.0, NonlinearityParams(1.0, 2.0, 0.0)) == -1.0
    with pytest.raises(ScalarDomainError):
        sm.fstar_density(0.0, NonlinearityParams(0.0, 0.0, 0.0))


def test_fstar_convex_midpoint(rng):
    p = NonlinearityParams(0.16, 0.7, 0.1)
    a, b = rng.uniform(-50, 50, size=(2, 10_000))
    mid = sm.fstar_density(0.5 * (a + b), p)
    avg = 0.5 * (sm.fstar_density(a, p) + sm.fstar_density(b, p))
    assert np.all(mid <= avg + 1e-12 * np.maximum(1.0, np.abs(avg)))


def test_bregman_values():
    for s in (-3.0, 0.0, 1.7):
        assert sm.bregman_A(s, s) == 0.0
    assert np.isclose(sm.bregman_A(0.0, 2.0), 2.7621957, atol=1e-7)
    a12 = sm.bregman_A(1.0, 2.0)
    # closed-form value cosh 2 - cosh 1 - sinh 1 = 1.0439138...
    assert np.isclose(a12, 1.0439137, atol=2e-7)
    assert 0.5 <= a12 <= 0.5 * (np.sinh(2.0) - np.sinh(1.0)) ** 2


@given(finite, finite)
def test_bregman_against_mpmath(s, t):
    with mp.workdps(400):
        S, T = mp.mpf(s), mp.mpf(t)
        exact = mp.cosh(T) - mp.cosh(S) - (T - S) * mp.sinh(S)
    got = sm.bregman_A(s, t)
    assert abs(got - float(exact)) <= 1e-14 * max(float(exact), 1e-300) + 1e-300


def test_sandwich_bulk(rng):
    s, t = rng.uniform(-8, 8, size=(2, 100_000))
    A = sm.bregman_A(s, t)
    lower = 0.5 * (t - s) ** 2
    upper = 0.5 * (np.sinh(t) - np.sinh(s)) ** 2
    slack = 4e-16 * np.maximum(1.0, upper)
    assert np.all(A >= lower - slack)
    assert np.all(A <= upper + slack)


def test_bregman_overflow_guard():
    with pytest.raises(Exception):
        sm.bregman_A(0.0, 800.0)


def test_forcing_density():
    assert sm.forcing_F_density(0.0, 0.3) == 0.0
    assert np.isclose(sm.forcing_F_density(2.0, 0.16), 0.0868929, atol=1e-7)
    assert sm.forcing_F_density(3.0, 1.0) >= 9.0 / 8.0
    z = np.linspace(-20, 20, 10_000)
    assert np.min(sm.forcing_F_density(z, 1.0) - z ** 2 / 8) >= -1e-15


@given(st.floats(-20, 20), st.floats(-2000, 2000), st.floats(0.01, 2.0))
def test_gap_nonnegative_and_zero_at_match(z, q, k2):
    law = sm.get_nonlinearity("sinh")
    g = law.gap(k2, z, q)
    assert g >= -1e-12 * max(1.0, abs(q * z))
    assert abs(law.gap(k2, z, law.b(k2, z))) <= 1e-12 * max(1.0, k2 * np.cosh(z))


def test_gap_equals_k2_bregman():
    law = sm.get_nonlinearity("sinh")
    k2, z, q = 0.16, 1.3, 2.2
    assert np.isclose(law.gap(k2, z, q), k2 * sm.bregman_A(np.arcsinh(q / k2), z), rtol=1e-13)


def test_gap_zero_where_k_vanishes():
    law = sm.get_nonlinearity("sinh")
    assert law.gap(np.array([0.0]), np.array([3.0]), np.array([0.0]))[0] == 0.0


def test_linear_mode_collapse():
    law = sm.get_nonlinearity("linear")
    z, z0, q = 0.4, -1.1, 2.5
    assert np.isclose(law.bregman(1.0, z, z0), 0.5 * (z - z0) ** 2)
    assert np.isclose(law.gap(1.0, z, q), 0.5 * (q - z) ** 2)


def test_unknown_nonlinearity():
    with pytest.raises(ScalarDomainError):
        sm.get_nonlinearity("cubic")
