import dataclasses

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pbe_majorant import estimator as est
from pbe_majorant import fem, scalar_math as sm
from pbe_majorant.amr import solve_level
from pbe_majorant.fem import DiscreteProblem
from pbe_majorant.flux import FluxField, P1VectorFlux, equilibrated_flux
from pbe_majorant.mesh import OMEGA1, rectangle
from pbe_majorant.presets import get_preset, interface_mesh
from pbe_majorant.solver import newton_solve


@pytest.fixture(scope="module")
def manufactured_run():
    pr = get_preset("manufactured")
    p = DiscreteProblem(pr.spec, pr.mesh())
    u, _ = newton_solve(p)
    y = equilibrated_flux(p, u)
    maj = est.majorant(p, u, y)
    ref = est.exact_reference(p, pr.exact_u, pr.exact_grad)
    rep = est.efficiency_and_bounds(est.true_errors(p, u, y, ref), maj)
    return dict(pr=pr, p=p, u=u, y=y, maj=maj, ref=ref, rep=rep)


def test_exact_pair_on_trivial_preset():
    pr = get_preset("trivial")
    p = DiscreteProblem(pr.spec, pr.mesh())
    v = fem.zero_field(p.mesh)
    y = FluxField(p.mesh, np.zeros(len(p.mesh.edges)))
    maj = est.majorant(p, v, y)
    assert maj.total_M2 == 0.0 and est.minorant_cen(p, v, y) == 0.0
    rep = est.efficiency_and_bounds(
        est.true_errors(p, v, y, est.exact_reference(p, pr.exact_u, pr.exact_grad)), maj)
    for name in ("energy_error", "dual_error", "L2_error", "DF_primal", "DF_dual", "primal_M2", "dual_M2"):
        assert getattr(rep, name) == 0.0
    ident = est.identity_check(maj, rep)
    assert ident.identity == 0.0 and ident.prager_synge == 0.0 and ident.df_relation == 0.0
    assert rep.I_CEN_up is None and rep.I_CEN_low is None and rep.RE_up is None


def test_pointwise_density():
    # eps = k^2 = 1, w = l = 0, v = 0, grad v = 0, y* = 0, div y* = sinh(1)
    eta2 = sm.NONLINEARITIES["sinh"].gap(1.0, 0.0, np.sinh(1.0))
    assert np.isclose(eta2, 1 + np.sinh(1.0) - np.cosh(1.0), rtol=1e-15)
    assert abs(eta2 - 0.6321206) <= 1e-7


def test_pointwise_dual_bregman():
    assert abs(sm.bregman_A(1.0, 2.0) - 1.0439139) <= 1e-7


def test_minorant_vanishes_for_elementwise_flux(manufactured_run):
    p, u = manufactured_run["p"], manufactured_run["u"]

    class Elementwise:
        def evaluate(self, elements, xy):
            g = (p.eps[:, None] * u.gradient)[elements]
            return np.broadcast_to(g.reshape(g.shape[:1] + (1,) * (xy.ndim - 2) + (2,)), xy.shape)

    assert est.minorant_cen(p, u, Elementwise()) == 0.0


def test_breakdown_invariants(manufactured_run):
    maj, rep = manufactured_run["maj"], manufactured_run["rep"]
    assert abs(maj.total_M2 - maj.flux_term - maj.DF_term) <= 1e-12 * maj.total_M2
    assert abs(maj.per_element_eta2.sum() - maj.total_M2) <= 1e-12 * maj.total_M2
    assert maj.per_element_eta2.min() >= -1e-12
    assert abs(rep.primal_M2 - 0.5 * rep.energy_error ** 2 - rep.DF_primal) <= 1e-12 * rep.primal_M2
    assert abs(rep.dual_M2 - 0.5 * rep.dual_error ** 2 - rep.DF_dual) <= 1e-12 * rep.dual_M2
    assert rep.DF_primal >= -1e-12 and rep.DF_dual >= -1e-12


def test_guaranteed_bounds_and_identity(manufactured_run):
    maj, rep = manufactured_run["maj"], manufactured_run["rep"]
    assert rep.CEN ** 2 <= 2 * maj.total_M2 * (1 + 1e-10)
    assert est.minorant_cen(manufactured_run["p"], manufactured_run["u"], manufactured_run["y"]) <= rep.CEN
    ident = est.identity_check(maj, rep)
    assert ident.identity_rel <= 1e-3
    assert ident.prager_synge <= 1e-10 * rep.CEN ** 2


def test_df_primal_sandwich(manufactured_run):
    rep = manufactured_run["rep"]
    assert rep.L2_half_v_minus_u <= rep.DF_primal <= rep.L2_half_sinh_gap


def test_forcing_lower_bound(manufactured_run):
    maj, rep = manufactured_run["maj"], manufactured_run["rep"]
    lower = rep.energy_error ** 2 / 8 + rep.dual_error ** 2 / 8 + rep.L2_half_v_minus_u / 4
    assert lower <= 0.5 * maj.total_M2


def test_cea_surrogate(manufactured_run):
    pr, p, u, rep = manufactured_run["pr"], manufactured_run["p"], manufactured_run["u"], manufactured_run["rep"]
    Ih = fem.interpolate(pr.exact_u, p.mesh)
    y = manufactured_run["y"]
    rep_i = est.true_errors(p, Ih, y, manufactured_run["ref"])
    assert rep.energy_error ** 2 <= rep_i.energy_error ** 2 + 2 * rep_i.L2_half_sinh_gap


def test_relative_bound_arithmetic(manufactured_run):
    maj = dataclasses.replace(manufactured_run["maj"], total_M2=0.5, v_energy=10.0)
    rep = est.efficiency_and_bounds(dataclasses.replace(manufactured_run["rep"]), maj)
    assert abs(rep.RE_up - 1.0 / 9.0) <= 1e-15
    maj_bad = dataclasses.replace(maj, total_M2=50.0)
    assert est.efficiency_and_bounds(dataclasses.replace(manufactured_run["rep"]), maj_bad).RE_up is None


def test_quadratic_mode_collapse():
    from pbe_majorant.verify import linear_collapse_terms

    rep, half_div, _ = linear_collapse_terms(nx=24)
    assert abs(rep.DF_primal - rep.L2_half_v_minus_u) <= 1e-10 * rep.L2_half_v_minus_u
    assert abs(rep.DF_dual - half_div) <= 1e-10 * half_div
    assert rep.identity_residual <= 1e-10


def test_constraint_violation_raises():
    pr = get_preset("case_b_2d")
    mesh = interface_mesh(4.0)
    p = DiscreteProblem(pr.spec, mesh, np.zeros(mesh.n_vertices))
    v = fem.zero_field(mesh)
    y = FluxField(mesh, np.zeros(len(mesh.edges)))
    assert est.majorant(p, v, y).total_M2 == 0.0
    e = mesh.tri_edges[np.flatnonzero(mesh.regions == OMEGA1)[0], 0]
    ybad = FluxField(mesh, np.where(np.arange(len(mesh.edges)) == e, 1e-3, 0.0))
    with pytest.raises(est.ConstraintViolation):
        est.majorant(p, v, ybad)


def test_non_nested_reference_rejected(manufactured_run):
    p = manufactured_run["p"]
    other = DiscreteProblem(p.spec, rectangle(5, 5))
    ref = est.discrete_reference(other, fem.zero_field(other.mesh), levels=1)
    with pytest.raises(est.ReferenceError):
        est.true_errors(p, manufactured_run["u"], manufactured_run["y"], ref)


def test_gradient_average_flux_accepted(manufactured_run):
    from pbe_majorant.flux import gradient_average

    p, u = manufactured_run["p"], manufactured_run["u"]
    ya = gradient_average(p.mesh, p.eps, u)
    maj = est.majorant(p, u, ya)
    assert maj.total_M2 > manufactured_run["maj"].total_M2
    assert isinstance(ya, P1VectorFlux)


@given(st.floats(-30, 30), st.floats(-1e6, 1e6), st.floats(1e-3, 10))
def test_gap_density_nonnegative(z, q, k2):
    assert sm.NONLINEARITIES["sinh"].gap(k2, z, q) >= -1e-12
    assert sm.NONLINEARITIES["sinh"].bregman(k2, z, z / 2) >= -1e-12


def test_example1_level0_identity_and_indices(example1_level0):
    d = example1_level0
    ref = est.discrete_reference(d["problem"], d["u"])
    rep = est.efficiency_and_bounds(est.true_errors(d["problem"], d["u"], d["y"], ref), d["maj"])
    assert rep.identity_residual <= 0.02
    assert 0.67 <= rep.I_CEN_low <= 0.712
    assert rep.CEN ** 2 <= 2 * d["maj"].total_M2 * 1.02
    assert set(est.report_fields()) >= {"energy_error", "I_E_up", "RCEN_low"}
