import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st

from pbe_majorant import fem
from pbe_majorant.fem import DiscreteProblem, ProblemSpec, SpecError
from pbe_majorant.mesh import OMEGA1, Mesh, rectangle, uniform_refine
from pbe_majorant.presets import example1_g, get_preset, interface_mesh
from pbe_majorant.solver import newton_solve

UNIT = Mesh.from_arrays([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], [[0, 1, 2]])


def plain_poisson(mesh, eps, f):
    """Independent loop assembly of the stiffness matrix and the order-1 load."""
    n = mesh.n_vertices
    K = np.zeros((n, n))
    b = np.zeros(n)
    for k, tri in enumerate(mesh.triangles):
        P = mesh.vertices[tri]
        B = np.array([P[1] - P[0], P[2] - P[0]]).T
        area = 0.5 * abs(np.linalg.det(B))
        Ginv = np.linalg.inv(B).T
        grads = np.array([-Ginv.sum(axis=1), Ginv[:, 0], Ginv[:, 1]])
        K[np.ix_(tri, tri)] += eps[k] * area * grads @ grads.T
        b[tri] += f * area / 3.0
    return K, b


def test_unit_triangle_local_matrix():
    K = fem.assemble_stiffness(UNIT, 1.0).toarray()
    assert np.allclose(K, [[1, -0.5, -0.5], [-0.5, 0.5, 0], [-0.5, 0, 0.5]], atol=1e-15)


def test_row_sums_symmetry_and_linearity():
    mesh = interface_mesh(3.0)
    eps = np.where(mesh.regions == OMEGA1, 1.0, 100.0)
    K = fem.assemble_stiffness(mesh, eps)
    assert np.abs(K.sum(axis=1)).max() <= 1e-12 * np.abs(K).max()
    assert abs(K - K.T).max() == 0
    K2 = fem.assemble_stiffness(mesh, 2 * eps)
    assert abs(K2 - 2 * K).max() <= 1e-12 * abs(K).max()


def test_against_independent_assembly():
    mesh = interface_mesh(4.0)
    eps = np.where(mesh.regions == OMEGA1, 2.0, 80.0)
    K_ref, _ = plain_poisson(mesh, eps, 0.0)
    assert np.allclose(fem.assemble_stiffness(mesh, eps).toarray(), K_ref, rtol=1e-12, atol=1e-12)


def test_residual_zero_for_homogeneous_problem():
    p = DiscreteProblem(ProblemSpec(k1=1.0, k2=1.0), rectangle(4, 4))
    assert np.all(fem.residual(p, np.zeros(p.mesh.n_vertices)) == 0)


def test_residual_k_zero_is_plain_poisson(rng):
    mesh = rectangle(5, 4)
    spec = ProblemSpec(eps1=1.0, eps2=3.0, k1=0.0, k2=0.0, l=lambda xy: np.full(xy.shape[:-1], 2.5))
    p = DiscreteProblem(spec, mesh)
    u = fem.apply_dirichlet(fem.P1Field(mesh, rng.normal(size=mesh.n_vertices))).values
    K, b = plain_poisson(mesh, p.eps, 2.5)
    expect = K @ u - b
    expect[mesh.boundary_vertex_mask] = 0
    assert np.allclose(fem.residual(p, u), expect, atol=1e-12)


def test_residual_vanishes_at_galerkin_solution():
    pr = get_preset("manufactured")
    p = DiscreteProblem(pr.spec, pr.mesh())
    u, rep = newton_solve(p)
    r_exact = fem.residual(p, fem.interpolate(pr.exact_u, p.mesh))
    assert np.abs(fem.residual(p, u)).max() <= 1e-10
    assert np.abs(r_exact).max() > 1e3 * np.abs(fem.residual(p, u)).max()


def test_jacobian_identities():
    mesh = rectangle(4, 4)
    p0 = DiscreteProblem(ProblemSpec(k1=0.0, k2=0.0), mesh)
    u = np.zeros(mesh.n_vertices)
    assert abs(fem.jacobian(p0, u) - p0.stiffness).max() == 0
    p1 = DiscreteProblem(ProblemSpec(k1=1.0, k2=1.0), mesh)
    J = fem.jacobian(p1, u)
    assert abs(J - (p1.stiffness + fem.assemble_mass(mesh))).max() <= 1e-14


@given(st.integers(0, 2 ** 31 - 1))
def test_jacobian_finite_differences(seed):
    rng = np.random.default_rng(seed)
    mesh = rectangle(4, 3)
    spec = ProblemSpec(eps1=1.0, eps2=2.0, k1=0.5, k2=0.8, w=lambda xy: xy[..., 0] - 0.3 * xy[..., 1])
    p = DiscreteProblem(spec, mesh)
    u = fem.apply_dirichlet(fem.P1Field(mesh, rng.uniform(-1, 1, mesh.n_vertices))).values
    d = fem.apply_dirichlet(fem.P1Field(mesh, rng.uniform(-1, 1, mesh.n_vertices))).values
    h = 1e-6
    fd = (fem.residual(p, u + h * d) - fem.residual(p, u - h * d)) / (2 * h)
    Jd = fem.jacobian(p, u) @ d
    Jd[mesh.boundary_vertex_mask] = 0
    assert np.linalg.norm(fd - Jd) <= 1e-6 * np.linalg.norm(Jd)


def test_energy_unit_square():
    p = DiscreteProblem(ProblemSpec(k1=1.0, k2=1.0), rectangle(6, 6))
    assert np.isclose(fem.energy_J(p, np.zeros(p.mesh.n_vertices)), 1.0, rtol=1e-14)


def test_energy_example1_coefficients():
    mesh = interface_mesh(2.0)
    spec = get_preset("example1_2d").spec.with_(g=None)
    p = DiscreteProblem(spec, mesh)
    area1 = mesh.areas[mesh.regions == OMEGA1].sum()
    expect = 0.15 ** 2 * area1 + 0.4 ** 2 * (400.0 - area1)
    assert np.isclose(fem.energy_J(p, np.zeros(mesh.n_vertices)), expect, rtol=1e-13)


def test_galerkin_minimality_and_refinement_decrease():
    pr = get_preset("manufactured")
    mesh = pr.mesh()
    p = DiscreteProblem(pr.spec, mesh)
    u, _ = newton_solve(p)
    J_h = fem.energy_J(p, u)
    assert J_h <= fem.energy_J(p, fem.interpolate(pr.exact_u, mesh))
    fine = uniform_refine(mesh).mesh
    pf = DiscreteProblem(pr.spec, fine)
    uf, _ = newton_solve(pf)
    assert fem.energy_J(pf, uf) <= J_h + 1e-12


def test_interpolate_affine_exact():
    mesh = interface_mesh(4.0)
    f = lambda xy: 3.0 * xy[..., 0] - xy[..., 1] + 2.0
    u = fem.interpolate(f, mesh)
    pts = mesh.corners.mean(axis=1)
    assert np.allclose(u.at_quadrature(fem.quad.rule(1))[:, 0], f(pts), atol=1e-13)
    assert np.allclose(u.gradient, [3.0, -1.0], atol=1e-13)


def test_apply_dirichlet_then_residual():
    pr = get_preset("manufactured")
    p = DiscreteProblem(pr.spec, pr.mesh())
    u = fem.apply_dirichlet(fem.interpolate(lambda xy: 1.0 + xy[..., 0], p.mesh))
    assert np.all(u.values[p.mesh.boundary_vertex_mask] == 0)
    assert np.all(fem.residual(p, u)[p.mesh.boundary_vertex_mask] == 0)


def test_example1_g_closed_form():
    pts = np.array([[-1.0, 6.0], [-1.0, 0.0], [0.0, 6.0], [2.5, -3.0]])
    mesh = Mesh.from_arrays(np.vstack([pts, [[10.0, 10.0]]]), [[0, 1, 4], [1, 2, 4], [2, 3, 4]])
    g = fem.interpolate(example1_g, mesh).values[:4]
    x, y = pts[:, 0], pts[:, 1]
    L = 0.8
    closed = L * (np.exp(-2.0 * ((x + 1.0) ** 2 / 2.25 - 1.0)) - np.exp(-2.0 * ((y - 6.0) ** 2 / 2.25 - 1.0)))
    assert np.allclose(g, closed, rtol=1e-14, atol=1e-14)
    assert g[0] == 0.0


def test_spec_validation():
    with pytest.raises(SpecError):
        ProblemSpec(eps1=0.0)
    with pytest.raises(SpecError):
        ProblemSpec(k1=-1.0)
    with pytest.raises(Exception):
        ProblemSpec(quad_order=4)


def test_field_roundtrip_and_errors(tmp_path):
    mesh = rectangle(3, 3)
    u = fem.P1Field(mesh, np.linspace(0, 1, mesh.n_vertices) ** 3)
    fem.save_field(u, tmp_path / "u.txt")
    assert np.array_equal(fem.load_field(mesh, tmp_path / "u.txt").values, u.values)
    text = (tmp_path / "u.txt").read_text().splitlines()
    text[4] = "abc"
    (tmp_path / "bad.txt").write_text("\n".join(text) + "\n")
    with pytest.raises(fem.FieldFormatError, match="line 5"):
        fem.load_field(mesh, tmp_path / "bad.txt")
    with pytest.raises(fem.FieldFormatError):
        fem.load_field(rectangle(2, 2), tmp_path / "u.txt")


def test_overflow_reported():
    mesh = rectangle(2, 2)
    p = DiscreteProblem(ProblemSpec(k1=1.0, k2=1.0, w=lambda xy: np.full(xy.shape[:-1], 800.0)), mesh)
    with pytest.raises(fem.quad.NonFiniteError):
        fem.residual(p, np.zeros(mesh.n_vertices))


def test_weighted_forms_match_constant_mass():
    mesh = interface_mesh(4.0)
    p = DiscreteProblem(ProblemSpec(), mesh)
    M = fem.weighted_mass(mesh, np.ones(p.rule.wts.shape), p.rule)
    assert abs(M - fem.assemble_mass(mesh)).max() <= 1e-13
    assert isinstance(M, sp.spmatrix) or sp.issparse(M)
