"""P1 Lagrange discretization of -div(eps grad u) + b(u + w) = l, u = 0 on the boundary."""
from __future__ import annotations

from dataclasses import dataclass, replace
from functools import cached_property
from pathlib import Path
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from . import quadrature as quad
from .mesh import OMEGA1, Mesh
from .scalar_math import get_nonlinearity

PointFunction = Callable[[np.ndarray], np.ndarray]


class SpecError(ValueError):
    pass


class FieldFormatError(ValueError):
    pass


@dataclass(frozen=True)
class ProblemSpec:
    """Coefficients and data of the interface problem.

    ``w``, ``l`` and ``g`` are callables on point arrays of shape (..., 2).
    When ``w`` is None the shift is zero.
    """

    eps1: float = 1.0
    eps2: float = 1.0
    k1: float = 0.0
    k2: float = 1.0
    l: Optional[PointFunction] = None
    g: Optional[PointFunction] = None
    w: Optional[PointFunction] = None
    nonlinearity: str = "sinh"
    newton_tol: float = 1e-10
    newton_max_iter: int = 50
    quad_order: int = 5

    def __post_init__(self):
        if not (self.eps1 > 0 and self.eps2 > 0):
            raise SpecError("eps1 and eps2 must be positive")
        if self.k1 < 0 or self.k2 < 0:
            raise SpecError("k1 and k2 must be nonnegative")
        if self.newton_tol <= 0 or self.newton_max_iter < 1:
            raise SpecError("invalid Newton settings")
        quad.rule(self.quad_order)
        get_nonlinearity(self.nonlinearity)

    @property
    def law(self):
        return get_nonlinearity(self.nonlinearity)

    def with_(self, **kw) -> "ProblemSpec":
        return replace(self, **kw)

    def eps_per_element(self, mesh: Mesh) -> np.ndarray:
        return np.where(mesh.regions == OMEGA1, self.eps1, self.eps2).astype(float)

    def k2_per_element(self, mesh: Mesh) -> np.ndarray:
        return np.where(mesh.regions == OMEGA1, self.k1 ** 2, self.k2 ** 2).astype(float)

    def source(self, xy: np.ndarray) -> np.ndarray:
        if self.l is None:
            return np.zeros(xy.shape[:-1])
        return np.broadcast_to(np.asarray(self.l(xy), float), xy.shape[:-1])


@dataclass(frozen=True, eq=False)
class P1Field:
    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.mesh.n_vertices,):
            raise ValueError(f"P1Field needs {self.mesh.n_vertices} values, got {v.shape}")
        object.__setattr__(self, "values", v)

    @cached_property
    def gradient(self) -> np.ndarray:
        """(nt, 2) elementwise gradient."""
        return np.einsum("nk,nkd->nd", self.values[self.mesh.triangles], self.mesh.grad_hat)

    def at_quadrature(self, q: quad.QuadRule) -> np.ndarray:
        return self.values[self.mesh.triangles] @ q.points.T

    def vertex_on_boundary_zero(self) -> bool:
        return bool(np.all(self.values[self.mesh.boundary_vertex_mask] == 0))


def interpolate(function: PointFunction, mesh: Mesh) -> P1Field:
    return P1Field(mesh, np.asarray(function(mesh.vertices), dtype=float))


def apply_dirichlet(field_: P1Field, boundary_value: float = 0.0) -> P1Field:
    v = field_.values.copy()
    v[field_.mesh.boundary_vertex_mask] = boundary_value
    return P1Field(field_.mesh, v)


def zero_field(mesh: Mesh) -> P1Field:
    return P1Field(mesh, np.zeros(mesh.n_vertices))


# ---------------------------------------------------------------------------
# linear forms
# ---------------------------------------------------------------------------

def _scatter_matrix(mesh: Mesh, local: np.ndarray) -> sp.csr_matrix:
    t = mesh.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    n = mesh.n_vertices
    return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))


def _scatter_vector(mesh: Mesh, local: np.ndarray) -> np.ndarray:
    return np.bincount(mesh.triangles.ravel(), weights=local.ravel(), minlength=mesh.n_vertices)


def local_stiffness(mesh: Mesh, eps_elem) -> np.ndarray:
    if np.any(mesh.areas <= 0):
        raise quad.QuadratureError(f"degenerate triangle {int(np.argmin(mesh.areas))}")
    G = mesh.grad_hat
    eps_elem = np.broadcast_to(np.asarray(eps_elem, float), (mesh.n_triangles,))
    return (eps_elem * mesh.areas)[:, None, None] * np.einsum("nid,njd->nij", G, G)


def assemble_stiffness(mesh: Mesh, eps_elem) -> sp.csr_matrix:
    """Global matrix of a(u, v) = int eps grad u . grad v (no boundary conditions)."""
    return _scatter_matrix(mesh, local_stiffness(mesh, eps_elem))


def assemble_mass(mesh: Mesh, coeff_elem=1.0) -> sp.csr_matrix:
    """Consistent P1 mass matrix weighted by an elementwise constant."""
    c = np.broadcast_to(np.asarray(coeff_elem, float), (mesh.n_triangles,))
    ref = (np.ones((3, 3)) + np.eye(3)) / 12.0
    return _scatter_matrix(mesh, (c * mesh.areas)[:, None, None] * ref)


def weighted_mass(mesh: Mesh, values_q: np.ndarray, q) -> sp.csr_matrix:
    """Matrix of int c(x) phi_i phi_j with c sampled at the points of ``q`` (rule or QuadSet)."""
    return _scatter_matrix(mesh, quad.as_quadset(mesh, q).local_mass(mesh, values_q))


def weighted_load(mesh: Mesh, values_q: np.ndarray, q) -> np.ndarray:
    """Vector of int f(x) phi_i with f sampled at the points of ``q`` (rule or QuadSet)."""
    return _scatter_vector(mesh, quad.as_quadset(mesh, q).local_moments(mesh, values_q))


# ---------------------------------------------------------------------------
# discrete problem on one mesh
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class DiscreteProblem:
    """ProblemSpec bound to a mesh, with the shift w given by its vertex values.

    Nonlinear integrals use the rule ``quad_order`` on a per-element
    subdivision chosen so that w and arsinh(l / k^2) vary by at most 0.5 per
    subtriangle (``quad_levels`` overrides it with a fixed depth).
    """

    spec: ProblemSpec
    mesh: Mesh
    w: np.ndarray = None
    quad_order: int = None
    quad_levels: Optional[object] = None

    def __post_init__(self):
        if self.w is None:
            self.w = (np.zeros(self.mesh.n_vertices) if self.spec.w is None
                      else np.asarray(self.spec.w(self.mesh.vertices), float))
        self.w = np.asarray(self.w, dtype=float)
        if self.w.shape != (self.mesh.n_vertices,):
            raise ValueError("w must have one value per vertex")
        if self.quad_order is None:
            self.quad_order = self.spec.quad_order
        if self.quad_levels is None:
            self.quad_levels = self._auto_levels()

    def _auto_levels(self) -> np.ndarray:
        wt = self.w[self.mesh.triangles]
        levels = quad.refinement_for_span(wt.max(axis=1) - wt.min(axis=1))
        if self.spec.l is None:
            return levels
        # sample the source on the level-2 lattice of each element
        lam = np.unique(quad._subtriangles(2).reshape(-1, 3), axis=0)
        xy = np.einsum("pk,nkd->npd", lam, self.mesh.corners)
        k2 = self.k2
        scale = np.where(k2 > 0, k2, 1.0)[:, None]
        s = np.arcsinh(np.asarray(self.spec.source(xy), float) / scale)
        return np.maximum(levels, quad.refinement_for_span(s.max(axis=1) - s.min(axis=1)))

    @property
    def law(self):
        return self.spec.law

    @cached_property
    def rule(self) -> quad.QuadSet:
        return quad.quad_set(self.mesh, self.quad_order, self.quad_levels)

    @property
    def qelem(self) -> np.ndarray:
        return self.rule.elem

    @cached_property
    def eps(self) -> np.ndarray:
        return self.spec.eps_per_element(self.mesh)

    @cached_property
    def k2(self) -> np.ndarray:
        return self.spec.k2_per_element(self.mesh)

    @cached_property
    def k2_q(self) -> np.ndarray:
        return self.k2[self.qelem][:, None]

    @cached_property
    def eps_q(self) -> np.ndarray:
        return self.eps[self.qelem][:, None]

    @cached_property
    def stiffness(self) -> sp.csr_matrix:
        return assemble_stiffness(self.mesh, self.eps)

    @cached_property
    def qpoints(self) -> np.ndarray:
        return self.rule.points(self.mesh)

    @cached_property
    def l_q(self) -> np.ndarray:
        return np.ascontiguousarray(self.spec.source(self.qpoints), dtype=float)

    @cached_property
    def load(self) -> np.ndarray:
        return weighted_load(self.mesh, self.l_q, self.rule)

    @cached_property
    def free(self) -> np.ndarray:
        return np.flatnonzero(~self.mesh.boundary_vertex_mask)

    def sample(self, u: np.ndarray) -> np.ndarray:
        """P1 vertex values at the quadrature points."""
        return self.rule.sample(u, self.mesh.triangles)

    @cached_property
    def w_q(self) -> np.ndarray:
        return self.sample(self.w)

    def z_q(self, u: np.ndarray) -> np.ndarray:
        """u + w at quadrature points, with the overflow guard applied."""
        z = self.sample(u) + self.w_q
        quad.check_argument(z, self.qelem)
        return z

    def nonlinear_values(self, u: np.ndarray) -> np.ndarray:
        return self.law.b(self.k2_q, self.z_q(u))

    def integrate(self, values: np.ndarray) -> np.ndarray:
        """Per-element integrals of values sampled at the quadrature points."""
        return self.rule.element_integrals(self.mesh, values)


def _values(u) -> np.ndarray:
    return u.values if isinstance(u, P1Field) else np.asarray(u, dtype=float)


def residual(problem: DiscreteProblem, u) -> np.ndarray:
    """a(u, phi_i) + int b(u + w) phi_i - int l phi_i, zero on Dirichlet rows."""
    u = _values(u)
    r = problem.stiffness @ u + weighted_load(problem.mesh, problem.nonlinear_values(u), problem.rule)
    r -= problem.load
    r[problem.mesh.boundary_vertex_mask] = 0.0
    return r


def jacobian(problem: DiscreteProblem, u) -> sp.csr_matrix:
    """a(., .) + int b'(u + w) phi_i phi_j (no boundary conditions applied)."""
    u = _values(u)
    db = problem.law.db(problem.k2_q, problem.z_q(u))
    return (problem.stiffness + weighted_mass(problem.mesh, db, problem.rule)).tocsr()


def energy_J(problem: DiscreteProblem, u) -> float:
    """int eps/2 |grad u|^2 + B(u + w) - l u."""
    u = _values(u)
    mesh, q = problem.mesh, problem.rule
    grad = np.einsum("nk,nkd->nd", u[mesh.triangles], mesh.grad_hat)
    quadratic = 0.5 * problem.eps * np.sum(grad ** 2, axis=1) * mesh.areas
    dens = problem.law.B(problem.k2_q, problem.z_q(u)) - problem.l_q * problem.sample(u)
    return float(np.sum(quadratic + problem.integrate(dens)))


def energy_norm(mesh: Mesh, eps_elem, grad: np.ndarray) -> float:
    """sqrt(int eps |grad|^2) for an elementwise-constant gradient field."""
    return float(np.sqrt(np.sum(eps_elem * np.sum(grad ** 2, axis=1) * mesh.areas)))


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def save_field(field_: P1Field, path) -> None:
    lines = ["PBEFIELD 1", str(len(field_.values))] + [repr(float(x)) for x in field_.values]
    Path(path).write_text("\n".join(lines) + "\n")


def load_field(mesh: Mesh, path) -> P1Field:
    raw = Path(path).read_text().splitlines()
    if not raw or raw[0].strip() != "PBEFIELD 1":
        raise FieldFormatError("line 1: header: expected 'PBEFIELD 1'")
    try:
        n = int(raw[1])
    except (IndexError, ValueError):
        raise FieldFormatError("line 2: count: missing or not an integer") from None
    if n != mesh.n_vertices:
        raise FieldFormatError(f"line 2: count: {n} values for a mesh with {mesh.n_vertices} vertices")
    vals = []
    for k, row in enumerate(raw[2:2 + n]):
        try:
            vals.append(float(row))
        except ValueError:
            raise FieldFormatError(f"line {k + 3}: value: cannot parse {row!r}") from None
    if len(vals) != n:
        raise FieldFormatError(f"line {len(raw) + 1}: value: expected {n} values")
    return P1Field(mesh, np.array(vals))
