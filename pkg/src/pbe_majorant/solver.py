"""Damped Newton solver, SPD linear solves, and the regularizing shift w = g - z."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fem import (DiscreteProblem, P1Field, ProblemSpec, apply_dirichlet, assemble_stiffness,
                  energy_J, jacobian, residual, weighted_load)
from .mesh import OMEGA2, Mesh, uniform_refine
from .quadrature import NonFiniteError, physical_points, rule
from .scalar_math import ScalarDomainError

DIRECT_LIMIT = 200_000
ARMIJO_C = 1e-4
MIN_STEP = 1e-8


class SolverError(RuntimeError):
    pass


class MaxIterationsError(SolverError):
    pass


class LineSearchError(SolverError):
    pass


class LinearSolveError(SolverError):
    pass


def spd_solve(A: sp.spmatrix, b: np.ndarray, rtol: float = 1e-10) -> np.ndarray:
    """Solve an SPD system: sparse LU below DIRECT_LIMIT unknowns, AMG-preconditioned CG above."""
    A = sp.csc_matrix(A)
    n = A.shape[0]
    if n == 0:
        return np.zeros(0)
    if n < DIRECT_LIMIT:
        try:
            x = spla.splu(A).solve(b)
        except RuntimeError as exc:
            raise LinearSolveError(f"sparse factorization failed: {exc}") from exc
    else:
        import pyamg

        ml = pyamg.smoothed_aggregation_solver(A.tocsr(), symmetry="symmetric")
        x, info = spla.cg(A, b, rtol=rtol, maxiter=2000, M=ml.aspreconditioner(cycle="V"))
        if info != 0:
            raise LinearSolveError(f"conjugate gradients did not converge (info={info})")
    if not np.all(np.isfinite(x)):
        raise LinearSolveError("linear solve produced non-finite values")
    return x


@dataclass
class NewtonReport:
    rows: list = field(default_factory=list)  # (iteration, residual, damping, J)
    converged: bool = False

    @property
    def iterations(self) -> int:
        return len(self.rows) - 1

    @property
    def residuals(self) -> np.ndarray:
        return np.array([r[1] for r in self.rows])

    @property
    def energies(self) -> np.ndarray:
        return np.array([r[3] for r in self.rows])

    @property
    def dampings(self) -> np.ndarray:
        return np.array([r[2] for r in self.rows[1:]])

    @property
    def final_residual(self) -> float:
        return float(self.rows[-1][1])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "residual", "damping", "J"])
        for it, res, damp, J in self.rows:
            w.writerow([it, f"{res:.16e}", "" if damp is None else f"{damp:.6g}", f"{J:.16e}"])
        return buf.getvalue()


def residual_norm(problem: DiscreteProblem, r: np.ndarray) -> float:
    rf = r[problem.free]
    return float(np.linalg.norm(rf) / np.sqrt(max(len(rf), 1)))


def _safe_energy(problem, u) -> float:
    try:
        return energy_J(problem, u)
    except (NonFiniteError, ScalarDomainError, FloatingPointError):
        return np.inf


def newton_solve(problem: DiscreteProblem, initial: P1Field | np.ndarray | None = None,
                 damped: bool = True, polish: int = 3) -> tuple[P1Field, NewtonReport]:
    """Minimize J over the P1 space with homogeneous Dirichlet values.

    Backtracking (halving) on J with Armijo parameter 1e-4.  After the
    tolerance is met, up to ``polish`` further full steps are taken while
    they reduce the residual tenfold, which drives the residual to
    rounding level for the patch equilibration.
    """
    mesh = problem.mesh
    tol, max_iter = problem.spec.newton_tol, problem.spec.newton_max_iter
    u = np.zeros(mesh.n_vertices) if initial is None else np.array(
        initial.values if isinstance(initial, P1Field) else initial, dtype=float)
    if np.any(u[mesh.boundary_vertex_mask] != 0):
        raise SolverError("initial guess violates the Dirichlet condition")
    free = problem.free
    r = residual(problem, u)
    rn = residual_norm(problem, r)
    J = energy_J(problem, u)
    report = NewtonReport([(0, rn, None, J)])
    extra = 0
    it = 0
    while True:
        if rn <= tol:
            report.converged = True
            if extra >= polish or rn == 0.0:
                break
        if it >= max_iter:
            if report.converged:
                break
            raise MaxIterationsError(f"Newton did not converge in {max_iter} iterations (residual {rn:.3e})")
        it += 1
        A = jacobian(problem, u)[free][:, free]
        delta = np.zeros_like(u)
        delta[free] = spd_solve(A, -r[free])
        slope = float(r[free] @ delta[free])
        alpha = 1.0
        while True:
            trial = u + alpha * delta
            J_trial = _safe_energy(problem, trial)
            if not damped:
                break
            if J_trial <= J + ARMIJO_C * alpha * slope:
                break
            # at rounding level, J cannot resolve the decrease; use the residual instead
            if np.isfinite(J_trial) and abs(alpha * slope) <= 1e-13 * max(1.0, abs(J)):
                if residual_norm(problem, residual(problem, trial)) < rn:
                    break
            alpha *= 0.5
            if alpha < MIN_STEP:
                raise LineSearchError(f"line search failed at iteration {it}")
        if not np.isfinite(J_trial):
            raise SolverError(f"Newton iterate overflowed at iteration {it}")
        r_new = residual(problem, trial)
        rn_new = residual_norm(problem, r_new)
        if report.converged:
            # polishing: stop once the residual stops dropping
            if rn_new > 0.1 * rn:
                if rn_new < rn:
                    u, r, rn, J = trial, r_new, rn_new, J_trial
                    report.rows.append((it, rn, alpha, J))
                break
            extra += 1
        u, r, rn, J = trial, r_new, rn_new, J_trial
        report.rows.append((it, rn, alpha, J))
    return P1Field(mesh, u), report


def solve_linear_poisson(mesh: Mesh, eps_elem, rhs_q, q) -> np.ndarray:
    """-div(eps grad z) = f with z = 0 on the boundary; f given at quadrature points."""
    K = assemble_stiffness(mesh, eps_elem)
    b = weighted_load(mesh, rhs_q, q)
    free = np.flatnonzero(~mesh.boundary_vertex_mask)
    z = np.zeros(mesh.n_vertices)
    z[free] = spd_solve(K[free][:, free], b[free])
    return z


def solve_reference(spec: ProblemSpec, fine_mesh: Mesh, quad_order: int | None = None) -> P1Field:
    """Linear interface problem -div(eps grad z) = -b(g) + l, z = 0 on the boundary."""
    q = rule(quad_order or spec.quad_order)
    xy = physical_points(fine_mesh, q)
    k2 = spec.k2_per_element(fine_mesh)[:, None]
    g = np.zeros(xy.shape[:2]) if spec.g is None else np.asarray(spec.g(xy), float)
    rhs = -spec.law.b(k2, g) + spec.source(xy)
    z = solve_linear_poisson(fine_mesh, spec.eps_per_element(fine_mesh), rhs, q)
    return P1Field(fine_mesh, z)


class MeshFunction:
    """Point evaluation of a P1 field on an arbitrary (non-nested) query set."""

    def __init__(self, field_: P1Field):
        from matplotlib.tri import LinearTriInterpolator, Triangulation

        mesh = field_.mesh
        self.mesh = mesh
        self.values = field_.values
        tri = Triangulation(mesh.vertices[:, 0], mesh.vertices[:, 1], mesh.triangles)
        self._interp = LinearTriInterpolator(tri, field_.values)
        self._tree = None

    def __call__(self, xy: np.ndarray) -> np.ndarray:
        xy = np.asarray(xy, float)
        shape = xy.shape[:-1]
        pts = xy.reshape(-1, 2)
        out = np.ma.masked_invalid(self._interp(pts[:, 0], pts[:, 1]))
        vals = np.ma.filled(out, np.nan).astype(float)
        miss = ~np.isfinite(vals)
        if miss.any():
            if self._tree is None:
                from scipy.spatial import cKDTree

                self._tree = cKDTree(self.mesh.vertices)
            _, idx = self._tree.query(pts[miss])
            vals[miss] = self.values[idx]
        return vals.reshape(shape)


@dataclass
class Shift:
    """w = g - z with z the linear reference solution on a uniformly refined mesh."""

    spec: ProblemSpec
    z: P1Field

    def __post_init__(self):
        self._z = MeshFunction(self.z)

    def __call__(self, xy: np.ndarray) -> np.ndarray:
        g = np.zeros(np.shape(xy)[:-1]) if self.spec.g is None else np.asarray(self.spec.g(xy), float)
        return g - self._z(xy)


def build_shift(spec: ProblemSpec, mesh0: Mesh, levels: int = 3) -> Shift:
    """Regularizing shift from the linear problem solved on ``levels`` uniform refinements of mesh0."""
    fine = uniform_refine(mesh0, levels).mesh if levels > 0 else mesh0
    return Shift(spec, solve_reference(spec, fine))


@dataclass
class LinfReport:
    max_abs_u: float
    bound: float
    w_inf_omega2: float
    ok: bool
    violating_vertex: int | None


def linf_bound_check(u: P1Field, w: np.ndarray, tolerance: float = 0.05) -> LinfReport:
    """Check max|u_h| <= (1 + tolerance) ||w_h||_inf over the vertices of Omega_2."""
    mesh = u.mesh
    in2 = np.zeros(mesh.n_vertices, bool)
    in2[mesh.triangles[mesh.regions == OMEGA2].ravel()] = True
    w_inf = float(np.max(np.abs(np.asarray(w)[in2]))) if in2.any() else 0.0
    bound = (1.0 + tolerance) * w_inf
    absu = np.abs(u.values)
    worst = int(np.argmax(absu))
    ok = bool(absu[worst] <= bound)
    return LinfReport(float(absu[worst]), bound, w_inf, ok, None if ok else worst)


def dirichlet_interpolant(function, mesh: Mesh) -> P1Field:
    return apply_dirichlet(P1Field(mesh, np.asarray(function(mesh.vertices), float)))
