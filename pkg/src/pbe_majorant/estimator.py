"""Computable majorant and minorant, true errors against a reference, and derived bounds.

Notation: |||q|||^2 = int eps |q|^2 for gradients and |||y|||_*^2 = int |y|^2 / eps
for fluxes.  For an approximation pair (v, y*) the majorant is

    M^2 = 1/2 |||eps grad v - y*|||_*^2 + int gap(v + w, div y* + l)

where gap(z, q) = B(z) + B*(q) - q z is the Fenchel-Young gap of the
nonlinearity (k^2 A(arsinh(q/k^2), z) in the sinh case).  The same gap with
z = u + w gives the dual error term, and the Bregman distance of B gives
the primal one.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Callable, Optional

import numpy as np

from . import quadrature as quad
from .fem import DiscreteProblem, P1Field
from .mesh import Hierarchy, Mesh, uniform_refine
from .solver import newton_solve

CONSTRAINT_TOL = 1e-8


class ConstraintViolation(ValueError):
    def __init__(self, element: int, value: float):
        super().__init__(f"div y* + l = {value:.3e} violates the k = 0 constraint at element {element}")
        self.element = element
        self.value = value


class ReferenceError(ValueError):
    pass


def _flux_at_quadrature(problem: DiscreteProblem, y) -> np.ndarray:
    return y.evaluate(problem.qelem, problem.qpoints)


@dataclass
class MajorantBreakdown:
    total_M2: float
    flux_term: float
    DF_term: float
    per_element_eta2: np.ndarray
    per_element_flux: np.ndarray      # 1/2 |||eps grad v - y*|||_*^2 per element
    per_element_DF: np.ndarray
    per_patch_indicator: np.ndarray   # sqrt(2 sum_{K in O_i} eta^2_K)
    v_energy: float                   # |||grad v|||
    y_dual_norm: float                # |||y*|||_*

    @property
    def flux_norm(self) -> float:
        """|||eps grad v - y*|||_*."""
        return float(np.sqrt(2.0 * self.flux_term))

    @property
    def DF_share(self) -> float:
        return self.DF_term / self.total_M2 if self.total_M2 > 0 else 0.0


def patch_sum(mesh: Mesh, per_element: np.ndarray) -> np.ndarray:
    """Sum of an elementwise quantity over every vertex patch."""
    return np.bincount(mesh.triangles.ravel(), weights=np.repeat(per_element, 3),
                       minlength=mesh.n_vertices)


def check_constraint(problem: DiscreteProblem, div_y: np.ndarray, tol: float = CONSTRAINT_TOL) -> float:
    """Max |div y* + l| over quadrature points of k = 0 elements; raises beyond tol."""
    rows = np.flatnonzero(problem.k2_q[:, 0] == 0)
    if len(rows) == 0:
        return 0.0
    res = np.abs(div_y[problem.qelem[rows], None] + problem.l_q[rows])
    worst = np.unravel_index(np.argmax(res), res.shape)
    val = float(res[worst])
    if val > tol:
        raise ConstraintViolation(int(problem.qelem[rows[worst[0]]]), val)
    return val


def _flux_defect_elements(problem: DiscreteProblem, v: P1Field, y) -> tuple[np.ndarray, np.ndarray]:
    """Per-element 1/2 |||eps grad v - y*|||_*^2 and |||y*|||_*^2."""
    yq = _flux_at_quadrature(problem, y)
    eps_q = problem.eps_q
    diff = (problem.eps[:, None] * v.gradient)[problem.qelem][:, None, :] - yq
    flux_K = problem.integrate(np.sum(diff ** 2, axis=-1) / (2.0 * eps_q))
    ynorm_K = problem.integrate(np.sum(yq ** 2, axis=-1) / eps_q)
    return flux_K, ynorm_K


def majorant(problem: DiscreteProblem, v: P1Field, y) -> MajorantBreakdown:
    mesh = problem.mesh
    eps = problem.eps
    flux_K, ynorm_K = _flux_defect_elements(problem, v, y)
    div_y = y.divergence()
    check_constraint(problem, div_y)
    qv = div_y[problem.qelem][:, None] + problem.l_q
    gap = problem.law.gap(problem.k2_q, problem.z_q(v.values), qv)
    DF_K = problem.integrate(gap)
    eta2 = flux_K + DF_K
    v_energy = float(np.sqrt(np.sum(eps * np.sum(v.gradient ** 2, axis=1) * mesh.areas)))
    return MajorantBreakdown(
        total_M2=float(np.sum(eta2)), flux_term=float(np.sum(flux_K)), DF_term=float(np.sum(DF_K)),
        per_element_eta2=eta2, per_element_flux=flux_K, per_element_DF=DF_K,
        per_patch_indicator=np.sqrt(np.maximum(2.0 * patch_sum(mesh, eta2), 0.0)),
        v_energy=v_energy, y_dual_norm=float(np.sqrt(np.sum(ynorm_K))))


def minorant_cen(problem: DiscreteProblem, v: P1Field, y) -> float:
    """(1/sqrt 2) |||eps grad v - y*|||_*, a guaranteed lower bound of the CEN error."""
    flux_K, _ = _flux_defect_elements(problem, v, y)
    return float(np.sqrt(np.sum(flux_K)))


# ---------------------------------------------------------------------------
# references
# ---------------------------------------------------------------------------

@dataclass
class Reference:
    """Stand-in for the exact solution on a mesh nested in (or equal to) the level mesh.

    Either ``u`` (P1 on ``hierarchy.mesh``) or the closed-form triple
    ``u_fun``/``grad_fun`` is given.  The dual solution is p* = eps grad u.
    """

    hierarchy: Hierarchy
    problem: DiscreteProblem                 # problem on the evaluation mesh
    u: Optional[P1Field] = None
    u_fun: Optional[Callable] = None
    grad_fun: Optional[Callable] = None
    newton_report: object = None
    label: str = ""

    @property
    def mesh(self) -> Mesh:
        return self.hierarchy.mesh

    @property
    def exact(self) -> bool:
        return self.u_fun is not None


def discrete_reference(problem: DiscreteProblem, v: P1Field, levels: int = 2,
                       quad_order: int | None = None) -> Reference:
    """Galerkin solution on the level mesh refined uniformly ``levels`` times."""
    hier = uniform_refine(problem.mesh, levels)
    w_fine = hier.prolong(problem.w)
    fine = DiscreteProblem(problem.spec, hier.mesh, w_fine, quad_order or problem.quad_order)
    u, rep = newton_solve(fine, hier.prolong(v.values), polish=1)
    return Reference(hier, fine, u=u, newton_report=rep, label=f"nested reference, {levels} uniform levels finer")


def exact_reference(problem: DiscreteProblem, u_fun: Callable, grad_fun: Callable,
                    quad_order: int = 7) -> Reference:
    """Closed-form solution (same shift w), evaluated with a high-order rule on the level mesh."""
    hier = Hierarchy(problem.mesh, problem.mesh, ())
    evalp = DiscreteProblem(problem.spec, problem.mesh, problem.w, quad_order)
    return Reference(hier, evalp, u_fun=u_fun, grad_fun=grad_fun, label="closed-form solution")


# ---------------------------------------------------------------------------
# true errors
# ---------------------------------------------------------------------------

@dataclass
class ErrorReport:
    n_elements: int
    energy_error: float          # |||grad (v - u)|||
    dual_error: float            # |||y* - p*|||_*
    L2_error: float
    DF_primal: float
    DF_dual: float
    primal_M2: float
    dual_M2: float
    u_energy: float              # |||grad u|||
    p_dual_norm: float           # |||p*|||_*
    u_L2: float
    cross_flux: float            # int (y* - p*) . grad (v - u)
    cross_data: float            # int (b(u + w) - div y* - l)(v - u)
    L2_half_v_minus_u: float     # 1/2 int k^2 (v - u)^2
    L2_half_sinh_gap: float      # 1/2 int k^2 (b-like difference)^2, for the sandwich
    per_element_primal: np.ndarray = field(repr=False, default=None)
    per_element_dual: np.ndarray = field(repr=False, default=None)
    identity_residual: float = float("nan")
    I_CEN_low: Optional[float] = None
    I_CEN_up: Optional[float] = None
    I_E_up: Optional[float] = None
    P_rel_CEN: Optional[float] = None
    RE_up: Optional[float] = None
    RCEN_up: Optional[float] = None
    RCEN_low: Optional[float] = None

    @property
    def CEN(self) -> float:
        return float(np.hypot(self.energy_error, self.dual_error))

    @property
    def full_error(self) -> float:
        """primal_M2 + dual_M2, the natural nonlinear error measure (half of the CEN-type sum)."""
        return self.primal_M2 + self.dual_M2

    @property
    def per_element_true_indicator(self) -> np.ndarray:
        return np.sqrt(np.maximum(2.0 * (self.per_element_primal + self.per_element_dual), 0.0))


def _sample(reference: Reference, problem: DiscreteProblem, v: P1Field, y):
    """All fields at the quadrature points of the evaluation mesh."""
    hier = reference.hierarchy
    if hier.coarse is not problem.mesh:
        raise ReferenceError("reference is not nested in the mesh of v")
    ep = reference.problem
    fine = reference.mesh
    qe = ep.qelem
    anc = hier.ancestor
    ac = anc[qe]
    xy = ep.qpoints
    out = dict(vq=ep.sample(hier.prolong(v.values)), grad_v=v.gradient[ac], yq=y.evaluate(ac, xy),
               div_y=y.divergence()[ac], wq=ep.w_q)
    if reference.exact:
        out["uq"] = np.asarray(reference.u_fun(xy), float)
        out["grad_u"] = np.asarray(reference.grad_fun(xy), float)
    else:
        out["uq"] = ep.sample(reference.u.values)
        out["grad_u"] = np.broadcast_to(reference.u.gradient[qe][:, None, :], xy.shape)
    return out


def true_errors(problem: DiscreteProblem, v: P1Field, y, reference: Reference) -> ErrorReport:
    s = _sample(reference, problem, v, y)
    ep = reference.problem
    eps, k2 = ep.eps_q, ep.k2_q
    law = problem.law
    integ = ep.integrate
    ge = s["grad_v"][:, None, :] - s["grad_u"]
    p = eps[..., None] * s["grad_u"]
    dy = s["yq"] - p
    e = s["vq"] - s["uq"]
    zu = s["uq"] + s["wq"]
    zv = s["vq"] + s["wq"]
    quad.check_argument(zu, ep.qelem)
    quad.check_argument(zv, ep.qelem)
    qv = s["div_y"][:, None] + ep.l_q
    energy_K = integ(eps * np.sum(ge ** 2, -1))
    dual_K = integ(np.sum(dy ** 2, -1) / eps)
    DFp_K = integ(law.bregman(k2, zv, zu))
    DFd_K = integ(law.gap(k2, zu, qv))
    bu = law.b(k2, zu)
    bv = law.b(k2, zv)
    safe = np.where(k2 > 0, k2, 1.0)
    n = problem.mesh.n_triangles
    anc = reference.hierarchy.ancestor
    prim_el = np.bincount(anc, weights=0.5 * energy_K + DFp_K, minlength=n)
    dual_el = np.bincount(anc, weights=0.5 * dual_K + DFd_K, minlength=n)
    energy2, dual2 = float(np.sum(energy_K)), float(np.sum(dual_K))
    DFp, DFd = float(np.sum(DFp_K)), float(np.sum(DFd_K))
    return ErrorReport(
        n_elements=n,
        energy_error=float(np.sqrt(energy2)), dual_error=float(np.sqrt(dual2)),
        L2_error=float(np.sqrt(np.sum(integ(e ** 2)))),
        DF_primal=DFp, DF_dual=DFd,
        primal_M2=0.5 * energy2 + DFp, dual_M2=0.5 * dual2 + DFd,
        u_energy=float(np.sqrt(np.sum(integ(eps * np.sum(s["grad_u"] ** 2, -1))))),
        p_dual_norm=float(np.sqrt(np.sum(integ(np.sum(p ** 2, -1) / eps)))),
        u_L2=float(np.sqrt(np.sum(integ(s["uq"] ** 2)))),
        cross_flux=float(np.sum(integ(np.sum(dy * ge, -1)))),
        cross_data=float(np.sum(integ((bu - qv) * e))),
        L2_half_v_minus_u=float(np.sum(integ(0.5 * k2 * e ** 2))),
        L2_half_sinh_gap=float(np.sum(integ(np.where(k2 > 0, (bv - bu) ** 2 / (2.0 * safe), 0.0)))),
        per_element_primal=prim_el, per_element_dual=dual_el)


@dataclass
class IdentityResiduals:
    identity: float              # |2M^2 - CEN^2 - 2 DF_primal - 2 DF_dual|
    identity_rel: float          # divided by 2M^2
    prager_synge: float          # | |||eps grad v - y*|||^2 - (energy^2 + dual^2 - 2 cross) |
    cross: float
    df_relation: float           # |DF - (DF_primal + DF_dual + cross)|


def identity_check(maj: MajorantBreakdown, rep: ErrorReport) -> IdentityResiduals:
    cen2 = rep.energy_error ** 2 + rep.dual_error ** 2
    two_m2 = 2.0 * maj.total_M2
    ident = abs(two_m2 - cen2 - 2.0 * rep.DF_primal - 2.0 * rep.DF_dual)
    ps = abs(2.0 * maj.flux_term - (cen2 - 2.0 * rep.cross_flux))
    dfr = abs(maj.DF_term - (rep.DF_primal + rep.DF_dual + rep.cross_data))
    return IdentityResiduals(ident, ident / two_m2 if two_m2 > 0 else 0.0, ps, rep.cross_flux, dfr)


def _ratio(a: float, b: float) -> Optional[float]:
    if not (b > 0) or not np.isfinite(a) or not np.isfinite(b):
        return None
    return float(a / b)


def efficiency_and_bounds(rep: ErrorReport, maj: MajorantBreakdown) -> ErrorReport:
    """Fill efficiency indices and guaranteed relative bounds; None marks unavailable values."""
    sqrt2m = float(np.sqrt(max(2.0 * maj.total_M2, 0.0)))
    cen = rep.CEN
    fn = maj.flux_norm
    both = float(np.hypot(maj.v_energy, maj.y_dual_norm))
    rep.identity_residual = identity_check(maj, rep).identity_rel
    rep.I_CEN_low = _ratio(fn / np.sqrt(2.0), cen)
    rep.I_CEN_up = _ratio(sqrt2m, cen)
    rep.I_E_up = _ratio(sqrt2m, rep.energy_error)
    rep.P_rel_CEN = _ratio(fn, both)
    rep.RE_up = _ratio(sqrt2m, maj.v_energy - sqrt2m)
    rep.RCEN_up = _ratio(sqrt2m, both - sqrt2m)
    rep.RCEN_low = _ratio(fn / np.sqrt(2.0), both + sqrt2m)
    return rep


def report_fields() -> list[str]:
    return [f.name for f in fields(ErrorReport) if not f.name.startswith("per_element")]
