"""Property suites behind the ``verify`` command.

Each suite returns rows (property, observed, tolerance, passed); a failing
property is a verdict, not an exception.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import estimator as est
from . import scalar_math as sm
from .amr import solve_level
from .fem import DiscreteProblem
from .flux import equilibrated_flux
from .mesh import rectangle, uniform_refine
from .presets import get_preset
from .solver import newton_solve

SUITES = ("scalar", "identity", "equilibration", "convergence")


@dataclass
class Check:
    name: str
    observed: float
    tolerance: str
    passed: bool

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return f"{verdict}  {self.name:<52s} observed {self.observed:.4g}  tolerance {self.tolerance}"


def seed() -> int:
    return int(os.environ.get("PBE_SEED", "0"))


def sandwich_violations(n: int = 100_000, bound: float = 8.0, rng=None) -> tuple[int, float]:
    """Violations of (t-s)^2/2 <= A(s,t) <= (sinh t - sinh s)^2/2 and max |A(s,s)|."""
    rng = np.random.default_rng(seed()) if rng is None else rng
    s, t = rng.uniform(-bound, bound, size=(2, n))
    A = sm.bregman_A(s, t)
    lower = 0.5 * (t - s) ** 2
    upper = 0.5 * (np.sinh(t) - np.sinh(s)) ** 2
    # the bounds are compared with a rounding allowance relative to their size
    slack = 4e-16 * np.maximum(1.0, upper)
    bad = int(np.sum((A < lower - slack) | (A > upper + slack)))
    diag = float(np.max(np.abs(sm.bregman_A(s, s))))
    return bad, diag


def forcing_margin(n: int = 10_000, bound: float = 20.0) -> float:
    """min over a grid of cosh(zeta/2) - 1 - zeta^2/8, with the stable forcing density."""
    z = np.linspace(-bound, bound, n)
    return float(np.min(sm.forcing_F_density(z, 1.0) - z ** 2 / 8.0))


def scalar_suite() -> list[Check]:
    bad, diag = sandwich_violations()
    margin = forcing_margin()
    return [Check("sandwich violations over 1e5 samples", bad, "== 0", bad == 0),
            Check("max |A(s, s)|", diag, "<= 1e-12", diag <= 1e-12),
            Check("min cosh(z/2) - 1 - z^2/8, |z| <= 20", margin, ">= -1e-15", margin >= -1e-15)]


def linear_collapse_terms(nx: int = 70):
    """Quadratic test mode: DF terms against their L2 forms, and the identity residual."""
    pr = get_preset("linear_collapse")
    mesh = rectangle(nx, nx)
    problem, u, _, y, maj, _, _ = solve_level(pr.spec, mesh, lambda xy: np.zeros(xy.shape[:-1]))
    ref = est.exact_reference(problem, pr.exact_u, pr.exact_grad)
    rep = est.efficiency_and_bounds(est.true_errors(problem, u, y, ref), maj)
    ep = ref.problem
    xy = ep.qpoints
    uq = pr.exact_u(xy)
    div_p = uq - ep.l_q                          # from -div p* + u = l
    div_y = y.divergence()[ep.qelem][:, None]
    half_div = float(np.sum(ep.integrate(0.5 * (div_y - div_p) ** 2)))
    return rep, half_div, mesh.n_triangles


def identity_suite() -> list[Check]:
    rep, half_div, nt = linear_collapse_terms()
    rel1 = abs(rep.DF_primal - rep.L2_half_v_minus_u) / rep.L2_half_v_minus_u
    rel2 = abs(rep.DF_dual - half_div) / half_div
    out = [Check(f"linear mode: DF_primal vs 1/2||v-u||^2 ({nt} elts)", rel1, "<= 1e-10", rel1 <= 1e-10),
           Check("linear mode: DF_dual vs 1/2||div(y-p)||^2", rel2, "<= 1e-10", rel2 <= 1e-10),
           Check("linear mode: identity residual (relative)", rep.identity_residual, "<= 1e-10",
                 rep.identity_residual <= 1e-10)]
    pr = get_preset("example1_2d")
    shift = pr.shift()
    problem, u, _, y, maj, _, _ = solve_level(pr.spec, pr.initial_mesh(shift), shift)
    rep = est.efficiency_and_bounds(est.true_errors(problem, u, y, est.discrete_reference(problem, u)), maj)
    out.append(Check("Example 1 level 0: identity residual (relative)", rep.identity_residual, "<= 0.02",
                     rep.identity_residual <= 0.02))
    return out


def equilibration_suite() -> list[Check]:
    out = []
    for name in ("manufactured", "example1_2d", "example2_2d", "case_b_2d"):
        pr = get_preset(name)
        shift = pr.shift()
        problem, u, _, y, _, div_err, constraint = solve_level(pr.spec, pr.initial_mesh(shift), shift)
        out.append(Check(f"{name}: max |div y* - target|", div_err, "<= 1e-10", div_err <= 1e-10))
        if np.any(problem.k2 == 0):
            out.append(Check(f"{name}: max |div y* + l| where k = 0", constraint, "<= 1e-10", constraint <= 1e-10))
        jumps = float(np.max(np.abs(y.normal_jumps()))) if len(y.normal_jumps()) else 0.0
        out.append(Check(f"{name}: normal flux jumps", jumps, "== 0", jumps == 0.0))
    return out


def manufactured_convergence(levels: int = 3):
    """Energy errors, mesh sizes, Newton data on nested uniform refinements of the manufactured mesh."""
    pr = get_preset("manufactured")
    mesh = pr.mesh()
    h, err, resid, monotone = [], [], [], True
    for lev in range(levels + 1):
        problem = DiscreteProblem(pr.spec, mesh)
        u, rep = newton_solve(problem)
        y = equilibrated_flux(problem, u)
        errs = est.true_errors(problem, u, y, est.exact_reference(problem, pr.exact_u, pr.exact_grad))
        h.append(float(mesh.h.max()))
        err.append(errs.energy_error)
        resid.append(rep.final_residual)
        monotone &= bool(np.all(np.diff(rep.energies) <= 1e-12 * np.maximum(1.0, np.abs(rep.energies[:-1]))))
        if lev < levels:
            mesh = uniform_refine(mesh).mesh
    slope = float(np.polyfit(np.log(h), np.log(err), 1)[0])
    return slope, np.array(h), np.array(err), np.array(resid), monotone


def convergence_suite() -> list[Check]:
    slope, _, _, resid, monotone = manufactured_convergence()
    return [Check("manufactured energy-error slope vs h", slope, "1 +/- 0.15", abs(slope - 1.0) <= 0.15),
            Check("max Newton residual over levels", float(resid.max()), "<= 1e-10", resid.max() <= 1e-10),
            Check("J non-increasing across Newton steps", float(monotone), "== 1", monotone)]


def run_suite(name: str) -> list[Check]:
    suites = {"scalar": scalar_suite, "identity": identity_suite,
              "equilibration": equilibration_suite, "convergence": convergence_suite}
    if name not in suites:
        raise KeyError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    return suites[name]()


__all__ = ["Check", "SUITES", "run_suite", "sandwich_violations", "forcing_margin",
           "linear_collapse_terms", "manufactured_convergence"]
