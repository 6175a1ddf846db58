"""Adaptive loop: solve, reconstruct the flux, estimate, mark, refine.

Indicators
    functional  sqrt(2 eta^2) from the majorant density
    fluxdiff    |||eps grad v - y*|||_* (the flux part only)
    true        sqrt(2 M^2(v, p*) + 2 M^2(u, y*)) against the reference

Marking
    average     patch indicators above their mean; every element of a
                flagged patch is bisected twice (mesh size halved)
    greedy      smallest set of elements, by descending indicator, whose
                indicator sum reaches theta times the total
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import estimator as est
from .fem import DiscreteProblem, P1Field, ProblemSpec
from .flux import equilibrated_flux, gradient_average, target_divergence
from .mesh import Mesh, refine_hierarchy
from .solver import linf_bound_check, newton_solve

INDICATORS = ("functional", "fluxdiff", "true")
MARKINGS = ("average", "greedy")
FLUX_METHODS = ("equilibrate", "average")
BISECTIONS_PER_LEVEL = 2


class MarkingError(ValueError):
    pass


# ---------------------------------------------------------------------------
# marking
# ---------------------------------------------------------------------------

def _patch_elements(patches) -> list[np.ndarray]:
    if isinstance(patches, Mesh):
        ptr, elems, _ = patches.vertex_patch_csr
        return [elems[ptr[a]:ptr[a + 1]] for a in range(patches.n_vertices)]
    return [np.asarray(p, dtype=np.int64) for p in patches]


def flag_patches(values) -> np.ndarray:
    """Indices of patches whose value strictly exceeds the mean of all patch values."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise MarkingError("empty indicator list")
    return np.flatnonzero(values > values.mean())


def mark_average(values, patches) -> np.ndarray:
    """Elements of all patches whose indicator strictly exceeds the mean.

    ``patches`` is a Mesh (vertex patches) or a sequence of element-id arrays,
    one per entry of ``values``.
    """
    plist = _patch_elements(patches)
    if len(plist) != len(np.asarray(values)):
        raise MarkingError("need one indicator value per patch")
    flagged = flag_patches(values)
    if len(flagged) == 0:
        return np.zeros(0, dtype=np.int64)
    return np.unique(np.concatenate([plist[i] for i in flagged]))


def mark_greedy_bulk(values, theta: float) -> np.ndarray:
    """Smallest prefix (descending values, ties by id) whose sum reaches theta * total."""
    if not (0.0 < theta <= 1.0):
        raise MarkingError(f"bulk factor must lie in (0, 1], got {theta}")
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise MarkingError("empty indicator list")
    if np.any(values < 0) or not np.all(np.isfinite(values)):
        raise MarkingError("indicators must be finite and nonnegative")
    total = float(values.sum())
    if total == 0.0:
        return np.zeros(0, dtype=np.int64)
    order = np.lexsort((np.arange(values.size), -values))
    csum = np.cumsum(values[order])
    # a small relative slack absorbs rounding in the cumulative sum
    n = int(np.searchsorted(csum, theta * total * (1.0 - 1e-14), side="left")) + 1
    chosen = order[:min(n, values.size)]
    return np.sort(chosen[values[chosen] > 0])


def marked_difference(a, b) -> int:
    """Number of elements marked by exactly one of the two sets."""
    return int(len(np.setxor1d(np.asarray(a), np.asarray(b))))


# ---------------------------------------------------------------------------
# indicators
# ---------------------------------------------------------------------------

def element_indicator(name: str, maj: est.MajorantBreakdown, rep: Optional[est.ErrorReport]) -> np.ndarray:
    if name == "functional":
        return np.sqrt(np.maximum(2.0 * maj.per_element_eta2, 0.0))
    if name == "fluxdiff":
        return np.sqrt(np.maximum(2.0 * maj.per_element_flux, 0.0))
    if name == "true":
        if rep is None:
            raise MarkingError("the true-error indicator needs a reference")
        return rep.per_element_true_indicator
    raise MarkingError(f"unknown indicator {name!r}; choose from {', '.join(INDICATORS)}")


def patch_indicator(mesh: Mesh, element_values: np.ndarray) -> np.ndarray:
    """L2 aggregation over vertex patches: sqrt(sum_K value_K^2)."""
    return np.sqrt(est.patch_sum(mesh, np.asarray(element_values) ** 2))


def mark(mesh: Mesh, element_values: np.ndarray, marking: str, theta: float) -> np.ndarray:
    if marking == "average":
        return mark_average(patch_indicator(mesh, element_values), mesh)
    if marking == "greedy":
        return mark_greedy_bulk(element_values, theta)
    raise MarkingError(f"unknown marking {marking!r}; choose from {', '.join(MARKINGS)}")


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

@dataclass
class LevelResult:
    """Everything computed on one level; ``row`` holds the CSV values."""

    level: int
    mesh: Mesh
    problem: DiscreteProblem
    u: P1Field
    y: object
    majorant: est.MajorantBreakdown
    errors: Optional[est.ErrorReport]
    newton: object
    marked: np.ndarray
    indicator: np.ndarray
    div_error: float
    constraint: float
    max_abs_u: float
    w_inf_omega2: float
    wall_time: float


CSV_COLUMNS = [
    "level", "elements", "vertices", "marked", "newton_iterations",
    "rel_L2_pct", "rel_energy_pct", "rel_dual_pct",
    "two_M2", "two_M2_primal", "two_M2_dual",
    "energy_error_sq", "dual_error_sq", "two_DF_primal", "two_DF_dual",
    "DF_share_pct", "I_CEN_low", "I_CEN_up", "I_E_up", "P_rel_CEN_pct", "true_rel_CEN_pct",
    "RE_up", "RCEN_up", "RCEN_low", "identity_rel", "div_error", "max_abs_u", "w_inf_omega2",
]


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if not np.isfinite(x):
        return "nan"
    return f"{x:.10g}"


def _pct(a, b):
    return None if a is None or not b else 100.0 * a / b


def level_row(res: LevelResult) -> dict:
    m, r = res.majorant, res.errors
    row = dict(level=res.level, elements=res.mesh.n_triangles, vertices=res.mesh.n_vertices,
               marked=len(res.marked), newton_iterations=res.newton.iterations,
               two_M2=2.0 * m.total_M2, DF_share_pct=100.0 * m.DF_share,
               P_rel_CEN_pct=_pct(m.flux_norm, float(np.hypot(m.v_energy, m.y_dual_norm))),
               div_error=res.div_error, max_abs_u=res.max_abs_u, w_inf_omega2=res.w_inf_omega2)
    if r is not None:
        row.update(
            rel_L2_pct=_pct(r.L2_error, r.u_L2), rel_energy_pct=_pct(r.energy_error, r.u_energy),
            rel_dual_pct=_pct(r.dual_error, r.p_dual_norm),
            two_M2_primal=2.0 * r.primal_M2, two_M2_dual=2.0 * r.dual_M2,
            energy_error_sq=r.energy_error ** 2, dual_error_sq=r.dual_error ** 2,
            two_DF_primal=2.0 * r.DF_primal, two_DF_dual=2.0 * r.DF_dual,
            I_CEN_low=r.I_CEN_low, I_CEN_up=r.I_CEN_up, I_E_up=r.I_E_up, P_rel_CEN_pct=_pct(r.P_rel_CEN, 1.0),
            true_rel_CEN_pct=_pct(r.CEN, float(np.hypot(r.u_energy, r.p_dual_norm))),
            RE_up=r.RE_up, RCEN_up=r.RCEN_up, RCEN_low=r.RCEN_low, identity_rel=r.identity_residual)
    return row


@dataclass
class AmrReport:
    indicator: str
    marking: str
    bulk: float
    flux_method: str
    reference: str
    levels: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    @property
    def rows(self) -> list[dict]:
        return [level_row(r) for r in self.levels]

    @property
    def element_counts(self) -> np.ndarray:
        return np.array([r.mesh.n_triangles for r in self.levels])

    def column(self, name: str) -> np.ndarray:
        return np.array([np.nan if row.get(name) is None else row[name] for row in self.rows], dtype=float)

    @property
    def full_error(self) -> np.ndarray:
        """primal_M2 + dual_M2 per level (nan without a reference)."""
        return np.array([np.nan if r.errors is None else r.errors.full_error for r in self.levels])

    @property
    def wall_times(self) -> np.ndarray:
        return np.array([r.wall_time for r in self.levels])

    def to_csv(self) -> str:
        """Byte-stable CSV (wall times are kept out of it)."""
        lines = [",".join(CSV_COLUMNS)]
        for row in self.rows:
            lines.append(",".join(_fmt(row.get(c)) for c in CSV_COLUMNS))
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# loop
# ---------------------------------------------------------------------------

def _constant_shift(spec: ProblemSpec):
    if spec.w is None:
        return lambda xy: np.zeros(np.shape(xy)[:-1])
    return spec.w


def solve_level(spec: ProblemSpec, mesh: Mesh, shift: Callable, flux_method: str = "equilibrate",
                initial: Optional[np.ndarray] = None):
    """Solve, reconstruct the flux and evaluate the majorant on one mesh."""
    if flux_method not in FLUX_METHODS:
        raise MarkingError(f"unknown flux method {flux_method!r}; choose from {', '.join(FLUX_METHODS)}")
    problem = DiscreteProblem(spec, mesh, np.asarray(shift(mesh.vertices), float))
    u, newton = newton_solve(problem, initial)
    if flux_method == "equilibrate":
        y = equilibrated_flux(problem, u)
    else:
        y = gradient_average(mesh, problem.eps, u)
    div_error = float(np.max(np.abs(y.divergence() - target_divergence(problem, u))))
    constraint = est.check_constraint(problem, y.divergence()) if flux_method == "equilibrate" else float("nan")
    maj = est.majorant(problem, u, y)
    return problem, u, newton, y, maj, div_error, constraint


def amr_loop(spec: ProblemSpec, mesh0: Mesh, indicator: str = "functional", marking: str = "average",
             stop: int = 100_000, *, bulk: float = 0.5, shift: Optional[Callable] = None,
             flux_method: str = "equilibrate", reference_levels: Optional[int] = 2,
             exact: Optional[tuple] = None, max_levels: int = 50,
             on_level: Optional[Callable[[LevelResult], None]] = None) -> AmrReport:
    """Adaptive campaign until the next mesh would exceed ``stop`` elements.

    Each level is compared with its own reference: the closed-form solution
    when ``exact = (u_fun, grad_fun)`` is given, otherwise the Galerkin
    solution on the level mesh refined uniformly ``reference_levels`` times
    (``None`` skips the true errors).
    """
    if indicator not in INDICATORS:
        raise MarkingError(f"unknown indicator {indicator!r}; choose from {', '.join(INDICATORS)}")
    if marking not in MARKINGS:
        raise MarkingError(f"unknown marking {marking!r}; choose from {', '.join(MARKINGS)}")
    if marking == "greedy" and not (0.0 < bulk <= 1.0):
        raise MarkingError(f"bulk factor must lie in (0, 1], got {bulk}")
    if indicator == "true" and exact is None and reference_levels is None:
        raise MarkingError("the true-error indicator needs a reference")
    shift = shift if shift is not None else _constant_shift(spec)
    if exact is not None:
        ref_label = "closed-form solution"
    elif reference_levels is not None:
        ref_label = f"nested, {reference_levels} uniform levels finer than each level mesh"
    else:
        ref_label = "none"
    report = AmrReport(indicator, marking, bulk, flux_method, ref_label)
    mesh = mesh0
    guess = None
    for level in range(max_levels):
        t0 = time.perf_counter()
        problem, u, newton, y, maj, div_error, constraint = solve_level(spec, mesh, shift, flux_method, guess)
        rep = None
        if exact is not None:
            ref = est.exact_reference(problem, *exact)
        elif reference_levels is not None:
            ref = est.discrete_reference(problem, u, reference_levels)
        else:
            ref = None
        if ref is not None:
            rep = est.efficiency_and_bounds(est.true_errors(problem, u, y, ref), maj)
            del ref
        values = element_indicator(indicator, maj, rep)
        marked = mark(mesh, values, marking, bulk)
        linf = linf_bound_check(u, problem.w)
        res = LevelResult(level, mesh, problem, u, y, maj, rep, newton, marked, values,
                          div_error, constraint, linf.max_abs_u, linf.w_inf_omega2,
                          time.perf_counter() - t0)
        report.levels.append(res)
        if on_level is not None:
            on_level(res)
        if len(marked) == 0:
            report.notes.append(f"level {level}: nothing marked, loop terminated")
            break
        hier = refine_hierarchy(mesh, marked, BISECTIONS_PER_LEVEL)
        if hier.mesh.n_triangles > stop:
            report.notes.append(f"level {level}: next mesh has {hier.mesh.n_triangles} elements > stop {stop}")
            break
        guess = hier.prolong(u.values)
        mesh = hier.mesh
    else:
        report.notes.append(f"stopped after max_levels = {max_levels}")
    return report


# ---------------------------------------------------------------------------
# indicator comparison
# ---------------------------------------------------------------------------

@dataclass
class OverlapRow:
    level: int
    elements: int
    marked_true: int
    marked_functional: int
    different: int

    @property
    def ratio_marked(self) -> float:
        """Differently marked elements relative to those marked by the true error."""
        return self.different / self.marked_true if self.marked_true else 0.0

    @property
    def ratio_all(self) -> float:
        return self.different / self.elements

    @property
    def overlap(self) -> float:
        return 1.0 - self.ratio_marked


def overlap_table(report: AmrReport, theta: float = 0.5, first: str = "functional",
                  second: str = "true") -> list[OverlapRow]:
    """Greedy marked sets of two indicators on the meshes of one campaign."""
    rows = []
    for res in report.levels:
        a = mark_greedy_bulk(element_indicator(first, res.majorant, res.errors), theta)
        b = mark_greedy_bulk(element_indicator(second, res.majorant, res.errors), theta)
        rows.append(OverlapRow(res.level, res.mesh.n_triangles, len(b), len(a), marked_difference(a, b)))
    return rows


def matched_ratio(report: AmrReport, other: AmrReport, quantity: str = "full_error") -> np.ndarray:
    """report's quantity over other's, log-log interpolated to report's element counts.

    Levels outside the element range of ``other`` are nan.
    """
    n1, n2 = report.element_counts, other.element_counts
    q1 = np.asarray(getattr(report, quantity) if quantity == "full_error" else report.column(quantity))
    q2 = np.asarray(getattr(other, quantity) if quantity == "full_error" else other.column(quantity))
    out = np.full(len(n1), np.nan)
    inside = (n1 >= n2.min()) & (n1 <= n2.max())
    if inside.any():
        interp = np.exp(np.interp(np.log(n1[inside]), np.log(n2), np.log(q2)))
        out[inside] = q1[inside] / interp
    return out


@dataclass
class Comparison:
    functional: AmrReport
    fluxdiff: AmrReport
    overlap: list
    ratio: np.ndarray        # full error of functional over fluxdiff at matched counts


def compare_indicators(spec: ProblemSpec, mesh0: Mesh, stop: int = 100_000, *, theta: float = 0.5,
                       shift: Optional[Callable] = None, reference_levels: int = 2,
                       marking: str = "average") -> Comparison:
    """Functional versus flux-difference campaigns plus the greedy overlap study."""
    a = amr_loop(spec, mesh0, "functional", marking, stop, bulk=theta, shift=shift,
                 reference_levels=reference_levels)
    b = amr_loop(spec, mesh0, "fluxdiff", marking, stop, bulk=theta, shift=shift,
                 reference_levels=reference_levels)
    return Comparison(a, b, overlap_table(a, theta), matched_ratio(a, b))


def compare_marked_sets(first: Sequence[np.ndarray], second: Sequence[np.ndarray]) -> list[int]:
    """Per-level count of differently marked elements for two lists of marked sets."""
    return [marked_difference(a, b) for a, b in zip(first, second)]
