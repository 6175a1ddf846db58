"""Symmetric quadrature rules on triangles (Dunavant family)."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import permutations

import numpy as np

from .mesh import Mesh

OVERFLOW_ARG = 700.0


class QuadratureError(ValueError):
    pass


class NonFiniteError(ArithmeticError):
    """Non-finite integrand value; names the element and quadrature point."""

    def __init__(self, element: int, point: int, what: str = "density"):
        super().__init__(f"non-finite {what} at element {element}, quadrature point {point}")
        self.element = element
        self.point = point


@dataclass(frozen=True)
class QuadRule:
    order: int
    points: np.ndarray   # (nq, 3) barycentric coordinates
    weights: np.ndarray  # (nq,), sum to 1


def _orbit(a, b, c):
    return sorted(set(permutations((a, b, c))))


# (weight, barycentric orbit generator) per rule
_TABLE = {
    1: [(1.0, (1 / 3, 1 / 3, 1 / 3))],
    2: [(1 / 3, (0.0, 0.5, 0.5))],
    3: [(0.223381589678011, (0.108103018168070, 0.445948490915965, 0.445948490915965)),
        (0.109951743655322, (0.816847572980459, 0.091576213509771, 0.091576213509771))],
    5: [(0.225, (1 / 3, 1 / 3, 1 / 3)),
        ((155 + np.sqrt(15)) / 1200, ((9 - 2 * np.sqrt(15)) / 21, (6 + np.sqrt(15)) / 21, (6 + np.sqrt(15)) / 21)),
        ((155 - np.sqrt(15)) / 1200, ((9 + 2 * np.sqrt(15)) / 21, (6 - np.sqrt(15)) / 21, (6 - np.sqrt(15)) / 21))],
    7: [(0.144315607677787, (1 / 3, 1 / 3, 1 / 3)),
        (0.095091634267285, (0.081414823414554, 0.459292588292723, 0.459292588292723)),
        (0.103217370534718, (0.658861384496480, 0.170569307751760, 0.170569307751760)),
        (0.032458497623198, (0.898905543365938, 0.050547228317031, 0.050547228317031)),
        (0.027230314174435, (0.008394777409958, 0.263112829634638, 0.728492392955404))],
}


@lru_cache(maxsize=None)
def rule(order: int) -> QuadRule:
    """Rule exact for polynomials of total degree ``order`` (orders 1, 2, 3, 5, 7)."""
    if order not in _TABLE:
        raise QuadratureError(f"unsupported quadrature order {order}; choose from {sorted(_TABLE)}")
    pts, wts = [], []
    for w, gen in _TABLE[order]:
        orb = _orbit(*gen)
        pts += orb
        wts += [w] * len(orb)
    points = np.array(pts, dtype=float)
    points /= points.sum(axis=1, keepdims=True)
    weights = np.array(wts, dtype=float)
    weights /= weights.sum()
    points.setflags(write=False)
    weights.setflags(write=False)
    return QuadRule(order, points, weights)


@lru_cache(maxsize=None)
def _subtriangles(levels: int) -> np.ndarray:
    """(4**levels, 3, 3) barycentric corners of the uniform subdivision of the reference triangle."""
    n = 2 ** levels
    corners = []
    for i in range(n):
        for j in range(n - i):
            k = n - 1 - i - j
            corners.append([[i + 1, j, k], [i, j + 1, k], [i, j, k + 1]])
            if k >= 1:
                corners.append([[i, j + 1, k], [i + 1, j, k], [i + 1, j + 1, k - 1]])
    out = np.array(corners, dtype=float) / n
    out.setflags(write=False)
    return out


def composite(order: int, levels: int = 0) -> QuadRule:
    """Rule ``order`` applied on the 4**levels congruent subtriangles of the reference triangle."""
    base = rule(order)
    if levels == 0:
        return base
    sub = _subtriangles(levels)
    points = np.einsum("qa,sab->sqb", base.points, sub).reshape(-1, 3)
    weights = np.tile(base.weights, len(sub)) / len(sub)
    return QuadRule(order, points, weights)


def refinement_for_span(span, target: float = 0.5, max_levels: int = 5):
    """Subdivision depth so that a linear argument varies by at most ``target`` per subtriangle."""
    span = np.asarray(span, dtype=float)
    with np.errstate(divide="ignore"):
        lev = np.ceil(np.log2(np.maximum(span, 1e-300) / target))
    lev = np.clip(np.where(span > target, lev, 0), 0, max_levels).astype(np.int64)
    return lev if lev.ndim else int(lev)


@dataclass(frozen=True, eq=False)
class QuadSet:
    """Quadrature over a mesh with a per-element composite subdivision.

    Row s of the arrays belongs to element ``elem[s]``; ``lam`` holds the
    barycentric coordinates of the points with respect to that element and
    ``wts`` the weights as fractions of the element area.
    """

    order: int
    elem: np.ndarray   # (ns,)
    lam: np.ndarray    # (ns, nq, 3)
    wts: np.ndarray    # (ns, nq)
    n_elements: int

    def sample(self, vertex_values: np.ndarray, triangles: np.ndarray) -> np.ndarray:
        """P1 field given by vertex values, evaluated at all points: (ns, nq)."""
        return np.einsum("snk,sk->sn", self.lam, vertex_values[triangles[self.elem]])

    def points(self, mesh: Mesh) -> np.ndarray:
        return np.einsum("snk,skd->snd", self.lam, mesh.corners[self.elem])

    def element_integrals(self, mesh: Mesh, values: np.ndarray) -> np.ndarray:
        check_finite(values, elements=self.elem)
        part = np.sum(values * self.wts, axis=1)
        return mesh.areas * np.bincount(self.elem, weights=part, minlength=self.n_elements)

    def local_moments(self, mesh: Mesh, values: np.ndarray) -> np.ndarray:
        """(nt, 3) integrals of values * phi_j over each element."""
        part = np.einsum("sn,sn,snj->sj", values, self.wts, self.lam)
        out = np.stack([np.bincount(self.elem, weights=part[:, j], minlength=self.n_elements)
                        for j in range(3)], axis=1)
        return mesh.areas[:, None] * out

    def local_mass(self, mesh: Mesh, values: np.ndarray) -> np.ndarray:
        """(nt, 3, 3) integrals of values * phi_i phi_j over each element."""
        part = np.einsum("sn,sn,sni,snj->sij", values, self.wts, self.lam, self.lam).reshape(-1, 9)
        out = np.stack([np.bincount(self.elem, weights=part[:, k], minlength=self.n_elements)
                        for k in range(9)], axis=1).reshape(-1, 3, 3)
        return mesh.areas[:, None, None] * out


def quad_set(mesh: Mesh, order: int, levels=0) -> QuadSet:
    """QuadSet with subdivision depth ``levels`` (scalar or one value per element)."""
    base = rule(order)
    nt = mesh.n_triangles
    levels = np.broadcast_to(np.asarray(levels, dtype=np.int64), (nt,))
    elem, lam, wts = [], [], []
    for lev in np.unique(levels):
        ids = np.flatnonzero(levels == lev)
        sub = _subtriangles(int(lev))
        pts = np.einsum("qa,sab->sqb", base.points, sub)               # (nsub, nq, 3)
        elem.append(np.repeat(ids, len(sub)))
        lam.append(np.broadcast_to(pts[None], (len(ids),) + pts.shape).reshape(-1, *pts.shape[1:]))
        wts.append(np.broadcast_to(base.weights / len(sub), (len(ids) * len(sub), len(base.weights))))
    elem = np.concatenate(elem)
    order_ = np.argsort(elem, kind="stable")
    return QuadSet(order, elem[order_], np.concatenate(lam)[order_], np.concatenate(wts)[order_], nt)


def as_quadset(mesh: Mesh, q) -> QuadSet:
    if isinstance(q, QuadSet):
        return q
    if isinstance(q, QuadRule):
        nt = mesh.n_triangles
        return QuadSet(q.order, np.arange(nt), np.broadcast_to(q.points, (nt,) + q.points.shape),
                       np.broadcast_to(q.weights, (nt, len(q.weights))), nt)
    return quad_set(mesh, int(q))


def physical_points(mesh: Mesh, q: QuadRule, elements=None) -> np.ndarray:
    """(n, nq, 2) quadrature points of the selected elements."""
    corners = mesh.corners if elements is None else mesh.corners[elements]
    return np.einsum("qk,nkd->nqd", q.points, corners)


def check_finite(values: np.ndarray, what: str = "density", elements=None) -> None:
    bad = ~np.isfinite(values)
    if bad.any():
        e, p = np.argwhere(bad)[0]
        if elements is not None:
            e = np.asarray(elements)[e]
        raise NonFiniteError(int(e), int(p), what)


def check_argument(arg: np.ndarray, elements=None) -> None:
    """Reject cosh/sinh arguments that would overflow double precision."""
    check_finite(arg, "argument", elements)
    big = np.abs(arg) > OVERFLOW_ARG
    if big.any():
        e, p = np.argwhere(big.reshape(big.shape[0], -1))[0]
        if elements is not None:
            e = np.asarray(elements)[e]
        raise NonFiniteError(int(e), int(p), f"argument beyond |x| <= {OVERFLOW_ARG:g}")


def element_integrals(mesh: Mesh, values: np.ndarray, q: QuadRule, elements=None) -> np.ndarray:
    """Per-element integrals of values sampled at quadrature points, shape (n, nq)."""
    check_finite(values, elements=elements)
    area = mesh.areas if elements is None else mesh.areas[elements]
    return area * (values @ q.weights)


def integrate(mesh: Mesh, density, order: int = 5, elements=None) -> float:
    """Integrate ``density(xy, lam)`` over the mesh.

    ``xy`` has shape (n, nq, 2) and ``lam`` (nq, 3); the callable returns an
    (n, nq) array.  The global sum uses numpy's pairwise reduction.
    """
    q = rule(order)
    xy = physical_points(mesh, q, elements)
    vals = np.asarray(density(xy, q.points), dtype=float)
    vals = np.broadcast_to(vals, xy.shape[:2])
    return float(np.sum(element_integrals(mesh, vals, q, elements)))
