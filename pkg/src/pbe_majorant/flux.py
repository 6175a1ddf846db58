"""Dual variables: equilibrated RT0 fluxes and the gradient-averaging baseline.

RT0 convention: the global degree of freedom of edge (i, j), i < j, is the
total flux through the edge in the direction rot(P_j - P_i), rot(x, y) =
(y, -x).  On a triangle with corners P_0, P_1, P_2 the local basis
function psi_k = (x - P_k) / (2|K|) carries unit outward flux through the
edge opposite P_k and has divergence 1/|K|.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import quadrature as quad
from .fem import DiscreteProblem, FieldFormatError, P1Field, assemble_mass, weighted_load
from .mesh import Mesh
from .solver import spd_solve


class EquilibrationError(RuntimeError):
    def __init__(self, vertex: int, message: str = "singular local patch problem"):
        super().__init__(f"{message} at patch vertex {vertex}")
        self.vertex = vertex


@dataclass(frozen=True, eq=False)
class FluxField:
    """Lowest-order Raviart-Thomas field: one normal flux per global edge."""

    mesh: Mesh
    dofs: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.dofs, dtype=float)
        if d.shape != (len(self.mesh.edges),):
            raise ValueError("FluxField needs one value per edge")
        object.__setattr__(self, "dofs", d)

    @cached_property
    def local(self) -> np.ndarray:
        """(nt, 3) outward fluxes through the local edges."""
        return self.mesh.tri_edge_signs * self.dofs[self.mesh.tri_edges]

    def divergence(self) -> np.ndarray:
        return self.local.sum(axis=1) / self.mesh.areas

    def evaluate(self, elements: np.ndarray, xy: np.ndarray) -> np.ndarray:
        """Values at points xy (n, ..., 2) lying in the given elements (n,)."""
        c = self.local[elements]
        P = self.mesh.corners[elements]
        scale = 1.0 / (2.0 * self.mesh.areas[elements])
        csum = c.sum(axis=1)
        cP = np.einsum("nk,nkd->nd", c, P)
        extra = (1,) * (xy.ndim - 2)
        csum = csum.reshape(csum.shape + extra + (1,))
        cP = cP.reshape((cP.shape[0],) + extra + (2,))
        scale = scale.reshape(scale.shape + extra + (1,))
        return scale * (csum * xy - cP)

    def at_quadrature(self, q: quad.QuadRule) -> np.ndarray:
        xy = quad.physical_points(self.mesh, q)
        return self.evaluate(np.arange(self.mesh.n_triangles), xy)

    def normal_jumps(self) -> np.ndarray:
        """Normal continuity defect per interior edge; structurally zero."""
        m = self.mesh
        flat_e = m.tri_edges.ravel()
        flat_v = (m.tri_edge_signs * self.dofs[m.tri_edges]).ravel()
        net = np.bincount(flat_e, weights=flat_v, minlength=len(m.edges))
        return net[m.edge_triangle_count == 2]


@dataclass(frozen=True, eq=False)
class P1VectorFlux:
    """Continuous piecewise-linear vector field (vertex values, shape (nv, 2))."""

    mesh: Mesh
    values: np.ndarray

    def divergence(self) -> np.ndarray:
        v = self.values[self.mesh.triangles]
        return np.einsum("nkd,nkd->n", v, self.mesh.grad_hat)

    def evaluate(self, elements: np.ndarray, xy: np.ndarray) -> np.ndarray:
        shape = xy.shape
        n = shape[0]
        pts = xy.reshape(n, -1, 2)
        P0 = self.mesh.corners[elements, 0]
        G = self.mesh.grad_hat[elements]
        lam = np.einsum("nkd,nmd->nmk", G, pts - P0[:, None, :])
        lam[..., 0] += 1.0
        vals = np.einsum("nmk,nkd->nmd", lam, self.values[self.mesh.triangles[elements]])
        return vals.reshape(shape)

    def at_quadrature(self, q: quad.QuadRule) -> np.ndarray:
        return np.einsum("qk,nkd->nqd", q.points, self.values[self.mesh.triangles])


# ---------------------------------------------------------------------------
# data for the patch problems
# ---------------------------------------------------------------------------

def load_moments(problem: DiscreteProblem, u: P1Field) -> np.ndarray:
    """(nt, 3) integrals of (b(u + w) - l) phi_j over each element, local vertex j."""
    f = problem.nonlinear_values(u.values) - problem.l_q
    return problem.rule.local_moments(problem.mesh, f)


def target_divergence(problem: DiscreteProblem, u: P1Field) -> np.ndarray:
    """Elementwise mean of b(u + w) - l, with the quadrature of the Newton residual."""
    return load_moments(problem, u).sum(axis=1) / problem.mesh.areas


def _rt0_local_mass(mesh: Mesh) -> np.ndarray:
    """(nt, 3, 3) integrals of psi_k . psi_l."""
    q = quad.rule(2)
    xy = quad.physical_points(mesh, q)                       # (nt, nq, 2)
    d = xy[:, :, None, :] - mesh.corners[:, None, :, :]      # (nt, nq, 3, 2)
    m = np.einsum("q,nqkd,nqld->nkl", q.weights, d, d)
    return m / (4.0 * mesh.areas[:, None, None])


def _rt0_hat_moments(mesh: Mesh) -> np.ndarray:
    """(nt, 3 [phi_j], 3 [psi_k], 2) integrals of phi_j psi_k."""
    q = quad.rule(2)
    xy = quad.physical_points(mesh, q)
    d = xy[:, :, None, :] - mesh.corners[:, None, :, :]
    m = np.einsum("q,qj,nqkd->njkd", q.weights, q.points, d)
    return m / 2.0


def equilibrate(mesh: Mesh, eps_elem: np.ndarray, numerical_flux: np.ndarray,
                moments: np.ndarray) -> FluxField:
    """Patchwise equilibrated RT0 reconstruction of an elementwise-constant flux.

    ``numerical_flux`` is eps grad u_h per element (nt, 2) and ``moments``
    the hat-weighted load integrals (nt, 3).  The result satisfies
    div y = moments.sum(1) / |K| up to the Galerkin residual of u_h.
    """
    nt = mesh.n_triangles
    eps_elem = np.broadcast_to(np.asarray(eps_elem, float), (nt,))
    numerical_flux = np.asarray(numerical_flux, float)
    grad = numerical_flux / eps_elem[:, None]
    area = mesh.areas
    Mloc = _rt0_local_mass(mesh) / eps_elem[:, None, None]
    H = _rt0_hat_moments(mesh)
    # rhs_j,k = grad . int phi_j psi_k
    F = np.einsum("nd,njkd->njk", grad, H)
    G = mesh.grad_hat
    # d_a|K * |K| for local vertex j
    dmom = moments + area[:, None] * np.einsum("nd,njd->nj", numerical_flux, G)
    signs = mesh.tri_edge_signs
    tedges = mesh.tri_edges
    bvert = mesh.boundary_vertex_mask
    ptr, pelems, ploc = mesh.vertex_patch_csr
    dofs = np.zeros(len(mesh.edges))
    for a in range(mesh.n_vertices):
        elems = pelems[ptr[a]:ptr[a + 1]]
        jloc = ploc[ptr[a]:ptr[a + 1]]
        ne = len(elems)
        E = tedges[elems]                                  # (ne, 3)
        # only edges through a carry flux; the edge opposite a is a no-flux patch edge
        free_loc = np.ones((ne, 3), bool)
        free_loc[np.arange(ne), jloc] = False
        gids = np.unique(E[free_loc])
        nf = len(gids)
        lid = np.searchsorted(gids, E)
        A = np.zeros((nf, nf))
        Bm = np.zeros((ne, nf))
        f = np.zeros(nf)
        gvec = dmom[elems, jloc].copy()
        for i in range(ne):
            live = np.flatnonzero(free_loc[i])
            li = lid[i, live]
            o = signs[elems[i], live]
            A[np.ix_(li, li)] += np.outer(o, o) * Mloc[elems[i]][np.ix_(live, live)]
            Bm[i, li] += o
            f[li] += o * F[elems[i], jloc[i], live]
        if not bvert[a]:
            defect = gvec.sum()
            gvec -= defect * area[elems] / area[elems].sum()
            Bm, gvec = Bm[:-1], gvec[:-1]
        nc = len(gvec)
        K = np.zeros((nf + nc, nf + nc))
        K[:nf, :nf] = A
        K[nf:, :nf] = Bm
        K[:nf, nf:] = Bm.T
        rhs = np.concatenate([f, gvec])
        try:
            sol = np.linalg.solve(K, rhs)
        except np.linalg.LinAlgError:
            raise EquilibrationError(int(a)) from None
        if not np.all(np.isfinite(sol)):
            raise EquilibrationError(int(a))
        np.add.at(dofs, gids, sol[:nf])
    target = moments.sum(axis=1) / area
    return correct_divergence(FluxField(mesh, dofs), target)


def correct_divergence(y: FluxField, target: np.ndarray) -> FluxField:
    """Remove the elementwise divergence defect left by the algebraic residual of u_h.

    The defect is routed to the boundary through an element-to-element
    potential: the correction flux through an interior edge is the potential
    difference of its two elements, through a boundary edge the potential of
    its element.  The resulting graph Laplacian is SPD.
    """
    mesh = y.mesh
    defect = (y.divergence() - target) * mesh.areas
    et = mesh.edge_triangles                      # (ne, 2), -1 on the boundary
    inner = et[:, 1] >= 0
    a, b = et[inner, 0], et[inner, 1]
    nt = mesh.n_triangles
    bcount = np.bincount(et[~inner, 0], minlength=nt).astype(float)
    deg = np.bincount(np.concatenate([a, b]), minlength=nt) + bcount
    L = sp.coo_matrix((np.concatenate([-np.ones(len(a)), -np.ones(len(a)), deg]),
                       (np.concatenate([a, b, np.arange(nt)]), np.concatenate([b, a, np.arange(nt)]))),
                      shape=(nt, nt)).tocsc()
    phi = spla.splu(L).solve(-defect)
    # outward local flux of element et[:, 0] through each edge
    out0 = np.where(inner, phi[et[:, 0]] - phi[np.maximum(et[:, 1], 0)], phi[et[:, 0]])
    # sign of element et[:, 0] relative to the global orientation
    tri_pos = np.argmax(mesh.tri_edges[et[:, 0]] == np.arange(len(mesh.edges))[:, None], axis=1)
    s0 = mesh.tri_edge_signs[et[:, 0], tri_pos]
    return FluxField(mesh, y.dofs + s0 * out0)


def equilibrated_flux(problem: DiscreteProblem, u: P1Field) -> FluxField:
    return equilibrate(problem.mesh, problem.eps, problem.eps[:, None] * u.gradient,
                       load_moments(problem, u))


def gradient_average(mesh: Mesh, eps_elem, u: P1Field) -> P1VectorFlux:
    """Consistent-mass L2 projection of eps grad u onto continuous P1 vectors."""
    eps_elem = np.broadcast_to(np.asarray(eps_elem, float), (mesh.n_triangles,))
    flux = eps_elem[:, None] * u.gradient
    M = assemble_mass(mesh)
    q = quad.rule(1)
    vals = np.empty((mesh.n_vertices, 2))
    for d in range(2):
        b = weighted_load(mesh, flux[:, d:d + 1], q)
        vals[:, d] = spd_solve(M, b)
    return P1VectorFlux(mesh, vals)


def l2_inner_with_p1(mesh: Mesh, field_, eps_elem, u: P1Field, test: np.ndarray) -> np.ndarray:
    """(eps grad u - field, test) for a P1 vector test field; used in projection checks."""
    q = quad.rule(2)
    diff = (np.broadcast_to(np.asarray(eps_elem, float), (mesh.n_triangles,))[:, None] * u.gradient)[:, None, :] \
        - field_.at_quadrature(q)
    tq = np.einsum("qk,nkd->nqd", q.points, test[mesh.triangles])
    return np.sum(mesh.areas[:, None] * ((diff * tq).sum(-1) @ q.weights[:, None]))


def save_flux(y: FluxField, path) -> None:
    """Per-edge dofs in the P1Field text format under a 'PBEFLUX 1' header."""
    lines = ["PBEFLUX 1", str(len(y.dofs))] + [repr(float(x)) for x in y.dofs]
    Path(path).write_text("\n".join(lines) + "\n")


def load_flux(mesh: Mesh, path) -> FluxField:
    raw = Path(path).read_text().splitlines()
    if not raw or raw[0].strip() != "PBEFLUX 1":
        raise FieldFormatError("line 1: header: expected 'PBEFLUX 1'")
    try:
        n = int(raw[1])
    except (IndexError, ValueError):
        raise FieldFormatError("line 2: count: missing or not an integer") from None
    if n != len(mesh.edges):
        raise FieldFormatError(f"line 2: count: {n} values for a mesh with {len(mesh.edges)} edges")
    try:
        vals = [float(row) for row in raw[2:2 + n]]
    except ValueError as exc:
        bad = next(k for k, row in enumerate(raw[2:2 + n]) if not _parses(row))
        raise FieldFormatError(f"line {bad + 3}: value: {exc}") from None
    if len(vals) != n:
        raise FieldFormatError(f"line {len(raw) + 1}: value: expected {n} values")
    return FluxField(mesh, np.array(vals))


def _parses(row: str) -> bool:
    try:
        float(row)
    except ValueError:
        return False
    return True
