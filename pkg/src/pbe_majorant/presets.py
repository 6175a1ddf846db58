"""Named problem setups: two interface examples, a case-(b) variant, and test problems."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .fem import ProblemSpec
from .mesh import Mesh, build_square_with_polygon, rectangle, refine, regular_polygon
from .solver import build_shift


@dataclass
class Preset:
    name: str
    spec: ProblemSpec
    mesh_factory: Callable[[], Mesh]
    description: str = ""
    shift_levels: int = 0          # uniform levels for the linear problem defining w (0: w from spec)
    reference_levels: int = 2      # nested reference depth per AMR level
    exact_u: Optional[Callable] = None
    exact_grad: Optional[Callable] = None
    stop: int = 100_000
    initial_span: Optional[float] = None   # bisect the start mesh until w varies by at most this per element
    notes: list = field(default_factory=list)

    @property
    def has_exact(self) -> bool:
        return self.exact_u is not None

    def mesh(self) -> Mesh:
        return self.mesh_factory()

    def shift(self):
        """Callable w(xy): the regularizing shift, or ProblemSpec.w when no shift levels are set."""
        if self.shift_levels > 0:
            return build_shift(self.spec, self.mesh(), self.shift_levels)
        if self.spec.w is None:
            return lambda xy: np.zeros(np.shape(xy)[:-1])
        return self.spec.w

    def initial_mesh(self, shift=None) -> Mesh:
        mesh = self.mesh()
        if self.initial_span is None:
            return mesh
        return adapt_to_data(mesh, shift if shift is not None else self.shift(), self.initial_span)


def adapt_to_data(mesh: Mesh, w, span: float, max_rounds: int = 30) -> Mesh:
    """Bisect every element on which the vertex values of w differ by more than ``span``."""
    for _ in range(max_rounds):
        vals = np.asarray(w(mesh.vertices), float)[mesh.triangles]
        marked = np.flatnonzero(vals.max(axis=1) - vals.min(axis=1) > span)
        if len(marked) == 0:
            break
        mesh = refine(mesh, marked).mesh
    return mesh


def gaussian_bump(center, b: float, sigma: float):
    c = np.asarray(center, float)

    def f(xy):
        r2 = np.sum((xy - c) ** 2, axis=-1)
        return np.exp(-b * (r2 / sigma ** 2 - 1.0))
    return f


def example1_g(xy, L=0.8, b1=2.0, b2=2.0, c1=-1.0, c2=6.0, s1=1.5, s2=1.5):
    x1, x2 = xy[..., 0], xy[..., 1]
    return L * (np.exp(-b1 * ((x1 - c1) ** 2 / s1 ** 2 - 1.0)) - np.exp(-b2 * ((x2 - c2) ** 2 / s2 ** 2 - 1.0)))


def _bump_sum(terms):
    def f(xy):
        return sum(sign * gaussian_bump(c, b, s)(xy) for sign, c, b, s in terms)
    return f


def example2_l(xy):
    r2 = np.sum(xy ** 2, axis=-1)
    return np.exp(-6.0 * (r2 / 100.0 - 1.0)) * np.sin(xy[..., 0] * xy[..., 1] / 4.0)


def _sin2(xy):
    return np.sin(np.pi * xy[..., 0]) * np.sin(np.pi * xy[..., 1])


def _sin2_grad(xy):
    x, y = xy[..., 0], xy[..., 1]
    return np.pi * np.stack([np.cos(np.pi * x) * np.sin(np.pi * y), np.sin(np.pi * x) * np.cos(np.pi * y)], -1)


def interface_mesh(target_h: float = 2.0, side: float = 20.0, radius: float = 2.0) -> Mesh:
    return build_square_with_polygon(side, regular_polygon(15, radius), target_h)


def _presets() -> dict[str, Preset]:
    out = {}
    out["trivial"] = Preset(
        "trivial", ProblemSpec(eps1=1.0, eps2=1.0, k1=1.0, k2=1.0),
        lambda: rectangle(8, 8), "unit square, w = l = 0, exact solution u = 0",
        exact_u=lambda xy: np.zeros(xy.shape[:-1]), exact_grad=lambda xy: np.zeros(xy.shape))
    out["manufactured"] = Preset(
        "manufactured",
        ProblemSpec(eps1=1.0, eps2=1.0, k1=1.0, k2=1.0,
                    l=lambda xy: 2 * np.pi ** 2 * _sin2(xy) + np.sinh(_sin2(xy))),
        lambda: rectangle(8, 8), "unit square, u = sin(pi x) sin(pi y), sinh nonlinearity",
        exact_u=_sin2, exact_grad=_sin2_grad, stop=20_000)
    out["linear_collapse"] = Preset(
        "linear_collapse",
        ProblemSpec(eps1=1.0, eps2=1.0, k1=1.0, k2=1.0, nonlinearity="linear",
                    l=lambda xy: (2 * np.pi ** 2 + 1.0) * _sin2(xy), quad_order=7),
        lambda: rectangle(70, 70), "quadratic test mode -lap u + u = l, u = sin(pi x) sin(pi y)",
        exact_u=_sin2, exact_grad=_sin2_grad, stop=12_000,
        notes=["order-7 quadrature, the rule of the closed-form reference"])
    out["example1_2d"] = Preset(
        "example1_2d",
        ProblemSpec(eps1=1.0, eps2=100.0, k1=0.15, k2=0.4, g=example1_g),
        interface_mesh, "square of side 20 with a 15-gon of radius 2; Gaussian ridges in g, l = 0",
        shift_levels=3, initial_span=3.0,
        notes=["k1 > 0: no constraint region for the dual functional",
               "start mesh: h = 2 triangulation bisected until w varies by at most 3 per element"])
    out["example2_2d"] = Preset(
        "example2_2d",
        ProblemSpec(eps1=1.0, eps2=100.0, k1=0.2, k2=0.3,
                    g=_bump_sum([(1, (-1.0, 0.0), 2.2, 2.0), (-1, (5.0, 5.0), 2.5, 2.0)]), l=example2_l),
        interface_mesh, "Example-1 geometry (assumed), two radial bumps in g, oscillating source l",
        shift_levels=3, notes=["geometry assumed equal to example1_2d"])
    out["case_b_2d"] = Preset(
        "case_b_2d",
        ProblemSpec(eps1=2.0, eps2=80.0, k1=0.0, k2=0.84,
                    g=_bump_sum([(1, (1.0, 1.0), 2.3, 2.0), (-1, (4.0, 4.0), 2.3, 2.0),
                                 (1, (0.0, 6.0), 2.3, 2.0), (1, (-5.0, 0.0), 2.3, 2.0)])),
        interface_mesh, "k = 0 inside the 15-gon, l = 0; four radial bumps in g",
        shift_levels=3, notes=["2D analogue of a biophysical setting; k = 0 constraint region in Omega_1"])
    return out


PRESETS = _presets()


class UnknownPreset(KeyError):
    pass


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]
    except KeyError:
        raise UnknownPreset(f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}") from None
