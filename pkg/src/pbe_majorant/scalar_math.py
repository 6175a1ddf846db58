"""Stable scalar functions behind the dual functional and the error measures.

All functions are vectorized over numpy arrays.  Two nonlinearities are
provided: the Poisson-Boltzmann one, b(z) = k^2 sinh(z), and a quadratic
test mode b(z) = k^2 z for which every Bregman quantity reduces to a
weighted squared L2 distance.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

OVERFLOW_ARG = 700.0


class ScalarDomainError(ValueError):
    pass


@dataclass(frozen=True)
class NonlinearityParams:
    """Pointwise data: k2 = k^2 >= 0, shift w, source l."""

    k2: np.ndarray | float
    w: np.ndarray | float = 0.0
    l: np.ndarray | float = 0.0


def _guard(*args) -> None:
    for a in args:
        a = np.asarray(a)
        if not np.all(np.isfinite(a)):
            raise ScalarDomainError("non-finite argument")
        if np.any(np.abs(a) > OVERFLOW_ARG):
            raise ScalarDomainError(f"argument exceeds overflow guard |x| <= {OVERFLOW_ARG:g}")


def theta(s):
    """s + sqrt(s^2 + 1) without cancellation for negative s."""
    s = np.asarray(s, dtype=float)
    r = np.abs(s) + np.hypot(s, 1.0)
    out = np.where(s >= 0, r, 1.0 / r)
    return out if out.ndim else float(out)


def arsinh(s):
    """ln(theta(s)), evaluated via log1p of the reciprocal-symmetric form."""
    s = np.asarray(s, dtype=float)
    a = np.abs(s)
    # theta(|s|) - 1 = |s| + s^2 / (sqrt(s^2 + 1) + 1)
    with np.errstate(over="ignore"):
        small = np.log1p(a + a * a / (np.hypot(a, 1.0) + 1.0))
    big = np.log(2.0) + np.log(np.maximum(a, 1.0))
    out = np.copysign(np.where(a < 1e150, small, big), s)
    return out if out.ndim else float(out)


def rho_k(div_y_star, params: NonlinearityParams):
    """(div y* + l) / k^2; undefined where k^2 = 0."""
    k2 = np.asarray(params.k2, dtype=float)
    if np.any(k2 <= 0):
        raise ScalarDomainError("rho_k requires k^2 > 0")
    out = (np.asarray(div_y_star, dtype=float) + params.l) / k2
    return out if np.ndim(out) else float(out)


def xi0(rho, w):
    """arsinh(rho) - w."""
    out = arsinh(rho) - np.asarray(w, dtype=float)
    return out if np.ndim(out) else float(out)


def fstar_density(div_y_star, params: NonlinearityParams):
    """Pointwise conjugate term (r + l)(arsinh(rho) - w) - k^2 sqrt(rho^2 + 1)."""
    rho = np.asarray(rho_k(div_y_star, params))
    q = np.asarray(div_y_star, dtype=float) + params.l
    out = q * (arsinh(rho) - params.w) - np.asarray(params.k2) * np.hypot(rho, 1.0)
    return out if out.ndim else float(out)


def _phi(x):
    """e^x - 1 - x >= 0, accurate for all x."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 0.5
    xs = np.where(small, x, 0.0)
    # Taylor series x^2/2! + ... + x^18/18!, truncation below 1e-22 for |x| < 0.5
    acc = np.zeros_like(xs)
    coef = 1.0
    for n in range(18, 1, -1):
        acc = acc * xs + 1.0
        coef = n
        acc = acc / coef
    ser = acc * xs * xs
    with np.errstate(over="ignore"):
        direct = np.expm1(np.where(small, 0.0, x)) - x
    return np.where(small, ser, direct)


def _half_term(s, t):
    """e^s * phi(t - s), written to avoid overflow for large |t - s|."""
    d = t - s
    small = np.abs(d) < 0.5
    with np.errstate(over="ignore", invalid="ignore"):
        near = np.exp(s) * _phi(np.where(small, d, 0.0))
        far = np.exp(t) - np.exp(s) * (1.0 + d)
    return np.where(small, near, far)


def bregman_A(s, t):
    """cosh t - cosh s - (t - s) sinh s, as a sum of two nonnegative terms."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    _guard(s, t)
    out = 0.5 * (_half_term(s, t) + _half_term(-s, -t))
    out = np.maximum(out, 0.0)
    return out if out.ndim else float(out)


def forcing_F_density(zeta, k2):
    """k^2 (cosh(zeta/2) - 1), computed as 2 k^2 sinh^2(zeta/4)."""
    zeta = np.asarray(zeta, dtype=float)
    _guard(zeta / 2.0)
    out = 2.0 * np.asarray(k2, dtype=float) * np.sinh(zeta / 4.0) ** 2
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# nonlinearities
# ---------------------------------------------------------------------------

class SinhNonlinearity:
    """B(z) = k^2 cosh z, b = B' = k^2 sinh z."""

    name = "sinh"

    def B(self, k2, z):
        _guard(z)
        return k2 * np.cosh(z)

    def b(self, k2, z):
        _guard(z)
        return k2 * np.sinh(z)

    def db(self, k2, z):
        _guard(z)
        return k2 * np.cosh(z)

    def bregman(self, k2, z, z0):
        """B(z) - B(z0) - b(z0)(z - z0)."""
        return k2 * bregman_A(z0, z)

    def gap(self, k2, z, q):
        """Fenchel-Young gap B(z) + B*(q) - q z; requires q = 0 where k2 = 0."""
        k2 = np.broadcast_to(np.asarray(k2, float), np.broadcast(z, q).shape)
        pos = k2 > 0
        safe = np.where(pos, k2, 1.0)
        S = arsinh(np.where(pos, q, 0.0) / safe)
        _guard(S)
        return np.where(pos, safe * bregman_A(S, np.where(pos, z, 0.0)), 0.0)

    def conj(self, k2, q):
        rho = q / k2
        return q * arsinh(rho) - k2 * np.hypot(rho, 1.0)

    def inverse_b(self, k2, q):
        return arsinh(q / k2)


class LinearNonlinearity:
    """Quadratic test mode: B(z) = k^2 z^2 / 2, b = k^2 z."""

    name = "linear"

    def B(self, k2, z):
        return 0.5 * k2 * z * z

    def b(self, k2, z):
        return k2 * z

    def db(self, k2, z):
        return k2 * np.ones_like(np.asarray(z, dtype=float))

    def bregman(self, k2, z, z0):
        return 0.5 * k2 * (z - z0) ** 2

    def gap(self, k2, z, q):
        k2 = np.broadcast_to(np.asarray(k2, float), np.broadcast(z, q).shape)
        pos = k2 > 0
        safe = np.where(pos, k2, 1.0)
        return np.where(pos, (safe * z - q) ** 2 / (2.0 * safe), 0.0)

    def conj(self, k2, q):
        return q * q / (2.0 * k2)

    def inverse_b(self, k2, q):
        return q / k2


NONLINEARITIES = {"sinh": SinhNonlinearity(), "linear": LinearNonlinearity()}


def get_nonlinearity(name: str):
    try:
        return NONLINEARITIES[name]
    except KeyError:
        raise ScalarDomainError(f"unknown nonlinearity {name!r}") from None
