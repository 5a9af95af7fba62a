"""Numerical plumbing: quadrature, finite differences, test functions, oracles.

Nothing in here knows how the splines are solved; the oracles are meant to
check the solvers from the outside.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy import integrate, interpolate, signal

from .errors import PointTooClose
from .kernel import KernelParams, kernel_fourier_transform, kernel_coefficients


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray
    interval: tuple

    def __call__(self, f):
        return np.sum(self.weights * f(self.nodes))


@lru_cache(maxsize=64)
def _leggauss(n):
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_legendre(n: int, a: float, b: float) -> QuadratureRule:
    if n < 1 or not a < b:
        raise ValueError("gauss_legendre needs n >= 1 and a < b")
    x, w = _leggauss(n)
    half = 0.5 * (b - a)
    return QuadratureRule(nodes=half * x + 0.5 * (a + b), weights=half * w, interval=(a, b))


def composite_gauss_legendre(breaks, n: int = 40):
    """Nodes and weights of an n-point rule on every panel of ``breaks``."""
    breaks = np.asarray(breaks, dtype=float)
    x, w = _leggauss(n)
    a, b = breaks[:-1, None], breaks[1:, None]
    half = 0.5 * (b - a)
    nodes = half * x + 0.5 * (a + b)
    weights = half * w
    return nodes.ravel(), weights.ravel()


def panel_breaks(knots, lo: float, hi: float, max_panel: float = 1.0):
    """Sorted breakpoints covering [lo, hi], containing every knot inside it,
    with no panel longer than ``max_panel``."""
    pts = [lo, hi] + [k for k in knots if lo < k < hi]
    pts = np.unique(pts)
    out = [pts[0]]
    for a, b in zip(pts[:-1], pts[1:]):
        k = max(1, int(math.ceil((b - a) / max_panel)))
        out.extend(np.linspace(a, b, k + 1)[1:])
    return np.asarray(out)


# ---------------------------------------------------------------------------
# finite differences


@dataclass(frozen=True, eq=False)
class FDStencil:
    order: int
    accuracy: int
    offsets: np.ndarray
    coefficients: np.ndarray


@lru_cache(maxsize=None)
def fd_stencil(order: int, accuracy: int = 4) -> FDStencil:
    """Central stencil for the ``order``-th derivative, solved in exact arithmetic."""
    if order < 0 or accuracy < 2 or accuracy % 2:
        raise ValueError("need order >= 0 and an even accuracy >= 2")
    npts = 2 * ((order + 1) // 2) - 1 + accuracy
    r = npts // 2
    offs = list(range(-r, r + 1))
    size = len(offs)
    # rows: sum_k w_k k^i = i! delta_{i,order}
    A = [[Fraction(k) ** i for k in offs] + [Fraction(math.factorial(i) if i == order else 0)]
         for i in range(size)]
    for col in range(size):
        piv = next(i for i in range(col, size) if A[i][col] != 0)
        A[col], A[piv] = A[piv], A[col]
        inv = 1 / A[col][col]
        A[col] = [v * inv for v in A[col]]
        for i in range(size):
            if i != col and A[i][col] != 0:
                f = A[i][col]
                A[i] = [vi - f * vc for vi, vc in zip(A[i], A[col])]
    w = np.array([float(A[i][-1]) for i in range(size)])
    return FDStencil(order, accuracy, np.array(offs, dtype=float), w)


def finite_difference(f, t: float, m: int, h: float, accuracy: int = 4) -> float:
    """Central finite-difference estimate of f^(m)(t)."""
    if m > 6 or h <= 0:
        raise ValueError("finite_difference supports m <= 6 and h > 0")
    st = fd_stencil(m, accuracy)
    vals = np.asarray(f(t + st.offsets * h))
    return np.sum(st.coefficients * vals) / h**m


# 4th-order second derivative, integer weights over 12
_D2 = np.array([-1, 16, -30, 16, -1], dtype=np.int64)


@lru_cache(maxsize=None)
def _laplacian_power_weights(dims: int, power: int):
    lap = np.zeros((5,) * dims, dtype=np.int64)
    for d in range(dims):
        idx = [2] * dims
        for k in range(5):
            idx[d] = k
            lap[tuple(idx)] += _D2[k]
    out = np.ones((1,) * dims, dtype=np.int64)
    for _ in range(power):
        out = signal.convolve(out, lap, method="direct")
    nz = np.argwhere(out != 0)
    centre = (np.array(out.shape) - 1) // 2
    offsets = nz - centre
    weights = out[tuple(nz.T)].astype(float)
    return offsets, weights


def _laplacian_power_terms(F, power, point, h, knots):
    point = np.asarray(point, dtype=float)
    dims = point.size
    if power == 0:
        return np.array([0]), np.array([1.0]), np.asarray(F(point[:1], point[None, 1:]))
    reach = 2 * power * h
    if knots is not None and np.min(np.abs(np.asarray(knots) - point[0])) <= reach:
        raise PointTooClose(
            f"t = {point[0]} is within the stencil reach {reach} of a knot hyperplane"
        )
    offsets, weights = _laplacian_power_weights(dims, power)
    pts = point + offsets * h
    vals = np.asarray(F(pts[:, 0], pts[:, 1:]))
    return offsets, weights / (12.0 * h * h) ** power, vals


def laplacian_power_residual(F, p: int, point, h: float, knots=None):
    """Finite-difference estimate of Delta^p F at ``point`` = (t, y_1, ..., y_n).

    ``F(t, y)`` takes an array of t values of shape (M,) and y values of shape
    (M, n).  The stencil is the 4th-order 5-point second difference in every
    coordinate, composed p times, so it reaches 2ph from the point along t.
    """
    _, w, vals = _laplacian_power_terms(F, p, point, h, knots)
    out = np.sum(w * vals)
    return complex(out) if np.iscomplexobj(out) else float(out)


# ---------------------------------------------------------------------------
# test functions


@dataclass(frozen=True, eq=False)
class GaussPoly:
    """t -> exp(-(t - center)^2 / width) * Q(t - center).

    Every derivative is of the same form, so all orders are exact and square
    integrable.  ``q`` holds ascending coefficients of Q in u = t - center.
    """

    center: float
    width: float
    q: np.ndarray

    def __post_init__(self):
        q = np.array(self.q, dtype=np.result_type(np.asarray(self.q), float), ndmin=1)
        q.setflags(write=False)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "_cache", {0: q})

    @classmethod
    def vanishing_at(cls, knots, center, width, amplitude=1.0):
        roots = np.asarray(knots, dtype=float) - center
        q = np.polynomial.polynomial.polyfromroots(roots) * amplitude
        return cls(center, width, q)

    def coeffs(self, m: int):
        cache = self._cache
        if m not in cache:
            prev = self.coeffs(m - 1)
            d = np.polynomial.polynomial.polyder(prev) if len(prev) > 1 else np.zeros(1)
            shifted = np.concatenate([[0.0], prev]) * (-2.0 / self.width)
            out = shifted.astype(np.result_type(prev, float))
            out[: len(d)] += d
            cache[m] = out
        return cache[m]

    def __call__(self, t, m: int = 0):
        u = np.asarray(t, dtype=float) - self.center
        return np.exp(-u * u / self.width) * np.polynomial.polynomial.polyval(u, self.coeffs(m))

    def scaled(self, c):
        return GaussPoly(self.center, self.width, self.q * c)

    def conj(self):
        return GaussPoly(self.center, self.width, np.conj(self.q))

    def support(self, m: int = 0):
        r = math.sqrt(self.width * 80.0) + 1.0
        return (self.center - r, self.center + r)


class Combination:
    """Linear combination sum_i coef_i * f_i of test functions."""

    def __init__(self, terms):
        self.terms = [(complex(c) if np.iscomplexobj(c) else float(c), f) for c, f in terms]

    def __call__(self, t, m: int = 0):
        return sum(c * f(t, m) for c, f in self.terms)

    def support(self, m: int = 0):
        sups = [f.support(m) for _, f in self.terms]
        return (min(s[0] for s in sups), max(s[1] for s in sups))


def intersect_support(f, g, m):
    a, b = f.support(m), g.support(m)
    return max(a[0], b[0]), min(a[1], b[1])


def quad_inner(f, g, m: int, knots, max_panel: float = 1.0, n: int = 40):
    """Composite Gauss-Legendre value of int f^(m) conj(g^(m)) dt.

    Panels break at the knots; the range is the intersection of the two
    effective supports.
    """
    lo, hi = intersect_support(f, g, m)
    if not hi > lo:
        return 0.0
    if not (np.isfinite(lo) and np.isfinite(hi)):
        raise ValueError("integrand has no finite effective support")
    nodes, weights = composite_gauss_legendre(panel_breaks(knots, lo, hi, max_panel), n)
    return np.sum(weights * f(nodes, m) * np.conj(g(nodes, m)))


def growth_constant(f, knots=(), max_panel=1.0):
    """C = max(|f(0)|, ||f'||_2): then |f(t)| <= C (1 + |t|^(1/2)) for all t."""
    d1 = math.sqrt(abs(quad_inner(f, f, 1, knots, max_panel)))
    return max(abs(complex(f(np.array([0.0]))[0])), d1)


def check_polynomial_growth(f, samples, knots=()):
    c = growth_constant(f, knots)
    samples = np.asarray(samples, dtype=float)
    ok = np.all(np.abs(f(samples)) <= c * (1.0 + np.sqrt(np.abs(samples))) * (1 + 1e-12))
    return c, bool(ok)


# ---------------------------------------------------------------------------
# independent oracles


def kernel_by_fourier_inversion(params: KernelParams, t: float) -> float:
    """Normalized kernel from numerical inversion of its Fourier transform."""
    p, xi = params.p, params.xi_norm
    g = kernel_coefficients(p).gamma_p
    scale = g * xi ** (2 * p - 1) / math.pi * (-1.0) ** p

    def fhat(u):
        return kernel_fourier_transform(params, u)

    if t == 0:
        val, _ = integrate.quad(fhat, 0, np.inf, epsabs=0, epsrel=1e-13, limit=400)
    else:
        # QAWF complains about its extrapolation table once the cycles are
        # below rounding; the value is still accurate
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            val, _ = integrate.quad(fhat, 0, np.inf, weight="cos", wvar=abs(t),
                                    epsabs=1e-15, limlst=200)
    return scale * val


def euler_integral_by_quadrature(l: int, xi_norm: float) -> float:
    val, _ = integrate.quad(lambda u: u ** (2 * l) * np.exp(-2 * xi_norm * u), 0, np.inf,
                            epsabs=0, epsrel=1e-13, limit=400)
    return val


def natural_cubic_oracle(knots, values):
    """Classical natural cubic interpolant, valid on [t_0, t_N]."""
    return interpolate.CubicSpline(np.asarray(knots, float), np.asarray(values), bc_type="natural")
