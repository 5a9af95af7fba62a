"""Exponential radial kernel of the operator (d^2/dt^2 - |xi|^2)^p.

The normalized kernel is

    phi(t) = exp(-|xi||t|) * sum_l c_l (|xi||t|)^l,   l = 0..p-1,

with c_l = (2p-2-l)! 2^l / (l! (p-1-l)!).  It is the integrable fundamental
solution scaled by (-1)^p gamma_p |xi|^(2p-1), gamma_p = (p-1)! 2^(2p-1), so
it is positive, even, and equal to c_0 = (2p-2)!/(p-1)! at the origin.

Everything here is a pure function of immutable inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy import special

from .errors import DerivativeOrderTooHigh, OrderOutOfRange, OverflowRisk

MAX_ORDER = 20
# exp(700) is close to the float64 ceiling
_EXP_LIMIT = 700.0
TRANSLATE_LIMIT = 30.0


@dataclass(frozen=True)
class KernelParams:
    p: int
    xi_norm: float

    def __post_init__(self):
        _check_order(self.p)
        if not np.isfinite(self.xi_norm) or self.xi_norm < 0:
            raise ValueError(f"xi_norm must be finite and >= 0, got {self.xi_norm}")
        object.__setattr__(self, "xi_norm", float(self.xi_norm))


@dataclass(frozen=True)
class KernelCoefficients:
    p: int
    c: tuple
    gamma_p: int
    c0_diag: float


@dataclass(frozen=True, eq=False)
class DerivTable:
    """Rows ``c_ml[m]`` give phi^(m)(t) = |xi|^m e^{-u} sum_l c_ml[m, l] u^l, u = |xi|t > 0."""

    p: int
    c_ml: np.ndarray

    def row(self, m: int) -> np.ndarray:
        return self.c_ml[m]


def _check_order(p):
    if isinstance(p, bool) or int(p) != p:
        raise OrderOutOfRange(f"order p must be an integer, got {p!r}")
    if p < 2 or p > MAX_ORDER:
        raise OrderOutOfRange(f"order p must satisfy 2 <= p <= {MAX_ORDER}, got {p}")


@lru_cache(maxsize=None)
def _exact_coefficients(p):
    f = math.factorial
    return tuple(
        Fraction(f(2 * p - 2 - l) * 2**l, f(l) * f(p - 1 - l)) for l in range(p)
    )


def kernel_coefficients(p: int) -> KernelCoefficients:
    _check_order(p)
    exact = _exact_coefficients(p)
    gamma_p = math.factorial(p - 1) * 2 ** (2 * p - 1)
    c0 = Fraction(math.factorial(2 * p - 2), math.factorial(p - 1))
    assert exact[0] == c0
    return KernelCoefficients(
        p=p, c=tuple(float(v) for v in exact), gamma_p=gamma_p, c0_diag=float(c0)
    )


@lru_cache(maxsize=None)
def _exact_deriv_rows(p, max_order):
    rows = [list(_exact_coefficients(p))]
    for _ in range(max_order):
        prev = rows[-1] + [Fraction(0)]
        rows.append([(l + 1) * prev[l + 1] - prev[l] for l in range(p)])
    return rows


def deriv_table(p: int, max_order: int | None = None) -> DerivTable:
    """Derivative coefficients via c_{m+1,l} = (l+1) c_{m,l+1} - c_{m,l}.

    ``max_order`` defaults to 2p-2, the smoothness order of the kernel; larger
    values give the one-sided rows needed to inspect the jump at the origin.
    """
    _check_order(p)
    if max_order is None:
        max_order = 2 * p - 2
    rows = _exact_deriv_rows(p, int(max_order))
    table = np.array([[float(v) for v in r] for r in rows])
    table.setflags(write=False)
    return DerivTable(p=p, c_ml=table)


def _horner(coeffs, u):
    acc = np.zeros_like(u, dtype=float)
    for c in coeffs[::-1]:
        acc = acc * u + c
    return acc


def psi(p: int, u):
    """Radial profile psi(u) = e^{-u} sum_l c_l u^l for u >= 0."""
    u = np.asarray(u, dtype=float)
    return np.exp(-u) * _horner(kernel_coefficients(p).c, u)


def eval_kernel(params: KernelParams, t):
    """Normalized kernel phi(t); vectorized over ``t``."""
    if params.xi_norm <= 0:
        raise ValueError("eval_kernel requires xi_norm > 0")
    u = params.xi_norm * np.abs(np.asarray(t, dtype=float))
    out = np.exp(-u) * _horner(kernel_coefficients(params.p).c, u)
    return out if out.ndim else float(out)


def eval_kernel_derivative(params: KernelParams, m: int, t, side: str | None = None):
    """m-th derivative of the normalized kernel.

    With ``side=None`` this is the two-sided derivative, defined for
    m <= 2p-2; at t = 0 it is zero for odd m.  With ``side`` equal to '+' or
    '-' the one-sided limit at t = 0 is returned and any order is allowed.
    """
    p, xi = params.p, params.xi_norm
    if xi <= 0:
        raise ValueError("eval_kernel_derivative requires xi_norm > 0")
    if m < 0:
        raise ValueError("derivative order must be >= 0")
    if side is None and m > 2 * p - 2:
        raise DerivativeOrderTooHigh(
            f"kernel is only C^{2 * p - 2}; requested order {m}"
        )
    if side not in (None, "+", "-"):
        raise ValueError("side must be None, '+' or '-'")
    row = deriv_table(p, max(m, 2 * p - 2)).row(m)
    t = np.asarray(t, dtype=float)
    u = xi * np.abs(t)
    val = xi**m * np.exp(-u) * _horner(row, u)
    if side is None:
        sign = np.where(t < 0, (-1.0) ** m, 1.0)
        out = np.where((t == 0) & (m % 2 == 1), 0.0, sign * val)
    else:
        neg = (t < 0) | ((t == 0) & (side == "-"))
        out = np.where(neg, (-1.0) ** m * val, val)
    return out if out.ndim else float(out)


def kernel_fourier_transform(params: KernelParams, u):
    """Fourier transform (-1)^p / (u^2 + |xi|^2)^p of the un-normalized kernel."""
    if params.xi_norm <= 0:
        raise ValueError("kernel_fourier_transform requires xi_norm > 0")
    u = np.asarray(u, dtype=float)
    out = (-1.0) ** params.p / (u**2 + params.xi_norm**2) ** params.p
    return out if out.ndim else float(out)


def tail_moment(l: int, xi_norm: float) -> float:
    """Euler integral: int_0^inf u^(2l) exp(-2|xi|u) du = (2l)! / (2|xi|)^(2l+1)."""
    if l < 0 or xi_norm <= 0:
        raise ValueError("tail_moment requires l >= 0 and xi_norm > 0")
    return math.factorial(2 * l) / (2.0 * xi_norm) ** (2 * l + 1)


def psi_sup(p: int) -> float:
    """Numerical maximum of psi over u >= 0 (dense scan plus local refinement)."""
    from scipy.optimize import minimize_scalar

    grid = np.linspace(0.0, 20.0 * p, 4001)
    vals = psi(p, grid)
    i = int(np.argmax(vals))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    best = float(vals[i])
    if hi > lo:
        res = minimize_scalar(lambda u: -psi(p, u), bounds=(lo, hi), method="bounded")
        best = max(best, float(-res.fun))
    return best


def dominance_threshold(p: int, n_intervals: int) -> float:
    """Smallest u* with psi(u) <= c_0/(2N) for every u >= u*.

    psi is decreasing whenever the first derivative row is non-positive,
    which makes the tail set an interval and bisection exact.
    """
    if n_intervals < 1:
        raise ValueError("need at least one interval")
    c0 = kernel_coefficients(p).c0_diag
    target = c0 / (2.0 * n_intervals)
    if psi(p, 0.0) <= target:
        return 0.0
    monotone = np.all(deriv_table(p).row(1) <= 0)
    hi = 1.0
    while psi(p, hi) > target:
        hi *= 2.0
    if not monotone:
        # walk the grid from the right to find the last crossing
        grid = np.linspace(0.0, hi, 20001)
        above = np.nonzero(psi(p, grid) > target)[0]
        lo, hi = grid[above[-1]], grid[above[-1] + 1]
    else:
        lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if psi(p, mid) > target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * hi:
            break
    return hi


# ---------------------------------------------------------------------------
# exponential polynomials


def shift_poly(b, d):
    """Coefficients of Q(u) = P(u + d) for P with ascending coefficients ``b``."""
    b = np.asarray(b)
    n = len(b)
    out = np.zeros(n, dtype=np.result_type(b, float))
    for l in range(n):
        if b[l] == 0:
            continue
        for r in range(l + 1):
            out[r] += b[l] * math.comb(l, r) * d ** (l - r)
    return out


@dataclass(frozen=True, eq=False)
class ExpPolynomial:
    """t -> exp(sigma (t - anchor)) * sum_l b[l] (t - anchor)^l on ``support``."""

    sigma: float
    b: np.ndarray
    anchor: float = 0.0
    support: tuple = field(default=(-math.inf, math.inf))

    def __post_init__(self):
        b = np.array(self.b, dtype=np.result_type(np.asarray(self.b), float), ndmin=1)
        b.setflags(write=False)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "sigma", float(self.sigma))
        object.__setattr__(self, "anchor", float(self.anchor))

    @property
    def degree(self):
        return len(self.b) - 1

    def __call__(self, t):
        x = np.asarray(t, dtype=float) - self.anchor
        acc = np.zeros(x.shape, dtype=self.b.dtype)
        for c in self.b[::-1]:
            acc = acc * x + c
        return np.exp(self.sigma * x) * acc

    def _with(self, **kw):
        args = dict(sigma=self.sigma, b=self.b, anchor=self.anchor, support=self.support)
        args.update(kw)
        return ExpPolynomial(**args)

    def scale(self, c):
        return self._with(b=self.b * c)

    def conj(self):
        return self._with(b=np.conj(self.b))

    def restrict(self, lo, hi):
        return self._with(support=(lo, hi))

    def shift_factor(self, rate: float, power: int = 1):
        """Apply (d/dt - rate)^power."""
        b = np.array(self.b)
        for _ in range(power):
            db = np.arange(1, len(b)) * b[1:]
            nb = (self.sigma - rate) * b
            nb[: len(db)] += db
            b = nb
        return self._with(b=b)

    def derivative(self, m: int = 1):
        return self.shift_factor(0.0, m)

    def reanchor(self, anchor: float):
        """Same function written in powers of (t - anchor)."""
        d = float(anchor) - self.anchor
        expo = self.sigma * d
        if expo > _EXP_LIMIT:
            raise OverflowRisk(f"re-anchoring overflows: exponent {expo:.1f}")
        b = shift_poly(self.b, d) * math.exp(expo)
        return self._with(b=b, anchor=anchor)

    def __mul__(self, other: "ExpPolynomial"):
        lo = max(self.support[0], other.support[0])
        hi = min(self.support[1], other.support[1])
        # pick the common anchor whose scale factor is smaller
        e1 = other.sigma * (self.anchor - other.anchor)
        e2 = self.sigma * (other.anchor - self.anchor)
        if e1 <= e2:
            anchor, expo = self.anchor, e1
            p1, p2 = self.b, shift_poly(other.b, self.anchor - other.anchor)
        else:
            anchor, expo = other.anchor, e2
            p1, p2 = shift_poly(self.b, other.anchor - self.anchor), other.b
        if expo > _EXP_LIMIT:
            raise OverflowRisk(f"product overflows: exponent {expo:.1f}")
        return ExpPolynomial(
            self.sigma + other.sigma,
            np.convolve(p1, p2) * math.exp(expo),
            anchor,
            (lo, hi),
        )

    def integrate(self, lo: float | None = None, hi: float | None = None):
        """Exact integral over [lo, hi] (defaults to the support).

        The polynomial is re-expanded about the endpoint where the exponential
        is largest, and the remaining integrals are incomplete gamma values,
        which stay accurate for any |sigma| * length.
        """
        lo = self.support[0] if lo is None else lo
        hi = self.support[1] if hi is None else hi
        if hi <= lo:
            return 0.0 * self.b[0]
        x0, x1 = lo - self.anchor, hi - self.anchor
        s = self.sigma
        if not np.any(self.b):
            return 0.0 * self.b[0]
        if s == 0.0:
            if not (np.isfinite(x0) and np.isfinite(x1)):
                return math.inf
            q = shift_poly(self.b, x0)
            k = np.arange(len(q))
            return np.sum(q * (x1 - x0) ** (k + 1) / (k + 1))
        ref = x1 if s > 0 else x0
        if not np.isfinite(ref):
            return math.inf
        length = x1 - x0
        z = abs(s) * length
        if z <= 1.0:
            # mild exponential: Gauss-Legendre is exact to rounding here and
            # avoids |s|^(k+1) underflowing for tiny rates
            x, w = np.polynomial.legendre.leggauss(len(self.b) // 2 + 16)
            half = 0.5 * length
            nodes = half * x + 0.5 * (x0 + x1)
            vals = np.exp(s * nodes) * np.polynomial.polynomial.polyval(nodes, self.b)
            return half * np.sum(w * vals)
        q = shift_poly(self.b, ref)
        k = np.arange(len(q))
        frac = np.ones(len(q)) if np.isinf(z) else special.gammainc(k + 1, z)
        fact = special.factorial(k)
        base = fact * frac / abs(s) ** (k + 1)
        if s > 0:
            base = base * (-1.0) ** k
        return math.exp(s * ref) * np.sum(q * base)


def translate_exp_poly(e: ExpPolynomial, shift: float) -> ExpPolynomial:
    """The function t -> e(t - shift), written about the same anchor as ``e``."""
    if abs(e.sigma * shift) > TRANSLATE_LIMIT:
        raise OverflowRisk(
            f"|sigma*shift| = {abs(e.sigma * shift):.1f} exceeds {TRANSLATE_LIMIT}; "
            "use piecewise-local coordinates"
        )
    moved = e._with(
        anchor=e.anchor + shift, support=(e.support[0] + shift, e.support[1] + shift)
    )
    return moved.reanchor(e.anchor)
