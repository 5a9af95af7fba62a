"""Natural L-spline interpolation on a finite knot set.

For |xi| > 0 the interpolant lives in the span of kernel translates
phi(t - t_k); for xi = 0 it is the natural polynomial spline of degree 2p-1.
Either way the result is also carried as a piecewise sum of exponential
polynomials, written in coordinates local to each interval so that nothing
of the form exp(|xi| t) is ever formed for large |xi| t.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .analysis import (
    composite_gauss_legendre,
    growth_constant,
    panel_breaks,
    quad_inner,
)
from .errors import (
    CompetitorNotInterpolating,
    DerivativeOrderTooHigh,
    InsufficientKnots,
    InvalidKnots,
    NotPositiveDefinite,
    PsiNotVanishing,
    SingularSystem,
    XiBelowHalf,
)
from .kernel import (
    ExpPolynomial,
    KernelParams,
    dominance_threshold,
    eval_kernel,
    eval_kernel_derivative,
    kernel_coefficients,
    shift_poly,
)

# tails are cut here for quadrature; exp(-2*40) is far below double precision
TAIL_DECAY_LENGTHS = 40.0


@dataclass(frozen=True, eq=False)
class KnotSet:
    knots: np.ndarray
    min_gap: float = field(init=False)

    def __post_init__(self):
        k = np.array(self.knots, dtype=float, ndmin=1)
        if k.ndim != 1 or k.size < 2:
            raise InvalidKnots("need at least two knots")
        if not np.all(np.isfinite(k)):
            raise InvalidKnots("knots must be finite")
        gaps = np.diff(k)
        if np.any(gaps <= 0):
            raise InvalidKnots("knots must be strictly increasing")
        k.setflags(write=False)
        object.__setattr__(self, "knots", k)
        object.__setattr__(self, "min_gap", float(gaps.min()))

    @property
    def N(self) -> int:
        return self.knots.size - 1

    def __len__(self):
        return self.knots.size

    def check_order(self, p: int):
        if not 2 <= p <= self.N + 1:
            raise InsufficientKnots(f"order p = {p} needs 2 <= p <= N+1 = {self.N + 1}")


def as_knots(knots) -> KnotSet:
    return knots if isinstance(knots, KnotSet) else KnotSet(knots)


# ---------------------------------------------------------------------------
# piecewise exponential polynomials


@dataclass(frozen=True, eq=False)
class Piece:
    lo: float
    hi: float
    terms: tuple

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if not self.terms:
            return np.zeros(t.shape)
        return sum(term(t) for term in self.terms)

    def map_terms(self, fn):
        return Piece(self.lo, self.hi, tuple(fn(term) for term in self.terms))


class PiecewiseExp:
    """A function given by one :class:`Piece` per interval of
    (-inf, t_0), (t_0, t_1), ..., (t_N, inf)."""

    def __init__(self, knots, pieces):
        self.knots = np.asarray(knots, dtype=float)
        self.pieces = tuple(pieces)
        if len(self.pieces) != self.knots.size + 1:
            raise ValueError("need one piece per interval including both tails")
        self._derivs = {0: self}

    def piece_index(self, t, side="+"):
        return np.searchsorted(self.knots, t, side="right" if side == "+" else "left")

    def _eval(self, t, side):
        t = np.asarray(t, dtype=float)
        idx = self.piece_index(t, side)
        out = None
        for i in np.unique(idx):
            mask = idx == i
            vals = self.pieces[i](t[mask])
            if out is None:
                out = np.zeros(t.shape, dtype=np.result_type(vals, float))
            elif np.iscomplexobj(vals) and not np.iscomplexobj(out):
                out = out.astype(complex)
            out[mask] = vals
        if out is None:
            out = np.zeros(t.shape)
        return out

    def __call__(self, t, m: int = 0):
        return self.derivative(m)._eval(t, "+")

    def one_sided(self, t, m: int = 0, side: str = "+"):
        """Limit from the right ('+') or left ('-'); at a knot this picks the
        adjacent piece, elsewhere it is the ordinary value."""
        return self.derivative(m)._eval(t, side)

    def derivative(self, m: int = 1) -> "PiecewiseExp":
        if m not in self._derivs:
            prev = self.derivative(m - 1)
            self._derivs[m] = PiecewiseExp(
                self.knots, [pc.map_terms(lambda e: e.derivative()) for pc in prev.pieces]
            )
        return self._derivs[m]

    def apply_factor(self, rate: float, power: int) -> "PiecewiseExp":
        """(d/dt - rate)^power, applied exactly to every term."""
        return PiecewiseExp(
            self.knots, [pc.map_terms(lambda e: e.shift_factor(rate, power)) for pc in self.pieces]
        )

    def conj(self):
        return PiecewiseExp(self.knots, [pc.map_terms(lambda e: e.conj()) for pc in self.pieces])

    def inner(self, other: "PiecewiseExp"):
        """Exact int f conj(g) over the real line."""
        total = 0.0
        for pf, pg in zip(self.pieces, other.pieces):
            for a in pf.terms:
                for b in pg.terms:
                    total = total + (a * b.conj()).integrate(pf.lo, pf.hi)
        return total

    def inner_on(self, other, which):
        total = 0.0
        for i in which:
            pf, pg = self.pieces[i], other.pieces[i]
            for a in pf.terms:
                for b in pg.terms:
                    total = total + (a * b.conj()).integrate(pf.lo, pf.hi)
        return total

    def norm2(self):
        return float(np.real(self.inner(self)))


def _intervals(knots):
    k = list(knots)
    return list(zip([-math.inf] + k, k + [math.inf]))


# ---------------------------------------------------------------------------
# spline object


@dataclass(frozen=True, eq=False)
class NaturalSpline1D:
    """Natural L_xi-spline on ``knots`` interpolating ``values``.

    ``rbf_coeffs`` are the weights of the kernel translates (for xi = 0 the
    weights of |t - t_k|^(2p-1), with ``poly_part`` holding the polynomial
    term); they are ``None`` for splines produced by the collocation oracle.
    """

    params: KernelParams
    knots: KnotSet
    values: np.ndarray
    piecewise: PiecewiseExp
    rbf_coeffs: np.ndarray | None = None
    poly_part: ExpPolynomial | None = None
    method: str = "rbf"

    @property
    def p(self):
        return self.params.p

    @property
    def xi_norm(self):
        return self.params.xi_norm

    @property
    def pieces(self):
        return self.piecewise.pieces

    def _check_order(self, m):
        if m < 0 or m > 2 * self.p - 2:
            raise DerivativeOrderTooHigh(
                f"spline is C^{2 * self.p - 2}; derivative order {m} is not defined"
            )

    def __call__(self, t, m: int = 0):
        self._check_order(m)
        return self.piecewise(t, m)

    def one_sided(self, t, m: int = 0, side: str = "+"):
        return self.piecewise.one_sided(t, m, side)

    def evaluate_rbf(self, t, m: int = 0):
        """Evaluate from the kernel-translate representation instead of the pieces."""
        self._check_order(m)
        if self.rbf_coeffs is None:
            raise ValueError("spline has no RBF representation")
        t = np.asarray(t, dtype=float)
        diff = t[..., None] - self.knots.knots
        if self.xi_norm > 0:
            vals = eval_kernel_derivative(self.params, m, diff)
            return vals @ self.rbf_coeffs
        q = 2 * self.p - 1
        fall = math.perm(q, m)
        vals = fall * np.abs(diff) ** (q - m) * np.sign(diff) ** m
        return vals @ self.rbf_coeffs + self.poly_part.derivative(m)(t)

    def support(self, m: int = 0):
        k = self.knots.knots
        if self.xi_norm > 0:
            r = TAIL_DECAY_LENGTHS / self.xi_norm
            return (k[0] - r, k[-1] + r)
        if m >= self.p:
            return (k[0], k[-1])
        return (-math.inf, math.inf)

    def operator(self, sign: int = -1) -> PiecewiseExp:
        """(d/dt + sign |xi|)^p applied exactly; sign=-1 is the left natural operator."""
        return self.piecewise.apply_factor(-sign * self.xi_norm, self.p)

    def __add__(self, other):
        if not isinstance(other, NaturalSpline1D):
            return NotImplemented
        return _combine(self, other, 1.0, 1.0)

    def scaled(self, c):
        return _combine(self, self, c, 0.0)


def _combine(a, b, ca, cb):
    if a.params != b.params or not np.array_equal(a.knots.knots, b.knots.knots):
        raise ValueError("splines live on different spaces")
    pieces = [
        Piece(pa.lo, pa.hi, tuple(t.scale(ca) for t in pa.terms) + tuple(t.scale(cb) for t in pb.terms))
        for pa, pb in zip(a.pieces, b.pieces)
    ]
    rbf = None
    if a.rbf_coeffs is not None and b.rbf_coeffs is not None:
        rbf = ca * a.rbf_coeffs + cb * b.rbf_coeffs
    poly = None
    if a.poly_part is not None and b.poly_part is not None:
        poly = ExpPolynomial(0.0, ca * a.poly_part.b + cb * b.poly_part.reanchor(a.poly_part.anchor).b,
                             a.poly_part.anchor)
    return NaturalSpline1D(a.params, a.knots, ca * a.values + cb * b.values,
                           PiecewiseExp(a.knots.knots, pieces), rbf, poly, a.method)


def evaluate(s: NaturalSpline1D, t, m: int = 0):
    """m-th derivative of ``s`` at ``t`` (piecewise form, local coordinates)."""
    return s(t, m)


# ---------------------------------------------------------------------------
# Gram matrix and Lagrange basis


@dataclass(frozen=True, eq=False)
class GramMatrix:
    entries: np.ndarray
    xi_norm: float
    p: int


@dataclass(frozen=True, eq=False)
class LagrangeBasis:
    a: np.ndarray
    params: KernelParams
    knots: KnotSet
    cond_estimate: float
    residual: float
    eigenvalues: np.ndarray


def build_gram(params: KernelParams, knots) -> GramMatrix:
    if params.xi_norm <= 0:
        raise ValueError("the Gram matrix needs xi_norm > 0")
    k = as_knots(knots).knots
    M = eval_kernel(params, k[:, None] - k[None, :])
    M.setflags(write=False)
    return GramMatrix(M, params.xi_norm, params.p)


def solve_lagrange(params: KernelParams, knots) -> LagrangeBasis:
    """Cholesky solve of M a^T = I; row j of ``a`` holds the weights of L_j."""
    if params.xi_norm <= 0:
        raise ValueError("xi_norm = 0 takes the polynomial path (natural_spline_zero)")
    knots = as_knots(knots)
    knots.check_order(params.p)
    M = build_gram(params, knots).entries
    eig = np.linalg.eigvalsh(M)
    cond = float(eig[-1] / eig[0]) if eig[0] > 0 else math.inf
    try:
        factor = linalg.cho_factor(M, lower=True)
    except linalg.LinAlgError as exc:
        raise NotPositiveDefinite(
            f"Gram matrix not positive definite at |xi|={params.xi_norm} (cond ~ {cond:.3g})",
            cond,
        ) from exc
    eye = np.eye(M.shape[0])
    aT = linalg.cho_solve(factor, eye)
    residual = float(np.max(np.abs(M @ aT - eye)))
    a = aT.T.copy()
    a.setflags(write=False)
    return LagrangeBasis(a, params, knots, cond, residual, eig)


def _rbf_pieces(params: KernelParams, knots: np.ndarray, w: np.ndarray):
    xi = params.xi_norm
    cx = np.asarray(kernel_coefficients(params.p).c) * xi ** np.arange(params.p)
    alt = cx * (-1.0) ** np.arange(params.p)
    dtype = np.result_type(w, float)
    n = knots.size

    def decaying(anchor, ks):
        # sum of w_k phi(t - t_k) for t >= t_k, about anchor >= t_k
        b = np.zeros(params.p, dtype=dtype)
        for k in ks:
            d = anchor - knots[k]
            b += w[k] * math.exp(-xi * d) * shift_poly(cx, d)
        return ExpPolynomial(-xi, b, anchor)

    def growing(anchor, ks):
        # |t - t_k| = e - x with e = t_k - anchor >= 0
        b = np.zeros(params.p, dtype=dtype)
        for k in ks:
            e = knots[k] - anchor
            b += w[k] * math.exp(-xi * e) * shift_poly(alt, -e)
        return ExpPolynomial(xi, b, anchor)

    pieces = []
    for i, (lo, hi) in enumerate(_intervals(knots)):
        if i == 0:
            terms = (growing(knots[0], range(n)).restrict(lo, hi),)
        elif i == n:
            terms = (decaying(knots[-1], range(n)).restrict(lo, hi),)
        else:
            terms = (
                decaying(lo, range(i)).restrict(lo, hi),
                growing(hi, range(i, n)).restrict(lo, hi),
            )
        pieces.append(Piece(lo, hi, terms))
    return PiecewiseExp(knots, pieces)


def interpolate(basis: LagrangeBasis, values) -> NaturalSpline1D:
    y = np.asarray(values)
    if y.shape != (len(basis.knots),):
        raise ValueError(f"expected {len(basis.knots)} values, got shape {y.shape}")
    if not np.all(np.isfinite(y)):
        raise ValueError("values must be finite")
    w = basis.a.T @ y
    pw = _rbf_pieces(basis.params, basis.knots.knots, w)
    return NaturalSpline1D(basis.params, basis.knots, y.copy(), pw, w, None, "rbf")


def lagrange_function(basis: LagrangeBasis, j: int) -> NaturalSpline1D:
    return interpolate(basis, np.eye(len(basis.knots))[j])


# ---------------------------------------------------------------------------
# xi = 0: natural polynomial splines


def natural_spline_zero(p: int, knots, values) -> NaturalSpline1D:
    """Natural spline of degree 2p-1 from the basis |t - t_k|^(2p-1) plus a
    polynomial of degree p-1, with the moment conditions sum_k w_k t_k^i = 0."""
    params = KernelParams(p, 0.0)
    knots = as_knots(knots)
    knots.check_order(p)
    k = knots.knots
    y = np.asarray(values)
    if y.shape != k.shape:
        raise ValueError(f"expected {k.size} values, got shape {y.shape}")
    q = 2 * p - 1
    centre = 0.5 * (k[0] + k[-1])
    scale = 0.5 * (k[-1] - k[0])
    u = (k - centre) / scale
    A = np.abs(u[:, None] - u[None, :]) ** q
    P = u[:, None] ** np.arange(p)
    n = k.size
    sys = np.zeros((n + p, n + p))
    sys[:n, :n], sys[:n, n:], sys[n:, :n] = A, P, P.T
    rhs = np.zeros(n + p, dtype=np.result_type(y, float))
    rhs[:n] = y
    try:
        sol = np.linalg.solve(sys, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem("polyharmonic system is singular") from exc
    w = sol[:n] / scale**q
    poly = ExpPolynomial(0.0, sol[n:] / scale ** np.arange(p), centre)

    mono = np.zeros(q + 1)
    mono[q] = 1.0
    dtype = np.result_type(w, float)

    def at(anchor, signs):
        b = np.zeros(q + 1, dtype=dtype)
        for kk in range(n):
            b += signs[kk] * w[kk] * shift_poly(mono, anchor - k[kk])
        pb = poly.reanchor(anchor).b
        b[: len(pb)] += pb
        return b

    pieces = []
    for i, (lo, hi) in enumerate(_intervals(k)):
        if i == 0:
            b = at(k[0], -np.ones(n))[:p]
            anchor = k[0]
        elif i == n:
            b = at(k[-1], np.ones(n))[:p]
            anchor = k[-1]
        else:
            b = at(lo, np.where(np.arange(n) < i, 1.0, -1.0))
            anchor = lo
        pieces.append(Piece(lo, hi, (ExpPolynomial(0.0, b, anchor, (lo, hi)),)))
    return NaturalSpline1D(params, knots, y.copy(), PiecewiseExp(k, pieces), w, poly, "polyharmonic")


def natural_spline(p: int, xi_norm: float, knots, values) -> NaturalSpline1D:
    if xi_norm == 0:
        return natural_spline_zero(p, knots, values)
    return interpolate(solve_lagrange(KernelParams(p, xi_norm), knots), values)


# ---------------------------------------------------------------------------
# collocation oracle


@dataclass(frozen=True, eq=False)
class CollocationSystem:
    matrix: np.ndarray
    rhs: np.ndarray
    basis: list  # per interval, list of ExpPolynomial basis functions

    @property
    def size(self):
        return self.matrix.shape[0]


def _null_space_basis(p, xi, lo, hi):
    if xi > 0:
        dec = [ExpPolynomial(-xi, np.eye(p)[l] * xi**l, lo, (lo, hi)) for l in range(p)]
        gro = [ExpPolynomial(xi, np.eye(p)[l] * xi**l, hi, (lo, hi)) for l in range(p)]
        return dec + gro
    h = hi - lo
    return [ExpPolynomial(0.0, np.eye(2 * p)[l] / h**l, lo, (lo, hi)) for l in range(2 * p)]


def collocation_system(params: KernelParams, knots, values) -> CollocationSystem:
    """Assemble the 2pN x 2pN system on the interior intervals.

    Rows: N+1 interpolation conditions, (2p-1)(N-1) continuity conditions at
    the interior knots, and p-1 endpoint conditions at each end.
    """
    p, xi = params.p, params.xi_norm
    knots = as_knots(knots)
    knots.check_order(p)
    k = knots.knots
    N = knots.N
    y = np.asarray(values)
    basis = [_null_space_basis(p, xi, k[j - 1], k[j]) for j in range(1, N + 1)]
    size = 2 * p * N
    rows, rhs = [], []

    def row(entries):
        r = np.zeros(size)
        for j, vals in entries:
            r[2 * p * j: 2 * p * (j + 1)] += vals
        return r

    def values_at(j, t, fn):
        return np.array([fn(b)(t) for b in basis[j]], dtype=float)

    for i in range(N + 1):
        j = 0 if i == 0 else i - 1
        rows.append(row([(j, values_at(j, k[i], lambda b: b))]))
        rhs.append(y[i])
    for i in range(1, N):
        for d in range(2 * p - 1):
            left = values_at(i - 1, k[i], lambda b, d=d: b.derivative(d))
            right = values_at(i, k[i], lambda b, d=d: b.derivative(d))
            rows.append(row([(i - 1, left), (i, -right)]))
            rhs.append(0.0)
    for m in range(p - 1):
        rows.append(row([(0, values_at(0, k[0], lambda b, m=m: b.shift_factor(xi, p).derivative(m)))]))
        rhs.append(0.0)
        rows.append(row([(N - 1, values_at(N - 1, k[-1], lambda b, m=m: b.shift_factor(-xi, p).derivative(m)))]))
        rhs.append(0.0)
    A = np.array(rows)
    b = np.array(rhs, dtype=np.result_type(y, float))
    if A.shape != (size, size):
        raise AssertionError(f"collocation system has shape {A.shape}, expected {size}x{size}")
    return CollocationSystem(A, b, basis)


def collocation_solve(params: KernelParams, knots, values) -> NaturalSpline1D:
    """Independent solve in the null-space basis of L_xi; works for xi = 0 too."""
    p, xi = params.p, params.xi_norm
    knots = as_knots(knots)
    k = knots.knots
    system = collocation_system(params, knots, values)
    A, b = system.matrix, system.rhs
    scale = np.max(np.abs(A), axis=1)
    A, b = A / scale[:, None], b / scale
    if np.linalg.cond(A) > 1e14:
        raise SingularSystem("collocation system is numerically singular")
    coef = np.linalg.solve(A, b)

    pieces = [None] * (knots.N + 2)
    for j, funcs in enumerate(system.basis):
        c = coef[2 * p * j: 2 * p * (j + 1)]
        lo, hi = k[j], k[j + 1]
        if xi > 0:
            dec = ExpPolynomial(-xi, c[:p] * xi ** np.arange(p), lo, (lo, hi))
            gro = ExpPolynomial(xi, c[p:] * xi ** np.arange(p), hi, (lo, hi))
            pieces[j + 1] = Piece(lo, hi, (dec, gro))
        else:
            h = hi - lo
            pieces[j + 1] = Piece(lo, hi, (ExpPolynomial(0.0, c / h ** np.arange(2 * p), lo, (lo, hi)),))

    def tail(piece, at, rate):
        derivs = []
        for i in range(p):
            derivs.append(sum(term.derivative(i)(at) for term in piece.terms))
        bcoef = [
            sum(math.comb(kk, i) * (-rate) ** (kk - i) * derivs[i] for i in range(kk + 1)) / math.factorial(kk)
            for kk in range(p)
        ]
        return np.array(bcoef, dtype=np.result_type(*derivs, float))

    pieces[0] = Piece(-math.inf, k[0], (ExpPolynomial(xi, tail(pieces[1], k[0], xi), k[0], (-math.inf, k[0])),))
    pieces[-1] = Piece(k[-1], math.inf, (ExpPolynomial(-xi, tail(pieces[-2], k[-1], -xi), k[-1], (k[-1], math.inf)),))
    y = np.asarray(values)
    return NaturalSpline1D(params, knots, y.copy(), PiecewiseExp(k, pieces), None, None, "collocation")


# ---------------------------------------------------------------------------
# identities and energies


def _operator_values(f, rate, power, t):
    """(d/dt - rate)^power f at t, for a test function f(t, m)."""
    return sum(math.comb(power, j) * (-rate) ** (power - j) * f(t, j) for j in range(power + 1))


def _panel_length(xi):
    return min(1.0, 2.0 / xi) if xi > 0 else 1.0


@dataclass(frozen=True)
class IdentityResidual:
    value: complex
    scale: float

    @property
    def relative(self):
        return abs(self.value) / self.scale if self.scale > 0 else abs(self.value)


def _check_vanishing(psi, knots, rtol=1e-10):
    lo, hi = psi.support(0)
    grid = np.linspace(lo, hi, 2001)
    scale = max(np.max(np.abs(psi(grid))), 1e-300)
    at = np.abs(psi(np.asarray(knots.knots)))
    if np.any(at > rtol * scale):
        raise PsiNotVanishing(f"test function does not vanish at the knots (max {at.max():.3g})")


def _quad_operator_inner(s: NaturalSpline1D, psi, sign, n=40):
    rate = -sign * s.xi_norm
    op_s = s.operator(sign)
    lo_s, hi_s = s.support(s.p)
    lo_p, hi_p = psi.support(0)
    lo, hi = max(lo_s, lo_p), min(hi_s, hi_p)
    nodes, weights = composite_gauss_legendre(
        panel_breaks(s.knots.knots, lo, hi, _panel_length(s.xi_norm)), n)
    a = op_s(nodes)
    b = _operator_values(psi, rate, s.p, nodes)
    val = np.sum(weights * a * np.conj(b))
    norm_b = math.sqrt(float(np.sum(weights * np.abs(b) ** 2)))
    return val, norm_b


def fundamental_identity_residual(s: NaturalSpline1D, psi, sign: int = -1) -> IdentityResidual:
    """J = int (d/dt -+ |xi|)^p s * conj((d/dt -+ |xi|)^p psi) dt, which vanishes
    for every admissible psi with psi(t_j) = 0.

    ``sign=-1`` uses d/dt - |xi| and ``sign=+1`` the adjoint-side factor.
    The returned scale is the Cauchy-Schwarz bound ||op s|| ||op psi||.
    """
    _check_vanishing(psi, s.knots)
    growth_constant(psi, s.knots.knots)
    val, norm_psi = _quad_operator_inner(s, psi, sign)
    norm_s = math.sqrt(max(s.operator(sign).norm2(), 0.0))
    return IdentityResidual(val, norm_s * norm_psi)


def binomial_identity_check(s: NaturalSpline1D, psi, sign: int = -1):
    """Both sides of int (D - |xi|)^p s conj((D - |xi|)^p psi)
    = sum_m C(p,m) |xi|^(2(p-m)) int s^(m) conj(psi^(m)), by quadrature."""
    p, xi = s.p, s.xi_norm
    lhs, _ = _quad_operator_inner(s, psi, sign)
    rhs = 0.0
    for m in range(p + 1):
        weight = math.comb(p, m) * xi ** (2 * (p - m))
        if weight == 0:
            continue
        rhs = rhs + weight * quad_inner(s, psi, m, s.knots.knots, _panel_length(xi))
    return lhs, rhs


def energy_1d(s: NaturalSpline1D, sign: int = -1) -> float:
    """int |(d/dt -+ |xi|)^p s|^2 dt by exact integration of the pieces."""
    return s.operator(sign).norm2()


def binomial_terms(s: NaturalSpline1D, g: NaturalSpline1D | None = None):
    """Per-m terms C(p,m) |xi|^(2(p-m)) int s^(m) conj(g^(m)), exactly integrated.

    Terms with a zero weight are skipped (for xi = 0 only m = p survives)."""
    g = s if g is None else g
    p, xi = s.p, s.xi_norm
    out = {}
    for m in range(p + 1):
        weight = math.comb(p, m) * xi ** (2 * (p - m))
        if weight == 0:
            continue
        out[m] = weight * s.piecewise.derivative(m).inner(g.piecewise.derivative(m))
    return out


def energy_by_quadrature(f, p: int, xi_norm: float, knots, sign: int = -1, n: int = 40) -> float:
    """int |(d/dt -+ |xi|)^p f|^2 dt for any test function ``f(t, m)``."""
    rate = -sign * xi_norm
    k = as_knots(knots).knots
    lo, hi = f.support(p)
    nodes, weights = composite_gauss_legendre(panel_breaks(k, lo, hi, _panel_length(xi_norm)), n)
    v = _operator_values(f, rate, p, nodes)
    return float(np.sum(weights * np.abs(v) ** 2))


class _SplinePlus:
    """s + psi as a test function."""

    def __init__(self, s, psi, c=1.0):
        self.s, self.psi, self.c = s, psi, c

    def __call__(self, t, m=0):
        return self.s(t, m) + self.c * self.psi(t, m)

    def support(self, m=0):
        a, b = self.s.support(m), self.psi.support(m)
        return min(a[0], b[0]), max(a[1], b[1])


def perturb(s: NaturalSpline1D, psi, c=1.0):
    return _SplinePlus(s, psi, c)


@dataclass(frozen=True)
class VariationalRecord:
    energy_spline: float
    energy_competitor: float
    energy_difference: float
    margin: float

    @property
    def pythagoras_error(self):
        return abs(self.margin - self.energy_difference) / max(self.energy_difference, 1e-300)


def variational_check_1d(s: NaturalSpline1D, competitors, rtol: float = 1e-9):
    """Energy of each interpolating competitor against the spline's."""
    k = s.knots.knots
    scale = max(np.max(np.abs(s.values)), 1e-300)
    e_s = energy_1d(s)
    out = []
    for f in competitors:
        if np.any(np.abs(f(k) - s.values) > rtol * scale):
            raise CompetitorNotInterpolating("competitor does not match the data at the knots")
        e_f = energy_by_quadrature(f, s.p, s.xi_norm, k)
        diff = _Difference(f, s)
        e_d = energy_by_quadrature(diff, s.p, s.xi_norm, k)
        out.append(VariationalRecord(e_s, e_f, e_d, e_f - e_s))
    return out


class _Difference:
    def __init__(self, f, g):
        self.f, self.g = f, g

    def __call__(self, t, m=0):
        return self.f(t, m) - self.g(t, m)

    def support(self, m=0):
        a, b = self.f.support(m), self.g.support(m)
        return min(a[0], b[0]), max(a[1], b[1])


# ---------------------------------------------------------------------------
# diagonal dominance and stability


@dataclass(frozen=True)
class DominanceReport:
    rho: float
    bound: float
    dominant: bool
    lambda_min: float
    delta: float
    mu: float


def diag_dominance_report(params: KernelParams, knots) -> DominanceReport:
    knots = as_knots(knots)
    M = build_gram(params, knots).entries
    c0 = kernel_coefficients(params.p).c0_diag
    off = M.sum(axis=1) - np.diag(M)
    rho = float(off.max())
    delta = dominance_threshold(params.p, knots.N)
    lam = float(np.linalg.eigvalsh(M)[0])
    return DominanceReport(rho, c0 - rho, rho <= c0 / 2, lam, delta, delta / knots.min_gap)


@dataclass
class StabilityReport:
    p: int
    ratios: dict  # (xi, j, m) -> sup_t |L_j^(m)(t)| / (1 + xi^m)

    def worst(self, xi, m):
        return max(v for (x, _, mm), v in self.ratios.items() if x == xi and mm == m)

    def growth(self, m, xi_hi, xi_lo):
        return self.worst(xi_hi, m) / self.worst(xi_lo, m)

    @property
    def empirical_c0(self):
        return max(self.ratios.values())


def _scan_grid(knots, xi, margin=3.0):
    step = min(0.01, 1.0 / (20.0 * xi))
    lo, hi = knots[0] - margin, knots[-1] + margin
    n = int(math.ceil((hi - lo) / step)) + 1
    return np.union1d(np.linspace(lo, hi, n), knots)


def stability_scan(p: int, knots, xi_list, m_list) -> StabilityReport:
    knots = as_knots(knots)
    ratios = {}
    for xi in xi_list:
        if xi < 0.5:
            raise XiBelowHalf(f"stability bound is stated for |xi| >= 1/2, got {xi}")
        basis = solve_lagrange(KernelParams(p, xi), knots)
        grid = _scan_grid(knots.knots, xi)
        for j in range(len(knots)):
            L = lagrange_function(basis, j)
            for m in m_list:
                if m > 2 * p - 2:
                    raise DerivativeOrderTooHigh(f"m = {m} exceeds 2p-2")
                sup = max(np.max(np.abs(L.one_sided(grid, m, "+"))),
                          np.max(np.abs(L.one_sided(grid, m, "-"))))
                ratios[(xi, j, m)] = float(sup / (1.0 + xi**m))
    return StabilityReport(p, ratios)
