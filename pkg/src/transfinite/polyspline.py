"""Polysplines on parallel hyperplanes by separation of variables.

Data f_j(y) on the hyperplanes t = t_j, periodic in y on T^n = [0, 2pi)^n, is
split into Fourier modes; each mode xi gets its own natural L_|xi|-spline in
t, and the surface is the synthesis

    S(t, y) = sum_xi S_xi(t) exp(i <xi, y>).

Fourier coefficients are normalized so that this synthesis holds literally
(f = sum f_xi e^{i xi y}).  Integrals over T^n therefore pick up a factor
(2pi)^n, which is applied once in every seminorm and Parseval formula here.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .analysis import GaussPoly, composite_gauss_legendre, gauss_legendre, laplacian_power_residual, panel_breaks, quad_inner
from .errors import (
    DerivativeOrderTooHigh,
    GridTooCoarse,
    InadmissibleTestFunction,
    PsiNotVanishing,
    SolverError,
    TransfiniteError,
)
from .kernel import ExpPolynomial, KernelParams
from .spline1d import (
    KnotSet,
    NaturalSpline1D,
    Piece,
    PiecewiseExp,
    as_knots,
    binomial_terms,
    energy_1d,
    interpolate,
    lagrange_function,
    natural_spline_zero,
    solve_lagrange,
)

CONVENTION = "normalized"
TORUS = 2.0 * math.pi


@dataclass(frozen=True, eq=False)
class PolyConfig:
    p: int
    knots: KnotSet
    n: int = 1
    K: int = 4
    grid_m: int = 16

    def __post_init__(self):
        object.__setattr__(self, "knots", as_knots(self.knots))
        self.knots.check_order(self.p)
        if self.n < 1:
            raise ValueError("need at least one periodic variable")
        if self.K < 0:
            raise ValueError("truncation radius K must be >= 0")
        if self.grid_m < 2 * self.K + 1:
            raise GridTooCoarse(f"grid_m = {self.grid_m} < 2K+1 = {2 * self.K + 1}")

    def to_dict(self):
        return {"p": self.p, "knots": [float(t) for t in self.knots.knots], "n": self.n,
                "K": self.K, "grid_m": self.grid_m}

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["p"]), KnotSet(d["knots"]), int(d.get("n", 1)), int(d.get("K", 4)),
                   int(d.get("grid_m", 16)))


def modes(n: int, K: int):
    """All xi in Z^n with |xi|_inf <= K, by sup-norm shell then lexicographically."""
    all_xi = itertools.product(range(-K, K + 1), repeat=n)
    return sorted(all_xi, key=lambda x: (max((abs(v) for v in x), default=0), x))


def xi_norm(xi) -> float:
    return math.sqrt(sum(v * v for v in xi))


def y_grid(n: int, m: int):
    """Uniform grid points 2pi k/m, shape (m^n, n), row-major."""
    axis = TORUS * np.arange(m) / m
    mesh = np.meshgrid(*([axis] * n), indexing="ij")
    return np.stack([g.ravel() for g in mesh], axis=-1)


@dataclass(frozen=True, eq=False)
class HyperplaneData:
    slices: np.ndarray
    provenance: str = "sampled"

    def __post_init__(self):
        s = np.asarray(self.slices)
        if s.ndim < 2:
            raise ValueError("slices need shape (N+1, m, ..., m)")
        if len(set(s.shape[1:])) != 1:
            raise ValueError(f"slices must be sampled on a square grid, got {s.shape[1:]}")
        if not np.all(np.isfinite(s)):
            raise ValueError("slice values must be finite")
        s = s.copy()
        s.setflags(write=False)
        object.__setattr__(self, "slices", s)

    @property
    def n(self):
        return self.slices.ndim - 1

    @property
    def grid_m(self):
        return self.slices.shape[1]


@dataclass(frozen=True, eq=False)
class FourierData:
    modes: tuple
    coeffs: dict
    wiener_norms: np.ndarray
    discarded_fraction: float
    is_real: bool
    convention: str = CONVENTION


def analyze(config: PolyConfig, data: HyperplaneData) -> FourierData:
    s = data.slices
    if s.shape[0] != len(config.knots):
        raise ValueError(f"{s.shape[0]} slices for {len(config.knots)} knots")
    if data.n != config.n:
        raise ValueError(f"slices have {data.n} periodic axes, config says {config.n}")
    m = data.grid_m
    if m < 2 * config.K + 1:
        raise GridTooCoarse(f"grid of {m} points per axis cannot resolve K = {config.K}")
    axes = tuple(range(1, s.ndim))
    hat = np.fft.fftn(s, axes=axes) / m**config.n
    retained = modes(config.n, config.K)
    coeffs = {}
    kept = 0.0
    for xi in retained:
        idx = (slice(None),) + tuple(v % m for v in xi)
        c = hat[idx].copy()
        c.setflags(write=False)
        coeffs[xi] = c
        kept += float(np.sum(np.abs(c) ** 2))
    total = float(np.sum(np.abs(hat) ** 2))
    discarded = 0.0 if total == 0 else max(total - kept, 0.0) / total
    wiener = np.zeros(s.shape[0])
    for xi, c in coeffs.items():
        wiener += np.abs(c) * (1.0 + xi_norm(xi)) ** (2 * config.p - 2)
    return FourierData(tuple(retained), coeffs, wiener, discarded, bool(np.isrealobj(s)))


def synthesize(fdata: FourierData, n: int, m: int):
    """Evaluate sum_xi f_xi e^{i xi y} on the uniform grid; shape (N+1, m, ..., m)."""
    pts = y_grid(n, m)
    out = 0
    for xi, c in fdata.coeffs.items():
        out = out + c[:, None] * np.exp(1j * pts @ np.asarray(xi, dtype=float))[None, :]
    out = np.asarray(out).reshape((-1,) + (m,) * n)
    return out.real if fdata.is_real else out


def band_limited_data(config: PolyConfig, seed: int = 0, K_data: int | None = None,
                      real: bool = True, decay: float = 1.0) -> HyperplaneData:
    """Random slices whose spectrum lives in |xi|_inf <= K_data, sampled on the config grid."""
    rng = np.random.default_rng(seed)
    K_data = config.K if K_data is None else K_data
    N1 = len(config.knots)
    coeffs = {}
    for xi in modes(config.n, K_data):
        if real and xi in coeffs:
            continue
        amp = (1.0 + xi_norm(xi)) ** (-decay)
        c = amp * (rng.standard_normal(N1) + 1j * rng.standard_normal(N1))
        if real:
            neg = tuple(-v for v in xi)
            if neg == xi:
                c = c.real.astype(complex)
            coeffs[neg] = np.conj(c)
        coeffs[xi] = c
    fd = FourierData(tuple(coeffs), coeffs, np.zeros(N1), 0.0, real)
    return HyperplaneData(synthesize(fd, config.n, config.grid_m), "synthetic-fourier")


# ---------------------------------------------------------------------------
# model


@dataclass(frozen=True, eq=False)
class PolysplineModel:
    config: PolyConfig
    per_xi: dict
    is_real: bool
    convention: str = CONVENTION
    cond_estimates: dict = field(default_factory=dict)

    @property
    def p(self):
        return self.config.p

    def nonzero_modes(self):
        return [xi for xi, s in self.per_xi.items() if np.any(s.values != 0)]


def fit(config: PolyConfig, fdata: FourierData) -> PolysplineModel:
    """One natural spline per retained mode; Lagrange bases are shared by |xi|."""
    missing = [xi for xi in modes(config.n, config.K) if xi not in fdata.coeffs]
    if missing:
        raise ValueError(f"Fourier data lacks {len(missing)} retained modes, e.g. {missing[0]}")
    if not np.all(np.isfinite(fdata.wiener_norms)):
        raise ValueError("Wiener norms of the data are not finite")
    bases = {}
    per_xi, conds = {}, {}
    for xi in modes(config.n, config.K):
        values = np.asarray(fdata.coeffs[xi], dtype=complex)
        r = xi_norm(xi)
        try:
            if r == 0:
                spline = natural_spline_zero(config.p, config.knots, values)
            else:
                if r not in bases:
                    bases[r] = solve_lagrange(KernelParams(config.p, r), config.knots)
                spline = interpolate(bases[r], values)
                conds[xi] = bases[r].cond_estimate
        except TransfiniteError as exc:
            raise SolverError(f"solve failed for xi = {xi}: {exc}", xi) from exc
        per_xi[xi] = spline
    return PolysplineModel(config, per_xi, fdata.is_real, fdata.convention, conds)


def fit_data(config: PolyConfig, data: HyperplaneData) -> PolysplineModel:
    return fit(config, analyze(config, data))


def _check_deriv(p, m, beta, n):
    beta = tuple(beta) if beta is not None else (0,) * n
    if len(beta) != n:
        raise ValueError(f"derivative multi-index needs {n} y-components")
    if m < 0 or min(beta, default=0) < 0:
        raise ValueError("derivative orders must be nonnegative")
    if m + sum(beta) > 2 * p - 2:
        raise DerivativeOrderTooHigh(
            f"total order {m + sum(beta)} exceeds the smoothness order 2p-2 = {2 * p - 2}")
    return beta


def _mode_factor(xi, beta):
    return np.prod([(1j * x) ** b for x, b in zip(xi, beta)]) if beta else 1.0


def evaluate_points(model: PolysplineModel, t, y, m: int = 0, beta=None, check=True):
    """S or its (m, beta) derivative at paired points: t shape (M,), y shape (M, n)."""
    n = model.config.n
    beta = _check_deriv(model.p, m, beta, n) if check else (tuple(beta) if beta else (0,) * n)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    y = np.asarray(y, dtype=float).reshape(t.size, n)
    out = np.zeros(t.size, dtype=complex)
    for xi, s in model.per_xi.items():
        f = _mode_factor(xi, beta)
        if f == 0 or not np.any(s.values):
            continue
        prof = s.piecewise(t, m) if not check else s(t, m)
        out += f * prof * np.exp(1j * (y @ np.asarray(xi, dtype=float)))
    return out.real if model.is_real else out


def evaluate_model(model: PolysplineModel, t: float, y, deriv=(0,)):
    """S(t, y); ``deriv`` = (m, b_1, ..., b_n) selects a termwise derivative."""
    m, beta = deriv[0], tuple(deriv[1:]) or None
    out = evaluate_points(model, np.array([t]), np.asarray(y, dtype=float).reshape(1, -1), m, beta)
    return out[0].item()


def evaluate_grid(model: PolysplineModel, t_grid, y_axes, deriv=(0,)):
    """Tensor-grid evaluation, shape (len(t), len(y_1), ..., len(y_n)).

    Flattening in C order gives the row-major layout: t varies slowest, the
    last y axis fastest.
    """
    n = model.config.n
    m, beta = deriv[0], _check_deriv(model.p, deriv[0], tuple(deriv[1:]) or None, n)
    t = np.atleast_1d(np.asarray(t_grid, dtype=float))
    ys = [np.atleast_1d(np.asarray(a, dtype=float)) for a in y_axes]
    if len(ys) != n:
        raise ValueError(f"need {n} y axes")
    out = np.zeros((t.size,) + tuple(a.size for a in ys), dtype=complex)
    for xi, s in model.per_xi.items():
        f = _mode_factor(xi, beta)
        if f == 0 or not np.any(s.values):
            continue
        term = f * s(t, m)
        for d, a in enumerate(ys):
            term = np.multiply.outer(term, np.exp(1j * xi[d] * a))
        out += term
    return out.real if model.is_real else out


# ---------------------------------------------------------------------------
# seminorm


@dataclass(frozen=True)
class SeminormReport:
    total: float
    per_xi: dict
    per_xi_m: dict
    factored: dict

    def deltas(self):
        out = {}
        for xi, v in self.per_xi.items():
            f = self.factored[xi]
            scale = max(abs(v), abs(f))
            out[xi] = 0.0 if scale == 0 else abs(v - f) / scale
        return out

    @property
    def max_delta(self):
        return max(self.deltas().values(), default=0.0)


def duchon_seminorm(model: PolysplineModel) -> SeminormReport:
    """Squared Duchon seminorm, exactly integrated mode by mode.

    J_xi = sum_m C(p,m) |xi|^(2(p-m)) int |S_xi^(m)|^2 comes from the
    multinomial collapse of sum_{|alpha|=p} p!/alpha! |d^alpha S|^2; the
    factored form int |(d/dt - |xi|)^p S_xi|^2 is computed independently.
    Both are per unit torus volume; ``total`` includes the (2pi)^n factor.
    """
    per_xi, per_xi_m, factored = {}, {}, {}
    for xi, s in model.per_xi.items():
        if not np.any(s.values):
            per_xi[xi], per_xi_m[xi], factored[xi] = 0.0, {}, 0.0
            continue
        terms = {m: float(np.real(v)) for m, v in binomial_terms(s).items()}
        per_xi_m[xi] = terms
        per_xi[xi] = sum(terms.values())
        factored[xi] = energy_1d(s)
    total = TORUS**model.config.n * sum(per_xi.values())
    return SeminormReport(float(total), per_xi, per_xi_m, factored)


def mode_seminorm_quadrature(f, p: int, r: float, knots, n_nodes: int = 40, g=None):
    """sum_m C(p,m) r^(2(p-m)) int f^(m) conj(g^(m)) by composite Gauss-Legendre."""
    g = f if g is None else g
    panel = min(1.0, 2.0 / r) if r > 0 else 1.0
    total = 0.0
    for m in range(p + 1):
        w = math.comb(p, m) * r ** (2 * (p - m))
        if w == 0:
            continue
        total = total + w * quad_inner(f, g, m, knots, panel, n_nodes)
    return total


class _Sum:
    def __init__(self, *fs):
        self.fs = fs

    def __call__(self, t, m=0):
        return sum(f(t, m) for f in self.fs)

    def support(self, m=0):
        sups = [f.support(m) for f in self.fs]
        return min(a for a, _ in sups), max(b for _, b in sups)


def _check_competitor(model, G, rtol=1e-10):
    k = model.config.knots.knots
    for xi, g in G.items():
        if len(xi) != model.config.n:
            raise InadmissibleTestFunction(f"mode {xi} has the wrong dimension")
        lo, hi = g.support(0)
        scale = np.max(np.abs(g(np.linspace(lo, hi, 2001))))
        if np.any(np.abs(g(k)) > rtol * max(scale, 1e-300)):
            raise PsiNotVanishing(f"competitor mode {xi} does not vanish on the hyperplanes")


@dataclass(frozen=True)
class InnerProductReport:
    inner: complex
    norm_s: float
    norm_g: float

    @property
    def abs(self):
        return abs(self.inner)

    @property
    def relative(self):
        d = self.norm_s * self.norm_g
        return self.abs / d if d > 0 else self.abs


def _inner_sg(model, G):
    p, n, k = model.p, model.config.n, model.config.knots.knots
    inner = 0.0
    for xi, g in G.items():
        s = model.per_xi.get(tuple(xi))
        if s is None or not np.any(s.values):
            continue
        inner = inner + mode_seminorm_quadrature(s, p, xi_norm(xi), k, g=g)
    return TORUS**n * inner


def _norm_g2(model, G):
    p, n, k = model.p, model.config.n, model.config.knots.knots
    return TORUS**n * sum(float(np.real(mode_seminorm_quadrature(g, p, xi_norm(xi), k))) for xi, g in G.items())


def orthogonality_check(model: PolysplineModel, G: dict) -> InnerProductReport:
    """<S, G>_{B_p} for a competitor given as per-mode profiles g_xi(t) that vanish at the knots."""
    _check_competitor(model, G)
    inner = _inner_sg(model, G)
    norm_s = math.sqrt(max(duchon_seminorm(model).total, 0.0))
    norm_g = math.sqrt(max(_norm_g2(model, G), 0.0))
    return InnerProductReport(inner, norm_s, norm_g)


@dataclass(frozen=True)
class CompetitorRecord:
    norm_s2: float
    norm_f2: float
    norm_g2: float
    cross: complex
    direct_f2: float

    @property
    def margin(self):
        return self.norm_f2 - self.norm_s2

    @property
    def pythagoras_error(self):
        return abs(self.margin - self.norm_g2) / self.norm_g2 if self.norm_g2 > 0 else abs(self.margin)


def variational_check(model: PolysplineModel, competitors) -> list:
    """Seminorm of F = S + G against that of S, term by term and directly.

    ``norm_f2`` is |S|^2 + 2 Re<S,G> + |G|^2; ``direct_f2`` integrates
    the per-mode profiles of F itself.
    """
    p, n, k = model.p, model.config.n, model.config.knots.knots
    s2 = duchon_seminorm(model).total
    out = []
    for G in competitors:
        _check_competitor(model, G)
        cross = _inner_sg(model, G)
        g2 = _norm_g2(model, G)
        direct = 0.0
        for xi, s in model.per_xi.items():
            g = G.get(xi)
            r = xi_norm(xi)
            if g is None:
                direct += float(np.real(binomial_total(s)))
            elif np.any(s.values):
                direct += float(np.real(mode_seminorm_quadrature(_Sum(s, g), p, r, k)))
            else:
                direct += float(np.real(mode_seminorm_quadrature(g, p, r, k)))
        for xi, g in G.items():
            if xi not in model.per_xi:
                direct += float(np.real(mode_seminorm_quadrature(g, p, xi_norm(xi), k)))
        direct *= TORUS**n
        out.append(CompetitorRecord(s2, s2 + 2 * float(np.real(cross)) + g2, g2, cross, direct))
    return out


def binomial_total(s: NaturalSpline1D):
    if not np.any(s.values):
        return 0.0
    return sum(binomial_terms(s).values())


def bump_competitor(model: PolysplineModel, rng, n_modes: int = 2, K_modes: int | None = None):
    """Random admissible perturbation: a few modes, each a Gaussian-windowed
    polynomial vanishing at every knot."""
    cfg = model.config
    k = cfg.knots.knots
    K_modes = cfg.K if K_modes is None else K_modes
    pool = modes(cfg.n, K_modes)
    picks = rng.choice(len(pool), size=min(n_modes, len(pool)), replace=False)
    G = {}
    span = k[-1] - k[0]
    for i in picks:
        xi = pool[int(i)]
        centre = rng.uniform(k[0] - 0.5, k[-1] + 0.5)
        width = rng.uniform(0.3, 1.0) * max(span, 1.0)
        amp = complex(rng.standard_normal(), rng.standard_normal()) / max(1.0, span) ** len(k)
        G[xi] = GaussPoly.vanishing_at(k, centre, width, amp)
    return G


# ---------------------------------------------------------------------------
# Parseval


def _profile_t_range(F):
    sups = [f.support(0) for f in F.values()]
    lo, hi = min(a for a, _ in sups), max(b for _, b in sups)
    if not (np.isfinite(lo) and np.isfinite(hi)):
        raise ValueError("Parseval check needs profiles with finite effective support")
    return lo, hi


def parseval_check(F: dict, alpha, n_y: int = 48, n_t: int = 40, max_panel: float = 0.5):
    """Both sides of int_R int_T^n |d^alpha F|^2 = (2pi)^n sum_xi xi^(2 beta) int |F_xi^(m)|^2.

    ``F`` maps modes xi to profiles f_xi(t, m).  The left side is a direct
    tensor Gauss-Legendre rule in (t, y); the right side integrates each
    profile in t alone.
    """
    m, beta = int(alpha[0]), tuple(int(b) for b in alpha[1:])
    n = len(beta)
    lo, hi = _profile_t_range(F)
    tn, tw = composite_gauss_legendre(panel_breaks([], lo, hi, max_panel), n_t)
    rule = gauss_legendre(n_y, 0.0, TORUS)
    yn, yw = rule.nodes, rule.weights
    ypts = np.stack([g.ravel() for g in np.meshgrid(*([yn] * n), indexing="ij")], axis=-1)
    ywts = np.prod(np.stack([g.ravel() for g in np.meshgrid(*([yw] * n), indexing="ij")], axis=-1), axis=-1)
    field_ = np.zeros((tn.size, ypts.shape[0]), dtype=complex)
    for xi, f in F.items():
        fac = _mode_factor(xi, beta)
        if fac == 0:
            continue
        field_ += np.outer(fac * f(tn, m), np.exp(1j * ypts @ np.asarray(xi, dtype=float)))
    lhs = float(tw @ (np.abs(field_) ** 2) @ ywts)
    rhs = 0.0
    for xi, f in F.items():
        w = float(np.prod([float(x) ** (2 * b) for x, b in zip(xi, beta)]))
        if w == 0:
            continue
        nodes, weights = tn, tw
        rhs += w * float(np.sum(weights * np.abs(f(nodes, m)) ** 2))
    return lhs, TORUS**n * rhs


def model_profiles(model: PolysplineModel):
    return {xi: s for xi, s in model.per_xi.items() if np.any(s.values)}


def duchon_by_quadrature(model: PolysplineModel, n_y: int | None = None, n_t: int = 40):
    """sum_{|alpha|=p} p!/alpha! int int |d^alpha S|^2 by direct (t, y) quadrature.

    The y rule is the uniform grid with more than 2K points per axis, which is
    exact for the trigonometric polynomials that appear.
    """
    cfg = model.config
    p, n, k = cfg.p, cfg.n, cfg.knots.knots
    live = model_profiles(model)
    if not live:
        return 0.0
    r_min = min((xi_norm(x) for x in live if any(x)), default=None)
    pad = 40.0 / r_min if r_min else 0.0
    lo, hi = k[0] - pad, k[-1] + pad
    panel = min(1.0, 2.0 / max(xi_norm(x) for x in live)) if any(any(x) for x in live) else 1.0
    tn, tw = composite_gauss_legendre(panel_breaks(k, lo, hi, panel), n_t)
    M = n_y or (2 * cfg.K + 2)
    ypts = y_grid(n, M)
    yw = (TORUS / M) ** n
    total = 0.0
    for alpha in _multi_indices(p, n + 1):
        m, beta = alpha[0], alpha[1:]
        weight = math.factorial(p) / math.prod(math.factorial(a) for a in alpha)
        field_ = np.zeros((tn.size, ypts.shape[0]), dtype=complex)
        for xi, s in live.items():
            fac = _mode_factor(xi, beta)
            if fac == 0:
                continue
            if xi_norm(xi) == 0 and m < p:
                continue
            field_ += np.outer(fac * s.piecewise(tn, m), np.exp(1j * ypts @ np.asarray(xi, dtype=float)))
        total += weight * float(tw @ np.sum(np.abs(field_) ** 2, axis=1)) * yw
    return total


def _multi_indices(order, dims):
    if dims == 1:
        yield (order,)
        return
    for first in range(order, -1, -1):
        for rest in _multi_indices(order - first, dims - 1):
            yield (first,) + rest


# ---------------------------------------------------------------------------
# Beppo Levi tails


@dataclass
class TailReport:
    p: int
    tail_norms: dict          # (xi, alpha) -> tail L2 norm of d^alpha (S_xi e^{i xi y})
    finite: bool
    lagrange_constants: dict  # |xi| -> max_j T(L_j) / |xi|^(p-1/2)
    data_ratios: dict         # xi -> T(S_xi) / (|xi|^(p-1/2) sum_j |f_j,xi|)
    zero_mode_tail: float

    @property
    def radii(self):
        return sorted(self.lagrange_constants)

    def spread(self):
        """max/min of the law constants over the retained radii."""
        vals = [v for v in self.lagrange_constants.values() if v > 0]
        return max(vals) / min(vals) if vals else 1.0

    def growth(self):
        """Largest C(r2)/C(r1) over r1 < r2: how much faster than the law the tails grow."""
        rs = self.radii
        c = self.lagrange_constants
        return max((c[b] / c[a] for i, a in enumerate(rs) for b in rs[i + 1:]), default=1.0)

    def data_within_bound(self):
        for xi, v in self.data_ratios.items():
            if v > self.lagrange_constants[xi_norm(xi)] * (1 + 1e-9):
                return False
        return True


def _tail_norm2(piecewise: PiecewiseExp, m: int):
    d = piecewise.derivative(m)
    last = len(d.pieces) - 1
    return float(np.real(d.inner_on(d, [0, last])))


def _alpha_weight(xi, beta):
    return float(np.prod([float(x) ** (2 * b) for x, b in zip(xi, beta)]))


def tail_energy(s: NaturalSpline1D, r: float, n: int) -> float:
    """T^2 = (2pi)^n sum_m C(p,m) r^(2(p-m)) int_tails |s^(m)|^2, which equals
    sum_{|alpha|=p} p!/alpha! int_tails int_T^n |d^alpha (s e^{i xi y})|^2."""
    p = s.p
    total = 0.0
    for m in range(p + 1):
        w = math.comb(p, m) * r ** (2 * (p - m))
        if w:
            total += w * _tail_norm2(s.piecewise, m)
    return TORUS**n * total


def beppo_levi_tail_check(model: PolysplineModel) -> TailReport:
    """Tail L2 norms of every order-p derivative, mode by mode, in closed form.

    Tail pieces are exponential polynomials, so the integrals over the two
    half-lines are Euler integrals evaluated exactly.  The growth law is
    measured on the rotation-invariant tail energy T of each mode.
    """
    cfg = model.config
    p, n = cfg.p, cfg.n
    alphas = list(_multi_indices(p, n + 1))
    torus = TORUS**n
    norms, ratios = {}, {}
    zero_tail = 0.0
    for xi, s in model.per_xi.items():
        r = xi_norm(xi)
        data_scale = float(np.sum(np.abs(s.values)))
        for alpha in alphas:
            m, beta = alpha[0], alpha[1:]
            w = _alpha_weight(xi, beta)
            if w == 0 or data_scale == 0:
                norms[(xi, alpha)] = 0.0
                continue
            val = math.sqrt(torus * w * _tail_norm2(s.piecewise, m))
            norms[(xi, alpha)] = val
            if r == 0:
                zero_tail = max(zero_tail, val)
        if r > 0 and data_scale > 0:
            ratios[xi] = math.sqrt(tail_energy(s, r, n)) / (r ** (p - 0.5) * data_scale)
    constants = {}
    for r in sorted({xi_norm(x) for x in model.per_xi if any(x)}):
        basis = solve_lagrange(KernelParams(p, r), cfg.knots)
        best = max(math.sqrt(tail_energy(lagrange_function(basis, j), r, n)) for j in range(len(cfg.knots)))
        constants[r] = best / r ** (p - 0.5)
    finite = all(np.isfinite(v) for v in norms.values())
    return TailReport(p, norms, finite, constants, ratios, zero_tail)


# ---------------------------------------------------------------------------
# polyharmonicity


@dataclass
class PolyharmonicReport:
    p: int
    h: float
    points: np.ndarray
    residuals: np.ndarray      # |FD Delta^p S| / termwise scale
    lower_order: np.ndarray    # |FD Delta^(p-1) S| / termwise scale
    lower_exact_error: np.ndarray

    @property
    def max_residual(self):
        return float(np.max(self.residuals)) if self.residuals.size else 0.0

    @property
    def median_lower(self):
        return float(np.median(self.lower_order)) if self.lower_order.size else 0.0


DEFAULT_STEP = {2: 2e-2, 3: 5e-2}


def _termwise(model, t, y, power):
    """Exact Delta^power S at (t, y) together with sum of the absolute terms."""
    val, scale = 0.0, 0.0
    for xi, s in model.per_xi.items():
        if not np.any(s.values):
            continue
        r2 = xi_norm(xi) ** 2
        e = np.exp(1j * float(np.dot(xi, y)))
        for k in range(power + 1):
            c = math.comb(power, k) * (-r2) ** (power - k)
            if c == 0:
                continue
            d = complex(s.one_sided(np.array([t]), 2 * k, "+")[0])
            val += c * d * e
            scale += abs(c * d)
    return val, scale


def strip_sample_points(knots, reach, count, rng, n, tail_length=2.0):
    """``count`` random points per strip, all farther than ``reach`` from every knot."""
    k = np.asarray(knots)
    strips = [(k[0] - tail_length - reach, k[0])] + list(zip(k[:-1], k[1:])) + [(k[-1], k[-1] + tail_length + reach)]
    pts = []
    for lo, hi in strips:
        a, b = lo + reach * 1.01, hi - reach * 1.01
        if not b > a:
            raise ValueError(f"strip ({lo}, {hi}) is narrower than twice the stencil reach {reach}")
        t = rng.uniform(a, b, count)
        y = rng.uniform(0.0, TORUS, (count, n))
        pts.append(np.column_stack([t, y]))
    return np.vstack(pts)


def polyharmonicity_check(model: PolysplineModel, points_per_strip: int = 20, seed: int = 0,
                          h: float | None = None, points=None) -> PolyharmonicReport:
    """Finite-difference Delta^p and Delta^(p-1) of S at strip-interior points.

    Each value is divided by the sum of the absolute values of the exact
    per-mode terms of the same operator, which is the natural size of the
    quantity being cancelled.
    """
    cfg = model.config
    p, n = cfg.p, cfg.n
    h = DEFAULT_STEP.get(p, 5e-2) if h is None else h
    rng = np.random.default_rng(seed)
    knots = cfg.knots.knots
    if points is None:
        points = strip_sample_points(knots, 2 * p * h, points_per_strip, rng, n)
    points = np.atleast_2d(points)

    def F(t, y):
        return evaluate_points(model, t, y, check=False)

    res, low, low_err = [], [], []
    for pt in points:
        fd = laplacian_power_residual(F, p, pt, h, knots)
        _, sc = _termwise(model, pt[0], pt[1:], p)
        res.append(abs(fd) / sc if sc > 0 else abs(fd))
        fd1 = laplacian_power_residual(F, p - 1, pt, h, knots)
        ex1, sc1 = _termwise(model, pt[0], pt[1:], p - 1)
        low.append(abs(fd1) / sc1 if sc1 > 0 else 0.0)
        low_err.append(abs(fd1 - (ex1.real if model.is_real else ex1)) / sc1 if sc1 > 0 else 0.0)
    return PolyharmonicReport(p, h, points, np.array(res), np.array(low), np.array(low_err))


# ---------------------------------------------------------------------------
# serialization


def _cplx(a):
    a = np.asarray(a, dtype=complex)
    return [[float(v.real), float(v.imag)] for v in a]


def _uncplx(rows):
    return np.array([complex(r[0], r[1]) for r in rows], dtype=complex)


def _bound(x):
    return None if not np.isfinite(x) else float(x)


def _unbound(x, default):
    return default if x is None else float(x)


def model_to_dict(model: PolysplineModel) -> dict:
    entries = []
    for xi, s in model.per_xi.items():
        pieces = []
        for pc in s.pieces:
            pieces.append({
                "interval": [_bound(pc.lo), _bound(pc.hi)],
                "terms": [{"rate": e.sigma, "anchor": e.anchor, "coeffs": _cplx(e.b)} for e in pc.terms],
            })
        entry = {
            "xi": list(xi),
            "values": _cplx(s.values),
            "rbf_coeffs": None if s.rbf_coeffs is None else _cplx(s.rbf_coeffs),
            "poly_part": None if s.poly_part is None else {
                "anchor": s.poly_part.anchor, "coeffs": _cplx(s.poly_part.b)},
            "pieces": pieces,
        }
        if xi in model.cond_estimates:
            entry["cond_estimate"] = model.cond_estimates[xi]
        entries.append(entry)
    return {
        "format": "transfinite-polyspline",
        "version": 1,
        "convention": model.convention,
        "is_real": model.is_real,
        "config": model.config.to_dict(),
        "modes": entries,
    }


def model_from_dict(d: dict) -> PolysplineModel:
    if d.get("format") != "transfinite-polyspline":
        raise ValueError("not a polyspline model file")
    cfg = PolyConfig.from_dict(d["config"])
    knots = cfg.knots.knots
    per_xi, conds = {}, {}
    expected = set(modes(cfg.n, cfg.K))
    for entry in d["modes"]:
        xi = tuple(int(v) for v in entry["xi"])
        if xi not in expected:
            raise ValueError(f"mode {xi} lies outside the truncation radius")
        params = KernelParams(cfg.p, xi_norm(xi))
        pieces = []
        for pc in entry["pieces"]:
            lo = _unbound(pc["interval"][0], -math.inf)
            hi = _unbound(pc["interval"][1], math.inf)
            terms = tuple(ExpPolynomial(tm["rate"], _uncplx(tm["coeffs"]), tm["anchor"], (lo, hi))
                          for tm in pc["terms"])
            pieces.append(Piece(lo, hi, terms))
        if len(pieces) != len(knots) + 1:
            raise ValueError(f"mode {xi} has {len(pieces)} pieces, expected {len(knots) + 1}")
        values = _uncplx(entry["values"])
        if values.shape != knots.shape:
            raise ValueError(f"mode {xi} has {values.size} values for {knots.size} knots")
        rbf = None if entry.get("rbf_coeffs") is None else _uncplx(entry["rbf_coeffs"])
        pp = entry.get("poly_part")
        poly = None if pp is None else ExpPolynomial(0.0, _uncplx(pp["coeffs"]), pp["anchor"])
        per_xi[xi] = NaturalSpline1D(params, cfg.knots, values, PiecewiseExp(knots, pieces), rbf, poly, "loaded")
        if "cond_estimate" in entry:
            conds[xi] = float(entry["cond_estimate"])
    if set(per_xi) != expected:
        raise ValueError("model file does not cover every retained mode")
    ordered = {xi: per_xi[xi] for xi in modes(cfg.n, cfg.K)}
    return PolysplineModel(cfg, ordered, bool(d["is_real"]), d.get("convention", CONVENTION), conds)


def dumps_model(model: PolysplineModel) -> str:
    return json.dumps(model_to_dict(model), sort_keys=True, indent=1)


def loads_model(text: str) -> PolysplineModel:
    return model_from_dict(json.loads(text))
