"""Verification suites run by ``transfinite verify``.

Each suite returns a list of :class:`Check` records: what was measured,
against which tolerance, and whether it passed.  Randomness comes from one
seeded generator per suite so reports are reproducible.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import polyspline as ps
from . import spline1d as s1
from .analysis import GaussPoly, euler_integral_by_quadrature, kernel_by_fourier_inversion
from .kernel import KernelParams, eval_kernel, kernel_coefficients, tail_moment

DEFAULT_TOLERANCES = {
    "kernel_fourier": 1e-6,
    "tail_moment": 1e-10,
    "solver_agreement": 1e-9,
    "interpolation": 1e-9,
    "smoothness_jump": 1e-7,
    "top_jump_min": 1e-3,
    "identity": 1e-7,
    "adjoint": 1e-9,
    "binomial": 1e-7,
    "variational": 1e-6,
    "orthogonality": 1e-6,
    "stability_growth": 2.0,
    "parseval": 1e-7,
    "polyharmonic": 1e-3,
    "lower_order_min": 1e-2,
    "tail_law": 3.0,
}


@dataclass
class Check:
    suite: str
    name: str
    anchor: str
    value: float
    tolerance: float
    passed: bool
    relation: str = "<="

    def to_dict(self):
        d = asdict(self)
        d["value"] = float(self.value)
        d["tolerance"] = float(self.tolerance)
        return d


def _le(suite, name, anchor, value, tol):
    value = float(value)
    return Check(suite, name, anchor, value, tol, bool(value <= tol), "<=")


def _ge(suite, name, anchor, value, tol):
    value = float(value)
    return Check(suite, name, anchor, value, tol, bool(value >= tol), ">=")


def sup_relative(a, b):
    scale = max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-300)
    return float(np.max(np.abs(a - b)) / scale)


def random_knots(rng, count, min_gap=0.4, max_gap=1.2):
    return np.concatenate([[0.0], np.cumsum(rng.uniform(min_gap, max_gap, count - 1))])


def knot_jumps(s, m):
    k = s.knots.knots
    plus, minus = s.one_sided(k, m, "+"), s.one_sided(k, m, "-")
    return np.abs(plus - minus), np.maximum(np.abs(plus), np.abs(minus))


def admissible_psi(rng, knots, amplitude=1.0):
    k = np.asarray(knots)
    centre = rng.uniform(k[0], k[-1])
    width = rng.uniform(0.5, 2.0)
    scale = max(1.0, k[-1] - k[0]) ** len(k)
    amp = amplitude * complex(rng.standard_normal(), rng.standard_normal()) / scale
    return GaussPoly.vanishing_at(k, centre, width, amp)


# ---------------------------------------------------------------------------


def suite_kernel(cfg, tol, rng):
    out = []
    for p in sorted({2, 3, cfg.p}):
        for xi in (0.5, 1.0, 4.0):
            params = KernelParams(p, xi)
            worst = 0.0
            for t in np.linspace(-3, 3, 13):
                ref = eval_kernel(params, t)
                worst = max(worst, abs(kernel_by_fourier_inversion(params, t) - ref) / ref)
            out.append(_le("kernel", f"fourier inversion p={p} |xi|={xi}",
                           "kernel equals the inverse transform of (-1)^p/(u^2+|xi|^2)^p",
                           worst, tol["kernel_fourier"]))
    worst = 0.0
    for l in range(5):
        for xi in (0.5, 1.0, 4.0):
            ref = tail_moment(l, xi)
            worst = max(worst, abs(euler_integral_by_quadrature(l, xi) - ref) / ref)
    out.append(_le("kernel", "tail moment vs quadrature", "Euler integral in the tail estimate",
                   worst, tol["tail_moment"]))
    N = cfg.knots.N
    size = s1.collocation_system(KernelParams(cfg.p, 1.0), cfg.knots, np.zeros(N + 1)).size
    out.append(Check("kernel", "collocation dimension", "2pN equations for as many coefficients",
                     size, 2 * cfg.p * N, size == 2 * cfg.p * N, "=="))
    c = kernel_coefficients(cfg.p)
    ok = c.c[0] == math.factorial(2 * cfg.p - 2) / math.factorial(cfg.p - 1)
    out.append(Check("kernel", "diagonal value c_0", "c_0 = (2p-2)!/(p-1)!", c.c[0], c.c0_diag, ok, "=="))
    return out


def suite_spline1d(cfg, tol, rng):
    out = []
    p, knots = cfg.p, cfg.knots
    k = knots.knots
    grid = np.linspace(k[0] - 2, k[-1] + 2, 801)
    worst_agree = worst_jump = 0.0
    top_jump = math.inf
    for xi in (0.0, 0.3, 1.0, 5.0):
        for _ in range(3):
            y = rng.uniform(-1, 1, len(k))
            s = s1.natural_spline(p, xi, knots, y)
            c = s1.collocation_solve(KernelParams(p, xi), knots, y)
            for m in range(2 * p - 1):
                worst_agree = max(worst_agree, sup_relative(s(grid, m), c(grid, m)))
                jump, local = knot_jumps(s, m)
                worst_jump = max(worst_jump, float(np.max(jump / np.max(np.abs(s(grid, m))))))
            jump, local = knot_jumps(s, 2 * p - 1)
            top_jump = min(top_jump, float(np.min(jump / local)))
    out.append(_le("spline1d", "RBF vs collocation", "uniqueness of the natural L_xi-spline",
                   worst_agree, tol["solver_agreement"]))
    out.append(_le("spline1d", "derivative jumps up to order 2p-2", "natural L_xi-splines are C^(2p-2)",
                   worst_jump, tol["smoothness_jump"]))
    out.append(_ge("spline1d", "order 2p-1 jump", "smoothness is not higher than 2p-2",
                   top_jump, tol["top_jump_min"]))
    worst_q = math.inf
    for xi in (0.5, 1.0, 4.0):
        M = s1.build_gram(KernelParams(p, xi), knots).entries
        v = rng.standard_normal((100, len(k)))
        q = np.einsum("ij,jk,ik->i", v, M, v) / np.sum(v * v, axis=1)
        worst_q = min(worst_q, float(q.min()))
    out.append(_ge("spline1d", "Rayleigh quotient of the Gram matrix", "Gram matrix is positive definite",
                   worst_q, 0.0))
    rep = s1.diag_dominance_report(KernelParams(p, 1.0), knots)
    c0 = kernel_coefficients(p).c0_diag
    lam = math.inf
    for factor in (1.0, 1.5, 3.0):
        r = s1.diag_dominance_report(KernelParams(p, rep.mu * factor), knots)
        lam = min(lam, r.lambda_min)
    out.append(_ge("spline1d", "smallest eigenvalue for |xi| >= mu", "eigenvalues >= c_0/2 past mu",
                   lam, c0 / 2))
    return out


def suite_identity(cfg, tol, rng, model=None):
    out = []
    p, knots = cfg.p, cfg.knots
    worst = worst_adj = 0.0
    for xi in (0.5, 1.0, 4.0):
        for _ in range(3):
            y = rng.uniform(-1, 1, len(knots)) + 1j * rng.uniform(-1, 1, len(knots))
            s = s1.natural_spline(p, xi, knots, y)
            for _ in range(2):
                psi = admissible_psi(rng, knots.knots)
                a = s1.fundamental_identity_residual(s, psi, -1)
                b = s1.fundamental_identity_residual(s, psi, +1)
                worst = max(worst, a.relative, b.relative)
                worst_adj = max(worst_adj, abs(a.value - b.value) / a.scale)
    out.append(_le("identity", "fundamental identity |J|/scale",
                   "(D - |xi|)^p s is orthogonal to (D - |xi|)^p psi when psi vanishes at the knots",
                   worst, tol["identity"]))
    out.append(_le("identity", "adjoint factor agrees", "the identity also holds with D + |xi|",
                   worst_adj, tol["adjoint"]))
    model = model or _config_model(cfg)
    rep = ps.duchon_seminorm(model)
    out.append(_le("identity", "binomial vs factored energy", "binomial expansion of the factored energy",
                   rep.max_delta, tol["binomial"]))
    return out


def suite_stability(cfg, tol, rng):
    p = cfg.p
    rep = s1.stability_scan(p, cfg.knots, [0.5, 1, 2, 4, 8, 16, 32], range(2 * p - 1))
    return [
        _le("stability", f"growth of sup|L^(m)|/(1+|xi|^m), m={m}, |xi| 32 vs 2",
            "Lagrange derivatives bounded by C(1+|xi|^m)", rep.growth(m, 32, 2), tol["stability_growth"])
        for m in range(2 * p - 1)
    ]


def random_profiles(rng, n, count_modes, K=3):
    pool = ps.modes(n, K)
    picks = rng.choice(len(pool), size=count_modes, replace=False)
    out = {}
    for i in picks:
        xi = pool[int(i)]
        q = rng.standard_normal(3) + 1j * rng.standard_normal(3)
        out[xi] = GaussPoly(rng.uniform(-1, 1), rng.uniform(0.5, 2.0), q)
    return out


def suite_parseval(cfg, tol, rng):
    out = []
    n, p = cfg.n, cfg.p
    worst = 0.0
    for _ in range(5):
        F = random_profiles(rng, n, 3)
        for alpha in ps._multi_indices(p, n + 1):
            lhs, rhs = ps.parseval_check(F, alpha)
            scale = max(abs(lhs), abs(rhs))
            if scale > 0:
                worst = max(worst, abs(lhs - rhs) / scale)
    out.append(_le("parseval", "direct vs per-mode quadrature", "Parseval and Fubini per mode",
                   worst, tol["parseval"]))
    return out


def suite_variational(cfg, tol, rng, model=None):
    model = model or _config_model(cfg)
    comps = [ps.bump_competitor(model, rng) for _ in range(10)]
    recs = ps.variational_check(model, comps)
    orth = max(ps.orthogonality_check(model, G).relative for G in comps)
    return [
        _le("variational", "margin vs |G|^2", "|S+G|^2 = |S|^2 + |G|^2",
            max(r.pythagoras_error for r in recs), tol["variational"]),
        _le("variational", "direct |S+G|^2 vs expansion", "seminorm of the competitor",
            max(abs(r.direct_f2 - r.norm_f2) / r.norm_f2 for r in recs), tol["variational"]),
        _ge("variational", "smallest margin", "the polyspline minimizes the seminorm",
            min(r.margin for r in recs), 0.0),
        _le("variational", "orthogonality <S,G>/(|S||G|)", "S is orthogonal to competitors vanishing on the hyperplanes",
            orth, tol["orthogonality"]),
    ]


def suite_polyharmonic(cfg, tol, rng, model=None):
    model = model or _config_model(cfg)
    rep = ps.polyharmonicity_check(model, 20, int(rng.integers(2**31)))
    return [
        _le("polyharmonic", "relative FD Delta^p residual", "polyharmonic of order p on each strip",
            rep.max_residual, tol["polyharmonic"]),
        _ge("polyharmonic", "median relative Delta^(p-1)", "order is exactly p",
            rep.median_lower, tol["lower_order_min"]),
    ]


def suite_tails(cfg, tol, rng, model=None):
    model = model or _config_model(cfg)
    rep = ps.beppo_levi_tail_check(model)
    return [
        Check("tails", "order-p tail norms finite", "order-p derivatives are square integrable",
              float(rep.finite), 1.0, rep.finite, "=="),
        _le("tails", "spread of tail constants over |xi|", "tail norms follow |xi|^(p-1/2) within a factor",
            rep.spread(), tol["tail_law"]),
        _le("tails", "growth of tail constants over |xi|", "tail norms grow no faster than |xi|^(p-1/2)",
            rep.growth(), tol["tail_law"]),
        Check("tails", "data tails under the Lagrange bound", "tail norms bounded by data scale",
              float(rep.data_within_bound()), 1.0, rep.data_within_bound(), "=="),
        _le("tails", "zero-mode tail of order p", "natural conditions kill the order-p tail",
            rep.zero_mode_tail, 0.0),
    ]


SUITES = {
    "kernel": suite_kernel,
    "spline1d": suite_spline1d,
    "identity": suite_identity,
    "stability": suite_stability,
    "parseval": suite_parseval,
    "variational": suite_variational,
    "polyharmonic": suite_polyharmonic,
    "tails": suite_tails,
}


def _config_model(cfg, seed=0):
    return ps.fit_data(cfg, ps.band_limited_data(cfg, seed=seed))


def run_suites(cfg, names, tolerances=None, seed=0, model=None):
    tol = dict(DEFAULT_TOLERANCES)
    tol.update(tolerances or {})
    if names == "all" or names == ["all"]:
        names = list(SUITES)
    checks = []
    for name in names:
        rng = np.random.default_rng([seed, list(SUITES).index(name)])
        fn = SUITES[name]
        kwargs = {"model": model} if model is not None and "model" in fn.__code__.co_varnames else {}
        checks.extend(fn(cfg, tol, rng, **kwargs))
    return checks
