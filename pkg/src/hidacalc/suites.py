"""Invariant batteries and convergence studies driven by the command line."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import chaos as C
from .config import TOL, TruncationPolicy
from .gelfand import (MeasureGrid, TestFamily, VitaliCertificate, WeakIntegrand, commute_operator,
                      continuity_profile, dominated_check, duality_residual, event, fubini_check,
                      gelfand_integrate, symdiff_bound_check, vitali_check)
from .hermite import QuadratureSpec, build_basis, gaussian
from .malliavin import directional_derivative, translate, translation_derivative_check
from .oracles import dense_pointwise_product, mc_product_mean
from .pathwise import (ChaosProcess, IntegratorSpec, SmoothingProfile, TimeGrid, adapted_brownian,
                       brownian_path, duality_check, gaussian_family, ibp_check, integrator_stability_check,
                       ito_simple_integral, pull_out_constant, relation_check, skorohod_integral,
                       step_process, stochastic_fubini_check)
from .reports import observed_order
from .volterra import (constant_kernel, kernel_from_config, polynomial_kernel, volterra_formal_derivative,
                       volterra_gap_check, volterra_ito)


@dataclass
class Check:
    suite: str
    name: str
    passed: bool
    residual: float
    tol: float
    detail: str = ""

    def row(self) -> dict:
        return {"suite": self.suite, "check": self.name, "passed": self.passed,
                "residual": self.residual, "tol": self.tol, "detail": self.detail}


@dataclass
class Context:
    """Objects shared by the suites of one run, built from an experiment config."""

    policy: TruncationPolicy
    grid: TimeGrid
    mollifier_width: float
    shrink: list
    kernel_block: dict
    trials: int
    samples: int
    rng: np.random.Generator
    _cache: dict = field(default_factory=dict)

    @property
    def basis(self):
        if "basis" not in self._cache:
            self._cache["basis"] = build_basis(self.policy.K, QuadratureSpec("uniform", nodes=8001, half_width=12.0))
        return self._cache["basis"]

    @property
    def profile(self) -> SmoothingProfile:
        return SmoothingProfile(gaussian(0.0, self.mollifier_width), self.basis)

    def spec(self, grid: TimeGrid | None = None) -> IntegratorSpec:
        return IntegratorSpec.smoothed(self.profile, grid or self.grid, self.policy)

    def rand(self, degree: int, **kw) -> C.ChaosVector:
        return C.random_chaos(self.rng, self.policy, degree, **kw)

    def test_family(self, degree: int = 2, n: int = 4) -> TestFamily:
        return TestFamily.build(self.policy, [self.rand(degree) for _ in range(n)])


def _rel(a: C.ChaosVector, b: C.ChaosVector) -> float:
    s = max(a.max_abs(), b.max_abs())
    d = (a - b).max_abs()
    return d / s if s > 0 else d


def _worst(name, suite, values, tol, detail="") -> Check:
    r = max(values, default=0.0)
    return Check(suite, name, bool(r <= tol), float(r), tol, detail)


def suite_algebra(ctx: Context) -> list[Check]:
    s, P = "algebra", ctx.policy
    d = max(1, min(2, P.max_degree // 3))
    wc, wa, wd, pc, pa, pd, ep, oracle, hom, ser = ([] for _ in range(10))
    for _ in range(ctx.trials):
        x, y, z = ctx.rand(d), ctx.rand(d), ctx.rand(d)
        W, M = C.wick_product, C.pointwise_product
        wc.append(_rel(W(x, y), W(y, x)))
        wa.append(_rel(W(W(x, y), z), W(x, W(y, z))))
        wd.append(_rel(W(x, y + z), W(x, y) + W(x, z)))
        pc.append(_rel(M(x, y), M(y, x)))
        pa.append(_rel(M(M(x, y), z), M(x, M(y, z))))
        pd.append(_rel(M(x, y + z), M(x, y) + M(x, z)))
        e, q = M(x, y).expectation(), C.pairing(x, y)
        ep.append(abs(e - q) / max(1.0, abs(q)))
        oracle.append(_rel(M(x, y), dense_pointwise_product(x, y)))
        xi = ctx.rng.standard_normal(P.K) * 0.5
        a, b = C.s_transform(W(x, y), xi), C.s_transform(x, xi) * C.s_transform(y, xi)
        hom.append(abs(a - b) / max(1.0, abs(b)))
        ser.append(0.0 if C.loads(C.dumps(x)) == x else 1.0)
    out = [
        _worst("wick_commutative", s, wc, TOL.exact), _worst("wick_associative", s, wa, TOL.exact),
        _worst("wick_distributive", s, wd, TOL.exact), _worst("pointwise_commutative", s, pc, TOL.exact),
        _worst("pointwise_associative", s, pa, TOL.exact), _worst("pointwise_distributive", s, pd, TOL.exact),
        _worst("expectation_equals_pairing", s, ep, TOL.identity),
        _worst("pointwise_vs_dense_oracle", s, oracle, TOL.exact),
        _worst("s_transform_homomorphism", s, hom, TOL.identity),
        _worst("serialization_roundtrip", s, ser, 0.0),
    ]
    # Monte-Carlo product mean, one draw set shared by all pairs
    g = ctx.rng.standard_normal((ctx.samples, P.K))
    zs = []
    for _ in range(min(ctx.trials, 20)):
        x, y = ctx.rand(d), ctx.rand(d)
        m, se = mc_product_mean(x, y, g)
        zs.append(abs(m - C.pairing(x, y)) / se if se > 0 else 0.0)
    out.append(_worst("monte_carlo_product_mean_sigmas", s, zs, TOL.mc_sigmas, f"samples={ctx.samples}"))
    return out


def suite_malliavin(ctx: Context) -> list[Check]:
    s, P = "malliavin", ctx.policy
    P.require_headroom(1, "malliavin suite")
    modes, leib, wder, adj, group = [], [], [], [], []
    for _ in range(ctx.trials):
        c = ctx.rng.standard_normal(P.K)
        phi = ctx.rand(max(1, P.N_max - 1))
        modes.append(_rel(directional_derivative(phi, c), directional_derivative(phi, c, "product-difference")))
        a, b = ctx.rand(min(2, P.max_degree // 2)), ctx.rand(min(2, P.max_degree // 2))
        lhs = directional_derivative(C.pointwise_product(a, b), c)
        rhs = C.pointwise_product(directional_derivative(a, c), b) + C.pointwise_product(a, directional_derivative(b, c))
        leib.append(_rel(lhs, rhs))
        lhs = directional_derivative(C.wick_product(a, b), c)
        rhs = C.wick_product(directional_derivative(a, c), b) + C.wick_product(a, directional_derivative(b, c))
        wder.append(_rel(lhs, rhs))
        z = ctx.rand(min(P.max_degree, 3))
        u = C.pairing(C.wick_product(a, C.first_order(c, P)), z)
        v = C.pairing(a, directional_derivative(z, c))
        adj.append(abs(u - v) / max(1.0, abs(v)))
        g1, g2 = ctx.rng.standard_normal(P.K) * 0.3, ctx.rng.standard_normal(P.K) * 0.3
        group.append(_rel(translate(translate(phi, g1), g2), translate(phi, g1 + g2)))
    rep = translation_derivative_check(ctx.rand(min(3, P.max_degree)), ctx.rng.standard_normal(P.K), 0.05)
    return [
        _worst("mode_equivalence", s, modes, TOL.exact), _worst("leibniz", s, leib, TOL.identity),
        _worst("wick_derivation", s, wder, TOL.exact), _worst("annihilation_duality", s, adj, TOL.identity),
        _worst("translation_group_law", s, group, TOL.identity),
        Check(s, "translation_derivative_order", rep.passed, rep.observed_order, TOL.order_min,
              f"residuals {rep.residual_h:.3e}, {rep.residual_h2:.3e}"),
    ]


def suite_gelfand(ctx: Context) -> list[Check]:
    s, P = "gelfand", ctx.policy
    n = 12
    mu = MeasureGrid(np.arange(n, dtype=float), ctx.rng.uniform(0.1, 1.0, n))
    psi = WeakIntegrand(ctx.rand(2) for _ in range(n))
    Z = ctx.test_family()
    dual, add, ineq = [], [], []
    for _ in range(ctx.trials):
        E = event(np.nonzero(ctx.rng.random(n) < 0.5)[0])
        F = event(np.nonzero(ctx.rng.random(n) < 0.5)[0])
        dual.append(duality_residual(gelfand_integrate(psi, E, mu), psi, E, mu, Z).max_residual)
        A, B = event(set(E) - set(F)), F
        add.append(_rel(gelfand_integrate(psi, event(set(A) | set(B)), mu),
                        gelfand_integrate(psi, A, mu) + gelfand_integrate(psi, B, mu)))
        rep = symdiff_bound_check(psi, E, F, mu, Z)
        ineq.append(max(0.0, -rep.slack))
    nested = [event(range(j)) for j in range(n, -1, -1)]
    prof, mono = continuity_profile(psi, nested, (), mu, Z)
    dominated = all(d <= b + TOL.exact * max(1.0, b) for _, d, b in prof)
    theta = ctx.rand(1)
    c = ctx.rng.standard_normal(P.K)
    com = [commute_operator(lambda v: C.wick_product(theta, v), psi, mu.everything, mu).max_rel_diff,
           commute_operator(lambda v: directional_derivative(v, c), psi, mu.everything, mu).max_rel_diff,
           commute_operator(lambda v: translate(v, 0.3 * c), psi, mu.everything, mu).max_rel_diff]
    return [
        _worst("defining_duality", s, dual, TOL.exact), _worst("additivity", s, add, TOL.exact),
        _worst("fundamental_inequality", s, ineq, TOL.exact),
        Check(s, "continuity_envelope", bool(mono and dominated and prof[-1][1] <= TOL.exact), prof[-1][1], TOL.exact,
              f"envelope monotone={mono}, dominated={dominated}"),
        _worst("commute_operator", s, com, TOL.exact),
    ]


def suite_fubini(ctx: Context) -> list[Check]:
    s, P = "fubini", ctx.policy
    mu1 = MeasureGrid(np.arange(4.0), ctx.rng.uniform(0.1, 1, 4))
    mu2 = MeasureGrid(np.arange(5.0), ctx.rng.uniform(0.1, 1, 5))
    det = []
    for _ in range(max(1, ctx.trials // 4)):
        psi2 = [[ctx.rand(2) for _ in range(5)] for _ in range(4)]
        det.append(fubini_check(psi2, mu1, mu2, mu1.everything, mu2.everything).max_rel_diff)
    g4 = TimeGrid.uniform(1.0, 3)
    sp = ctx.spec(g4)
    sto = []
    for _ in range(max(1, ctx.trials // 4)):
        dg = max(0, min(2, P.max_degree - 2))
        gam = [[ctx.rand(dg) for _ in range(4)] for _ in range(4)]
        sto.append(stochastic_fubini_check(gam, sp, sp).residual)
    return [_worst("deterministic_fubini", s, det, TOL.exact), _worst("stochastic_fubini", s, sto, TOL.exact)]


def _one_over_k_family(ctx: Context, k_max: int = 10):
    n = 8
    mu = MeasureGrid(np.arange(n, dtype=float), np.full(n, 0.5))
    psi = WeakIntegrand(ctx.rand(2) for _ in range(n))
    seq = [psi.scaled(1 + 1 / k) for k in range(1, k_max + 1)]
    return mu, psi, seq


def suite_convergence(ctx: Context) -> list[Check]:
    s = "convergence"
    mu, psi, seq = _one_over_k_family(ctx)
    Z = ctx.test_family()
    cert = VitaliCertificate(eps=1e6, tight_sets={}, deltas={z: 1e-3 for z, _ in Z})
    v = vitali_check(seq, psi, mu, Z, cert)
    rates = [r for r in v.rates.values() if r is not None]
    dom = {z_id: 2.0 * np.abs([C.pairing(p, z) for p in psi]) for z_id, z in Z}
    d = dominated_check(seq, psi, mu, Z, dom)
    drates = [r for r in d.rates.values() if r is not None]
    # mass escaping along a growing support: spike of unit mass at point k
    n = 12
    mu_c = MeasureGrid(np.arange(n, dtype=float), np.ones(n))
    u = C.unit(ctx.policy)
    spikes = [WeakIntegrand(u if i == k else C.zero(ctx.policy) for i in range(n)) for k in range(n)]
    lim = WeakIntegrand(C.zero(ctx.policy) for _ in range(n))
    Zu = TestFamily.build(ctx.policy)
    esc = vitali_check(spikes, lim, mu_c, Zu, VitaliCertificate(0.5, {"unit": tuple(range(4))}, {"unit": 0.5}))
    bad_dom = dominated_check(spikes, lim, mu_c, Zu, {"unit": np.full(n, 0.5)})
    return [
        Check(s, "vitali_rate", bool(v.hypotheses_ok and rates and all(abs(r - 1) <= TOL.rate_band for r in rates)),
              max((abs(r - 1) for r in rates), default=math.inf), TOL.rate_band),
        Check(s, "dominated_rate", bool(d.hypotheses_ok and drates and all(abs(r - 1) <= TOL.rate_band for r in drates)),
              max((abs(r - 1) for r in drates), default=math.inf), TOL.rate_band),
        Check(s, "escaping_mass_flagged", esc.flagged, float(len(esc.violations)), 0.0),
        Check(s, "non_dominated_flagged", bad_dom.flagged, float(len(bad_dom.violations)), 0.0),
    ]


def suite_stochastic(ctx: Context) -> list[Check]:
    s, P = "stochastic", ctx.policy
    P.require_headroom(1, "stochastic suite")
    spec = ctx.spec()
    pull, dual, rel, mean = [], [], [], []
    Z = ctx.test_family(degree=min(2, P.max_degree))
    d = max(0, min(2, P.max_degree - 2))
    for _ in range(max(1, ctx.trials // 4)):
        phi = ChaosProcess.from_function(spec.grid, lambda i, t: ctx.rand(d))
        theta = ctx.rand(1)
        pull.append(pull_out_constant(theta, phi, spec).residual)
        dual.append(max(duality_check(phi, spec, Z).values()))
        rel.append(relation_check(phi, spec).residual)
        mean.append(abs(skorohod_integral(phi, spec).expectation()))
    steps_grid = TimeGrid.uniform(1.0, min(P.K, 4), rule="left")
    sspec = IntegratorSpec.steps(steps_grid, P)
    steps = [adapted_brownian(sspec, i) for i in range(len(steps_grid) - 1)]
    ito = ito_simple_integral(steps, sspec)
    sko = skorohod_integral(step_process(steps, sspec), sspec)
    return [
        _worst("pull_out", s, pull, TOL.identity), _worst("duality", s, dual, TOL.identity),
        _worst("relation", s, rel, TOL.identity), _worst("zero_mean", s, mean, 0.0),
        Check(s, "ito_equals_skorohod_steps", _rel(ito, sko) <= TOL.exact, _rel(ito, sko), TOL.exact),
    ]


def suite_ibp(ctx: Context) -> list[Check]:
    s, P = "ibp", ctx.policy
    P.require_headroom(2, "ibp suite")
    spec = ctx.spec()
    res = []
    for _ in range(max(1, ctx.trials // 4)):
        theta = ctx.rand(1)
        phi = ChaosProcess.from_function(spec.grid, lambda i, t: ctx.rand(max(0, min(1, P.max_degree - 2))))
        res.append(ibp_check(theta, phi, spec).residual)
    return [_worst("integration_by_parts", s, res, TOL.identity)]


def _kernel(ctx: Context):
    blk = dict(ctx.kernel_block)
    fam = blk.pop("family", "fbm-liouville")
    blk.pop("t", None)
    if fam == "polynomial" and isinstance(blk.get("coeffs"), str):
        blk["coeffs"] = [float(c) for c in blk["coeffs"].replace(",", " ").split()]
    return kernel_from_config(fam, **blk)


def dual_path_study(ctx: Context, kernel=None, ns=(8, 16, 32)) -> list[dict]:
    kernel = kernel or polynomial_kernel([1.0, -0.5, 0.8])
    rows = []
    prev = None
    T = ctx.grid.T
    for n in ns:
        g = TimeGrid.uniform(T, n)
        spec = ctx.spec(g)
        phi = brownian_path(spec)
        d = (volterra_ito(phi, kernel, T, spec) - volterra_formal_derivative(phi, kernel, T, spec)).max_abs()
        rows.append({"n": n, "path_gap": d, "order": None if prev is None else observed_order(prev, d)})
        prev = d
    return rows


def suite_volterra(ctx: Context) -> list[Check]:
    s, P = "volterra", ctx.policy
    P.require_headroom(1, "volterra suite")
    spec = ctx.spec()
    T = ctx.grid.T
    phi = brownian_path(spec)
    red = _rel(volterra_ito(phi, constant_kernel(), T, spec), skorohod_integral(phi, spec))
    gap = volterra_gap_check(phi, _kernel(ctx), T, spec)
    rows = dual_path_study(ctx)
    order = rows[-1]["order"]
    return [
        Check(s, "identity_kernel_reduction", red <= TOL.exact, red, TOL.exact),
        Check(s, "stratonovich_gap_trace", gap.passed, gap.residual, TOL.exact, str(ctx.kernel_block)),
        Check(s, "dual_path_order", order >= TOL.order_min, order, TOL.order_min),
    ]


def shrink_study(ctx: Context, widths=None, phi_kind="unit"):
    widths = list(widths if widths is not None else ctx.shrink)
    profs = gaussian_family(ctx.basis, widths)
    if phi_kind == "unit":
        phi = ChaosProcess.constant(ctx.grid, C.unit(ctx.policy))
    else:
        phi = ChaosProcess.from_function(ctx.grid, lambda i, t: C.constant(1.0 + t * t, ctx.policy))
    Z = TestFamily.build(ctx.policy, [C.basis_vector({k: 1}, ctx.policy) for k in range(ctx.policy.K)])
    return integrator_stability_check(profs, phi, Z)


def suite_stability(ctx: Context) -> list[Check]:
    s = "stability"
    out = []
    for kind in ("unit", "deterministic"):
        r = shrink_study(ctx, phi_kind=kind)
        errs = np.max(np.array(list(r.errors.values())), axis=0)
        ok = bool(r.hypotheses_ok and r.monotone and errs[-1] < errs[0])
        out.append(Check(s, f"shrink_monotone_{kind}", ok, float(errs[-1]), float(errs[0])))
    flat = shrink_study(ctx, widths=[ctx.shrink[0]] * len(ctx.shrink))
    out.append(Check(s, "constant_family_flagged", flat.flagged, float(len(flat.violations)), 0.0))
    return out


SUITES: dict[str, Callable[[Context], list[Check]]] = {
    "algebra": suite_algebra,
    "malliavin": suite_malliavin,
    "gelfand": suite_gelfand,
    "fubini": suite_fubini,
    "convergence": suite_convergence,
    "stochastic": suite_stochastic,
    "ibp": suite_ibp,
    "volterra": suite_volterra,
    "stability": suite_stability,
}


def trapezoid_order_study(ctx: Context, kernel=None, ns=(8, 16, 32, 64)) -> list[dict]:
    """Grid halving for ``int_0^T g(T, s) ds`` against adaptive quadrature."""
    from scipy.integrate import quad

    kernel = kernel or polynomial_kernel([1.0, -0.5, 0.8])
    T = ctx.grid.T
    exact = quad(lambda s: math.sin(3 * s) * kernel(T, s), 0.0, T, epsabs=1e-14, epsrel=1e-14)[0]
    rows, prev = [], None
    for n in ns:
        g = TimeGrid.uniform(T, n)
        v = float(np.dot(g.weights, [math.sin(3 * s) * kernel(T, s) for s in g.points]))
        e = abs(v - exact)
        rows.append({"n": n, "abs_error": e, "order": None if prev is None else observed_order(prev, e)})
        prev = e
    return rows
