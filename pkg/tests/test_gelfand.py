import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hidacalc import chaos as C
from hidacalc.config import TruncationPolicy
from hidacalc.gelfand import (InequalityViolation, MeasureGrid, TestFamily, VitaliCertificate, WeakIntegrand,
                              commute_operator, continuity_profile, dominated_check, duality_residual, event,
                              fubini_check, gelfand_integrate, record_integrals, scalar_integral,
                              symdiff_bound_check, vitali_check)
from hidacalc.malliavin import directional_derivative, translate
from hidacalc.rng import make_rng

P = TruncationPolicy(K=4, N_max=4, headroom=2)


def rel(a, b):
    s = max(a.max_abs(), b.max_abs(), 1e-300)
    return (a - b).max_abs() / s


def setup(seed=0, n=6):
    rng = make_rng(seed, "gelfand")
    mu = MeasureGrid(np.arange(n, dtype=float), rng.uniform(0.1, 1.0, n))
    psi = WeakIntegrand(C.random_chaos(rng, P, 2) for _ in range(n))
    Z = TestFamily.build(P, [C.random_chaos(rng, P, 2) for _ in range(3)])
    return rng, mu, psi, Z


def test_test_family_needs_unit():
    with pytest.raises(ValueError):
        TestFamily((("z", C.first_order(np.ones(4), P)),))
    assert dict(TestFamily.build(P))["unit"] == C.unit(P)


def test_integrate_examples():
    phi = C.random_chaos(make_rng(1), P, 3)
    mu = MeasureGrid(np.arange(4.0), np.full(4, 0.25))
    psi = WeakIntegrand([phi] * 4)
    assert rel(gelfand_integrate(psi, mu.everything, mu), phi) <= 1e-15
    assert len(gelfand_integrate(psi, (), mu)) == 0
    a = np.array([0.5, -2.0, 1.5, 3.0])
    prof = WeakIntegrand(phi * ai for ai in a)
    E = (0, 2, 3)
    expect = phi * float(sum(mu.weights[i] * a[i] for i in E))
    assert rel(gelfand_integrate(prof, E, mu), expect) <= 1e-14


def test_integrate_rejects_bad_event():
    _, mu, psi, _ = setup()
    with pytest.raises(IndexError):
        gelfand_integrate(psi, (0, 9), mu)


def test_compensated_branch():
    n = 10_001
    mu = MeasureGrid(np.arange(n, dtype=float), np.full(n, 1e-4))
    psi = WeakIntegrand([C.unit(P)] * n)
    assert abs(gelfand_integrate(psi, mu.everything, mu).expectation() - 1.0001) <= 1e-15


def test_symdiff_examples():
    _, mu, psi, Z = setup()
    E = (0, 1, 4)
    r = symdiff_bound_check(psi, E, E, mu, Z)
    assert r.sup_difference == 0.0 and max(r.rhs.values()) == 0.0
    r = symdiff_bound_check(psi, E, (), mu, Z)
    for z_id, z in Z:
        assert r.lhs[z_id] <= r.rhs[z_id] + 1e-15
    # one-point difference: the bound is attained
    r = symdiff_bound_check(psi, (0, 1, 4), (0, 1), mu, Z)
    for z_id in r.lhs:
        assert abs(r.lhs[z_id] - r.rhs[z_id]) <= 1e-14 * max(1, r.rhs[z_id])


def test_symdiff_violation_raises():
    _, mu, psi, Z = setup()
    with pytest.raises(InequalityViolation):
        symdiff_bound_check(psi, (0, 1), (), mu, Z, tol=-1.0)


def test_continuity_envelope():
    _, mu, psi, Z = setup(n=10)
    nested = [event(range(j)) for j in range(10, -1, -1)]
    prof, mono = continuity_profile(psi, nested, (), mu, Z)
    assert mono
    assert [d for d, *_ in prof] == sorted([d for d, *_ in prof], reverse=True)
    assert all(sd <= b + 1e-12 for _, sd, b in prof)
    assert prof[-1][1] == 0.0


def test_fubini_examples():
    rng = make_rng(2, "fub")
    mu1, mu2 = MeasureGrid(np.arange(4.0), rng.uniform(0.1, 1, 4)), MeasureGrid(np.arange(5.0), rng.uniform(0.1, 1, 5))
    phi = C.random_chaos(rng, P, 2)
    a, b = rng.standard_normal(4), rng.standard_normal(5)
    r = fubini_check([[phi * (a[i] * b[j]) for j in range(5)] for i in range(4)], mu1, mu2,
                     mu1.everything, mu2.everything)
    assert r.passed
    assert rel(r.order12, phi * float((mu1.weights @ a) * (mu2.weights @ b))) <= 1e-13
    psi2 = [[C.random_chaos(rng, P, 2) for _ in range(5)] for _ in range(4)]
    assert fubini_check(psi2, mu1, mu2, (0, 2, 3), (1, 4)).passed
    r = fubini_check(psi2, mu1, mu2, (), mu2.everything)
    assert len(r.order12) == len(r.order21) == len(r.product) == 0


def test_vitali_and_dominated_examples():
    _, mu, psi, Z = setup(n=8)
    cert = VitaliCertificate(1e6, {}, {z: 1e-3 for z, _ in Z})
    const = vitali_check([psi] * 5, psi, mu, Z, cert)
    assert const.hypotheses_ok and const.converged_at == 1
    seq = [psi.scaled(1 + 1 / k) for k in range(1, 11)]
    v = vitali_check(seq, psi, mu, Z, cert)
    assert v.hypotheses_ok and all(abs(r - 1) <= 0.1 for r in v.rates.values() if r is not None)
    dom = {z_id: 2.0 * np.abs([C.pairing(p, z) for p in psi]) for z_id, z in Z}
    d = dominated_check(seq, psi, mu, Z, dom)
    assert d.hypotheses_ok and d.monotone


def test_counterexamples_flagged():
    n = 12
    mu = MeasureGrid(np.arange(n, dtype=float), np.ones(n))
    spikes = [WeakIntegrand(C.unit(P) if i == k else C.zero(P) for i in range(n)) for k in range(n)]
    lim = WeakIntegrand([C.zero(P)] * n)
    Z = TestFamily.build(P)
    v = vitali_check(spikes, lim, mu, Z, VitaliCertificate(0.5, {"unit": (0, 1, 2, 3)}, {"unit": 0.5}))
    assert v.flagged and any(kind == "tightness" for kind, *_ in v.violations)
    assert v.errors == {}
    d = dominated_check(spikes, lim, mu, Z, {"unit": np.full(n, 0.5)})
    assert d.flagged and (1, 0, "unit") in d.violations


def test_commute_examples():
    _, mu, psi, _ = setup()
    c = np.array([0.4, -0.3, 1.0, 0.2])
    ops = [lambda v: v, lambda v: C.wick_product(C.basis_vector({0: 1}, P), v),
           lambda v: directional_derivative(v, c), lambda v: translate(v, c)]
    for T in ops:
        assert commute_operator(T, psi, (0, 2, 5), mu).passed


def test_recorder_sees_every_integral():
    _, mu, psi, Z = setup()
    with record_integrals() as log:
        gelfand_integrate(psi, (1, 2), mu)
        fubini_check([[psi[0]] * 2] * 2, MeasureGrid(np.arange(2.0), np.ones(2)),
                     MeasureGrid(np.arange(2.0), np.ones(2)), (0, 1), (0, 1))
    assert len(log) == 1 + 7
    for psi_, E, mu_, out in log:
        assert duality_residual(out, psi_, E, mu_, Z).max_residual <= 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32))
def test_duality_and_additivity(seed):
    rng, mu, psi, Z = setup(seed)
    E = event(np.nonzero(rng.random(6) < 0.5)[0])
    F = event(set(range(6)) - set(E))
    I = gelfand_integrate(psi, E, mu)
    assert duality_residual(I, psi, E, mu, Z).max_residual <= 1e-12
    assert rel(gelfand_integrate(psi, mu.everything, mu), I + gelfand_integrate(psi, F, mu)) <= 1e-12
    for _, z in Z:
        val, scale = scalar_integral(psi, E, mu, z)
        assert abs(C.pairing(I, z) - val) <= 1e-12 * max(scale, 1e-300)
