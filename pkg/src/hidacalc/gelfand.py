"""Weak-star (Gelfand) integration of chaos-vector valued maps over finite measure grids.

An integral is the unique chaos vector whose pairing with every probe ``z``
equals the scalar integral of the pairings.  At finite truncation that vector
is the weighted coefficient sum, and every checker below re-derives the
pairings along an independent scalar path.  The weak-star topology is probed
only through a finite :class:`TestFamily`.
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .chaos import ChaosVector, _prune, pairing, unit, zero
from .config import TOL, TruncationPolicy
from .reports import ConvergenceReport, fit_rate

Event = tuple[int, ...]

COMPENSATED_THRESHOLD = 10_000


def event(indices: Iterable[int]) -> Event:
    return tuple(sorted(set(int(i) for i in indices)))


@dataclass(frozen=True, eq=False)
class MeasureGrid:
    """Finitely many weighted points; events are index subsets."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or len(w) != len(self.points):
            raise ValueError("one weight per point required")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and non-negative")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "points", np.asarray(self.points, dtype=float))

    def __len__(self) -> int:
        return len(self.weights)

    @property
    def everything(self) -> Event:
        return tuple(range(len(self)))

    def measure(self, E: Event) -> float:
        return float(sum(self.weights[i] for i in sorted(E)))

    def distance(self, E: Event, F: Event) -> float:
        """Frechet-Nikodym distance ``mu(E symdiff F)``."""
        return self.measure(symdiff(E, F))

    def check_event(self, E: Event) -> Event:
        E = event(E)
        if E and (E[0] < 0 or E[-1] >= len(self)):
            raise IndexError(f"event indices outside grid of size {len(self)}")
        return E

    @classmethod
    def product(cls, a: "MeasureGrid", b: "MeasureGrid") -> "MeasureGrid":
        """Product grid, point ``(i, j)`` stored at flat index ``i * len(b) + j``."""
        pts = np.array([(x, y) for x in np.atleast_1d(a.points) for y in np.atleast_1d(b.points)])
        return cls(pts, np.outer(a.weights, b.weights).ravel())


def symdiff(E: Event, F: Event) -> Event:
    return event(set(E) ^ set(F))


class WeakIntegrand(Sequence):
    """A map ``grid index -> ChaosVector`` sharing one truncation policy."""

    def __init__(self, values: Iterable[ChaosVector]):
        self._values = tuple(values)
        if not self._values:
            raise ValueError("empty integrand")
        p = self._values[0].policy
        if any(v.policy != p for v in self._values):
            raise ValueError("all integrand values must share one truncation policy")

    def __getitem__(self, i):
        return self._values[i]

    def __len__(self) -> int:
        return len(self._values)

    @property
    def policy(self) -> TruncationPolicy:
        return self._values[0].policy

    def map(self, op: Callable[[ChaosVector], ChaosVector]) -> "WeakIntegrand":
        return WeakIntegrand(op(v) for v in self._values)

    def scaled(self, s: float) -> "WeakIntegrand":
        return WeakIntegrand(v * s for v in self._values)


@dataclass(frozen=True)
class TestFamily:
    """Finite set of probes ``z_j`` standing in for the weak-star topology."""

    __test__ = False  # not a pytest class

    probes: tuple[tuple[str, ChaosVector], ...]

    def __post_init__(self):
        if not self.probes:
            raise ValueError("test family must be nonempty")
        if not any(z.degree == 0 and len(z) == 1 and z.expectation() == 1.0 for _, z in self.probes):
            raise ValueError("test family must contain the unit 1")

    def __iter__(self):
        return iter(self.probes)

    def __len__(self) -> int:
        return len(self.probes)

    @classmethod
    def build(cls, policy: TruncationPolicy, extra: Iterable[ChaosVector] = (), names=None) -> "TestFamily":
        extra = list(extra)
        names = names or [f"z{j}" for j in range(1, len(extra) + 1)]
        return cls((("unit", unit(policy)),) + tuple(zip(names, extra)))


def _as_integrand(psi) -> WeakIntegrand:
    return psi if isinstance(psi, WeakIntegrand) else WeakIntegrand(psi)


_RECORDERS: list[list] = []


@contextmanager
def record_integrals():
    """Collect ``(psi, E, mu, result)`` for every integral evaluated inside the block."""
    log: list = []
    _RECORDERS.append(log)
    try:
        yield log
    finally:
        _RECORDERS.remove(log)


def gelfand_integrate(psi, E: Event, mu: MeasureGrid) -> ChaosVector:
    """``sum_{i in E} mu_i psi(x_i)`` accumulated in ascending index order.

    Above ``COMPENSATED_THRESHOLD`` points each coefficient is summed with
    ``math.fsum``.
    """
    psi = _as_integrand(psi)
    if len(psi) != len(mu):
        raise ValueError("integrand and measure grid differ in length")
    E = mu.check_event(E)
    policy = psi.policy
    if not E:
        out = zero(policy)
        for log in _RECORDERS:
            log.append((psi, E, mu, out))
        return out
    if len(E) > COMPENSATED_THRESHOLD:
        parts: dict = {}
        for i in E:
            w = mu.weights[i]
            for a, v in psi[i].items():
                parts.setdefault(a, []).append(w * v)
        acc = {a: math.fsum(vs) for a, vs in parts.items()}
    else:
        acc = {}
        for i in E:
            w = mu.weights[i]
            for a, v in psi[i].items():
                acc[a] = acc.get(a, 0.0) + w * v
    terms, pruned = _prune(acc, policy.drop_tol)
    out = ChaosVector(terms, policy, sum(psi[i].dropped for i in E),
                      pruned + sum(psi[i].pruned for i in E), _trusted=True)
    for log in _RECORDERS:
        log.append((psi, E, mu, out))
    return out


def scalar_integral(psi, E: Event, mu: MeasureGrid, z: ChaosVector) -> tuple[float, float]:
    """Independent path: ``(sum mu_i <psi_i, z>, sum mu_i |<psi_i, z>|)``."""
    vals = [mu.weights[i] * pairing(psi[i], z) for i in sorted(E)]
    return math.fsum(vals), math.fsum(abs(v) for v in vals)


@dataclass
class DualityReport:
    residuals: dict     # z_id -> relative residual
    tol: float = TOL.exact

    @property
    def max_residual(self) -> float:
        return max(self.residuals.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_residual <= self.tol


def duality_residual(result: ChaosVector, psi, E: Event, mu: MeasureGrid, Z: TestFamily,
                     tol: float = TOL.exact) -> DualityReport:
    """Defining property ``<result, z> = int_E <psi, z> dmu`` re-checked per probe."""
    out = {}
    for z_id, z in Z:
        lhs = pairing(result, z)
        rhs, scale = scalar_integral(psi, E, mu, z)
        s = max(scale, abs(lhs), abs(rhs))
        out[z_id] = abs(lhs - rhs) / s if s > 0 else abs(lhs - rhs)
    return DualityReport(out, tol)


class InequalityViolation(AssertionError):
    """The fundamental symmetric-difference inequality failed."""


@dataclass
class SymdiffReport:
    lhs: dict           # z_id -> |Lambda_E(z) - Lambda_F(z)|
    rhs: dict           # z_id -> int_{E symdiff F} |<psi, z>| dmu
    distance: float     # mu(E symdiff F)

    @property
    def sup_difference(self) -> float:
        return max(self.lhs.values(), default=0.0)

    @property
    def slack(self) -> float:
        return min(self.rhs[z] - self.lhs[z] for z in self.lhs)


def symdiff_bound_check(psi, E: Event, F: Event, mu: MeasureGrid, Z: TestFamily,
                        tol: float = TOL.exact) -> SymdiffReport:
    """``|Lambda_E(z) - Lambda_F(z)| <= int_{E symdiff F} |<psi(x), z>| mu(dx)`` for every probe.

    Both sides of the left are read off computed integrals; a violation beyond
    ``tol`` (relative, floor 1) raises :class:`InequalityViolation`.
    """
    psi = _as_integrand(psi)
    IE, IF = gelfand_integrate(psi, E, mu), gelfand_integrate(psi, F, mu)
    D = symdiff(E, F)
    lhs, rhs = {}, {}
    for z_id, z in Z:
        lhs[z_id] = abs(pairing(IE, z) - pairing(IF, z))
        rhs[z_id] = scalar_integral(psi, D, mu, z)[1]
        if lhs[z_id] - rhs[z_id] > tol * max(1.0, rhs[z_id]):
            raise InequalityViolation(
                f"probe {z_id}: |Lambda_E - Lambda_F| = {lhs[z_id]:.17g} > bound {rhs[z_id]:.17g}")
    return SymdiffReport(lhs, rhs, mu.distance(E, F))


def continuity_profile(psi, events: Sequence[Event], E: Event, mu: MeasureGrid, Z: TestFamily,
                       tol: float = TOL.exact) -> tuple[list[tuple[float, float, float]], bool]:
    """Rows ``(mu(E_n symdiff E), sup_z |Lambda_{E_n}(z) - Lambda_E(z)|, sup_z bound_z)`` along ``events``.

    For signed integrands the middle column need not decrease step by step;
    the bound column does along nested events, and it dominates the middle
    one.  The flag reports monotonicity of that envelope within ``tol``.
    """
    prof = []
    for En in events:
        r = symdiff_bound_check(psi, En, E, mu, Z, tol)
        prof.append((r.distance, r.sup_difference, max(r.rhs.values(), default=0.0)))
    env = [b for *_, b in prof]
    mono = all(b <= a + tol * max(1.0, a) for a, b in zip(env, env[1:]))
    return prof, mono


def _max_rel_diff(a: ChaosVector, b: ChaosVector) -> float:
    scale = max(a.max_abs(), b.max_abs())
    d = (a - b).max_abs()
    return d / scale if scale > 0 else d


@dataclass
class FubiniReport:
    order12: ChaosVector
    order21: ChaosVector
    product: ChaosVector
    max_rel_diff: float
    tol: float = TOL.exact

    @property
    def passed(self) -> bool:
        return self.max_rel_diff <= self.tol


def fubini_check(psi2: Sequence[Sequence[ChaosVector]], mu1: MeasureGrid, mu2: MeasureGrid,
                 E1: Event, E2: Event, tol: float = TOL.exact) -> FubiniReport:
    """Iterated integrals in both orders against the product-measure integral."""
    n1, n2 = len(mu1), len(mu2)
    if len(psi2) != n1 or any(len(row) != n2 for row in psi2):
        raise ValueError("psi2 must be an n1 x n2 table")
    inner2 = [gelfand_integrate(psi2[i], E2, mu2) for i in range(n1)]
    order12 = gelfand_integrate(inner2, E1, mu1)
    inner1 = [gelfand_integrate([psi2[i][j] for i in range(n1)], E1, mu1) for j in range(n2)]
    order21 = gelfand_integrate(inner1, E2, mu2)
    prod = MeasureGrid.product(mu1, mu2)
    flat = [psi2[i][j] for i in range(n1) for j in range(n2)]
    Ep = tuple(i * n2 + j for i in sorted(E1) for j in sorted(E2))
    product = gelfand_integrate(flat, Ep, prod)
    diff = max(_max_rel_diff(order12, order21), _max_rel_diff(order12, product), _max_rel_diff(order21, product))
    return FubiniReport(order12, order21, product, diff, tol)


# -- convergence theorems ------------------------------------------------------------

@dataclass
class VitaliCertificate:
    """Finite-scale evidence for uniform integrability.

    ``tight_sets[z_id]`` is a finite-measure event outside which every member of
    the sequence carries less than ``eps`` pairing mass; ``deltas[z_id]`` is a
    measure threshold below which no event carries ``eps`` or more.
    """

    eps: float
    tight_sets: dict
    deltas: dict
    measure_budget: float = math.inf


def _pairing_table(psi_seq, Z) -> dict:
    return {z_id: np.array([[pairing(v, z) for v in psi_k] for psi_k in psi_seq]) for z_id, z in Z}


def knapsack_bound(values: np.ndarray, weights: np.ndarray, delta: float) -> float:
    """Upper bound on ``max_{mu(E) < delta} sum_E |values| * weights`` (fractional relaxation)."""
    dens = np.abs(values)
    order = np.argsort(-dens, kind="stable")
    left = delta
    total = 0.0
    for i in order:
        if left <= 0:
            break
        take = min(weights[i], left)
        total += dens[i] * take
        left -= take
    return float(total)


def _conclusion(psi_seq, psi, mu, Z, report: ConvergenceReport, tol: float) -> ConvergenceReport:
    E = mu.everything
    target = gelfand_integrate(psi, E, mu)
    ks = list(range(1, len(psi_seq) + 1))
    report.ks = ks
    ints = [gelfand_integrate(p, E, mu) for p in psi_seq]
    worst = np.zeros(len(ks))
    for z_id, z in Z:
        t = pairing(target, z)
        errs = [abs(pairing(I, z) - t) for I in ints]
        report.errors[z_id] = errs
        report.rates[z_id] = fit_rate(ks, errs, floor=tol * max(1.0, abs(t)))
        worst = np.maximum(worst, np.array(errs) / max(1.0, abs(t)))
    small = worst <= tol
    report.converged_at = next((k for j, k in enumerate(ks) if small[j:].all()), None)
    report.monotone = bool(np.all(np.diff(worst) <= tol))
    return report


def vitali_check(psi_seq: Sequence, psi, mu: MeasureGrid, Z: TestFamily,
                 certificate: VitaliCertificate, tol: float = TOL.exact) -> ConvergenceReport:
    """Verify tightness and uniform absolute continuity, then pairing convergence.

    Hypothesis failures are reported (``hypotheses_ok=False``) and the
    conclusion is not evaluated.
    """
    psi_seq = [_as_integrand(p) for p in psi_seq]
    psi = _as_integrand(psi)
    table = _pairing_table(psi_seq, Z)
    report = ConvergenceReport(hypotheses_ok=True)
    w = mu.weights
    everything = set(mu.everything)
    for z_id, _ in Z:
        P = table[z_id]
        Ez = mu.check_event(certificate.tight_sets.get(z_id, mu.everything))
        if mu.measure(Ez) > certificate.measure_budget:
            report.violations.append(("tightness", z_id, f"tight set measure {mu.measure(Ez):.3g} over budget"))
        outside = sorted(everything - set(Ez))
        tail = max((float(np.dot(np.abs(P[k, outside]), w[outside])) for k in range(len(P))), default=0.0)
        if tail >= certificate.eps:
            report.violations.append(("tightness", z_id, f"sup_k tail mass {tail:.4g} >= eps {certificate.eps:.3g}"))
        delta = certificate.deltas.get(z_id, 0.0)
        conc = max(knapsack_bound(P[k], w, delta) for k in range(len(P)))
        if conc >= certificate.eps:
            report.violations.append(("absolute_continuity", z_id, f"sup_k mass on mu(E)<{delta:.3g} is {conc:.4g} >= eps"))
    if report.violations:
        report.hypotheses_ok = False
        report.notes.append("hypotheses not satisfied; conclusion not checked")
        return report
    return _conclusion(psi_seq, psi, mu, Z, report, tol)


def dominated_check(psi_seq: Sequence, psi, mu: MeasureGrid, Z: TestFamily,
                    dominators: dict, tol: float = TOL.exact) -> ConvergenceReport:
    """Check ``|<psi_k(x_i), z>| <= g^z(x_i)`` on the whole grid, then pairing convergence.

    Violations are listed as ``(k, i, z_id)`` with ``k`` counted from 1.
    """
    psi_seq = [_as_integrand(p) for p in psi_seq]
    psi = _as_integrand(psi)
    table = _pairing_table(psi_seq, Z)
    report = ConvergenceReport(hypotheses_ok=True)
    for z_id, _ in Z:
        g = np.asarray(dominators[z_id], dtype=float)
        if g.shape != (len(mu),) or np.any(g < 0):
            raise ValueError(f"dominator for {z_id} must be a non-negative grid function")
        bad = np.abs(table[z_id]) > g * (1 + tol) + tol
        for k, i in zip(*np.nonzero(bad)):
            report.violations.append((int(k) + 1, int(i), z_id))
    if report.violations:
        report.hypotheses_ok = False
        report.notes.append("domination violated; conclusion not checked")
        return report
    return _conclusion(psi_seq, psi, mu, Z, report, tol)


@dataclass
class CommuteReport:
    name: str
    max_rel_diff: float
    tol: float = TOL.exact

    @property
    def passed(self) -> bool:
        return self.max_rel_diff <= self.tol


def commute_operator(T: Callable[[ChaosVector], ChaosVector], psi, E: Event, mu: MeasureGrid,
                     name: str | None = None, tol: float = TOL.exact) -> CommuteReport:
    """``T int_E psi dmu`` against ``int_E T psi dmu``."""
    psi = _as_integrand(psi)
    lhs = T(gelfand_integrate(psi, E, mu))
    rhs = gelfand_integrate(psi.map(T), E, mu)
    return CommuteReport(name or getattr(T, "__name__", "T"), _max_rel_diff(lhs, rhs), tol)
