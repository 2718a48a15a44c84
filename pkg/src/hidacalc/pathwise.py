"""Stochastic integrals as Gelfand integrals of ``Xi(gamma)(s) = gamma(s) <> noise(s)``.

The noise is any first-order process ``W(c(s))``: raw white noise projected
onto the basis, a shifted mollifier (smoothed white noise) or a step profile
whose increments live on disjoint basis directions.  Because every noise value
is first order, the adjoint ``Xi_s^*`` is the directional derivative along
``c(s)`` and all Skorohod/Stratonovich/integration-by-parts relations hold
exactly at the truncation level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Literal, Sequence

import numpy as np

from .chaos import (ChaosVector, _check_compatible, first_order, first_order_coeffs, pairing,
                    pointwise_product, unit, wick_product, zero)
from .config import TOL, PreconditionError, TruncationPolicy
from .gelfand import (Event, MeasureGrid, TestFamily, WeakIntegrand,
                      dominated_check, gelfand_integrate, _max_rel_diff)
from .hermite import FunctionOnR, HermiteBasis, gaussian, shift
from .malliavin import directional_derivative
from .reports import ConvergenceReport, fit_rate

Rule = Literal["wick", "pointwise"]


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """``0 = t_0 < ... < t_n = T`` with trapezoid or left-endpoint weights."""

    points: np.ndarray
    rule: Literal["trapezoid", "left"] = "trapezoid"

    def __post_init__(self):
        t = np.asarray(self.points, dtype=float)
        if t.ndim != 1 or len(t) < 2 or np.any(np.diff(t) <= 0):
            raise ValueError("time grid must be strictly increasing with >= 2 points")
        if self.rule not in ("trapezoid", "left"):
            raise ValueError(f"unknown weight rule {self.rule!r}")
        object.__setattr__(self, "points", t)

    @classmethod
    def uniform(cls, T: float, n: int, rule="trapezoid", t0: float = 0.0) -> "TimeGrid":
        return cls(np.linspace(t0, t0 + T, n + 1), rule)

    @property
    def weights(self) -> np.ndarray:
        d = np.diff(self.points)
        w = np.zeros(len(self.points))
        if self.rule == "left":
            w[:-1] = d
        else:
            w[:-1] += 0.5 * d
            w[1:] += 0.5 * d
        return w

    @property
    def T(self) -> float:
        return float(self.points[-1] - self.points[0])

    @property
    def measure(self) -> MeasureGrid:
        return MeasureGrid(self.points, self.weights)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def everything(self) -> Event:
        return tuple(range(len(self.points)))

    def prefix(self, m: int) -> "TimeGrid":
        """Grid on ``[t_0, t_m]`` with weights recomputed for that interval."""
        if m < 1:
            raise ValueError("prefix needs at least one step")
        return TimeGrid(self.points[: m + 1], self.rule)

    def refine(self) -> "TimeGrid":
        t = self.points
        mid = 0.5 * (t[:-1] + t[1:])
        return TimeGrid(np.sort(np.concatenate([t, mid])), self.rule)


class ChaosProcess(Sequence):
    """Chaos vectors indexed by the points of a :class:`TimeGrid`."""

    def __init__(self, grid: TimeGrid, values: Sequence[ChaosVector]):
        values = tuple(values)
        if len(values) != len(grid):
            raise ValueError(f"{len(values)} values for a grid of {len(grid)} points")
        p = values[0].policy
        if any(v.policy != p for v in values):
            raise ValueError("process values must share one truncation policy")
        self.grid = grid
        self._values = values

    def __getitem__(self, i):
        return self._values[i]

    def __len__(self) -> int:
        return len(self._values)

    @property
    def policy(self) -> TruncationPolicy:
        return self._values[0].policy

    @classmethod
    def constant(cls, grid: TimeGrid, value: ChaosVector) -> "ChaosProcess":
        return cls(grid, [value] * len(grid))

    @classmethod
    def from_function(cls, grid: TimeGrid, fn: Callable[[int, float], ChaosVector]) -> "ChaosProcess":
        return cls(grid, [fn(i, t) for i, t in enumerate(grid.points)])

    def map(self, op: Callable[[ChaosVector], ChaosVector]) -> "ChaosProcess":
        return ChaosProcess(self.grid, [op(v) for v in self._values])

    def prefix(self, m: int) -> "ChaosProcess":
        return ChaosProcess(self.grid.prefix(m), self._values[: m + 1])

    def __add__(self, other: "ChaosProcess") -> "ChaosProcess":
        return ChaosProcess(self.grid, [a + b for a, b in zip(self, other)])

    def __mul__(self, s: float) -> "ChaosProcess":
        return ChaosProcess(self.grid, [v * s for v in self._values])

    __rmul__ = __mul__


# -- noise -------------------------------------------------------------------------

def white_noise(t: float, basis: HermiteBasis, policy: TruncationPolicy) -> ChaosVector:
    """Projected white noise ``W(t) = sum_k e_k(t) H_{eps_k}``.

    The delta function has infinite energy, so the K-term shadow is all that
    can be represented; tolerances on raw-noise results must scale with K.
    """
    return first_order(basis.at(t), policy)


@dataclass(frozen=True, eq=False)
class SmoothingProfile:
    """Smoothed noise ``W~(t) = W(f^t)`` with ``f^t = shift(f, t)``."""

    mollifier: FunctionOnR
    basis: HermiteBasis

    def coeffs(self, t: float) -> np.ndarray:
        return self.basis.project(shift(self.mollifier, t)).coeffs

    def residual(self, t: float) -> float:
        return self.basis.project(shift(self.mollifier, t)).residual

    def inner(self, t: float, s: float) -> float:
        """Exact-by-quadrature ``(f^t, f^s)`` on the basis grid, independent of the projection."""
        return self.basis.inner(shift(self.mollifier, t), shift(self.mollifier, s))

    def has_unit_integral(self, tol: float = 1e-8) -> bool:
        return abs(self.basis.integrate(self.mollifier(self.basis.grid)) - 1.0) <= tol


def smoothed_white_noise(t: float, prof: SmoothingProfile, policy: TruncationPolicy) -> ChaosVector:
    return first_order(prof.coeffs(t), policy)


def gaussian_family(basis: HermiteBasis, widths: Sequence[float]) -> list[SmoothingProfile]:
    """Shrinking Gaussian mollifiers ``f_k -> delta_0`` (unit integral each)."""
    if any(b > a for a, b in zip(widths, widths[1:])):
        raise ValueError("mollifier widths must be non-increasing")
    return [SmoothingProfile(gaussian(0.0, w), basis) for w in widths]


@dataclass(frozen=True, eq=False)
class StepNoiseProfile:
    """Noise that is constant on each step and orthogonal across steps.

    On ``[t_i, t_{i+1})`` the density is ``H_{eps_i} / sqrt(dt_i)``, so step
    increments are ``sqrt(dt_i) H_{eps_i}``: the white noise averaged over
    disjointly supported boxes, written in the basis directions ``e_i``.
    Needs one basis function per step.
    """

    grid: TimeGrid

    def coeffs_at(self, i: int, K: int) -> np.ndarray:
        n_steps = len(self.grid) - 1
        if n_steps > K:
            raise PreconditionError(f"step profile needs K >= {n_steps} basis functions")
        c = np.zeros(K)
        if i < n_steps:
            c[i] = 1.0 / math.sqrt(self.grid.points[i + 1] - self.grid.points[i])
        return c


def noise_process(grid: TimeGrid, policy: TruncationPolicy, profile=None, basis: HermiteBasis | None = None
                  ) -> ChaosProcess:
    """Noise values on the grid: smoothed (``SmoothingProfile``), step, or raw (``basis`` only)."""
    if isinstance(profile, SmoothingProfile):
        return ChaosProcess.from_function(grid, lambda i, t: smoothed_white_noise(t, profile, policy))
    if isinstance(profile, StepNoiseProfile):
        return ChaosProcess.from_function(grid, lambda i, t: first_order(profile.coeffs_at(i, policy.K), policy))
    if profile is None and basis is not None:
        return ChaosProcess.from_function(grid, lambda i, t: white_noise(t, basis, policy))
    raise ValueError("need a smoothing profile, a step profile or a basis for raw noise")


@dataclass(frozen=True, eq=False)
class IntegratorSpec:
    """Integrator ``xi(E) = int_E Xi(u)(s) ds`` with ``Xi(gamma)(s) = gamma(s) * noise(s)``.

    ``combine_rule`` selects Wick or pointwise multiplication.  ``noise_first``
    multiplies in the order ``noise <> gamma``; both products are commutative,
    so it only exists to assert that.
    """

    noise: ChaosProcess
    combine_rule: Rule = "wick"
    noise_first: bool = False

    def __post_init__(self):
        if self.combine_rule not in ("wick", "pointwise"):
            raise ValueError(f"unknown combine rule {self.combine_rule!r}")
        if any(v.degree > 1 or v.expectation() != 0.0 for v in self.noise):
            raise ValueError("noise values must be centred first-order vectors")

    @classmethod
    def smoothed(cls, prof: SmoothingProfile, grid: TimeGrid, policy: TruncationPolicy, rule: Rule = "wick"):
        return cls(noise_process(grid, policy, prof), rule)

    @classmethod
    def raw(cls, basis: HermiteBasis, grid: TimeGrid, policy: TruncationPolicy, rule: Rule = "wick"):
        return cls(noise_process(grid, policy, basis=basis), rule)

    @classmethod
    def steps(cls, grid: TimeGrid, policy: TruncationPolicy, rule: Rule = "wick"):
        return cls(noise_process(grid, policy, StepNoiseProfile(grid)), rule)

    @property
    def grid(self) -> TimeGrid:
        return self.noise.grid

    @property
    def policy(self) -> TruncationPolicy:
        return self.noise.policy

    @property
    def unit(self) -> ChaosVector:
        return unit(self.policy)

    def with_rule(self, rule: Rule) -> "IntegratorSpec":
        return replace(self, combine_rule=rule)

    def direction(self, i: int) -> np.ndarray:
        """Coefficients ``c(s_i)`` of the noise; ``Xi_{s_i}^* = D_{c(s_i)}``."""
        return first_order_coeffs(self.noise[i])

    def combine(self, gamma: ChaosVector, i: int) -> ChaosVector:
        op = wick_product if self.combine_rule == "wick" else pointwise_product
        n = self.noise[i]
        return op(n, gamma) if self.noise_first else op(gamma, n)

    def apply(self, gamma: ChaosProcess) -> WeakIntegrand:
        if len(gamma) != len(self.noise):
            raise ValueError("integrand and noise live on different grids")
        return WeakIntegrand(self.combine(g, i) for i, g in enumerate(gamma))

    def prefix(self, m: int) -> "IntegratorSpec":
        return replace(self, noise=self.noise.prefix(m))


def _events(spec: IntegratorSpec, E: Event | None) -> Event:
    return spec.grid.everything if E is None else tuple(sorted(E))


def integrate(gamma: ChaosProcess, spec: IntegratorSpec, E: Event | None = None) -> ChaosVector:
    """``int_E gamma dxi = int_E Xi(gamma)(s) ds`` as a Gelfand integral."""
    _check_compatible(gamma[0], spec.noise[0])
    return gelfand_integrate(spec.apply(gamma), _events(spec, E), spec.grid.measure)


def integrator_value(spec: IntegratorSpec, E: Event | None = None) -> ChaosVector:
    """``xi(E)``: the integral of the unit element."""
    return integrate(ChaosProcess.constant(spec.grid, spec.unit), spec, E)


def brownian_path(spec: IntegratorSpec) -> ChaosProcess:
    """``B~(t_m) = int_0^{t_m} noise ds`` on every grid point (prefix grids)."""
    vals = [zero(spec.policy)]
    for m in range(1, len(spec.grid)):
        vals.append(integrator_value(spec.prefix(m)))
    return ChaosProcess(spec.grid, vals)


def skorohod_integral(phi: ChaosProcess, spec: IntegratorSpec, E: Event | None = None) -> ChaosVector:
    return integrate(phi, spec.with_rule("wick"), E)


def stratonovich_integral(phi: ChaosProcess, spec: IntegratorSpec, E: Event | None = None) -> ChaosVector:
    return integrate(phi, spec.with_rule("pointwise"), E)


def malliavin_trace(phi: ChaosProcess, spec: IntegratorSpec, E: Event | None = None) -> ChaosVector:
    """``int_E D_{c(s)} phi(s) ds`` with the lowering form of the derivative."""
    vals = WeakIntegrand(directional_derivative(p, spec.direction(i)) for i, p in enumerate(phi))
    return gelfand_integrate(vals, _events(spec, E), spec.grid.measure)


@dataclass
class IdentityReport:
    """Residual of an identity ``lhs == rhs`` between chaos vectors."""

    name: str
    lhs: ChaosVector
    rhs: ChaosVector
    tol: float
    detail: dict = field(default_factory=dict)

    @property
    def residual(self) -> float:
        return _max_rel_diff(self.lhs, self.rhs)

    @property
    def passed(self) -> bool:
        return self.residual <= self.tol


def relation_check(phi: ChaosProcess, spec: IntegratorSpec, E: Event | None = None,
                   tol: float = TOL.exact) -> IdentityReport:
    """Stratonovich-type integral against Skorohod integral plus Malliavin trace."""
    lhs = stratonovich_integral(phi, spec, E)
    trace = malliavin_trace(phi, spec, E)
    rhs = trace + skorohod_integral(phi, spec, E)
    return IdentityReport("relation", lhs, rhs, tol, {"trace": trace})


def pull_out_constant(theta: ChaosVector, phi: ChaosProcess, spec: IntegratorSpec, E: Event | None = None,
                      tol: float = TOL.exact) -> IdentityReport:
    """``theta <> int gamma dxi`` against ``int (theta <> gamma) dxi`` for a Wick integrator."""
    spec = spec.with_rule("wick")
    lhs = wick_product(theta, integrate(phi, spec, E))
    rhs = integrate(phi.map(lambda g: wick_product(theta, g)), spec, E)
    return IdentityReport("pull_out", lhs, rhs, tol)


def stochastic_fubini_check(gamma2: Sequence[Sequence[ChaosVector]], spec1: IntegratorSpec,
                            spec2: IntegratorSpec, E1: Event | None = None, E2: Event | None = None,
                            tol: float = TOL.exact) -> IdentityReport:
    """Iterated Skorohod integrals in both orders."""
    if spec1.combine_rule != "wick" or spec2.combine_rule != "wick":
        raise PreconditionError("stochastic Fubini is asserted for Wick-type integrators only")
    n1, n2 = len(spec1.grid), len(spec2.grid)
    if len(gamma2) != n1 or any(len(row) != n2 for row in gamma2):
        raise ValueError("gamma2 must be a len(grid1) x len(grid2) table")
    inner_y = ChaosProcess(spec1.grid, [integrate(ChaosProcess(spec2.grid, gamma2[i]), spec2, E2)
                                        for i in range(n1)])
    a = integrate(inner_y, spec1, E1)
    inner_x = ChaosProcess(spec2.grid, [integrate(ChaosProcess(spec1.grid, [gamma2[i][j] for i in range(n1)]),
                                                  spec1, E1) for j in range(n2)])
    b = integrate(inner_x, spec2, E2)
    return IdentityReport("stochastic_fubini", a, b, tol)


def duality_check(phi: ChaosProcess, spec: IntegratorSpec, Z: TestFamily, E: Event | None = None,
                  tol: float = TOL.identity) -> dict:
    """Per probe: ``<int phi delta B~, z>`` against ``int <phi(s), D_{c(s)} z> ds``.

    The right side is accumulated as plain scalars; returns ``z_id -> relative residual``.
    """
    spec = spec.with_rule("wick")
    E = _events(spec, E)
    result = integrate(phi, spec, E)
    w = spec.grid.weights
    out = {}
    for z_id, z in Z:
        terms = [w[i] * pairing(phi[i], directional_derivative(z, spec.direction(i))) for i in E]
        rhs = math.fsum(terms)
        lhs = pairing(result, z)
        s = max(abs(lhs), math.fsum(abs(t) for t in terms))
        out[z_id] = abs(lhs - rhs) / s if s > 0 else abs(lhs - rhs)
    return out


def ibp_check(theta: ChaosVector, phi: ChaosProcess, spec: IntegratorSpec, E: Event | None = None,
              tol: float = TOL.identity) -> IdentityReport:
    """``int theta.phi dxi`` against ``theta . int phi dxi - int D_{c(s)}(theta) . phi(s) ds``."""
    spec.policy.require_headroom(2, "integration by parts")
    spec = spec.with_rule("wick")
    E = _events(spec, E)
    lhs = integrate(phi.map(lambda g: pointwise_product(theta, g)), spec, E)
    corr = WeakIntegrand(pointwise_product(directional_derivative(theta, spec.direction(i)), p)
                         for i, p in enumerate(phi))
    rhs = pointwise_product(theta, integrate(phi, spec, E)) - gelfand_integrate(corr, E, spec.grid.measure)
    return IdentityReport("ibp", lhs, rhs, tol)


# -- adapted step processes ------------------------------------------------------------

@dataclass(frozen=True)
class Adapted:
    """Chaos value tagged with the last grid index whose noise it uses (-1: deterministic)."""

    value: ChaosVector
    depends_on: int = -1

    def __add__(self, other: "Adapted") -> "Adapted":
        return Adapted(self.value + other.value, max(self.depends_on, other.depends_on))

    def __mul__(self, s: float) -> "Adapted":
        return Adapted(self.value * s, self.depends_on)

    __rmul__ = __mul__

    def times(self, other: "Adapted") -> "Adapted":
        return Adapted(pointwise_product(self.value, other.value), max(self.depends_on, other.depends_on))

    def wick(self, other: "Adapted") -> "Adapted":
        return Adapted(wick_product(self.value, other.value), max(self.depends_on, other.depends_on))


class AdaptednessError(ValueError):
    pass


def adapted_constant(value: ChaosVector) -> Adapted:
    if value.degree != 0:
        raise AdaptednessError("only deterministic values can be tagged without provenance")
    return Adapted(value, -1)


def adapted_noise(spec: IntegratorSpec, i: int) -> Adapted:
    return Adapted(spec.noise[i], i)


def adapted_brownian(spec: IntegratorSpec, i: int) -> Adapted:
    """``B~(t_i) = sum_{j < i} w_j noise_j`` under left-endpoint weights."""
    if spec.grid.rule != "left":
        raise PreconditionError("Ito comparison uses left-endpoint weights")
    acc = zero(spec.policy)
    w = spec.grid.weights
    for j in range(i):
        acc = acc + spec.noise[j] * w[j]
    return Adapted(acc, i - 1)


def ito_simple_integral(steps: Sequence[Adapted], spec: IntegratorSpec) -> ChaosVector:
    """``sum_i X_i . (B~(t_{i+1}) - B~(t_i))`` with pointwise products.

    ``steps[i]`` may only depend on noise up to index ``i``; the grid must use
    left-endpoint weights so that the increment over step ``i`` is
    ``w_i noise_i``.
    """
    if spec.grid.rule != "left":
        raise PreconditionError("Ito comparison uses left-endpoint weights")
    n_steps = len(spec.grid) - 1
    if len(steps) != n_steps:
        raise ValueError(f"need one step value per interval ({n_steps})")
    w = spec.grid.weights
    acc = zero(spec.policy)
    for i, X in enumerate(steps):
        if X.depends_on > i:
            raise AdaptednessError(f"step {i} uses noise from index {X.depends_on}")
        acc = acc + pointwise_product(X.value, spec.noise[i] * w[i])
    return acc


def step_process(steps: Sequence[Adapted], spec: IntegratorSpec) -> ChaosProcess:
    """Left-continuous step process on the grid; the final point carries zero weight."""
    vals = [s.value for s in steps] + [zero(spec.policy)]
    return ChaosProcess(spec.grid, vals)


# -- stability -----------------------------------------------------------------------

def integrator_stability_check(profiles: Sequence[SmoothingProfile], phi: ChaosProcess, Z: TestFamily,
                               E: Event | None = None, tol: float = TOL.exact) -> ConvergenceReport:
    """Smoothed-noise integrals ``int phi delta B~_k`` against the raw-noise integral.

    The pointwise-convergence hypothesis is evidenced by the sup-distance of
    the noise coefficients to the raw ``e_k(t)``; a sequence along which that
    distance does not shrink is flagged.
    """
    grid = phi.grid
    policy = phi.policy
    basis = profiles[0].basis
    raw = IntegratorSpec.raw(basis, grid, policy)
    target = skorohod_integral(phi, raw, E)
    e_t = np.array([basis.at(t) for t in grid.points])
    report = ConvergenceReport(hypotheses_ok=True)
    report.ks = list(range(1, len(profiles) + 1))
    specs = [IntegratorSpec.smoothed(p, grid, policy) for p in profiles]
    gaps = [float(np.max(np.abs(np.array([s.direction(i) for i in range(len(grid))]) - e_t))) for s in specs]
    ints = [skorohod_integral(phi, s, E) for s in specs]
    worst = np.zeros(len(specs))
    for z_id, z in Z:
        t = pairing(target, z)
        errs = [abs(pairing(I, z) - t) for I in ints]
        report.errors[z_id] = errs
        report.rates[z_id] = fit_rate(report.ks, errs, floor=tol * max(1.0, abs(t)))
        worst = np.maximum(worst, errs)
    report.monotone = bool(np.all(np.diff(worst) <= tol * max(1.0, float(worst.max(initial=0.0)))))
    if len(gaps) > 1 and gaps[-1] >= 0.5 * gaps[0]:
        report.hypotheses_ok = False
        report.violations.append(("pointwise_noise", "noise", f"noise gap {gaps[0]:.3g} -> {gaps[-1]:.3g} does not shrink"))
        report.notes.append("flat error: the mollifier family does not approach delta_0")
    report.notes.append(f"noise_gaps={gaps}")
    return report


def integrand_stability_check(phi_seq: Sequence[ChaosProcess], phi: ChaosProcess, spec: IntegratorSpec,
                              Z: TestFamily, dominators: dict, E: Event | None = None,
                              tol: float = TOL.exact) -> ConvergenceReport:
    """Dominated convergence of ``int phi_k dxi`` with ``dominators[z_id]`` on the points of ``E``."""
    E = _events(spec, E)
    w = spec.grid.weights
    mu = MeasureGrid(spec.grid.points[list(E)], w[list(E)])
    seq = [[spec.combine(p[i], i) for i in E] for p in phi_seq]
    lim = [spec.combine(phi[i], i) for i in E]
    dom = {z_id: np.asarray(g)[list(E)] for z_id, g in dominators.items()}
    return dominated_check(seq, lim, mu, Z, dom, tol)
