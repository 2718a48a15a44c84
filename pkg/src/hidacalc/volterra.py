"""Stochastic Volterra integrals driven by smoothed noise.

Two routes to ``int_0^t Phi(s) dY(s)`` for ``Y(t) = int_0^t g(t, s) dB(s)``:

* the kernel transform ``K_g(Phi)(t, s) = Phi(s) g(t, s) + int_s^t (Phi(u) - Phi(s)) g(du, s)``
  followed by a Skorohod integral (works for finite-variation kernels);
* Wick integration against the formal derivative
  ``Y'(s) = g(s, s) W(s) + int_0^s d_t g(s, u) W(u) du`` (smooth kernels only).

The Stratonovich-type variant adds the Malliavin trace ``int D_s K_g(Phi)(t, s) ds``.
The fractional (Liouville) kernel is ``(t - s)^{H - 1/2}`` without its
Gamma-function normalization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Literal

import numpy as np

from .chaos import ChaosVector, wick_product, zero
from .config import TOL, PreconditionError
from .gelfand import WeakIntegrand, gelfand_integrate
from .pathwise import (ChaosProcess, IdentityReport, IntegratorSpec, malliavin_trace, skorohod_integral,
                       stratonovich_integral)

Variation = Literal["smooth", "increment"]


@dataclass(frozen=True, eq=False)
class Kernel:
    """Deterministic Volterra kernel ``g(t, s)`` for ``t >= s``.

    ``variation`` declares how ``g(du, s)`` is obtained: ``increment`` uses
    exact grid increments ``g(t_{j+1}, s) - g(t_j, s)``; ``smooth`` also
    provides ``d_t g`` and a finite diagonal, enabling the formal-derivative
    route.  Kernels singular on the diagonal supply ``first_cell_moment(h) =
    int_s^{s+h} (u - s) g(du, s)`` for the cell touching the diagonal.
    """

    g: Callable[[float, float], float]
    family: str = "custom"
    params: dict = field(default_factory=dict)
    variation: Variation | None = "increment"
    dt: Callable[[float, float], float] | None = None
    singular_diagonal: bool = False
    first_cell_moment: Callable[[float], float] | None = None

    def __post_init__(self):
        if self.variation == "smooth":
            if self.dt is None:
                raise PreconditionError("smooth variation model needs d_t g")
            if self.singular_diagonal:
                raise PreconditionError(f"{self.family} kernel is singular on the diagonal; use increments")
        if self.singular_diagonal and self.first_cell_moment is None:
            raise PreconditionError("singular kernels must provide first_cell_moment")

    def __call__(self, t: float, s: float) -> float:
        if t < s:
            return 0.0
        return float(self.g(t, s))

    @property
    def is_smooth(self) -> bool:
        return self.variation == "smooth"

    def increment_model(self) -> "Kernel":
        return Kernel(self.g, self.family, self.params, "increment", self.dt,
                      self.singular_diagonal, self.first_cell_moment)


def constant_kernel(c: float = 1.0) -> Kernel:
    return Kernel(lambda t, s: c, "constant", {"c": c}, "smooth", lambda t, s: 0.0)


def linear_kernel(a: float = 0.0, b: float = 1.0) -> Kernel:
    """``g(t, s) = a + b (t - s)``."""
    return Kernel(lambda t, s: a + b * (t - s), "linear", {"a": a, "b": b}, "smooth", lambda t, s: b)


def polynomial_kernel(coeffs) -> Kernel:
    """``g(t, s) = sum_j coeffs[j] (t - s)^j``."""
    p = np.polynomial.Polynomial(coeffs)
    dp = p.deriv()
    return Kernel(lambda t, s: float(p(t - s)), "polynomial", {"coeffs": list(map(float, coeffs))},
                  "smooth", lambda t, s: float(dp(t - s)))


def fbm_liouville_kernel(H: float) -> Kernel:
    """``(t - s)^{H - 1/2}``; increment model only, since ``d_t g`` blows up at the diagonal."""
    if not 0 < H < 1:
        raise ValueError("Hurst index must lie in (0, 1)")
    a = H - 0.5

    def g(t, s):
        u = t - s
        if u == 0.0:
            return math.inf if a < 0 else (1.0 if a == 0 else 0.0)
        return u ** a

    if a == 0:
        return Kernel(g, "fbm-liouville", {"H": H}, "smooth", lambda t, s: 0.0)
    singular = a < 0
    moment = (lambda h: a * h ** (a + 1) / (a + 1)) if singular else None
    return Kernel(g, "fbm-liouville", {"H": H}, "increment", None, singular, moment)


def gamma_bss_kernel(alpha: float, lam: float) -> Kernel:
    """Gamma kernel ``(t - s)^alpha exp(-lam (t - s))`` of Brownian semistationary processes."""
    if alpha <= -0.5:
        raise ValueError("alpha must exceed -1/2 for square integrability")

    def g(t, s):
        u = t - s
        if u == 0.0:
            return math.inf if alpha < 0 else (1.0 if alpha == 0 else 0.0)
        return u ** alpha * math.exp(-lam * u)

    if alpha == 0 or alpha >= 1:
        def dt(t, s):
            u = t - s
            return (alpha * u ** (alpha - 1) if alpha else 0.0) * math.exp(-lam * u) - lam * g(t, s)
        return Kernel(g, "gamma-bss", {"alpha": alpha, "lam": lam}, "smooth", dt)
    singular = alpha < 0
    moment = None
    if singular:
        # int_0^h v d(v^alpha e^{-lam v}) by parts: h g(h) - int_0^h g(v) dv
        from scipy.integrate import quad
        moment = lambda h: h * g(h, 0.0) - quad(lambda v: g(v, 0.0), 0.0, h)[0]
    return Kernel(g, "gamma-bss", {"alpha": alpha, "lam": lam}, "increment", None, singular, moment)


def kernel_from_config(family: str, **params) -> Kernel:
    if family == "constant":
        return constant_kernel(float(params.get("c", 1.0)))
    if family == "linear":
        return linear_kernel(float(params.get("a", 0.0)), float(params.get("b", 1.0)))
    if family == "polynomial":
        return polynomial_kernel([float(c) for c in params["coeffs"]])
    if family == "fbm-liouville":
        return fbm_liouville_kernel(float(params["H"]))
    if family == "gamma-bss":
        return gamma_bss_kernel(float(params["alpha"]), float(params["lam"]))
    raise ValueError(f"unknown kernel family {family!r}")


def _index_of(grid, t: float) -> int:
    hits = np.nonzero(np.isclose(grid.points, t, rtol=0, atol=1e-12))[0]
    if len(hits) != 1:
        raise ValueError(f"upper time {t} is not a grid point")
    m = int(hits[0])
    if m < 1:
        raise ValueError("upper time must exceed the first grid point")
    return m


def kg_apply(phi: ChaosProcess, kernel: Kernel, t: float) -> ChaosProcess:
    """``K_g(phi)(t, s)`` for every grid point ``s <= t``; returned on the prefix grid.

    ``g(du, s)`` is integrated as a Stieltjes sum with trapezoidal averages of
    ``phi`` per cell.  At ``s = t`` the value is ``phi(t) g(t, t)``, taken as
    zero when the diagonal is singular.
    """
    if kernel.variation is None:
        raise PreconditionError(f"kernel {kernel.family} declares no variation model")
    grid = phi.grid
    m = _index_of(grid, t)
    tp = grid.points
    out = []
    for i in range(m + 1):
        s = tp[i]
        if i == m:
            gd = kernel(t, t)
            out.append(phi[m] * gd if math.isfinite(gd) else zero(phi.policy))
            continue
        val = phi[i] * kernel(t, s)
        for j in range(i, m):
            if j == i and kernel.singular_diagonal:
                h = tp[i + 1] - tp[i]
                val = val + (phi[i + 1] - phi[i]) * (kernel.first_cell_moment(h) / h)
                continue
            dg = kernel(tp[j + 1], s) - kernel(tp[j], s)
            if dg != 0.0:
                val = val + ((phi[j] + phi[j + 1]) * 0.5 - phi[i]) * dg
        out.append(val)
    return ChaosProcess(grid.prefix(m), out)


def volterra_ito(phi: ChaosProcess, kernel: Kernel, t: float, spec: IntegratorSpec) -> ChaosVector:
    """``int_0^t K_g(phi)(t, s) delta B~(s)``."""
    kg = kg_apply(phi, kernel, t)
    return skorohod_integral(kg, spec.prefix(len(kg) - 1))


def formal_derivative(kernel: Kernel, spec: IntegratorSpec, m: int) -> ChaosProcess:
    """``Y'(s_i) = g(s_i, s_i) W~(s_i) + int_0^{s_i} d_t g(s_i, u) W~(u) du`` for ``i <= m``."""
    if not kernel.is_smooth:
        raise PreconditionError(f"{kernel.family} kernel has no smooth variation model")
    tp = spec.grid.points
    noise = spec.noise
    vals = []
    for i in range(m + 1):
        s = tp[i]
        y = noise[i] * kernel(s, s)
        if i >= 1:
            sub = spec.grid.prefix(i)
            dens = WeakIntegrand(noise[j] * kernel.dt(s, tp[j]) for j in range(i + 1))
            y = y + gelfand_integrate(dens, sub.everything, sub.measure)
        vals.append(y)
    return ChaosProcess(spec.grid.prefix(m), vals)


def volterra_formal_derivative(phi: ChaosProcess, kernel: Kernel, t: float, spec: IntegratorSpec) -> ChaosVector:
    """``int_0^t phi(s) <> Y'(s) ds``."""
    m = _index_of(spec.grid, t)
    yp = formal_derivative(kernel, spec, m)
    sub = spec.grid.prefix(m)
    vals = WeakIntegrand(wick_product(phi[i], yp[i]) for i in range(m + 1))
    return gelfand_integrate(vals, sub.everything, sub.measure)


def volterra_stratonovich(phi: ChaosProcess, kernel: Kernel, t: float, spec: IntegratorSpec) -> ChaosVector:
    """Ito-type value plus ``int_0^t D_{f^s} K_g(phi)(t, s) ds``."""
    spec.policy.require_headroom(1, "Stratonovich-type Volterra integral")
    kg = kg_apply(phi, kernel, t)
    sub = spec.prefix(len(kg) - 1)
    return skorohod_integral(kg, sub) + malliavin_trace(kg, sub)


def volterra_gap_check(phi: ChaosProcess, kernel: Kernel, t: float, spec: IntegratorSpec,
                       tol: float = TOL.exact) -> IdentityReport:
    """Stratonovich minus Ito against the trace term.

    The Stratonovich value here is recomputed independently as the pointwise
    integral ``int K_g(phi)(t, s) . W~(s) ds``; the trace uses the lowering
    derivative.
    """
    kg = kg_apply(phi, kernel, t)
    sub = spec.prefix(len(kg) - 1)
    gap = stratonovich_integral(kg, sub) - skorohod_integral(kg, sub)
    trace = malliavin_trace(kg, sub)
    return IdentityReport("volterra_gap", gap, trace, tol, {"trace_norm": trace.max_abs()})
