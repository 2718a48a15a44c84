"""Hermite functions, probabilists' Hermite polynomials and projection onto the basis.

The orthonormal Hermite functions ``e_k`` are the eigenfunctions of the harmonic
oscillator ``A = -d^2/dx^2 + (1 + x^2)`` with eigenvalues ``2k + 2``.  The chaos
coordinates elsewhere in the package use the *probabilists'* polynomials
``He_n`` (``E[He_m(g) He_n(g)] = n! delta_mn`` for standard normal ``g``); the
physicists' normalization only appears inside :func:`hermite_functions`, which
is the single conversion point.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Literal

import numpy as np

from .config import TOL, PreconditionError


class QuadratureError(PreconditionError):
    """Quadrature grid does not resolve the requested basis."""


def hermite_poly_eval(n: int, x):
    """Probabilists' Hermite polynomial ``He_n`` evaluated at ``x`` (scalar or array)."""
    if n < 0:
        raise ValueError("degree must be non-negative")
    x = np.asarray(x, dtype=float)
    prev = np.ones_like(x)
    if n == 0:
        return prev if prev.ndim else float(prev)
    cur = x.copy()
    for m in range(1, n):
        prev, cur = cur, x * cur - m * prev
    return cur if cur.ndim else float(cur)


def hermite_poly_table(n_max: int, x) -> np.ndarray:
    """Rows ``He_0 .. He_{n_max}`` at the points ``x``; shape ``(n_max + 1, *x.shape)``."""
    x = np.asarray(x, dtype=float)
    out = np.empty((n_max + 1,) + x.shape)
    out[0] = 1.0
    if n_max >= 1:
        out[1] = x
    for m in range(1, n_max):
        out[m + 1] = x * out[m] - m * out[m - 1]
    return out


def hermite_functions(K: int, x) -> np.ndarray:
    """Orthonormal Hermite functions ``e_0 .. e_{K-1}`` at ``x``; shape ``(K, len(x))``.

    Uses the three-term recurrence of the normalized functions, which stays
    finite far into the tails where the polynomial and Gaussian factors would
    separately over/underflow.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.empty((K, x.size))
    out[0] = np.pi ** -0.25 * np.exp(-0.5 * x**2)
    if K > 1:
        out[1] = np.sqrt(2.0) * x * out[0]
    for k in range(1, K - 1):
        out[k + 1] = np.sqrt(2.0 / (k + 1)) * x * out[k] - np.sqrt(k / (k + 1)) * out[k - 1]
    return out


def hermite_function_second_derivative(k: int, x) -> np.ndarray:
    """``e_k''`` from the ladder relation ``e_k' = sqrt(k/2) e_{k-1} - sqrt((k+1)/2) e_{k+1}``."""
    e = hermite_functions(k + 3, x)

    def d1(j):
        # coefficient list of e_j' in the e-basis
        terms = []
        if j >= 1:
            terms.append((j - 1, np.sqrt(j / 2)))
        terms.append((j + 1, -np.sqrt((j + 1) / 2)))
        return terms

    out = np.zeros(e.shape[1])
    for j, a in d1(k):
        for i, b in d1(j):
            out += a * b * e[i]
    return out


def a_operator_values(k: int, x) -> np.ndarray:
    """``(A e_k)(x)`` computed by explicit differentiation, not via the eigenvalue."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return -hermite_function_second_derivative(k, x) + (1 + x**2) * hermite_functions(k + 1, x)[k]


@dataclass(frozen=True)
class QuadratureSpec:
    """Node rule for integrals over the real line.

    ``gauss-hermite`` rescales the Gauss-Hermite rule to plain Lebesgue
    integration; exact for ``e_j e_k`` products once ``nodes >= K``.
    ``uniform`` is the trapezoid rule on ``[-half_width, half_width]``, needed
    when projecting narrow mollifiers that the sparse Gauss nodes cannot see.
    """

    kind: Literal["gauss-hermite", "uniform"] = "gauss-hermite"
    nodes: int | None = None
    half_width: float = 12.0

    def build(self, K: int) -> tuple[np.ndarray, np.ndarray]:
        if self.kind == "gauss-hermite":
            n = self.nodes if self.nodes is not None else max(4 * K, 32)
            if n < 4 * K:
                raise QuadratureError(f"gauss-hermite needs >= 4K = {4 * K} nodes, got {n}")
            x, w = np.polynomial.hermite.hermgauss(n)
            # degree 2n-1 exactness against exp(-x^2)
            if 2 * n - 1 < 2 * K + 2:
                raise QuadratureError(f"{n} nodes cannot resolve degree {2 * K + 2}")
            return x, np.exp(np.log(w) + x**2)
        if self.kind == "uniform":
            n = self.nodes if self.nodes is not None else 4001
            x = np.linspace(-self.half_width, self.half_width, n)
            w = np.full(n, x[1] - x[0])
            w[0] = w[-1] = 0.5 * (x[1] - x[0])
            return x, w
        raise ValueError(f"unknown quadrature kind {self.kind!r}")


@dataclass(frozen=True, eq=False)
class FunctionOnR:
    """A deterministic function on the real line.

    Either analytic (``func`` evaluated at ``x - offset``) or sampled on a grid
    (``grid``/``values``, linearly interpolated, zero outside the grid).
    """

    func: Callable[[np.ndarray], np.ndarray] | None = None
    offset: float = 0.0
    name: str = "custom"
    params: dict = field(default_factory=dict)
    grid: np.ndarray | None = None
    values: np.ndarray | None = None

    def __post_init__(self):
        if (self.func is None) == (self.values is None):
            raise ValueError("FunctionOnR needs exactly one of func / values")
        if self.values is not None:
            if self.grid is None or len(self.grid) != len(self.values):
                raise ValueError("sampled representation length must equal grid length")

    @property
    def is_sampled(self) -> bool:
        return self.values is not None

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.func is not None:
            return np.asarray(self.func(x - self.offset), dtype=float) * np.ones_like(x)
        return np.interp(x, self.grid, self.values, left=0.0, right=0.0)

    def sample(self, grid) -> "FunctionOnR":
        grid = np.asarray(grid, dtype=float)
        return FunctionOnR(name=self.name, params=self.params, grid=grid, values=self(grid))


def shift(f: FunctionOnR, t: float) -> FunctionOnR:
    """``x -> f(x - t)``.  Exact for analytic descriptors; sampled ones are re-interpolated."""
    if not f.is_sampled:
        return replace(f, offset=f.offset + t)
    return replace(f, values=f(f.grid - t))


def gaussian(center: float = 0.0, width: float = 1.0) -> FunctionOnR:
    """Normal density with unit integral."""
    def g(x):
        return np.exp(-0.5 * (x / width) ** 2) / (width * np.sqrt(2 * np.pi))
    return FunctionOnR(g, offset=center, name="gaussian", params={"width": width})


def hermite_function(k: int) -> FunctionOnR:
    return FunctionOnR(lambda x: hermite_functions(k + 1, x)[k].reshape(np.shape(x)),
                       name="hermite", params={"k": k})


def indicator(a: float, b: float) -> FunctionOnR:
    return FunctionOnR(lambda x: ((x >= a) & (x <= b)).astype(float),
                       name="indicator", params={"a": a, "b": b})


def zero_function() -> FunctionOnR:
    return FunctionOnR(lambda x: np.zeros_like(x), name="zero")


@dataclass(frozen=True)
class Projection:
    """Coefficients ``(f, e_k)`` plus the energy left outside the span."""

    coeffs: np.ndarray
    residual: float


@dataclass(frozen=True, eq=False)
class HermiteBasis:
    K: int
    grid: np.ndarray
    weights: np.ndarray
    eigenvalues: np.ndarray
    values: np.ndarray          # e_k on the grid, shape (K, len(grid))
    gram_deviation: float

    def evaluate(self, x) -> np.ndarray:
        """Basis values at arbitrary points, shape ``(K, len(x))``."""
        return hermite_functions(self.K, x)

    def at(self, t: float) -> np.ndarray:
        return hermite_functions(self.K, [t])[:, 0]

    def integrate(self, vals) -> float:
        return float(np.dot(self.weights, vals))

    def inner(self, f: FunctionOnR, g: FunctionOnR) -> float:
        return self.integrate(f(self.grid) * g(self.grid))

    def project(self, f: FunctionOnR) -> Projection:
        fx = f(self.grid)
        c = self.values @ (self.weights * fx)
        residual = float(np.dot(self.weights, fx * fx) - np.dot(c, c))
        if residual < -TOL.projection * max(1.0, float(np.dot(c, c))):
            raise QuadratureError(f"negative residual energy {residual:.3e}: grid underresolves f")
        return Projection(c, residual)


def build_basis(K: int, quadrature: QuadratureSpec | None = None, tol_gram: float = TOL.gram) -> HermiteBasis:
    """Hermite-function basis of size ``K`` with a validated quadrature grid.

    Raises :class:`QuadratureError` when the Gram matrix under the quadrature
    deviates from the identity by more than ``tol_gram``.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    quadrature = quadrature or QuadratureSpec()
    x, w = quadrature.build(K)
    if np.any(np.diff(x) <= 0) or np.any(w <= 0):
        raise QuadratureError("grid must be strictly increasing with positive weights")
    vals = hermite_functions(K, x)
    gram = (vals * w) @ vals.T
    dev = float(np.max(np.abs(gram - np.eye(K))))
    if dev > tol_gram:
        raise QuadratureError(f"Gram deviation {dev:.3e} exceeds tol_gram={tol_gram:.1e}")
    lam = 2.0 * np.arange(K) + 2.0
    return HermiteBasis(K, x, w, lam, vals, dev)
