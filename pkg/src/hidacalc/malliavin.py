"""Malliavin-type derivatives and translation operators on chaos vectors."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .chaos import (ChaosVector, MultiIndex, _accumulate, _coeffs, _finish, first_order,
                    pointwise_product, wick_product)
from .config import TOL
from .hermite import HermiteBasis

Mode = Literal["lowering", "product-difference"]


def _lower(phi: ChaosVector, c: np.ndarray) -> ChaosVector:
    """``sum_k c_k alpha_k H_{alpha - eps_k}``, the annihilation operator along ``c``."""
    def contrib():
        for a, v in phi.items():
            for k, ak in a:
                if c[k] != 0.0:
                    yield a.lower(k), ak * c[k] * v

    acc, dropped = _accumulate(phi.policy, contrib(), "lowering")
    return _finish(phi.policy, acc, dropped, (phi,))


def malliavin_at(phi: ChaosVector, t: float, basis: HermiteBasis) -> ChaosVector:
    """Pointwise derivative ``D_t phi = sum_k alpha_k e_k(t) H_{alpha - eps_k}``."""
    if basis.K != phi.K:
        raise ValueError("basis size does not match the chaos vector")
    return _lower(phi, basis.at(t))


def directional_derivative(phi: ChaosVector, f, mode: Mode = "lowering") -> ChaosVector:
    """``D_f phi`` for a direction given by its projected coefficients.

    ``lowering`` integrates ``D_t phi`` against ``f``; ``product-difference``
    evaluates ``phi . W(f) - phi <> W(f)`` and needs one degree of headroom.
    """
    c = _coeffs(f)
    if mode == "lowering":
        return _lower(phi, c)
    if mode == "product-difference":
        phi.policy.require_headroom(1, "product-difference derivative")
        w = first_order(c, phi.policy)
        return pointwise_product(phi, w) - wick_product(phi, w)
    raise ValueError(f"unknown mode {mode!r}")


@dataclass(frozen=True)
class DirectionalDerivativeSpec:
    direction: np.ndarray
    mode: Mode = "lowering"

    def __call__(self, phi: ChaosVector) -> ChaosVector:
        return directional_derivative(phi, self.direction, self.mode)


def translate(phi: ChaosVector, g) -> ChaosVector:
    """Translation ``(T_g phi)(omega) = phi(omega + g)``.

    Each coordinate is shifted by ``c_k = (g, e_k)`` through the Appell identity
    ``He_n(x + c) = sum_j C(n, j) c^{n-j} He_j(x)``; degree never grows.
    """
    c = _coeffs(g)

    def contrib():
        for a, v in phi.items():
            parts = []
            for k, ak in a:
                ck = c[k]
                parts.append([(j, math.comb(ak, j) * ck ** (ak - j)) for j in range(ak + 1)
                              if ck != 0.0 or j == ak])
            yield from _expand(a, parts, v)

    acc, dropped = _accumulate(phi.policy, contrib(), "translate")
    assert dropped == 0
    return _finish(phi.policy, acc, 0, (phi,))


def _expand(alpha: MultiIndex, parts, v):
    coords = [k for k, _ in alpha]
    stack = [((), v)]
    for k, opts in zip(coords, parts):
        stack = [(pairs + (((k, j),) if j else ()), coef * w) for pairs, coef in stack for j, w in opts]
    for pairs, coef in stack:
        yield MultiIndex._raw(pairs), coef


@dataclass
class TranslationDerivativeReport:
    h: float
    residual_h: float
    residual_h2: float
    observed_order: float
    exact: bool

    @property
    def passed(self) -> bool:
        return self.exact or self.observed_order >= TOL.order_min


def _central(phi, c, h):
    return (translate(phi, -h * c) - translate(phi, h * c)) * (-1.0 / (2 * h))


def translation_derivative_check(phi: ChaosVector, f, h: float = 1e-3) -> TranslationDerivativeReport:
    """Compare ``-(T_{-hf} phi - T_{hf} phi) / 2h`` with ``D_f phi`` at ``h`` and ``h/2``.

    Central differences are exact through degree 2, so residuals at the
    rounding floor are reported as ``exact`` instead of a noise-driven order.
    """
    if not 0 < h <= 0.1:
        raise ValueError("h must lie in (0, 0.1]")
    c = _coeffs(f)
    target = directional_derivative(phi, c)
    r1 = (_central(phi, c, h) - target).max_abs()
    r2 = (_central(phi, c, h / 2) - target).max_abs()
    scale = max(1.0, target.max_abs(), phi.max_abs())
    floor = 1e3 * np.finfo(float).eps * scale / h
    exact = r1 <= floor and r2 <= 2 * floor
    order = math.log2(r1 / r2) if (r1 > 0 and r2 > 0) else math.inf
    return TranslationDerivativeReport(float(h), float(r1), float(r2), float(order), bool(exact))
