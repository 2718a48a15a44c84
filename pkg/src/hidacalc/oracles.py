"""Reference computations that bypass the sparse algebra.

These take deliberately different routes: dense monomial tensors for
products, Monte-Carlo sampling for moments, and linear solves for the
S-transform.  They are slow and only meant for small instances.
"""

from __future__ import annotations

import math

import numpy as np
from numpy.polynomial import hermite_e as He
from scipy.signal import convolve

from .chaos import ChaosVector, MultiIndex, sample_evaluate, multi_indices


def _change_of_basis(n: int, to_monomial: bool) -> np.ndarray:
    M = np.zeros((n + 1, n + 1))
    for j in range(n + 1):
        e = np.zeros(j + 1)
        e[j] = 1.0
        col = He.herme2poly(e) if to_monomial else He.poly2herme(e)
        M[: len(col), j] = col
    return M


def _transform(T: np.ndarray, M: np.ndarray) -> np.ndarray:
    for axis in range(T.ndim):
        T = np.moveaxis(np.tensordot(M, T, axes=([1], [axis])), 0, axis)
    return T


def to_monomial_tensor(x: ChaosVector, n: int) -> np.ndarray:
    """Dense monomial coefficient tensor of shape ``(n + 1,) * K``."""
    T = np.zeros((n + 1,) * x.K)
    for a, v in x.items():
        T[a.to_dense(x.K)] += v
    return _transform(T, _change_of_basis(n, True))


def from_monomial_tensor(T: np.ndarray, policy) -> ChaosVector:
    n = T.shape[0] - 1
    H = _transform(T, _change_of_basis(n, False))
    terms = {MultiIndex.from_dense(idx): float(H[idx]) for idx in np.ndindex(H.shape) if H[idx] != 0.0}
    return ChaosVector(terms, policy)


def dense_pointwise_product(x: ChaosVector, y: ChaosVector) -> ChaosVector:
    """``x . y`` by multiplying ordinary polynomials in the Gaussian coordinates."""
    dx, dy = max(x.degree, 0), max(y.degree, 0)
    P = convolve(to_monomial_tensor(x, dx), to_monomial_tensor(y, dy), method="direct")
    return from_monomial_tensor(P, x.policy)


def mc_product_mean(x: ChaosVector, y: ChaosVector, normals: np.ndarray) -> tuple[float, float]:
    """Monte-Carlo ``E[x y]`` and its standard error from draws of shape ``(n, K)``."""
    prod = sample_evaluate(x, normals) * sample_evaluate(y, normals)
    return float(prod.mean()), float(prod.std(ddof=1) / math.sqrt(len(prod)))


def mc_coefficient(z: ChaosVector, alpha: MultiIndex, values: np.ndarray, normals: np.ndarray) -> tuple[float, float]:
    """Monte-Carlo estimate of the ``H_alpha`` coefficient of a sampled variable: ``E[v H_alpha] / alpha!``."""
    h = sample_evaluate(ChaosVector({alpha: 1.0}, z.policy), normals)
    s = values * h / alpha.factorial
    return float(s.mean()), float(s.std(ddof=1) / math.sqrt(len(s)))


def recover_from_s_transform(values: np.ndarray, xis: np.ndarray, K: int, max_degree: int) -> dict:
    """Least-squares inversion of ``S phi(xi_j) = sum_alpha phi_alpha xi_j^alpha``."""
    idx = multi_indices(K, max_degree)
    A = np.array([[np.prod([xi[k] ** a for k, a in alpha]) for alpha in idx] for xi in xis])
    coef, *_ = np.linalg.lstsq(A, values, rcond=None)
    return dict(zip(idx, coef))
