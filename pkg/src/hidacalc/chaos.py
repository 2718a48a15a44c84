"""Truncated chaos expansions as sparse Hermite multi-index coefficient maps.

Coordinates: ``H_alpha = prod_k He_{alpha_k}(W(e_k))`` where ``W(e_k)`` are the
independent standard Gaussians attached to the orthonormal Hermite functions.
``H_alpha`` corresponds to the multiple Wiener integral ``I_{|alpha|}`` of the
symmetrized tensor ``e^{(x) alpha}``, and the duality pairing reads
``<<Phi, Psi>> = sum_alpha alpha! Phi_alpha Psi_alpha``.  Only real scalars are
supported.
"""

from __future__ import annotations

import itertools
import math
from functools import lru_cache
from typing import Iterable, Iterator, Mapping

import numpy as np

from .config import TOL, TruncationError, TruncationPolicy
from .hermite import Projection, hermite_poly_table


class MultiIndex(tuple):
    """Sparse exponent vector stored as sorted ``(k, alpha_k)`` pairs with ``alpha_k >= 1``."""

    __slots__ = ()

    def __new__(cls, pairs: Mapping[int, int] | Iterable[tuple[int, int]] = ()):
        items = pairs.items() if isinstance(pairs, Mapping) else pairs
        acc: dict[int, int] = {}
        for k, a in items:
            if k < 0 or a < 0:
                raise ValueError(f"invalid multi-index entry ({k}, {a})")
            acc[k] = acc.get(k, 0) + a
        return tuple.__new__(cls, tuple(sorted((k, a) for k, a in acc.items() if a)))

    @classmethod
    def _raw(cls, pairs: tuple) -> "MultiIndex":
        return tuple.__new__(cls, pairs)

    @classmethod
    def from_dense(cls, seq: Iterable[int]) -> "MultiIndex":
        return cls._raw(tuple((k, int(a)) for k, a in enumerate(seq) if a))

    @classmethod
    def unit(cls, k: int, order: int = 1) -> "MultiIndex":
        return cls._raw(((k, order),)) if order else cls._raw(())

    @property
    def degree(self) -> int:
        return sum(a for _, a in self)

    @property
    def factorial(self) -> int:
        out = 1
        for _, a in self:
            out *= math.factorial(a)
        return out

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(k for k, _ in self)

    def get(self, k: int) -> int:
        for j, a in self:
            if j == k:
                return a
        return 0

    def as_dict(self) -> dict[int, int]:
        return dict(self)

    def to_dense(self, K: int) -> tuple[int, ...]:
        out = [0] * K
        for k, a in self:
            out[k] = a
        return tuple(out)

    def __add__(self, other: "MultiIndex") -> "MultiIndex":  # type: ignore[override]
        if not other:
            return self
        if not self:
            return other
        d = dict(self)
        for k, a in other:
            d[k] = d.get(k, 0) + a
        return MultiIndex._raw(tuple(sorted(d.items())))

    def lower(self, k: int) -> "MultiIndex | None":
        """``alpha - eps_k``, or ``None`` when ``alpha_k = 0``."""
        out = []
        hit = False
        for j, a in self:
            if j == k:
                hit = True
                if a > 1:
                    out.append((j, a - 1))
            else:
                out.append((j, a))
        return MultiIndex._raw(tuple(out)) if hit else None

    def raise_(self, k: int) -> "MultiIndex":
        return self + MultiIndex._raw(((k, 1),))

    def __repr__(self) -> str:
        return format_multi_index(self)


def _key(alpha: MultiIndex) -> tuple:
    return (alpha.degree, tuple(alpha))


def format_multi_index(alpha: MultiIndex) -> str:
    return " ".join(f"{k}^{a}" for k, a in alpha) if alpha else "1"


def multi_indices(K: int, max_degree: int, support: Iterable[int] | None = None) -> list[MultiIndex]:
    """All multi-indices of total degree ``<= max_degree`` in canonical order."""
    ks = list(range(K)) if support is None else sorted(set(support))
    out = []
    for dense in itertools.product(range(max_degree + 1), repeat=len(ks)):
        if sum(dense) <= max_degree:
            out.append(MultiIndex._raw(tuple((k, a) for k, a in zip(ks, dense) if a)))
    out.sort(key=_key)
    return out


class ChaosVector:
    """Immutable sparse map ``MultiIndex -> coefficient`` under a truncation policy.

    ``dropped`` counts terms discarded by degree truncation and ``pruned`` the
    nonzero coefficients removed by ``drop_tol``, both accumulated over every
    operation that produced this value.
    """

    __slots__ = ("_terms", "policy", "dropped", "pruned")

    def __init__(self, terms: Mapping[MultiIndex, float] | None = None,
                 policy: TruncationPolicy | None = None, dropped: int = 0, pruned: int = 0,
                 _trusted: bool = False):
        policy = policy or TruncationPolicy()
        terms = terms or {}
        if not _trusted:
            clean: dict[MultiIndex, float] = {}
            for alpha, v in terms.items():
                alpha = alpha if isinstance(alpha, MultiIndex) else MultiIndex(alpha)
                if alpha and alpha[-1][0] >= policy.K:
                    raise ValueError(f"index {alpha} outside basis of size K={policy.K}")
                if alpha.degree > policy.max_degree:
                    raise TruncationError(f"degree {alpha.degree} exceeds budget {policy.max_degree}")
                clean[alpha] = clean.get(alpha, 0.0) + float(v)
            terms, extra = _prune(clean, policy.drop_tol)
            pruned += extra
        object.__setattr__(self, "_terms", dict(sorted(terms.items(), key=lambda kv: _key(kv[0]))))
        object.__setattr__(self, "policy", policy)
        object.__setattr__(self, "dropped", dropped)
        object.__setattr__(self, "pruned", pruned)

    def __setattr__(self, name, value):
        raise AttributeError("ChaosVector is immutable")

    # -- mapping-like access ---------------------------------------------------------
    def __getitem__(self, alpha) -> float:
        alpha = alpha if isinstance(alpha, MultiIndex) else MultiIndex(alpha)
        return self._terms.get(alpha, 0.0)

    def __iter__(self) -> Iterator[MultiIndex]:
        return iter(self._terms)

    def __len__(self) -> int:
        return len(self._terms)

    def items(self):
        return self._terms.items()

    @property
    def terms(self) -> dict[MultiIndex, float]:
        return dict(self._terms)

    @property
    def K(self) -> int:
        return self.policy.K

    @property
    def degree(self) -> int:
        return max((a.degree for a in self._terms), default=0)

    def expectation(self) -> float:
        return self._terms.get(MultiIndex._raw(()), 0.0)

    def max_abs(self) -> float:
        return max((abs(v) for v in self._terms.values()), default=0.0)

    def shell(self, n: int) -> "ChaosVector":
        """Component in the ``n``-th chaos."""
        return self._derive({a: v for a, v in self._terms.items() if a.degree == n})

    def restrict(self, max_degree: int) -> "ChaosVector":
        return self._derive({a: v for a, v in self._terms.items() if a.degree <= max_degree})

    def with_policy(self, policy: TruncationPolicy) -> "ChaosVector":
        return ChaosVector(self._terms, policy, self.dropped, self.pruned)

    def _derive(self, terms, dropped=0, pruned=0) -> "ChaosVector":
        return ChaosVector(terms, self.policy, self.dropped + dropped, self.pruned + pruned, _trusted=True)

    # -- vector space ----------------------------------------------------------------
    def __add__(self, other: "ChaosVector") -> "ChaosVector":
        _check_compatible(self, other)
        acc = dict(self._terms)
        for a, v in other._terms.items():
            acc[a] = acc.get(a, 0.0) + v
        terms, pr = _prune(acc, self.policy.drop_tol)
        return ChaosVector(terms, self.policy, self.dropped + other.dropped,
                           self.pruned + other.pruned + pr, _trusted=True)

    def __neg__(self) -> "ChaosVector":
        return self._derive({a: -v for a, v in self._terms.items()})

    def __sub__(self, other: "ChaosVector") -> "ChaosVector":
        return self + (-other)

    def __mul__(self, s) -> "ChaosVector":
        if isinstance(s, ChaosVector):
            raise TypeError("use wick_product or pointwise_product for chaos products")
        s = float(s)
        terms, pr = _prune({a: s * v for a, v in self._terms.items()}, self.policy.drop_tol)
        return self._derive(terms, pruned=pr)

    __rmul__ = __mul__

    def __truediv__(self, s) -> "ChaosVector":
        return self * (1.0 / float(s))

    def __repr__(self) -> str:
        body = ", ".join(f"{format_multi_index(a)}: {v:.6g}" for a, v in list(self._terms.items())[:6])
        more = ", ..." if len(self._terms) > 6 else ""
        return f"ChaosVector({{{body}{more}}}, K={self.K})"

    def __eq__(self, other) -> bool:
        return isinstance(other, ChaosVector) and self.policy == other.policy and self._terms == other._terms

    __hash__ = None  # type: ignore[assignment]

    def to_text(self) -> str:
        return dumps(self)


def _prune(acc: dict, drop_tol: float) -> tuple[dict, int]:
    out = {}
    pruned = 0
    for a, v in acc.items():
        if v == 0.0:
            continue
        if abs(v) < drop_tol:
            pruned += 1
            continue
        out[a] = v
    return out, pruned


def _check_compatible(x: ChaosVector, y: ChaosVector) -> None:
    if x.policy != y.policy:
        raise ValueError(f"incompatible truncation policies {x.policy} vs {y.policy}")


# -- constructors -------------------------------------------------------------------

def zero(policy: TruncationPolicy) -> ChaosVector:
    return ChaosVector({}, policy, _trusted=True)


def unit(policy: TruncationPolicy) -> ChaosVector:
    return ChaosVector({MultiIndex._raw(()): 1.0}, policy, _trusted=True)


def constant(value: float, policy: TruncationPolicy) -> ChaosVector:
    return unit(policy) * value


def basis_vector(alpha, policy: TruncationPolicy, coeff: float = 1.0) -> ChaosVector:
    """``coeff * H_alpha``; ``alpha`` may be a MultiIndex, a dict or a dense tuple."""
    if isinstance(alpha, (list, tuple)) and not isinstance(alpha, MultiIndex) \
            and all(isinstance(a, (int, np.integer)) for a in alpha):
        alpha = MultiIndex.from_dense(alpha)
    return ChaosVector({MultiIndex(alpha) if not isinstance(alpha, MultiIndex) else alpha: coeff}, policy)


def _coeffs(c) -> np.ndarray:
    return np.asarray(c.coeffs if isinstance(c, Projection) else c, dtype=float)


def first_order(c, policy: TruncationPolicy) -> ChaosVector:
    """``W(f) = sum_k (f, e_k) H_{eps_k}`` from projected coefficients of ``f``."""
    c = _coeffs(c)
    if c.shape != (policy.K,):
        raise ValueError(f"expected {policy.K} coefficients, got shape {c.shape}")
    return ChaosVector({MultiIndex.unit(k): float(v) for k, v in enumerate(c) if v != 0.0}, policy)


def first_order_coeffs(x: ChaosVector) -> np.ndarray:
    out = np.zeros(x.K)
    for a, v in x.items():
        if a.degree == 1:
            out[a[0][0]] = v
    return out


def random_chaos(rng: np.random.Generator, policy: TruncationPolicy, max_degree: int,
                 density: float = 1.0, scale: float = 1.0, decay: float = 1.0) -> ChaosVector:
    """Random vector on all multi-indices up to ``max_degree``.

    Each coefficient is kept with probability ``density`` and drawn from
    ``N(0, (scale * decay**degree)^2 / alpha!)`` so that chaos shells carry
    comparable energy.
    """
    terms = {}
    for alpha in multi_indices(policy.K, max_degree):
        keep = rng.random() < density
        g = rng.standard_normal()
        if keep:
            terms[alpha] = scale * decay ** alpha.degree * g / math.sqrt(alpha.factorial)
    return ChaosVector(terms, policy)


# -- products ----------------------------------------------------------------------

def _accumulate(policy: TruncationPolicy, contributions, what: str) -> tuple[dict, int]:
    cap = policy.max_degree
    acc: dict[MultiIndex, float] = {}
    dropped = 0
    for gamma, v in contributions:
        if gamma.degree > cap:
            if v == 0.0:
                continue
            if policy.overflow_mode == "strict":
                raise TruncationError(
                    f"{what}: term {format_multi_index(gamma)} of degree {gamma.degree} "
                    f"exceeds N_max+headroom={cap}")
            dropped += 1
            continue
        acc[gamma] = acc.get(gamma, 0.0) + v
    return acc, dropped


def _finish(policy, acc, dropped, inputs) -> ChaosVector:
    terms, pruned = _prune(acc, policy.drop_tol)
    return ChaosVector(terms, policy, dropped + sum(x.dropped for x in inputs),
                       pruned + sum(x.pruned for x in inputs), _trusted=True)


def wick_product(x: ChaosVector, y: ChaosVector) -> ChaosVector:
    """Coefficient convolution ``(x <> y)_gamma = sum_{alpha + beta = gamma} x_alpha y_beta``."""
    _check_compatible(x, y)
    contrib = ((a + b, u * v) for a, u in x.items() for b, v in y.items())
    acc, dropped = _accumulate(x.policy, contrib, "wick_product")
    return _finish(x.policy, acc, dropped, (x, y))


@lru_cache(maxsize=None)
def linearization(m: int, n: int) -> tuple[tuple[int, int], ...]:
    """``He_m He_n = sum_r r! C(m,r) C(n,r) He_{m+n-2r}`` as ``(degree, coefficient)`` pairs."""
    return tuple((m + n - 2 * r, math.factorial(r) * math.comb(m, r) * math.comb(n, r))
                 for r in range(min(m, n) + 1))


@lru_cache(maxsize=200_000)
def hermite_product(alpha: MultiIndex, beta: MultiIndex) -> tuple[tuple[MultiIndex, int], ...]:
    """Expansion of ``H_alpha H_beta`` in the ``H_gamma`` basis (exact integers)."""
    da, db = dict(alpha), dict(beta)
    coords = sorted(set(da) | set(db))
    factors = [linearization(da.get(k, 0), db.get(k, 0)) for k in coords]
    out = []
    for combo in itertools.product(*factors):
        coef = 1
        pairs = []
        for k, (deg, c) in zip(coords, combo):
            coef *= c
            if deg:
                pairs.append((k, deg))
        out.append((MultiIndex._raw(tuple(pairs)), coef))
    return tuple(out)


def pointwise_product(x: ChaosVector, y: ChaosVector) -> ChaosVector:
    """Ordinary (omega-wise) product via tensorized Hermite linearization."""
    _check_compatible(x, y)

    def contrib():
        for a, u in x.items():
            for b, v in y.items():
                uv = u * v
                for g, c in hermite_product(a, b):
                    yield g, c * uv

    acc, dropped = _accumulate(x.policy, contrib(), "pointwise_product")
    return _finish(x.policy, acc, dropped, (x, y))


# -- scalar functionals ------------------------------------------------------------

def pairing(phi: ChaosVector, z: ChaosVector) -> float:
    """``sum_alpha alpha! phi_alpha z_alpha`` (equals ``E[phi z]`` on L^2 elements)."""
    if phi.K != z.K:
        raise ValueError("pairing needs a common basis size")
    small, big = (phi, z) if len(phi) <= len(z) else (z, phi)
    total = 0.0
    for a, v in small.items():
        w = big._terms.get(a)
        if w is not None:
            total += a.factorial * v * w
    return total


def hida_norm(phi: ChaosVector, p: int, p_max: int = TOL.p_max) -> float:
    """Weighted norm ``(sum alpha! phi_alpha^2 prod_k (2k+2)^{2 p alpha_k})^{1/2}``."""
    if abs(p) > p_max:
        raise ValueError(f"|p| = {abs(p)} exceeds p_max = {p_max}")
    total = 0.0
    for a, v in phi.items():
        w = 1.0
        for k, ak in a:
            w *= float(2 * k + 2) ** (2 * p * ak)
        total += a.factorial * v * v * w
    return math.sqrt(total)


def s_transform(phi: ChaosVector, xi) -> float:
    """``S phi(xi) = sum_alpha phi_alpha prod_k c_k^{alpha_k}`` with ``c`` the coefficients of ``xi``."""
    c = _coeffs(xi)
    total = 0.0
    for a, v in phi.items():
        m = v
        for k, ak in a:
            m *= c[k] ** ak
        total += m
    return total


def wick_exp_tail_bound(c, N: int) -> float:
    """Mass of the first omitted shell: ``|c|_1^{N+1} / (N+1)!``."""
    return float(np.sum(np.abs(_coeffs(c)))) ** (N + 1) / math.factorial(N + 1)


def wick_exp(xi, policy: TruncationPolicy, tail_tol: float | None = None) -> ChaosVector:
    """Wick exponential ``exp<>(W(xi)) = sum_alpha c^alpha / alpha! H_alpha`` up to degree ``N_max``.

    In strict mode a :class:`TruncationError` reports the first omitted shell
    when it exceeds ``tail_tol`` (default ``max(drop_tol, 1e-12)``); truncate
    mode records one dropped-tail event instead.
    """
    c = _coeffs(xi)
    support = [k for k, v in enumerate(c) if v != 0.0]
    terms = {}
    for a in multi_indices(policy.K, policy.N_max, support):
        m = 1.0
        for k, ak in a:
            m *= c[k] ** ak
        terms[a] = m / a.factorial
    tail = wick_exp_tail_bound(c, policy.N_max) if support else 0.0
    tail_tol = max(policy.drop_tol, TOL.exact) if tail_tol is None else tail_tol
    dropped = 0
    if tail > tail_tol:
        if policy.overflow_mode == "strict":
            raise TruncationError(f"wick_exp tail bound {tail:.3e} exceeds {tail_tol:.1e} at N_max={policy.N_max}")
        dropped = 1
    out = ChaosVector(terms, policy)
    return ChaosVector(out.terms, policy, dropped + out.dropped, out.pruned, _trusted=True)


def sample_evaluate(phi: ChaosVector, normals) -> np.ndarray | float:
    """Evaluate ``sum_alpha phi_alpha prod_k He_{alpha_k}(g_k)`` at Gaussian draws.

    ``normals`` has shape ``(K,)`` for one draw or ``(n, K)`` for a batch.
    """
    g = np.asarray(normals, dtype=float)
    single = g.ndim == 1
    g = np.atleast_2d(g)
    if g.shape[1] != phi.K:
        raise ValueError(f"need {phi.K} normals per draw, got {g.shape[1]}")
    deg = max(phi.degree, 1)
    tables = hermite_poly_table(deg, g.T)          # (deg+1, K, n)
    out = np.zeros(g.shape[0])
    for a, v in phi.items():
        term = np.full(g.shape[0], v)
        for k, ak in a:
            term = term * tables[ak, k]
        out += term
    return float(out[0]) if single else out


# -- serialization -----------------------------------------------------------------

def dumps(phi: ChaosVector) -> str:
    """One line per term ``k1^a1 k2^a2 ... : coefficient``; the empty index is written ``1``."""
    p = phi.policy
    lines = [f"# K={p.K} N_max={p.N_max} headroom={p.headroom} drop_tol={p.drop_tol!r} "
             f"overflow_mode={p.overflow_mode}"]
    for a, v in phi.items():
        lines.append(f"{format_multi_index(a)} : {v:.17g}")
    return "\n".join(lines) + "\n"


def loads(text: str, policy: TruncationPolicy | None = None) -> ChaosVector:
    header = None
    terms: dict[MultiIndex, float] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            if header is None and "K=" in line:
                header = dict(tok.split("=", 1) for tok in line[1:].split() if "=" in tok)
            continue
        try:
            lhs, rhs = line.split(":")
            pairs = []
            if lhs.strip() != "1":
                for tok in lhs.split():
                    k, a = tok.split("^")
                    pairs.append((int(k), int(a)))
            alpha = MultiIndex(pairs)
            if alpha in terms:
                raise ValueError("duplicate multi-index")
            terms[alpha] = float(rhs)
        except ValueError as exc:
            raise ValueError(f"line {lineno}: cannot parse {raw!r} ({exc})") from None
    if policy is None:
        if header is None:
            raise ValueError("no policy header and no policy given")
        policy = TruncationPolicy(K=int(header["K"]), N_max=int(header["N_max"]),
                                  headroom=int(header["headroom"]), drop_tol=float(header["drop_tol"]),
                                  overflow_mode=header["overflow_mode"])
    return ChaosVector(terms, policy)
