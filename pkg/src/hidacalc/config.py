"""Central tolerance and truncation settings."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Literal


OverflowMode = Literal["strict", "truncate"]


@dataclass(frozen=True)
class Tolerances:
    """Every numerical tolerance used by builds and checkers."""

    gram: float = 1e-10
    exact: float = 1e-12        # identities that are exact up to float reassociation
    identity: float = 1e-10     # identities involving several products / quadrature
    projection: float = 1e-10   # negative residual energy allowed in projection
    cross_path: float = 1e-8    # smooth-kernel dual Volterra paths
    order_min: float = 1.9      # observed order for central differences / trapezoid
    rate_band: float = 0.1      # accepted deviation of fitted rates
    mc_sigmas: float = 3.0
    p_max: int = 3


TOL = Tolerances()


@dataclass(frozen=True)
class TruncationPolicy:
    """Finite truncation of the chaos space.

    ``K`` basis functions, chaos degree ``N_max`` plus ``headroom`` extra degrees
    that intermediate products may occupy.  Coefficients below ``drop_tol`` are
    pruned at operation boundaries.
    """

    K: int = 4
    N_max: int = 4
    headroom: int = 2
    drop_tol: float = 0.0
    overflow_mode: OverflowMode = "strict"

    def __post_init__(self):
        if self.K < 1:
            raise ValueError(f"K must be >= 1, got {self.K}")
        if self.N_max < 0 or self.headroom < 0:
            raise ValueError("N_max and headroom must be non-negative")
        if self.drop_tol < 0:
            raise ValueError("drop_tol must be non-negative")
        if self.overflow_mode not in ("strict", "truncate"):
            raise ValueError(f"unknown overflow_mode {self.overflow_mode!r}")

    @property
    def max_degree(self) -> int:
        return self.N_max + self.headroom

    def with_mode(self, mode: OverflowMode) -> "TruncationPolicy":
        return replace(self, overflow_mode=mode)

    def require_headroom(self, needed: int, what: str) -> None:
        if self.headroom < needed:
            raise PreconditionError(
                f"{what} needs headroom >= {needed}, policy has headroom={self.headroom}"
            )


class PreconditionError(ValueError):
    """An operation was called outside its documented preconditions."""


class TruncationError(ArithmeticError):
    """A result would exceed the degree budget in strict mode."""
