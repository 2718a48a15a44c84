"""White noise calculus on a truncated Hermite chaos."""

from .config import TOL, PreconditionError, Tolerances, TruncationError, TruncationPolicy
from .chaos import (ChaosVector, MultiIndex, dumps, hida_norm, loads, pairing, pointwise_product,
                    s_transform, wick_exp, wick_product)

__all__ = ["TOL", "PreconditionError", "Tolerances", "TruncationError", "TruncationPolicy", "ChaosVector",
           "MultiIndex", "dumps", "hida_norm", "loads", "pairing", "pointwise_product", "s_transform",
           "wick_exp", "wick_product"]
__version__ = "0.1.0"
