"""Superposition capacity of a sparse representation.

A ``d``-dimensional hidden layer carrying features that are inactive with
probability ``alpha`` can hold about ``d * g(alpha)`` of them, where

    g(alpha) = 1 / ((1 - alpha) * ln(1 / (1 - alpha)))

The function is defined on the open interval (0, 1).  It diverges at both
ends and has its minimum, ``e``, at ``alpha = 1 - 1/e``; it is strictly
increasing above that point, which covers every sparsity used in practice.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

#: Sparsity at which ``g`` attains its minimum value ``e``.
ALPHA_AT_MINIMUM = 1.0 - 1.0 / math.e

#: Reference sparsities tabulated by :func:`reference_table`.
REFERENCE_ALPHAS = (0.5, 0.8, 0.9, 0.95, 0.99, 0.992, 0.999)


def _check_alpha(alpha):
    a = np.asarray(alpha, dtype=np.float64)
    if not np.all(np.isfinite(a)) or np.any(a <= 0.0) or np.any(a >= 1.0):
        raise DomainError(f"alpha must lie in the open interval (0, 1), got {alpha!r}")
    return a


def capacity_g(alpha):
    """Features representable per hidden dimension at sparsity ``alpha``.

    Accepts a scalar or an array; scalars return a Python float.
    """
    a = _check_alpha(alpha)
    # ln(1/(1-a)) == -log1p(-a), accurate for small a
    g = -1.0 / ((1.0 - a) * np.log1p(-a))
    if g.ndim == 0:
        return float(g)
    return g


def critical_width(n_features: int, alpha: float) -> float:
    """Smallest width ``F / g(alpha)`` that fits all ``n_features``."""
    if n_features < 1:
        raise DomainError(f"n_features must be >= 1, got {n_features}")
    return n_features / capacity_g(alpha)


def representable_features(d_s: int, alpha: float, n_features: int) -> int:
    """Number of features a width-``d_s`` layer keeps: ``min(F, floor(d_s * g))``."""
    if d_s < 1:
        raise DomainError(f"d_s must be >= 1, got {d_s}")
    if n_features < 0:
        raise DomainError(f"n_features must be >= 0, got {n_features}")
    return min(int(n_features), math.floor(d_s * capacity_g(alpha)))


@dataclass(frozen=True)
class CapacityProfile:
    alpha: float
    g: float
    n_features: int
    d_crit: float

    @classmethod
    def from_alpha(cls, alpha: float, n_features: int) -> "CapacityProfile":
        g = capacity_g(alpha)
        return cls(alpha=float(alpha), g=g, n_features=int(n_features),
                   d_crit=critical_width(n_features, alpha))


def reference_table(alphas=REFERENCE_ALPHAS):
    """Rows of ``(alpha, 1 - alpha, g)`` for a list of sparsities."""
    return [(a, 1.0 - a, capacity_g(a)) for a in alphas]
