"""Feature-importance distributions and the importance-weighted floor prediction."""

from __future__ import annotations

import math

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .capacity import representable_features
from .errors import DomainError

IMPORTANCE_KINDS = ("zipf", "power_law", "empirical")


@dataclass(frozen=True, eq=False)
class ImportanceSpec:
    """Sorted (non-increasing) per-feature importances, normalized to sum 1.

    Empirical specs keep the caller's scale unless ``normalize=True`` was
    requested; SAE-measured importances are absolute quantities.
    """

    kind: str
    n_features: int
    values: np.ndarray
    beta: float | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if v.ndim != 1 or v.size != self.n_features:
            raise DomainError("importance values must be a vector of length n_features")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise DomainError("importance values must be finite and non-negative")
        if np.any(np.diff(v) > 0):
            raise DomainError("importance values must be sorted non-increasing")


def make_importance(kind: str, n_features: int, beta: float | None = None,
                    values: Sequence[float] | None = None,
                    normalize: bool = True) -> ImportanceSpec:
    """Build an :class:`ImportanceSpec`.

    ``zipf`` gives ``I_i ~ 1/i``; ``power_law`` gives ``I_i ~ i**-beta``
    (1-based ranks); ``empirical`` sorts the supplied ``values`` descending.
    """
    if kind not in IMPORTANCE_KINDS:
        raise DomainError(f"unknown importance kind {kind!r}; expected one of {IMPORTANCE_KINDS}")
    if n_features < 1:
        raise DomainError(f"n_features must be >= 1, got {n_features}")
    ranks = np.arange(1, n_features + 1, dtype=np.float64)
    if kind == "zipf":
        v = 1.0 / ranks
    elif kind == "power_law":
        if beta is None or not beta > 0:
            raise DomainError(f"power_law importance needs beta > 0, got {beta!r}")
        v = ranks ** (-float(beta))
    else:
        if values is None:
            raise DomainError("empirical importance needs values")
        v = np.sort(np.asarray(values, dtype=np.float64))[::-1]
        if v.size != n_features:
            raise DomainError(f"expected {n_features} importance values, got {v.size}")
        if np.any(v < 0):
            raise DomainError("importance values must be non-negative")
        if not normalize:
            return ImportanceSpec(kind, n_features, v.copy(), beta)
    total = v.sum()
    if total <= 0:
        raise DomainError("importance values sum to zero")
    return ImportanceSpec(kind, n_features, v / total, beta if kind == "power_law" else None)


@dataclass(frozen=True, eq=False)
class ActivationModel:
    """Per-feature second moments ``E[x_i^2]`` plus the sparsity they come from."""

    kind: str
    alpha: float
    second_moments: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.second_moments, dtype=np.float64)
        m.setflags(write=False)
        object.__setattr__(self, "second_moments", m)
        if m.ndim != 1 or np.any(m < 0) or not np.all(np.isfinite(m)):
            raise DomainError("second_moments must be a finite non-negative vector")

    @classmethod
    def bernoulli_uniform(cls, alpha: float, n_features: int) -> "ActivationModel":
        # zero w.p. alpha, else U[0, 1]  =>  E[x^2] = (1 - alpha) / 3
        return cls("bernoulli_uniform", float(alpha),
                   np.full(n_features, (1.0 - alpha) / 3.0))

    @classmethod
    def empirical(cls, alpha: float, second_moments) -> "ActivationModel":
        return cls("empirical", float(alpha), np.asarray(second_moments, dtype=np.float64))


@dataclass(frozen=True)
class FloorPrediction:
    d_s: int
    f_kept: int
    f_dropped: int
    floor_raw: float
    floor_normalized: float = 1.0


def predicted_floor(imp: ImportanceSpec, act: ActivationModel, d_s: int,
                    capacity: float | None = None) -> FloorPrediction:
    """Importance-weighted mass of the features a width-``d_s`` student drops.

    Keeps the ``floor(d_s * g(alpha))`` most important features and sums
    ``I_i * E[x_i^2]`` over the rest.  Passing ``capacity`` overrides
    ``g(alpha)`` (``capacity=1`` is the one-feature-per-dimension baseline).
    """
    if act.second_moments.size != imp.n_features:
        raise DomainError(
            f"activation model has {act.second_moments.size} features, importance has {imp.n_features}")
    if capacity is None:
        f_kept = representable_features(d_s, act.alpha, imp.n_features)
    else:
        if d_s < 1:
            raise DomainError(f"d_s must be >= 1, got {d_s}")
        f_kept = min(imp.n_features, int(np.floor(d_s * capacity)))
    tail = imp.values[f_kept:] * act.second_moments[f_kept:]
    # fsum is exactly rounded, so nested tails can never sum out of order
    floor_raw = math.fsum(tail.tolist())
    return FloorPrediction(d_s=int(d_s), f_kept=f_kept, f_dropped=imp.n_features - f_kept,
                           floor_raw=floor_raw, floor_normalized=1.0 if floor_raw > 0 else 0.0)


def normalize_floors(raw: Sequence[float], reference: int = 0) -> tuple[list[float], bool]:
    """Divide ``raw`` by ``raw[reference]``.

    Returns ``(normalized, degenerate)``; a zero reference yields all zeros
    and ``degenerate=True``.
    """
    raw = [float(r) for r in raw]
    if not raw:
        raise DomainError("no floors to normalize")
    ref = raw[reference]
    if ref <= 0:
        return [0.0] * len(raw), True
    return [r / ref for r in raw], False


@dataclass
class FloorCurve:
    points: list[FloorPrediction]
    reference_width: int
    degenerate: bool = False
    widths: list[int] = field(init=False)

    def __post_init__(self):
        self.widths = [p.d_s for p in self.points]

    def __iter__(self):
        return iter(self.points)

    def __len__(self):
        return len(self.points)

    def __getitem__(self, i):
        return self.points[i]


def floor_curve(imp: ImportanceSpec, act: ActivationModel, widths: Sequence[int],
                normalize_to: int | None = None, capacity: float | None = None) -> FloorCurve:
    """Predicted floors at several widths, normalized to one reference width.

    The reference defaults to the smallest width.
    """
    widths = [int(w) for w in widths]
    if not widths:
        raise DomainError("widths must be non-empty")
    if normalize_to is None:
        normalize_to = min(widths)
    if normalize_to not in widths:
        raise DomainError(f"normalize_to={normalize_to} is not one of the widths {widths}")
    preds = [predicted_floor(imp, act, w, capacity=capacity) for w in widths]
    normed, degenerate = normalize_floors([p.floor_raw for p in preds], widths.index(normalize_to))
    points = [FloorPrediction(p.d_s, p.f_kept, p.f_dropped, p.floor_raw, z)
              for p, z in zip(preds, normed)]
    return FloorCurve(points, normalize_to, degenerate)
