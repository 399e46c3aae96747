"""Sparse-autoencoder measurement files and the teacher capacity summary.

File format (JSON)::

    {
      "schema_version": 1,
      "layer": 12,
      "d_model": 1024,
      "token_count": 300000000,
      "importance": [...],        # E[z_i^2] per SAE feature
      "activation_freq": [...],   # fraction of tokens with z_i > 0
      "note": "..."               # optional free text
    }
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .capacity import capacity_g, critical_width
from .errors import DomainError, SchemaError
from .importance import ActivationModel, ImportanceSpec, make_importance
from .io import atomic_write_text, write_csv

SCHEMA_VERSION = 1
DEFAULT_ALIVE_THRESHOLD = 1e-5
SUMMARY_COLUMNS = ("layer", "alive_F", "avg_L0", "alpha", "g", "d_crit")
_REQUIRED = ("schema_version", "layer", "d_model", "token_count", "importance", "activation_freq")


@dataclass(eq=False)
class SaeStats:
    layer: int
    d_model: int
    importance: np.ndarray
    activation_freq: np.ndarray
    token_count: int
    note: str = ""

    def __post_init__(self):
        self.importance = np.asarray(self.importance, dtype=np.float64)
        self.activation_freq = np.asarray(self.activation_freq, dtype=np.float64)
        validate(self)

    @property
    def n_features(self) -> int:
        return int(self.importance.size)

    def __eq__(self, other):
        if not isinstance(other, SaeStats):
            return NotImplemented
        return (self.layer == other.layer and self.d_model == other.d_model
                and self.token_count == other.token_count and self.note == other.note
                and np.array_equal(self.importance, other.importance)
                and np.array_equal(self.activation_freq, other.activation_freq))


def validate(stats: SaeStats) -> None:
    imp, freq = stats.importance, stats.activation_freq
    if imp.ndim != 1 or freq.ndim != 1:
        raise SchemaError("importance and activation_freq must be flat arrays")
    if imp.size == 0:
        raise SchemaError("no features")
    if imp.size != freq.size:
        raise SchemaError(f"length mismatch: importance has {imp.size} entries, "
                          f"activation_freq has {freq.size}")
    bad = np.flatnonzero(~np.isfinite(imp) | (imp < 0))
    if bad.size:
        raise SchemaError(f"importance[{bad[0]}] = {imp[bad[0]]!r}: must be finite and >= 0")
    bad = np.flatnonzero(~np.isfinite(freq) | (freq < 0) | (freq > 1))
    if bad.size:
        raise SchemaError(f"activation_freq[{bad[0]}] = {freq[bad[0]]!r}: must lie in [0, 1]")
    if stats.d_model < 1 or stats.token_count < 1:
        raise SchemaError("d_model and token_count must be positive")


def load_sae_stats(path) -> SaeStats:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise SchemaError(f"{path}: top level must be an object")
    missing = [k for k in _REQUIRED if k not in raw]
    if missing:
        raise SchemaError(f"{path}: missing field(s) {missing}")
    if raw["schema_version"] != SCHEMA_VERSION:
        raise SchemaError(f"{path}: schema_version {raw['schema_version']!r} "
                          f"not supported (expected {SCHEMA_VERSION})")
    try:
        return SaeStats(layer=int(raw["layer"]), d_model=int(raw["d_model"]),
                        importance=np.asarray(raw["importance"], dtype=np.float64),
                        activation_freq=np.asarray(raw["activation_freq"], dtype=np.float64),
                        token_count=int(raw["token_count"]), note=str(raw.get("note", "")))
    except SchemaError as exc:
        raise SchemaError(f"{path}: {exc}") from None
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"{path}: {exc}") from exc


def save_sae_stats(stats: SaeStats, path) -> Path:
    doc = {"schema_version": SCHEMA_VERSION, "layer": stats.layer, "d_model": stats.d_model,
           "token_count": stats.token_count, "note": stats.note,
           "importance": stats.importance.tolist(),
           "activation_freq": stats.activation_freq.tolist()}
    return atomic_write_text(path, json.dumps(doc, separators=(",", ":")) + "\n")


@dataclass(frozen=True)
class SaeSummary:
    n_alive: int
    avg_l0: float
    alpha: float
    g: float
    d_crit: float
    n_total: int
    layer: int | None = None


def summary_from_counts(n_alive: int, avg_l0: float, n_total: int | None = None,
                        layer: int | None = None) -> SaeSummary:
    """Capacity summary from an alive-feature count and an average L0."""
    if n_alive < 1:
        raise DomainError("no alive features")
    alpha = 1.0 - avg_l0 / n_alive
    return SaeSummary(n_alive=int(n_alive), avg_l0=float(avg_l0), alpha=alpha,
                      g=capacity_g(alpha), d_crit=critical_width(n_alive, alpha),
                      n_total=int(n_total if n_total is not None else n_alive), layer=layer)


def alive_mask(stats: SaeStats, alive_threshold: float = DEFAULT_ALIVE_THRESHOLD) -> np.ndarray:
    return stats.activation_freq > alive_threshold


def summarize(stats: SaeStats, alive_threshold: float = DEFAULT_ALIVE_THRESHOLD) -> SaeSummary:
    """Alive count, mean L0 and the resulting sparsity / capacity / critical width.

    L0 counts alive features only: ``avg_l0 = sum(freq[alive])``, and
    ``alpha = 1 - avg_l0 / n_alive``.
    """
    mask = alive_mask(stats, alive_threshold)
    n_alive = int(mask.sum())
    if n_alive == 0:
        raise DomainError(f"no alive features above threshold {alive_threshold:g}")
    # fsum keeps the result independent of feature order
    avg_l0 = math.fsum(stats.activation_freq[mask].tolist())
    return summary_from_counts(n_alive, avg_l0, stats.n_features, stats.layer)


def to_prediction_inputs(stats: SaeStats, alive_threshold: float = DEFAULT_ALIVE_THRESHOLD
                         ) -> tuple[ImportanceSpec, ActivationModel]:
    """Alive-feature importance (sorted, unnormalized) and matching activation model.

    Measured ``E[z_i^2]`` already is the per-feature loss contribution, so
    the activation model's second moments are all 1.
    """
    summary = summarize(stats, alive_threshold)
    imp = stats.importance[alive_mask(stats, alive_threshold)]
    spec = make_importance("empirical", imp.size, values=imp, normalize=False)
    return spec, ActivationModel.empirical(summary.alpha, np.ones(imp.size))


def write_summary_csv(summaries, path):
    rows = [(s.layer, s.n_alive, s.avg_l0, s.alpha, s.g, s.d_crit) for s in summaries]
    return write_csv(path, SUMMARY_COLUMNS, rows)
