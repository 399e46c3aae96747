"""Validation sweep over toy-model configurations.

A grid cell is a (feature count ``n``, teacher width ``d_t``, sparsity
``alpha``) triple; each cell contributes one row per student width
``d_s = 1..d_t``.  Students are trained directly on the data distribution,
so the training problem only depends on ``(n, alpha, d_s)``: cells that
share it reuse one seed-aggregated measurement.
"""

from __future__ import annotations

import configparser
import logging
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field, fields
from itertools import product
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import metrics
from .capacity import critical_width
from .errors import DomainError, SchemaError
from .importance import ActivationModel, make_importance, predicted_floor
from .io import fmt, fmt_exact, read_csv, write_csv
from .toymodel import ToyRunConfig, train_seeds

log = logging.getLogger(__name__)

CSV_COLUMNS = ("n", "d_t", "d_s", "alpha", "predicted", "actual_mean",
               "actual_std", "n_seeds", "d_crit", "ratio")
DEFAULT_THRESHOLD = 1e-4
THREADS_ENV = "FLOORCAST_THREADS"


@dataclass(frozen=True)
class SweepGrid:
    feature_counts: tuple = (10, 20, 40)
    teacher_widths: tuple = (3, 5, 8, 10)
    sparsities: tuple = (0.80, 0.90, 0.95, 0.99)
    seeds: int = 20
    base_seed: int = 0
    steps: int = 2000
    batch_size: int = 1024
    learning_rate: float = 1e-3
    eval_fraction: float = 0.1
    eval_every: int = 20
    importance: str = "zipf"
    beta: float | None = None

    def __post_init__(self):
        for name in ("feature_counts", "teacher_widths", "sparsities"):
            values = tuple(getattr(self, name))
            if not values:
                raise DomainError(f"grid field {name} must be non-empty")
            object.__setattr__(self, name, values)
        if self.seeds < 1:
            raise DomainError("seeds must be >= 1")
        if max(self.teacher_widths) > min(self.feature_counts):
            raise DomainError("every teacher width must be <= every feature count")
        if min(self.teacher_widths) < 1:
            raise DomainError("teacher widths must be positive")

    def cells(self):
        return list(product(self.feature_counts, self.sparsities, self.teacher_widths))

    def row_keys(self):
        """``(n, d_t, d_s, alpha)`` for every row, in canonical order."""
        return [(n, d_t, d_s, a) for n, a, d_t in self.cells() for d_s in range(1, d_t + 1)]

    def seed_list(self):
        return list(range(self.base_seed, self.base_seed + self.seeds))


_INT_FIELDS = {"seeds", "base_seed", "steps", "batch_size", "eval_every"}
_FLOAT_FIELDS = {"learning_rate", "eval_fraction", "beta"}
_LIST_FIELDS = {"feature_counts": int, "teacher_widths": int, "sparsities": float}


def parse_grid(text: str, **overrides) -> SweepGrid:
    """Parse a ``key = value`` grid file (``#`` comments, comma lists)."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        cp.read_string("[grid]\n" + text)
    except configparser.Error as exc:
        raise SchemaError(f"cannot parse grid file: {exc}") from exc
    known = {f.name for f in fields(SweepGrid)}
    kwargs = {}
    for key, raw in cp["grid"].items():
        if key not in known:
            raise SchemaError(f"unknown grid key {key!r}; expected one of {sorted(known)}")
        try:
            if key in _LIST_FIELDS:
                kwargs[key] = tuple(_LIST_FIELDS[key](v) for v in raw.split(",") if v.strip())
            elif key in _INT_FIELDS:
                kwargs[key] = int(raw)
            elif key in _FLOAT_FIELDS:
                kwargs[key] = float(raw)
            else:
                kwargs[key] = raw.strip()
        except ValueError as exc:
            raise SchemaError(f"grid key {key!r}: {exc}") from exc
    kwargs.update({k: v for k, v in overrides.items() if v is not None})
    return SweepGrid(**kwargs)


def load_grid(spec: str, **overrides) -> SweepGrid:
    if spec == "default":
        return SweepGrid(**{k: v for k, v in overrides.items() if v is not None})
    return parse_grid(Path(spec).read_text(), **overrides)


@dataclass
class SweepRow:
    n: int
    d_t: int
    d_s: int
    alpha: float
    predicted_floor: float
    actual_floor_mean: float
    actual_floor_std: float
    n_seeds: int
    d_crit: float
    width_ratio: float

    @property
    def key(self):
        return (self.n, self.d_t, self.d_s, self.alpha)

    @property
    def flagged(self) -> bool:
        """Fewer than two surviving seeds."""
        return self.n_seeds < 2

    def as_tuple(self):
        return (self.n, self.d_t, self.d_s, self.alpha, self.predicted_floor,
                self.actual_floor_mean, self.actual_floor_std, self.n_seeds,
                self.d_crit, self.width_ratio)


def _importance(grid: SweepGrid, n: int):
    return make_importance(grid.importance, n, beta=grid.beta)


def prediction_for(grid: SweepGrid, n: int, alpha: float, d_s: int, capacity=None) -> float:
    act = ActivationModel.bernoulli_uniform(alpha, n)
    return predicted_floor(_importance(grid, n), act, d_s, capacity=capacity).floor_raw


def _train_group(grid: SweepGrid, n: int, alpha: float, d_s: int):
    config = ToyRunConfig(n, d_s, alpha, _importance(grid, n), steps=grid.steps,
                          batch_size=grid.batch_size, learning_rate=grid.learning_rate,
                          eval_fraction=grid.eval_fraction, eval_every=grid.eval_every)
    m = train_seeds(config, grid.seed_list())
    return (n, alpha, d_s), m.actual_floor, m.floor_std, m.n_seeds, m.n_diverged


def _make_row(grid, key, mean, std, n_seeds) -> SweepRow:
    n, d_t, d_s, alpha = key
    d_crit = critical_width(n, alpha)
    return SweepRow(n, d_t, d_s, alpha, prediction_for(grid, n, alpha, d_s),
                    mean, std, n_seeds, d_crit, d_s / d_crit)


def default_workers() -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            value = int(env)
        except ValueError:
            raise DomainError(f"{THREADS_ENV} must be a positive integer, got {env!r}") from None
        if value < 1:
            raise DomainError(f"{THREADS_ENV} must be a positive integer, got {env!r}")
        return value
    return os.cpu_count() or 1


def run_sweep(grid: SweepGrid, checkpoint=None, workers: int | None = None,
              progress=None) -> list[SweepRow]:
    """Train every grid row and return seed-aggregated rows.

    With ``checkpoint`` set, rows already present in that CSV are reused
    and the file is atomically rewritten after each finished training
    group, so an interrupted sweep resumes where it stopped.
    """
    keys = grid.row_keys()
    done: dict = {}
    if checkpoint is not None and Path(checkpoint).exists():
        wanted = set(keys)
        for row in read_rows_csv(checkpoint):
            if row.key in wanted:
                # only the trained measurement is reused; predictions are recomputed
                done[row.key] = _make_row(grid, row.key, row.actual_floor_mean,
                                          row.actual_floor_std, row.n_seeds)
        log.info("resuming sweep: %d/%d rows from %s", len(done), len(keys), checkpoint)

    # reuse finished measurements for rows that share a training problem
    by_group: dict = {}
    for row in done.values():
        by_group.setdefault((row.n, row.alpha, row.d_s),
                            (row.actual_floor_mean, row.actual_floor_std, row.n_seeds))
    pending: dict = {}
    for key in keys:
        if key in done:
            continue
        n, d_t, d_s, alpha = key
        group = (n, alpha, d_s)
        if group in by_group:
            done[key] = _make_row(grid, key, *by_group[group])
        else:
            pending.setdefault(group, []).append(key)

    def finish(group, mean, std, n_seeds, n_diverged):
        if n_diverged:
            log.warning("group n=%d alpha=%g d_s=%d: %d diverged seed(s) excluded",
                        group[0], group[1], group[2], n_diverged)
        for key in pending[group]:
            done[key] = _make_row(grid, key, mean, std, n_seeds)
        if checkpoint is not None:
            write_rows_csv(_sorted(done.values()), checkpoint, exact=True)
        if progress is not None:
            progress(len(done), len(keys))

    workers = default_workers() if workers is None else workers
    groups = sorted(pending)
    if workers <= 1 or len(groups) <= 1:
        for n, alpha, d_s in groups:
            _, mean, std, n_seeds, n_div = _train_group(grid, n, alpha, d_s)
            finish((n, alpha, d_s), mean, std, n_seeds, n_div)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_train_group, grid, n, a, d) for n, a, d in groups]
            try:
                for fut in as_completed(futures):
                    group, mean, std, n_seeds, n_div = fut.result()
                    finish(group, mean, std, n_seeds, n_div)
            except BaseException:
                for fut in futures:
                    fut.cancel()
                raise
    if checkpoint is not None and not pending:
        write_rows_csv(_sorted(done.values()), checkpoint, exact=True)
    return _sorted(done.values())


def _sorted(rows):
    return sorted(rows, key=lambda r: (r.n, r.alpha, r.d_t, r.d_s))


def write_rows_csv(rows, path, exact: bool = False):
    return write_csv(path, CSV_COLUMNS, (r.as_tuple() for r in rows),
                     formatter=fmt_exact if exact else fmt)


def read_rows_csv(path) -> list[SweepRow]:
    records = read_csv(path)
    if records and set(CSV_COLUMNS) - set(records[0]):
        raise SchemaError(f"{path}: missing columns {sorted(set(CSV_COLUMNS) - set(records[0]))}")
    rows = []
    for lineno, rec in enumerate(records, start=2):
        try:
            rows.append(SweepRow(int(rec["n"]), int(rec["d_t"]), int(rec["d_s"]),
                                 float(rec["alpha"]), float(rec["predicted"]),
                                 float(rec["actual_mean"]), float(rec["actual_std"]),
                                 int(rec["n_seeds"]), float(rec["d_crit"]), float(rec["ratio"])))
        except (TypeError, ValueError) as exc:
            raise SchemaError(f"{path}:{lineno}: {exc}") from exc
    return rows


# -- scoring ----------------------------------------------------------------

@dataclass(frozen=True)
class ScoreReport:
    pearson_r: float
    mape_percent: float
    r_squared: float
    accuracy_percent: float
    n_points: int
    filter_threshold: float
    median_accuracy: float
    mean_accuracy: float
    log_r_squared: float
    warnings: tuple = field(default=())

    def as_dict(self):
        return asdict(self)


def _score_arrays(pred, actual, threshold) -> ScoreReport:
    pred = np.asarray(pred, dtype=np.float64)
    actual = np.asarray(actual, dtype=np.float64)
    if pred.size < 2:
        raise DomainError(f"need >= 2 rows with predicted > {threshold:g}, got {pred.size}")
    notes = []
    r = metrics.pearson_r(pred, actual)
    if math.isnan(r):
        notes.append("pearson_r undefined: zero variance")
    mape = metrics.mape(pred, actual)
    acc = metrics.accuracies(pred, actual)
    positive = (pred > 0) & (actual > 0)
    log_r2 = (metrics.r_squared(np.log(actual[positive]), np.log(pred[positive]))
              if positive.sum() >= 2 else float("nan"))
    r2 = metrics.r_squared(actual, pred)
    if math.isnan(r2):
        notes.append("r_squared undefined: constant actual floors")
    return ScoreReport(pearson_r=r, mape_percent=mape, r_squared=r2,
                       accuracy_percent=max(0.0, 100.0 - mape), n_points=int(pred.size),
                       filter_threshold=threshold, median_accuracy=float(np.median(acc)),
                       mean_accuracy=float(np.mean(acc)), log_r_squared=log_r2,
                       warnings=tuple(notes))


def _scorable(rows, threshold):
    return [r for r in rows
            if r.predicted_floor > threshold and r.actual_floor_mean > 0
            and math.isfinite(r.actual_floor_mean)]


def score(rows, filter_threshold: float = DEFAULT_THRESHOLD) -> ScoreReport:
    """Compare predicted and measured floors over rows with predicted > threshold."""
    kept = _scorable(rows, filter_threshold)
    return _score_arrays([r.predicted_floor for r in kept],
                         [r.actual_floor_mean for r in kept], filter_threshold)


def naive_score(rows, filter_threshold: float = DEFAULT_THRESHOLD,
                grid: SweepGrid | None = None) -> ScoreReport:
    """Score the one-feature-per-dimension baseline on the same rows as :func:`score`."""
    grid = grid or SweepGrid()
    kept = _scorable(rows, filter_threshold)
    pred = [prediction_for(grid, r.n, r.alpha, r.d_s, capacity=1.0) for r in kept]
    return _score_arrays(pred, [r.actual_floor_mean for r in kept], filter_threshold)


class CollapsePoint(NamedTuple):
    width_ratio: float
    normalized_floor: float
    normalized_std: float
    n: int
    d_t: int
    alpha: float
    d_s: int


def _configs(rows):
    configs: dict = {}
    for r in rows:
        configs.setdefault((r.n, r.d_t, r.alpha), []).append(r)
    return {k: sorted(v, key=lambda r: r.d_s) for k, v in configs.items()}


def collapse_curve(rows) -> list[CollapsePoint]:
    """Floors normalized by each config's ``d_s = 1`` floor, keyed by ``d_s / d_crit``."""
    out = []
    for (n, d_t, alpha), cfg in sorted(_configs(rows).items()):
        ref = next((r for r in cfg if r.d_s == 1), None)
        if ref is None or not ref.actual_floor_mean > 0:
            warnings.warn(f"config n={n} d_t={d_t} alpha={alpha:g}: no positive d_s=1 floor, skipped")
            continue
        for r in cfg:
            out.append(CollapsePoint(r.width_ratio, r.actual_floor_mean / ref.actual_floor_mean,
                                     r.actual_floor_std / ref.actual_floor_mean,
                                     n, d_t, alpha, r.d_s))
    out.sort(key=lambda p: (p.width_ratio, p.n, p.d_t, p.alpha))
    return out


ABSENT = None


def error_heatmap(rows, filter_threshold: float = DEFAULT_THRESHOLD) -> dict:
    """Median per-row accuracy for every ``(alpha, d_t, n)`` cell.

    Cells with no row above the threshold map to :data:`ABSENT`.
    """
    table = {}
    for (n, d_t, alpha), cfg in _configs(rows).items():
        kept = _scorable(cfg, filter_threshold)
        if not kept:
            table[(alpha, d_t, n)] = ABSENT
            continue
        acc = metrics.accuracies([r.predicted_floor for r in kept],
                                 [r.actual_floor_mean for r in kept])
        table[(alpha, d_t, n)] = float(np.median(acc))
    return dict(sorted(table.items()))
