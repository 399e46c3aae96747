"""Calibrating predicted geometric floors against observed distillation floors.

The observed floor is modeled as ``observed = C * predicted + B``: a
width-dependent geometric term plus a width-independent baseline.  Fits
are provided with ``B`` free (affine), ``B = 0`` (origin) and ``B`` fixed
from a control width.  Observed floors are also fit directly against width
with ``a * d**-gamma + b``.

All R^2 values are ``1 - SS_res / SS_tot`` with ``SS_tot`` about the mean
of the observed values, so constrained fits can go negative.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import minimize

from .errors import DegenerateFitError, DomainError, SchemaError
from .io import atomic_write_text, fmt, read_csv, write_csv
from .metrics import r_squared

log = logging.getLogger(__name__)

GAMMA_STARTS = tuple(round(0.2 + 0.1 * k, 1) for k in range(9))  # 0.2 .. 1.0


@dataclass(frozen=True)
class FloorDataset:
    d_s: tuple
    predicted: tuple
    observed: tuple

    def __post_init__(self):
        n = len(self.d_s)
        if not (len(self.predicted) == len(self.observed) == n):
            raise DomainError("d_s, predicted and observed must have equal length")
        if n < 2:
            raise DomainError("a floor dataset needs at least 2 points")
        if any(b <= a for a, b in zip(self.d_s, self.d_s[1:])):
            raise DomainError("d_s must be strictly increasing")
        if any(p < 0 for p in self.predicted):
            raise DomainError("predicted floors must be non-negative")
        if any(not o > 0 for o in self.observed):
            raise DomainError("observed floors must be positive")

    @classmethod
    def from_points(cls, points):
        pts = sorted(points)
        return cls(tuple(int(p[0]) for p in pts), tuple(float(p[1]) for p in pts),
                   tuple(float(p[2]) for p in pts))

    @property
    def points(self):
        return list(zip(self.d_s, self.predicted, self.observed))

    def arrays(self):
        return (np.asarray(self.d_s, dtype=np.float64), np.asarray(self.predicted, dtype=np.float64),
                np.asarray(self.observed, dtype=np.float64))


def load_floor_dataset(path) -> FloorDataset:
    """Read a ``d_s,predicted,observed`` CSV (extra columns ignored)."""
    records = read_csv(path)
    if not records:
        raise SchemaError(f"{path}: no rows")
    missing = {"d_s", "predicted", "observed"} - set(records[0])
    if missing:
        raise SchemaError(f"{path}: missing column(s) {sorted(missing)}")
    pts = []
    for lineno, rec in enumerate(records, start=2):
        try:
            pts.append((int(rec["d_s"]), float(rec["predicted"]), float(rec["observed"])))
        except (TypeError, ValueError) as exc:
            raise SchemaError(f"{path}:{lineno}: {exc}") from exc
    return FloorDataset.from_points(pts)


def load_width_observed(path):
    """``(d_s, observed)`` arrays from a CSV with those two columns."""
    records = read_csv(path)
    if not records or {"d_s", "observed"} - set(records[0]):
        raise SchemaError(f"{path}: need columns d_s, observed")
    try:
        pts = sorted((float(r["d_s"]), float(r["observed"])) for r in records)
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"{path}: {exc}") from exc
    return np.array([p[0] for p in pts]), np.array([p[1] for p in pts])


@dataclass
class FitResult:
    model: str
    params: dict
    r_squared: float
    residuals: list
    flags: list = field(default_factory=list)

    def predict(self, x):
        x = np.asarray(x, dtype=np.float64)
        p = self.params
        if self.model == "power_law":
            return p["a"] * x ** (-p["gamma"]) + p["b"]
        return p["C"] * x + p.get("B", 0.0)


def _xy(data):
    if isinstance(data, FloorDataset):
        _, x, y = data.arrays()
        return x, y
    pts = list(data)
    return (np.array([p[1] for p in pts], dtype=np.float64),
            np.array([p[2] for p in pts], dtype=np.float64))


def _r2(y, fitted, flags):
    r2 = r_squared(y, fitted)
    if math.isnan(r2):
        flags.append("r_squared undefined: observed values are constant")
    return r2


def fit_affine(data) -> FitResult:
    """Ordinary least squares ``observed = C * predicted + B``."""
    x, y = _xy(data)
    if x.size < 3:
        raise DomainError("affine fit needs at least 3 points")
    if np.ptp(x) == 0:
        raise DegenerateFitError("predicted floors have zero variance")
    dx = x - x.mean()
    sxx = dx @ dx
    C = float(dx @ (y - y.mean()) / sxx)
    B = float(y.mean() - C * x.mean())
    fitted = C * x + B
    flags: list = []
    return FitResult("affine", {"C": C, "B": B}, _r2(y, fitted, flags), (y - fitted).tolist(), flags)


def fit_origin(data) -> FitResult:
    """Least squares through the origin, ``C = sum(xy) / sum(x^2)``."""
    x, y = _xy(data)
    if x.size < 1:
        raise DomainError("origin fit needs at least 1 point")
    sxx = x @ x
    if sxx == 0:
        raise DegenerateFitError("all predicted floors are zero")
    C = float(x @ y / sxx)
    fitted = C * x
    flags: list = []
    return FitResult("origin", {"C": C}, _r2(y, fitted, flags), (y - fitted).tolist(), flags)


def control_baseline(data: FloorDataset) -> float:
    """Observed floor at the largest width (the control run)."""
    return float(data.observed[int(np.argmax(data.d_s))])


def fit_fixed_b(data, b: float | None = None, exclude_control: bool = True) -> FitResult:
    """One-parameter fit ``observed = C * predicted + b`` with ``b`` held fixed.

    By default ``b`` is the control observation at the largest width, and
    that point is left out of the fit.  Residuals cover every point; R^2
    covers the fitted points only.
    """
    if not isinstance(data, FloorDataset):
        data = FloorDataset.from_points(data)
    d, x, y = data.arrays()
    if b is None:
        b = control_baseline(data)
    include = np.ones(x.size, dtype=bool)
    if exclude_control:
        include[int(np.argmax(d))] = False
    if not include.any():
        raise DomainError("no points remain after excluding the control width")
    xi, yi = x[include], y[include]
    sxx = xi @ xi
    if sxx == 0:
        raise DegenerateFitError("all included predicted floors are zero")
    C = float(xi @ (yi - b) / sxx)
    flags: list = []
    r2 = _r2(yi, C * xi + b, flags)
    return FitResult("fixed_b", {"C": C, "B": float(b)}, r2, (y - (C * x + b)).tolist(), flags)


def _power_law_sse(params, d, y):
    a, gamma, b = params
    a, b = max(a, 0.0), max(b, 0.0)
    r = y - (a * d ** (-gamma) + b)
    return float(r @ r)


def _linear_start(d, y, gamma):
    A = np.column_stack([d ** (-gamma), np.ones_like(d)])
    (a, b), *_ = np.linalg.lstsq(A, y, rcond=None)
    return max(a, 0.0), max(b, 0.0)


def fit_power_law(widths, observed=None, max_iter: int = 4000) -> FitResult:
    """Least-squares fit of ``observed = a * d**-gamma + b``.

    Nelder-Mead from a grid of starting exponents, with ``a, b >= 0``
    enforced by projection.  The best candidate wins by SSE, ties going to
    the smaller ``gamma``.  Accepts ``(widths, observed)`` arrays or a
    :class:`FloorDataset`.
    """
    if isinstance(widths, FloorDataset):
        d, _, y = widths.arrays()
    else:
        d = np.asarray(widths, dtype=np.float64)
        y = np.asarray(observed, dtype=np.float64)
    if d.size != y.size:
        raise DomainError("widths and observed must have equal length")
    if d.size < 4:
        raise DomainError("power-law fit needs at least 4 points")
    if np.any(y <= 0) or np.any(d <= 0):
        raise DomainError("widths and observed floors must be positive")

    flags: list = []
    if np.ptp(y) == 0:
        flags.append("degenerate: observed values are constant")
        params = {"a": 0.0, "gamma": 0.0, "b": float(y[0])}
        return FitResult("power_law", params, float("nan"), [0.0] * y.size, flags)

    # optimize in units of max(y) so the result is scale-equivariant
    scale = float(np.max(np.abs(y)))
    ys = y / scale
    candidates = []
    for g0 in GAMMA_STARTS:
        a0, b0 = _linear_start(d, ys, g0)
        res = minimize(_power_law_sse, x0=[a0, g0, b0], args=(d, ys), method="Nelder-Mead",
                       options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": max_iter,
                                "maxfev": 2 * max_iter})
        a, gamma, b = res.x
        candidates.append((float(res.fun), float(gamma), max(float(a), 0.0), max(float(b), 0.0),
                           bool(res.success)))
    sse, gamma, a, b, ok = min(candidates, key=lambda c: (c[0], c[1]))
    if not ok:
        flags.append("optimizer did not converge within budget; best candidate returned")
        log.warning("power-law fit: Nelder-Mead hit its iteration budget")
    params = {"a": a * scale, "gamma": gamma, "b": b * scale}
    fitted = params["a"] * d ** (-gamma) + params["b"]
    r2 = _r2(y, fitted, flags)
    return FitResult("power_law", params, r2, (y - fitted).tolist(), flags)


@dataclass(frozen=True)
class DecompositionRow:
    d_s: int
    observed: float
    geometric: float
    baseline: float
    pct_geometric: float


def decompose(data, C: float, B: float) -> list[DecompositionRow]:
    """Split each observed floor into ``C * predicted`` and the baseline ``B``."""
    if not isinstance(data, FloorDataset):
        data = FloorDataset.from_points(data)
    rows = []
    for d, pred, obs in data.points:
        if obs <= 0:
            raise DomainError(f"observed floor at d_s={d} must be positive")
        geo = C * pred
        rows.append(DecompositionRow(d, obs, geo, B, geo / obs * 100.0))
    return rows


DECOMPOSITION_COLUMNS = ("d_s", "predicted", "observed", "geometric", "baseline",
                         "pct_geometric", "fitted", "residual")


def write_report(data: FloorDataset, fit: FitResult, path) -> tuple[Path, Path]:
    """CSV decomposition plus a plain-text summary next to it (``.txt``)."""
    path = Path(path)
    C, B = fit.params["C"], fit.params.get("B", 0.0)
    rows = decompose(data, C, B)
    table = [(r.d_s, p, r.observed, r.geometric, r.baseline, r.pct_geometric,
              r.geometric + r.baseline, r.observed - r.geometric - r.baseline)
             for r, p in zip(rows, data.predicted)]
    csv_path = write_csv(path, DECOMPOSITION_COLUMNS, table)
    txt_path = atomic_write_text(path.with_suffix(".txt"), summary_text(data, fit))
    return csv_path, txt_path


def summary_text(data: FloorDataset, fit: FitResult, extra_fits=()) -> str:
    lines = ["Calibration fits", ""]
    lines.append(f"{'fit':<10} {'parameters':<28} {'R^2':>8}")
    for f in (fit, *extra_fits):
        params = ", ".join(f"{k}={v:.4g}" for k, v in f.params.items())
        lines.append(f"{f.model:<10} {params:<28} {f.r_squared:>8.3f}")
    C, B = fit.params.get("C"), fit.params.get("B", 0.0)
    if C is not None:
        lines += ["", "Floor decomposition", "",
                  f"{'d_s':>6} {'observed':>9} {'C*L':>8} {'B':>7} {'%geom':>7}"]
        for r in decompose(data, C, B):
            lines.append(f"{r.d_s:>6} {r.observed:>9.3f} {r.geometric:>8.3f} "
                         f"{r.baseline:>7.3f} {r.pct_geometric:>6.1f}%")
    for flag in fit.flags:
        lines.append(f"warning: {flag}")
    return "\n".join(lines) + "\n"


def fit_table(fits) -> list[tuple]:
    return [(f.model, ";".join(f"{k}={fmt(v)}" for k, v in f.params.items()), f.r_squared)
            for f in fits]
