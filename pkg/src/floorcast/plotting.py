"""Figures rendered from the CSV outputs.

Every figure is written as a standalone vector file.  SVG output is made
reproducible by fixing the id hash salt and dropping the date metadata.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .capacity import ALPHA_AT_MINIMUM, capacity_g  # noqa: E402
from .errors import SchemaError  # noqa: E402

PLOT_KINDS = ("capacity-curve", "floor-grid", "scatter", "collapse", "pred-vs-obs")

_STYLE = {
    "font.size": 9,
    "axes.titlesize": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 7,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "lines.linewidth": 1.4,
    "svg.hashsalt": "floorcast",
    "svg.fonttype": "path",
}
_ALPHA_COLORS = {0.8: "tab:blue", 0.9: "tab:orange", 0.95: "tab:green", 0.99: "tab:red"}


def _color(alpha):
    return _ALPHA_COLORS.get(round(float(alpha), 4), "tab:gray")


def _figure(ncols=1, nrows=1, width=4.0, height=3.0, **kw):
    with plt.rc_context(_STYLE):
        fig, axes = plt.subplots(nrows, ncols, figsize=(width * ncols, height * nrows),
                                 squeeze=False, **kw)
    return fig, axes


def save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with plt.rc_context(_STYLE):
        fig.tight_layout()
        metadata = {"Date": None} if path.suffix.lower() == ".svg" else None
        fig.savefig(path, metadata=metadata)
    plt.close(fig)
    return path


def _require(records, columns, kind):
    if not records:
        raise SchemaError(f"{kind}: input has no rows")
    missing = set(columns) - set(records[0])
    if missing:
        raise SchemaError(f"{kind}: input is missing column(s) {sorted(missing)}")


def capacity_curve(out, records=None, n_features=None):
    """``g(alpha)`` on a log axis, plus ``F / g`` when a feature count is known."""
    alphas = np.linspace(0.5, 0.999, 400)
    g = capacity_g(alphas)
    fig, axes = _figure(ncols=2)
    ax = axes[0, 0]
    ax.semilogy(alphas, g, color="k")
    ax.axvline(ALPHA_AT_MINIMUM, color="0.7", ls=":", lw=1)
    if records:
        _require(records, ("alpha", "g"), "capacity-curve")
        pts = [(float(r["alpha"]), float(r["g"])) for r in records]
        ax.scatter(*zip(*pts), color=[_color(a) for a, _ in pts], zorder=3, s=16)
        if n_features is None and records[0].get("n_features"):
            n_features = int(float(records[0]["n_features"]))
    ax.set_xlabel(r"sparsity $\alpha$")
    ax.set_ylabel(r"capacity $g(\alpha)$")
    ax = axes[0, 1]
    for n in ([n_features] if n_features else [10, 20, 40]):
        ax.plot(alphas, n / g, label=f"F={n}")
    ax.set_xlabel(r"sparsity $\alpha$")
    ax.set_ylabel(r"critical width $F/g(\alpha)$")
    ax.legend(frameon=False)
    return save(fig, out)


def floor_grid(out, rows):
    return save(floor_grid_figure(rows), out)


def floor_grid_figure(rows):
    """Actual (mean ± std) and predicted floor vs width; rows: n, columns: alpha."""
    ns = sorted({r.n for r in rows})
    alphas = sorted({r.alpha for r in rows})
    fig, axes = _figure(ncols=len(alphas), nrows=len(ns), width=2.4, height=2.0, sharex=False)
    for i, n in enumerate(ns):
        for j, a in enumerate(alphas):
            ax = axes[i, j]
            cell = [r for r in rows if r.n == n and r.alpha == a]
            if not cell:
                ax.set_visible(False)
                continue
            d_t = max(r.d_t for r in cell)
            cell = sorted((r for r in cell if r.d_t == d_t), key=lambda r: r.d_s)
            d = [r.d_s for r in cell]
            mean = np.array([r.actual_floor_mean for r in cell])
            std = np.array([r.actual_floor_std for r in cell])
            ax.plot(d, mean, color=_color(a), label="actual")
            ax.fill_between(d, mean - std, mean + std, color=_color(a), alpha=0.25, lw=0)
            ax.plot(d, [r.predicted_floor for r in cell], color="k", ls="--", lw=1, label="predicted")
            if cell[0].d_crit <= d[-1]:
                ax.axvline(cell[0].d_crit, color="0.5", ls=":", lw=1)
            ax.set_title(rf"$n$={n}, $\alpha$={a:g}")
            if i == len(ns) - 1:
                ax.set_xlabel(r"$d_S$")
            if j == 0:
                ax.set_ylabel("floor")
    axes[0, 0].legend(frameon=False)
    return fig


def scatter(out, rows, threshold=1e-4, log_space=False, naive_pred=None):
    return save(scatter_figure(rows, threshold, log_space, naive_pred), out)


def scatter_figure(rows, threshold=1e-4, log_space=False, naive_pred=None):
    """Predicted vs actual floors for rows above the threshold.

    ``naive_pred``, if given, is aligned with the rows above the threshold
    and drawn in a second panel.  On log axes, points with a non-positive
    coordinate are dropped.
    """
    kept = [r for r in rows if r.predicted_floor > threshold]
    pred = np.array([r.predicted_floor for r in kept])
    act = np.array([r.actual_floor_mean for r in kept])
    colors = [_color(r.alpha) for r in kept]
    naive = None if naive_pred is None else np.asarray(naive_pred, dtype=np.float64)
    if log_space:
        ok = (pred > 0) & (act > 0)
        if naive is not None:
            ok &= naive > 0
            naive = naive[ok]
        pred, act = pred[ok], act[ok]
        colors = [c for c, k in zip(colors, ok) if k]
    panels = [("refined", pred)]
    if naive is not None:
        panels.append(("naive", naive))
    fig, axes = _figure(ncols=len(panels), width=3.4, height=3.2)
    for ax, (title, p) in zip(axes[0], panels):
        ax.scatter(p, act, c=colors, s=10)
        both = np.concatenate([p, act])
        lo, hi = (both[both > 0].min() if log_space else 0.0), both.max()
        ax.plot([lo, hi], [lo, hi], color="0.5", lw=1, ls="--")
        if log_space:
            ax.set_xscale("log")
            ax.set_yscale("log")
        ax.set_xlabel("predicted floor")
        ax.set_ylabel("actual floor")
        ax.set_title(title)
    return fig


def collapse(out, points):
    return save(collapse_figure(points), out)


def collapse_figure(points):
    """Normalized floor vs ``d_s / d_crit`` for every config, marker at 1."""
    fig, axes = _figure(width=4.2, height=3.2)
    ax = axes[0, 0]
    configs: dict = {}
    for p in points:
        configs.setdefault((p.n, p.d_t, p.alpha), []).append(p)
    for (n, d_t, a), pts in sorted(configs.items()):
        pts = sorted(pts, key=lambda p: p.width_ratio)
        ax.plot([p.width_ratio for p in pts], [p.normalized_floor for p in pts],
                color=_color(a), lw=0.8, alpha=0.6, marker="o", ms=2)
    ax.axvline(1.0, color="k", ls="--", lw=1)
    ax.set_xscale("log")
    ax.set_xlabel(r"$d_S / d_S^*$")
    ax.set_ylabel(r"floor / floor($d_S$=1)")
    return fig


def pred_vs_obs(out, d_s, predicted, observed):
    """Predicted and observed floors, each normalized to the smallest width."""
    d_s = np.asarray(d_s, dtype=np.float64)
    order = np.argsort(d_s)
    d_s = d_s[order]
    pred = np.asarray(predicted, dtype=np.float64)[order]
    obs = np.asarray(observed, dtype=np.float64)[order]
    fig, axes = _figure(width=4.2, height=3.2)
    ax = axes[0, 0]
    ax.plot(d_s, pred / pred[0], color="0.4", ls="--", marker="o", ms=3, label="predicted")
    ax.plot(d_s, obs / obs[0], color="tab:red", marker="o", ms=3, label="observed")
    ax.set_xlabel(r"$d_S$")
    ax.set_ylabel("normalized floor")
    ax.legend(frameon=False)
    return save(fig, out)
