"""Figures written next to the delimited detection reports."""

from __future__ import annotations

import math
import re
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .bivariate import BivariateFinding, regularized_covariance  # noqa: E402
from .ecod import Kind, UnivariateFinding  # noqa: E402
from .pair_select import PairModel  # noqa: E402

LABEL_COLORS = {
    "Significant": "tab:orange",
    "Disproportionate": "tab:purple",
    "SuezType": "tab:blue",
    "NonAnomalous": "tab:green",
}

# PNG metadata carries a timestamp by default; drop it so reruns are identical
_SAVE_META = {"Software": None}


def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "_", text).strip("_")[:120]


def _savefig(fig, path: Path) -> Path:
    fig.savefig(path, dpi=110, bbox_inches="tight", facecolor="white", metadata=_SAVE_META)
    plt.close(fig)
    return path


def density_ellipse(model: PairModel, density: float, n: int = 200) -> np.ndarray | None:
    """Points on the level set ``N(mu, V) = density``; ``None`` if above the peak."""
    V = regularized_covariance(model.V)
    peak = 1.0 / (2 * math.pi * math.sqrt(np.linalg.det(V)))
    if not 0 < density < peak:
        return None
    r = math.sqrt(2.0 * math.log(peak / density))
    t = np.linspace(0, 2 * math.pi, n)
    L = np.linalg.cholesky(V)
    return np.asarray(model.mu) + r * np.column_stack([np.cos(t), np.sin(t)]) @ L.T


def plot_pair_regions(model: PairModel, finding: BivariateFinding, path: str | Path, level: float = 0.01) -> Path:
    """Fitted line with its residual band, the density cutoff ellipse, and the observation."""
    fig, ax = plt.subplots(figsize=(6, 4.5))
    ellipse = None
    if not model.degenerate_mvs and level in model.mvs_density_cutoffs:
        ellipse = density_ellipse(model, model.mvs_density_cutoffs[level])
    xs = [finding.x_value, model.mu[0]]
    if ellipse is not None:
        xs += [ellipse[:, 0].min(), ellipse[:, 0].max()]
        ax.plot(ellipse[:, 0], ellipse[:, 1], color="tab:red", lw=1.5, label=f"density cutoff ({level:g})")
    lo, hi = min(xs), max(xs)
    pad = 0.1 * (hi - lo or 1.0)
    grid = np.linspace(lo - pad, hi + pad, 50)
    line = model.a * grid + model.b + model.e_bar
    ax.plot(grid, line, color="tab:green", lw=1.5, label="regression line")
    ax.plot(grid, line + model.linreg_band, color="tab:green", ls="--", lw=1)
    ax.plot(grid, line - model.linreg_band, color="tab:green", ls="--", lw=1, label="residual band")
    ax.scatter([finding.x_value], [finding.y_value], s=60, zorder=5,
               color=LABEL_COLORS[finding.label.value], edgecolor="black", label=finding.label.value)
    ax.set_xlabel(str(model.x_var), fontsize=8)
    ax.set_ylabel(str(model.y_var), fontsize=8)
    ax.set_title(f"R2={model.r2:.3f}  n={model.n_joint}", fontsize=9)
    ax.legend(fontsize=7, loc="best")
    return _savefig(fig, Path(path))


def plot_univariate(findings: list[UnivariateFinding], path: str | Path, top: int = 20) -> Path:
    """Horizontal bars of the highest-ranked univariate scores."""
    shown = findings[:top]
    fig, ax = plt.subplots(figsize=(7, 0.3 * max(len(shown), 3) + 1))
    if shown:
        names = [str(f.variable) for f in shown][::-1]
        scores = [f.score for f in shown][::-1]
        colors = ["tab:red" if f.kind is Kind.AA else "tab:gray" for f in shown][::-1]
        ax.barh(names, scores, color=colors)
        ax.set_xscale("symlog")
        ax.tick_params(axis="y", labelsize=7)
    else:
        ax.text(0.5, 0.5, "no findings", ha="center", va="center", transform=ax.transAxes)
    ax.set_xlabel("score (AA red, A gray)")
    return _savefig(fig, Path(path))


def render_report_figures(
    out_dir: str | Path,
    uni: list[UnivariateFinding],
    bi: list[BivariateFinding],
    models: dict[tuple, PairModel],
    level: float = 0.01,
    max_pairs: int = 12,
) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [plot_univariate(uni, out / "univariate_top.png")]
    for rank, f in enumerate(bi[:max_pairs], start=1):
        m = models[(f.x_var, f.y_var)]
        name = f"pair_{rank:02d}_{f.label.value}_{_slug(str(f.x_var))}__{_slug(str(f.y_var))}.png"
        written.append(plot_pair_regions(m, f, out / name, level))
    return written
