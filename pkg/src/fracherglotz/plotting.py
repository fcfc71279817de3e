"""Render report figures to files next to the delimited output.

CSV/JSON stay the machine-readable contract; these helpers draw the same
data with matplotlib for quick visual inspection (numeric-vs-exact curves,
residual profiles, conserved-quantity flatness).
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "save_comparison_figure",
    "save_residual_figure",
    "save_conserved_figure",
]

_FIGSIZE = (6.0, 3.7)


def save_comparison_figure(table, path) -> None:
    """Numeric solution as dots against the exact curve, plus the error."""
    fig, (ax, ax_err) = plt.subplots(
        1, 2, figsize=(2 * _FIGSIZE[0] * 0.55, _FIGSIZE[1])
    )
    t = table.grid.nodes
    step = max(1, t.size // 60)
    ax.plot(t, table.x_exact, "-", lw=1.2, label="exact")
    ax.plot(t[::step], table.x_numeric[::step], "o", ms=3.0, label="numeric")
    ax.set_xlabel("t")
    ax.set_ylabel("x(t)")
    ax.legend(frameon=False)
    ax_err.semilogy(t, np.maximum(table.abs_error, 1e-18), lw=1.0)
    ax_err.set_xlabel("t")
    ax_err.set_ylabel("|error|")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_residual_figure(report, grid, path) -> None:
    """Absolute residual samples per component on a log scale."""
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    t = grid.nodes
    lo = report.trim
    hi = grid.n_points - report.trim
    for j, samples in enumerate(report.samples):
        ax.semilogy(
            t[lo:hi],
            np.maximum(np.abs(samples[lo:hi]), 1e-18),
            lw=1.0,
            label=f"component {j + 1}",
        )
    ax.set_xlabel("t")
    ax.set_ylabel("|residual|")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_conserved_figure(quantity, path) -> None:
    """Conserved-quantity samples with their trimmed mean."""
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    grid = quantity.values.grid
    t = grid.nodes
    hi = grid.n_points - quantity.trim
    ax.plot(t[:hi], quantity.values.values[:hi], lw=1.0, label="C(t)")
    ax.axhline(quantity.mean, color="k", ls="--", lw=0.8, label="mean")
    ax.set_xlabel("t")
    ax.set_ylabel("C(t)")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
