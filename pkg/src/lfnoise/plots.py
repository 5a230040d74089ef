"""Matplotlib figure rendering for the CLI report paths.

Figures are written as PNG with pinned metadata and dpi so repeated runs
produce byte-identical files.
"""

from __future__ import annotations

from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .mc import McEstimate
from .solve import LCurvePoint
from .verify import TheoremReport

_SAVE_KWARGS = {"dpi": 150, "metadata": {"Software": "lfnoise"}}


def save_curve_figure(points: Sequence[LCurvePoint], var_x: float, path) -> None:
    """Value curve against the budget, with the zero-noise level for scale."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    eps = [p.epsilon for p in points]
    vals = [p.L_hat for p in points]
    ax.plot(eps, vals, "o-", color="tab:blue", label="best value found")
    ax.axhline(var_x, color="tab:gray", linestyle="--", linewidth=1.0, label="var of signal")
    ax.set_xlabel("noise budget")
    ax.set_ylabel("variance of the posterior mean")
    ax.legend(loc="best")
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)


def save_verify_figure(reports: Sequence[TheoremReport], path) -> None:
    """Worst margin per check; bars below zero mark failures."""
    fig, ax = plt.subplots(figsize=(7.0, 4.0))
    names = [r.theorem_id for r in reports]
    margins = [r.worst_margin for r in reports]
    colors = ["tab:green" if r.passed else "tab:red" for r in reports]
    ax.bar(range(len(names)), margins, color=colors)
    ax.axhline(0.0, color="black", linewidth=1.0)
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=30, ha="right")
    ax.set_ylabel("worst margin")
    ax.set_yscale("symlog", linthresh=1e-10)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)


def save_mc_figure(estimates: Sequence[McEstimate], path, exact: float | None = None) -> None:
    """Binned estimates with bootstrap error bars over the bin schedule."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    bins = [e.n_bins for e in estimates]
    vals = [e.J_hat for e in estimates]
    errs = [3.0 * e.std_error for e in estimates]
    ax.errorbar(bins, vals, yerr=errs, fmt="o-", color="tab:blue", capsize=3, label="binned estimate")
    if exact is not None:
        ax.axhline(exact, color="tab:gray", linestyle="--", linewidth=1.0, label="engine value")
    ax.set_xscale("log", base=2)
    ax.set_xlabel("bins")
    ax.set_ylabel("estimated objective")
    ax.legend(loc="best")
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)
