"""Figure rendering for variance curves and low-photon density matrices.

Figures are written to files; nothing is shown interactively.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .fock import DensityOperator
from .homodyne import VariancePoint

_CLASS_TITLES = {
    "none": "unconditioned",
    "one": "single-click heralded",
    "both": "dual-click heralded",
}


def save_variance_figure(
    curves: dict[str, list[VariancePoint]],
    model_curves: dict[str, dict[str, np.ndarray]],
    path: str,
) -> str:
    """Errorbar panels of the measured sum/difference variances per class.

    ``model_curves[name]`` maps labels to (theta, minus, plus) column arrays
    drawn as solid lines over the points.
    """
    names = [n for n in ("none", "both", "one") if n in curves]
    fig, axes = plt.subplots(1, len(names), figsize=(5.5 * len(names), 4.2), squeeze=False)
    for ax, name in zip(axes[0], names):
        points = curves[name]
        for sign, marker, label in ((-1, "o", "difference"), (+1, "s", "sum")):
            sel = [p for p in points if p.sign == sign]
            ax.errorbar(
                [p.theta_sum for p in sel],
                [p.variance for p in sel],
                yerr=[p.stderr for p in sel],
                fmt=marker,
                ms=4,
                capsize=2,
                label=f"{label} quadrature",
            )
        for label, cols in model_curves.get(name, {}).items():
            theta, minus, plus = cols["theta"], cols["minus"], cols["plus"]
            line = ax.plot(theta, minus, lw=1.2, label=label)
            ax.plot(theta, plus, lw=1.2, color=line[0].get_color())
        ax.axhline(1.0, color="gray", ls=":", lw=1, label="vacuum level")
        ax.set_xlabel(r"$\theta_1 + \theta_2$ (rad)")
        ax.set_ylabel("normalized variance")
        ax.set_title(_CLASS_TITLES.get(name, name))
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_density_figure(
    states: dict[str, DensityOperator], path: str, n_show: int = 3
) -> str:
    """Heatmaps of |rho| restricted to photon numbers <= n_show per mode."""
    names = list(states)
    fig, axes = plt.subplots(1, len(names), figsize=(4.6 * len(names), 4.2), squeeze=False)
    for ax, name in zip(axes[0], names):
        rho = states[name]
        d = rho.cutoff.dim
        keep = min(n_show, rho.cutoff.n_max) + 1
        if rho.mode_count == 2:
            block = rho.matrix.reshape(d, d, d, d)[:keep, :keep, :keep, :keep]
            matrix = np.abs(block.reshape(keep * keep, keep * keep))
            labels = [f"{m},{n}" for m in range(keep) for n in range(keep)]
        else:
            matrix = np.abs(rho.matrix[:keep, :keep])
            labels = [str(m) for m in range(keep)]
        im = ax.imshow(matrix, origin="upper", cmap="viridis", vmin=0.0)
        ax.set_xticks(range(len(labels)))
        ax.set_yticks(range(len(labels)))
        ax.set_xticklabels(labels, rotation=90, fontsize=6)
        ax.set_yticklabels(labels, fontsize=6)
        ax.set_title(f"|rho| ({_CLASS_TITLES.get(name, name)})")
        fig.colorbar(im, ax=ax, fraction=0.046, pad=0.04)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def ensure_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path
