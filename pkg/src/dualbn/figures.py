"""Matplotlib figure rendering for the report paths.

Each report CSV gets a PNG sibling. Rendering is best-effort cosmetic
output; all quantitative artifacts stay in the delimited files.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def loss_curve_png(path, step_logs):
    fig, ax = plt.subplots(figsize=(6, 4))
    steps = [s.step for s in step_logs]
    ax.plot(steps, [s.loss_total for s in step_logs], label="total", lw=1.2)
    if any(not np.isnan(s.loss_aux) for s in step_logs):
        ax.plot(steps, [s.loss_main for s in step_logs], label="main", lw=0.8, alpha=0.7)
        ax.plot(steps, [s.loss_aux for s in step_logs], label="auxiliary", lw=0.8, alpha=0.7)
    ax2 = ax.twinx()
    ax2.plot(steps, [s.lr for s in step_logs], color="gray", ls="--", lw=0.8)
    ax2.set_ylabel("lr", color="gray")
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.legend(loc="upper right")
    _save(fig, path)


def lambda_curve_png(path, rows):
    fig, ax = plt.subplots(figsize=(5, 4))
    lams = [r[0] for r in rows]
    ax.plot(lams, [100 * r[1] for r in rows], "o-", label="accuracy (%)")
    if rows and len(rows[0]) > 2:
        ax2 = ax.twinx()
        ax2.plot(lams, [100 * r[2] for r in rows], "s--", color="firebrick",
                 label="mean uCE (%)")
        ax2.set_ylabel("mean uCE (%)", color="firebrick")
    ax.set_xlabel("interpolation weight")
    ax.set_ylabel("accuracy (%)")
    _save(fig, path)


def fourier_heatmap_png(path, fmap):
    fig, ax = plt.subplots(figsize=(5, 4.4))
    im = ax.imshow(fmap.centered, cmap="viridis", vmin=0.0, vmax=1.0)
    ax.set_title(f"error rate, grating norm {fmap.r:g}")
    ax.set_xlabel("horizontal frequency")
    ax.set_ylabel("vertical frequency")
    fig.colorbar(im, ax=ax, shrink=0.85)
    _save(fig, path)


def corruption_heatmap_png(path, report):
    fig, ax = plt.subplots(figsize=(6, 4))
    im = ax.imshow(report.errors, cmap="magma", aspect="auto", vmin=0.0, vmax=1.0)
    ax.set_yticks(range(len(report.names)), report.names)
    ax.set_xticks(range(5), [str(s) for s in range(1, 6)])
    ax.set_xlabel("severity")
    fig.colorbar(im, ax=ax, label="error rate")
    _save(fig, path)


def lowpass_curve_png(path, curve):
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.plot([b for b, _ in curve], [100 * a for _, a in curve], "o-")
    ax.set_xlabel("low-pass bandwidth")
    ax.set_ylabel("accuracy (%)")
    _save(fig, path)


def affinity_bar_png(path, rows):
    fig, ax = plt.subplots(figsize=(5, 4))
    names = [n for n, _ in rows]
    vals = [v for _, v in rows]
    ax.bar(names, vals, color="steelblue")
    ax.axhline(0.0, color="black", lw=0.8)
    ax.set_ylabel("affinity (accuracy delta, pp)")
    ax.tick_params(axis="x", rotation=20)
    _save(fig, path)
