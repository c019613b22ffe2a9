"""Figure rendering for run reports.

Every report-producing command can drop a PNG next to its CSV: accuracy
curves for training runs, line-with-band plots for one-axis sweeps,
heatmaps for two-axis sweeps, histograms for the correlation survey, and
per-generation box plots for the genetic search.  CSVs stay the canonical
output; figures are a convenience layer.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def save_run_curve(record, path, title=""):
    epochs = [s.epoch for s in record.epochs]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(epochs, [s.train_acc for s in record.epochs], "o-", label="train")
    ax.plot(epochs, [s.test_acc for s in record.epochs], "s-", label="test")
    ax.set_xlabel("epoch")
    ax.set_ylabel("accuracy")
    ax.set_ylim(0, 1)
    ax.grid(alpha=0.3)
    ax.legend()
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_sweep_line(points, axis_label, path, title="", log_x=False):
    """One-axis sweep: mean accuracy line with a min/max band."""
    xs = [p.values[0] for p in points if p.ok]
    stats = np.array([p.stats() for p in points if p.ok])
    fig, ax = plt.subplots(figsize=(6, 4))
    if len(xs):
        ax.plot(xs, stats[:, 0], "o-", label="mean")
        ax.fill_between(xs, stats[:, 1], stats[:, 2], alpha=0.25, label="min-max")
    ax.set_xlabel(axis_label)
    ax.set_ylabel("test accuracy")
    if log_x:
        ax.set_xscale("log")
    ax.grid(alpha=0.3)
    ax.legend()
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_heatmap(points, y_values, x_values, labels, path, title=""):
    """Two-axis sweep: mean accuracy per grid cell."""
    grid = np.full((len(y_values), len(x_values)), np.nan)
    lookup = {p.values: p.stats()[0] for p in points}
    for i, y in enumerate(y_values):
        for j, x in enumerate(x_values):
            grid[i, j] = lookup.get((y, x), np.nan)
    fig, ax = plt.subplots(figsize=(6, 5))
    im = ax.imshow(grid, origin="lower", aspect="auto", cmap="viridis")
    ax.set_xticks(range(len(x_values)), [f"{v:g}" for v in x_values], rotation=45)
    ax.set_yticks(range(len(y_values)), [f"{v:g}" for v in y_values])
    ax.set_xlabel(labels[1])
    ax.set_ylabel(labels[0])
    fig.colorbar(im, ax=ax, label="mean test accuracy")
    if np.isfinite(grid).any():
        best = np.unravel_index(np.nanargmax(grid), grid.shape)
        ax.add_patch(
            plt.Rectangle(
                (best[1] - 0.5, best[0] - 0.5), 1, 1, fill=False, edgecolor="red", lw=2
            )
        )
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_eta_hist(etas, path, bins=40, title=""):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist(etas, bins=bins, density=True, alpha=0.8)
    ax.set_xlabel("correlation with surrogate derivative")
    ax.set_ylabel("probability density")
    ax.grid(alpha=0.3)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_ga_fitness(record, path, title=""):
    data = [g.fitness for g in record.generations]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.boxplot(data, positions=[g.generation for g in record.generations], widths=0.6)
    ax.plot(
        [g.generation for g in record.generations],
        [g.best_fitness for g in record.generations],
        "b.-",
        label="best",
    )
    ax.set_xlabel("generation")
    ax.set_ylabel("fitness (test accuracy)")
    ax.grid(alpha=0.3)
    ax.legend()
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_eta_bins(results, path, references=(), title=""):
    """Box plot of accuracy per correlation bin, one series per mechanism."""
    mechs = sorted({r.mechanism for r in results})
    fig, ax = plt.subplots(figsize=(7, 4))
    width = 0.8 / max(len(mechs), 1)
    for mi, mech in enumerate(mechs):
        rows = [r for r in results if r.mechanism == mech and r.accs]
        pos = [0.5 * (r.bin_lo + r.bin_hi) + (mi - (len(mechs) - 1) / 2) * width * 0.2 for r in rows]
        ax.boxplot(
            [r.accs for r in rows],
            positions=pos,
            widths=width * 0.18,
            manage_ticks=False,
            patch_artist=True,
            boxprops={"facecolor": f"C{mi}", "alpha": 0.6},
            medianprops={"color": "black"},
        )
        ax.plot([], [], color=f"C{mi}", label=mech)
    for label, value in references:
        ax.axhline(value, ls="--", lw=1, alpha=0.7)
        ax.text(ax.get_xlim()[1], value, f" {label}", va="center", fontsize=8)
    ax.set_xlabel("correlation with surrogate derivative")
    ax.set_ylabel("test accuracy")
    ax.grid(alpha=0.3)
    ax.legend()
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_width_scan(rows, path, title=""):
    """Accuracy and correlation as functions of the width order of magnitude."""
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(6, 6), sharex=True)
    expos = [r["exponent"] for r in rows]
    means = [np.mean(r["accs"]) if r["accs"] else np.nan for r in rows]
    los = [np.min(r["accs"]) if r["accs"] else np.nan for r in rows]
    his = [np.max(r["accs"]) if r["accs"] else np.nan for r in rows]
    ax1.plot(expos, means, "o-")
    ax1.fill_between(expos, los, his, alpha=0.25)
    ax1.set_ylabel("test accuracy")
    ax1.grid(alpha=0.3)
    ax2.plot(expos, [r["eta"] for r in rows], "s-", color="C1")
    ax2.set_ylabel("correlation with f'")
    ax2.set_xlabel("order of magnitude (10^x)")
    ax2.grid(alpha=0.3)
    if title:
        ax1.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
