"""Chart and sample-grid emission from persisted run artifacts."""

import csv
import json
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
from PIL import Image

from ..errors import FplabError
from ..io import read_rounds_jsonl
from ..seeding import sub_seed

TAG_GRID = 0x621D


def _save(fig, path):
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_rounds(rounds_path, out_path):
    records = read_rounds_jsonl(rounds_path)
    fig, ax = plt.subplots(figsize=(6, 4))
    if records:
        xs = [r["round"] for r in records]
        ax.plot(xs, [r["acc"] for r in records], label="ACC")
        ax.plot(xs, [r["asr"] for r in records], label="ASR")
        ax.legend()
    ax.set_xlabel("round")
    ax.set_ylabel("rate")
    ax.set_ylim(-0.02, 1.02)
    ax.set_title("accuracy / attack success per round")
    return _save(fig, out_path)


def plot_mis_scatter(mis_path, out_path):
    with open(mis_path) as fh:
        report = json.load(fh)
    fig, ax = plt.subplots(figsize=(5, 5))
    for role, color in (("benign", "tab:blue"), ("poisoned", "tab:orange")):
        pts = np.array([p["xy"] for p in report["points"] if p["role"] == role])
        if pts.size:
            ax.scatter(pts[:, 0], pts[:, 1], c=color, label=role, alpha=0.8)
    for key, marker in (("benign_centroid", "P"), ("poisoned_centroid", "X")):
        cx, cy = report[key]
        ax.scatter([cx], [cy], c="black", marker=marker, s=90)
    ax.legend()
    ax.set_title(f"projected local models (mis={report['mis']:.3f})")
    return _save(fig, out_path)


def plot_sweep(sweep_path, out_path):
    with open(sweep_path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    fig, ax = plt.subplots(figsize=(6, 4))
    xs = np.arange(len(rows))
    for field, label in (("acc", "ACC"), ("asr", "ASR")):
        means = [float(r[f"{field}_mean"]) if r[f"{field}_mean"] else np.nan for r in rows]
        stds = [float(r[f"{field}_std"]) if r[f"{field}_std"] else 0.0 for r in rows]
        ax.errorbar(xs, means, yerr=stds, marker="o", capsize=3, label=label)
    ax.set_xticks(xs)
    ax.set_xticklabels([r["value"] for r in rows])
    ax.set_xlabel(rows[0]["param"] if rows else "value")
    ax.set_ylabel("rate")
    ax.set_ylim(-0.02, 1.02)
    ax.legend()
    ax.set_title("final metrics across the sweep")
    return _save(fig, out_path)


def emit_plots(directory, out_dir=None):
    """Render every chart the directory's artifacts support; error if none."""
    out_dir = out_dir or os.path.join(directory, "plots")
    inputs = {
        "rounds.jsonl": ("rounds.png", plot_rounds),
        "mis.json": ("mis_scatter.png", plot_mis_scatter),
        "sweep.csv": ("sweep.png", plot_sweep),
    }
    available = [k for k in inputs if os.path.exists(os.path.join(directory, k))]
    if not available:
        raise FplabError(
            f"{directory} has no plottable artifacts; expected one of {sorted(inputs)}"
        )
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for name in available:
        out_name, fn = inputs[name]
        written.append(fn(os.path.join(directory, name), os.path.join(out_dir, out_name)))
    return written


def export_sample_grid(checkpoints, per_checkpoint, seed, pad=2):
    """Tile generated samples: one row per generator checkpoint.

    The same latent batch is reused across rows so a column tracks one latent
    vector through training. Returns a uint8 image array.
    """
    if not checkpoints:
        raise FplabError("need at least one generator checkpoint")
    rows = []
    for gen in checkpoints:
        imgs = gen.sample(per_checkpoint, sub_seed(seed, TAG_GRID))
        rows.append(np.clip((imgs + 1.0) * 127.5, 0, 255).astype(np.uint8))
    n_rows, cols = len(rows), per_checkpoint
    c, h, w = rows[0].shape[1:]
    grid = np.zeros(
        (n_rows * h + (n_rows + 1) * pad, cols * w + (cols + 1) * pad, c), dtype=np.uint8
    )
    for i, row in enumerate(rows):
        for j in range(cols):
            y0 = pad + i * (h + pad)
            x0 = pad + j * (w + pad)
            grid[y0 : y0 + h, x0 : x0 + w] = row[j].transpose(1, 2, 0)
    return grid


def save_grid_png(grid, path):
    arr = grid[:, :, 0] if grid.shape[2] == 1 else grid
    Image.fromarray(arr, mode="L" if grid.shape[2] == 1 else "RGB").save(path)
    return path
