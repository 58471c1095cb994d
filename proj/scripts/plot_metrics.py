#!/usr/bin/env python3
"""Render the CSV tables of an experiment directory as PNG figures.

usage: plot_metrics.py RUN_DIR [--out FIG_DIR]
"""
import argparse
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd


def plot_histogram(csv, out):
    df = pd.read_csv(csv)
    centers = 0.5 * (df["bin_lo"] + df["bin_hi"])
    width = (df["bin_hi"] - df["bin_lo"]).iloc[0]
    fig, ax = plt.subplots(figsize=(6, 4))
    for col in df.columns[2:]:
        ax.step(centers, df[col], where="mid", label=col)
    ax.set_xlabel("Delta Psi")
    ax.set_ylabel("% of patterns")
    ax.set_xlim(centers.iloc[0] - width / 2, centers.iloc[-1] + width / 2)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out, dpi=150)
    plt.close(fig)


def plot_mixes(csv, out):
    df = pd.read_csv(csv)
    fig, ax = plt.subplots(figsize=(6, 4))
    for i, (name, g) in enumerate(df.groupby("mix", sort=False)):
        ax.scatter([i] * len(g), g["r2"], color="C0", alpha=0.6)
        ax.hlines(g["r2"].median(), i - 0.25, i + 0.25, color="k")
    ax.set_xticks(range(df["mix"].nunique()))
    ax.set_xticklabels(df["mix"].unique(), rotation=20)
    ax.set_ylabel("test R2")
    fig.tight_layout()
    fig.savefig(out, dpi=150)
    plt.close(fig)


def plot_history(run_dir, out):
    files = sorted(Path(run_dir, "models").glob("*/*/history.csv"))
    if not files:
        return False
    fig, ax = plt.subplots(figsize=(6, 4))
    for f in files:
        df = pd.read_csv(f)
        ax.semilogy(df["epoch"], df["val_mse"], label=f"{f.parent.parent.name}/{f.parent.name}", lw=0.8)
    ax.set_xlabel("epoch")
    ax.set_ylabel("validation MSE (scaled)")
    ax.legend(fontsize=6, ncol=2)
    fig.tight_layout()
    fig.savefig(out, dpi=150)
    plt.close(fig)
    return True


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("run_dir", type=Path)
    ap.add_argument("--out", type=Path)
    args = ap.parse_args()
    out = args.out or args.run_dir / "figures"
    out.mkdir(parents=True, exist_ok=True)
    made = []
    if (args.run_dir / "delta_psi_histogram.csv").exists():
        plot_histogram(args.run_dir / "delta_psi_histogram.csv", out / "delta_psi_histogram.png")
        made.append("delta_psi_histogram.png")
    if (args.run_dir / "mix_summary.csv").exists():
        plot_mixes(args.run_dir / "mix_summary.csv", out / "mix_r2.png")
        made.append("mix_r2.png")
    if plot_history(args.run_dir, out / "val_curves.png"):
        made.append("val_curves.png")
    for m in made:
        print(out / m)


if __name__ == "__main__":
    main()
