#!/usr/bin/env python3
"""
Plot CSV artifacts written by `python -m bragg_qft`.

    python tools/plot_results.py results/paper_calibrated [--format png]

Draws whichever of phasematch.csv, translate.csv, acceptance.csv, g2_s1.csv,
g2_s2.csv and sweep.csv exist in the directory, saving <name>.<format> next
to each.
"""

import argparse
import sys
from functools import partial
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

FIG_SIZE = (6.4, 4.0)
DPI = 150


def read(path: Path) -> pd.DataFrame:
    return pd.read_csv(path, comment="#")


def plot_phasematch(df, ax):
    ax.plot(df["pump_nm"], df["signal_nm"], "o-", ms=3, label="signal")
    ax.plot(df["pump_nm"], df["idler_nm"], "s-", ms=3, label="idler")
    ax.set_xlabel("Pump wavelength (nm)")
    ax.set_ylabel("Sideband wavelength (nm)")


def plot_translate(df, ax):
    x = df.columns[0]
    ax.plot(df[x], df["efficiency"], label="|ν|²")
    ax.plot(df[x], 1 - df["efficiency"], "--", label="|μ|²")
    ax.set_xlabel("z (m)" if x == "z_m" else x)
    ax.set_ylabel("Probability")


def plot_acceptance(df, ax):
    for column in ("input", "translated", "remainder"):
        part = df[df[column] > 0]
        ax.plot(part["wavelength_nm"], part[column], label=column)
    ax.set_xlabel("Wavelength (nm)")
    ax.set_ylabel("Spectral density (a.u.)")


def plot_g2(df, ax, channel):
    runs = df[df["run_id"] != "all"]
    ax.plot(runs["run_id"].astype(int), runs["g2"], "o", ms=4, label=f"{channel} per run")
    merged = df[df["run_id"] == "all"]["g2"]
    if not merged.empty:
        ax.axhline(float(merged.iloc[0]), lw=1, ls="--", label=f"{channel} merged")
    ax.set_xlabel("Run")
    ax.set_ylabel("g²(0)")


def plot_sweep(df, ax):
    param = df.columns[0]
    for channel, part in df.groupby("channel"):
        ax.errorbar(part[param], part["g2"], yerr=part["g2_std_error"], fmt="o", ms=4, label=f"{channel}")
        ax.plot(part[param], part["expected_g2"], "-", lw=1)
    ax.set_xlabel(param)
    ax.set_ylabel("g²(0)")


PLOTTERS = {
    "phasematch": plot_phasematch,
    "translate": plot_translate,
    "acceptance": plot_acceptance,
    "g2_s1": partial(plot_g2, channel="s1"),
    "g2_s2": partial(plot_g2, channel="s2"),
    "sweep": plot_sweep,
}


def main():
    parser = argparse.ArgumentParser(description="Plot bragg_qft CSV artifacts")
    parser.add_argument("directory", type=Path)
    parser.add_argument("--format", default="png")
    args = parser.parse_args()

    written = 0
    for name, plotter in PLOTTERS.items():
        path = args.directory / f"{name}.csv"
        if not path.is_file():
            continue
        fig, ax = plt.subplots(figsize=FIG_SIZE)
        plotter(read(path), ax)
        ax.legend(frameon=False)
        fig.tight_layout()
        out = path.with_suffix(f".{args.format}")
        fig.savefig(out, dpi=DPI)
        plt.close(fig)
        print(f"✅ {out}")
        written += 1
    if not written:
        print(f"❌ No CSV artifacts in {args.directory}")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
