#!/usr/bin/env python3
"""Plot a training log: error rates, per-layer soft sizes, total soft size."""

import argparse

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("log", help="log.csv written by `ccnn train`")
    ap.add_argument("--out", default="log.png")
    ap.add_argument("--title", default="")
    args = ap.parse_args()

    log = pd.read_csv(args.log)
    layers = [c for c in log.columns if c.startswith("layer_s_")]

    fig, axes = plt.subplots(3, 1, figsize=(7, 8), sharex=True)
    axes[0].plot(log.epoch, log.train_error, label="train")
    axes[0].plot(log.epoch, log.val_error, label="dev")
    axes[0].set_ylabel("error rate")
    axes[0].legend()

    for c in layers:
        axes[1].plot(log.epoch, log[c], label=c.replace("layer_s_", "layer "))
    if layers:
        axes[1].legend(fontsize="x-small", ncol=2)
    axes[1].set_ylabel("soft size per layer")

    if log.total_soft_size.notna().any():
        axes[2].plot(log.epoch, log.total_soft_size, color="k", label="soft")
    if log.hard_size.notna().any():
        axes[2].step(log.epoch, log.hard_size, where="post", color="tab:red", label="hard")
        axes[2].legend()
    axes[2].set_ylabel("total size")
    axes[2].set_xlabel("epoch")

    if args.title:
        fig.suptitle(args.title)
    fig.tight_layout()
    fig.savefig(args.out, dpi=120)


if __name__ == "__main__":
    main()
