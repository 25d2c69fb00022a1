#!/usr/bin/env python3
"""Similarity heat maps for a few test samples, before and after stage 2."""

import argparse
from pathlib import Path

import numpy as np
import torch

from mvfd.analysis import compute_heatmap, write_heatmap_csv, write_heatmap_pgm
from mvfd.model import save_checkpoint
from mvfd.synthetic import benchmark_config, benchmark_split
from mvfd.train import train_stage1, train_stage2


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--samples", default="0,1,2")
    ap.add_argument("--out", default="runs/heatmaps")
    args = ap.parse_args()
    torch.set_num_threads(1)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    samples = [int(s) for s in args.samples.split(",")]

    train_ds, test_ds = benchmark_split(args.seed)
    cfg = benchmark_config(args.seed)
    net, _ = train_stage1(train_ds, cfg)

    def dump(tag):
        for i in samples:
            hm = compute_heatmap(net, test_ds, i)
            write_heatmap_csv(hm, out / f"{tag}_sample{i}.csv")
            write_heatmap_pgm(hm, out / f"{tag}_sample{i}.pgm")
            off = hm.matrix[: test_ds.m, test_ds.m :]
            print(f"{tag} sample {i}: mean C-S cosine {np.nanmean(off):+.3f}")

    dump("before_stage2")
    net, _ = train_stage2(train_ds, net, cfg)
    save_checkpoint(net, out / "stage2.ckpt", stage="stage2", seed=args.seed)
    dump("after_stage2")


if __name__ == "__main__":
    main()
