#!/usr/bin/env python3
"""Two-axis hyperparameter sweep on one synthetic split."""

import argparse
import json
from pathlib import Path

import torch

from mvfd.analysis import grid_sweep
from mvfd.synthetic import benchmark_config, benchmark_split


def parse_axis(text):
    name, values = text.split("=", 1)
    return name, [float(v) for v in values.split(",")]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--axis1", type=parse_axis, default=parse_axis("alpha=0.01,0.1,1"))
    ap.add_argument("--axis2", type=parse_axis, default=parse_axis("beta=0.01,0.1,1"))
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="runs/grid")
    args = ap.parse_args()
    torch.set_num_threads(1)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    train_ds, test_ds = benchmark_split(args.seed)
    cfg = benchmark_config(args.seed, track_similarity=False)
    result = grid_sweep(train_ds, test_ds, cfg, args.axis1, args.axis2, workers=args.workers)
    result.write_csv(out / "grid.csv")
    (out / "grid.json").write_text(json.dumps(result.to_json(), indent=2))
    print((out / "grid.csv").read_text())


if __name__ == "__main__":
    main()
