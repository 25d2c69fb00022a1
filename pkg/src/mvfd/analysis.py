"""Similarity heat maps, hyperparameter grids and the ablation table."""

from __future__ import annotations

import copy
import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch

from .data import MultiViewDataset
from .errors import ValidationError
from .metrics import MetricsReport, evaluate
from .model import MVFDNet
from .train import TensorData, TrainConfig, predict, train


@dataclass
class HeatMap:
    sample_index: int
    block_labels: list[str]
    matrix: np.ndarray  # 2m x 2m, NaN in rows/cols of absent views
    available: np.ndarray  # bool, length 2m
    features: np.ndarray  # raw O_i rows (unnormalised), for channel-level plots


def compute_heatmap(net: MVFDNet, ds: MultiViewDataset, sample_index: int) -> HeatMap:
    """Cosine similarities between a sample's per-view consistent and specific embeddings."""
    if not 0 <= sample_index < ds.n:
        raise IndexError(f"sample index {sample_index} outside [0, {ds.n})")
    dtype = next(net.parameters()).dtype
    data = TensorData(ds.subset([sample_index]), dtype)
    with torch.no_grad():
        c = net.encode_consistent(data.views)
        s = net.encode_specific(data.views)
    rows = torch.cat([*c, *s], dim=0).double().numpy()
    m = ds.m
    present = ds.view_indicator[sample_index] > 0
    available = np.concatenate([present, present])
    labels = [f"C{v + 1}" for v in range(m)] + [f"S{v + 1}" for v in range(m)]
    return HeatMap(sample_index, labels, similarity_matrix(rows, available), available, rows)


def similarity_matrix(rows: np.ndarray, available: np.ndarray) -> np.ndarray:
    norms = np.maximum(np.linalg.norm(rows, axis=1, keepdims=True), 1e-12)
    unit = rows / norms
    h = unit @ unit.T
    h = np.clip((h + h.T) / 2.0, -1.0, 1.0)
    np.fill_diagonal(h, 1.0)
    h[~available, :] = np.nan
    h[:, ~available] = np.nan
    return h


def write_heatmap_csv(hm: HeatMap, path: str | Path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["", *hm.block_labels])
        for label, row in zip(hm.block_labels, hm.matrix):
            w.writerow([label, *("" if np.isnan(x) else repr(float(x)) for x in row)])


def write_heatmap_pgm(hm: HeatMap, path: str | Path, cell: int = 32) -> None:
    """8-bit binary PGM; similarity -1..1 maps to 0..255, absent cells are 0."""
    h = np.nan_to_num(hm.matrix, nan=-1.0)
    img = np.round((h + 1.0) * 127.5).astype(np.uint8)
    img = np.kron(img, np.ones((cell, cell), dtype=np.uint8))
    with open(path, "wb") as f:
        f.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii"))
        f.write(img.tobytes())


# ----------------------------------------------------------------- grid sweep

AXES = {
    "alpha": "weights.alpha",
    "beta": "weights.beta",
    "gamma": "weights.gamma",
    "lambda": "weights.lam",
    "lam": "weights.lam",
    "tau": "weights.tau",
    "delta": "mask_ratio",
    "lr": "lr",
    "α": "weights.alpha",
    "β": "weights.beta",
    "γ": "weights.gamma",
    "λ": "weights.lam",
    "τ": "weights.tau",
    "δ": "mask_ratio",
}


def with_value(config: TrainConfig, axis: str, value: float) -> TrainConfig:
    if axis not in AXES:
        raise ValidationError(f"unknown sweep axis '{axis}', choose from {sorted(AXES)}")
    cfg = copy.deepcopy(config)
    target = cfg
    *path, attr = AXES[axis].split(".")
    for p in path:
        target = getattr(target, p)
    setattr(target, attr, float(value))
    return cfg


Runner = Callable[[MultiViewDataset, MultiViewDataset, TrainConfig], MetricsReport]


def run_once(train_ds: MultiViewDataset, test_ds: MultiViewDataset, config: TrainConfig) -> MetricsReport:
    net, _ = train(train_ds, config)
    return evaluate(predict(net, test_ds), test_ds.labels)


def _run_jobs(jobs: list[tuple], runner: Runner, workers: int) -> list[MetricsReport]:
    if workers <= 1 or runner is not run_once:
        return [runner(*job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_once, *zip(*jobs)))


@dataclass
class GridResult:
    axis1: tuple[str, list[float]]
    axis2: tuple[str, list[float]]
    reports: list[list[MetricsReport]]

    def table(self, metric: str = "AP") -> np.ndarray:
        return np.array([[getattr(r, metric) for r in row] for row in self.reports])

    def to_json(self) -> dict:
        return {
            "axis1": {"name": self.axis1[0], "values": self.axis1[1]},
            "axis2": {"name": self.axis2[0], "values": self.axis2[1]},
            "cells": [
                {self.axis1[0]: a, self.axis2[0]: b, **self.reports[i][j].as_dict()}
                for i, a in enumerate(self.axis1[1])
                for j, b in enumerate(self.axis2[1])
            ],
        }

    def write_csv(self, path: str | Path, metric: str = "AP") -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow([f"{self.axis1[0]}\\{self.axis2[0]}", *self.axis2[1]])
            for a, row in zip(self.axis1[1], self.table(metric)):
                w.writerow([a, *row])


def grid_sweep(
    train_ds: MultiViewDataset,
    test_ds: MultiViewDataset,
    base_config: TrainConfig,
    axis1: tuple[str, Sequence[float]],
    axis2: tuple[str, Sequence[float]],
    runner: Runner = run_once,
    workers: int = 1,
) -> GridResult:
    """Full-factorial train+evaluate over two hyperparameters; every cell uses the base seed."""
    (name1, vals1), (name2, vals2) = axis1, axis2
    vals1, vals2 = [float(v) for v in vals1], [float(v) for v in vals2]
    if not vals1 or not vals2:
        raise ValidationError("sweep axes must be non-empty")
    for name in (name1, name2):
        if name not in AXES:
            raise ValidationError(f"unknown sweep axis '{name}', choose from {sorted(AXES)}")
    jobs = [
        (train_ds, test_ds, with_value(with_value(base_config, name1, a), name2, b))
        for a in vals1
        for b in vals2
    ]
    flat = _run_jobs(jobs, runner, workers)
    reports = [flat[i * len(vals2) : (i + 1) * len(vals2)] for i in range(len(vals1))]
    return GridResult((name1, vals1), (name2, vals2), reports)


# ------------------------------------------------------------------- ablation

ABLATION_ROWS: list[tuple[str, dict]] = [
    ("backbone", dict(use_cp=False, use_sc=False, use_rec=False, use_gd=False)),
    ("+cp", dict(use_cp=True, use_sc=False, use_rec=False, use_gd=False)),
    ("+sc", dict(use_cp=False, use_sc=True, use_rec=False, use_gd=False)),
    ("+rec", dict(use_cp=False, use_sc=False, use_rec=True, use_gd=False)),
    ("+gd", dict(use_cp=False, use_sc=False, use_rec=False, use_gd=True)),
    ("+cp+sc", dict(use_cp=True, use_sc=True, use_rec=False, use_gd=False)),
    ("+rec+gd", dict(use_cp=False, use_sc=False, use_rec=True, use_gd=True)),
    ("full", dict(use_cp=True, use_sc=True, use_rec=True, use_gd=True)),
    ("one stage", dict(use_cp=True, use_sc=True, use_rec=True, use_gd=True, one_stage=True)),
]


@dataclass
class AblationRow:
    name: str
    flags: dict
    reports: list[MetricsReport] = field(default_factory=list)

    @property
    def ap(self) -> float:
        return float(np.mean([r.AP for r in self.reports]))

    @property
    def auc(self) -> float:
        return float(np.mean([r.AUC for r in self.reports]))


def ablation_config(base_config: TrainConfig, flags: dict, seed: int) -> TrainConfig:
    cfg = copy.deepcopy(base_config)
    cfg.one_stage = False
    for k, v in flags.items():
        setattr(cfg, k, v)
    cfg.seed = seed
    return cfg


def ablation_suite(
    train_ds: MultiViewDataset,
    test_ds: MultiViewDataset,
    base_config: TrainConfig,
    seeds: Sequence[int] = (0,),
    runner: Runner = run_once,
    workers: int = 1,
) -> list[AblationRow]:
    """Loss-term ablations plus the one-stage variant, each averaged over ``seeds``."""
    jobs, owners = [], []
    for name, flags in ABLATION_ROWS:
        for s in seeds:
            jobs.append((train_ds, test_ds, ablation_config(base_config, flags, s)))
            owners.append(name)
    rows = {name: AblationRow(name, dict(flags)) for name, flags in ABLATION_ROWS}
    for owner, report in zip(owners, _run_jobs(jobs, runner, workers)):
        rows[owner].reports.append(report)
    return [rows[name] for name, _ in ABLATION_ROWS]


def ablation_to_json(rows: list[AblationRow]) -> list[dict]:
    return [
        {
            "name": r.name,
            **{k: bool(r.flags.get(k, False)) for k in ("use_cp", "use_sc", "use_rec", "use_gd", "one_stage")},
            "AP": r.ap,
            "AUC": r.auc,
            "runs": [rep.as_dict() for rep in r.reports],
        }
        for r in rows
    ]


def write_ablation_csv(rows: list[AblationRow], path: str | Path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["row", "cp", "sc", "rec", "gd", "one_stage", "AP", "AUC", "seeds"])
        for r in rows:
            fl = r.flags
            w.writerow(
                [
                    r.name,
                    *(int(bool(fl.get(k, False))) for k in ("use_cp", "use_sc", "use_rec", "use_gd", "one_stage")),
                    r.ap,
                    r.auc,
                    len(r.reports),
                ]
            )
