"""Synthetic multi-view multi-label data from a shared latent factor."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .data import CorruptionSpec, MultiViewDataset, simulate_incompleteness
from .train import TrainConfig

# narrower than the defaults so a 5-seed benchmark fits in a few CPU minutes
BENCHMARK_ARCH = {"embed_dim": 128, "hidden": [256]}


def make_synthetic(
    n: int = 2000,
    n_labels: int = 5,
    latent_dim: int = 8,
    dims: Sequence[int] = (24, 32),
    private_dim: int = 4,
    private_scale: float = 0.5,
    noise: float = 0.3,
    seed: int = 0,
) -> MultiViewDataset:
    """Views are linear maps of a shared latent plus view-private factors and noise.

    Label j is ``1[z . a_j > t_j]`` with ``t_j`` drawn so positive rates vary
    between roughly 25% and 50%.
    """
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, latent_dim))
    views = []
    for d in dims:
        shared_map = rng.standard_normal((latent_dim, d)) / np.sqrt(latent_dim)
        private = rng.standard_normal((n, private_dim))
        private_map = rng.standard_normal((private_dim, d)) / np.sqrt(private_dim)
        x = z @ shared_map + private_scale * private @ private_map + noise * rng.standard_normal((n, d))
        views.append((x - x.mean(0)) / x.std(0))
    directions = rng.standard_normal((latent_dim, n_labels))
    directions /= np.linalg.norm(directions, axis=0)
    thresholds = rng.uniform(0.0, 0.7, size=n_labels)
    labels = (z @ directions > thresholds).astype(np.float64)
    return MultiViewDataset(
        views=views,
        labels=labels,
        view_indicator=np.ones((n, len(dims))),
        label_indicator=np.ones_like(labels),
        view_names=[f"view{v}" for v in range(len(dims))],
        provenance=f"synthetic(n={n},c={n_labels},latent={latent_dim},seed={seed})",
    )


def benchmark_split(seed: int = 0) -> tuple[MultiViewDataset, MultiViewDataset]:
    """Synthetic data with half the views and labels dropped, split 70/30. ``seed`` drives both steps."""
    full = make_synthetic(seed=seed)
    spec = CorruptionSpec(view_missing_rate=0.5, label_missing_rate=0.5, train_fraction=0.7, seed=seed)
    return simulate_incompleteness(full, spec)


def benchmark_config(seed: int = 0, **overrides) -> TrainConfig:
    return TrainConfig(**{**BENCHMARK_ARCH, "seed": seed, **overrides})
