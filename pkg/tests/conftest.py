import numpy as np
import pytest
import torch

from mvfd.data import MultiViewDataset
from mvfd.train import TrainConfig

torch.set_num_threads(1)


def random_dataset(n=12, dims=(5, 4, 3), c=3, seed=0, missing=0.3) -> MultiViewDataset:
    rng = np.random.default_rng(seed)
    m = len(dims)
    w = (rng.random((n, m)) > missing).astype(float)
    w[w.sum(1) == 0, rng.integers(m)] = 1.0
    views = [rng.standard_normal((n, d)) * w[:, [v]] for v, d in enumerate(dims)]
    y = (rng.random((n, c)) > 0.5).astype(float)
    g = (rng.random((n, c)) > 0.3).astype(float)
    g[0] = 1.0
    return MultiViewDataset(views=views, labels=y * g, view_indicator=w, label_indicator=g)


def tiny_config(**kw) -> TrainConfig:
    base = dict(
        embed_dim=6,
        hidden=[8],
        epochs_stage1=3,
        epochs_stage2=3,
        batch_size=5,
        dtype="float64",
        seed=0,
    )
    base.update(kw)
    return TrainConfig(**base)


@pytest.fixture
def small_ds():
    return random_dataset()


@pytest.fixture
def verdict(request):
    """Record a one-line PASS/FAIL outcome that is echoed in the terminal summary."""

    def record(label: str, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'}  {label}: {detail}"
        request.config.stash.setdefault(_VERDICTS, []).append(line)
        print(line)
        return ok

    return record


_VERDICTS = pytest.StashKey[list]()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_VERDICTS, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
