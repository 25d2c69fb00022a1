"""Dataset container, on-disk format, incompleteness simulation and feature masking."""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ValidationError

MANIFEST = "manifest.json"
_DTYPE = "<f8"


@dataclass
class MultiViewDataset:
    """m zero-filled view matrices plus labels and the two availability indicators.

    ``view_indicator[i, v] == 1`` means view ``v`` of sample ``i`` is observed and
    ``label_indicator[i, j] == 1`` means label ``j`` of sample ``i`` is known.
    """

    views: list[np.ndarray]
    labels: np.ndarray
    view_indicator: np.ndarray
    label_indicator: np.ndarray
    view_names: list[str] | None = None
    provenance: str = ""

    def __post_init__(self) -> None:
        self.views = [np.ascontiguousarray(x, dtype=np.float64) for x in self.views]
        self.labels = np.ascontiguousarray(self.labels, dtype=np.float64)
        self.view_indicator = np.ascontiguousarray(self.view_indicator, dtype=np.float64)
        self.label_indicator = np.ascontiguousarray(self.label_indicator, dtype=np.float64)
        if self.view_names is None:
            self.view_names = [f"view{v}" for v in range(len(self.views))]
        self.validate()

    @property
    def n(self) -> int:
        return self.labels.shape[0]

    @property
    def m(self) -> int:
        return len(self.views)

    @property
    def c(self) -> int:
        return self.labels.shape[1]

    @property
    def dims(self) -> list[int]:
        return [x.shape[1] for x in self.views]

    @property
    def meta(self) -> dict:
        return {
            "view_names": list(self.view_names),
            "d_v": self.dims,
            "n": self.n,
            "m": self.m,
            "c": self.c,
            "provenance": self.provenance,
        }

    def validate(self) -> None:
        if len(self.views) < 1:
            raise ValidationError("dataset needs at least one view")
        if self.labels.ndim != 2:
            raise ValidationError(f"labels must be 2-d, got shape {self.labels.shape}")
        n, c = self.labels.shape
        if len(self.view_names) != self.m:
            raise ValidationError(f"{len(self.view_names)} view names for {self.m} views")
        for v, x in enumerate(self.views):
            if x.ndim != 2 or x.shape[0] != n:
                raise ValidationError(f"view {v} has shape {x.shape}, expected ({n}, d_v)")
            if x.shape[1] < 1:
                raise ValidationError(f"view {v} has zero feature columns")
        if self.view_indicator.shape != (n, self.m):
            raise ValidationError(
                f"view indicator has shape {self.view_indicator.shape}, expected {(n, self.m)}"
            )
        if self.label_indicator.shape != (n, c):
            raise ValidationError(
                f"label indicator has shape {self.label_indicator.shape}, expected {(n, c)}"
            )
        for name, arr in (
            ("labels", self.labels),
            ("view indicator", self.view_indicator),
            ("label indicator", self.label_indicator),
        ):
            if not np.all((arr == 0.0) | (arr == 1.0)):
                raise ValidationError(f"{name} must contain only 0 and 1")
        empty = np.flatnonzero(self.view_indicator.sum(axis=1) == 0)
        if empty.size:
            raise ValidationError(f"sample row {int(empty[0])} has no available view")
        for v, x in enumerate(self.views):
            missing = self.view_indicator[:, v] == 0
            if np.any(x[missing] != 0.0):
                row = int(np.flatnonzero(missing & np.any(x != 0.0, axis=1))[0])
                raise ValidationError(f"view {v} row {row} is missing but not zero-filled")

    def subset(self, rows: Sequence[int] | np.ndarray) -> "MultiViewDataset":
        rows = np.asarray(rows, dtype=np.int64)
        return MultiViewDataset(
            views=[x[rows] for x in self.views],
            labels=self.labels[rows],
            view_indicator=self.view_indicator[rows],
            label_indicator=self.label_indicator[rows],
            view_names=list(self.view_names),
            provenance=self.provenance,
        )


@dataclass
class FeatureMaskSet:
    """Per-view binary masks; each row holds one contiguous run of zeros."""

    masks: list[np.ndarray]
    mask_ratio: float
    seed: int
    starts: list[np.ndarray] = field(default_factory=list)


@dataclass
class CorruptionSpec:
    view_missing_rate: float = 0.5
    label_missing_rate: float = 0.5
    train_fraction: float = 0.7
    seed: int = 0

    def validate(self) -> None:
        for name in ("view_missing_rate", "label_missing_rate"):
            rate = getattr(self, name)
            if not 0.0 <= rate < 1.0:
                raise ValidationError(f"{name} must lie in [0, 1), got {rate}")
        if not 0.0 < self.train_fraction <= 1.0:
            raise ValidationError(f"train_fraction must lie in (0, 1], got {self.train_fraction}")


# --------------------------------------------------------------------------- I/O


def _write_bin(path: Path, arr: np.ndarray) -> None:
    np.ascontiguousarray(arr, dtype=_DTYPE).tofile(path)


def _read_bin(path: Path, shape: tuple[int, int]) -> np.ndarray:
    try:
        flat = np.fromfile(path, dtype=_DTYPE)
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc}") from exc
    expected = shape[0] * shape[1]
    if flat.size != expected:
        raise ValidationError(
            f"{path.name} holds {flat.size} values, manifest implies {shape[0]}x{shape[1]}={expected}"
        )
    return flat.reshape(shape).astype(np.float64)


def save_dataset(ds: MultiViewDataset, path: str | os.PathLike) -> None:
    """Write ``ds`` as a manifest plus raw little-endian f64 row-major blobs."""
    ds.validate()
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format": "mvfd-dataset/1",
        "n": ds.n,
        "m": ds.m,
        "c": ds.c,
        "view_names": list(ds.view_names),
        "d_v": ds.dims,
        "dtype": "f64",
        "endianness": "little",
        "layout": "row-major",
        "provenance": ds.provenance,
    }
    for v, x in enumerate(ds.views):
        _write_bin(path / f"view_{v}.bin", x)
    _write_bin(path / "labels.bin", ds.labels)
    _write_bin(path / "W.bin", ds.view_indicator)
    _write_bin(path / "G.bin", ds.label_indicator)
    (path / MANIFEST).write_text(json.dumps(manifest, indent=2))


def load_dataset(path: str | os.PathLike) -> MultiViewDataset:
    path = Path(path)
    mpath = path / MANIFEST
    if not mpath.is_file():
        raise FileNotFoundError(f"no {MANIFEST} in {path}")
    try:
        manifest = json.loads(mpath.read_text())
    except json.JSONDecodeError as exc:
        raise OSError(f"corrupt manifest {mpath}: {exc}") from exc
    for key in ("n", "m", "c", "d_v"):
        if key not in manifest:
            raise ValidationError(f"manifest lacks '{key}'")
    if manifest.get("dtype", "f64") != "f64" or manifest.get("endianness", "little") != "little":
        raise ValidationError("only little-endian f64 datasets are supported")
    n, m, c, dims = manifest["n"], manifest["m"], manifest["c"], manifest["d_v"]
    if len(dims) != m:
        raise ValidationError(f"manifest lists {len(dims)} view widths for m={m}")
    views = []
    for v in range(m):
        vpath = path / f"view_{v}.bin"
        if not vpath.is_file():
            raise FileNotFoundError(f"missing view file {vpath}")
        views.append(_read_bin(vpath, (n, dims[v])))
    arrays = {}
    for name, width in (("labels", c), ("W", m), ("G", c)):
        fpath = path / f"{name}.bin"
        if not fpath.is_file():
            raise FileNotFoundError(f"missing file {fpath}")
        arrays[name] = _read_bin(fpath, (n, width))
    return MultiViewDataset(
        views=views,
        labels=arrays["labels"],
        view_indicator=arrays["W"],
        label_indicator=arrays["G"],
        view_names=manifest.get("view_names"),
        provenance=manifest.get("provenance", ""),
    )


# ------------------------------------------------------------- incompleteness


def _disable_views(n: int, m: int, rate: float, rng: np.random.Generator) -> np.ndarray:
    w = np.ones((n, m))
    k = int(math.floor(n * rate))
    for v in range(m):
        w[rng.choice(n, size=k, replace=False), v] = 0.0
    # Re-enable one random view per empty row; when possible, move that view's
    # "missing" slot onto a row that keeps another view so per-view counts stay exact.
    for i in np.flatnonzero(w.sum(axis=1) == 0):
        donor_rows = (w == 1.0) & (w.sum(axis=1, keepdims=True) >= 2)
        candidates = np.flatnonzero(donor_rows.any(axis=0))
        if candidates.size:
            v = int(rng.choice(candidates))
            w[int(rng.choice(np.flatnonzero(donor_rows[:, v]))), v] = 0.0
        else:
            v = int(rng.integers(m))
        w[i, v] = 1.0
    return w


def _disable_labels(
    y: np.ndarray, rate: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    n, c = y.shape
    g = np.ones_like(y)
    k = int(math.floor(n * rate))
    for j in range(c):
        pos = np.flatnonzero(y[:, j] == 1)
        neg = np.flatnonzero(y[:, j] == 0)
        k_pos = min(int(round(k * pos.size / n)) if n else 0, pos.size)
        k_neg = k - k_pos
        if k_neg > neg.size:
            k_pos, k_neg = k - neg.size, neg.size
        g[rng.choice(pos, size=k_pos, replace=False), j] = 0.0
        g[rng.choice(neg, size=k_neg, replace=False), j] = 0.0
    return y * g, g


def simulate_incompleteness(
    ds_complete: MultiViewDataset, spec: CorruptionSpec
) -> tuple[MultiViewDataset, MultiViewDataset]:
    """Drop views and labels at the given rates, then split into train/test.

    Test rows keep their missing views but get their complete labels back.
    """
    spec.validate()
    if not (np.all(ds_complete.view_indicator == 1) and np.all(ds_complete.label_indicator == 1)):
        raise ValidationError("simulate_incompleteness expects a complete dataset")
    rng = np.random.default_rng(spec.seed)
    n, m = ds_complete.n, ds_complete.m
    w = _disable_views(n, m, spec.view_missing_rate, rng)
    y_inc, g = _disable_labels(ds_complete.labels, spec.label_missing_rate, rng)
    views = [x * w[:, [v]] for v, x in enumerate(ds_complete.views)]

    order = rng.permutation(n)
    n_train = int(math.floor(n * spec.train_fraction))
    train_rows, test_rows = np.sort(order[:n_train]), np.sort(order[n_train:])
    prov = (
        f"{ds_complete.provenance}|simulate(view={spec.view_missing_rate},"
        f"label={spec.label_missing_rate},train={spec.train_fraction},seed={spec.seed})"
    )
    train = MultiViewDataset(
        views=[x[train_rows] for x in views],
        labels=y_inc[train_rows],
        view_indicator=w[train_rows],
        label_indicator=g[train_rows],
        view_names=list(ds_complete.view_names),
        provenance=prov + ":train",
    )
    test = MultiViewDataset(
        views=[x[test_rows] for x in views],
        labels=ds_complete.labels[test_rows],
        view_indicator=w[test_rows],
        label_indicator=np.ones((test_rows.size, ds_complete.c)),
        view_names=list(ds_complete.view_names),
        provenance=prov + ":test",
    )
    return train, test


# ---------------------------------------------------------------- feature masks


def mask_length(d: int, ratio: float) -> int:
    # tolerance guards products like 0.29 * 100 = 28.999999999999996
    return min(d, int(math.floor(d * ratio + 1e-9)))


def sample_feature_masks(ds: MultiViewDataset, ratio: float, seed: int) -> FeatureMaskSet:
    if not 0.0 <= ratio <= 1.0:
        raise ValidationError(f"mask ratio must lie in [0, 1], got {ratio}")
    rng = np.random.default_rng(seed)
    masks, starts = [], []
    for d in ds.dims:
        length = mask_length(d, ratio)
        p = rng.integers(0, d - length + 1, size=ds.n)
        cols = np.arange(d)
        zero = (cols[None, :] >= p[:, None]) & (cols[None, :] < p[:, None] + length)
        masks.append((~zero).astype(np.float64))
        starts.append(p)
    return FeatureMaskSet(masks=masks, mask_ratio=ratio, seed=seed, starts=starts)


def apply_masks(ds: MultiViewDataset | Sequence[np.ndarray], masks: FeatureMaskSet) -> list[np.ndarray]:
    views = ds.views if isinstance(ds, MultiViewDataset) else list(ds)
    if len(views) != len(masks.masks):
        raise ValidationError(f"{len(masks.masks)} masks for {len(views)} views")
    out = []
    for v, (x, mk) in enumerate(zip(views, masks.masks)):
        if x.shape != mk.shape:
            raise ValidationError(f"view {v} shape {x.shape} != mask shape {mk.shape}")
        out.append(x * mk)
    return out


# ------------------------------------------------------------------- converters


def _finish_import(views, labels, names, standardize: bool, provenance: str) -> MultiViewDataset:
    labels = np.asarray(labels, dtype=np.float64)
    if labels.min() < 0:
        labels = (labels > 0).astype(np.float64)
    n = labels.shape[0]
    views = [np.asarray(x, dtype=np.float64) for x in views]
    if standardize:
        views = [(x - x.mean(0)) / np.where(x.std(0) > 0, x.std(0), 1.0) for x in views]
    return MultiViewDataset(
        views=views,
        labels=labels,
        view_indicator=np.ones((n, len(views))),
        label_indicator=np.ones_like(labels),
        view_names=names,
        provenance=provenance,
    )


def from_csv(view_paths: Sequence[str], label_path: str, standardize: bool = False) -> MultiViewDataset:
    views = [np.atleast_2d(np.loadtxt(p, delimiter=",", ndmin=2)) for p in view_paths]
    labels = np.loadtxt(label_path, delimiter=",", ndmin=2)
    names = [Path(p).stem for p in view_paths]
    return _finish_import(views, labels, names, standardize, f"csv:{label_path}")


def from_mat(path: str, standardize: bool = False) -> MultiViewDataset:
    """Read the usual ``X`` (cell of views) + ``label`` MATLAB layout."""
    import scipy.io

    data = scipy.io.loadmat(path)
    if "X" not in data:
        raise ValidationError(f"{path} has no 'X' cell array")
    label_key = next((k for k in ("label", "labels", "Y", "gt") if k in data), None)
    if label_key is None:
        raise ValidationError(f"{path} has no label matrix")
    labels = np.asarray(data[label_key], dtype=np.float64)
    cells = data["X"].ravel()
    views = [np.asarray(x, dtype=np.float64) for x in cells]
    n = views[0].shape[0] if views[0].shape[0] in labels.shape else views[0].shape[1]
    if labels.shape[0] != n:
        labels = labels.T
    views = [x if x.shape[0] == n else x.T for x in views]
    names = [f"view{v}" for v in range(len(views))]
    return _finish_import(views, labels, names, standardize, f"mat:{Path(path).name}")
