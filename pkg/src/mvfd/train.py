"""Two-stage optimisation, the collapsed one-stage variant, and prediction."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch
from torch import Tensor

from . import losses as L
from .data import MultiViewDataset, sample_feature_masks
from .errors import TrainingDiverged, ValidationError
from .model import (
    GROUPS,
    STAGE1_GROUPS,
    STAGE2_GROUPS,
    Architecture,
    MVFDNet,
    aggregate_available,
    classify,
    forward_full,
    mean_cross_similarity,
)

log = logging.getLogger(__name__)

_STAGE_TAGS = {"stage1": 1, "stage2": 2, "one_stage": 3}


@dataclass
class TrainConfig:
    weights: L.LossWeights = field(default_factory=L.LossWeights)
    mask_ratio: float = 0.3
    embed_dim: int = 512
    hidden: list[int] = field(default_factory=lambda: [1024])
    activation: str = "relu"
    lr: float = 1e-3
    optimizer: str = "adam"
    betas: tuple[float, float] = (0.9, 0.999)
    weight_decay: float = 0.0
    epochs_stage1: int = 60
    epochs_stage2: int = 60
    batch_size: int = 128
    seed: int = 0
    use_cp: bool = True
    use_sc: bool = True
    use_rec: bool = True
    use_gd: bool = True
    one_stage: bool = False
    dtype: str = "float32"
    track_similarity: bool = True

    def validate(self) -> None:
        self.weights.validate()
        if self.epochs_stage1 < 1 or self.epochs_stage2 < 1:
            raise ValidationError("epoch counts must be at least 1")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be at least 1")
        if not self.lr > 0:
            raise ValidationError("learning rate must be positive")
        if not 0.0 <= self.mask_ratio <= 1.0:
            raise ValidationError(f"mask_ratio must lie in [0, 1], got {self.mask_ratio}")
        if self.optimizer not in ("adam", "sgd"):
            raise ValidationError(f"unknown optimizer '{self.optimizer}'")
        if self.dtype not in ("float32", "float64"):
            raise ValidationError(f"unsupported dtype '{self.dtype}'")

    def effective_weights(self) -> L.LossWeights:
        """Loss weights with ablated terms set to zero."""
        w = self.weights
        return L.LossWeights(
            alpha=w.alpha if self.use_cp else 0.0,
            beta=w.beta if self.use_sc else 0.0,
            gamma=w.gamma if self.use_rec else 0.0,
            lam=w.lam if self.use_gd else 0.0,
            tau=w.tau,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        if isinstance(d.get("weights"), dict):
            d["weights"] = L.LossWeights(**d["weights"])
        if "betas" in d:
            d["betas"] = tuple(d["betas"])
        return cls(**d)


@dataclass
class Batch:
    views: list[Tensor]
    w: Tensor
    y: Tensor
    g: Tensor
    masked: list[Tensor] | None = None


class TensorData:
    """Dataset arrays converted once to tensors of the training dtype."""

    def __init__(self, ds: MultiViewDataset, dtype: torch.dtype):
        self.ds = ds
        self.views = [torch.as_tensor(x, dtype=dtype) for x in ds.views]
        self.w = torch.as_tensor(ds.view_indicator, dtype=dtype)
        self.y = torch.as_tensor(ds.labels, dtype=dtype)
        self.g = torch.as_tensor(ds.label_indicator, dtype=dtype)
        self.dtype = dtype

    def batch(self, rows: np.ndarray, masks: Sequence[np.ndarray] | None = None) -> Batch:
        idx = torch.as_tensor(rows, dtype=torch.long)
        views = [x[idx] for x in self.views]
        masked = None
        if masks is not None:
            masked = [x * torch.as_tensor(mk[rows], dtype=self.dtype) for x, mk in zip(views, masks)]
        return Batch(views=views, w=self.w[idx], y=self.y[idx], g=self.g[idx], masked=masked)


def derive_seed(*parts: int) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def batch_order(n: int, batch_size: int, seed: int, stage: str, epoch: int) -> list[np.ndarray]:
    rng = np.random.default_rng(derive_seed(seed, _STAGE_TAGS[stage], epoch, 0))
    perm = rng.permutation(n)
    return [perm[i : i + batch_size] for i in range(0, n, batch_size)]


def epoch_masks(ds: MultiViewDataset, config: TrainConfig, stage: str, epoch: int):
    return sample_feature_masks(ds, config.mask_ratio, derive_seed(config.seed, _STAGE_TAGS[stage], epoch, 1))


def build_model(ds: MultiViewDataset, config: TrainConfig) -> MVFDNet:
    arch = Architecture(
        dims=ds.dims,
        n_labels=ds.c,
        embed_dim=config.embed_dim,
        hidden=list(config.hidden),
        activation=config.activation,
    )
    return MVFDNet(arch, seed=config.seed, dtype=getattr(torch, config.dtype))


def _bce_or_zero(p: Tensor, y: Tensor, g: Tensor) -> Tensor:
    if float(g.sum()) <= 0:
        return p.new_zeros(())
    return L.masked_bce(p, y, g)


# ----------------------------------------------------------------- batch losses


def stage1_losses(net: MVFDNet, batch: Batch, weights: L.LossWeights) -> dict[str, Tensor]:
    """Masked consistent branch: classification, cross-view prediction, semantic contrast."""
    inputs = batch.masked if batch.masked is not None else batch.views
    c = net.encode_consistent(inputs)
    c_hat = aggregate_available(c, batch.w)
    out = {"ce1": _bce_or_zero(classify(net.shared_classifier, c_hat), batch.y, batch.g)}
    zero = out["ce1"].new_zeros(())
    out["cp"] = (
        L.masked_consistent_prediction_loss(net.decode_consistent(c_hat), batch.views, batch.w)
        if weights.alpha > 0
        else zero
    )
    if weights.beta > 0:
        preds = [classify(net.shared_classifier, cv) for cv in c]
        out["sc"] = L.semantic_contrastive_loss(preds, weights.tau, batch.w)
    else:
        out["sc"] = zero
    out["total"] = L.stage1_total(out["ce1"], out["cp"], out["sc"], weights)
    return out


def stage2_losses(net: MVFDNet, batch: Batch, weights: L.LossWeights) -> dict[str, Tensor]:
    """Unmasked two-branch pass: fused classification, specific reconstruction, disentangling."""
    emb = forward_full(net, batch.views, batch.w)
    out = {"ce2": _bce_or_zero(emb.prediction, batch.y, batch.g)}
    zero = out["ce2"].new_zeros(())
    out["rec"] = (
        L.reconstruction_loss(emb.specific_recon, batch.views, batch.w) if weights.gamma > 0 else zero
    )
    out["gd"] = (
        L.graph_disentangling_loss(emb.consistent_bar, emb.specific, batch.w) if weights.lam > 0 else zero
    )
    out["total"] = L.stage2_total(out["ce2"], out["rec"], out["gd"], weights)
    return out


def one_stage_losses(net: MVFDNet, batch: Batch, weights: L.LossWeights) -> dict[str, Tensor]:
    first = stage1_losses(net, batch, weights)
    second = stage2_losses(net, batch, weights)
    out = {k: v for k, v in first.items() if k != "total"}
    out.update({k: v for k, v in second.items() if k != "total"})
    out["total"] = first["total"] + second["total"]
    return out


# ----------------------------------------------------------------- main loop


def _make_optimizer(params: list[torch.nn.Parameter], config: TrainConfig) -> torch.optim.Optimizer:
    if config.optimizer == "adam":
        return torch.optim.Adam(params, lr=config.lr, betas=config.betas, weight_decay=config.weight_decay)
    return torch.optim.SGD(params, lr=config.lr, weight_decay=config.weight_decay)


def _run(
    net: MVFDNet,
    ds: MultiViewDataset,
    config: TrainConfig,
    stage: str,
    groups: Sequence[str],
    loss_fn: Callable[[MVFDNet, Batch, L.LossWeights], dict[str, Tensor]],
    epochs: int,
    masked: bool,
    log_path: str | Path | None,
    epoch_hook: Callable[[MVFDNet, int, dict], None] | None,
) -> list[dict]:
    torch.manual_seed(derive_seed(config.seed, _STAGE_TAGS[stage], 2))
    weights = config.effective_weights()
    data = TensorData(ds, getattr(torch, config.dtype))
    opt = _make_optimizer(net.group_parameters(groups), config)
    history: list[dict] = []
    logf = open(log_path, "a") if log_path else None
    t0 = time.time()
    try:
        for epoch in range(1, epochs + 1):
            masks = epoch_masks(ds, config, stage, epoch).masks if masked else None
            sums: dict[str, float] = {}
            n_batches = 0
            net.train()
            for b, rows in enumerate(batch_order(ds.n, config.batch_size, config.seed, stage, epoch)):
                batch = data.batch(rows, masks)
                parts = loss_fn(net, batch, weights)
                total = parts["total"]
                if not torch.isfinite(total):
                    raise TrainingDiverged(
                        f"non-finite loss in {stage} epoch {epoch} batch {b}: "
                        + ", ".join(f"{k}={v.item():.4g}" for k, v in parts.items())
                    )
                opt.zero_grad(set_to_none=True)
                total.backward()
                opt.step()
                rec = {k: v.item() for k, v in parts.items()}
                for k, v in rec.items():
                    sums[k] = sums.get(k, 0.0) + v
                n_batches += 1
                if logf:
                    logf.write(
                        json.dumps({"stage": stage, "epoch": epoch, "batch": b, **rec, "wall_time": time.time() - t0})
                        + "\n"
                    )
            summary = {"stage": stage, "epoch": epoch, **{k: v / n_batches for k, v in sums.items()}}
            if epoch_hook is not None:
                epoch_hook(net, epoch, summary)
            history.append(summary)
            log.debug("%s epoch %d: %s", stage, epoch, summary)
    finally:
        if logf:
            logf.close()
    return history


def _similarity_hook(ds: MultiViewDataset, config: TrainConfig, extra=None):
    data = TensorData(ds, getattr(torch, config.dtype))

    def hook(net: MVFDNet, epoch: int, summary: dict) -> None:
        if config.track_similarity:
            with torch.no_grad():
                emb = forward_full(net, data.views, data.w)
                args = (emb.consistent_bar, emb.specific, data.w)
                summary["cross_similarity"] = mean_cross_similarity(*args)
                summary["cross_similarity_signed"] = mean_cross_similarity(*args, absolute=False)
        if extra is not None:
            extra(net, epoch, summary)

    return hook


def train_stage1(
    ds: MultiViewDataset, config: TrainConfig, log_path=None, net: MVFDNet | None = None
) -> tuple[MVFDNet, list[dict]]:
    """Train consistent encoders/decoders and the shared classifier on masked views."""
    config.validate()
    net = net if net is not None else build_model(ds, config)
    net.set_frozen(GROUPS, False)
    history = _run(
        net, ds, config, "stage1", STAGE1_GROUPS, stage1_losses, config.epochs_stage1, True, log_path, None
    )
    return net, history


def train_stage2(
    ds: MultiViewDataset,
    net: MVFDNet,
    config: TrainConfig,
    log_path=None,
    epoch_hook: Callable[[MVFDNet, int, dict], None] | None = None,
) -> tuple[MVFDNet, list[dict]]:
    """Freeze the stage-1 groups and train the specific branch plus fused classifier.

    ``net`` is updated in place.
    """
    config.validate()
    if net.arch.dims != ds.dims:
        raise ValidationError(f"model view widths {net.arch.dims} != dataset widths {ds.dims}")
    net.set_frozen(STAGE1_GROUPS, True)
    net.set_frozen(STAGE2_GROUPS, False)
    hook = _similarity_hook(ds, config, epoch_hook)
    history = _run(
        net, ds, config, "stage2", STAGE2_GROUPS, stage2_losses, config.epochs_stage2, False, log_path, hook
    )
    return net, history


def train_one_stage(ds: MultiViewDataset, config: TrainConfig, log_path=None) -> tuple[MVFDNet, list[dict]]:
    """All six objectives optimised jointly with nothing frozen.

    Runs ``epochs_stage1 + epochs_stage2`` epochs so the step budget matches the two-stage run.
    """
    config.validate()
    net = build_model(ds, config)
    net.set_frozen(GROUPS, False)
    hook = _similarity_hook(ds, config)
    epochs = config.epochs_stage1 + config.epochs_stage2
    history = _run(net, ds, config, "one_stage", GROUPS, one_stage_losses, epochs, True, log_path, hook)
    return net, history


def train(ds: MultiViewDataset, config: TrainConfig, log_path=None) -> tuple[MVFDNet, list[dict]]:
    """Full run: two stages, or the one-stage variant when ``config.one_stage`` is set."""
    if config.one_stage:
        return train_one_stage(ds, config, log_path)
    net, h1 = train_stage1(ds, config, log_path)
    net, h2 = train_stage2(ds, net, config, log_path)
    return net, h1 + h2


def predict(net: MVFDNet, ds: MultiViewDataset, batch_size: int = 1024) -> np.ndarray:
    if net.arch.dims != ds.dims or net.arch.n_labels != ds.c:
        raise ValidationError(
            f"model expects widths {net.arch.dims} and {net.arch.n_labels} labels, "
            f"data has {ds.dims} and {ds.c}"
        )
    dtype = next(net.parameters()).dtype
    data = TensorData(ds, dtype)
    net.eval()
    out = []
    with torch.no_grad():
        for i in range(0, ds.n, batch_size):
            rows = np.arange(i, min(i + batch_size, ds.n))
            batch = data.batch(rows)
            out.append(forward_full(net, batch.views, batch.w).prediction.double().numpy())
    return np.concatenate(out) if out else np.zeros((0, ds.c))
