"""Network groups, indicator-weighted aggregation and star fusion."""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
import zipfile
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
from torch import Tensor, nn

from .errors import ValidationError

EPS = 1e-7
NORM_FLOOR = 1e-12
CHECKPOINT_FORMAT = "mvfd-ckpt/1"

GROUPS = (
    "consistent_encoders",
    "consistent_decoders",
    "shared_classifier",
    "specific_encoders",
    "specific_decoders",
    "fused_classifier",
)
STAGE1_GROUPS = GROUPS[:3]
STAGE2_GROUPS = GROUPS[3:]

_ACTIVATIONS = {
    "relu": nn.ReLU,
    "leaky_relu": nn.LeakyReLU,
    "elu": nn.ELU,
    "tanh": nn.Tanh,
    "sigmoid": nn.Sigmoid,
    "identity": nn.Identity,
}


@dataclass
class MlpSpec:
    layer_widths: list[int]
    hidden_activation: str = "relu"
    output_activation: str = "identity"

    def __post_init__(self) -> None:
        if len(self.layer_widths) < 2:
            raise ValidationError("an MLP needs input and output widths")
        if any(w < 1 for w in self.layer_widths):
            raise ValidationError(f"non-positive width in {self.layer_widths}")
        for act in (self.hidden_activation, self.output_activation):
            if act not in _ACTIVATIONS:
                raise ValidationError(f"unknown activation '{act}'")


class MLP(nn.Module):
    def __init__(self, spec: MlpSpec):
        super().__init__()
        self.spec = spec
        layers: list[nn.Module] = []
        widths = spec.layer_widths
        for k in range(len(widths) - 1):
            layers.append(nn.Linear(widths[k], widths[k + 1]))
            last = k == len(widths) - 2
            act = spec.output_activation if last else spec.hidden_activation
            if act != "identity":
                layers.append(_ACTIVATIONS[act]())
        self.net = nn.Sequential(*layers)

    @property
    def in_features(self) -> int:
        return self.spec.layer_widths[0]

    @property
    def out_features(self) -> int:
        return self.spec.layer_widths[-1]

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.in_features:
            raise ValidationError(f"input width {x.shape[-1]} != expected {self.in_features}")
        return self.net(x)


@dataclass
class Architecture:
    dims: list[int]
    n_labels: int
    embed_dim: int = 512
    hidden: list[int] = field(default_factory=lambda: [1024])
    activation: str = "relu"

    def encoder(self, d: int) -> MlpSpec:
        return MlpSpec([d, *self.hidden, self.embed_dim], self.activation)

    def decoder(self, d: int) -> MlpSpec:
        return MlpSpec([self.embed_dim, *reversed(self.hidden), d], self.activation)

    def classifier(self) -> MlpSpec:
        return MlpSpec([self.embed_dim, self.n_labels], self.activation)


class MVFDNet(nn.Module):
    """All six network groups.

    Classifiers hold only the affine part; ``classify`` applies the clamped logistic.
    """

    def __init__(self, arch: Architecture, seed: int = 0, dtype: torch.dtype = torch.float32):
        super().__init__()
        self.arch = arch
        self.seed = seed
        dims = arch.dims
        self.consistent_encoders = nn.ModuleList(MLP(arch.encoder(d)) for d in dims)
        self.consistent_decoders = nn.ModuleList(MLP(arch.decoder(d)) for d in dims)
        self.shared_classifier = MLP(arch.classifier())
        self.specific_encoders = nn.ModuleList(MLP(arch.encoder(d)) for d in dims)
        self.specific_decoders = nn.ModuleList(MLP(arch.decoder(d)) for d in dims)
        self.fused_classifier = MLP(arch.classifier())
        self.freeze_flags = {g: False for g in GROUPS}
        self.reset_parameters(seed)
        self.to(dtype)

    @property
    def m(self) -> int:
        return len(self.arch.dims)

    def reset_parameters(self, seed: int) -> None:
        gen = torch.Generator().manual_seed(seed)
        for mod in self.modules():
            if isinstance(mod, nn.Linear):
                bound = 1.0 / np.sqrt(mod.in_features)
                with torch.no_grad():
                    mod.weight.copy_(torch.rand(mod.weight.shape, generator=gen) * 2 * bound - bound)
                    mod.bias.copy_(torch.rand(mod.bias.shape, generator=gen) * 2 * bound - bound)

    def group(self, name: str) -> nn.Module:
        if name not in GROUPS:
            raise KeyError(name)
        return getattr(self, name)

    def group_parameters(self, names: Sequence[str]) -> list[nn.Parameter]:
        return [p for g in names for p in self.group(g).parameters()]

    def set_frozen(self, names: Sequence[str], frozen: bool = True) -> None:
        for g in names:
            self.freeze_flags[g] = frozen
            for p in self.group(g).parameters():
                p.requires_grad_(not frozen)

    def group_digest(self, names: str | Sequence[str] = STAGE1_GROUPS) -> str:
        if isinstance(names, str):
            names = [names]
        h = hashlib.sha256()
        for g in names:
            for name, p in self.group(g).named_parameters():
                h.update(name.encode())
                h.update(p.detach().cpu().contiguous().numpy().tobytes())
        return h.hexdigest()

    # ------------------------------------------------------------ forward parts

    def encode_consistent(self, views: Sequence[Tensor]) -> list[Tensor]:
        return _apply_per_view(self.consistent_encoders, views)

    def decode_consistent(self, c_hat: Tensor) -> list[Tensor]:
        return [dec(c_hat) for dec in self.consistent_decoders]

    def encode_specific(self, views: Sequence[Tensor]) -> list[Tensor]:
        return _apply_per_view(self.specific_encoders, views)

    def decode_specific(self, specific: Sequence[Tensor]) -> list[Tensor]:
        return _apply_per_view(self.specific_decoders, specific)


def _apply_per_view(mlps: nn.ModuleList, inputs: Sequence[Tensor]) -> list[Tensor]:
    if len(inputs) != len(mlps):
        raise ValidationError(f"{len(inputs)} inputs for {len(mlps)} views")
    return [f(x) for f, x in zip(mlps, inputs)]


def aggregate_available(features: Sequence[Tensor], w: Tensor) -> Tensor:
    """Mean of the per-view rows over the views each sample actually has."""
    if w.ndim != 2 or w.shape[1] != len(features):
        raise ValidationError(f"indicator shape {tuple(w.shape)} does not match {len(features)} views")
    counts = w.sum(dim=1)
    if torch.any(counts == 0):
        row = int(torch.nonzero(counts == 0)[0, 0])
        raise ValidationError(f"sample row {row} has no available view")
    total = torch.zeros_like(features[0])
    for v, f in enumerate(features):
        keep = w[:, v : v + 1] > 0
        total = total + torch.where(keep, f * w[:, v : v + 1], torch.zeros_like(f))
    return total / counts[:, None]


def classify(classifier: MLP, features: Tensor) -> Tensor:
    logits = classifier(features)
    return torch.sigmoid(logits).clamp(EPS, 1.0 - EPS)


def star_fuse(specific_bar: Tensor, consistent_bar: Tensor) -> Tensor:
    if specific_bar.shape != consistent_bar.shape:
        raise ValidationError(
            f"star fusion needs equal shapes, got {tuple(specific_bar.shape)} and {tuple(consistent_bar.shape)}"
        )
    return torch.sigmoid(specific_bar) * consistent_bar


def cosine(a: Tensor, b: Tensor) -> Tensor:
    """Row-wise cosine with norms floored at ``NORM_FLOOR``."""
    na = a.norm(dim=-1).clamp_min(NORM_FLOOR)
    nb = b.norm(dim=-1).clamp_min(NORM_FLOOR)
    return (a * b).sum(dim=-1) / (na * nb)


@dataclass
class EmbeddingBatch:
    consistent: list[Tensor]
    consistent_bar: Tensor
    specific: list[Tensor] | None = None
    specific_bar: Tensor | None = None
    fused: Tensor | None = None
    view_predictions: list[Tensor] | None = None
    consistent_prediction: Tensor | None = None
    prediction: Tensor | None = None
    consistent_recon: list[Tensor] | None = None
    specific_recon: list[Tensor] | None = None


def forward_full(net: MVFDNet, views: Sequence[Tensor], w: Tensor) -> EmbeddingBatch:
    """Unmasked two-branch forward pass used in stage 2 and at prediction time."""
    c_prime = net.encode_consistent(views)
    c_bar = aggregate_available(c_prime, w)
    s = net.encode_specific(views)
    s_bar = aggregate_available(s, w)
    z = star_fuse(s_bar, c_bar)
    return EmbeddingBatch(
        consistent=c_prime,
        consistent_bar=c_bar,
        specific=s,
        specific_bar=s_bar,
        fused=z,
        prediction=classify(net.fused_classifier, z),
        specific_recon=net.decode_specific(s),
    )


def mean_cross_similarity(
    c_bar: Tensor, specific: Sequence[Tensor], w: Tensor, absolute: bool = True
) -> float:
    """Mean |cos| between aggregated consistent and specific rows, and across specific views.

    Only pairs where the involved views are available are counted. With
    ``absolute=False`` the signed cosines are averaged instead.
    """
    fold = torch.abs if absolute else (lambda t: t)
    total, count = 0.0, 0.0
    for v, s in enumerate(specific):
        wv = w[:, v]
        total += float((fold(cosine(c_bar, s)) * wv).sum())
        count += float(wv.sum())
        for u in range(len(specific)):
            if u == v:
                continue
            wvu = wv * w[:, u]
            total += float((fold(cosine(s, specific[u])) * wvu).sum())
            count += float(wvu.sum())
    return total / max(count, 1.0)


# ------------------------------------------------------------------ checkpoints


def save_checkpoint(net: MVFDNet, path: str | os.PathLike, **meta) -> None:
    """Write a zip archive with a manifest and one raw little-endian f64 blob per tensor."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    state = net.state_dict()
    manifest = {
        "format": CHECKPOINT_FORMAT,
        "architecture": asdict(net.arch),
        "embed_dim": net.arch.embed_dim,
        "seed": net.seed,
        "dtype": str(next(net.parameters()).dtype).replace("torch.", ""),
        "freeze_flags": dict(net.freeze_flags),
        "tensors": {k: list(t.shape) for k, t in state.items()},
        **meta,
    }
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".ckpt-")
    os.close(fd)
    try:
        with zipfile.ZipFile(tmp, "w", compression=zipfile.ZIP_STORED) as zf:
            zf.writestr("manifest.json", json.dumps(manifest, indent=2))
            for k, t in state.items():
                arr = t.detach().cpu().numpy().astype("<f8", copy=False)
                zf.writestr(f"params/{k}.bin", np.ascontiguousarray(arr).tobytes())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path: str | os.PathLike) -> tuple[MVFDNet, dict]:
    with zipfile.ZipFile(path) as zf:
        manifest = json.loads(zf.read("manifest.json"))
        if manifest.get("format") != CHECKPOINT_FORMAT:
            raise ValidationError(f"unsupported checkpoint format {manifest.get('format')!r}")
        arch = Architecture(**manifest["architecture"])
        dtype = getattr(torch, manifest.get("dtype", "float32"))
        net = MVFDNet(arch, seed=manifest.get("seed", 0), dtype=dtype)
        state = {}
        for k, shape in manifest["tensors"].items():
            raw = np.frombuffer(zf.read(f"params/{k}.bin"), dtype="<f8").reshape(shape)
            state[k] = torch.from_numpy(raw.copy()).to(dtype)
    net.load_state_dict(state)
    for g, frozen in manifest.get("freeze_flags", {}).items():
        net.set_frozen([g], frozen)
    return net, manifest
