"""Indicator-aware training objectives.

Every loss that sums over samples is divided by the number of rows in the
batch, so values do not grow with the batch size.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import torch
from torch import Tensor

from .errors import ValidationError
from .model import NORM_FLOOR, cosine


@dataclass
class LossWeights:
    alpha: float = 0.1  # masked consistent prediction
    beta: float = 0.1  # semantic contrastive
    gamma: float = 0.1  # specific reconstruction
    lam: float = 0.1  # graph disentangling
    tau: float = 0.5

    def validate(self) -> None:
        if self.tau <= 0:
            raise ValidationError(f"temperature must be positive, got {self.tau}")
        for name in ("alpha", "beta", "gamma", "lam"):
            if getattr(self, name) < 0:
                raise ValidationError(f"loss weight {name} must be non-negative")


def _check_views(pred: Sequence[Tensor], target: Sequence[Tensor], w: Tensor) -> None:
    if len(pred) != len(target) or w.shape[1] != len(pred):
        raise ValidationError(
            f"{len(pred)} reconstructions, {len(target)} targets, indicator with {w.shape[1]} views"
        )
    for v, (a, b) in enumerate(zip(pred, target)):
        if a.shape != b.shape or a.shape[0] != w.shape[0]:
            raise ValidationError(f"view {v}: shapes {tuple(a.shape)} / {tuple(b.shape)} disagree")


def masked_reconstruction(pred: Sequence[Tensor], target: Sequence[Tensor], w: Tensor) -> Tensor:
    """Mean over views of the W-weighted squared error, scaled by 1/d_v per view."""
    _check_views(pred, target, w)
    b = w.shape[0]
    total = pred[0].new_zeros(())
    for v, (xp, x) in enumerate(zip(pred, target)):
        sq = ((xp - x) ** 2).sum(dim=1)
        sq = torch.where(w[:, v] > 0, sq * w[:, v], torch.zeros_like(sq))
        total = total + sq.sum() / x.shape[1]
    return total / (len(pred) * max(b, 1))


def masked_consistent_prediction_loss(
    recon: Sequence[Tensor], views: Sequence[Tensor], w: Tensor
) -> Tensor:
    return masked_reconstruction(recon, views, w)


def reconstruction_loss(recon: Sequence[Tensor], views: Sequence[Tensor], w: Tensor) -> Tensor:
    return masked_reconstruction(recon, views, w)


def _unit_rows(p: Tensor) -> Tensor:
    return p / p.norm(dim=1, keepdim=True).clamp_min(NORM_FLOOR)


def semantic_contrastive_loss(preds: Sequence[Tensor], tau: float, w: Tensor) -> Tensor:
    """Cross-view InfoNCE over per-view label predictions.

    For anchor row i of view v paired with view u, the positive is row i of
    view u; negatives are every other available row j of both v and u.
    """
    if tau <= 0:
        raise ValidationError(f"temperature must be positive, got {tau}")
    m = len(preds)
    if w.shape[1] != m:
        raise ValidationError(f"indicator has {w.shape[1]} views, got {m} prediction sets")
    b = w.shape[0]
    avail = w > 0
    unit = [_unit_rows(p) for p in preds]
    eye = torch.eye(b, dtype=torch.bool, device=w.device)
    neg_inf = torch.tensor(float("-inf"), dtype=preds[0].dtype)
    total = preds[0].new_zeros(())
    for v in range(m):
        intra = unit[v] @ unit[v].T / tau
        for u in range(m):
            if u == v:
                continue
            cross = unit[v] @ unit[u].T / tau
            anchors = avail[:, v] & avail[:, u]
            pos = torch.diagonal(cross)
            cross_neg = torch.where(~eye & avail[None, :, u], cross, neg_inf)
            intra_neg = torch.where(~eye & avail[None, :, v], intra, neg_inf)
            logits = torch.cat([pos[:, None], cross_neg, intra_neg], dim=1)
            term = torch.logsumexp(logits, dim=1) - pos
            total = total + torch.where(anchors, term, torch.zeros_like(term)).sum()
    return 0.5 * total / max(b, 1)


def masked_bce(p: Tensor, y: Tensor, g: Tensor) -> Tensor:
    """Binary cross-entropy averaged over the known (G = 1) label entries."""
    if p.shape != y.shape or p.shape != g.shape:
        raise ValidationError(f"shapes {tuple(p.shape)}, {tuple(y.shape)}, {tuple(g.shape)} disagree")
    known = g > 0
    n_known = g.sum()
    if n_known <= 0:
        raise ValidationError("no supervised labels in batch")
    ll = y * torch.log(p) + (1 - y) * torch.log(1 - p)
    ll = torch.where(known, ll * g, torch.zeros_like(ll))
    return -ll.sum() / n_known


def graph_disentangling_loss(c_bar: Tensor, specific: Sequence[Tensor], w: Tensor) -> Tensor:
    """Cosine penalty between consistent/specific rows and between specific views."""
    m = len(specific)
    if w.shape[1] != m:
        raise ValidationError(f"indicator has {w.shape[1]} views, got {m} specific sets")
    b = w.shape[0]
    counts = w.sum(dim=1)
    if torch.any(counts == 0):
        row = int(torch.nonzero(counts == 0)[0, 0])
        raise ValidationError(f"sample row {row} has no available view")
    zero = c_bar.new_zeros(b)
    first, second, pairs = zero, zero, zero
    for v in range(m):
        wv = w[:, v]
        first = first + torch.where(wv > 0, cosine(c_bar, specific[v]) * wv, zero)
        for u in range(m):
            if u == v:
                continue
            wvu = wv * w[:, u]
            second = second + torch.where(wvu > 0, cosine(specific[v], specific[u]) * wvu, zero)
            pairs = pairs + wvu
    per_row = first / counts + torch.where(pairs > 0, second / pairs.clamp_min(1.0), zero)
    return per_row.sum() / max(b, 1)


def stage1_total(ce1, cp, sc, weights: LossWeights):
    return ce1 + weights.alpha * cp + weights.beta * sc


def stage2_total(ce2, rec, gd, weights: LossWeights):
    return ce2 + weights.gamma * rec + weights.lam * gd
