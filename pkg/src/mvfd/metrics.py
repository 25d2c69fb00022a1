"""Instance-wise multi-label metrics, all reported so that higher is better.

Conventions:

* ranks are descending and tied scores share their average rank (AP, coverage);
* a (relevant, irrelevant) pair counts as mis-ordered for the ranking loss when
  the relevant score is not strictly larger; AUC counts ties as half-correct;
* Hamming predictions threshold at ``score >= 0.5``;
* RL and AUC skip rows without both a relevant and an irrelevant label,
  AP and coverage skip rows without a relevant label, HL and OE use every row.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import ValidationError

FIELDS = ("AP", "one_minus_HL", "one_minus_RL", "AUC", "one_minus_OE", "one_minus_Cov")


@dataclass
class MetricsReport:
    AP: float
    one_minus_HL: float
    one_minus_RL: float
    AUC: float
    one_minus_OE: float
    one_minus_Cov: float

    def as_dict(self) -> dict[str, float]:
        return asdict(self)


def _average_desc_ranks(scores: np.ndarray) -> np.ndarray:
    # rank_j = #{k: s_k > s_j} + (#{k: s_k == s_j} + 1) / 2
    greater = (scores[:, None, :] > scores[:, :, None]).sum(axis=2)
    equal = (scores[:, None, :] == scores[:, :, None]).sum(axis=2)
    return greater + (equal + 1) / 2.0


def _row_stats(s: np.ndarray, rel: np.ndarray) -> tuple[np.ndarray, ...]:
    """Per-row AP, coverage depth, ranking loss and AUC (NaN where undefined)."""
    c = s.shape[1]
    n_rel = rel.sum(axis=1)
    n_irr = c - n_rel
    ranks = _average_desc_ranks(s)
    # same construction restricted to relevant labels gives "relevant at or above"
    above = (s[:, None, :] > s[:, :, None]) & rel[:, None, :]
    level = (s[:, None, :] == s[:, :, None]) & rel[:, None, :]
    rel_ranks = above.sum(axis=2) + (level.sum(axis=2) + 1) / 2.0
    with np.errstate(invalid="ignore", divide="ignore"):
        ap = np.where(rel, rel_ranks / ranks, 0.0).sum(axis=1) / n_rel
        deepest = np.where(rel, ranks, -np.inf).max(axis=1)
        cov = np.where(n_rel > 0, (deepest - 1.0) / c, np.nan)

        # diff[i, a, b] = s[i, a] - s[i, b] for a relevant, b irrelevant
        diff = s[:, :, None] - s[:, None, :]
        pair_mask = rel[:, :, None] & ~rel[:, None, :]
        n_pairs = (n_rel * n_irr).astype(np.float64)
        n_pairs[n_pairs == 0] = np.nan
        wrong = ((diff <= 0) & pair_mask).sum(axis=(1, 2))
        right = ((diff > 0) & pair_mask).sum(axis=(1, 2))
        ties = ((diff == 0) & pair_mask).sum(axis=(1, 2))
        rl = wrong / n_pairs
        auc = (right + 0.5 * ties) / n_pairs
    return ap, cov, rl, auc


def evaluate(scores, labels, chunk_elems: int = 2_000_000) -> MetricsReport:
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if s.shape != y.shape or s.ndim != 2:
        raise ValidationError(f"score shape {s.shape} and label shape {y.shape} disagree")
    if s.shape[0] == 0:
        raise ValidationError("no rows to evaluate")
    n, c = s.shape
    rel = y > 0.5

    hl = np.mean((s >= 0.5) != rel)
    top = np.argmax(s, axis=1)
    oe = np.mean(~rel[np.arange(n), top])

    step = max(1, chunk_elems // (c * c))
    parts = [_row_stats(s[i : i + step], rel[i : i + step]) for i in range(0, n, step)]
    ap, cov, rl, auc = (np.concatenate(col) for col in zip(*parts))
    if np.all(np.isnan(rl)):
        raise ValidationError("no row has both relevant and irrelevant labels")

    return MetricsReport(
        AP=float(np.nanmean(ap)),
        one_minus_HL=float(1.0 - hl),
        one_minus_RL=float(1.0 - np.nanmean(rl)),
        AUC=float(np.nanmean(auc)),
        one_minus_OE=float(1.0 - oe),
        one_minus_Cov=float(1.0 - np.nanmean(cov)),
    )


def summarize(reports: list[MetricsReport]) -> dict[str, dict[str, float]]:
    """Mean and population standard deviation of each field across runs."""
    if not reports:
        raise ValidationError("nothing to summarize")
    table = np.array([[getattr(r, f) for f in FIELDS] for r in reports])
    return {
        "mean": dict(zip(FIELDS, map(float, table.mean(axis=0)))),
        "std": dict(zip(FIELDS, map(float, table.std(axis=0)))),
    }
