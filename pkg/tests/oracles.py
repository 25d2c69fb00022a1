"""Slow, loop-based reference implementations used only by the tests."""

import math

import numpy as np


# ------------------------------------------------------------------- metrics


def _avg_rank(scores, j):
    greater = sum(1 for s in scores if s > scores[j])
    equal = sum(1 for s in scores if s == scores[j])
    return greater + (equal + 1) / 2.0


def brute_force_metrics(scores, labels):
    """Per-sample enumeration of every rank and every (relevant, irrelevant) pair."""
    scores = [list(map(float, r)) for r in scores]
    labels = [[int(round(v)) for v in r] for r in labels]
    n, c = len(scores), len(scores[0])
    ap_vals, cov_vals, rl_vals, auc_vals = [], [], [], []
    hl_miss, oe_miss = 0, 0
    for s, y in zip(scores, labels):
        rel = [j for j in range(c) if y[j] == 1]
        irr = [j for j in range(c) if y[j] == 0]
        for j in range(c):
            hl_miss += int((s[j] >= 0.5) != (y[j] == 1))
        top = max(range(c), key=lambda j: (s[j], -j))
        oe_miss += int(y[top] == 0)
        if rel:
            precs = []
            for j in rel:
                rank = _avg_rank(s, j)
                above = sum(1 for k in rel if s[k] > s[j])
                level = sum(1 for k in rel if s[k] == s[j])
                precs.append((above + (level + 1) / 2.0) / rank)
            ap_vals.append(sum(precs) / len(precs))
            cov_vals.append((max(_avg_rank(s, j) for j in rel) - 1) / c)
        if rel and irr:
            wrong = right = ties = 0
            for a in rel:
                for b in irr:
                    if s[a] > s[b]:
                        right += 1
                    else:
                        wrong += 1
                    if s[a] == s[b]:
                        ties += 1
            total = len(rel) * len(irr)
            rl_vals.append(wrong / total)
            auc_vals.append((right + 0.5 * ties) / total)
    return {
        "AP": sum(ap_vals) / len(ap_vals),
        "one_minus_HL": 1 - hl_miss / (n * c),
        "one_minus_RL": 1 - sum(rl_vals) / len(rl_vals),
        "AUC": sum(auc_vals) / len(auc_vals),
        "one_minus_OE": 1 - oe_miss / n,
        "one_minus_Cov": 1 - sum(cov_vals) / len(cov_vals),
    }


# -------------------------------------------------------------------- losses


def _cos(a, b):
    na = max(math.sqrt(sum(x * x for x in a)), 1e-12)
    nb = max(math.sqrt(sum(x * x for x in b)), 1e-12)
    return sum(x * y for x, y in zip(a, b)) / (na * nb)


def brute_force_contrastive(preds, tau, w):
    """Term-by-term evaluation: for each ordered view pair and anchor, list positives and negatives."""
    m = len(preds)
    n = len(preds[0])
    total = 0.0
    for v in range(m):
        for u in range(m):
            if u == v:
                continue
            for i in range(n):
                if not (w[i][v] and w[i][u]):
                    continue
                pos = math.exp(_cos(preds[v][i], preds[u][i]) / tau)
                neg = 0.0
                for r in (u, v):
                    for j in range(n):
                        if j != i and w[j][r]:
                            neg += math.exp(_cos(preds[v][i], preds[r][j]) / tau)
                total += -math.log(pos / (pos + neg))
    return 0.5 * total / n


def brute_force_disentangling(c_bar, specific, w):
    n, m = len(c_bar), len(specific)
    total = 0.0
    for i in range(n):
        avail = [v for v in range(m) if w[i][v]]
        first = sum(_cos(c_bar[i], specific[v][i]) for v in avail) / len(avail)
        pairs = [(v, u) for v in avail for u in avail if u != v]
        second = sum(_cos(specific[v][i], specific[u][i]) for v, u in pairs) / len(pairs) if pairs else 0.0
        total += first + second
    return total / n


def brute_force_reconstruction(recon, views, w):
    m, n = len(views), len(views[0])
    total = 0.0
    for v in range(m):
        d = len(views[v][0])
        acc = 0.0
        for i in range(n):
            if w[i][v]:
                acc += sum((a - b) ** 2 for a, b in zip(recon[v][i], views[v][i]))
        total += acc / d
    return total / (m * n)


def brute_force_bce(p, y, g):
    num, den = 0.0, 0.0
    for pr, yr, gr in zip(p, y, g):
        for pj, yj, gj in zip(pr, yr, gr):
            if gj:
                num += yj * math.log(pj) + (1 - yj) * math.log(1 - pj)
                den += 1
    return -num / den


# ------------------------------------------------------------ finite differences


def central_difference(fn, params, step=1e-5):
    """Gradient of scalar ``fn()`` w.r.t. each tensor in ``params`` by central differences.

    ``params`` are perturbed in place and restored.
    """
    import torch

    grads = []
    with torch.no_grad():
        for p in params:
            flat = p.view(-1)
            g = torch.zeros_like(flat)
            for k in range(flat.numel()):
                orig = flat[k].item()
                flat[k] = orig + step
                plus = float(fn())
                flat[k] = orig - step
                minus = float(fn())
                flat[k] = orig
                g[k] = (plus - minus) / (2 * step)
            grads.append(g.view_as(p))
    return grads


def relative_error(a, b):
    a = np.concatenate([np.ravel(x) for x in a])
    b = np.concatenate([np.ravel(x) for x in b])
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    if scale < 1e-10:
        return 0.0
    return float(np.linalg.norm(a - b) / scale)
