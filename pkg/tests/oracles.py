"""Independent reference implementations used only to check the package.

Everything here is deliberately written in plain Python (sets, loops, math)
from the declared contracts, sharing no code paths with scanseq itself.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


# ---------------------------------------------------------------------------
# Standard single-stage mAP (reference for the T=1 reduction)


def reference_single_stage_ap(gt_items, pred_items, tau):
    """AP for one class at one threshold on a single-stage scene.

    gt_items: list of point sets; pred_items: list of (confidence, point set),
    any order. Returns None when there is neither ground truth nor predictions.
    """
    if not gt_items and not pred_items:
        return None
    if not gt_items:
        return 0.0
    order = sorted(range(len(pred_items)),
                   key=lambda i: (-pred_items[i][0], i))
    claimed = set()
    labels = []
    for i in order:
        _, points = pred_items[i]
        best_j, best_iou = -1, tau
        for j, gt_points in enumerate(gt_items):
            if j in claimed:
                continue
            inter = len(points & gt_points)
            union = len(points | gt_points)
            iou = inter / union if union else 0.0
            if iou > best_iou:
                best_iou, best_j = iou, j
        if best_j >= 0:
            claimed.add(best_j)
            labels.append(True)
        else:
            labels.append(False)
    return envelope_average_precision(labels, len(gt_items))


def envelope_average_precision(labels, n_gt):
    """Area under the monotone-envelope PR curve, computed with plain loops."""
    if n_gt == 0:
        return None if not labels else 0.0
    points = []
    tp = fp = 0
    for is_tp in labels:
        if is_tp:
            tp += 1
        else:
            fp += 1
        points.append((tp / n_gt, tp / (tp + fp)))
    ap = 0.0
    prev_recall = 0.0
    for idx, (recall, _) in enumerate(points):
        best = max(p for r, p in points[idx:])
        ap += (recall - prev_recall) * best
        prev_recall = recall
    return ap


def reference_single_stage_map(gt_by_class, preds_by_class, taus):
    """Per-class AP table {class: {tau: ap}} for a single-stage scene."""
    classes = sorted(set(gt_by_class) | set(preds_by_class))
    return {
        c: {tau: reference_single_stage_ap(gt_by_class.get(c, []),
                                           preds_by_class.get(c, []), tau)
            for tau in taus}
        for c in classes
    }


# ---------------------------------------------------------------------------
# Straight-line transcription of the ambiguous-assignment procedure


def transcribe_ambiguous_assignment(weights, present, seed):
    """The greedy assignment plus random fill, written as nested loops.

    weights: nested lists [p][k][t]; present: nested lists [k][t] of bool.
    Mirrors the declared random-fill protocol: one default_rng(seed), stages
    ascending, members ascending, uniform draw over open trajectory cells.
    """
    W = [[[float(w) for w in row] for row in pred] for pred in weights]
    n_preds = len(W)
    n_members = len(present)
    n_stages = len(present[0]) if n_members else 0
    A = [[-1] * n_stages for _ in range(n_members)]
    for traj in range(n_members):
        if n_preds == 0:
            break
        totals = []
        for p in range(n_preds):
            total = 0.0
            for t in range(n_stages):
                total += max(W[p][k][t] for k in range(n_members))
            totals.append(total)
        p_star = _argmax_lowest(totals)
        for t in range(n_stages):
            k_star = _argmax_lowest([W[p_star][k][t] for k in range(n_members)])
            if W[p_star][k_star][t] > 0:
                A[traj][t] = k_star
                for p in range(n_preds):
                    W[p][k_star][t] = 0.0
                for k in range(n_members):
                    W[p_star][k][t] = 0.0
    rng = np.random.default_rng(seed)
    for t in range(n_stages):
        claimed = {A[i][t] for i in range(n_members) if A[i][t] >= 0}
        open_rows = [i for i in range(n_members) if A[i][t] < 0]
        for k in range(n_members):
            if present[k][t] and k not in claimed:
                j = int(rng.integers(len(open_rows)))
                A[open_rows.pop(j)][t] = k
    return A


def _argmax_lowest(values):
    """argmax with lowest-index tie-break, spelled out."""
    best = values[0]
    best_i = 0
    for i, v in enumerate(values):
        if v > best:
            best, best_i = v, i
    return best_i


# ---------------------------------------------------------------------------
# Scalar contrastive loss (Eq.-level evaluation)


def scalar_contrastive_loss(features, positive_sets, clamp_eps=1e-6):
    """features: list of vectors; positive_sets: {anchor: iterable of positives}."""
    def cosine(a, b):
        num = sum(x * y for x, y in zip(a, b))
        na = math.sqrt(sum(x * x for x in a))
        nb = math.sqrt(sum(x * x for x in b))
        return num / (na * nb)

    def log_odds(a, b):
        c = cosine(a, b)
        c = max(-1.0 + clamp_eps, min(1.0 - clamp_eps, c))
        return 2.0 * math.atanh(c)

    anchors = [i for i, pos in positive_sets.items() if pos]
    if not anchors:
        return 0.0
    total = 0.0
    for i in anchors:
        numerator = sum(math.exp(log_odds(features[i], features[j]))
                        for j in positive_sets[i])
        denominator = sum(math.exp(log_odds(features[i], features[k]))
                          for k in range(len(features)) if k != i)
        total += -math.log(numerator / denominator)
    return total / len(anchors)


# ---------------------------------------------------------------------------
# Brute-force assignment, nearest neighbor, voxel count


def brute_force_assignment(cost):
    """Minimum-total injection of the smaller side into the larger.

    Totals use math.fsum so the comparison is exact regardless of
    summation order on the caller's side.
    """
    cost = [list(map(float, row)) for row in cost]
    n_rows, n_cols = len(cost), len(cost[0])
    best = math.inf
    if n_rows <= n_cols:
        for cols in itertools.permutations(range(n_cols), n_rows):
            best = min(best, math.fsum(cost[r][c] for r, c in enumerate(cols)))
    else:
        for rows in itertools.permutations(range(n_rows), n_cols):
            best = min(best, math.fsum(cost[r][c] for c, r in enumerate(rows)))
    return best


def brute_force_nearest(source, query):
    """Index of nearest source point per query point, lowest index on ties."""
    out = []
    for q in query:
        dists = [sum((a - b) ** 2 for a, b in zip(p, q)) for p in source]
        out.append(dists.index(min(dists)))
    return out


def brute_force_voxel_count(stage_positions, resolution):
    """Hash-set oracle: number of distinct 4D voxel keys."""
    keys = set()
    for t, positions in enumerate(stage_positions):
        for p in positions:
            keys.add((math.floor(p[0] / resolution),
                      math.floor(p[1] / resolution),
                      math.floor(p[2] / resolution), t))
    return len(keys)
