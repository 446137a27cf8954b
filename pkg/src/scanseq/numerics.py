"""Deterministic loss, cost, and encoding mathematics.

Forward-value computations only (no autodiff): the supervised contrastive loss
over pooled superpoint features with temperature-free log-odds similarity, the
bipartite mask/class assignment cost with Hungarian matching, logical-OR
pooling of attention masks across stages, mask binarization, and 4D Fourier
positional features.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import expit, log_softmax, logsumexp

COSINE_CLAMP_EPS = 1e-6  # atanh(+-1) is infinite; collinear features are clamped


@dataclass(frozen=True)
class RelationMatrix:
    """Binary same-instance relation over S pooled superpoints.

    Symmetric with a zero diagonal (self-similarities are excluded). Anchors
    with no positives are excluded from the loss but still serve as contrast
    candidates for other anchors.
    """

    entries: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.entries, dtype=bool)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValueError("relation matrix must be square")
        if not np.array_equal(arr, arr.T):
            raise ValueError("relation matrix must be symmetric")
        arr = arr.copy()
        np.fill_diagonal(arr, False)
        arr.flags.writeable = False
        object.__setattr__(self, "entries", arr)

    @property
    def size(self) -> int:
        return len(self.entries)

    @property
    def anchors(self) -> np.ndarray:
        """Indices with at least one positive (the set the loss averages over)."""
        return np.nonzero(self.entries.any(axis=1))[0]

    @property
    def excluded(self) -> np.ndarray:
        return np.nonzero(~self.entries.any(axis=1))[0]


def relation_from_instance_ids(instance_ids) -> RelationMatrix:
    ids = np.asarray(instance_ids)
    return RelationMatrix(ids[:, None] == ids[None, :])


def log_odds_similarity(features: np.ndarray,
                        clamp_eps: float = COSINE_CLAMP_EPS) -> np.ndarray:
    """Pairwise 2*atanh(cosine) similarities; raises on zero-norm rows."""
    feats = np.asarray(features, dtype=np.float64)
    norms = np.linalg.norm(feats, axis=1)
    if np.any(norms == 0):
        raise ValueError("zero-norm feature")
    cos = (feats @ feats.T) / np.outer(norms, norms)
    cos = np.clip(cos, -1.0 + clamp_eps, 1.0 - clamp_eps)
    return 2.0 * np.arctanh(cos)


def contrastive_loss(features, relation: RelationMatrix) -> float:
    """Multi-positive InfoNCE over log-odds-normalized cosine similarities.

    Per anchor i with positive set P(i):
        -log( sum_{j in P(i)} exp(L_ij) / sum_{k != i} exp(L_ik) )
    averaged over anchors that have at least one positive. The positive sum
    sits inside a single log (the "out" form). Returns 0.0 when no anchor has
    a positive.
    """
    feats = np.asarray(features, dtype=np.float64)
    if len(feats) != relation.size:
        raise ValueError("features and relation matrix disagree on S")
    anchors = relation.anchors
    if anchors.size == 0:
        return 0.0
    sims = log_odds_similarity(feats)
    pos = relation.entries[anchors]
    denom_mask = ~np.eye(relation.size, dtype=bool)[anchors]
    pos_lse = logsumexp(sims[anchors], axis=1, b=pos)
    denom_lse = logsumexp(sims[anchors], axis=1, b=denom_mask)
    return float(np.mean(denom_lse - pos_lse)) + 0.0


@dataclass(frozen=True)
class AssignmentCostConfig:
    """Weights balancing the mask and class terms of the matching cost."""

    lambda_dice: float = 2.0
    lambda_bce: float = 5.0
    lambda_cls: float = 2.0
    lambda_no_object: float = 0.2

    def __post_init__(self):
        for name in ("lambda_dice", "lambda_bce", "lambda_cls", "lambda_no_object"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


@dataclass(frozen=True)
class AssignmentResult:
    cost_matrix: np.ndarray
    matches: tuple[tuple[int, int], ...]
    unmatched_predictions: tuple[int, ...]
    unmatched_ground_truth: tuple[int, ...]
    total_cost: float


def assignment_cost(pred_mask_logits, pred_class_logits, gt_masks, gt_classes,
                    cfg: AssignmentCostConfig = AssignmentCostConfig()) -> AssignmentResult:
    """Pairwise matching cost and its optimal bipartite assignment.

    cost(k, k') = lambda_dice * dice + lambda_bce * bce + lambda_cls * ce,
    with dice and bce computed on sigmoid mask probabilities and ce on
    softmaxed class logits (C+1 columns, last = no-object). The optimal
    matching is solved exactly; predictions left unmatched contribute their
    no-object cross-entropy weighted by ``lambda_no_object`` to ``total_cost``.
    """
    mask_logits = np.atleast_2d(np.asarray(pred_mask_logits, dtype=np.float64))
    class_logits = np.atleast_2d(np.asarray(pred_class_logits, dtype=np.float64))
    gt = np.atleast_2d(np.asarray(gt_masks, dtype=np.float64))
    classes = np.asarray(gt_classes, dtype=np.int64)
    n_pred, n_points = mask_logits.shape
    n_gt = len(gt)
    if class_logits.shape[0] != n_pred:
        raise ValueError("pred_class_logits rows must match pred_mask_logits")
    if gt.shape[1] != n_points:
        raise ValueError("gt_masks must share the prediction point set")
    if classes.shape != (n_gt,):
        raise ValueError("gt_classes length must match gt_masks")
    n_classes = class_logits.shape[1]
    if classes.size and (classes.min() < 0 or classes.max() >= n_classes - 1):
        raise ValueError("gt_classes must be real classes (not no-object)")

    probs = expit(mask_logits)
    inter = probs @ gt.T
    dice = 1.0 - (2.0 * inter + 1.0) / (probs.sum(1)[:, None] + gt.sum(1)[None, :] + 1.0)
    # stable BCE from logits: max(x,0) - x*g + log(1 + exp(-|x|)), averaged over points
    softplus = np.maximum(mask_logits, 0.0) + np.log1p(np.exp(-np.abs(mask_logits)))
    bce = (softplus.sum(1)[:, None] - mask_logits @ gt.T) / n_points
    log_probs = log_softmax(class_logits, axis=1)
    ce = -log_probs[:, classes]

    cost = cfg.lambda_dice * dice + cfg.lambda_bce * bce + cfg.lambda_cls * ce
    rows, cols = linear_sum_assignment(cost)
    matches = tuple(zip(rows.tolist(), cols.tolist()))
    matched_preds = set(rows.tolist())
    unmatched_preds = tuple(i for i in range(n_pred) if i not in matched_preds)
    unmatched_gt = tuple(j for j in range(n_gt) if j not in set(cols.tolist()))
    no_object = -log_probs[:, -1]
    total = float(cost[rows, cols].sum()
                  + cfg.lambda_no_object * sum(no_object[i] for i in unmatched_preds))
    return AssignmentResult(cost_matrix=cost, matches=matches,
                            unmatched_predictions=unmatched_preds,
                            unmatched_ground_truth=unmatched_gt,
                            total_cost=total)


def solve_assignment(cost_matrix) -> tuple[tuple[tuple[int, int], ...], float]:
    """Minimum-cost rectangular assignment of a raw cost matrix."""
    cost = np.atleast_2d(np.asarray(cost_matrix, dtype=np.float64))
    rows, cols = linear_sum_assignment(cost)
    return tuple(zip(rows.tolist(), cols.tolist())), float(cost[rows, cols].sum())


@dataclass(frozen=True)
class MaskHierarchyStack:
    """Per-level (coordinates, boolean masks) aligned to a feature hierarchy.

    ``levels[r]`` is a pair of an (M, 4) integer coordinate array (i, j, k, t)
    and a boolean mask of shape (M,) or (M, K) over those voxels.
    """

    levels: tuple[tuple[np.ndarray, np.ndarray], ...]

    def __post_init__(self):
        levels = []
        for coords, mask in self.levels:
            c = np.asarray(coords, dtype=np.int64)
            m = np.asarray(mask, dtype=bool)
            if c.ndim != 2 or c.shape[1] != 4:
                raise ValueError("level coordinates must have shape (M, 4)")
            levels.append((c, m))
        object.__setattr__(self, "levels", tuple(levels))


def st_pool_masks(stack: MaskHierarchyStack, level: int) -> np.ndarray:
    """OR attention masks across stages at voxels sharing (i, j, k).

    Every voxel's pooled value is the logical OR over all voxels at the same
    spatial cell (any stage); voxels with no cross-stage counterpart pass
    through unchanged. Idempotent.
    """
    if not (0 <= level < len(stack.levels)):
        raise ValueError(f"level {level} out of range")
    coords, mask = stack.levels[level]
    if len(mask) != len(coords):
        raise ValueError("misaligned level: mask rows must match coordinates")
    _, inverse = np.unique(coords[:, :3], axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)  # numpy 2.0 returned (M, 1) here
    n_groups = int(inverse.max()) + 1 if len(inverse) else 0
    if mask.ndim == 1:
        pooled = np.zeros(n_groups, dtype=bool)
    else:
        pooled = np.zeros((n_groups, mask.shape[1]), dtype=bool)
    np.logical_or.at(pooled, inverse, mask)
    return pooled[inverse]


def binarize_masks(superpoint_features, query_embeddings) -> np.ndarray:
    """Sigmoid(dot) > 0.5 mask decisions, i.e. strictly positive dot products."""
    feats = np.atleast_2d(np.asarray(superpoint_features, dtype=np.float64))
    queries = np.atleast_2d(np.asarray(query_embeddings, dtype=np.float64))
    if feats.shape[1] != queries.shape[1]:
        raise ValueError("feature and query dimensions differ")
    return feats @ queries.T > 0.0


def gaussian_projection_matrix(d_out: int, seed: int, scale: float = 1.0) -> np.ndarray:
    """The shared Gaussian matrix for Fourier features, drawn once per seed."""
    if d_out % 2:
        raise ValueError("d_out must be even (paired sin/cos channels)")
    rng = np.random.default_rng(seed)
    return rng.normal(0.0, scale, size=(d_out // 2, 4))


def fourier_features_4d(coords, gaussian_matrix: Optional[np.ndarray] = None, *,
                        d_out: Optional[int] = None, seed: Optional[int] = None,
                        scale: float = 1.0) -> np.ndarray:
    """[sin(2*pi*G*c); cos(2*pi*G*c)] positional features for (x, y, z, t).

    Coordinates are expected normalized to [0, 1]^4 per hierarchy level. Pass
    an explicit ``gaussian_matrix`` (D/2 x 4) to share one projection across
    levels and stages, or ``d_out``/``seed`` to draw it here.
    """
    pts = np.atleast_2d(np.asarray(coords, dtype=np.float64))
    if pts.shape[1] != 4:
        raise ValueError("coords must have shape (N, 4)")
    if gaussian_matrix is None:
        if d_out is None or seed is None:
            raise ValueError("provide gaussian_matrix or both d_out and seed")
        gaussian_matrix = gaussian_projection_matrix(d_out, seed, scale)
    g = np.asarray(gaussian_matrix, dtype=np.float64)
    if g.ndim != 2 or g.shape[1] != 4:
        raise ValueError("gaussian_matrix must have shape (D/2, 4)")
    proj = 2.0 * np.pi * (pts @ g.T)
    return np.concatenate([np.sin(proj), np.cos(proj)], axis=1)
