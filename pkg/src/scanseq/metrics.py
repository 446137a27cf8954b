"""Temporally-enforced instance segmentation metrics.

The headline quantity is t-IoU: the minimum over temporal stages of the
per-stage point-set IoU between a prediction and a ground-truth instance.
Stages where both masks are absent are excluded; a stage where exactly one of
the two is present contributes 0. A detection at threshold tau requires
t-IoU > tau, so one bad stage sinks the match — this is what rewards temporal
identity consistency and penalizes switches, merges, and fragmentations.

Ambiguous ground-truth groups (visually indistinguishable objects) are
pseudo-disambiguated before matching: a greedy, prediction-guided assignment
partitions the group's per-stage components into trajectories so that
symmetric identity swaps are not penalized while merges still are. See
:func:`assign_ambiguous_components` for the exact procedure.

Scoring follows standard mAP machinery: greedy matching in descending
confidence order, per-class average precision as the area under the
monotone-envelope precision/recall curve, averaged over classes and over the
threshold sweep {0.50, 0.55, ..., 0.95}. With a single-stage sequence the
whole pipeline reduces to standard mAP.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .model import (AmbiguousGroup, ChangeType, GroundTruthAnnotation,
                    InstanceMask, SequencePointCloud)

SWEEP_THRESHOLDS = tuple(round(0.50 + 0.05 * i, 2) for i in range(10))
DEFAULT_THRESHOLDS = tuple(sorted({0.25, 0.5, *SWEEP_THRESHOLDS}))


class SequenceMismatchError(ValueError):
    """Predictions and ground truth belong to different sequences."""


# ---------------------------------------------------------------------------
# t-IoU


@dataclass(frozen=True)
class IoUProfile:
    """Per-stage IoU between one prediction and one ground-truth instance.

    ``per_stage_iou`` covers exactly the contributing stages (those where at
    least one of the two masks is present). ``overall_iou`` is the IoU of the
    stage-tagged unions; ``t_iou`` is the minimum over contributing stages
    (0.0 when nothing contributes).
    """

    per_stage_iou: Mapping[int, float]
    overall_iou: float
    t_iou: float


def _stage_intersection(a: np.ndarray, b: np.ndarray) -> int:
    return np.intersect1d(a, b, assume_unique=True).size


def t_iou(pred: InstanceMask, gt: InstanceMask) -> IoUProfile:
    """Temporal IoU profile of a prediction against a ground-truth instance."""
    stages = sorted(set(pred.per_stage_points) | set(gt.per_stage_points))
    per_stage: dict[int, float] = {}
    inter_total = 0
    union_total = 0
    for t in stages:
        p = pred.per_stage_points.get(t)
        g = gt.per_stage_points.get(t)
        if p is None or g is None:
            per_stage[t] = 0.0
            union_total += (p.size if p is not None else g.size)
            continue
        inter = _stage_intersection(p, g)
        union = p.size + g.size - inter
        per_stage[t] = inter / union
        inter_total += inter
        union_total += union
    overall = inter_total / union_total if union_total else 0.0
    value = min(per_stage.values()) if per_stage else 0.0
    return IoUProfile(per_stage_iou=per_stage, overall_iou=overall, t_iou=value)


def overlap_candidates(preds: Sequence[InstanceMask], gts: Sequence[InstanceMask],
                       class_id: int) -> dict[int, tuple[int, ...]]:
    """Map each ground-truth instance to the predictions overlapping it.

    A prediction is a candidate for gt_j when their any-stage union IoU is
    positive, i.e. they share at least one (stage, point). Only masks of
    ``class_id`` participate; a prediction may appear in several candidate
    sets. Keys/values are instance ids.
    """
    class_preds = [p for p in preds if p.class_id == class_id]
    out: dict[int, tuple[int, ...]] = {}
    for g in gts:
        if g.class_id != class_id:
            continue
        hits = []
        for p in class_preds:
            for t, gpts in g.per_stage_points.items():
                ppts = p.per_stage_points.get(t)
                if ppts is not None and _stage_intersection(ppts, gpts):
                    hits.append(p.instance_id)
                    break
        out[g.instance_id] = tuple(hits)
    return out


# ---------------------------------------------------------------------------
# Ambiguous-group pseudo-disambiguation


def assign_ambiguous_components(weights, present, rng: np.random.Generator) -> np.ndarray:
    """Greedy prediction-guided assignment of group components to trajectories.

    ``weights`` has shape (P, K, T): support of prediction p for member k at
    stage t (per-stage IoU times prediction confidence; must be 0 wherever
    ``present[k, t]`` is False). ``present`` marks which members exist at
    which stages.

    Iterates K times: pick the prediction with the highest total support
    (sum over stages of the best member weight; ties -> lowest prediction
    index), then claim, per stage, its best-supported member (ties -> lowest
    member index) when the weight is positive, zeroing the claimed member
    column and the prediction's row at that stage. Afterwards every still
    unclaimed present component is assigned to a random unassigned trajectory
    cell using ``rng``.

    Returns the (K, T) assignment matrix of member indices, -1 where a
    trajectory has no component at that stage.
    """
    W = np.array(weights, dtype=np.float64, copy=True)
    if W.ndim != 3:
        raise ValueError("weights must have shape (P, K, T)")
    n_preds, n_members, n_stages = W.shape
    pres = np.asarray(present, dtype=bool)
    if pres.shape != (n_members, n_stages):
        raise ValueError("present must have shape (K, T)")
    A = np.full((n_members, n_stages), -1, dtype=np.int64)
    for i in range(n_members):
        if n_preds == 0:
            break
        totals = W.max(axis=1).sum(axis=1)
        p_star = int(np.argmax(totals))
        for t in range(n_stages):
            k_star = int(np.argmax(W[p_star, :, t]))
            if W[p_star, k_star, t] > 0:
                A[i, t] = k_star
                W[:, k_star, t] = 0.0
                W[p_star, :, t] = 0.0
    for t in range(n_stages):
        claimed = set(A[:, t][A[:, t] >= 0].tolist())
        open_rows = [i for i in range(n_members) if A[i, t] < 0]
        for k in range(n_members):
            if pres[k, t] and k not in claimed:
                j = int(rng.integers(len(open_rows)))
                A[open_rows.pop(j), t] = k
    return A


@dataclass(frozen=True)
class DisambiguationResult:
    """Trajectories replacing an ambiguous group's members for evaluation.

    ``assignment[i, s]`` is the member index (into ``member_ids``) whose
    component at ``stages[s]`` belongs to trajectory i, or -1. Trajectories
    that received no component are not materialized; ``trajectory_rows`` maps
    each mask in ``trajectories`` back to its assignment row. Trajectory masks
    carry synthetic negative instance ids local to the group.
    """

    member_ids: tuple[int, ...]
    stages: tuple[int, ...]
    assignment: np.ndarray
    trajectories: tuple[InstanceMask, ...]
    trajectory_rows: tuple[int, ...]
    matched_predictions: Mapping[int, tuple[int, ...]]


def disambiguate(group: AmbiguousGroup, gts: Sequence[InstanceMask],
                 candidate_preds: Sequence[InstanceMask],
                 rng_seed: int = 0) -> DisambiguationResult:
    """Pseudo-disambiguate one ambiguous group, guided by its predictions.

    ``gts`` must contain every group member; ``candidate_preds`` are the
    predictions overlapping any member (same class). The weight of prediction
    p for member k at stage t is the per-stage IoU times p's confidence. The
    random fill of unclaimed components draws from
    ``numpy.random.default_rng(rng_seed)``: stages in ascending order, members
    in ascending index order, each placed at a uniformly drawn open trajectory
    cell.
    """
    by_id = {m.instance_id: m for m in gts}
    members = [by_id[i] for i in group.member_instance_ids]
    stages = sorted({t for m in members for t in m.per_stage_points})
    n_members, n_stages = len(members), len(stages)
    preds = list(candidate_preds)

    W = np.zeros((len(preds), n_members, n_stages))
    present = np.zeros((n_members, n_stages), dtype=bool)
    for k, member in enumerate(members):
        for s, t in enumerate(stages):
            gpts = member.per_stage_points.get(t)
            if gpts is None:
                continue
            present[k, s] = True
            for p_idx, pred in enumerate(preds):
                ppts = pred.per_stage_points.get(t)
                if ppts is None:
                    continue
                inter = _stage_intersection(ppts, gpts)
                if inter:
                    union = ppts.size + gpts.size - inter
                    W[p_idx, k, s] = (inter / union) * pred.confidence

    rng = np.random.default_rng(rng_seed)
    A = assign_ambiguous_components(W, present, rng)

    trajectories = []
    rows = []
    for i in range(n_members):
        per_stage = {}
        for s, t in enumerate(stages):
            k = A[i, s]
            if k >= 0:
                per_stage[t] = members[k].per_stage_points[t]
        if per_stage:
            trajectories.append(InstanceMask(
                instance_id=-(i + 1), class_id=members[0].class_id,
                per_stage_points=per_stage, confidence=1.0))
            rows.append(i)

    matched = {}
    for idx, traj in enumerate(trajectories):
        hits = []
        for pred in preds:
            if any(_stage_intersection(pred.per_stage_points.get(t, _EMPTY), pts)
                   for t, pts in traj.per_stage_points.items()):
                hits.append(pred.instance_id)
        matched[idx] = tuple(hits)

    return DisambiguationResult(
        member_ids=tuple(group.member_instance_ids), stages=tuple(stages),
        assignment=A, trajectories=tuple(trajectories),
        trajectory_rows=tuple(rows), matched_predictions=matched)


_EMPTY = np.empty(0, dtype=np.int64)


# ---------------------------------------------------------------------------
# Detection assignment and average precision


@dataclass(frozen=True)
class DetectionAssignment:
    """Greedy matching outcome for one class at one threshold.

    ``order`` lists prediction instance ids in processing order (descending
    confidence, ties by ascending id); ``is_tp`` aligns with it.
    """

    order: tuple[int, ...]
    is_tp: tuple[bool, ...]
    matched_gt: Mapping[int, int]
    false_negatives: tuple[int, ...]

    @property
    def true_positive_pairs(self) -> tuple[tuple[int, int], ...]:
        return tuple(sorted(self.matched_gt.items()))


def _greedy_match(tiou: np.ndarray, pred_order: Sequence[int],
                  tau: float) -> tuple[np.ndarray, np.ndarray]:
    """Row indices claim columns greedily; returns (is_tp, matched column or -1)."""
    n_gts = tiou.shape[1]
    claimed = np.zeros(n_gts, dtype=bool)
    is_tp = np.zeros(len(pred_order), dtype=bool)
    matched = np.full(len(pred_order), -1, dtype=np.int64)
    for pos, row in enumerate(pred_order):
        values = tiou[row]
        eligible = (values > tau) & ~claimed  # strict threshold
        if eligible.any():
            col = int(np.argmax(np.where(eligible, values, -1.0)))  # ties: lowest
            claimed[col] = True
            is_tp[pos] = True
            matched[pos] = col
    return is_tp, matched


def assign_detections(preds: Sequence[InstanceMask], gts: Sequence[InstanceMask],
                      tau: float) -> DetectionAssignment:
    """Greedy descending-confidence matching at threshold ``tau``.

    A prediction becomes a true positive against the unclaimed ground truth
    with the highest t-IoU among those exceeding ``tau``; every ground truth
    is claimed at most once. Disambiguation is assumed already applied and all
    masks share one class.
    """
    gts = list(gts)
    preds = list(preds)
    order = sorted(range(len(preds)),
                   key=lambda i: (-preds[i].confidence, preds[i].instance_id))
    tiou = np.zeros((len(preds), len(gts)))
    for i, p in enumerate(preds):
        for j, g in enumerate(gts):
            tiou[i, j] = t_iou(p, g).t_iou
    is_tp, matched = _greedy_match(tiou, order, tau)
    matched_gt = {preds[order[pos]].instance_id: gts[matched[pos]].instance_id
                  for pos in range(len(order)) if is_tp[pos]}
    fn = tuple(g.instance_id for j, g in enumerate(gts) if j not in set(matched[matched >= 0].tolist()))
    return DetectionAssignment(
        order=tuple(preds[i].instance_id for i in order),
        is_tp=tuple(bool(b) for b in is_tp),
        matched_gt=matched_gt, false_negatives=fn)


def average_precision(tp_labels: Sequence[bool], n_gt: int) -> Optional[float]:
    """Area under the monotone-envelope PR curve.

    ``tp_labels`` must already be in descending-confidence order. With no
    ground truth, returns None when there are also no predictions (class
    excluded from means) and 0.0 otherwise.
    """
    labels = np.asarray(tp_labels, dtype=bool)
    if n_gt == 0:
        return None if labels.size == 0 else 0.0
    if labels.size == 0 or not labels.any():
        return 0.0
    tp = np.cumsum(labels)
    fp = np.cumsum(~labels)
    precision = tp / (tp + fp)
    recall = tp / n_gt
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    steps = np.diff(np.concatenate(([0.0], recall)))
    return float(np.sum(steps * envelope))


# ---------------------------------------------------------------------------
# Prediction overlap resolution


def resolve_prediction_overlaps(preds: Sequence[InstanceMask],
                                seq: SequencePointCloud) -> list[InstanceMask]:
    """Make prediction masks disjoint per stage.

    Contested points go to the higher-confidence mask (ties: lower instance
    id). Output order matches the input; masks may lose stages or end up
    empty, but are never dropped.
    """
    priority = sorted(range(len(preds)),
                      key=lambda i: (-preds[i].confidence, preds[i].instance_id))
    taken = {t: np.zeros(s.point_count, dtype=bool)
             for t, s in enumerate(seq.stages)}
    kept: list[Optional[dict[int, np.ndarray]]] = [None] * len(preds)
    for i in priority:
        mask = preds[i]
        new_points = {}
        for t, pts in mask.per_stage_points.items():
            free = ~taken[t][pts]
            keep = pts[free]
            if keep.size:
                taken[t][keep] = True
                new_points[t] = keep
        kept[i] = new_points
    return [InstanceMask(instance_id=m.instance_id, class_id=m.class_id,
                         per_stage_points=kept[i], confidence=m.confidence)
            for i, m in enumerate(preds)]


# ---------------------------------------------------------------------------
# Full evaluation


@dataclass(frozen=True)
class EvaluationReport:
    """Per-class AP across thresholds plus the headline temporal metrics."""

    sequence_id: str
    num_stages: int
    thresholds: tuple[float, ...]
    class_ids: tuple[int, ...]
    per_class_ap: Mapping[int, Mapping[float, Optional[float]]]
    t_map: Optional[float]
    t_map50: Optional[float]
    t_map25: Optional[float]
    per_change_recall: Mapping[ChangeType, Optional[float]]
    counts: Mapping[int, Mapping[float, tuple[int, int, int]]]
    pr_curves: Mapping[int, Mapping[float, tuple[tuple[float, float], ...]]]
    n_ground_truth: Mapping[int, int]

    def class_ap(self, class_id: int, tau: float) -> Optional[float]:
        return self.per_class_ap[class_id][tau]


class _ClassEvaluation:
    """Stage-intersection tables for one class, trajectories included."""

    def __init__(self, preds: list[InstanceMask], gt_masks: list[InstanceMask],
                 gt_labels: list[Optional[ChangeType]], stage_sizes: Sequence[int]):
        self.preds = preds
        self.gt_masks = gt_masks
        self.gt_labels = gt_labels
        self.pred_order = sorted(
            range(len(preds)), key=lambda i: (-preds[i].confidence, preds[i].instance_id))
        self.tiou = _tiou_matrix(preds, gt_masks, stage_sizes)


def _stage_tables(preds: Sequence[InstanceMask], gts: Sequence[InstanceMask],
                  stage_sizes: Sequence[int]):
    """Per-stage intersection-count matrices via label arrays (O(total points))."""
    stages = sorted({t for m in (*preds, *gts) for t in m.per_stage_points})
    inter = {}
    for t in stages:
        table = np.zeros((len(preds), len(gts)), dtype=np.int64)
        if gts:
            label = np.full(stage_sizes[t], -1, dtype=np.int64)
            for j, g in enumerate(gts):
                pts = g.per_stage_points.get(t)
                if pts is not None:
                    label[pts] = j
            for i, p in enumerate(preds):
                pts = p.per_stage_points.get(t)
                if pts is None:
                    continue
                hits = label[pts]
                hits = hits[hits >= 0]
                if hits.size:
                    table[i] = np.bincount(hits, minlength=len(gts))
        inter[t] = table
    psize = {t: np.array([p.points_at(t).size for p in preds]) for t in stages}
    gsize = {t: np.array([g.points_at(t).size for g in gts]) for t in stages}
    return stages, inter, psize, gsize


def _tiou_from_tables(stages, inter, psize, gsize) -> tuple[np.ndarray, np.ndarray]:
    """(t_iou, overall_iou) matrices from per-stage tables."""
    if not stages:
        shape = next(iter(inter.values())).shape if inter else (0, 0)
        return np.zeros(shape), np.zeros(shape)
    n_preds = len(psize[stages[0]])
    n_gts = len(gsize[stages[0]])
    tiou = np.ones((n_preds, n_gts))
    contributing = np.zeros((n_preds, n_gts), dtype=bool)
    inter_sum = np.zeros((n_preds, n_gts))
    union_sum = np.zeros((n_preds, n_gts))
    for t in stages:
        pp = psize[t][:, None] > 0
        gp = gsize[t][None, :] > 0
        either = pp | gp
        both = pp & gp
        union = psize[t][:, None] + gsize[t][None, :] - inter[t]
        with np.errstate(invalid="ignore", divide="ignore"):
            iou_t = np.where(both, inter[t] / np.where(union > 0, union, 1), 0.0)
        tiou = np.where(either, np.minimum(tiou, iou_t), tiou)
        contributing |= either
        inter_sum += inter[t]
        union_sum += np.where(either, union, 0)
    tiou = np.where(contributing, tiou, 0.0)
    overall = np.where(union_sum > 0, inter_sum / np.where(union_sum > 0, union_sum, 1), 0.0)
    return tiou, overall


def _tiou_matrix(preds: Sequence[InstanceMask], gts: Sequence[InstanceMask],
                 stage_sizes: Sequence[int]) -> np.ndarray:
    stages, inter, psize, gsize = _stage_tables(preds, gts, stage_sizes)
    if not stages:
        return np.zeros((len(preds), len(gts)))
    return _tiou_from_tables(stages, inter, psize, gsize)[0]


def _trajectory_label(member_ids: Iterable[int],
                      change_labels: Mapping[int, ChangeType]) -> Optional[ChangeType]:
    labels = {change_labels.get(mid) for mid in member_ids}
    labels.discard(None)
    if not labels:
        return None
    if len(labels) == 1:
        return labels.pop()
    return ChangeType.AMBIGUOUS


def _build_class_evaluation(class_id: int, gt: GroundTruthAnnotation,
                            preds: Sequence[InstanceMask],
                            seq: SequencePointCloud,
                            rng_seed: int) -> _ClassEvaluation:
    stage_sizes = seq.stage_sizes()
    class_preds = sorted((p for p in preds if p.class_id == class_id),
                         key=lambda m: m.instance_id)
    class_gts = sorted((g for g in gt.instances if g.class_id == class_id),
                       key=lambda m: m.instance_id)
    gt_ids = {g.instance_id for g in class_gts}
    groups = sorted((grp for grp in gt.ambiguous_groups
                     if grp.member_instance_ids and grp.member_instance_ids[0] in gt_ids),
                    key=lambda grp: grp.group_id)
    member_of_group = {mid for grp in groups for mid in grp.member_instance_ids}

    final_gts = [g for g in class_gts if g.instance_id not in member_of_group]
    final_labels: list[Optional[ChangeType]] = [
        gt.change_labels.get(g.instance_id) for g in final_gts]

    for grp in groups:
        members = [g for g in class_gts if g.instance_id in set(grp.member_instance_ids)]
        candidate_ids = set()
        cands = []
        for p in class_preds:
            for m in members:
                if any(_stage_intersection(p.per_stage_points.get(t, _EMPTY), pts)
                       for t, pts in m.per_stage_points.items()):
                    break
            else:
                continue
            if p.instance_id not in candidate_ids:
                candidate_ids.add(p.instance_id)
                cands.append(p)
        result = disambiguate(grp, members, cands,
                              rng_seed=_group_seed(rng_seed, grp.group_id))
        for row, traj in zip(result.trajectory_rows, result.trajectories):
            member_ids = {result.member_ids[k]
                          for k in result.assignment[row] if k >= 0}
            final_gts.append(traj)
            final_labels.append(_trajectory_label(member_ids, gt.change_labels))

    return _ClassEvaluation(class_preds, final_gts, final_labels, stage_sizes)


def _group_seed(rng_seed: int, group_id: int):
    # per-group stream so parallel evaluation order cannot change results
    return (int(rng_seed), int(group_id))


def evaluate(seq: SequencePointCloud, gt: GroundTruthAnnotation,
             preds: Sequence[InstanceMask],
             thresholds: Optional[Iterable[float]] = None, *,
             rng_seed: int = 0,
             prediction_sequence_id: Optional[str] = None) -> EvaluationReport:
    """Evaluate predictions against ground truth over a threshold set.

    Inputs are assumed validated (see :func:`scanseq.model.validate_sequence`).
    Prediction overlaps within a stage are resolved first: the
    higher-confidence mask keeps contested points. Ambiguous groups are
    pseudo-disambiguated per class with a per-group random stream derived from
    ``rng_seed`` and the group id, so results are deterministic and
    independent of evaluation order.

    ``t_map`` averages per-class AP over the sweep thresholds present in
    ``thresholds`` (default: the full default set), ``t_map50``/``t_map25``
    read the single-threshold columns. Per-change-type recall averages
    TP/(TP+FN), grouped by the annotated change label of each ground-truth
    instance, over the sweep thresholds.
    """
    if prediction_sequence_id is not None and prediction_sequence_id != seq.sequence_id:
        raise SequenceMismatchError(
            f"predictions are for sequence {prediction_sequence_id!r}, "
            f"ground truth for {seq.sequence_id!r}")
    taus = tuple(sorted(set(float(t) for t in (thresholds or DEFAULT_THRESHOLDS))))
    resolved = resolve_prediction_overlaps(preds, seq)

    class_ids = tuple(sorted({m.class_id for m in gt.instances}
                             | {m.class_id for m in resolved}))
    evals = {c: _build_class_evaluation(c, gt, resolved, seq, rng_seed)
             for c in class_ids}

    per_class_ap: dict[int, dict[float, Optional[float]]] = {c: {} for c in class_ids}
    counts: dict[int, dict[float, tuple[int, int, int]]] = {c: {} for c in class_ids}
    pr_curves: dict[int, dict[float, tuple]] = {c: {} for c in class_ids}
    n_ground_truth = {c: len(evals[c].gt_masks) for c in class_ids}
    change_totals: dict[ChangeType, int] = {}
    for c in class_ids:
        for label in evals[c].gt_labels:
            if label is not None:
                change_totals[label] = change_totals.get(label, 0) + 1
    change_matched: dict[float, dict[ChangeType, int]] = {
        tau: {ct: 0 for ct in change_totals} for tau in taus}

    for c in class_ids:
        ev = evals[c]
        n_gt = len(ev.gt_masks)
        for tau in taus:
            is_tp, matched = _greedy_match(ev.tiou, ev.pred_order, tau)
            ap = average_precision(is_tp, n_gt)
            per_class_ap[c][tau] = ap
            tp_n = int(is_tp.sum())
            counts[c][tau] = (tp_n, len(ev.preds) - tp_n, n_gt - tp_n)
            if is_tp.size:
                tp_cum = np.cumsum(is_tp)
                fp_cum = np.cumsum(~is_tp)
                prec = tp_cum / (tp_cum + fp_cum)
                rec = tp_cum / n_gt if n_gt else np.zeros_like(prec)
                pr_curves[c][tau] = tuple(
                    (float(r), float(p)) for r, p in zip(rec, prec))
            else:
                pr_curves[c][tau] = ()
            for col in matched[matched >= 0]:
                label = ev.gt_labels[col]
                if label is not None:
                    change_matched[tau][label] += 1

    def _mean_ap(tau_set: Sequence[float]) -> Optional[float]:
        if not tau_set:
            return None
        class_means = []
        for c in class_ids:
            vals = [per_class_ap[c][tau] for tau in tau_set]
            if any(v is None for v in vals):
                continue
            class_means.append(float(np.mean(vals)))
        return float(np.mean(class_means)) if class_means else None

    full_sweep = all(t in taus for t in SWEEP_THRESHOLDS)
    t_map = _mean_ap(list(SWEEP_THRESHOLDS)) if full_sweep else None
    t_map50 = _mean_ap([0.5]) if 0.5 in taus else None
    t_map25 = _mean_ap([0.25]) if 0.25 in taus else None

    recall_taus = list(SWEEP_THRESHOLDS) if full_sweep else list(taus)
    per_change_recall: dict[ChangeType, Optional[float]] = {}
    for ct, total in change_totals.items():
        if total == 0 or not recall_taus:
            per_change_recall[ct] = None
            continue
        per_change_recall[ct] = float(np.mean(
            [change_matched[tau][ct] / total for tau in recall_taus]))

    return EvaluationReport(
        sequence_id=seq.sequence_id, num_stages=seq.num_stages,
        thresholds=taus, class_ids=class_ids, per_class_ap=per_class_ap,
        t_map=t_map, t_map50=t_map50, t_map25=t_map25,
        per_change_recall=per_change_recall, counts=counts,
        pr_curves=pr_curves, n_ground_truth=n_ground_truth)
