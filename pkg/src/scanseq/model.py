"""Shared data model for temporal scan sequences, instance masks, and annotations.

A *sequence* is an ordered series of 3D scans ("stages") of one scene. Instance
masks span the whole sequence: one identity, with a point-index set per stage it
appears in. Ground truth additionally carries per-instance change labels and
*ambiguous groups* (sets of indistinguishable instances whose identities may
validly permute across stages).

All types are immutable after construction and safe to share across workers.
Construction normalizes inputs and raises on intrinsically broken values;
cross-object consistency (index ranges, group membership, ...) is checked by
:func:`validate_sequence`, which never raises and reports violations instead.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np


class ChangeType(enum.Enum):
    """Per-instance annotation of how an object changed across the sequence."""

    STATIC = "static"
    RIGID = "rigid"
    NON_RIGID = "non_rigid"
    AMBIGUOUS = "ambiguous"
    ADDED_REMOVED = "added_removed"


def _as_readonly(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr)
    if out is arr and arr.flags.writeable:
        out = arr.copy()
    out.flags.writeable = False
    return out


def _as_float_matrix(values, name: str, width: int) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != width:
        raise ValueError(f"{name} must have shape (N, {width}), got {arr.shape}")
    return _as_readonly(arr)


@dataclass(frozen=True)
class StageCloud:
    """One 3D scan: point positions in meters, optional colors and superpoints.

    ``colors`` are RGB triples in [0, 1]; ``segment_ids`` are precomputed
    oversegmentation (superpoint) ids, one integer per point. All per-point
    arrays must share the same length.
    """

    positions: np.ndarray
    colors: Optional[np.ndarray] = None
    segment_ids: Optional[np.ndarray] = None

    def __post_init__(self):
        pos = _as_float_matrix(self.positions, "positions", 3)
        object.__setattr__(self, "positions", pos)
        if self.colors is not None:
            col = _as_float_matrix(self.colors, "colors", 3)
            if len(col) != len(pos):
                raise ValueError("colors length must equal point count")
            object.__setattr__(self, "colors", col)
        if self.segment_ids is not None:
            seg = np.asarray(self.segment_ids, dtype=np.int64)
            if seg.shape != (len(pos),):
                raise ValueError("segment_ids length must equal point count")
            object.__setattr__(self, "segment_ids", _as_readonly(seg))

    @property
    def point_count(self) -> int:
        return len(self.positions)


@dataclass(frozen=True)
class SequencePointCloud:
    """A temporal sequence of scans of one scene, stage indices 0..T-1."""

    stages: tuple[StageCloud, ...]
    sequence_id: str = ""

    def __post_init__(self):
        stages = tuple(self.stages)
        if not stages:
            raise ValueError("a sequence needs at least one stage")
        for t, stage in enumerate(stages):
            if not isinstance(stage, StageCloud):
                raise TypeError(f"stage {t} is not a StageCloud")
            if stage.point_count == 0:
                raise ValueError(f"stage {t} has no points")
        object.__setattr__(self, "stages", stages)

    @property
    def num_stages(self) -> int:
        return len(self.stages)

    @property
    def total_points(self) -> int:
        return sum(s.point_count for s in self.stages)

    def stage_sizes(self) -> tuple[int, ...]:
        return tuple(s.point_count for s in self.stages)


@dataclass(frozen=True)
class InstanceMask:
    """One instance identity over the whole sequence.

    ``per_stage_points`` maps stage index -> sorted point indices into that
    stage's cloud; stages the instance is absent from are simply not present in
    the map. Ground-truth masks use ``confidence`` 1.0 so predictions and
    ground truth share one type.

    Point indices are sorted at construction but deliberately *not*
    deduplicated: duplicate indices are a data error that
    :func:`validate_sequence` must be able to report. Empty stage entries are
    dropped; a mask may end up with no stages at all, which is likewise left to
    the validator.
    """

    instance_id: int
    class_id: int
    per_stage_points: Mapping[int, np.ndarray]
    confidence: float = 1.0

    def __post_init__(self):
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError(f"confidence must be in [0, 1], got {self.confidence}")
        cleaned: dict[int, np.ndarray] = {}
        for stage, points in self.per_stage_points.items():
            arr = np.sort(np.asarray(points, dtype=np.int64).ravel())
            if arr.size:
                cleaned[int(stage)] = _as_readonly(arr)
        object.__setattr__(self, "per_stage_points", cleaned)

    @property
    def stages(self) -> tuple[int, ...]:
        return tuple(sorted(self.per_stage_points))

    @property
    def total_points(self) -> int:
        return sum(v.size for v in self.per_stage_points.values())

    def points_at(self, stage: int) -> np.ndarray:
        return self.per_stage_points.get(stage, _EMPTY_INDEX)


_EMPTY_INDEX = _as_readonly(np.empty(0, dtype=np.int64))


@dataclass(frozen=True)
class AmbiguousGroup:
    """Ground-truth instances declared mutually indistinguishable."""

    group_id: int
    member_instance_ids: tuple[int, ...]

    def __post_init__(self):
        members = tuple(sorted({int(m) for m in self.member_instance_ids}))
        object.__setattr__(self, "member_instance_ids", members)

    @property
    def n_amb(self) -> int:
        return len(self.member_instance_ids)


@dataclass(frozen=True)
class GroundTruthAnnotation:
    """All ground truth for one sequence: masks, groups, change labels."""

    instances: tuple[InstanceMask, ...]
    ambiguous_groups: tuple[AmbiguousGroup, ...] = ()
    change_labels: Mapping[int, ChangeType] = field(default_factory=dict)

    def __post_init__(self):
        instances = tuple(self.instances)
        ids = [m.instance_id for m in instances]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate ground-truth instance ids")
        object.__setattr__(self, "instances", instances)
        object.__setattr__(self, "ambiguous_groups", tuple(self.ambiguous_groups))
        labels = {int(k): ChangeType(v) for k, v in dict(self.change_labels).items()}
        object.__setattr__(self, "change_labels", labels)

    def instance_by_id(self, instance_id: int) -> InstanceMask:
        for mask in self.instances:
            if mask.instance_id == instance_id:
                return mask
        raise KeyError(instance_id)


@dataclass(frozen=True)
class Violation:
    """One validation finding; ``code`` is stable, ``message`` is for humans."""

    code: str
    message: str


@dataclass(frozen=True)
class ValidationResult:
    violations: tuple[Violation, ...]

    @property
    def ok(self) -> bool:
        return not self.violations

    def codes(self) -> tuple[str, ...]:
        return tuple(v.code for v in self.violations)


def _check_mask(mask: InstanceMask, seq: SequencePointCloud, origin: str,
                out: list[Violation]) -> None:
    if not mask.per_stage_points:
        out.append(Violation(
            "empty_mask",
            f"{origin} instance {mask.instance_id} references no points"))
        return
    for stage, points in mask.per_stage_points.items():
        if stage < 0 or stage >= seq.num_stages:
            out.append(Violation(
                "stage_out_of_range",
                f"{origin} instance {mask.instance_id} references stage {stage} "
                f"outside 0..{seq.num_stages - 1}"))
            continue
        n = seq.stages[stage].point_count
        if points[0] < 0 or points[-1] >= n:
            out.append(Violation(
                "point_out_of_range",
                f"{origin} instance {mask.instance_id} stage {stage} has point "
                f"indices outside 0..{n - 1}"))
        if points.size > 1 and np.any(points[1:] == points[:-1]):
            out.append(Violation(
                "duplicate_point_in_mask",
                f"{origin} instance {mask.instance_id} stage {stage} lists "
                f"duplicate point indices"))


def validate_sequence(seq: SequencePointCloud, gt: GroundTruthAnnotation,
                      preds: Sequence[InstanceMask] = ()) -> ValidationResult:
    """Check cross-object consistency; total (never raises on bad data).

    Every model invariant that construction cannot enforce maps to exactly one
    violation code: ``stage_out_of_range``, ``point_out_of_range``,
    ``duplicate_point_in_mask``, ``empty_mask``, ``cross_class_ambiguous_group``,
    ``unknown_group_member``, ``ambiguous_group_too_small``,
    ``member_in_multiple_groups``.
    """
    out: list[Violation] = []
    for mask in gt.instances:
        _check_mask(mask, seq, "ground-truth", out)
    for mask in preds:
        _check_mask(mask, seq, "prediction", out)

    by_id = {m.instance_id: m for m in gt.instances}
    seen_members: dict[int, int] = {}
    for group in gt.ambiguous_groups:
        if group.n_amb < 2:
            out.append(Violation(
                "ambiguous_group_too_small",
                f"ambiguous group {group.group_id} has {group.n_amb} member(s)"))
        classes = set()
        for member in group.member_instance_ids:
            if member not in by_id:
                out.append(Violation(
                    "unknown_group_member",
                    f"ambiguous group {group.group_id} references unknown "
                    f"instance {member}"))
                continue
            classes.add(by_id[member].class_id)
            if member in seen_members:
                out.append(Violation(
                    "member_in_multiple_groups",
                    f"instance {member} appears in ambiguous groups "
                    f"{seen_members[member]} and {group.group_id}"))
            else:
                seen_members[member] = group.group_id
        if len(classes) > 1:
            out.append(Violation(
                "cross_class_ambiguous_group",
                f"ambiguous group {group.group_id} mixes classes "
                f"{sorted(classes)}"))
    return ValidationResult(tuple(out))
