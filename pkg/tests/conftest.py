from __future__ import annotations

import numpy as np
import pytest

from scanseq.model import (AmbiguousGroup, ChangeType, GroundTruthAnnotation,
                           InstanceMask, SequencePointCloud, StageCloud)


def make_cloud(n_points: int, seed: int = 0, with_segments: bool = False,
               n_segments: int = 4) -> StageCloud:
    rng = np.random.default_rng(seed)
    segments = rng.integers(0, n_segments, size=n_points) if with_segments else None
    return StageCloud(positions=rng.uniform(-2, 2, size=(n_points, 3)),
                      segment_ids=segments)


def make_sequence(stage_sizes, seed: int = 0, sequence_id: str = "seq") -> SequencePointCloud:
    return SequencePointCloud(
        stages=tuple(make_cloud(n, seed=seed + t) for t, n in enumerate(stage_sizes)),
        sequence_id=sequence_id)


def mask(instance_id: int, class_id: int, per_stage, confidence: float = 1.0) -> InstanceMask:
    return InstanceMask(instance_id=instance_id, class_id=class_id,
                        per_stage_points={t: np.asarray(p, dtype=np.int64)
                                          for t, p in per_stage.items()},
                        confidence=confidence)


def annotation(instances, groups=(), labels=None) -> GroundTruthAnnotation:
    return GroundTruthAnnotation(
        instances=tuple(instances),
        ambiguous_groups=tuple(AmbiguousGroup(group_id=i, member_instance_ids=m)
                               for i, m in enumerate(groups)),
        change_labels=labels or {})


@pytest.fixture
def two_stage_sequence() -> SequencePointCloud:
    return make_sequence([200, 200])
