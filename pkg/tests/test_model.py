import numpy as np
import pytest

from scanseq.model import (AmbiguousGroup, ChangeType, GroundTruthAnnotation,
                           InstanceMask, SequencePointCloud, StageCloud,
                           validate_sequence)

from conftest import annotation, make_cloud, make_sequence, mask


def test_well_formed_sequence_validates_ok():
    seq = make_sequence([50, 60])
    gt = annotation([
        mask(0, 1, {0: range(10), 1: range(10)}),
        mask(1, 1, {0: range(10, 20)}),
        mask(2, 2, {1: range(20, 35)}),
    ])
    assert validate_sequence(seq, gt, []).ok


def test_stage_out_of_range_is_reported():
    seq = make_sequence([50, 50])
    gt = annotation([mask(0, 1, {2: range(5)})])
    result = validate_sequence(seq, gt, [])
    assert "stage_out_of_range" in result.codes()


def test_cross_class_ambiguous_group_is_reported():
    seq = make_sequence([50])
    gt = annotation([mask(0, 1, {0: range(5)}), mask(1, 2, {0: range(5, 10)})],
                    groups=[(0, 1)])
    assert "cross_class_ambiguous_group" in validate_sequence(seq, gt, []).codes()


def test_point_out_of_range_and_empty_mask():
    seq = make_sequence([10])
    gt = annotation([mask(0, 1, {0: [9, 10]}), mask(1, 1, {})])
    codes = validate_sequence(seq, gt, []).codes()
    assert "point_out_of_range" in codes
    assert "empty_mask" in codes


def test_duplicate_points_are_reported_not_silently_dropped():
    seq = make_sequence([10])
    gt = annotation([mask(0, 1, {0: [1, 1, 2]})])
    assert "duplicate_point_in_mask" in validate_sequence(seq, gt, []).codes()


def test_group_membership_violations():
    seq = make_sequence([30])
    instances = [mask(i, 1, {0: range(5 * i, 5 * i + 5)}) for i in range(3)]
    gt = GroundTruthAnnotation(
        instances=tuple(instances),
        ambiguous_groups=(AmbiguousGroup(0, (0, 1)),
                          AmbiguousGroup(1, (1, 2)),
                          AmbiguousGroup(2, (7, 8)),
                          AmbiguousGroup(3, (2,))))
    codes = validate_sequence(seq, gt, []).codes()
    assert "member_in_multiple_groups" in codes
    assert "unknown_group_member" in codes
    assert "ambiguous_group_too_small" in codes


def test_prediction_masks_are_checked_too():
    seq = make_sequence([10, 10])
    gt = annotation([mask(0, 1, {0: range(3)})])
    preds = [mask(0, 1, {1: [4, 99]}, confidence=0.5)]
    assert "point_out_of_range" in validate_sequence(seq, gt, preds).codes()


def test_validation_is_total_on_heavily_broken_input():
    seq = make_sequence([5])
    gt = annotation([mask(0, 1, {3: [100, 100]}), mask(1, 1, {})],
                    groups=[(0, 1)])
    result = validate_sequence(seq, gt, [mask(9, 4, {0: [-1]}, confidence=0.1)])
    assert not result.ok  # and no exception was raised


def test_construction_invariants():
    with pytest.raises(ValueError):
        SequencePointCloud(stages=(), sequence_id="x")
    with pytest.raises(ValueError):
        StageCloud(positions=np.zeros((3, 2)))
    with pytest.raises(ValueError):
        mask(0, 1, {0: [1]}, confidence=1.5)
    with pytest.raises(ValueError):
        GroundTruthAnnotation(instances=(mask(0, 1, {0: [0]}),
                                         mask(0, 1, {0: [1]})))


def test_masks_sort_indices_and_drop_empty_stages():
    m = mask(0, 1, {0: [5, 2, 9], 1: []})
    assert m.per_stage_points[0].tolist() == [2, 5, 9]
    assert 1 not in m.per_stage_points
    assert m.stages == (0,)


def test_model_arrays_are_immutable():
    seq = make_sequence([10])
    m = mask(0, 1, {0: [1, 2]})
    with pytest.raises(ValueError):
        seq.stages[0].positions[0, 0] = 99.0
    with pytest.raises(ValueError):
        m.per_stage_points[0][0] = 7


def test_change_labels_are_normalized_to_enum():
    gt = annotation([mask(0, 1, {0: [0]})], labels={0: "rigid"})
    assert gt.change_labels[0] is ChangeType.RIGID
