import json

import numpy as np
import pytest

from scanseq.formats import (FormatError, dump_canonical_json, read_manifest,
                             read_predictions, report_to_dict, rle_decode,
                             rle_encode, write_manifest, write_predictions,
                             write_report)
from scanseq.metrics import evaluate
from scanseq.model import StageCloud, validate_sequence
from scanseq.ply import (PlyFormatError, PlyMissingPropertyError, read_ply,
                         write_ply)
from scanseq.synth import PerturbationSpec, SceneRecipe, generate, perturb

from conftest import annotation, make_sequence, mask


# ---------------------------------------------------------------------------
# PLY


def test_ascii_ply_reads_exact_positions(tmp_path):
    path = tmp_path / "tri.ply"
    path.write_text("\n".join([
        "ply", "format ascii 1.0", "element vertex 3",
        "property float x", "property float y", "property float z",
        "end_header",
        "0.5 0 0", "0 1.25 0", "0 0 -2",
    ]) + "\n")
    cloud = read_ply(path)
    assert cloud.positions.tolist() == [[0.5, 0, 0], [0, 1.25, 0], [0, 0, -2]]
    assert cloud.colors is None and cloud.segment_ids is None


def test_ply_missing_z_property(tmp_path):
    path = tmp_path / "bad.ply"
    path.write_text("\n".join([
        "ply", "format ascii 1.0", "element vertex 1",
        "property float x", "property float y", "end_header", "0 0",
    ]) + "\n")
    with pytest.raises(PlyMissingPropertyError, match="missing coordinate"):
        read_ply(path)


def test_ply_big_endian_rejected(tmp_path):
    path = tmp_path / "be.ply"
    path.write_text("\n".join([
        "ply", "format binary_big_endian 1.0", "element vertex 0",
        "property float x", "property float y", "property float z",
        "end_header", "",
    ]))
    with pytest.raises(PlyFormatError, match="big-endian"):
        read_ply(path)


def test_ply_malformed_header(tmp_path):
    path = tmp_path / "junk.ply"
    path.write_bytes(b"not a ply at all")
    with pytest.raises(PlyFormatError):
        read_ply(path)


def test_binary_ply_round_trips_byte_exactly(tmp_path):
    rng = np.random.default_rng(0)
    cloud = StageCloud(positions=rng.normal(size=(40, 3)).astype(np.float32),
                       colors=rng.integers(0, 256, size=(40, 3)) / 255.0,
                       segment_ids=rng.integers(0, 9, size=40))
    first = tmp_path / "a.ply"
    write_ply(first, cloud, binary=True)
    reread = read_ply(first)
    second = tmp_path / "b.ply"
    write_ply(second, reread, binary=True)
    assert first.read_bytes() == second.read_bytes()


def test_ascii_ply_round_trips_values(tmp_path):
    cloud = StageCloud(positions=np.array([[0.125, -3.5, 7.0]]),
                       colors=np.array([[1.0, 0.0, 0.5019607843137255]]))
    path = tmp_path / "a.ply"
    write_ply(path, cloud, binary=False)
    reread = read_ply(path)
    assert np.allclose(reread.positions, cloud.positions)
    assert np.allclose(reread.colors, cloud.colors)


# ---------------------------------------------------------------------------
# RLE


def test_rle_round_trip_and_examples():
    idx = np.array([0, 1, 2, 7, 9, 10])
    runs = rle_encode(idx)
    assert runs == [[0, 3], [7, 1], [9, 2]]
    assert rle_decode(runs).tolist() == idx.tolist()
    assert rle_encode(np.empty(0, dtype=int)) == []


def test_rle_rejects_non_increasing():
    with pytest.raises(FormatError, match="strictly increasing"):
        rle_decode([[5, 3], [6, 2]])
    with pytest.raises(FormatError):
        rle_decode([[3, 0]])
    assert rle_decode([[5, 3], [8, 1]]).tolist() == [5, 6, 7, 8]


# ---------------------------------------------------------------------------
# Manifest and prediction round trips


def _scene():
    recipe = SceneRecipe(seed=9, n_objects=4, background_points=60,
                         ambiguous_groups=((0, 1),), sequence_id="seq-rt")
    return generate(recipe)


def test_manifest_round_trip(tmp_path):
    seq, gt = _scene()
    manifest = write_manifest(tmp_path / "scene", seq, gt)
    seq2, gt2 = read_manifest(manifest)
    assert seq2.sequence_id == seq.sequence_id
    assert seq2.num_stages == seq.num_stages
    for a, b in zip(seq.stages, seq2.stages):
        assert np.allclose(a.positions, b.positions, atol=1e-6)
    assert len(gt2.instances) == len(gt.instances)
    for m1, m2 in zip(sorted(gt.instances, key=lambda m: m.instance_id),
                      sorted(gt2.instances, key=lambda m: m.instance_id)):
        assert m1.instance_id == m2.instance_id
        assert m1.class_id == m2.class_id
        assert sorted(m1.per_stage_points) == sorted(m2.per_stage_points)
        for t in m1.per_stage_points:
            assert np.array_equal(m1.per_stage_points[t], m2.per_stage_points[t])
    assert [g.member_instance_ids for g in gt2.ambiguous_groups] == \
        [g.member_instance_ids for g in gt.ambiguous_groups]
    assert gt0_labels_equal(gt, gt2)
    assert validate_sequence(seq2, gt2, []).ok


def gt0_labels_equal(a, b):
    return a.change_labels == b.change_labels


def test_prediction_round_trip_rle_and_explicit(tmp_path):
    seq, gt = _scene()
    preds = perturb(seq, gt, PerturbationSpec(target_iou=0.8, seed=1))
    features = {preds[0].instance_id: np.array([0.1, 0.2, 0.3])}
    for rle in (True, False):
        path = tmp_path / f"preds_{rle}.json"
        write_predictions(path, preds, seq.sequence_id, features=features, rle=rle)
        content = read_predictions(path)
        assert content.sequence_id == seq.sequence_id
        assert len(content.instances) == len(preds)
        for a, b in zip(preds, content.instances):
            assert a.instance_id == b.instance_id
            assert a.class_id == b.class_id
            assert a.confidence == pytest.approx(b.confidence, abs=1e-5)
            for t in a.per_stage_points:
                assert np.array_equal(a.per_stage_points[t], b.per_stage_points[t])
        assert np.allclose(content.features[preds[0].instance_id],
                           [0.1, 0.2, 0.3], atol=1e-6)


def test_manifest_row_count_mismatch_detected(tmp_path):
    seq, gt = _scene()
    manifest = write_manifest(tmp_path / "scene", seq, gt)
    bad = tmp_path / "scene" / "stage_000.instances.txt"
    lines = bad.read_text().splitlines()
    bad.write_text("\n".join(lines[:-2]) + "\n")
    with pytest.raises(FormatError, match="row counts"):
        read_manifest(manifest)


def test_unknown_mask_encoding_rejected(tmp_path):
    payload = {"schema_version": 1, "kind": "predictions", "sequence_id": "s",
               "instances": [{"instance_id": 0, "class_id": 1, "confidence": 0.5,
                              "masks": {"0": {"encoding": "bitmap", "data": []}}}]}
    path = tmp_path / "p.json"
    path.write_text(json.dumps(payload))
    with pytest.raises(FormatError, match="encoding"):
        read_predictions(path)


# ---------------------------------------------------------------------------
# Reports and canonical JSON


def test_report_serialization_is_stable(tmp_path):
    seq, gt = _scene()
    preds = perturb(seq, gt, PerturbationSpec(target_iou=0.7, seed=3))
    report = evaluate(seq, gt, preds)
    path1 = tmp_path / "r1.json"
    write_report(path1, report)
    parsed = json.loads(path1.read_text())
    path2 = tmp_path / "r2.json"
    dump_canonical_json(path2, parsed)
    assert path1.read_bytes() == path2.read_bytes()
    assert parsed["schema_version"] == 1
    assert parsed["kind"] == "evaluation_report"
    assert set(parsed["per_class"]) == {str(c) for c in report.class_ids}


def test_canonical_floats_have_six_significant_digits(tmp_path):
    path = tmp_path / "f.json"
    dump_canonical_json(path, {"value": 0.123456789123, "small": 1e-7})
    parsed = json.loads(path.read_text())
    assert parsed["value"] == 0.123457
    assert parsed["small"] == 1e-7


def test_report_includes_every_class_and_counts(tmp_path):
    seq = make_sequence([50])
    gt = annotation([mask(0, 1, {0: range(10)})])
    preds = [mask(0, 3, {0: range(20, 30)}, confidence=0.9)]
    report = evaluate(seq, gt, preds)
    data = report_to_dict(report)
    assert set(data["per_class"]) == {"1", "3"}
    assert data["per_class"]["1"]["ap"]["0.25"] == 0.0
    assert data["counts"]["3"]["0.50"] == {"tp": 0, "fp": 1, "fn": 0}
