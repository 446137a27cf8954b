"""Command-line interface.

Subcommands::

    scanseq evaluate  --gt manifest.json --pred preds.json --out report.json
    scanseq associate --mode {semantic,geometric} --pred-a a.json --pred-b b.json
                      --manifest manifest.json --out merged.json
    scanseq generate  --recipe recipe.json --out scene_dir/
    scanseq serialize --curve {zorder,hilbert,zorder-trans,hilbert-trans}
                      --dims {3,4} --manifest manifest.json --out order.json
    scanseq losses    --op {contrastive,cost,fourier,pool} --in in.json --out out.json

Exit codes: 0 success, 2 validation failure (violations on stderr), 64 usage
error, 74 I/O failure. ``evaluate`` accepts repeated --gt/--pred pairs and
runs them concurrently (--threads, or the SCANSEQ_THREADS environment
variable).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import association, curves, formats, metrics, numerics, synth
from .geometry import DEFAULT_RESOLUTION, voxelize
from .model import validate_sequence
from .ply import PlyError

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_USAGE = 64
EXIT_IO = 74

_CURVE_FLAGS = {
    "zorder": curves.Curve.Z_ORDER,
    "hilbert": curves.Curve.HILBERT,
    "zorder-trans": curves.Curve.Z_ORDER_TRANS,
    "hilbert-trans": curves.Curve.HILBERT_TRANS,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _build_parser() -> _Parser:
    parser = _Parser(prog="scanseq",
                     description="Temporal instance segmentation tooling")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p_eval = sub.add_parser("evaluate", help="score predictions against ground truth")
    p_eval.add_argument("--gt", action="append", required=True,
                        help="sequence manifest JSON (repeatable)")
    p_eval.add_argument("--pred", action="append", required=True,
                        help="prediction file JSON (pairs with --gt)")
    p_eval.add_argument("--thresholds", default="sweep,0.5,0.25",
                        help="comma-separated IoU thresholds; the word 'sweep' "
                             "expands to 0.50:0.95 step 0.05")
    p_eval.add_argument("--per-change-type", action="store_true",
                        help="include per-change-type recall in the report")
    p_eval.add_argument("--seed", type=int, default=0,
                        help="seed for ambiguous-group disambiguation")
    p_eval.add_argument("--threads", type=int, default=None,
                        help="concurrent sequences (default SCANSEQ_THREADS or 1)")
    p_eval.add_argument("--out", required=True)

    p_assoc = sub.add_parser("associate", help="lift per-stage predictions to 4D")
    p_assoc.add_argument("--mode", choices=("semantic", "geometric"), required=True)
    p_assoc.add_argument("--pred-a", required=True)
    p_assoc.add_argument("--pred-b", required=True)
    p_assoc.add_argument("--manifest", required=True)
    p_assoc.add_argument("--out", required=True)

    p_gen = sub.add_parser("generate", help="generate a synthetic scene")
    p_gen.add_argument("--recipe", required=True)
    p_gen.add_argument("--out", required=True)

    p_ser = sub.add_parser("serialize", help="order voxels along a space-filling curve")
    p_ser.add_argument("--curve", choices=tuple(_CURVE_FLAGS), required=True)
    p_ser.add_argument("--dims", choices=("3", "4"), required=True)
    p_ser.add_argument("--manifest", required=True)
    p_ser.add_argument("--resolution", type=float, default=DEFAULT_RESOLUTION)
    p_ser.add_argument("--bits", type=int, default=curves.DEFAULT_BITS_PER_AXIS)
    p_ser.add_argument("--out", required=True)

    p_loss = sub.add_parser("losses", help="run a numeric op on a JSON payload")
    p_loss.add_argument("--op", choices=("contrastive", "cost", "fourier", "pool"),
                        required=True)
    p_loss.add_argument("--in", dest="input", required=True)
    p_loss.add_argument("--out", required=True)
    return parser


def _parse_thresholds(text: str) -> tuple[float, ...]:
    values: set[float] = set()
    for token in text.split(","):
        token = token.strip()
        if not token:
            continue
        if token == "sweep":
            values.update(metrics.SWEEP_THRESHOLDS)
        else:
            values.add(float(token))
    if not values:
        raise ValueError("no thresholds given")
    return tuple(sorted(values))


def _evaluate_one(gt_path: str, pred_path: str, taus, seed: int):
    seq, gt = formats.read_manifest(gt_path)
    pred_file = formats.read_predictions(pred_path)
    violations = []
    if pred_file.sequence_id and pred_file.sequence_id != seq.sequence_id:
        violations.append(
            f"sequence_id_mismatch: predictions are for "
            f"{pred_file.sequence_id!r}, manifest is {seq.sequence_id!r}")
    result = validate_sequence(seq, gt, pred_file.instances)
    violations.extend(f"{v.code}: {v.message}" for v in result.violations)
    if violations:
        return None, violations
    report = metrics.evaluate(seq, gt, pred_file.instances, taus, rng_seed=seed)
    return report, []


def _cmd_evaluate(args) -> int:
    if len(args.gt) != len(args.pred):
        print("error: --gt and --pred must be paired", file=sys.stderr)
        return EXIT_USAGE
    try:
        taus = _parse_thresholds(args.thresholds)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    threads = args.threads or int(os.environ.get("SCANSEQ_THREADS", "1"))
    pairs = list(zip(args.gt, args.pred))
    if threads > 1 and len(pairs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(
                lambda pair: _evaluate_one(pair[0], pair[1], taus, args.seed), pairs))
    else:
        outcomes = [_evaluate_one(g, p, taus, args.seed) for g, p in pairs]

    failed = False
    reports = []
    for (gt_path, _), (report, violations) in zip(pairs, outcomes):
        if violations:
            failed = True
            for v in violations:
                print(f"{gt_path}: {v}", file=sys.stderr)
        else:
            reports.append(report)
    if failed:
        return EXIT_VALIDATION

    if len(reports) == 1:
        payload = formats.report_to_dict(reports[0])
        if not args.per_change_type:
            payload.pop("per_change_recall")
    else:
        reports.sort(key=lambda r: r.sequence_id)
        payload = {"schema_version": formats.SCHEMA_VERSION,
                   "kind": "evaluation_reports", "reports": []}
        for report in reports:
            entry = formats.report_to_dict(report)
            if not args.per_change_type:
                entry.pop("per_change_recall")
            payload["reports"].append(entry)
    formats.dump_canonical_json(args.out, payload)
    return EXIT_OK


def _single_stage_set(content: formats.PredictionFileContent) -> association.StagePredictionSet:
    masks = []
    stage = None
    for mask in content.instances:
        if len(mask.per_stage_points) != 1:
            raise formats.FormatError(
                "association inputs must be single-stage predictions")
        (t, pts), = mask.per_stage_points.items()
        stage = t if stage is None else stage
        if t != stage:
            raise formats.FormatError(
                "all masks in one association input must share a stage")
        masks.append(association.StagePrediction(
            class_id=mask.class_id, confidence=mask.confidence, points=pts,
            feature=content.features.get(mask.instance_id)))
    if stage is None:
        raise formats.FormatError("association input has no masks")
    return association.StagePredictionSet(stage=stage, masks=tuple(masks))


def _cmd_associate(args) -> int:
    seq, _ = formats.read_manifest(args.manifest)
    content_a = formats.read_predictions(args.pred_a)
    content_b = formats.read_predictions(args.pred_b)
    set_a = _single_stage_set(content_a)
    set_b = _single_stage_set(content_b)
    if args.mode == "semantic":
        merged = association.associate_semantic(set_a, set_b)
    else:
        merged = association.associate_geometric(
            set_a, seq.stages[set_b.stage], seq.stages[set_a.stage],
            b_stage=set_b.stage)
    formats.write_predictions(args.out, merged, seq.sequence_id)
    return EXIT_OK


def _cmd_generate(args) -> int:
    recipe_data = formats.load_json(args.recipe)
    recipe = synth.SceneRecipe.from_dict(recipe_data)
    seq, gt = synth.generate(recipe)
    formats.write_manifest(args.out, seq, gt)
    if "perturbation" in recipe_data:
        spec_data = dict(recipe_data["perturbation"])
        spec = synth.PerturbationSpec(**spec_data)
        preds = synth.perturb(seq, gt, spec)
        formats.write_predictions(Path(args.out) / "predictions.json", preds,
                                  seq.sequence_id)
    return EXIT_OK


def _cmd_serialize(args) -> int:
    seq, _ = formats.read_manifest(args.manifest)
    grid = voxelize(seq, resolution=args.resolution)
    pattern = curves.SerializationPattern(
        _CURVE_FLAGS[args.curve],
        curves.SerializationDims.SPATIAL_3D if args.dims == "3"
        else curves.SerializationDims.SPATIOTEMPORAL_4D)
    order = curves.serialize_sequence(grid, pattern, bits_per_axis=args.bits)
    payload = {
        "schema_version": formats.SCHEMA_VERSION,
        "kind": "serialization_order",
        "sequence_id": seq.sequence_id,
        "resolution": args.resolution,
        "curve": pattern.curve.value,
        "dims": pattern.dims.value,
        "num_voxels": grid.num_voxels,
        "order": [int(v) for v in order],
        "keys": [[int(x) for x in grid.keys[v]] for v in order],
    }
    formats.dump_canonical_json(args.out, payload)
    return EXIT_OK


def _cmd_losses(args) -> int:
    data = formats.load_json(args.input)
    if args.op == "contrastive":
        relation = numerics.relation_from_instance_ids(data["instance_ids"])
        value = numerics.contrastive_loss(np.asarray(data["features"]), relation)
        payload = {"loss": value}
    elif args.op == "cost":
        cfg = numerics.AssignmentCostConfig(**data.get("lambdas", {}))
        result = numerics.assignment_cost(
            np.asarray(data["pred_mask_logits"]),
            np.asarray(data["pred_class_logits"]),
            np.asarray(data["gt_masks"]), data["gt_classes"], cfg)
        payload = {
            "cost_matrix": result.cost_matrix.tolist(),
            "matches": [list(m) for m in result.matches],
            "unmatched_predictions": list(result.unmatched_predictions),
            "unmatched_ground_truth": list(result.unmatched_ground_truth),
            "total_cost": result.total_cost,
        }
    elif args.op == "fourier":
        features = numerics.fourier_features_4d(
            np.asarray(data["coords"]),
            d_out=int(data["d_out"]), seed=int(data["seed"]),
            scale=float(data.get("scale", 1.0)))
        payload = {"features": features.tolist()}
    else:  # pool
        stack = numerics.MaskHierarchyStack(
            levels=((np.asarray(data["coords"]), np.asarray(data["mask"])),))
        pooled = numerics.st_pool_masks(stack, 0)
        payload = {"mask": pooled.tolist()}
    payload["schema_version"] = formats.SCHEMA_VERSION
    formats.dump_canonical_json(args.out, payload)
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else EXIT_USAGE
    handlers = {
        "evaluate": _cmd_evaluate,
        "associate": _cmd_associate,
        "generate": _cmd_generate,
        "serialize": _cmd_serialize,
        "losses": _cmd_losses,
    }
    try:
        return handlers[args.command](args)
    except (OSError, PlyError, formats.FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (metrics.SequenceMismatchError,) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ValueError, KeyError, synth.SceneGenerationError,
            synth.PerturbationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
