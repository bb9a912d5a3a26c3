"""Command-line entry point: synth, grade, train, fuse, eval, metrics, report.

Exit codes: 0 success, 2 usage/config error, 3 data error, 4 internal
invariant violation. Diagnostics (including the resolved config
fingerprint every subcommand prints) go to stderr and honor --quiet;
machine output goes to --out files, or stdout with ``--out -``.

Seed precedence: --seed flag, then the KGDG_SEED environment variable,
then the config-file or built-in default.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import asdict, replace
from pathlib import Path

from .core import DomainDataset, DomainId, validate_probability
from .errors import ConfigError, DataError, InvalidConfig, KgdgError
from .fusion import FusionStrategy, FusionWeights, batch_fuse
from .harness import (
    SplitFractions,
    load_experiment_config,
    run_experiment,
    split_dataset,
)
from .io import (
    canonical_json,
    content_digest,
    load_detections,
    load_feature_table,
    load_manifest,
    load_probability_table,
    save_model,
)
from .learn import TrainConfig, fit_model
from .metrics import detection_set_iou, evaluate_predictions
from .report import compare_to_reference, emit_report, get_reference, load_report_json, reference_ids
from .rules import RuleConfig, grade_by_rules, grade_detections
from .synth import shift_profile, write_dataset


def _diag(args: argparse.Namespace, message: str) -> None:
    if not args.quiet:
        print(message, file=sys.stderr)


def _print_fingerprint(args: argparse.Namespace, resolved: dict) -> None:
    _diag(args, f"config fingerprint: {content_digest(canonical_json(resolved))[:16]}")


def _resolve_seed(args: argparse.Namespace, default: int = 0) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("KGDG_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise InvalidConfig(f"KGDG_SEED={env!r} is not an integer") from None
    return default


def _write_output(args: argparse.Namespace, text: str) -> None:
    if args.out is None or args.out == "-":
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text)


def _rules_from_config(args: argparse.Namespace) -> RuleConfig:
    if not getattr(args, "config", None):
        return RuleConfig()
    raw = json.loads(Path(args.config).read_text())
    section = raw.get("rules", {})
    try:
        return RuleConfig(**section)
    except TypeError as exc:
        raise InvalidConfig(f"bad rules section: {exc}") from exc


def _symbolic_from_config(args: argparse.Namespace) -> TrainConfig:
    if not getattr(args, "config", None):
        return TrainConfig()
    raw = json.loads(Path(args.config).read_text())
    section = raw.get("symbolic", {})
    try:
        return TrainConfig(**section)
    except TypeError as exc:
        raise InvalidConfig(f"bad symbolic section: {exc}") from exc


# --- subcommands ---------------------------------------------------------------


def _cmd_synth(args: argparse.Namespace) -> int:
    seed = _resolve_seed(args)
    cfg = shift_profile(args.profile, seed=seed, n_samples=args.samples)
    _print_fingerprint(args, {"command": "synth", "profile": args.profile, "seed": seed,
                              "samples": args.samples})
    manifest_path = write_dataset(cfg, args.out)
    _diag(args, f"wrote {manifest_path}")
    return 0


def _cmd_grade(args: argparse.Namespace) -> int:
    rules = _rules_from_config(args)
    if args.min_score is not None:
        rules = replace(rules, min_score=args.min_score)
    _print_fingerprint(args, {"command": "grade", "rules": asdict(rules),
                              "features": bool(args.features), "detections": bool(args.detections)})
    lines = ["image_id,grade,fired_rules"]
    if args.features:
        for ex in load_feature_table(args.features):
            trace = grade_by_rules(ex.features, rules)
            lines.append(f"{ex.image_id},{int(trace.grade)},{'|'.join(trace.fired_rules)}")
    elif args.detections:
        det_map = load_detections(args.detections)
        for image_id in sorted(det_map):
            _, trace = grade_detections(det_map[image_id], rules)
            lines.append(f"{image_id},{int(trace.grade)},{'|'.join(trace.fired_rules)}")
    else:
        raise InvalidConfig("grade needs --features or --detections")
    _write_output(args, "\n".join(lines) + "\n")
    return 0


def _cmd_train(args: argparse.Namespace) -> int:
    seed = _resolve_seed(args)
    cfg = _symbolic_from_config(args)
    cfg = replace(cfg, model_kind=args.model, seed=seed)
    if args.feature_set:
        cfg = replace(cfg, feature_set=args.feature_set)
    _print_fingerprint(args, {"command": "train", "config": cfg.as_dict()})
    examples = load_feature_table(args.features)
    dataset = DomainDataset(DomainId(examples[0].domain if examples else "train"), tuple(examples))
    train, valid, test = split_dataset(dataset, SplitFractions(), seed)
    model = fit_model(train, valid, cfg)
    preds = [model.predict_proba(ex.features).argmax() for ex in test]
    truth = [int(ex.grade) for ex in test]
    if truth:
        held_out = evaluate_predictions(truth, preds)
        _diag(args, f"held-out accuracy {held_out.accuracy:.4f}, macro F1 {held_out.macro_f1:.4f}")
    save_model(model.to_artifact(), args.out)
    _diag(args, f"wrote {args.out}")
    return 0


def _cmd_fuse(args: argparse.Namespace) -> int:
    strategy = FusionStrategy(args.strategy)
    weights = None
    if strategy is FusionStrategy.WEIGHTED:
        if args.alpha_dl is None or args.alpha_kl is None:
            raise InvalidConfig("weighted fusion needs --alpha-dl and --alpha-kl")
        weights = FusionWeights(args.alpha_dl, args.alpha_kl)
    _print_fingerprint(args, {"command": "fuse", "strategy": args.strategy,
                              "alpha_dl": args.alpha_dl, "alpha_kl": args.alpha_kl})
    dl_table = load_probability_table(args.dl)
    kd_table = load_probability_table(args.kd)
    fused = batch_fuse(strategy, dl_table, kd_table, weights)
    lines = ["image_id,grade,source,winning_score"]
    for image_id in sorted(fused):
        f = fused[image_id]
        lines.append(f"{image_id},{int(f.grade)},{f.source.value},{f.winning_score:.6f}")
    _write_output(args, "\n".join(lines) + "\n")
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    cfg, manifest_path = load_experiment_config(args.config)
    if args.mode:
        cfg = replace(cfg, mode=args.mode)
    if args.seed is not None:
        cfg = replace(cfg, seeds=(args.seed,))
    elif os.environ.get("KGDG_SEED"):
        cfg = replace(cfg, seeds=(_resolve_seed(args),))
    _print_fingerprint(args, {"command": "eval", "config": cfg.as_dict()})
    manifest = load_manifest(manifest_path)
    report = run_experiment(cfg, manifest)
    if args.out is None or args.out == "-":
        from .report import render_markdown

        sys.stdout.write(render_markdown(report) if args.format != "json"
                         else json.dumps(report.to_json_dict(), indent=1, sort_keys=True) + "\n")
    else:
        emit_report(report, args.format, args.out)
        _diag(args, f"wrote {args.out}")
    return 0


def _cmd_metrics(args: argparse.Namespace) -> int:
    _print_fingerprint(args, {"command": "metrics",
                              "mode": "detection" if args.pred_detections else "classification"})
    if args.pred_detections or args.truth_detections:
        if not (args.pred_detections and args.truth_detections):
            raise InvalidConfig("detection metrics need --pred-detections and --truth-detections")
        pred = load_detections(args.pred_detections)
        truth = load_detections(args.truth_detections)
        all_pred = [d for dets in pred.values() for d in dets]
        all_truth = [d for dets in truth.values() for d in dets]
        match = detection_set_iou(all_pred, all_truth, args.iou_threshold)
        payload = {
            "matched_per_lesion": match.matched_per_lesion,
            "matched_total": match.matched_total,
            "mean_matched_iou": match.mean_matched_iou,
            "precision": match.precision,
            "recall": match.recall,
        }
        _write_output(args, json.dumps(payload, indent=1, sort_keys=True) + "\n")
        return 0
    if not (args.truth and args.pred):
        raise InvalidConfig("classification metrics need --truth and --pred")
    examples = load_feature_table(args.truth)
    predictions = _load_prediction_table(args.pred)
    truth, preds, prob_rows = [], [], []
    for ex in examples:
        if ex.image_id not in predictions:
            raise DataError(f"prediction table has no row for image {ex.image_id!r}")
        grade, probs = predictions[ex.image_id]
        truth.append(int(ex.grade))
        preds.append(grade)
        if probs is not None:
            prob_rows.append(probs)
    rep = evaluate_predictions(truth, preds, prob_rows if len(prob_rows) == len(truth) else None)
    payload = {
        "accuracy": rep.accuracy,
        "macro_f1": rep.macro_f1,
        "auc_ovr_macro": rep.auc_ovr_macro,
        "confusion": [list(r) for r in rep.confusion],
        "support": list(rep.support),
    }
    _write_output(args, json.dumps(payload, indent=1, sort_keys=True) + "\n")
    return 0


def _load_prediction_table(path: str) -> dict[str, tuple[int, object]]:
    """Read `image_id,grade[,p0..p4]` rows."""
    out: dict[str, tuple[int, object]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[0] != "image_id" or "grade" not in header:
            raise DataError(f"{path}: prediction table needs image_id,grade[,p0..p4]")
        has_probs = len(header) >= 7
        for cells in reader:
            if not cells:
                continue
            grade = int(cells[header.index("grade")])
            if grade not in (0, 1, 2, 3, 4):
                raise DataError(f"{path}: grade {grade} outside 0..4")
            probs = None
            if has_probs:
                probs = validate_probability([float(c) for c in cells[2:7]])
            out[cells[0]] = (grade, probs)
    return out


def _cmd_report(args: argparse.Namespace) -> int:
    if args.list:
        _write_output(args, "\n".join(reference_ids()) + "\n")
        return 0
    if not args.reference_id:
        raise InvalidConfig("report needs --reference-id (or --list)")
    _print_fingerprint(args, {"command": "report", "reference_id": args.reference_id,
                              "input": bool(args.input)})
    if args.input:
        subject = load_report_json(args.input)
    else:
        subject = get_reference(args.reference_id)
    comparison = compare_to_reference(subject, args.reference_id)
    _write_output(args, comparison.render() + "\n")
    return 0


# --- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kgdg",
        description="Neuro-symbolic DR grading: synthetic data, rule grading, "
        "symbolic training, confidence fusion, and domain-generalization evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, out_required: bool = False) -> None:
        p.add_argument("--seed", type=int, default=None,
                       help="seed override (falls back to KGDG_SEED, then config)")
        p.add_argument("--config", default=None, help="experiment config JSON")
        p.add_argument("--out", default=None, required=out_required,
                       help="output path ('-' for stdout)")
        p.add_argument("--quiet", action="store_true", help="suppress diagnostics")

    p = sub.add_parser("synth", help="generate a synthetic multi-domain dataset")
    p.add_argument("--profile", required=True, choices=("mild", "severe", "vein_hostile"))
    p.add_argument("--samples", type=int, default=2000, help="examples per domain")
    common(p, out_required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("grade", help="apply the clinical rule ladder")
    p.add_argument("--features", default=None, help="features.csv to grade")
    p.add_argument("--detections", default=None, help="detections.json to aggregate and grade")
    p.add_argument("--min-score", type=float, default=None, dest="min_score")
    common(p)
    p.set_defaults(func=_cmd_grade)

    p = sub.add_parser("train", help="fit a symbolic learner on a feature table")
    p.add_argument("--features", required=True)
    p.add_argument("--model", default="gbm", choices=("gbm", "logistic", "forest", "knn"))
    p.add_argument("--feature-set", default=None, dest="feature_set",
                   choices=("auto", "lesions_only", "lesions_vein"))
    common(p, out_required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("fuse", help="fuse two probability tables")
    p.add_argument("--strategy", required=True, choices=[s.value for s in FusionStrategy])
    p.add_argument("--dl", required=True, help="deep-branch probs.csv")
    p.add_argument("--kd", required=True, help="knowledge-branch probs.csv")
    p.add_argument("--alpha-dl", type=float, default=None, dest="alpha_dl")
    p.add_argument("--alpha-kl", type=float, default=None, dest="alpha_kl")
    common(p)
    p.set_defaults(func=_cmd_fuse)

    p = sub.add_parser("eval", help="run an SDG or MDG experiment")
    p.add_argument("--mode", default=None, choices=("sdg", "mdg"))
    p.add_argument("--format", default="markdown", choices=("markdown", "csv", "json"))
    common(p)
    p.set_defaults(func=_cmd_eval)
    # eval requires a config file
    p.set_defaults(_needs_config=True)

    p = sub.add_parser("metrics", help="score predictions or detection matches")
    p.add_argument("--truth", default=None, help="features.csv with true grades")
    p.add_argument("--pred", default=None, help="prediction csv (image_id,grade[,p0..p4])")
    p.add_argument("--pred-detections", default=None, dest="pred_detections")
    p.add_argument("--truth-detections", default=None, dest="truth_detections")
    p.add_argument("--iou-threshold", type=float, default=0.5, dest="iou_threshold")
    common(p)
    p.set_defaults(func=_cmd_metrics)

    p = sub.add_parser("report", help="inspect or diff embedded reference tables")
    p.add_argument("--reference-id", default=None, dest="reference_id")
    p.add_argument("--input", default=None, help="report JSON produced by eval --format json")
    p.add_argument("--list", action="store_true", help="list reference table ids")
    common(p)
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "_needs_config", False) and not args.config:
        parser.error("eval requires --config")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error[{exc.code}]: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"error[{exc.code}]: {exc}", file=sys.stderr)
        return 3
    except KgdgError as exc:
        print(f"error[{exc.code}]: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error[IO_ERROR]: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # pragma: no cover - defensive
        print(f"error[INTERNAL]: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
