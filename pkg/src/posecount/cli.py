"""Command-line interface.

Subcommands: ``train``, ``count``, ``eval``, ``gradcheck``. Global flags
(``--config``, ``--seed``, ``--verbose``) come before the subcommand.
Precedence: built-in defaults < JSON config file < command-line flags.

Exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

from . import counter, data, evaluation, gradcheck, model, training
from .errors import (
    ConfigError,
    DataError,
    GradientCheckError,
    NumericError,
    ParseError,
    PoseCountError,
    ShapeError,
    ValidationError,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

GRADCHECK_TOLERANCE = 1e-4

logger = logging.getLogger(__name__)


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; this project reserves 2 for data
    problems, so remap to 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(self.prog + ": error: " + message) from None


@dataclass
class RunConfig:
    model: model.ModelConfig
    train: training.TrainConfig
    trigger: counter.TriggerConfig
    classes: list[str]


def load_run_config(path, seed_override: int | None = None) -> RunConfig:
    """Assemble the run configuration from defaults, an optional JSON file,
    and an optional seed override."""
    raw = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise DataError(f"cannot read config {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ParseError(f"config {path}: invalid JSON ({exc})") from None

    classes = list(raw.get("classes", data.DEFAULT_CLASSES))
    model_kwargs = dict(raw.get("model", {}))
    model_kwargs.setdefault("num_classes", len(classes))
    if model_kwargs["num_classes"] != len(classes):
        raise ConfigError(
            f"model.num_classes={model_kwargs['num_classes']} but {len(classes)} classes listed"
        )
    train_kwargs = dict(raw.get("train", {}))
    if "seed" in raw:
        train_kwargs.setdefault("seed", raw["seed"])
    if seed_override is not None:
        train_kwargs["seed"] = seed_override
    trigger_kwargs = dict(raw.get("trigger", {}))
    try:
        return RunConfig(
            model=model.ModelConfig(**model_kwargs),
            train=training.TrainConfig(**train_kwargs),
            trigger=counter.TriggerConfig(**trigger_kwargs),
            classes=classes,
        )
    except TypeError as exc:
        raise ConfigError(f"bad config field: {exc}") from None


def _load_sequences(keypoint_dir) -> dict[str, data.PoseSequence]:
    keypoint_dir = Path(keypoint_dir)
    if not keypoint_dir.is_dir():
        raise DataError(f"keypoint directory {keypoint_dir} does not exist")
    sequences = {}
    for path in sorted(keypoint_dir.glob("*.csv")):
        seq = data.load_keypoint_file(path)
        sequences[seq.video_id] = seq
    if not sequences:
        raise DataError(f"no keypoint CSV files in {keypoint_dir}")
    return sequences


def cmd_train(args) -> int:
    run = load_run_config(args.config, args.seed)
    try:
        annotation_text = Path(args.annotations).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read annotations: {exc}") from None
    annotations = data.parse_annotation_csv(annotation_text, run.classes)
    sequences = _load_sequences(args.keypoints)
    samples = data.build_training_set(annotations, sequences, run.classes)
    params, history = training.train(
        samples,
        run.model,
        run.train,
        checkpoint_dir=args.checkpoint_dir,
        class_names=run.classes,
    )
    model.save_checkpoint(args.out, params, run.classes)
    history_path = args.history or Path(args.out).with_suffix(".history.csv")
    Path(history_path).write_text(training.write_history_csv(history), encoding="utf-8")
    print(f"trained {len(samples)} samples for {run.train.epochs} epochs -> {args.out}")
    return EXIT_OK


def cmd_count(args) -> int:
    params, class_names = model.load_checkpoint(args.checkpoint)
    sequence = data.load_keypoint_file(args.keypoints)
    trigger = load_run_config(args.config).trigger if args.config else counter.TriggerConfig()
    if args.upper is not None or args.lower is not None or args.window is not None:
        trigger = counter.TriggerConfig(
            upper=args.upper if args.upper is not None else trigger.upper,
            lower=args.lower if args.lower is not None else trigger.lower,
            smoothing_window=args.window if args.window is not None else trigger.smoothing_window,
            either_order=trigger.either_order,
        )

    scores = model.score_video(sequence, params)
    if args.action_class is not None:
        if args.action_class not in class_names:
            raise DataError(
                f"unknown class {args.action_class!r}; checkpoint knows: {', '.join(class_names)}"
            )
        class_id = class_names.index(args.action_class)
    else:
        class_id = counter.select_class(scores, trigger)
        logger.info("auto-selected class %s", class_names[class_id])
    result = counter.count_repetitions(
        scores.scores[class_id],
        trigger,
        video_id=sequence.video_id,
        action_class=class_names[class_id],
    )
    print("video_id,action_class,count")
    print(f"{result.video_id},{result.action_class},{result.count}")
    if args.events:
        Path(args.events).write_text(
            json.dumps(
                {
                    "video_id": result.video_id,
                    "action_class": result.action_class,
                    "count": result.count,
                    "events": [{"arm_frame": a, "fire_frame": f} for a, f in result.events],
                }
            ),
            encoding="utf-8",
        )
    return EXIT_OK


def cmd_eval(args) -> int:
    try:
        predictions = data.parse_count_csv(Path(args.predictions).read_text(encoding="utf-8"))
        ground_truth = data.parse_count_csv(Path(args.ground_truth).read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"cannot read counts: {exc}") from None
    result = evaluation.evaluate(ground_truth, predictions)
    print(evaluation.summary_json(result))
    if args.out:
        Path(args.out).write_text(evaluation.per_video_csv(result), encoding="utf-8")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    results = gradcheck.run_gradient_checks(seed=args.seed or 0, num_configs=args.configs)
    worst = 0.0
    for r in results:
        status = "ok" if r.max_rel_error < GRADCHECK_TOLERANCE else "FAIL"
        print(f"{r.description}: max_rel_err={r.max_rel_error:.3e} [{status}]")
        worst = max(worst, r.max_rel_error)
    print(f"worst over {len(results)} configs: {worst:.3e}")
    if worst >= GRADCHECK_TOLERANCE:
        raise GradientCheckError(f"max relative error {worst:.3e} >= {GRADCHECK_TOLERANCE}")
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="posecount", description=__doc__)
    parser.add_argument("--config", help="JSON run configuration")
    parser.add_argument("--seed", type=int, help="override the training seed")
    parser.add_argument("--verbose", action="store_true", help="log progress to stderr")
    commands = parser.add_subparsers(dest="command", required=True)

    p_train = commands.add_parser("train", help="train a model from annotated keypoint files")
    p_train.add_argument("annotations", help="annotation CSV")
    p_train.add_argument("--keypoints", required=True, help="directory of keypoint CSVs")
    p_train.add_argument("--out", required=True, help="final checkpoint path")
    p_train.add_argument("--history", help="training history CSV (default: <out>.history.csv)")
    p_train.add_argument("--checkpoint-dir", help="also write per-epoch checkpoints here")
    p_train.set_defaults(func=cmd_train)

    p_count = commands.add_parser("count", help="count repetitions in one keypoint file")
    p_count.add_argument("checkpoint", help="model checkpoint")
    p_count.add_argument("keypoints", help="keypoint CSV of the video")
    p_count.add_argument("--class", dest="action_class", help="action class (default: auto-select)")
    p_count.add_argument("--upper", type=float, help="upper trigger bound")
    p_count.add_argument("--lower", type=float, help="lower trigger bound")
    p_count.add_argument("--window", type=int, help="odd smoothing window width")
    p_count.add_argument("--events", help="write the (arm, fire) event log as JSON here")
    p_count.set_defaults(func=cmd_count)

    p_eval = commands.add_parser("eval", help="score predictions against ground truth")
    p_eval.add_argument("predictions", help="predictions count CSV")
    p_eval.add_argument("ground_truth", help="ground-truth count CSV")
    p_eval.add_argument("--out", help="write the per-video table here")
    p_eval.set_defaults(func=cmd_eval)

    p_check = commands.add_parser("gradcheck", help="verify gradients against finite differences")
    p_check.add_argument("--configs", type=int, default=20, help="number of random configurations")
    p_check.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        if isinstance(exc.code, str):
            print(exc.code, file=sys.stderr)
            return EXIT_USAGE
        return EXIT_OK if not exc.code else EXIT_USAGE

    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except (NumericError, GradientCheckError, ShapeError) as exc:
        print(f"posecount: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ParseError, ValidationError, DataError, ConfigError) as exc:
        print(f"posecount: {exc}", file=sys.stderr)
        return EXIT_DATA
    except PoseCountError as exc:
        print(f"posecount: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
