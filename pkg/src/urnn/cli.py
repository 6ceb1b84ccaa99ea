"""``urnn`` command line.

Exit codes: 0 success, 2 usage, 3 data or model integrity, 4 numerical failure.
"""
import argparse
import logging
import sys
from typing import List, Optional, Sequence

from urnn.config import resolve_run_config
from urnn.exceptions import (GenerationError, ModelIntegrityError, NumericalError, SceneCompletenessError,
                             SceneFormatError, UsageError)
from urnn.experiment import DEFAULT_ENCODERS, ExperimentRunner
from urnn.logs import get_default_logging_service
from urnn.metrics import format_table
from urnn.nn import CellKind, EncoderVariant, PoolingKind

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INTEGRITY = 3
EXIT_NUMERICAL = 4

ENCODER_CHOICES = [v.value for v in EncoderVariant]
CELL_CHOICES = [k.value for k in CellKind]
POOL_CHOICES = [k.value for k in PoolingKind]


def _tokens(value: Optional[str]) -> List[str]:
    return [t.strip() for t in (value or "").split(",") if t.strip()]


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI or .env config file (default: $URNN_CONFIG)")
    common.add_argument("--obs-len", type=int, dest="obs_len")
    common.add_argument("--pred-len", type=int, dest="pred_len")
    common.add_argument("--seed", type=int)
    common.add_argument("--jobs", type=int)
    common.add_argument("--deterministic", action="store_const", const=True, default=None,
                        help="single worker, fixed reduction order")
    common.add_argument("--precision", choices=["float64", "float32"])
    common.add_argument("-v", "--verbose", action="store_true")
    return common


def _model_parser() -> argparse.ArgumentParser:
    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("--encoder", choices=ENCODER_CHOICES)
    model.add_argument("--cell", choices=CELL_CHOICES)
    model.add_argument("--pool", choices=POOL_CHOICES, dest="pooling")
    model.add_argument("--max-epochs", type=int, dest="max_epochs")
    return model


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="urnn", description="Pedestrian trajectory forecasting experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    common, model = _common_parser(), _model_parser()

    train = sub.add_parser("train", parents=[common, model], help="train a model and write it with a manifest")
    train.add_argument("--data", required=True)
    train.add_argument("--val", help="validation scene file (default: split --data)")
    train.add_argument("--out", required=True, help="output directory")

    evaluate = sub.add_parser("eval", parents=[common], help="evaluate model files and baselines")
    evaluate.add_argument("--data", required=True)
    evaluate.add_argument("--model", action="append", default=[], dest="models")
    evaluate.add_argument("--baseline", default="", help="comma separated: cv,kalman")
    evaluate.add_argument("--types", help="comma separated scene types, e.g. III")
    evaluate.add_argument("--bucket", default="overall")
    evaluate.add_argument("--out", help="CSV table")

    baseline = sub.add_parser("baseline", parents=[common], help="evaluate the learning-free predictors")
    baseline.add_argument("--data", required=True)
    baseline.add_argument("--baseline", default="cv,kalman")
    baseline.add_argument("--types")
    baseline.add_argument("--bucket", default="overall")
    baseline.add_argument("--out")

    predict = sub.add_parser("predict", parents=[common], help="write forecasts as ndjson")
    predict.add_argument("--model", required=True)
    predict.add_argument("--data", required=True)
    predict.add_argument("--out", required=True)

    ablation = sub.add_parser("ablation", parents=[common, model], help="encoder x cell x pooling grid")
    ablation.add_argument("--data", required=True)
    ablation.add_argument("--encoders", default=",".join(v.value for v in DEFAULT_ENCODERS))
    ablation.add_argument("--cells", default="gru,lstm")
    ablation.add_argument("--pools", help="comma separated (default: --pool or the configured pooling)")
    ablation.add_argument("--seeds", default="0")
    ablation.add_argument("--bucket", default="overall")
    ablation.add_argument("--out", help="CSV table")

    synth = sub.add_parser("synth", parents=[common], help="generate interacting scenes")
    synth.add_argument("-n", type=int, required=True, help="number of scenes; 0 writes an empty file")
    synth.add_argument("--out", required=True)

    categorize = sub.add_parser("categorize", parents=[common], help="tag scenes and print the type histogram")
    categorize.add_argument("--data", required=True)
    categorize.add_argument("--out", help="annotated ndjson copy")
    return parser


def _overrides(args: argparse.Namespace) -> dict:
    keys = ["obs_len", "pred_len", "seed", "jobs", "deterministic", "precision",
            "encoder", "cell", "pooling", "max_epochs"]
    return {key: getattr(args, key, None) for key in keys}


def _print_table(table):
    print(format_table(table))


def run(args: argparse.Namespace) -> int:
    level = logging.DEBUG if args.verbose else logging.INFO
    logging_service = get_default_logging_service("urnn", level)
    run_config = resolve_run_config(args.config, _overrides(args))
    logging_service.debug(f"{run_config = }")
    runner = ExperimentRunner(run_config, logging_service=logging_service)

    if args.command == "train":
        _, _, report = runner.train(args.data, args.out, val=args.val)
        print(report.to_frame().to_string(index=False))
    elif args.command in ("eval", "baseline"):
        table = runner.eval(args.data, args.models if args.command == "eval" else (),
                            _tokens(args.baseline), _tokens(args.types) or None, args.out, args.bucket)
        _print_table(table)
    elif args.command == "predict":
        runner.predict(args.model, args.data, args.out)
    elif args.command == "ablation":
        try:
            encoders = [EncoderVariant.from_token(t) for t in _tokens(args.encoders)]
            cells = [CellKind.from_token(t) for t in _tokens(args.cells)]
            pools = [PoolingKind.from_token(t) for t in _tokens(args.pools)] or None
            seeds = [int(t) for t in _tokens(args.seeds)]
        except ValueError as e:
            raise UsageError(str(e))
        if not encoders or not cells or not seeds:
            raise UsageError("Ablation needs at least one encoder, cell and seed")
        table = runner.ablation(args.data, encoders, cells, pools, seeds, args.out, args.bucket)
        _print_table(table)
    elif args.command == "synth":
        if args.n < 0:
            raise UsageError(f"-n must be >= 0, got {args.n}")
        runner.synth(args.n, args.out)
    elif args.command == "categorize":
        histogram = runner.categorize(args.data, args.out)
        total = sum(histogram[k] for k in ("I", "II", "III", "IV")) or 1
        for key, count in histogram.items():
            print(f"{key:<8} {count:>6} {100.0 * count / total:6.1f}%")
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE

    logger = get_default_logging_service("urnn")
    try:
        return run(args)
    except NumericalError as e:
        logger.error(f"Numerical failure: {e}")
        return EXIT_NUMERICAL
    except (SceneFormatError, SceneCompletenessError, ModelIntegrityError) as e:
        logger.error(f"Integrity error: {e}")
        return EXIT_INTEGRITY
    except (UsageError, GenerationError, FileNotFoundError, ValueError) as e:
        logger.error(str(e))
        parser.print_usage(sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
