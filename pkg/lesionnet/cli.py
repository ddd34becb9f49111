"""
Command-line interface for lesionnet
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Callable, Dict, List, NoReturn, Optional, Sequence

import numpy as np

from . import __version__
from .datapipe import (
    BALANCED_TARGETS,
    CLASS_NAMES,
    SPLITS,
    DatasetManifest,
    ManifestDataset,
    NormalizationStats,
    materialize,
    parse_manifest,
    plan_balance,
    read_plan,
    read_split_file,
    stratified_split,
    write_plan,
    write_split_file,
)
from .evaluation import evaluate, write_score_table
from .exceptions import (
    CheckpointException,
    ConfigValidationException,
    InvalidArgumentException,
    LesionNetException,
    ManifestException,
)
from .gradcheck_suite import SCOPES, format_gradcheck_table, run_gradcheck_suite
from .model import DenseNet, import_weights, plan_architecture, reinitialize_trainable
from .run_config import RunConfig
from .tensor import set_debug_checks
from .trainer import Checkpoint, TrainingLogWriter, load_checkpoint, train

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


class _ArgumentParser(argparse.ArgumentParser):
    """Usage errors exit with status 1."""

    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _epilog() -> str:
    return "configuration keys (section.key = default):\n" + RunConfig.describe_keys()


def create_parser() -> argparse.ArgumentParser:
    """Create the command-line argument parser."""
    common = _ArgumentParser(add_help=False)
    common.add_argument("--config", help="configuration file (default: $LESIONNET_CONFIG)")
    common.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="override one configuration value; repeatable",
    )
    common.add_argument("--seed", type=int, help="shorthand for --set run.seed=N")
    common.add_argument("--workers", type=int, help="shorthand for --set data.workers=N")
    common.add_argument("--debug", action="store_true", help="debug logging and finite checks")

    parser = _ArgumentParser(
        prog="lesionnet",
        description="DenseNet-BC with joint softmax and center loss for dermoscopic lesion classification",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=_epilog(),
    )
    parser.add_argument("--version", action="version", version=f"lesionnet {__version__}")
    subparsers = parser.add_subparsers(dest="command", help="Available commands")

    def add(name: str, help_text: str) -> argparse.ArgumentParser:
        return subparsers.add_parser(
            name,
            parents=[common],
            help=help_text,
            description=help_text,
            formatter_class=argparse.RawDescriptionHelpFormatter,
            epilog=_epilog(),
        )

    split_parser = add("split", "Stratified train/test split of a ground-truth manifest")
    split_parser.add_argument("--manifest", help="ground-truth file (data.manifest)")
    split_parser.add_argument("--image-dir", help="source image directory (data.image_dir)")
    split_parser.add_argument("--ratio", type=float, help="training share per class (data.split_ratio)")
    split_parser.add_argument("--out", help="split file to write (paths.split_file)")

    plan_parser = add("plan", "Plan the class-balancing augmentation of a split")
    plan_parser.add_argument("--split", help="split file to read (paths.split_file)")
    plan_parser.add_argument("--targets", choices=("balanced", "none"), help="balancing targets (data.targets)")
    plan_parser.add_argument("--out", help="plan file to write (paths.plan_file)")

    mat_parser = add("materialize", "Write the augmented dataset described by a plan")
    mat_parser.add_argument("--plan", help="plan file to read (paths.plan_file)")
    mat_parser.add_argument("--out-dir", help="output directory (paths.data_dir)")
    mat_parser.add_argument("--output-size", type=int, help="crop and resize outputs (data.output_size)")
    mat_parser.add_argument("--overwrite", action="store_true", help="replace split directories with foreign content")

    train_parser = add("train", "Train the network on the materialized training split")
    train_parser.add_argument("--resume", help="checkpoint to resume from (run.resume)")

    eval_parser = add("eval", "Evaluate a checkpoint on a materialized split")
    eval_parser.add_argument("checkpoint", nargs="?", help="checkpoint file (default: latest in paths.checkpoint_dir)")
    eval_parser.add_argument("--split", choices=SPLITS, default="test", help="split to evaluate")

    grad_parser = add("gradcheck", "Finite-difference check of every layer and loss")
    grad_parser.add_argument("scope", nargs="?", choices=SCOPES, default="all", help="cases to run")
    grad_parser.add_argument("--dtype", choices=("float64", "float32"), default="float64", help="check precision")
    grad_parser.add_argument("--draws", type=int, default=2, help="random shapes per case")
    grad_parser.add_argument("--tol", type=float, default=1e-3, help="relative error tolerance")

    add("arch-dump", "Print the layer plan of the configured architecture")
    return parser


def _overrides(args: argparse.Namespace) -> List[str]:
    flags = {
        "seed": "run.seed",
        "workers": "data.workers",
        "manifest": "data.manifest",
        "image_dir": "data.image_dir",
        "ratio": "data.split_ratio",
        "targets": "data.targets",
        "output_size": "data.output_size",
        "plan": "paths.plan_file",
        "out_dir": "paths.data_dir",
        "resume": "run.resume",
    }
    out = list(args.overrides)
    for attr, key in flags.items():
        value = getattr(args, attr, None)
        if value is not None:
            out.append(f"{key}={value}")
    if args.command == "split" and args.out is not None:
        out.append(f"paths.split_file={args.out}")
    if args.command == "plan":
        if args.split is not None:
            out.append(f"paths.split_file={args.split}")
        if args.out is not None:
            out.append(f"paths.plan_file={args.out}")
    return out


def _write_resolved(config: RunConfig, command: str) -> Path:
    path = config.paths.resolve("work_dir") / f"{command}.resolved.cfg"
    config.write_resolved(path)
    logger.info(f"Resolved configuration written to {path}")
    return path


def _manifest(config: RunConfig) -> DatasetManifest:
    if not config.data.manifest:
        raise InvalidArgumentException("data.manifest is not set (use --manifest or --set data.manifest=...)")
    return parse_manifest(config.data.manifest, config.data.image_dir or None)


def _dtype(config: RunConfig) -> np.dtype:
    return np.dtype(config.run.dtype)


def cmd_split(config: RunConfig, args: argparse.Namespace) -> int:
    manifest = _manifest(config)
    spec = stratified_split(manifest, config.data.split_ratio, config.run.seed)
    path = write_split_file(spec, config.paths.resolve("split_file"))
    _write_resolved(config, "split")
    train_counts, test_counts = spec.counts("train"), spec.counts("test")
    print(f"{'class':<6} {'train':>7} {'test':>7}")
    for name, n_train, n_test in zip(CLASS_NAMES, train_counts, test_counts):
        print(f"{name:<6} {n_train:>7} {n_test:>7}")
    print(f"{'total':<6} {sum(train_counts):>7} {sum(test_counts):>7}")
    for w in spec.warnings:
        print(f"warning: {w}")
    print(f"split written to {path}")
    return EXIT_OK


def cmd_plan(config: RunConfig, args: argparse.Namespace) -> int:
    manifest = _manifest(config)
    split = read_split_file(config.paths.resolve("split_file"), manifest, config.run.seed)
    targets = BALANCED_TARGETS if config.data.targets == "balanced" else {}
    plan = plan_balance(split, targets, config.run.seed)
    path = write_plan(plan, config.paths.resolve("plan_file"))
    _write_resolved(config, "plan")
    print(f"{'class':<6} {'train':>8} {'test':>8}")
    for label, name in enumerate(CLASS_NAMES):
        print(f"{name:<6} {plan.totals('train')[label]:>8} {plan.totals('test')[label]:>8}")
    print(f"{'total':<6} {sum(plan.totals('train')):>8} {sum(plan.totals('test')):>8}")
    for w in plan.warnings:
        print(f"warning: {w}")
    print(f"plan written to {path}")
    return EXIT_OK


def cmd_materialize(config: RunConfig, args: argparse.Namespace) -> int:
    manifest = _manifest(config)
    plan = read_plan(config.paths.resolve("plan_file"))
    report = materialize(
        plan,
        manifest,
        config.paths.resolve("data_dir"),
        output_size=config.data.output_size or None,
        workers=config.data.workers,
        overwrite=args.overwrite,
    )
    _write_resolved(config, "materialize")
    print(f"{report.records} images written to {report.output_dir} ({report.copies} copies)")
    return EXIT_OK


def cmd_train(config: RunConfig, args: argparse.Namespace) -> int:
    seed = config.run.seed
    dataset = ManifestDataset(
        config.paths.resolve("data_dir") / "train", config.arch.input_size, workers=config.data.workers
    )
    resume: Optional[Checkpoint] = load_checkpoint(config.run.resume) if config.run.resume else None
    if resume is not None and "norm.mean" in resume:
        dataset.stats = NormalizationStats.from_arrays(resume.tensors)
    else:
        dataset.stats = dataset.normalization_stats(config.data.norm_sample or None, seed)
    logger.info(f"Normalization mean {dataset.stats.mean}, std {dataset.stats.std}")

    model = DenseNet(config.arch, seed, _dtype(config))
    if config.run.init_weights:
        report = import_weights(model, load_checkpoint(config.run.init_weights), strict=False)
        if report.mismatched:
            logger.warning(f"{len(report.mismatched)} tensors not imported: {'; '.join(report.mismatched)}")
        if config.run.reinitialize and config.arch.freeze_boundary is not None:
            reinitialize_trainable(model, seed)

    _write_resolved(config, "train")
    result = train(
        model,
        dataset,
        config.loss,
        config.optim,
        seed=seed,
        sinks=[TrainingLogWriter(config.paths.resolve("log_file"))],
        checkpoint_dir=config.paths.resolve("checkpoint_dir"),
        resume=resume,
        config_digest=config.digest(),
        metadata=config.to_metadata(),
        stats=dataset.stats,
    )
    print(f"trained {result.steps} iterations; checkpoint {result.checkpoint_path}")
    return EXIT_OK


def _latest_checkpoint(directory: Path) -> Path:
    found = sorted(directory.glob("iter_*.dckp"))
    if not found:
        raise InvalidArgumentException(f"no checkpoint given and none found in {directory}")
    return found[-1]


def _warn_config_mismatch(checkpoint: Checkpoint, config: RunConfig) -> None:
    if checkpoint.config_digest == config.digest():
        return
    current = config.to_metadata()
    changed = sorted(k for k, v in current.items() if k in checkpoint.metadata and checkpoint.metadata[k] != v)
    logger.warning("!" * 72)
    logger.warning("CHECKPOINT WAS WRITTEN WITH A DIFFERENT CONFIGURATION")
    for key in changed:
        logger.warning(f"  {key}: checkpoint {checkpoint.metadata[key]!r}, now {current[key]!r}")
    logger.warning("!" * 72)


def cmd_eval(config: RunConfig, args: argparse.Namespace) -> int:
    path = Path(args.checkpoint) if args.checkpoint else _latest_checkpoint(config.paths.resolve("checkpoint_dir"))
    checkpoint = load_checkpoint(path)
    _warn_config_mismatch(checkpoint, config)

    model = DenseNet(config.arch, config.run.seed, _dtype(config))
    imported = import_weights(model, checkpoint, strict=True)
    missing = [n for n in model.state_arrays() if n not in imported.matched]
    if missing:
        raise CheckpointException(f"{path} lacks {len(missing)} model tensors, e.g. {missing[0]!r}")
    if "norm.mean" in checkpoint:
        stats = NormalizationStats.from_arrays(checkpoint.tensors)
    else:
        logger.warning(f"{path} carries no normalization statistics; using mean 0, std 1")
        stats = NormalizationStats()

    dataset = ManifestDataset(
        config.paths.resolve("data_dir") / args.split, config.arch.input_size, stats, config.data.workers
    )
    result = evaluate(model, dataset, config.optim.batch_size)
    report = result.report()
    write_score_table(result.scores, config.paths.resolve("scores_file"))
    metrics_path = config.paths.resolve("metrics_file")
    metrics_path.parent.mkdir(parents=True, exist_ok=True)
    metrics_path.write_text(report.to_key_values(), encoding="utf-8")
    _write_resolved(config, "eval")
    print(report.to_text(), end="")
    return EXIT_OK


def cmd_gradcheck(config: RunConfig, args: argparse.Namespace) -> int:
    dtype = np.dtype(args.dtype)
    step = 1e-4 if dtype == np.float64 else 1e-2
    rows = run_gradcheck_suite(args.scope, config.run.seed, dtype, args.draws, args.tol, step)
    print(format_gradcheck_table(rows))
    return EXIT_OK if all(r.passed for r in rows) else EXIT_RUNTIME


def cmd_arch_dump(config: RunConfig, args: argparse.Namespace) -> int:
    plan = plan_architecture(config.arch)
    model = DenseNet(config.arch, config.run.seed)
    counts = model.record_parameter_counts()
    width = max(len(r.name) for r in plan)
    print(plan.table())
    print()
    print(f"{'record':<{width}}  {'parameters':>10}")
    for r in plan:
        print(f"{r.name:<{width}}  {counts[r.name]:>10}")
    print()
    for key, value in plan.summary().items():
        print(f"{key} = {value}")
    print(f"parameters = {model.parameter_count()}")
    print(f"trainable_parameters = {model.parameter_count(trainable_only=True)}")
    return EXIT_OK


COMMANDS: Dict[str, Callable[[RunConfig, argparse.Namespace], int]] = {
    "split": cmd_split,
    "plan": cmd_plan,
    "materialize": cmd_materialize,
    "train": cmd_train,
    "eval": cmd_eval,
    "gradcheck": cmd_gradcheck,
    "arch-dump": cmd_arch_dump,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main entry point."""
    parser = create_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE
    if not args.command:
        parser.print_help()
        return EXIT_USAGE

    debug = args.debug or RunConfig._debug()
    logging.basicConfig(level=logging.DEBUG if debug else logging.INFO, format=LOG_FORMAT)
    set_debug_checks(debug)

    try:
        config = RunConfig.load(args.config, _overrides(args))
        return COMMANDS[args.command](config, args)
    except ConfigValidationException as e:
        for problem in e.problems:
            logger.error(problem)
        return EXIT_VALIDATION
    except (InvalidArgumentException, ManifestException) as e:
        logger.error(str(e))
        return EXIT_VALIDATION
    except (LesionNetException, OSError) as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_RUNTIME
    except KeyboardInterrupt:
        logger.error("Operation cancelled by user")
        return EXIT_RUNTIME
    except Exception as e:
        logger.exception(f"Unexpected error: {type(e).__name__}: {e}")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
