"""
Command-line entry point.

    reuse-learn <command> [--config PATH] [--seed N] [--out DIR] [overrides]

Commands: stats, patterns, prepare, train, evaluate, simulate, compare, synth.
Results go to stdout and to files inside the output directory; logs go to
stderr.
"""
import argparse
import sys
import uuid
from pathlib import Path
from typing import Callable, Dict, List, Optional

import pandas as pd

from src.shared.config import RunConfig, load_config
from src.shared.exceptions import USAGE_ERRORS, NotFoundError, ReuseLearnError, ValidationError
from src.shared.logging import configure_logging, get_logger, set_run_id
from src.shared.schemas import PolicyName
from src.services.trace_io.schemas import Trace
from src.services.trace_io.service import load_trace, trace_stats, write_plain, write_stats_csv
from src.services.trace_io.synthetic import cyclic_trace, phased_trace, random_trace
from src.services.locality.schemas import FeatureParams
from src.services.locality.service import (
    address_deltas,
    backward_rd,
    export_rd_timeseries,
    rd_histogram,
)
from src.services.clustering.service import auto_partition, export_clusters
from src.services.dataset import repository as dataset_repository
from src.services.dataset.service import build_dataset, split
from src.services.rnn.repository import (
    load_checkpoint,
    save_checkpoint,
    write_history_csv,
    write_predictions_csv,
)
from src.services.rnn.schemas import TrainConfig
from src.services.rnn.service import evaluate, train
from src.services.policies.predictors import OracleForwardRdPredictor, PrecomputedPredictor
from src.services.policies.repository import (
    plot_mrc_svg,
    plot_rd_scatter_svg,
    read_results_csv,
    results_frame,
    write_results_csv,
)
from src.services.policies.schemas import Mrc, Predictor
from src.services.policies.service import TWO_Q_MIN_SIZE, default_sizes, mrc

logger = get_logger(__name__)

STATS_CSV = "stats.csv"
RD_HISTOGRAM_CSV = "rd_histogram.csv"
RD_SERIES_CSV = "rd_series.csv"
RD_SCATTER_SVG = "rd_scatter.svg"
CLUSTERS_CSV = "clusters.csv"
TRAINING_LOG_CSV = "training_log.csv"
PREDICTIONS_CSV = "predictions.csv"
RESULTS_CSV = "results.csv"
MRC_SVG = "mrc.svg"
COMPARE_CSV = "compare.csv"


def _trace(config: RunConfig) -> Trace:
    if config.trace_path is None:
        raise ValidationError("no trace given (use --trace or trace_path in the config file)")
    return load_trace(
        config.trace_path, config.trace_format, config.block_size, config.expand_multiblock
    )


def _feature_params(config: RunConfig) -> FeatureParams:
    return FeatureParams(k_avg=config.k_avg, k_freq=config.k_freq)


def _train_config(config: RunConfig) -> TrainConfig:
    return TrainConfig(
        epochs=config.epochs,
        learning_rate=config.learning_rate,
        batch_size=config.batch_size,
        dropout=config.dropout,
        seed=config.seed,
        patience=config.patience,
        lstm_width=config.lstm_width,
        lstm_layers=config.lstm_layers,
        clip_norm=config.clip_norm,
    )


def cmd_stats(config: RunConfig, args: argparse.Namespace) -> None:
    """Trace length, unique blocks and address-delta compression."""
    trace = _trace(config)
    stats = trace_stats(trace)
    write_stats_csv(stats, config.out_dir / STATS_CSV)

    histogram = rd_histogram(backward_rd(trace))
    rows = [(d, c) for d, c in histogram.finite.items()] + [(0, histogram.infinite)]
    pd.DataFrame(rows, columns=["rd", "count"]).to_csv(
        config.out_dir / RD_HISTOGRAM_CSV, index=False
    )

    print(f"length: {stats.length}")
    print(f"unique_blocks: {stats.unique_blocks}")
    print(f"mean_accesses_per_block: {stats.mean_accesses_per_block:.2f}")
    print(f"unique_deltas: {stats.unique_deltas}")
    print(f"delta_compression_ratio: {stats.delta_compression_ratio:.4f}")
    print(f"first_references: {histogram.infinite}")


def cmd_patterns(config: RunConfig, args: argparse.Namespace) -> None:
    """Reuse distance time series, delta clusters and the RD scatter chart."""
    trace = _trace(config)
    config.out_dir.mkdir(parents=True, exist_ok=True)
    with (config.out_dir / RD_SERIES_CSV).open("wb") as writer:
        rows = export_rd_timeseries(trace, writer)

    model = auto_partition(address_deltas(trace), (config.k_min, config.k_max), seed=config.seed)
    with (config.out_dir / CLUSTERS_CSV).open("wb") as writer:
        export_clusters(trace, model, writer)

    if config.svg:
        plot_rd_scatter_svg(backward_rd(trace), config.out_dir / RD_SCATTER_SVG)
    print(f"rd_rows: {rows}")
    print(f"clusters: {model.k}")


def cmd_prepare(config: RunConfig, args: argparse.Namespace) -> None:
    """Cluster, extract features and write the dataset file."""
    trace = _trace(config)
    dataset = build_dataset(
        trace,
        config.sequence_length,
        _feature_params(config),
        (config.k_min, config.k_max),
        seed=config.seed,
        train_ratio=config.train_ratio,
    )
    dataset_repository.save(dataset, config.dataset_path)
    print(f"samples: {len(dataset)}")
    print(f"clusters: {dataset.cluster_model.k}")
    print(f"dataset: {config.dataset_path}")


def cmd_train(config: RunConfig, args: argparse.Namespace) -> None:
    """Train on the prepared dataset and write the checkpoint and loss log."""
    dataset = dataset_repository.load(config.dataset_path)
    train_set, val_set = split(dataset, config.train_ratio, config.train_take, config.val_take)
    checkpoint = train(train_set, val_set, _train_config(config), _feature_params(config))
    save_checkpoint(checkpoint, config.checkpoint_path)
    write_history_csv(checkpoint.history, config.out_dir / TRAINING_LOG_CSV)
    print(f"epochs: {len(checkpoint.history)}")
    print(f"best_epoch: {checkpoint.best_epoch}")
    print(f"best_val_mse: {checkpoint.best_val_mse}")
    print(f"checkpoint: {config.checkpoint_path}")


def cmd_evaluate(config: RunConfig, args: argparse.Namespace) -> None:
    """Compare checkpoint predictions with the validation ground truth."""
    dataset = dataset_repository.load(config.dataset_path)
    checkpoint = load_checkpoint(config.checkpoint_path)
    _, val_set = split(dataset, config.train_ratio, config.train_take, config.val_take)
    report, frame = evaluate(checkpoint, val_set)
    write_predictions_csv(frame, config.out_dir / PREDICTIONS_CSV)
    print(f"samples: {report.samples}")
    print(f"mse: {report.mse}")
    print(f"accuracy: {report.accuracy:.4f}")
    if report.inf_recall is not None:
        print(f"inf_recall: {report.inf_recall:.4f}")


def _popt_predictor(config: RunConfig, trace: Trace) -> Predictor:
    if config.predictor == "oracle":
        return OracleForwardRdPredictor(trace)
    if not config.checkpoint_path.exists():
        raise NotFoundError(
            f"popt needs a trained checkpoint at {config.checkpoint_path} (run train first)"
        )
    return PrecomputedPredictor.from_checkpoint(load_checkpoint(config.checkpoint_path), trace)


def cmd_simulate(config: RunConfig, args: argparse.Namespace) -> None:
    """Miss ratio curves of every configured policy."""
    trace = _trace(config)
    sizes = config.cache_size_list or default_sizes(trace, config.mrc_points)

    curves: List[Mrc] = []
    for policy in config.policy_list:
        policy_sizes = sizes
        if policy == PolicyName.TWO_Q:
            policy_sizes = [s for s in sizes if s >= TWO_Q_MIN_SIZE]
            if len(policy_sizes) < len(sizes):
                logger.warning(
                    "2Q skips sizes below its minimum",
                    skipped=[s for s in sizes if s < TWO_Q_MIN_SIZE],
                )
            if not policy_sizes:
                continue
        predictor = _popt_predictor(config, trace) if policy == PolicyName.POPT else None
        curves.append(mrc(trace, policy, policy_sizes, predictor=predictor, debug=config.debug))

    results = [result for curve in curves for result in curve.results]
    if not results:
        raise ValidationError("the sweep produced no simulations")
    write_results_csv(results, config.out_dir / RESULTS_CSV)
    if config.svg:
        plot_mrc_svg(curves, config.out_dir / MRC_SVG)
    print(results_frame(results).to_string(index=False))


def compare_results(frame: pd.DataFrame) -> pd.DataFrame:
    """
    Per-policy mean miss ratio and mean miss-ratio difference against OPT
    and LRU, over the cache sizes both policies were simulated at.
    """
    if frame.empty:
        raise ValidationError("the results file holds no simulations")
    table = frame.pivot_table(index="cache_size_blocks", columns="policy", values="miss_ratio")
    for baseline in (PolicyName.OPT.value, PolicyName.LRU.value):
        if baseline not in table.columns:
            raise ValidationError(f"the results lack the {baseline} baseline")
    return pd.DataFrame(
        {
            "policy": table.columns,
            "mean_miss_ratio": table.mean().to_numpy(),
            "delta_vs_opt": table.sub(table[PolicyName.OPT.value], axis=0).mean().to_numpy(),
            "delta_vs_lru": table.sub(table[PolicyName.LRU.value], axis=0).mean().to_numpy(),
        }
    )


def cmd_compare(config: RunConfig, args: argparse.Namespace) -> None:
    """Summary of a simulate run against the OPT and LRU baselines."""
    results_path = Path(args.results) if args.results else config.out_dir / RESULTS_CSV
    summary = compare_results(results_frame(read_results_csv(results_path)))
    summary.to_csv(config.out_dir / COMPARE_CSV, index=False)
    print(summary.to_string(index=False))


def cmd_synth(config: RunConfig, args: argparse.Namespace) -> None:
    """Write a synthetic trace in plain format."""
    if args.kind == "cyclic":
        trace = cyclic_trace(args.length, args.period)
    elif args.kind == "phased":
        trace = phased_trace(args.length, args.period)
    else:
        trace = random_trace(args.length, args.alphabet, seed=config.seed)
    path = config.out_dir / f"{args.kind}.trace"
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as writer:
        write_plain(trace, writer)
    print(f"trace: {path}")
    print(f"length: {len(trace)}")


COMMANDS: Dict[str, Callable[[RunConfig, argparse.Namespace], None]] = {
    "stats": cmd_stats,
    "patterns": cmd_patterns,
    "prepare": cmd_prepare,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "simulate": cmd_simulate,
    "compare": cmd_compare,
    "synth": cmd_synth,
}

# Flag name -> RunConfig field, all defaulting to None (= not given)
OVERRIDES = {
    "--seed": ("seed", int),
    "--out": ("out_dir", Path),
    "--trace": ("trace_path", Path),
    "--format": ("trace_format", str),
    "--block-size": ("block_size", int),
    "--k-avg": ("k_avg", int),
    "--k-freq": ("k_freq", int),
    "--sequence-length": ("sequence_length", int),
    "--k-min": ("k_min", int),
    "--k-max": ("k_max", int),
    "--train-ratio": ("train_ratio", float),
    "--train-take": ("train_take", int),
    "--val-take": ("val_take", int),
    "--lstm-width": ("lstm_width", int),
    "--lstm-layers": ("lstm_layers", int),
    "--epochs": ("epochs", int),
    "--learning-rate": ("learning_rate", float),
    "--batch-size": ("batch_size", int),
    "--dropout": ("dropout", float),
    "--patience": ("patience", int),
    "--policies": ("policies", str),
    "--cache-sizes": ("cache_sizes", str),
    "--mrc-points": ("mrc_points", int),
    "--predictor": ("predictor", str),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="flat key=value config file")
    for flag, (dest, kind) in OVERRIDES.items():
        common.add_argument(flag, dest=dest, type=kind, default=None)
    common.add_argument("--expand-multiblock", dest="expand_multiblock", action="store_const", const=True)
    common.add_argument("--no-svg", dest="svg", action="store_const", const=False)
    common.add_argument("--debug", dest="debug", action="store_const", const=True)

    parser = argparse.ArgumentParser(
        prog="reuse-learn",
        description="Learn forward reuse distances from block traces and simulate caches.",
    )
    commands = parser.add_subparsers(dest="command", required=True)
    for name, handler in COMMANDS.items():
        sub = commands.add_parser(name, parents=[common], help=(handler.__doc__ or "").strip())
        if name == "compare":
            sub.add_argument("--results", default=None, help="results CSV (default: <out>/results.csv)")
        if name == "synth":
            sub.add_argument("--kind", choices=["cyclic", "phased", "random"], default="cyclic")
            sub.add_argument("--length", type=int, default=3000)
            sub.add_argument("--period", type=int, default=3)
            sub.add_argument("--alphabet", type=int, default=64)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Run one command; returns the process exit code."""
    args = build_parser().parse_args(argv)
    configure_logging(debug=bool(args.debug))
    set_run_id(uuid.uuid4().hex[:12])

    fields = [dest for dest, _ in OVERRIDES.values()] + ["expand_multiblock", "svg", "debug"]
    try:
        config = load_config(args.config, **{name: getattr(args, name) for name in fields})
        logger.info("Command started", command=args.command, out_dir=str(config.out_dir))
        COMMANDS[args.command](config, args)
    except ReuseLearnError as e:
        logger.error(
            "Command failed",
            command=args.command,
            error_code=e.error_code,
            message=e.message,
            details=e.details,
        )
        print(f"error: {e.message}", file=sys.stderr)
        return 2 if isinstance(e, USAGE_ERRORS) else 1

    logger.info("Command finished", command=args.command)
    return 0


if __name__ == "__main__":
    sys.exit(main())
