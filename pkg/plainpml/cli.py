__all__ = [
    "cmd_ablate",
    "cmd_cv",
    "cmd_grid",
    "cmd_losses",
    "cmd_sweep",
    "cmd_synth",
    "cmd_timing",
    "cmd_train",
    "main",
]


# standard library
import sys
from argparse import ArgumentParser, BooleanOptionalAction, Namespace
from dataclasses import fields, replace
from enum import Enum
from logging import WARNING, basicConfig, getLogger
from pathlib import Path
from typing import Any, NoReturn, Optional, Sequence, Union


# dependencies
import pandas as pd
from tomlkit import dumps
from .consts import PROGRESS
from .dataset import (
    Dataset,
    DatasetError,
    SynthConfig,
    load_dataset,
    make_clean,
    make_folds,
    save_dataset,
    synthesize_pml,
)
from .experiment import (
    METRICS,
    ExperimentConfig,
    RunResult,
    complexity_fit,
    epochs_to_fraction,
    measure_timing,
    prepare,
    run_cv,
    run_grid,
    to_reports,
)
from .graph import build_graphs
from .io import save_reports, save_results, save_table
from .metrics import evaluate, mean_instance_auc
from .network import LossKind, save_params
from .trainer import TrainState, VariantKind, predict, train


# type hints
PathLike = Union[Path, str]
Runs = list[tuple[dict[str, ExperimentConfig], Any]]


# constants
EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3
ABLATION_VARIANTS = (
    VariantKind.PLAIN,
    VariantKind.DNN_ONLY,
    VariantKind.NO_LABEL_SIM,
    VariantKind.NO_INSTANCE_SIM,
)
SWEEPABLE = ("k", "rho", "steps", "gamma", "alpha", "beta", "eta")


# module logger
logger = getLogger(__name__)


def cmd_synth(
    in_path: PathLike,
    out_path: PathLike,
    r: int,
    seed: Optional[int],
) -> dict[str, float]:
    """Corrupt a clean multi-label file with r false positives per example.

    Returns:
        Statistics of the true and candidate label counts.

    """
    clean = load_dataset(in_path, normalize=False)
    corrupted = synthesize_pml(clean, SynthConfig(r, seed))
    save_dataset(corrupted, out_path)

    assert corrupted.truth is not None
    truth_counts = corrupted.truth.sum(axis=1)
    cand_counts = corrupted.candidates.sum(axis=1)
    return {
        "n": corrupted.meta.n,
        "L": corrupted.meta.L,
        "mean_truth": float(truth_counts.mean()),
        "mean_candidates": float(cand_counts.mean()),
        "mean_injected": float((cand_counts - truth_counts).mean()),
        "all_candidates": int((cand_counts == corrupted.meta.L).sum()),
    }


def cmd_train(
    config: ExperimentConfig,
    outdir: Path,
    *,
    test_path: Optional[PathLike] = None,
    progress: bool = PROGRESS,
) -> TrainState:
    """Train on a whole dataset and save the checkpoint and learning curve."""
    dataset = prepare(load_dataset(config.dataset), config)
    graphs = None

    if config.variant is not VariantKind.DNN_ONLY:
        graphs = build_graphs(dataset.features, dataset.candidates, config.graph_config())

    evaluation = None

    if test_path is not None:
        test = load_dataset(test_path)

        if test.truth is None:
            raise DatasetError("The test file needs truth labels.")

        evaluation = test.features, test.truth

    cfg = config.train_config(dataset.meta.n)
    state = train(dataset, graphs, cfg, config.variant, evaluation=evaluation, progress=progress)

    outdir.mkdir(parents=True, exist_ok=True)
    save_params(state.params, outdir / "checkpoint.npz")
    save_table(pd.DataFrame([r.to_dict() for r in state.history]), outdir / "curves.csv")

    if dataset.truth is not None:
        args = dataset.truth, dataset.candidates
        y_auc = mean_instance_auc(dataset.candidates.astype(float), *args)
        z_auc = mean_instance_auc(state.Z, *args)
        print(f"Disambiguation AUC on candidates: Z={z_auc:.4f}, Y={y_auc:.4f}")

    if evaluation is not None:
        print(evaluate(predict(state.params, evaluation[0]), evaluation[1]))

    return state


def cmd_cv(
    config: ExperimentConfig,
    outdir: Path,
    *,
    dump_graphs: bool = False,
    progress: bool = PROGRESS,
) -> RunResult:
    """Cross-validate one configuration and write results.json and curves.csv."""
    dataset = load_dataset(config.dataset)
    plan = make_folds(dataset.meta, config.folds, config.seed)
    dump_dir = outdir / "graphs" if dump_graphs else None
    runs: Runs = [({config.variant.value: config}, plan)]
    return execute(dataset, runs, config, outdir, dump_dir=dump_dir, progress=progress)[0]


def cmd_ablate(
    config: ExperimentConfig,
    outdir: Path,
    *,
    seeds: Sequence[int] = (),
    progress: bool = PROGRESS,
) -> list[RunResult]:
    """Cross-validate the method and its three ablations over shared folds."""
    dataset = load_dataset(config.dataset)
    seeds = list(seeds) or [config.seed]
    runs: Runs = []

    for seed in seeds:
        plan = make_folds(dataset.meta, config.folds, seed)
        configs = {
            run_name(variant.value, seed, seeds): replace(config, variant=variant, seed=seed)
            for variant in ABLATION_VARIANTS
        }
        runs.append((configs, plan))

    results = execute(dataset, runs, config, outdir, progress=progress)
    table = summarize(results, seeds)
    save_table(table, outdir / "ablation.csv")
    print(table.to_string(index=False))
    return results


def cmd_losses(
    config: ExperimentConfig,
    outdir: Path,
    *,
    seeds: Sequence[int] = (),
    progress: bool = PROGRESS,
) -> pd.DataFrame:
    """Cross-validate every loss kind and compare accuracy and convergence."""
    dataset = load_dataset(config.dataset)
    seeds = list(seeds) or [config.seed]
    runs: Runs = []

    for seed in seeds:
        plan = make_folds(dataset.meta, config.folds, seed)
        configs = {
            run_name(kind.value, seed, seeds): replace(config, loss=kind, seed=seed, monitor=True)
            for kind in LossKind
        }
        runs.append((configs, plan))

    results = execute(dataset, runs, config, outdir, progress=progress)
    table = summarize(results, seeds)
    curves = pd.concat([result.curves() for result in results], ignore_index=True)
    speeds: dict[str, int] = {}

    if not curves.empty:
        names = curves["run"].str.split("@").str[0]

        for name, frame in curves.groupby(names, sort=False):
            curve = frame.groupby("epoch")["test_average_precision"].mean()
            speeds[name] = epochs_to_fraction(curve.to_numpy())

    table["epochs_to_95"] = table["run"].map(speeds)
    save_table(table, outdir / "losses.csv")
    print(table.to_string(index=False))
    return table


def cmd_sweep(
    config: ExperimentConfig,
    outdir: Path,
    param: str,
    values: Sequence[float],
    *,
    progress: bool = PROGRESS,
) -> list[RunResult]:
    """Cross-validate over values of one hyperparameter."""
    if param not in SWEEPABLE:
        raise ValueError(f"Cannot sweep {param!r}: choose from {SWEEPABLE}.")

    cast = int if param in ("k", "steps") else float
    dataset = load_dataset(config.dataset)
    plan = make_folds(dataset.meta, config.folds, config.seed)
    configs = {
        f"{param}={cast(value)}": replace(config, **{param: cast(value)}).validate()
        for value in values
    }
    results = execute(dataset, [(configs, plan)], config, outdir, progress=progress)
    table = summarize(results, [config.seed])
    save_table(table, outdir / "sweep.csv")
    print(table.to_string(index=False))
    return results


def cmd_timing(
    config: ExperimentConfig,
    outdir: Path,
    *,
    sizes: Sequence[int] = (),
    dim: int = 72,
    labels: int = 6,
) -> pd.DataFrame:
    """Measure the stage timings on a dataset or on synthetic data of given sizes."""
    if sizes:
        datasets = [make_clean(n, dim, labels, seed=config.seed) for n in sizes]
    else:
        datasets = [load_dataset(config.dataset)]

    rows = [measure_timing(prepare(dataset, config), config) for dataset in datasets]
    table = pd.DataFrame(rows)
    outdir.mkdir(parents=True, exist_ok=True)
    save_table(table, outdir / "timing.csv")
    print(table.to_string(index=False))

    if len(rows) > 1:
        slope, intercept, r2 = complexity_fit(
            table["n"].to_list(),
            table["propagation_epoch_s"].to_list(),
            L=labels,
            k=config.k,
        )
        print(f"Propagation fit: slope={slope:.3g}, intercept={intercept:.3g}, R^2={r2:.3f}")

    return table


def cmd_grid(
    config: ExperimentConfig,
    outdir: Path,
    *,
    progress: bool = PROGRESS,
) -> ExperimentConfig:
    """Select alpha, beta, and eta on a validation split; write grid.csv and best.toml."""
    dataset = load_dataset(config.dataset)
    best, table = run_grid(dataset, config, progress=progress)

    outdir.mkdir(parents=True, exist_ok=True)
    save_table(table, outdir / "grid.csv")
    echo = {key: value for key, value in best.to_dict().items() if value is not None}

    with open(outdir / "best.toml", "w") as file:
        file.write(dumps(echo))

    print(f"Best: alpha={best.alpha}, beta={best.beta}, eta={best.eta}")
    return best


def execute(
    dataset: Dataset,
    runs: Runs,
    config: ExperimentConfig,
    outdir: Path,
    *,
    dump_dir: Optional[Path] = None,
    progress: bool = PROGRESS,
) -> list[RunResult]:
    """Run cross-validations and write their outputs, even after a failure."""
    results: list[RunResult] = []
    hashes: dict[str, str] = {}

    try:
        for configs, plan in runs:
            seed = next(iter(configs.values())).seed
            hashes[str(seed)] = plan.digest
            results.extend(run_cv(dataset, configs, plan, dump_dir=dump_dir, progress=progress))
    except Exception as error:
        results.extend(getattr(error, "partial", []))
        write_outputs(outdir, dataset, config, results, hashes, truncated=True)
        raise

    write_outputs(outdir, dataset, config, results, hashes, truncated=False)
    return results


def write_outputs(
    outdir: Path,
    dataset: Dataset,
    config: ExperimentConfig,
    results: list[RunResult],
    hashes: dict[str, str],
    *,
    truncated: bool,
) -> None:
    """Write results.json, results.nc, and curves.csv."""
    outdir.mkdir(parents=True, exist_ok=True)
    meta = dataset.meta
    save_results(
        {
            "config": config.to_dict(),
            "data": {"n": meta.n, "d": meta.d, "L": meta.L},
            "fold_hash": hashes,
            "truncated": truncated,
            "runs": {result.name: result.to_dict() for result in results},
        },
        outdir / "results.json",
    )

    if results:
        save_reports(to_reports(results, config), outdir / "results.nc")
        curves = [result.curves() for result in results]
        save_table(pd.concat(curves, ignore_index=True), outdir / "curves.csv")


def summarize(results: list[RunResult], seeds: Sequence[int]) -> pd.DataFrame:
    """Aggregate the metrics of runs over folds (and seeds)."""
    rows = []

    for result in results:
        name = result.name.split("@")[0]

        for fold, report in enumerate(result.reports):
            rows.append({"run": name, "fold": fold, **report.to_dict()})

    if not rows:
        return pd.DataFrame(columns=["run"])

    frame = pd.DataFrame(rows)
    grouped = frame.groupby("run", sort=False)[list(METRICS)]
    table = grouped.mean().add_suffix("_mean").join(grouped.std(ddof=0).add_suffix("_std"))
    return table.reset_index().assign(seeds=len(seeds))


def run_name(name: str, seed: int, seeds: Sequence[int]) -> str:
    """Name a run, with its seed if several seeds are used."""
    return f"{name}@{seed}" if len(seeds) > 1 else name


class Parser(ArgumentParser):
    """Argument parser exiting with the usage code on errors."""

    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def add_config_options(parser: ArgumentParser, *, dataset: bool = True) -> None:
    """Add the dataset argument and one option per config key."""
    if dataset:
        parser.add_argument("dataset", nargs="?", help="Path of the PML dataset file.")

    parser.add_argument("--config", type=Path, help="Flat key = value config file.")
    parser.add_argument("--out", type=Path, default=Path("."), help="Output directory.")
    parser.add_argument("--progress", action=BooleanOptionalAction, default=PROGRESS)

    for f in fields(ExperimentConfig):
        if f.name == "dataset":
            continue

        flag = f"--{f.name.replace('_', '-')}"

        if isinstance(f.default, bool):
            parser.add_argument(flag, dest=f.name, action=BooleanOptionalAction, default=None)
        elif isinstance(f.default, Enum):
            choices = [member.value for member in type(f.default)]
            parser.add_argument(flag, dest=f.name, choices=choices, default=None)
        elif f.default is None:
            parser.add_argument(flag, dest=f.name, type=int, default=None)
        else:
            parser.add_argument(flag, dest=f.name, type=type(f.default), default=None)


def make_config(args: Namespace) -> ExperimentConfig:
    """Create a config from a config file and command-line overrides."""
    overrides = {
        f.name: getattr(args, f.name, None)
        for f in fields(ExperimentConfig)
        if getattr(args, f.name, None) is not None
    }

    if args.config is not None:
        return ExperimentConfig.from_toml(args.config, **overrides)

    return ExperimentConfig.from_dict(overrides)


def make_parser() -> ArgumentParser:
    """Create the argument parser of all subcommands."""
    parser = Parser(
        prog="plainpml",
        description="Partial multi-label learning with graph disambiguation.",
    )
    parser.add_argument("-v", "--verbose", action="count", default=0)
    commands = parser.add_subparsers(dest="command", required=True, parser_class=Parser)

    synth = commands.add_parser("synth", help="Inject false-positive labels into clean data.")
    synth.add_argument("in_path", type=Path)
    synth.add_argument("out_path", type=Path)
    synth.add_argument("--r", type=int, required=True)
    synth.add_argument("--seed", type=int, default=None)

    train_ = commands.add_parser("train", help="Train on a whole dataset.")
    add_config_options(train_)
    train_.add_argument("--test", type=Path, help="Held-out dataset to evaluate.")

    cv = commands.add_parser("cv", help="Cross-validate one configuration.")
    add_config_options(cv)
    cv.add_argument("--dump-graphs", action="store_true")

    ablate = commands.add_parser("ablate", help="Compare the method with its ablations.")
    add_config_options(ablate)
    ablate.add_argument("--seeds", type=int_list, default=[])

    losses = commands.add_parser("losses", help="Compare the four loss functions.")
    add_config_options(losses)
    losses.add_argument("--seeds", type=int_list, default=[])

    sweep = commands.add_parser("sweep", help="Cross-validate over values of a hyperparameter.")
    add_config_options(sweep)
    sweep.add_argument("--param", choices=SWEEPABLE, required=True)
    sweep.add_argument("--values", type=float_list, required=True)

    timing = commands.add_parser("timing", help="Measure the stage timings.")
    add_config_options(timing)
    timing.add_argument("--sizes", type=int_list, default=[])
    timing.add_argument("--dim", type=int, default=72)
    timing.add_argument("--labels", type=int, default=6)

    grid = commands.add_parser("grid", help="Grid-search alpha, beta, and eta.")
    add_config_options(grid)
    return parser


def int_list(text: str) -> list[int]:
    """Parse a comma-separated list of integers."""
    return [int(value) for value in text.split(",") if value]


def float_list(text: str) -> list[float]:
    """Parse a comma-separated list of floats."""
    return [float(value) for value in text.split(",") if value]


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run the command line and return its exit code."""
    parser = make_parser()
    args = parser.parse_args(argv)
    basicConfig(
        level=WARNING - 10 * min(args.verbose, 2),
        format="%(asctime)s %(name)s %(levelname)s: %(message)s",
    )

    try:
        return dispatch(args, parser)
    except (DatasetError, OSError) as error:
        logger.error(f"Data error: {error}")
        return EXIT_DATA
    except FloatingPointError as error:
        logger.error(f"Numerical failure: {error}")
        return EXIT_NUMERICAL
    except ValueError as error:
        logger.error(f"Usage error: {error}")
        return EXIT_USAGE


def dispatch(args: Namespace, parser: ArgumentParser) -> int:
    """Run the subcommand of parsed arguments."""
    if args.command == "synth":
        stats = cmd_synth(args.in_path, args.out_path, args.r, args.seed)
        print(", ".join(f"{key}={value:g}" for key, value in stats.items()))
        return EXIT_OK

    config = make_config(args)

    if not config.dataset and not (args.command == "timing" and args.sizes):
        parser.error("a dataset path is required.")

    if args.command == "train":
        cmd_train(config, args.out, test_path=args.test, progress=args.progress)
    elif args.command == "cv":
        result = cmd_cv(config, args.out, dump_graphs=args.dump_graphs, progress=args.progress)
        print(", ".join(f"{m}={result.mean[m]:.4f}±{result.std[m]:.4f}" for m in METRICS))
    elif args.command == "ablate":
        cmd_ablate(config, args.out, seeds=args.seeds, progress=args.progress)
    elif args.command == "losses":
        cmd_losses(config, args.out, seeds=args.seeds, progress=args.progress)
    elif args.command == "sweep":
        cmd_sweep(config, args.out, args.param, args.values, progress=args.progress)
    elif args.command == "timing":
        cmd_timing(config, args.out, sizes=args.sizes, dim=args.dim, labels=args.labels)
    elif args.command == "grid":
        cmd_grid(config, args.out, progress=args.progress)

    return EXIT_OK
