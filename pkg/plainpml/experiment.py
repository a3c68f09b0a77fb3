__all__ = [
    "ExperimentConfig",
    "FoldTask",
    "RunResult",
    "Reports",
    "complexity_fit",
    "epochs_to_fraction",
    "measure_timing",
    "prepare",
    "run_cv",
    "run_fold",
    "run_grid",
    "runmap",
    "to_reports",
]


# standard library
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from itertools import product
from logging import getLogger
from pathlib import Path
from time import perf_counter
from typing import Any, Iterable, Iterator, Literal, Optional, Sequence, Union


# dependencies
import numpy as np
import pandas as pd
import xarray as xr
from tomlkit import load
from tqdm import tqdm
from typing_extensions import Self
from xarray_dataclasses import AsDataset, Attr, Coordof, Data, Dataof
from .consts import (
    ALPHA,
    ALPHA_GRID,
    BATCH_SIZE,
    BETA,
    BETA_GRID,
    EPOCHS,
    ETA,
    ETA_GRID,
    FOLDS,
    GAMMA,
    JOBS,
    K,
    LABEL_GRAPH_SELF_LOOPS,
    LARGE_SCALE,
    LEARNING_RATE,
    LOSS,
    MSE_ON_LOGITS,
    NORMALIZE,
    PROPAGATE_ON_LOGITS,
    RHO,
    SEED,
    STEPS_LARGE,
    STEPS_SMALL,
    THRESHOLD,
    WEIGHT_DECAY,
)
from .dataset import Dataset, DatasetError, FoldPlan, SynthConfig, make_folds, synthesize_pml
from .graph import GraphConfig, Graphs, SparseSym, build_graphs, dump_graph
from .metrics import EvalReport, evaluate
from .network import LossKind, OptimizerConfig, hidden_sizes, init_params
from .propagation import PropagationConfig, propagate
from .trainer import EpochRecord, TrainConfig, VariantKind, predict, train, train_epoch


# type hints
PathLike = Union[Path, str]
Dims = tuple[Literal["variant"], Literal["fold"]]


# constants
METRICS = ("ranking_loss", "average_precision", "hamming_loss")
STAGES = ("graph_build", "propagation_total", "training_total")


# module logger
logger = getLogger(__name__)


@dataclass(frozen=True)
class ExperimentConfig:
    """Every setting of an experiment, echoed into its results."""

    dataset: str = ""
    variant: VariantKind = VariantKind.PLAIN
    k: int = K
    rho: float = RHO
    alpha: float = ALPHA
    beta: float = BETA
    eta: float = ETA
    gamma: float = GAMMA
    steps: Optional[int] = None
    lr: float = LEARNING_RATE
    weight_decay: float = WEIGHT_DECAY
    loss: LossKind = LossKind(LOSS)
    epochs: int = EPOCHS
    batch_size: int = BATCH_SIZE
    folds: int = FOLDS
    seed: int = SEED
    r: Optional[int] = None
    threshold: float = THRESHOLD
    jobs: int = JOBS
    normalize: bool = NORMALIZE
    mse_on_logits: bool = MSE_ON_LOGITS
    propagate_on_logits: bool = PROPAGATE_ON_LOGITS
    label_graph_self_loops: bool = LABEL_GRAPH_SELF_LOOPS
    resample_per_fold: bool = False
    monitor: bool = False
    full_batch: bool = False
    track_objective: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "variant", VariantKind(self.variant))
        object.__setattr__(self, "loss", LossKind(self.loss))

    @classmethod
    def from_dict(cls, mapping: dict[str, Any]) -> Self:
        """Create a config from a flat mapping, rejecting unknown keys."""
        names = {f.name for f in fields(cls)}

        if unknown := set(mapping) - names:
            raise ValueError(f"Unknown config keys: {sorted(unknown)}.")

        return cls(**mapping).validate()

    @classmethod
    def from_toml(cls, path: PathLike, **overrides: Any) -> Self:
        """Create a config from a flat ``key = value`` file."""
        with open(path) as file:
            mapping = load(file).unwrap()

        mapping.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_dict(mapping)

    def to_dict(self) -> dict[str, Any]:
        """Convert the config to a JSON/TOML-friendly mapping."""
        mapping = asdict(self)
        mapping["variant"] = self.variant.value
        mapping["loss"] = self.loss.value
        return mapping

    def validate(self) -> Self:
        """Raise ValueError if any value is out of its allowed range."""
        checks = {
            "k must be at least 1": self.k >= 1,
            "rho must be positive": self.rho > 0,
            "alpha must be non-negative": self.alpha >= 0,
            "beta must be non-negative": self.beta >= 0,
            "eta must be non-negative": self.eta >= 0,
            "gamma must be positive": self.gamma > 0,
            "steps must be non-negative": self.steps is None or self.steps >= 0,
            "lr must be positive": self.lr > 0,
            "weight_decay must be non-negative": self.weight_decay >= 0,
            "epochs must be non-negative": self.epochs >= 0,
            "batch_size must be at least 1": self.batch_size >= 1,
            "folds must be at least 2": self.folds >= 2,
            "r must be at least 1": self.r is None or self.r >= 1,
            "threshold must be in (0, 1)": 0 < self.threshold < 1,
            "jobs must be at least 1": self.jobs >= 1,
        }

        for message, ok in checks.items():
            if not ok:
                raise ValueError(f"Invalid config: {message}.")

        return self

    def steps_for(self, n: int) -> int:
        """Return T, chosen by the data scale unless set."""
        if self.steps is not None:
            return self.steps

        return STEPS_LARGE if n >= LARGE_SCALE else STEPS_SMALL

    def graph_config(self) -> GraphConfig:
        """Return the graph configuration."""
        return GraphConfig(self.k, self.rho, self.label_graph_self_loops)

    def train_config(self, n: int) -> TrainConfig:
        """Return the training configuration for n training examples."""
        return TrainConfig(
            propagation=PropagationConfig(
                eta=self.eta,
                alpha=self.alpha,
                beta=self.beta,
                gamma=self.gamma,
                steps=self.steps_for(n),
                normalize=self.normalize,
            ),
            optimizer=OptimizerConfig(
                learning_rate=self.lr,
                weight_decay=self.weight_decay,
                batch_size=self.batch_size,
                seed=self.seed,
            ),
            loss=self.loss,
            epochs=self.epochs,
            mse_on_logits=self.mse_on_logits,
            propagate_on_logits=self.propagate_on_logits,
            full_batch=self.full_batch,
            track_objective=self.track_objective,
        )


@dataclass
class RunResult:
    """Per-fold reports of one cross-validated configuration."""

    name: str
    """Name of the run (variant, loss, or swept value)."""

    reports: list[EvalReport] = field(default_factory=list)
    """Evaluation of each finished fold."""

    histories: list[list[EpochRecord]] = field(default_factory=list, repr=False)
    """Training history of each finished fold."""

    timing: dict[str, float] = field(default_factory=lambda: dict.fromkeys(STAGES, 0.0))
    """Total wall-clock seconds per stage."""

    @property
    def mean(self) -> dict[str, float]:
        """Mean of each metric over folds."""
        return {m: float(np.mean(self.values(m))) for m in METRICS}

    @property
    def std(self) -> dict[str, float]:
        """Population standard deviation of each metric over folds."""
        return {m: float(np.std(self.values(m))) for m in METRICS}

    def values(self, metric: str) -> np.ndarray:
        """Per-fold values of a metric."""
        return np.array([getattr(report, metric) for report in self.reports])

    def to_dict(self) -> dict[str, Any]:
        """Convert the result to a JSON-friendly mapping."""
        return {
            "folds": [report.to_dict() for report in self.reports],
            "mean": self.mean,
            "std": self.std,
            "timing": self.timing,
        }

    def curves(self) -> pd.DataFrame:
        """Learning curves of all folds as a table."""
        frames = [
            pd.DataFrame([record.to_dict() for record in history]).assign(fold=fold)
            for fold, history in enumerate(self.histories)
            if history
        ]

        if not frames:
            return pd.DataFrame()

        return pd.concat(frames, ignore_index=True).assign(run=self.name)


@dataclass(frozen=True)
class FoldTask:
    """Everything needed to run one fold in a worker process."""

    dataset: Dataset = field(repr=False)
    config: ExperimentConfig
    fold: int
    train_index: np.ndarray = field(repr=False)
    test_index: np.ndarray = field(repr=False)
    dump_dir: Optional[Path] = None


@dataclass(frozen=True)
class FoldOutcome:
    """Result of one fold."""

    report: EvalReport
    history: list[EpochRecord] = field(repr=False)
    timing: dict[str, float]


def run_fold(task: FoldTask) -> FoldOutcome:
    """Train on the training split of a fold and evaluate on its test split."""
    config = task.config
    dataset = task.dataset

    if config.r is not None and config.resample_per_fold:
        dataset = synthesize_pml(dataset, SynthConfig(config.r, config.seed + task.fold))

    train_set = dataset.subset(task.train_index)
    test_set = dataset.subset(task.test_index)

    if test_set.truth is None:
        raise DatasetError("Evaluation needs truth labels.")

    graphs: Optional[Graphs] = None
    start = perf_counter()

    if config.variant is not VariantKind.DNN_ONLY:
        graphs = build_graphs(train_set.features, train_set.candidates, config.graph_config())

        if task.dump_dir is not None:
            dump_graphs(graphs, task.dump_dir, task.fold)

    graph_build = perf_counter() - start
    evaluation = (test_set.features, test_set.truth) if config.monitor else None
    state = train(
        train_set,
        graphs,
        config.train_config(train_set.meta.n),
        config.variant,
        evaluation=evaluation,
    )

    scores = predict(state.params, test_set.features)
    report = evaluate(scores, test_set.truth, threshold=config.threshold)
    timing = {
        "graph_build": graph_build,
        "propagation_total": float(np.nansum([r.propagation_time for r in state.history])),
        "training_total": float(np.nansum([r.training_time for r in state.history])),
    }
    logger.info(f"Fold {task.fold} ({config.variant.value}): {report}")
    return FoldOutcome(report, state.history, timing)


def runmap(tasks: Iterable[FoldTask], *, jobs: int = 1) -> Iterator[FoldOutcome]:
    """Run fold tasks (in parallel if jobs > 1) and yield outcomes in order."""
    if jobs == 1:
        yield from map(run_fold, tasks)
    else:
        with ProcessPoolExecutor(jobs) as executor:
            yield from executor.map(run_fold, tasks)


def prepare(dataset: Dataset, config: ExperimentConfig) -> Dataset:
    """Corrupt clean data once before folding, if r is set."""
    if config.r is None or config.resample_per_fold:
        return dataset

    return synthesize_pml(dataset, SynthConfig(config.r, config.seed))


def run_cv(
    dataset: Dataset,
    configs: dict[str, ExperimentConfig],
    plan: FoldPlan,
    *,
    dump_dir: Optional[Path] = None,
    progress: bool = False,
) -> list[RunResult]:
    """Cross-validate named configurations over shared folds.

    Results are appended in order as folds finish. If a fold fails,
    the error is re-raised with the finished results attached as
    ``error.partial``.

    """
    results = [RunResult(name) for name in configs]
    tasks = [
        FoldTask(prepared, config, fold, *split, dump_dir)
        for config in configs.values()
        for prepared in [prepare(dataset, config)]
        for fold, split in enumerate(plan)
    ]
    jobs = max(config.jobs for config in configs.values())

    try:
        for i, outcome in enumerate(
            tqdm(runmap(tasks, jobs=jobs), total=len(tasks), disable=not progress)
        ):
            result = results[i // plan.fold_count]
            result.reports.append(outcome.report)
            result.histories.append(outcome.history)

            for stage, seconds in outcome.timing.items():
                result.timing[stage] += seconds
    except Exception as error:
        setattr(error, "partial", results)
        raise

    return results


def run_grid(
    dataset: Dataset,
    config: ExperimentConfig,
    *,
    alphas: Sequence[float] = ALPHA_GRID,
    betas: Sequence[float] = BETA_GRID,
    etas: Sequence[float] = ETA_GRID,
    holdout: int = 5,
    progress: bool = False,
) -> tuple[ExperimentConfig, pd.DataFrame]:
    """Select alpha, beta, and eta by validation average precision.

    One of ``holdout`` random folds of the data is used for validation.

    Returns:
        Config with the best values and the table of all scores.

    """
    dataset = prepare(dataset, replace(config, resample_per_fold=False))
    train_index, val_index = make_folds(dataset.meta, holdout, config.seed).split(0)
    train_set, val_set = dataset.subset(train_index), dataset.subset(val_index)

    if val_set.truth is None:
        raise DatasetError("Grid search needs truth labels.")

    graphs = build_graphs(train_set.features, train_set.candidates, config.graph_config())
    rows = []

    for alpha, beta, eta in tqdm(list(product(alphas, betas, etas)), disable=not progress):
        trial = replace(config, alpha=alpha, beta=beta, eta=eta)
        state = train(train_set, graphs, trial.train_config(train_set.meta.n), trial.variant)
        report = evaluate(predict(state.params, val_set.features), val_set.truth)
        rows.append({"alpha": alpha, "beta": beta, "eta": eta, **report.to_dict()})
        logger.info(f"Grid alpha={alpha}, beta={beta}, eta={eta}: {report}")

    table = pd.DataFrame(rows)
    best = table.loc[table["average_precision"].idxmax()]
    selected = {key: float(best[key]) for key in ("alpha", "beta", "eta")}
    return replace(config, **selected), table


def measure_timing(dataset: Dataset, config: ExperimentConfig) -> dict[str, float]:
    """Measure graph building, one propagation epoch, and one training epoch."""
    n, L = dataset.meta.n, dataset.meta.L
    cfg = config.train_config(n)
    Y = dataset.candidates.astype(float)

    start = perf_counter()
    graphs = build_graphs(dataset.features, dataset.candidates, config.graph_config())
    graph_build = perf_counter() - start

    rng = np.random.default_rng(config.seed)
    params = init_params((dataset.meta.d, *hidden_sizes(L), L), config.seed)

    start = perf_counter()
    train_epoch(params, dataset.features, Y, cfg, rng)
    training_epoch = perf_counter() - start

    start = perf_counter()
    propagate(Y, rng.random(Y.shape), Y, graphs.instance, graphs.label, cfg.propagation)
    propagation_epoch = perf_counter() - start

    return {
        "n": n,
        "L": L,
        "k": config.k,
        "steps": cfg.propagation.steps,
        "graph_build_s": graph_build,
        "propagation_epoch_s": propagation_epoch,
        "training_epoch_s": training_epoch,
    }


def complexity_fit(
    sizes: Sequence[int],
    seconds: Sequence[float],
    *,
    L: int,
    k: int,
) -> tuple[float, float, float]:
    """Fit seconds = a * n (L^2 + n (k + 1)) + b by least squares.

    Returns:
        Slope a, intercept b, and the coefficient of determination R^2.

    """
    n = np.asarray(sizes, dtype=float)
    x = n * (L**2 + n * (k + 1))
    y = np.asarray(seconds, dtype=float)
    slope, intercept = np.polyfit(x, y, 1)
    residual = np.sum((y - (slope * x + intercept)) ** 2)
    total = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - residual / total if total > 0 else 1.0
    return float(slope), float(intercept), float(r2)


def epochs_to_fraction(curve: Sequence[float], fraction: float = 0.95) -> int:
    """Return the first epoch (1-based) reaching a fraction of the final value."""
    values = np.asarray(curve, dtype=float)
    return int(np.argmax(values >= fraction * values[-1])) + 1


def dump_graphs(graphs: Graphs, directory: Path, fold: int) -> None:
    """Save the affinity matrices of a fold as coordinate lists."""
    directory.mkdir(parents=True, exist_ok=True)
    dump_graph(SparseSym(graphs.instance.adjacency), directory / f"instance_graph_{fold}.txt")
    dump_graph(SparseSym(graphs.label.adjacency), directory / f"label_graph_{fold}.txt")


@dataclass
class Variant:
    data: Data[Literal["variant"], str]
    long_name: Attr[str] = "Run"


@dataclass
class Fold:
    data: Data[Literal["fold"], int]
    long_name: Attr[str] = "Fold"


@dataclass
class RankingLoss:
    data: Data[Dims, float]
    long_name: Attr[str] = "Ranking loss"


@dataclass
class AveragePrecision:
    data: Data[Dims, float]
    long_name: Attr[str] = "Average precision"


@dataclass
class HammingLoss:
    data: Data[Dims, float]
    long_name: Attr[str] = "Hamming loss"


@dataclass
class Evaluated:
    data: Data[Dims, float]
    long_name: Attr[str] = "Number of evaluated examples"


@dataclass
class Skipped:
    data: Data[Dims, float]
    long_name: Attr[str] = "Number of skipped examples"


@dataclass
class Reports(AsDataset):
    """Specification of per-fold evaluation reports."""

    # attributes
    dataset: Attr[str]
    config: Attr[str]

    # dimensions
    variant: Coordof[Variant]
    fold: Coordof[Fold]

    # data variables
    ranking_loss: Dataof[RankingLoss]
    average_precision: Dataof[AveragePrecision]
    hamming_loss: Dataof[HammingLoss]
    n_evaluated: Dataof[Evaluated]
    n_skipped: Dataof[Skipped]


def to_reports(results: list[RunResult], config: ExperimentConfig) -> xr.Dataset:
    """Convert run results to a (variant, fold) dataset; missing folds are NaN."""
    n_folds = max([len(result.reports) for result in results] + [0])
    names = ("ranking_loss", "average_precision", "hamming_loss", "n_evaluated", "n_skipped")
    values = {name: np.full((len(results), n_folds), np.nan) for name in names}

    for i, result in enumerate(results):
        for j, report in enumerate(result.reports):
            for name in names:
                values[name][i, j] = getattr(report, name)

    return Reports.new(
        dataset=config.dataset,
        config=str(config.to_dict()),
        variant=[result.name for result in results],
        fold=np.arange(n_folds),
        **values,
    )
