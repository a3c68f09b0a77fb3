__all__ = [
    "EpochRecord",
    "TrainConfig",
    "TrainState",
    "VariantKind",
    "combined_objective",
    "predict",
    "train",
    "train_epoch",
    "variant_propagation",
]


# standard library
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from logging import getLogger
from time import perf_counter
from typing import Any, Optional


# dependencies
import numpy as np
from tqdm import tqdm
from .consts import EPOCHS, LOSS, MSE_ON_LOGITS, PROPAGATE_ON_LOGITS
from .dataset import Dataset
from .graph import Graphs
from .metrics import EvalReport, evaluate
from .network import (
    LossKind,
    NetworkParams,
    OptimizerConfig,
    forward,
    hidden_sizes,
    init_params,
    sgd_step,
    value_and_grad,
)
from .propagation import (
    PropagationConfig,
    propagate,
    propagate_until,
    propagation_objective,
)


# type hints
Evaluation = Optional[tuple[np.ndarray, np.ndarray]]


# constants
NAN = float("nan")


# module logger
logger = getLogger(__name__)


class VariantKind(str, Enum):
    """Variants of the method compared in ablations."""

    PLAIN = "plain"
    DNN_ONLY = "dnn"
    NO_LABEL_SIM = "no_label_sim"
    NO_INSTANCE_SIM = "no_instance_sim"
    TWO_STAGE = "two_stage"


@dataclass(frozen=True)
class TrainConfig:
    """Configuration of the alternating training."""

    propagation: PropagationConfig = field(default_factory=PropagationConfig)
    """Configuration of the propagation step."""

    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    """Configuration of the model-updating step."""

    loss: LossKind = LossKind(LOSS)
    """Risk function of the network."""

    epochs: int = EPOCHS
    """Number of epochs."""

    hidden: Optional[tuple[int, ...]] = None
    """Hidden sizes. Defaults to ``None`` (chosen by the label count)."""

    mse_on_logits: bool = MSE_ON_LOGITS
    """Whether MSE and MAE act on raw logits."""

    propagate_on_logits: bool = PROPAGATE_ON_LOGITS
    """Whether raw logits (instead of probabilities) are propagated."""

    full_batch: bool = False
    """Whether each epoch is one gradient step on the whole training set."""

    track_objective: bool = False
    """Whether to record the combined objective around each half-step."""

    two_stage_tol: float = 1e-6
    """Relative objective change that ends the two-stage propagation."""

    two_stage_max_steps: int = 10_000
    """Maximum steps of the two-stage propagation."""

    def __post_init__(self) -> None:
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative.")


@dataclass(frozen=True)
class EpochRecord:
    """Record of one training epoch."""

    epoch: int
    """Epoch number (1-based)."""

    deep_loss: float
    """Mean loss of the network over the epoch's batches."""

    prop_objective_start: float = NAN
    """Propagation objective before the first step."""

    prop_objective_end: float = NAN
    """Propagation objective after the last step."""

    objective_before: float = NAN
    """Combined objective before the model update (if tracked)."""

    objective: float = NAN
    """Combined objective at the end of the epoch (if tracked)."""

    training_time: float = NAN
    """Wall-clock seconds of the model-updating step."""

    propagation_time: float = NAN
    """Wall-clock seconds of the forward pass and propagation step."""

    test: Optional[EvalReport] = None
    """Evaluation on held-out data (if monitored)."""

    def to_dict(self) -> dict[str, Any]:
        """Convert the record to a flat dictionary."""
        record = asdict(self)
        test = record.pop("test")

        if test is not None:
            record.update({f"test_{key}": value for key, value in test.items()})

        return record


@dataclass
class TrainState:
    """State of the alternating training."""

    epoch: int
    """Number of finished epochs."""

    params: NetworkParams = field(repr=False)
    """Network parameters."""

    Z: np.ndarray = field(repr=False)
    """Pseudo-label matrix (n x L)."""

    history: list[EpochRecord] = field(default_factory=list, repr=False)
    """Records of the finished epochs."""

    def append(self, record: EpochRecord) -> None:
        """Append the record of a finished epoch."""
        self.history.append(record)
        self.epoch = record.epoch


def variant_propagation(cfg: PropagationConfig, variant: VariantKind) -> PropagationConfig:
    """Return the propagation configuration used by a variant."""
    variant = VariantKind(variant)

    if variant is VariantKind.NO_LABEL_SIM:
        return replace(cfg, beta=0.0)

    if variant is VariantKind.NO_INSTANCE_SIM:
        return replace(cfg, alpha=0.0)

    return cfg


def train(
    dataset: Dataset,
    graphs: Optional[Graphs],
    cfg: TrainConfig,
    variant: VariantKind = VariantKind.PLAIN,
    *,
    evaluation: Evaluation = None,
    progress: bool = False,
) -> TrainState:
    """Train a network by alternating model updates and propagation.

    Each epoch (1) updates the network on shuffled mini-batches of
    (features, pseudo-labels), (2) predicts the whole training set,
    and (3) propagates the pseudo-labels for T steps.
    ``DNN_ONLY`` skips (2) and (3) and fits the candidates;
    ``TWO_STAGE`` propagates to convergence once before training
    and fits the frozen pseudo-labels.

    Args:
        dataset: Training set.
        graphs: Laplacians built on the training set.
            May be ``None`` only for ``DNN_ONLY``.
        cfg: Training configuration.
        variant: Variant of the method.

    Keyword Args:
        evaluation: Held-out (features, truth) evaluated every epoch.
        progress: Whether to show a progress bar.

    Returns:
        Final training state with per-epoch history.

    """
    variant = VariantKind(variant)
    propagates = variant is not VariantKind.DNN_ONLY

    if propagates and graphs is None:
        raise ValueError(f"Variant {variant.value} needs graphs.")

    X = dataset.features
    Y = dataset.candidates.astype(float)
    seed = cfg.optimizer.seed
    hidden = cfg.hidden or hidden_sizes(dataset.meta.L)
    dims = (dataset.meta.d, *hidden, dataset.meta.L)

    rng = np.random.default_rng(None if seed is None else seed + 1)
    prop = variant_propagation(cfg.propagation, variant)
    state = TrainState(0, init_params(dims, seed), Y.copy())

    if variant is VariantKind.TWO_STAGE and graphs is not None:
        state.Z = propagate_until(
            Y,
            Y,
            Y,
            graphs.instance,
            graphs.label,
            prop,
            tol=cfg.two_stage_tol,
            max_steps=cfg.two_stage_max_steps,
        ).values

    for epoch in tqdm(range(1, cfg.epochs + 1), disable=not progress):
        record: dict[str, Any] = {"epoch": epoch}

        if cfg.track_objective and graphs is not None:
            record["objective_before"] = combined_objective(
                state.params, state.Z, dataset, graphs, prop, cfg.propagate_on_logits
            )

        start = perf_counter()
        state.params, record["deep_loss"] = train_epoch(state.params, X, state.Z, cfg, rng)
        record["training_time"] = perf_counter() - start

        if propagates and variant is not VariantKind.TWO_STAGE and graphs is not None:
            start = perf_counter()
            logits, prediction = forward(state.params, X)
            Yhat = logits if cfg.propagate_on_logits else prediction
            result = propagate(state.Z, Yhat, Y, graphs.instance, graphs.label, prop)
            state.Z = result.values
            record["prop_objective_start"] = result.trace[0]
            record["prop_objective_end"] = result.trace[-1]
            record["propagation_time"] = perf_counter() - start

        if cfg.track_objective and graphs is not None:
            record["objective"] = combined_objective(
                state.params, state.Z, dataset, graphs, prop, cfg.propagate_on_logits
            )

        if evaluation is not None:
            record["test"] = evaluate(predict(state.params, evaluation[0]), evaluation[1])

        state.append(EpochRecord(**record))
        logger.info(
            f"Epoch {epoch}: deep_loss={record['deep_loss']:.6g}, "
            f"prop_objective={record.get('prop_objective_end', NAN):.6g}"
        )

    return state


def train_epoch(
    params: NetworkParams,
    X: np.ndarray,
    Z: np.ndarray,
    cfg: TrainConfig,
    rng: np.random.Generator,
) -> tuple[NetworkParams, float]:
    """Run one epoch of SGD on (features, pseudo-labels).

    Returns:
        Updated parameters and the size-weighted mean batch loss.

    """
    n = len(X)

    if cfg.full_batch:
        batches = [np.arange(n)]
    else:
        order = rng.permutation(n)
        batch_size = cfg.optimizer.batch_size
        batches = [order[i : i + batch_size] for i in range(0, n, batch_size)]

    total = 0.0

    for batch in batches:
        value, grads = value_and_grad(
            params,
            X[batch],
            Z[batch],
            cfg.loss,
            mse_on_logits=cfg.mse_on_logits,
        )
        params = sgd_step(params, grads, cfg.optimizer)
        total += value * len(batch)

    return params, total / n


def combined_objective(
    params: NetworkParams,
    Z: np.ndarray,
    dataset: Dataset,
    graphs: Graphs,
    cfg: PropagationConfig,
    propagate_on_logits: bool = PROPAGATE_ON_LOGITS,
) -> float:
    """Evaluate 1/2 |Z - f(X)|^2 + J(Z, Y) at the current parameters."""
    logits, prediction = forward(params, dataset.features)
    Yhat = logits if propagate_on_logits else prediction
    Y = dataset.candidates.astype(float)
    return propagation_objective(Z, Yhat, Y, graphs.instance, graphs.label, cfg)


def predict(params: NetworkParams, features: np.ndarray) -> np.ndarray:
    """Return the label scores in (0, 1) of a feature matrix."""
    return forward(params, features)[1]
