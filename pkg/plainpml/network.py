__all__ = [
    "LossKind",
    "NetworkParams",
    "NonFiniteLossError",
    "OptimizerConfig",
    "backward",
    "forward",
    "hidden_sizes",
    "init_params",
    "load_params",
    "loss",
    "loss_gradient",
    "save_params",
    "sgd_step",
    "value_and_grad",
]


# standard library
from dataclasses import dataclass, field
from enum import Enum
from logging import getLogger
from pathlib import Path
from typing import Optional, Sequence, Union


# dependencies
import numpy as np
from scipy.special import expit
from typing_extensions import Self
from .consts import BATCH_SIZE, LEARNING_RATE, MSE_ON_LOGITS, WEIGHT_DECAY


# type hints
PathLike = Union[Path, str]
Dims = tuple[int, ...]


# constants
CHECKPOINT_VERSION = 1


# module logger
logger = getLogger(__name__)


class NonFiniteLossError(FloatingPointError):
    """Error raised when the training loss becomes non-finite."""


class LossKind(str, Enum):
    """Risk functions fitting the network to pseudo-labels."""

    MSE = "mse"
    MAE = "mae"
    BCE = "bce"
    PMSE = "pmse"


@dataclass(frozen=True)
class OptimizerConfig:
    """Configuration of stochastic gradient descent."""

    learning_rate: float = LEARNING_RATE
    """Learning rate."""

    weight_decay: float = WEIGHT_DECAY
    """Weight decay (not applied to biases)."""

    batch_size: int = BATCH_SIZE
    """Mini-batch size."""

    seed: Optional[int] = None
    """Seed of initialization and batch shuffling."""

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive.")

        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative.")

        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1.")


@dataclass(frozen=True)
class NetworkParams:
    """Weights and biases of a fully-connected network.

    Layer l maps ``dims[l]`` inputs to ``dims[l + 1]`` outputs by
    ``x @ weights[l].T + biases[l]``; hidden layers use the rectifier
    and the last layer outputs raw logits.

    """

    weights: tuple[np.ndarray, ...] = field(repr=False)
    """Weight matrices (out x in) of the layers."""

    biases: tuple[np.ndarray, ...] = field(repr=False)
    """Bias vectors of the layers."""

    @property
    def dims(self) -> Dims:
        """Layer sizes (d, h1, ..., L)."""
        return (self.weights[0].shape[1], *(W.shape[0] for W in self.weights))

    def ravel(self) -> np.ndarray:
        """Flatten all parameters into one vector."""
        arrays = [*self.weights, *self.biases]
        return np.concatenate([a.ravel() for a in arrays])

    def unravel(self, vector: np.ndarray) -> Self:
        """Create parameters of the same shapes from a flat vector."""
        arrays, start = [], 0

        for a in (*self.weights, *self.biases):
            arrays.append(vector[start : start + a.size].reshape(a.shape))
            start += a.size

        n_layers = len(self.weights)
        return type(self)(tuple(arrays[:n_layers]), tuple(arrays[n_layers:]))


def hidden_sizes(L: int) -> tuple[int, int]:
    """Return the hidden sizes for a number of labels."""
    if L < 64:
        return 64, 64
    elif L < 256:
        return 256, 256
    else:
        return 512, 512


def init_params(dims: Sequence[int], seed: Optional[int] = None) -> NetworkParams:
    """Initialize a network with fan-in scaled uniform weights.

    Args:
        dims: Layer sizes (d, h1, ..., L).
        seed: Seed of the random number generator.

    Returns:
        Parameters with weights drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in))
        and zero biases.

    """
    if len(dims) < 2 or min(dims) < 1:
        raise ValueError(f"Invalid layer sizes: {dims}.")

    rng = np.random.default_rng(seed)
    weights, biases = [], []

    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, (fan_out, fan_in)))
        biases.append(np.zeros(fan_out))

    return NetworkParams(tuple(weights), tuple(biases))


def forward(params: NetworkParams, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return the logits and the sigmoid prediction of a batch."""
    logits = activations(params, X)[-1]
    return logits, expit(logits)


def activations(params: NetworkParams, X: np.ndarray) -> list[np.ndarray]:
    """Return the input, hidden activations, and logits of a batch."""
    if X.shape[1] != params.dims[0]:
        raise ValueError(f"Features must have {params.dims[0]} columns.")

    outputs = [X]
    last = len(params.weights) - 1

    for layer, (W, b) in enumerate(zip(params.weights, params.biases)):
        h = outputs[-1] @ W.T + b
        outputs.append(h if layer == last else np.maximum(h, 0.0))

    return outputs


def loss(
    kind: LossKind,
    logits: np.ndarray,
    prediction: np.ndarray,
    Z: np.ndarray,
    *,
    mse_on_logits: bool = MSE_ON_LOGITS,
) -> float:
    """Compute the batch mean of a per-example loss.

    Args:
        kind: Risk function.
        logits: Raw outputs (m x L).
        prediction: Sigmoid of the logits (m x L).
        Z: Pseudo-labels in [0, 1] (m x L).

    Keyword Args:
        mse_on_logits: Whether MSE and MAE compare raw logits
            (instead of probabilities) with the pseudo-labels.

    Returns:
        Mean over examples of the loss summed over labels.

    """
    kind = LossKind(kind)

    if kind is LossKind.BCE:
        # stable form of -z log(s(x)) - (1 - z) log(1 - s(x))
        values = np.logaddexp(0.0, logits) - Z * logits
    elif kind is LossKind.PMSE:
        values = (prediction - Z) ** 2
    elif kind is LossKind.MSE:
        values = ((logits if mse_on_logits else prediction) - Z) ** 2
    else:
        values = np.abs((logits if mse_on_logits else prediction) - Z)

    return float(values.sum() / len(Z))


def loss_gradient(
    kind: LossKind,
    logits: np.ndarray,
    prediction: np.ndarray,
    Z: np.ndarray,
    *,
    mse_on_logits: bool = MSE_ON_LOGITS,
) -> np.ndarray:
    """Return the gradient of ``loss`` with respect to the logits."""
    kind = LossKind(kind)
    slope = prediction * (1.0 - prediction)

    if kind is LossKind.BCE:
        grad = prediction - Z
    elif kind is LossKind.PMSE:
        grad = 2.0 * (prediction - Z) * slope
    elif kind is LossKind.MSE and mse_on_logits:
        grad = 2.0 * (logits - Z)
    elif kind is LossKind.MSE:
        grad = 2.0 * (prediction - Z) * slope
    elif mse_on_logits:
        grad = np.sign(logits - Z)
    else:
        grad = np.sign(prediction - Z) * slope

    return grad / len(Z)


def value_and_grad(
    params: NetworkParams,
    X: np.ndarray,
    Z: np.ndarray,
    kind: LossKind,
    *,
    weight_decay: float = 0.0,
    mse_on_logits: bool = MSE_ON_LOGITS,
) -> tuple[float, NetworkParams]:
    """Return the loss of a batch and its gradient by backpropagation.

    The weight-decay term (weight_decay / 2) |W|^2 over weights only
    is added to both the value and the gradient.

    """
    outputs = activations(params, X)
    logits = outputs[-1]
    prediction = expit(logits)
    value = loss(kind, logits, prediction, Z, mse_on_logits=mse_on_logits)

    if not np.isfinite(value):
        raise NonFiniteLossError(f"Loss became {value} ({LossKind(kind).value}).")

    delta = loss_gradient(kind, logits, prediction, Z, mse_on_logits=mse_on_logits)
    grad_weights: list[np.ndarray] = []
    grad_biases: list[np.ndarray] = []

    for layer in reversed(range(len(params.weights))):
        W = params.weights[layer]
        grad_weights.insert(0, delta.T @ outputs[layer] + weight_decay * W)
        grad_biases.insert(0, delta.sum(axis=0))

        if layer:
            delta = (delta @ W) * (outputs[layer] > 0)

    if weight_decay:
        value += 0.5 * weight_decay * sum(np.sum(W**2) for W in params.weights)

    return value, NetworkParams(tuple(grad_weights), tuple(grad_biases))


def backward(
    params: NetworkParams,
    X: np.ndarray,
    Z: np.ndarray,
    kind: LossKind,
    *,
    weight_decay: float = 0.0,
    mse_on_logits: bool = MSE_ON_LOGITS,
) -> NetworkParams:
    """Return the gradient of the batch loss (plus weight decay)."""
    return value_and_grad(
        params,
        X,
        Z,
        kind,
        weight_decay=weight_decay,
        mse_on_logits=mse_on_logits,
    )[1]


def sgd_step(
    params: NetworkParams,
    grads: NetworkParams,
    cfg: OptimizerConfig,
) -> NetworkParams:
    """Return params - lr * (grads + weight_decay * params), biases not decayed."""
    lr, wd = cfg.learning_rate, cfg.weight_decay
    weights = tuple(
        W - lr * (G + wd * W) for W, G in zip(params.weights, grads.weights)
    )
    biases = tuple(b - lr * g for b, g in zip(params.biases, grads.biases))
    return NetworkParams(weights, biases)


def save_params(params: NetworkParams, path: PathLike) -> None:
    """Save network parameters to a NumPy archive (.npz).

    The archive stores ``format_version``, ``dims``,
    and ``W<l>`` and ``b<l>`` for each layer l.

    """
    arrays = {f"W{l}": W for l, W in enumerate(params.weights)}
    arrays.update({f"b{l}": b for l, b in enumerate(params.biases)})

    with open(path, "wb") as file:
        np.savez(
            file,
            format_version=CHECKPOINT_VERSION,
            dims=np.array(params.dims),
            **arrays,
        )


def load_params(path: PathLike) -> NetworkParams:
    """Load network parameters from a NumPy archive (.npz)."""
    with np.load(path) as archive:
        if (version := int(archive["format_version"])) != CHECKPOINT_VERSION:
            raise ValueError(f"Unsupported checkpoint version: {version}.")

        n_layers = len(archive["dims"]) - 1
        weights = tuple(archive[f"W{l}"] for l in range(n_layers))
        biases = tuple(archive[f"b{l}"] for l in range(n_layers))

    return NetworkParams(weights, biases)
