__all__ = [
    "DivergenceError",
    "PropagationConfig",
    "PseudoLabelMatrix",
    "minmax_normalize",
    "propagate",
    "propagate_until",
    "propagation_gradient",
    "propagation_objective",
]


# standard library
from dataclasses import dataclass, field
from logging import getLogger


# dependencies
import numpy as np
from .consts import ALPHA, BETA, ETA, GAMMA, NORMALIZE, STEPS_SMALL
from .graph import NormalizedLaplacian


# constants
DIVERGENCE_LIMIT = 1e6
CONSTANT_COLUMN = 0.5


# module logger
logger = getLogger(__name__)


class DivergenceError(FloatingPointError):
    """Error raised when the propagation diverges."""


@dataclass(frozen=True)
class PropagationConfig:
    """Configuration of the label propagation."""

    eta: float = ETA
    """Weight of the candidate consistency term."""

    alpha: float = ALPHA
    """Weight of the instance-level regularizer."""

    beta: float = BETA
    """Weight of the label-level regularizer."""

    gamma: float = GAMMA
    """Step size of gradient descent."""

    steps: int = STEPS_SMALL
    """Number of gradient steps per call (T)."""

    normalize: bool = NORMALIZE
    """Whether to min-max normalize columns after the steps."""

    def __post_init__(self) -> None:
        if min(self.eta, self.alpha, self.beta) < 0:
            raise ValueError("eta, alpha, and beta must be non-negative.")

        if self.gamma <= 0:
            raise ValueError("gamma must be positive.")

        if self.steps < 0:
            raise ValueError("steps must be non-negative.")

    @property
    def stable_gamma(self) -> float:
        """Largest step size with guaranteed monotone descent."""
        return 1.0 / (1.0 + self.eta + 2.0 * self.alpha + 2.0 * self.beta)


@dataclass(frozen=True)
class PseudoLabelMatrix:
    """Pseudo-label matrix Z and the objective trace that produced it."""

    values: np.ndarray = field(repr=False)
    """Pseudo-labels (n x L)."""

    trace: np.ndarray = field(default_factory=lambda: np.empty(0), repr=False)
    """Objective before the first step and after each step."""


def propagation_objective(
    Z: np.ndarray,
    Yhat: np.ndarray,
    Y: np.ndarray,
    Lx: NormalizedLaplacian,
    Ly: NormalizedLaplacian,
    cfg: PropagationConfig,
) -> float:
    """Evaluate the propagation objective.

    The objective is 1/2 |Z - Yhat|^2 + eta/2 |Z - Y|^2
    + alpha/2 tr(Z^T Lx Z) + beta/2 tr(Z Ly Z^T).

    """
    check_shapes(Z, Yhat, Y, Lx, Ly)
    value = 0.5 * np.sum((Z - Yhat) ** 2) + 0.5 * cfg.eta * np.sum((Z - Y) ** 2)

    if cfg.alpha:
        value += 0.5 * cfg.alpha * np.sum(Z * Lx.left(Z))

    if cfg.beta:
        value += 0.5 * cfg.beta * np.sum(Z * Ly.right(Z))

    return float(value)


def propagation_gradient(
    Z: np.ndarray,
    Yhat: np.ndarray,
    Y: np.ndarray,
    Lx: NormalizedLaplacian,
    Ly: NormalizedLaplacian,
    cfg: PropagationConfig,
) -> np.ndarray:
    """Return (1 + eta) Z + alpha Lx Z + beta Z Ly - (Yhat + eta Y)."""
    check_shapes(Z, Yhat, Y, Lx, Ly)
    grad = (1.0 + cfg.eta) * Z - (Yhat + cfg.eta * Y)

    if cfg.alpha:
        grad += cfg.alpha * Lx.left(Z)

    if cfg.beta:
        grad += cfg.beta * Ly.right(Z)

    return grad


def propagate(
    Z: np.ndarray,
    Yhat: np.ndarray,
    Y: np.ndarray,
    Lx: NormalizedLaplacian,
    Ly: NormalizedLaplacian,
    cfg: PropagationConfig,
) -> PseudoLabelMatrix:
    """Update pseudo-labels by T gradient steps on the objective.

    Args:
        Z: Current pseudo-labels (n x L). Not modified.
        Yhat: Model prediction (n x L).
        Y: Candidate labels (n x L).
        Lx: Laplacian of the instance graph.
        Ly: Laplacian of the label graph.
        cfg: Weights, step size, steps, and normalization.

    Returns:
        Updated pseudo-labels with the objective trace.

    Raises:
        DivergenceError: Raised if pseudo-labels blow up.

    """
    Z = np.array(Z, dtype=float)
    trace = [propagation_objective(Z, Yhat, Y, Lx, Ly, cfg)]

    for step in range(cfg.steps):
        Z -= cfg.gamma * propagation_gradient(Z, Yhat, Y, Lx, Ly, cfg)
        check_divergence(Z, cfg)
        trace.append(propagation_objective(Z, Yhat, Y, Lx, Ly, cfg))
        logger.debug(f"Propagation step {step + 1}: objective={trace[-1]:.6g}")

    if cfg.normalize:
        Z = minmax_normalize(Z)

    return PseudoLabelMatrix(Z, np.array(trace))


def propagate_until(
    Z: np.ndarray,
    Yhat: np.ndarray,
    Y: np.ndarray,
    Lx: NormalizedLaplacian,
    Ly: NormalizedLaplacian,
    cfg: PropagationConfig,
    *,
    tol: float = 1e-6,
    max_steps: int = 10_000,
) -> PseudoLabelMatrix:
    """Propagate until the relative objective change falls below a tolerance.

    ``cfg.steps`` is ignored; normalization follows ``cfg.normalize``.

    """
    Z = np.array(Z, dtype=float)
    trace = [propagation_objective(Z, Yhat, Y, Lx, Ly, cfg)]

    for _ in range(max_steps):
        Z -= cfg.gamma * propagation_gradient(Z, Yhat, Y, Lx, Ly, cfg)
        check_divergence(Z, cfg)
        trace.append(propagation_objective(Z, Yhat, Y, Lx, Ly, cfg))

        if abs(trace[-2] - trace[-1]) <= tol * max(abs(trace[-2]), 1e-12):
            break

    logger.info(f"Propagated {len(trace) - 1} steps to objective {trace[-1]:.6g}.")

    if cfg.normalize:
        Z = minmax_normalize(Z)

    return PseudoLabelMatrix(Z, np.array(trace))


def minmax_normalize(Z: np.ndarray) -> np.ndarray:
    """Rescale each column to [0, 1]; constant columns become 0.5."""
    lo, hi = Z.min(axis=0), Z.max(axis=0)
    span = hi - lo
    constant = span == 0
    out = (Z - lo) / np.where(constant, 1.0, span)
    out[:, constant] = CONSTANT_COLUMN
    return out


def check_divergence(Z: np.ndarray, cfg: PropagationConfig) -> None:
    """Raise an error if pseudo-labels are non-finite or too large."""
    if not np.isfinite(Z).all() or np.abs(Z).max() > DIVERGENCE_LIMIT:
        raise DivergenceError(
            f"Propagation diverged with gamma={cfg.gamma}: "
            f"try a gamma below {cfg.stable_gamma:.3g}."
        )


def check_shapes(
    Z: np.ndarray,
    Yhat: np.ndarray,
    Y: np.ndarray,
    Lx: NormalizedLaplacian,
    Ly: NormalizedLaplacian,
) -> None:
    """Raise an error if matrix shapes disagree."""
    if not Z.shape == Yhat.shape == Y.shape == (Lx.dim, Ly.dim):
        raise ValueError(
            f"Shape mismatch: Z {Z.shape}, Yhat {Yhat.shape}, "
            f"Y {Y.shape}, Laplacians ({Lx.dim}, {Ly.dim})."
        )
