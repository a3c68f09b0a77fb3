__all__ = [
    # plainpml-related
    "PLAINPML_CONFIG",
    "PLAINPML_DIR",
    # graph defaults
    "K",
    "RHO",
    "LABEL_GRAPH_SELF_LOOPS",
    # propagation defaults
    "ALPHA",
    "BETA",
    "ETA",
    "GAMMA",
    "STEPS_SMALL",
    "STEPS_LARGE",
    "LARGE_SCALE",
    "NORMALIZE",
    # network defaults
    "LEARNING_RATE",
    "WEIGHT_DECAY",
    "BATCH_SIZE",
    "LOSS",
    "MSE_ON_LOGITS",
    "PROPAGATE_ON_LOGITS",
    # experiment defaults
    "EPOCHS",
    "FOLDS",
    "JOBS",
    "PROGRESS",
    "SEED",
    "THRESHOLD",
    # grids
    "ALPHA_GRID",
    "BETA_GRID",
    "ETA_GRID",
    # helper functions
    "ensure",
    "getval",
]


# standard library
from os import getenv
from pathlib import Path
from typing import Any, Optional, TypeVar, overload


# dependencies
from tomlkit import load


# type hints
T = TypeVar("T")


# helper functions
def ensure(toml: Path) -> Path:
    """Create an empty TOML file if it does not exist."""
    if not toml.exists():
        toml.parent.mkdir(parents=True, exist_ok=True)
        toml.touch()

    return toml


@overload
def getval(toml: Path, keys: str, default: type[T]) -> Optional[T]:
    ...


@overload
def getval(toml: Path, keys: str, default: T) -> T:
    ...


def getval(toml: Path, keys: str, default: Any) -> Any:
    """Return the value of the keys in a TOML file."""
    if isinstance(default, type):
        type_, default_ = default, None
    else:
        type_, default_ = type(default), default

    with open(toml) as file:
        doc = load(file)

    for key in keys.split("."):
        if (doc := doc.get(key)) is None:
            return default_

    return type_(doc.unwrap())


# plainpml-related
PLAINPML_CONFIG: Path
"""Path of the plainpml config."""

PLAINPML_DIR: Path
"""Path of the plainpml directory."""

if (env := getenv("PLAINPML_DIR")) is not None:
    PLAINPML_DIR = Path(env)
elif (env := getenv("XDG_CONFIG_HOME")) is not None:
    PLAINPML_DIR = Path(env) / "plainpml"
else:
    PLAINPML_DIR = Path.home() / ".config" / "plainpml"

PLAINPML_CONFIG = ensure(PLAINPML_DIR / "config.toml")


# graph defaults
K = getval(PLAINPML_CONFIG, "defaults.k", 10)
"""Default number of nearest neighbors of the instance graph."""

RHO = getval(PLAINPML_CONFIG, "defaults.rho", 3.0)
"""Default exponent of the monomial kernel."""

LABEL_GRAPH_SELF_LOOPS = getval(PLAINPML_CONFIG, "defaults.label_graph_self_loops", False)
"""Default for keeping the diagonal of the label graph."""


# propagation defaults
ALPHA = getval(PLAINPML_CONFIG, "defaults.alpha", 0.01)
"""Default weight of the instance-level regularizer."""

BETA = getval(PLAINPML_CONFIG, "defaults.beta", 0.01)
"""Default weight of the label-level regularizer."""

ETA = getval(PLAINPML_CONFIG, "defaults.eta", 1.0)
"""Default weight of the candidate consistency term."""

GAMMA = getval(PLAINPML_CONFIG, "defaults.gamma", 0.01)
"""Default step size of the propagation."""

STEPS_SMALL = getval(PLAINPML_CONFIG, "defaults.steps_small", 200)
"""Default propagation steps per epoch for small-scale data."""

STEPS_LARGE = getval(PLAINPML_CONFIG, "defaults.steps_large", 50)
"""Default propagation steps per epoch for large-scale data."""

LARGE_SCALE = getval(PLAINPML_CONFIG, "defaults.large_scale", 50_000)
"""Number of training examples from which data count as large-scale."""

NORMALIZE = getval(PLAINPML_CONFIG, "defaults.normalize", True)
"""Default for the column-wise min-max normalization of pseudo-labels."""


# network defaults
LEARNING_RATE = getval(PLAINPML_CONFIG, "defaults.lr", 0.01)
"""Default learning rate of SGD."""

WEIGHT_DECAY = getval(PLAINPML_CONFIG, "defaults.weight_decay", 5e-5)
"""Default weight decay of SGD (weights only)."""

BATCH_SIZE = getval(PLAINPML_CONFIG, "defaults.batch_size", 128)
"""Default mini-batch size."""

LOSS = getval(PLAINPML_CONFIG, "defaults.loss", "bce")
"""Default risk function of the network."""

MSE_ON_LOGITS = getval(PLAINPML_CONFIG, "defaults.mse_on_logits", True)
"""Default for computing MSE and MAE on raw logits."""

PROPAGATE_ON_LOGITS = getval(PLAINPML_CONFIG, "defaults.propagate_on_logits", False)
"""Default for feeding raw logits (instead of probabilities) to propagation."""


# experiment defaults
EPOCHS = getval(PLAINPML_CONFIG, "defaults.epochs", 100)
"""Default number of training epochs."""

FOLDS = getval(PLAINPML_CONFIG, "defaults.folds", 10)
"""Default number of cross-validation folds."""

JOBS = getval(PLAINPML_CONFIG, "defaults.jobs", 1)
"""Default number of folds run in parallel."""

PROGRESS = getval(PLAINPML_CONFIG, "defaults.progress", False)
"""Default for showing progress bars."""

SEED = getval(PLAINPML_CONFIG, "defaults.seed", 0)
"""Default random seed."""

THRESHOLD = getval(PLAINPML_CONFIG, "defaults.threshold", 0.5)
"""Default binarization threshold of the hamming loss."""


# grids
ALPHA_GRID = (0.001, 0.01, 0.1)
"""Candidate values of alpha for the grid search."""

BETA_GRID = (0.001, 0.01, 0.1)
"""Candidate values of beta for the grid search."""

ETA_GRID = (0.1, 1.0, 10.0)
"""Candidate values of eta for the grid search."""
