__all__ = [
    "Dataset",
    "DatasetError",
    "DatasetMeta",
    "FoldPlan",
    "SynthConfig",
    "load_dataset",
    "make_clean",
    "make_folds",
    "save_dataset",
    "synthesize_pml",
]


# standard library
from dataclasses import dataclass, field, replace
from hashlib import sha1
from logging import getLogger
from pathlib import Path
from typing import Iterator, Optional, Union


# dependencies
import numpy as np
from typing_extensions import Self


# type hints
PathLike = Union[Path, str]
Seed = Optional[int]


# constants
BLOCK_SEP = "|"
LABEL_SEP = ","
VALUE_SEP = ":"
UNIT_TOL = 1e-12


# module logger
logger = getLogger(__name__)


class DatasetError(ValueError):
    """Error raised for malformed or inconsistent PML data."""


@dataclass(frozen=True)
class DatasetMeta:
    """Sizes of a PML dataset."""

    n: int
    """Number of examples."""

    d: int
    """Feature dimensionality."""

    L: int
    """Number of labels."""

    def __post_init__(self) -> None:
        if self.n < 1 or self.d < 1 or self.L < 2:
            raise DatasetError(f"Invalid sizes: {self}.")


@dataclass(frozen=True)
class Dataset:
    """PML dataset of features, candidate labels, and optional truth."""

    meta: DatasetMeta
    """Sizes of the dataset."""

    features: np.ndarray = field(repr=False)
    """Feature matrix (n x d)."""

    candidates: np.ndarray = field(repr=False)
    """Binary candidate-label matrix (n x L)."""

    truth: Optional[np.ndarray] = field(default=None, repr=False)
    """Binary ground-truth matrix (n x L), for evaluation only."""

    def __post_init__(self) -> None:
        n, d, L = self.meta.n, self.meta.d, self.meta.L

        if self.features.shape != (n, d):
            raise DatasetError(f"Features must be {(n, d)}.")

        if self.candidates.shape != (n, L):
            raise DatasetError(f"Candidates must be {(n, L)}.")

        if not self.candidates.any(axis=1).all():
            raise DatasetError("Every example needs at least one candidate.")

        if self.truth is None:
            return None

        if self.truth.shape != (n, L):
            raise DatasetError(f"Truth must be {(n, L)}.")

        if (self.truth > self.candidates).any():
            raise DatasetError("Truth labels must be candidates.")

    @property
    def zero_rows(self) -> np.ndarray:
        """Boolean mask of examples whose features are all zero."""
        return ~self.features.any(axis=1)

    def subset(self, index: np.ndarray) -> Self:
        """Select examples by an integer index."""
        return replace(
            self,
            meta=replace(self.meta, n=len(index)),
            features=self.features[index],
            candidates=self.candidates[index],
            truth=None if self.truth is None else self.truth[index],
        )


@dataclass(frozen=True)
class SynthConfig:
    """Configuration of synthetic false-positive injection."""

    r: int
    """Number of false positives injected per example."""

    seed: Seed = None
    """Seed of the random number generator."""

    def __post_init__(self) -> None:
        if self.r < 1:
            raise ValueError("r must be at least 1.")


@dataclass(frozen=True)
class FoldPlan:
    """Assignment of examples to cross-validation folds."""

    fold_count: int
    """Number of folds."""

    assignments: np.ndarray = field(repr=False)
    """Fold index of each example."""

    def __iter__(self) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        """Generate (train, test) indices of each fold."""
        for fold in range(self.fold_count):
            yield self.split(fold)

    @property
    def sizes(self) -> np.ndarray:
        """Number of examples in each fold."""
        return np.bincount(self.assignments, minlength=self.fold_count)

    @property
    def digest(self) -> str:
        """Hash of the assignments, to check that folds are shared."""
        return sha1(self.assignments.astype(np.int64).tobytes()).hexdigest()

    def split(self, fold: int) -> tuple[np.ndarray, np.ndarray]:
        """Return (train, test) indices where the fold is the test set."""
        test = self.assignments == fold
        return np.flatnonzero(~test), np.flatnonzero(test)


def load_dataset(path: PathLike, *, normalize: bool = True) -> Dataset:
    """Load a PML dataset from the sparse text format.

    The first line is a header ``n d L``, followed by one line per
    example: ``<cand>|<truth> <idx>:<val> ...``, where label ids and
    feature indices are 0-based and feature indices strictly increase.

    Args:
        path: Path of the dataset file.

    Keyword Args:
        normalize: Whether to L2-normalize each feature row.
            Zero rows are kept as zeros and reported in a warning.

    Returns:
        Loaded dataset. Its truth is ``None`` if no line has one.

    Raises:
        DatasetError: Raised if the file is malformed, with the line number.

    """
    with open(path) as file:
        lines = [line for line in file.read().splitlines() if line.strip()]

    if not lines:
        raise DatasetError("line 1: missing header.")

    try:
        n, d, L = map(int, lines[0].split())
    except ValueError:
        raise DatasetError(f"line 1: invalid header {lines[0]!r}.")

    if len(lines) - 1 != n:
        raise DatasetError(f"line 1: header says {n} examples, found {len(lines) - 1}.")

    meta = DatasetMeta(n, d, L)
    features = np.zeros((n, d))
    candidates = np.zeros((n, L), dtype=np.int8)
    truth = np.zeros((n, L), dtype=np.int8)
    has_truth = False

    for i, line in enumerate(lines[1:]):
        number = i + 2
        labels, *entries = line.split()

        if labels.count(BLOCK_SEP) != 1:
            raise DatasetError(f"line {number}: expected one {BLOCK_SEP!r}.")

        cand, true = labels.split(BLOCK_SEP)

        if not cand:
            raise DatasetError(f"line {number}: empty candidate set.")

        candidates[i, parse_labels(cand, L, number)] = 1

        if true:
            has_truth = True
            truth[i, parse_labels(true, L, number)] = 1

            if (truth[i] > candidates[i]).any():
                raise DatasetError(f"line {number}: truth is not a subset of candidates.")

        index, value = parse_entries(entries, d, number)
        features[i, index] = value

    dataset = Dataset(meta, features, candidates, truth if has_truth else None)

    if normalize:
        return normalize_features(dataset)
    else:
        return dataset


def save_dataset(dataset: Dataset, path: PathLike) -> None:
    """Save a PML dataset to the sparse text format."""
    meta = dataset.meta
    lines = [f"{meta.n} {meta.d} {meta.L}"]

    for i in range(meta.n):
        cand = LABEL_SEP.join(map(str, np.flatnonzero(dataset.candidates[i])))

        if dataset.truth is None:
            true = ""
        else:
            true = LABEL_SEP.join(map(str, np.flatnonzero(dataset.truth[i])))

        entries = [
            f"{j}{VALUE_SEP}{float(dataset.features[i, j])!r}"
            for j in np.flatnonzero(dataset.features[i])
        ]
        lines.append(" ".join([f"{cand}{BLOCK_SEP}{true}", *entries]))

    with open(path, "w") as file:
        file.write("\n".join(lines) + "\n")


def synthesize_pml(clean: Dataset, cfg: SynthConfig) -> Dataset:
    """Inject r false-positive labels into each example of clean data.

    For each example, r labels are sampled uniformly without replacement
    from the labels outside its ground truth and added to the candidates.
    If fewer than r such labels exist, all labels become candidates.

    Args:
        clean: Clean multi-label data (candidates equal to truth).
        cfg: Number of false positives and the random seed.

    Returns:
        Corrupted dataset with the same features and truth.

    Raises:
        DatasetError: Raised if the data has no truth, is not clean,
            or has an example without any true label.

    """
    if clean.truth is None:
        raise DatasetError("Clean data must have truth labels.")

    if not np.array_equal(clean.candidates, clean.truth):
        raise DatasetError("Clean data must have candidates equal to truth.")

    if not clean.truth.any(axis=1).all():
        raise DatasetError("Every example must have at least one true label.")

    rng = np.random.default_rng(cfg.seed)
    candidates = clean.truth.copy()
    n_fallback = 0

    for i, row in enumerate(clean.truth):
        irrelevant = np.flatnonzero(row == 0)

        if len(irrelevant) < cfg.r:
            candidates[i] = 1
            n_fallback += 1
        else:
            candidates[i, rng.choice(irrelevant, cfg.r, replace=False)] = 1

    if n_fallback:
        logger.warning(f"{n_fallback} example(s) took all labels as candidates.")

    return replace(clean, candidates=candidates)


def make_folds(meta: DatasetMeta, fold_count: int, seed: Seed = None) -> FoldPlan:
    """Randomly partition examples into balanced folds.

    Args:
        meta: Sizes of the dataset.
        fold_count: Number of folds (2 <= fold_count <= n).
        seed: Seed of the random number generator.

    Returns:
        Fold plan whose fold sizes differ by at most one.

    """
    if fold_count < 2:
        raise ValueError("fold_count must be at least 2.")

    if fold_count > meta.n:
        raise ValueError(f"fold_count ({fold_count}) exceeds n ({meta.n}).")

    rng = np.random.default_rng(seed)
    assignments = np.empty(meta.n, dtype=np.int64)
    assignments[rng.permutation(meta.n)] = np.arange(meta.n) % fold_count
    return FoldPlan(fold_count, assignments)


def make_clean(
    n: int,
    d: int,
    L: int,
    *,
    clusters: int = 8,
    noise: float = 0.3,
    seed: Seed = None,
) -> Dataset:
    """Make clean multi-label data with clustered features.

    Each cluster has a center in the feature space and a preferred
    label set; examples are noisy copies of a center and carry the
    preferred labels of their cluster, each flipped with low probability.

    Args:
        n: Number of examples.
        d: Feature dimensionality.
        L: Number of labels.

    Keyword Args:
        clusters: Number of clusters.
        noise: Standard deviation of the feature noise.
        seed: Seed of the random number generator.

    Returns:
        Normalized dataset whose candidates equal the truth.

    """
    rng = np.random.default_rng(seed)
    centers = rng.normal(size=(clusters, d))
    prefs = rng.random((clusters, L)) < min(2.0 / L, 0.5)
    prefs[np.arange(clusters), rng.integers(L, size=clusters)] = True

    member = rng.integers(clusters, size=n)
    features = centers[member] + noise * rng.normal(size=(n, d))
    truth = prefs[member] ^ (rng.random((n, L)) < 0.02)

    empty = ~truth.any(axis=1)
    truth[empty, rng.integers(L, size=empty.sum())] = True
    truth = truth.astype(np.int8)

    dataset = Dataset(DatasetMeta(n, d, L), features, truth.copy(), truth)
    return normalize_features(dataset)


def normalize_features(dataset: Dataset) -> Dataset:
    """L2-normalize feature rows, leaving zero and unit rows as they are."""
    norms = np.linalg.norm(dataset.features, axis=1, keepdims=True)
    # rows already of unit norm stay bit-exact
    norms[np.abs(norms - 1.0) <= UNIT_TOL] = 1.0
    zeros = (norms == 0).ravel()

    if zeros.any():
        logger.warning(f"{zeros.sum()} example(s) have zero features.")

    features = dataset.features / np.where(norms == 0, 1.0, norms)
    return replace(dataset, features=features)


def parse_labels(block: str, L: int, number: int) -> list[int]:
    """Parse a comma-separated block of label ids."""
    try:
        labels = [int(label) for label in block.split(LABEL_SEP)]
    except ValueError:
        raise DatasetError(f"line {number}: invalid labels {block!r}.")

    for label in labels:
        if not 0 <= label < L:
            raise DatasetError(f"line {number}: label {label} out of range [0, {L}).")

    return labels


def parse_entries(entries: list[str], d: int, number: int) -> tuple[list[int], list[float]]:
    """Parse ``index:value`` feature entries."""
    index: list[int] = []
    value: list[float] = []

    for entry in entries:
        try:
            j, v = entry.split(VALUE_SEP)
            index.append(int(j))
            value.append(float(v))
        except ValueError:
            raise DatasetError(f"line {number}: invalid feature entry {entry!r}.")

        if not 0 <= index[-1] < d:
            raise DatasetError(f"line {number}: feature {index[-1]} out of range [0, {d}).")

        if len(index) > 1 and index[-1] <= index[-2]:
            raise DatasetError(f"line {number}: feature indices must increase.")

    return index, value
