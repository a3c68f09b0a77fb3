__all__ = [
    "EvalReport",
    "average_precision",
    "evaluate",
    "hamming_loss",
    "mean_instance_auc",
    "ranking_loss",
]


# standard library
from dataclasses import asdict, dataclass
from logging import getLogger
from typing import Any, Iterator, Optional


# dependencies
import numpy as np
from .consts import THRESHOLD


# module logger
logger = getLogger(__name__)


@dataclass(frozen=True)
class EvalReport:
    """Multi-label evaluation of a score matrix."""

    ranking_loss: float
    """Ranking loss (lower is better)."""

    average_precision: float
    """Average precision (higher is better)."""

    hamming_loss: float
    """Hamming loss (lower is better)."""

    n_evaluated: int
    """Number of examples used by the ranking metrics."""

    n_skipped: int
    """Number of examples with no or only relevant labels."""

    def to_dict(self) -> dict[str, Any]:
        """Convert the report to a dictionary."""
        return asdict(self)


def evaluate(
    scores: np.ndarray,
    truth: np.ndarray,
    *,
    threshold: float = THRESHOLD,
) -> EvalReport:
    """Evaluate a score matrix by the three multi-label metrics."""
    rankable = rankable_rows(truth)
    n_skipped = int((~rankable).sum())

    if n_skipped:
        logger.warning(f"{n_skipped} example(s) skipped by the ranking metrics.")

    return EvalReport(
        ranking_loss=ranking_loss(scores, truth),
        average_precision=average_precision(scores, truth),
        hamming_loss=hamming_loss(scores, truth, threshold),
        n_evaluated=int(rankable.sum()),
        n_skipped=n_skipped,
    )


def ranking_loss(scores: np.ndarray, truth: np.ndarray) -> float:
    """Compute the ranking loss.

    For each example, the fraction of (relevant, irrelevant) label pairs
    ordered wrongly, where ties count one half. Examples without
    relevant or without irrelevant labels are skipped.

    Returns:
        Mean over evaluated examples, or NaN if none is evaluated.

    """
    losses = []

    for s, t in rows(scores, truth):
        rel, irr = s[t], s[~t]
        diff = irr[None, :] - rel[:, None]
        bad = np.sum(diff > 0) + 0.5 * np.sum(diff == 0)
        losses.append(bad / (len(rel) * len(irr)))

    return mean(losses)


def average_precision(scores: np.ndarray, truth: np.ndarray) -> float:
    """Compute the average precision.

    Labels are ranked by descending score, ties broken by label index.
    For each relevant label, the precision is the fraction of relevant
    labels among those ranked at or above it; the example value is the
    mean over its relevant labels.

    Returns:
        Mean over evaluated examples, or NaN if none is evaluated.

    """
    precisions = []

    for s, t in rows(scores, truth):
        order = np.argsort(-s, kind="stable")
        hits = t[order]
        ranks = np.flatnonzero(hits) + 1
        precisions.append(np.mean(np.arange(1, len(ranks) + 1) / ranks))

    return mean(precisions)


def hamming_loss(scores: np.ndarray, truth: np.ndarray, threshold: float = THRESHOLD) -> float:
    """Compute the fraction of label bits where (score > threshold) != truth."""
    if not 0 < threshold < 1:
        raise ValueError("threshold must be in (0, 1).")

    return float(np.mean((scores > threshold) != truth.astype(bool)))


def mean_instance_auc(
    scores: np.ndarray,
    truth: np.ndarray,
    candidates: Optional[np.ndarray] = None,
) -> float:
    """Compute the mean per-example AUC of true against false labels.

    If candidates are given, only candidate labels are ranked, which
    measures how well true labels are separated from false positives.

    """
    if candidates is not None:
        mask = candidates.astype(bool)
        scores = np.where(mask, scores, np.nan)
        truth = truth.astype(bool) & mask

    aucs = []

    for s, t in zip(scores, truth.astype(bool)):
        valid = ~np.isnan(s)
        rel, irr = s[t & valid], s[~t & valid]

        if not len(rel) or not len(irr):
            continue

        diff = rel[:, None] - irr[None, :]
        aucs.append((np.sum(diff > 0) + 0.5 * np.sum(diff == 0)) / diff.size)

    return mean(aucs)


def rankable_rows(truth: np.ndarray) -> np.ndarray:
    """Return a mask of examples with both relevant and irrelevant labels."""
    t = truth.astype(bool)
    return t.any(axis=1) & ~t.all(axis=1)


def rows(scores: np.ndarray, truth: np.ndarray) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Generate (scores, truth) of the rankable examples."""
    if scores.shape != truth.shape:
        raise ValueError(f"Shape mismatch: {scores.shape} != {truth.shape}.")

    t = truth.astype(bool)

    for i in np.flatnonzero(rankable_rows(t)):
        yield scores[i], t[i]


def mean(values: list[float]) -> float:
    """Return the mean of values or NaN if empty."""
    return float(np.mean(values)) if values else float("nan")
