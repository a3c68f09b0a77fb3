__all__ = [
    "Graphs",
    "GraphConfig",
    "NormalizedLaplacian",
    "SparseSym",
    "build_graphs",
    "build_instance_graph",
    "build_label_graph",
    "dump_graph",
    "knn_inner_product",
    "laplacian_left_multiply",
    "laplacian_right_multiply",
    "normalized_laplacian",
]


# standard library
from dataclasses import dataclass, field
from logging import getLogger
from pathlib import Path
from typing import Union


# dependencies
import numpy as np
import scipy.sparse as sp
from .consts import K, LABEL_GRAPH_SELF_LOOPS, RHO


# type hints
PathLike = Union[Path, str]


# constants
KNN_BLOCK = 1024


# module logger
logger = getLogger(__name__)


@dataclass(frozen=True)
class GraphConfig:
    """Configuration of the instance and label graphs."""

    k: int = K
    """Number of nearest neighbors."""

    rho: float = RHO
    """Exponent of the monomial kernel."""

    label_graph_self_loops: bool = LABEL_GRAPH_SELF_LOOPS
    """Whether to keep the diagonal of the label graph."""

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be at least 1.")

        if self.rho <= 0:
            raise ValueError("rho must be positive.")


@dataclass(frozen=True)
class SparseSym:
    """Sparse symmetric non-negative affinity matrix."""

    matrix: sp.csr_matrix = field(repr=False)
    """Affinity matrix in CSR format."""

    @property
    def dim(self) -> int:
        """Number of nodes."""
        return self.matrix.shape[0]

    @property
    def entries(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Coordinate list (row, col, weight) of stored entries."""
        coo = self.matrix.tocoo()
        return coo.row, coo.col, coo.data

    @property
    def nnz(self) -> int:
        """Number of stored entries."""
        return self.matrix.nnz

    def toarray(self) -> np.ndarray:
        """Return the dense affinity matrix."""
        return self.matrix.toarray()


@dataclass(frozen=True)
class NormalizedLaplacian:
    """Symmetric normalized Laplacian L = I - D^-1/2 A D^-1/2.

    Rows of isolated nodes (zero degree) equal the identity rows.

    """

    degrees: np.ndarray = field(repr=False)
    """Degree of each node."""

    adjacency: sp.csr_matrix = field(repr=False)
    """Affinity matrix A."""

    scaled: sp.csr_matrix = field(repr=False)
    """Normalized affinity matrix D^-1/2 A D^-1/2."""

    @property
    def dim(self) -> int:
        """Number of nodes."""
        return len(self.degrees)

    def left(self, Z: np.ndarray) -> np.ndarray:
        """Return L @ Z."""
        return laplacian_left_multiply(self, Z)

    def right(self, Z: np.ndarray) -> np.ndarray:
        """Return Z @ L."""
        return laplacian_right_multiply(Z, self)

    def toarray(self) -> np.ndarray:
        """Return the dense Laplacian."""
        return np.eye(self.dim) - self.scaled.toarray()


@dataclass(frozen=True)
class Graphs:
    """Laplacians of the instance and label graphs of a training set."""

    instance: NormalizedLaplacian
    """Laplacian of the instance graph (n x n)."""

    label: NormalizedLaplacian
    """Laplacian of the label graph (L x L)."""


def knn_inner_product(features: np.ndarray, k: int) -> np.ndarray:
    """Find the k nearest neighbors of each row by inner product.

    The search is exact (brute force over blocks of rows).
    A row is never its own neighbor and ties are broken by smaller index.

    Args:
        features: Feature matrix (n x d).
        k: Number of neighbors (k < n).

    Returns:
        Neighbor indices (n x k), in descending order of inner product.

    """
    n = len(features)

    if not 1 <= k < n:
        raise ValueError(f"k must be in [1, {n}).")

    neighbors = np.empty((n, k), dtype=np.int64)

    for start in range(0, n, KNN_BLOCK):
        stop = min(start + KNN_BLOCK, n)
        sims = features[start:stop] @ features.T
        sims[np.arange(stop - start), np.arange(start, stop)] = -np.inf
        neighbors[start:stop] = np.argsort(-sims, axis=1, kind="stable")[:, :k]

    return neighbors


def build_instance_graph(features: np.ndarray, cfg: GraphConfig) -> SparseSym:
    """Build the instance graph A = S + S^T with a monomial kernel.

    Here s_ij = max(x_i . x_j, 0)^rho if j is one of the k nearest
    neighbors of i, and 0 otherwise. Mutual neighbors add up.

    Args:
        features: Feature matrix (n x d) of unit-norm or zero rows.
        cfg: Number of neighbors and kernel exponent.

    Returns:
        Sparse symmetric instance graph.

    """
    n = len(features)
    neighbors = knn_inner_product(features, cfg.k)
    rows = np.repeat(np.arange(n), cfg.k)
    cols = neighbors.ravel()

    dots = np.einsum("ij,ij->i", features[rows], features[cols])
    weights = np.maximum(dots, 0.0) ** cfg.rho

    S = sp.csr_matrix((weights, (rows, cols)), shape=(n, n))
    A = (S + S.T).tocsr()
    A.eliminate_zeros()
    return SparseSym(A)


def build_label_graph(
    candidates: np.ndarray,
    *,
    self_loops: bool = LABEL_GRAPH_SELF_LOOPS,
) -> SparseSym:
    """Build the label graph from penalized co-occurrence statistics.

    Here a_ij = c_ij / (c_i + c_j), where c_ij counts the examples
    having both labels as candidates and c_i those having label i.
    Labels that never appear get empty rows.

    Args:
        candidates: Binary candidate-label matrix (n x L).

    Keyword Args:
        self_loops: Whether to keep the diagonal (0.5 for used labels).

    Returns:
        Sparse symmetric label graph.

    """
    Y = np.asarray(candidates, dtype=float)
    cooccur = Y.T @ Y
    counts = np.diag(cooccur)
    denom = counts[:, None] + counts[None, :]

    with np.errstate(divide="ignore", invalid="ignore"):
        A = np.where(denom > 0, cooccur / denom, 0.0)

    if not self_loops:
        np.fill_diagonal(A, 0.0)

    return SparseSym(sp.csr_matrix(A))


def build_graphs(features: np.ndarray, candidates: np.ndarray, cfg: GraphConfig) -> Graphs:
    """Build both Laplacians of a training set."""
    instance = build_instance_graph(features, cfg)
    label = build_label_graph(candidates, self_loops=cfg.label_graph_self_loops)
    logger.info(f"Built graphs: nnz(A_x)={instance.nnz}, nnz(A_y)={label.nnz}.")
    return Graphs(normalized_laplacian(instance), normalized_laplacian(label))


def normalized_laplacian(graph: SparseSym) -> NormalizedLaplacian:
    """Compute the symmetric normalized Laplacian of a graph."""
    degrees = np.asarray(graph.matrix.sum(axis=1)).ravel()

    with np.errstate(divide="ignore"):
        inv_sqrt = 1.0 / np.sqrt(degrees)

    inv_sqrt[~np.isfinite(inv_sqrt)] = 0.0
    D = sp.diags(inv_sqrt)
    scaled = (D @ graph.matrix @ D).tocsr()
    return NormalizedLaplacian(degrees, graph.matrix, scaled)


def laplacian_left_multiply(lap: NormalizedLaplacian, Z: np.ndarray) -> np.ndarray:
    """Compute L @ Z through the sparse normalized affinity."""
    if Z.shape[0] != lap.dim:
        raise ValueError(f"Z must have {lap.dim} rows.")

    return Z - lap.scaled @ Z


def laplacian_right_multiply(Z: np.ndarray, lap: NormalizedLaplacian) -> np.ndarray:
    """Compute Z @ L through the sparse normalized affinity."""
    if Z.shape[1] != lap.dim:
        raise ValueError(f"Z must have {lap.dim} columns.")

    # L is symmetric, so Z L = (L Z^T)^T
    return Z - (lap.scaled @ Z.T).T


def dump_graph(graph: SparseSym, path: PathLike) -> None:
    """Save a graph as ``row col weight`` lines."""
    row, col, weight = graph.entries
    np.savetxt(path, np.column_stack([row, col, weight]), fmt=["%d", "%d", "%.17g"])
