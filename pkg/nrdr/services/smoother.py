"""
Nadaraya-Watson smoothing matrices over previous projections and their
truncated right singular bases.

The smoother P regresses any N-vector against the projections found so far.
Its dominant right singular vectors span the functions P can "see"; removing
them from the kernel makes the next projection unpredictable.
"""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackNoConvergence, svds
from scipy.spatial.distance import cdist
from sklearn.neighbors import NearestNeighbors

from nrdr.config import get_settings
from nrdr.core.errors import DegenerateInputError, ParameterError

logger = logging.getLogger(__name__)

# Squared distances are recomputed exactly in blocks of this many rows
_ROW_BLOCK = 512

# First number of singular triplets requested from the iterative SVD
_INITIAL_RANK = 32


@dataclass(frozen=True)
class Smoother:
    """Sparse row-stochastic N x N matrix built from previous projections."""
    matrix: sp.csr_matrix
    bandwidth: float
    neighbor_cap: int
    leave_one_out: bool = False

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def apply(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(self.matrix @ values)

    def row_sums(self) -> np.ndarray:
        return np.asarray(self.matrix.sum(axis=1)).ravel()

    def frobenius_norm(self) -> float:
        return float(np.sqrt(np.sum(self.matrix.data ** 2)))


@dataclass(frozen=True)
class DeflationBasis:
    """Orthonormal right singular vectors of a smoother above a relative cutoff."""
    vectors: np.ndarray
    singular_values: np.ndarray
    threshold: float
    frobenius_capture: float = 1.0

    @classmethod
    def empty(cls, n: int) -> "DeflationBasis":
        return cls(vectors=np.zeros((n, 0)), singular_values=np.zeros(0), threshold=0.0)

    @property
    def rank(self) -> int:
        return self.vectors.shape[1]

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    def project_out(self, x: np.ndarray) -> np.ndarray:
        """(I - VV') x"""
        if self.rank == 0:
            return np.array(x, dtype=float)
        return x - self.vectors @ (self.vectors.T @ x)


def _as_columns(prev: np.ndarray) -> np.ndarray:
    prev = np.asarray(prev, dtype=float)
    if prev.ndim == 1:
        prev = prev[:, None]
    if prev.ndim != 2 or prev.shape[1] < 1:
        raise ParameterError("previous projections must be an N x m matrix with m >= 1")
    return prev


def bandwidth(prev: np.ndarray, alpha: Optional[float] = None) -> float:
    """h = alpha * sqrt(sum_j ||f_j||^2 / N) over the previous projections."""
    if alpha is None:
        alpha = get_settings().alpha
    if not alpha > 0:
        raise ParameterError(f"alpha must be > 0, got {alpha}")

    prev = _as_columns(prev)
    energy = float(np.sum(prev ** 2))
    if energy == 0.0:
        raise DegenerateInputError("previous projections are all zero; bandwidth is undefined")
    return alpha * np.sqrt(energy / prev.shape[0])


def _normalize_rows(W: sp.csr_matrix) -> sp.csr_matrix:
    sums = np.asarray(W.sum(axis=1)).ravel()
    # rows with no weight (leave-one-out with every neighbour underflowing) stay zero
    inv = np.divide(1.0, sums, out=np.zeros_like(sums), where=sums > 0)
    return (sp.diags(inv) @ W).tocsr()


def _dense_weights(prev: np.ndarray, h: float) -> np.ndarray:
    return np.exp(-cdist(prev, prev, "sqeuclidean") / (2.0 * h * h))


def _neighbor_indices(prev: np.ndarray, cap: int, n_jobs: Optional[int]) -> np.ndarray:
    """cap nearest samples of every row in projection space, the row itself included."""
    n = prev.shape[0]
    nn = NearestNeighbors(n_neighbors=cap, n_jobs=n_jobs).fit(prev)
    indices = nn.kneighbors(prev, return_distance=False)

    own = np.arange(n)
    missing = ~np.any(indices == own[:, None], axis=1)
    if np.any(missing):
        # duplicates can push a point out of its own list
        indices[missing, -1] = own[missing]
    return indices


def build_nw_smoother(
    prev: np.ndarray,
    h: float,
    neighbor_cap: Optional[int] = None,
    leave_one_out: bool = False,
) -> Smoother:
    """Row-normalized Gaussian weights exp(-||F_j - F_k||^2 / 2h^2) between samples.

    Only the neighbor_cap nearest samples of each row in projection space get a
    weight; with neighbor_cap >= N the matrix is the full dense formula. With
    leave_one_out the self-weight is dropped before normalization.
    """
    settings = get_settings()
    prev = _as_columns(prev)
    n = prev.shape[0]
    if not h > 0:
        raise ParameterError(f"bandwidth must be > 0, got {h}")
    if neighbor_cap is None:
        neighbor_cap = settings.smoother_neighbor_cap
    if neighbor_cap < 1:
        raise ParameterError(f"neighbor_cap must be >= 1, got {neighbor_cap}")
    cap = min(int(neighbor_cap), n)

    if cap == n:
        W = _dense_weights(prev, h)
        if leave_one_out:
            np.fill_diagonal(W, 0.0)
        matrix = _normalize_rows(sp.csr_matrix(W))
    else:
        indices = _neighbor_indices(prev, cap, settings.sklearn_n_jobs)
        weights = np.empty(indices.shape)
        for start in range(0, n, _ROW_BLOCK):
            stop = min(n, start + _ROW_BLOCK)
            diff = prev[indices[start:stop]] - prev[start:stop, None, :]
            weights[start:stop] = np.exp(-np.sum(diff ** 2, axis=2) / (2.0 * h * h))
        if leave_one_out:
            weights[indices == np.arange(n)[:, None]] = 0.0

        rows = np.repeat(np.arange(n), cap)
        W = sp.csr_matrix((weights.ravel(), (rows, indices.ravel())), shape=(n, n))
        W.eliminate_zeros()
        matrix = _normalize_rows(W)

    logger.debug(
        f"NW smoother: N={n}, h={h:.4g}, cap={cap}, nnz={matrix.nnz}, loo={leave_one_out}"
    )
    return Smoother(matrix=matrix, bandwidth=float(h), neighbor_cap=cap, leave_one_out=leave_one_out)


def _dense_right_singular(P: sp.csr_matrix):
    _, s, vt = scipy.linalg.svd(P.toarray(), full_matrices=False)
    return s, vt.T


def _iterative_right_singular(P: sp.csr_matrix, k: int, seed: int):
    v0 = np.random.default_rng(seed).standard_normal(P.shape[0])
    _, s, vt = svds(P, k=k, tol=0, v0=v0, solver="arpack")
    order = np.argsort(s)[::-1]
    return s[order], vt[order].T


def truncated_right_singular_basis(
    smoother: Smoother,
    threshold: Optional[float] = None,
    method: str = "auto",
    seed: int = 0,
) -> DeflationBasis:
    """Right singular vectors of P with singular value >= threshold * sigma_max.

    The iterative path asks for a growing number of triplets until the
    smallest one returned falls below the cutoff, so P is never densified
    unless the retained rank approaches N.
    """
    settings = get_settings()
    if threshold is None:
        threshold = settings.sv_threshold
    if not 0 < threshold < 1:
        raise ParameterError(f"singular-value threshold must be in (0, 1), got {threshold}")
    if method not in ("auto", "dense", "iterative"):
        raise ParameterError(f"unknown SVD method {method!r}")

    P = smoother.matrix
    n = P.shape[0]
    use_dense = method == "dense" or (method == "auto" and n <= settings.dense_cutoff) or n < 4

    s = vectors = None
    if not use_dense:
        k = min(_INITIAL_RANK, n - 2)
        while True:
            try:
                s, vectors = _iterative_right_singular(P, k, seed)
            except ArpackNoConvergence:
                logger.warning(f"Iterative SVD did not converge at k={k}; using dense SVD")
                s = None
                break
            if s[-1] < threshold * s[0]:
                break
            if k >= n - 2:
                # cutoff not reached with every triplet ARPACK can return
                s = None
                break
            k = min(2 * k, n - 2)

    if s is None:
        s, vectors = _dense_right_singular(P)

    keep = s >= threshold * s[0]
    total = smoother.frobenius_norm() ** 2
    capture = float(np.sum(s[keep] ** 2) / total) if total > 0 else 1.0

    logger.debug(
        f"Truncated SVD: rank {int(keep.sum())} of N={n} at threshold {threshold:g}, "
        f"Frobenius capture {capture:.4%}"
    )
    return DeflationBasis(
        vectors=np.ascontiguousarray(vectors[:, keep]),
        singular_values=s[keep],
        threshold=float(threshold),
        frobenius_capture=capture,
    )
