"""
Kernel matrices of the spectral problem max f'Kf s.t. 1'f = 0, f'f = 1.

LEM and LLE kernels are sparse; Isomap is dense. Every kernel is brought to
the maximization orientation before it is decomposed.
"""
import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components, shortest_path
from scipy.sparse.linalg import LinearOperator, eigsh
from scipy.spatial.distance import cdist

from nrdr.config import get_settings
from nrdr.core.errors import ConnectivityError, NumericalError, ParameterError
from nrdr.services.datasets import PointCloud

logger = logging.getLogger(__name__)

Matrix = Union[np.ndarray, sp.spmatrix]

# Distance rows are computed in blocks of at most this many entries
_BLOCK_ENTRIES = 4_000_000


class Orientation(str, Enum):
    MAXIMIZE = "maximize"
    MINIMIZE = "minimize"


class KernelKind(str, Enum):
    LEM = "lem"
    LLE = "lle"
    ISOMAP = "isomap"


@dataclass
class NeighborhoodGraph:
    """Undirected k-nearest-neighbour graph; each edge stored once with i < j."""
    n: int
    k: int
    rows: np.ndarray
    cols: np.ndarray
    distances: np.ndarray

    @property
    def edges(self) -> List[Tuple[int, int, float]]:
        return [
            (int(i), int(j), float(d))
            for i, j, d in zip(self.rows, self.cols, self.distances)
        ]

    def adjacency(self) -> sp.csr_matrix:
        ones = np.ones(len(self.rows))
        upper = sp.coo_matrix((ones, (self.rows, self.cols)), shape=(self.n, self.n))
        return (upper + upper.T).tocsr()

    def distance_matrix(self) -> sp.csr_matrix:
        # Zero-length edges (duplicate points) must survive as explicit entries
        d = np.where(self.distances > 0, self.distances, np.finfo(float).tiny)
        upper = sp.coo_matrix((d, (self.rows, self.cols)), shape=(self.n, self.n))
        return (upper + upper.T).tocsr()

    def neighbors(self, i: int) -> np.ndarray:
        adj = self.adjacency()
        return adj.indices[adj.indptr[i]:adj.indptr[i + 1]]

    def component_sizes(self) -> List[int]:
        count, labels = connected_components(self.adjacency(), directed=False)
        return np.bincount(labels, minlength=count).tolist()

    def require_connected(self) -> None:
        sizes = self.component_sizes()
        if len(sizes) > 1:
            raise ConnectivityError(sizes)


@dataclass
class KernelMatrix:
    """Symmetric N x N kernel with its optimization orientation.

    With `centered` set, the kernel acts as (I - 11'/N) K (I - 11'/N); the
    centering is applied on the fly and never materialized. In maximization
    orientation `lambda_max_bound`, when known, bounds every eigenvalue from
    above.
    """
    entries: Matrix
    orientation: Orientation
    trivial_vector: Optional[np.ndarray] = None
    lambda_max_bound: Optional[float] = None
    centered: bool = False
    name: str = "custom"
    # factorizations reused across solves; not carried over by replace()
    factor_cache: Dict[Any, Any] = field(default_factory=dict, init=False, repr=False, compare=False)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.entries)

    def matmat(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.centered:
            x = x - x.mean(axis=0)
        y = np.asarray(self.entries @ x)
        if self.centered:
            y = y - y.mean(axis=0)
        return y

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.matmat(np.asarray(x, dtype=float).reshape(-1, 1)).ravel()

    def as_linear_operator(self) -> LinearOperator:
        return LinearOperator(
            (self.n, self.n), matvec=self.matvec, matmat=self.matmat,
            rmatvec=self.matvec, dtype=float,
        )

    def to_dense(self) -> np.ndarray:
        dense = self.entries.toarray() if self.is_sparse else np.array(self.entries, dtype=float)
        if self.centered:
            dense = dense - dense.mean(axis=0)
            dense = dense - dense.mean(axis=1, keepdims=True)
        return dense

    def symmetry_error(self) -> float:
        """max |K_ij - K_ji| relative to max |K|."""
        if self.is_sparse:
            diff = abs(self.entries - self.entries.T).max()
            scale = abs(self.entries).max()
        else:
            diff = np.abs(self.entries - self.entries.T).max()
            scale = np.abs(self.entries).max()
        return float(diff / scale) if scale > 0 else 0.0


def knn_graph(cloud: PointCloud, k: int, metric: str = "euclidean") -> NeighborhoodGraph:
    """Symmetrized (mutual-OR) k-nearest-neighbour graph.

    Ties in distance go to the lower index. Duplicate points give zero-length
    edges. Connectivity is not checked here.
    """
    if metric != "euclidean":
        raise ParameterError(f"unsupported metric {metric!r}")
    n = cloud.n
    if not 1 <= k < n:
        raise ParameterError(f"k must satisfy 1 <= k < N={n}, got {k}")

    X = cloud.points
    block = max(1, _BLOCK_ENTRIES // n)
    nearest = np.empty((n, k), dtype=np.int64)
    for start in range(0, n, block):
        stop = min(n, start + block)
        dist = cdist(X[start:stop], X)
        dist[np.arange(stop - start), np.arange(start, stop)] = np.inf
        # stable sort keeps lower indices first among equal distances
        nearest[start:stop] = np.argsort(dist, axis=1, kind="stable")[:, :k]

    src = np.repeat(np.arange(n), k)
    dst = nearest.ravel()
    lo, hi = np.minimum(src, dst), np.maximum(src, dst)
    keys = np.unique(lo * n + hi)
    rows, cols = keys // n, keys % n
    distances = np.linalg.norm(X[rows] - X[cols], axis=1)

    logger.debug(f"kNN graph: N={n}, k={k}, {len(rows)} undirected edges")
    return NeighborhoodGraph(n=n, k=k, rows=rows, cols=cols, distances=distances)


def _sinkhorn_scaling(W: sp.csr_matrix, tol: float, max_iter: int) -> np.ndarray:
    """Diagonal scaling x with diag(x) W diag(x) doubly stochastic (W symmetric)."""
    x = 1.0 / np.sqrt(np.asarray(W.sum(axis=1)).ravel())
    error = np.inf
    for iteration in range(max_iter):
        Wx = W @ x
        error = np.max(np.abs(x * Wx - 1.0))
        if error < tol:
            break
        x = np.sqrt(x / Wx)
    else:
        logger.warning(
            f"Sinkhorn balancing stopped after {max_iter} iterations (row error {error:.2e})"
        )
    return x


def lem_random_walk(graph: NeighborhoodGraph, sigma: Optional[float] = None) -> sp.csr_matrix:
    """Row-normalized random-walk matrix of the heat-weighted graph.

    Heat weights exp(-d^2 / 2 sigma^2) on edges and exp(0) = 1 on the diagonal,
    balanced to be doubly stochastic before the row normalization so that the
    constant vector is preserved by its symmetrization.
    """
    settings = get_settings()
    graph.require_connected()

    if sigma is None:
        sigma = float(graph.distances.mean()) if len(graph.distances) else 0.0
        if sigma <= 0:
            sigma = 1.0
    if sigma <= 0:
        raise ParameterError(f"sigma must be positive, got {sigma}")

    w = np.exp(-graph.distances ** 2 / (2.0 * sigma ** 2))
    upper = sp.coo_matrix((w, (graph.rows, graph.cols)), shape=(graph.n, graph.n))
    W = (upper + upper.T + sp.identity(graph.n)).tocsr()

    x = _sinkhorn_scaling(W, settings.sinkhorn_tol, settings.sinkhorn_max_iter)
    balanced = sp.diags(x) @ W @ sp.diags(x)
    row_sums = np.asarray(balanced.sum(axis=1)).ravel()
    return (sp.diags(1.0 / row_sums) @ balanced).tocsr()


def kernel_lem(graph: NeighborhoodGraph, sigma: Optional[float] = None) -> KernelMatrix:
    """Laplacian Eigenmaps kernel S = (P + P') / 2 of the random walk P.

    P is not the plain D^-1 W walk: W is first balanced to be doubly
    stochastic, so S keeps the constant vector at eigenvalue 1 and every
    other eigenvalue at or below it. The plain walk's symmetrization has
    neither property on a non-uniform degree sequence.
    """
    P = lem_random_walk(graph, sigma)
    S = ((P + P.T) * 0.5).tocsr()
    return KernelMatrix(
        entries=S,
        orientation=Orientation.MAXIMIZE,
        trivial_vector=np.full(graph.n, 1.0 / np.sqrt(graph.n)),
        lambda_max_bound=1.0,
        name=KernelKind.LEM.value,
    )


def lle_weights(graph: NeighborhoodGraph, cloud: PointCloud, reg: Optional[float] = None) -> sp.csr_matrix:
    """Reconstruction weights of every point from its graph neighbours (rows sum to 1).

    `reg` is relative: the ridge added to the local Gram is reg * trace(G) / k_i.
    """
    if reg is None:
        reg = get_settings().lle_reg
    if reg < 0:
        raise ParameterError(f"reg must be >= 0, got {reg}")
    if graph.n != cloud.n:
        raise ParameterError("graph and cloud sizes differ")

    X = cloud.points
    adj = graph.adjacency()
    rows, cols, vals = [], [], []
    for i in range(graph.n):
        nbrs = adj.indices[adj.indptr[i]:adj.indptr[i + 1]]
        Z = X[nbrs] - X[i]
        G = Z @ Z.T
        trace = np.trace(G)
        ridge = reg * trace / len(nbrs) if trace > 0 else reg
        G.flat[::len(nbrs) + 1] += ridge

        if np.linalg.cond(G) > 1e12:
            raise NumericalError(
                f"local Gram matrix of point {i} is singular ({len(nbrs)} neighbours in "
                f"{cloud.dim} dimensions); use reg > 0"
            )
        w = scipy.linalg.solve(G, np.ones(len(nbrs)), assume_a="sym")
        rows.append(np.full(len(nbrs), i))
        cols.append(nbrs)
        vals.append(w / w.sum())

    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(graph.n, graph.n),
    )


def kernel_lle(graph: NeighborhoodGraph, cloud: PointCloud, reg: Optional[float] = None) -> KernelMatrix:
    """LLE kernel K = (I - W)'(I - W), to be minimized."""
    W = lle_weights(graph, cloud, reg)
    M = sp.identity(graph.n, format="csr") - W
    K = (M.T @ M).tocsr()
    return KernelMatrix(
        entries=K,
        orientation=Orientation.MINIMIZE,
        trivial_vector=np.full(graph.n, 1.0 / np.sqrt(graph.n)),
        name=KernelKind.LLE.value,
    )


def geodesic_distances(graph: NeighborhoodGraph) -> np.ndarray:
    graph.require_connected()
    return shortest_path(graph.distance_matrix(), method="D", directed=False)


def kernel_isomap(graph: NeighborhoodGraph) -> KernelMatrix:
    """Isomap kernel: double-centered squared geodesic distances, -H G^2 H / 2."""
    G2 = geodesic_distances(graph) ** 2
    B = -0.5 * (G2 - G2.mean(axis=0)[None, :] - G2.mean(axis=1)[:, None] + G2.mean())
    B = 0.5 * (B + B.T)
    return KernelMatrix(entries=B, orientation=Orientation.MAXIMIZE, name=KernelKind.ISOMAP.value)


def largest_eigenvalue(K: KernelMatrix, seed: int = 0) -> float:
    settings = get_settings()
    if K.n <= settings.dense_cutoff:
        return float(np.linalg.eigvalsh(K.to_dense())[-1])
    v0 = np.random.default_rng(seed).standard_normal(K.n)
    values = eigsh(K.as_linear_operator(), k=1, which="LA", tol=1e-12, v0=v0,
                   maxiter=settings.eig_max_iter, return_eigenvectors=False)
    return float(values[0])


def to_maximization(K: KernelMatrix) -> KernelMatrix:
    """K' = lambda_max I - K: the bottom eigenvectors of K become the top ones of K'."""
    if K.orientation is Orientation.MAXIMIZE:
        logger.warning(f"Kernel '{K.name}' is already a maximization kernel; left unchanged")
        return K

    lam = K.lambda_max_bound if K.lambda_max_bound is not None else largest_eigenvalue(K)
    if K.is_sparse:
        entries = (lam * sp.identity(K.n, format="csr") - K.entries).tocsr()
    else:
        entries = lam * np.eye(K.n) - np.asarray(K.entries)

    logger.debug(f"Flipped kernel '{K.name}' with lambda_max={lam:.6g}")
    return replace(K, entries=entries, orientation=Orientation.MAXIMIZE, lambda_max_bound=lam)


def center_kernel(K: KernelMatrix) -> KernelMatrix:
    """(I - 11'/N) K (I - 11'/N), applied implicitly."""
    return replace(K, centered=True)


@dataclass
class KernelSpec:
    """Recipe for rebuilding a kernel from any point cloud."""
    kind: KernelKind = KernelKind.LEM
    k: Optional[int] = None
    sigma: Optional[float] = None
    reg: Optional[float] = None

    def __post_init__(self):
        self.kind = KernelKind(self.kind)
        if self.k is None:
            self.k = get_settings().knn_k

    def build(self, cloud: PointCloud) -> KernelMatrix:
        graph = knn_graph(cloud, min(self.k, cloud.n - 1))
        if self.kind is KernelKind.LEM:
            return kernel_lem(graph, self.sigma)
        if self.kind is KernelKind.LLE:
            return kernel_lle(graph, cloud, self.reg)
        return kernel_isomap(graph)

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "k": self.k, "sigma": self.sigma, "reg": self.reg}
