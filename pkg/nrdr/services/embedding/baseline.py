import logging
from typing import List, Optional

import numpy as np

from nrdr.core.errors import ParameterError
from nrdr.services import diagnostics
from nrdr.services.datasets import PointCloud
from nrdr.services.eigensolve import EigenPair, deflated_operator, top_eigenpairs
from nrdr.services.kernels import KernelMatrix, KernelSpec, Orientation, to_maximization

from .base import Embedding, EmbeddingMethod, MethodType

logger = logging.getLogger(__name__)


def maximization_kernel(K: KernelMatrix) -> KernelMatrix:
    return to_maximization(K) if K.orientation is Orientation.MINIMIZE else K


def check_dimension(K: KernelMatrix, d: int) -> None:
    if not 1 <= d < K.n:
        raise ParameterError(f"d must satisfy 1 <= d < N={K.n}, got {d}")


def baseline_pairs(K: KernelMatrix, d: int, seed: int = 0) -> List[EigenPair]:
    """Top d nontrivial eigenpairs of the kernel in maximization orientation."""
    check_dimension(K, d)
    op = deflated_operator(maximization_kernel(K), None, remove_constant=True)
    return top_eigenpairs(op, d, seed=seed)


def spectral_embed(
    K: KernelMatrix,
    d: int,
    seed: int = 0,
    alpha: Optional[float] = None,
    neighbor_cap: Optional[int] = None,
) -> Embedding:
    """Classical spectral embedding: the top d nontrivial eigenvectors of K.

    A minimization kernel is flipped first; the constant vector is projected
    out of the operator, which centers it.
    """
    pairs = baseline_pairs(K, d, seed)
    projections = np.column_stack([p.vector for p in pairs])
    eigenvalues = np.array([p.value for p in pairs])

    embedding = Embedding(
        projections=projections,
        eigenvalues=eigenvalues,
        method=MethodType.BASELINE,
        config={"kernel": K.name, "d": d, "seed": seed},
    )
    if any(p.near_degenerate for p in pairs):
        embedding.notices.append("near-degenerate eigenvalues; columns within a tied eigenspace are not unique")

    embedding.redundancy_scores = diagnostics.redundancy_scores(projections, alpha, neighbor_cap)
    logger.info(f"Baseline embedding of '{K.name}': d={d}, eigenvalues {np.round(eigenvalues, 6).tolist()}")
    return embedding


class BaselineEmbedding(EmbeddingMethod):
    """Top eigenvectors of the kernel, no redundancy handling."""

    method_type = MethodType.BASELINE

    def embed(
        self,
        cloud: PointCloud,
        spec: KernelSpec,
        d: int,
        kernel: Optional[KernelMatrix] = None,
    ) -> Embedding:
        K = self._kernel(cloud, spec, kernel)
        embedding = spectral_embed(
            K, d,
            seed=self.get_config("seed", cloud.seed),
            alpha=self.get_config("alpha"),
            neighbor_cap=self.get_config("neighbor_cap"),
        )
        embedding.config.update({"kernel_spec": spec.to_dict()})
        return embedding
