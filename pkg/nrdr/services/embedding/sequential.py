import logging
from typing import Optional

import numpy as np

from nrdr.config import get_settings
from nrdr.core.errors import ConnectivityError, ConvergenceError, ParameterError
from nrdr.services import diagnostics
from nrdr.services.datasets import PointCloud
from nrdr.services.kernels import KernelMatrix, KernelSpec
from nrdr.services.smoother import bandwidth, build_nw_smoother

from .base import Embedding, EmbeddingMethod, MethodType, StepRecord
from .baseline import baseline_pairs, check_dimension

logger = logging.getLogger(__name__)


def sequential_regression_embed(
    cloud: PointCloud,
    spec: KernelSpec,
    d: int,
    alpha: Optional[float] = None,
    neighbor_cap: Optional[int] = None,
    seed: int = 0,
    kernel: Optional[KernelMatrix] = None,
) -> Embedding:
    """Regress the data on the projections so far, re-embed the residual, repeat.

    Step i replaces X by X - P X, with P the kernel smoother over f_1..f_{i-1},
    rebuilds the kernel from the residual points and keeps its top nontrivial
    eigenvector. A residual cloud whose graph falls apart raises
    ConnectivityError.
    """
    settings = get_settings()
    alpha = settings.alpha if alpha is None else alpha
    neighbor_cap = settings.smoother_neighbor_cap if neighbor_cap is None else neighbor_cap
    if not 0 < alpha <= 1:
        raise ParameterError(f"alpha must be in (0, 1], got {alpha}")

    K = kernel if kernel is not None else spec.build(cloud)
    check_dimension(K, d)
    first = baseline_pairs(K, 1, seed)[0]

    X = cloud.points
    columns = [first.vector]
    values = [first.value]
    steps = []

    for i in range(2, d + 1):
        prev = np.column_stack(columns)
        h = bandwidth(prev, alpha)
        smoother = build_nw_smoother(prev, h, neighbor_cap)
        residual = X - smoother.apply(X)

        residual_norm = np.linalg.norm(residual)
        ratio = float(np.linalg.norm(smoother.apply(residual)) / residual_norm) if residual_norm > 0 else 0.0

        try:
            K_i = spec.build(PointCloud(points=residual, seed=cloud.seed))
            pair = baseline_pairs(K_i, 1, seed)[0]
        except ConnectivityError as e:
            logger.error(f"Sequential regression step {i}: residual graph is disconnected: {e}")
            raise
        except ConvergenceError as e:
            raise e.at_step(i) from e

        logger.info(f"Step {i}/{d}: h={h:.4g}, predictable ratio={ratio:.3f}, lambda={pair.value:.8g}")
        columns.append(pair.vector)
        values.append(pair.value)
        steps.append(StepRecord(
            step=i,
            bandwidth=h,
            eigenvalue=pair.value,
            smoother_residual=float(np.linalg.norm(smoother.apply(pair.vector))),
            near_degenerate=pair.near_degenerate,
            predictable_ratio=ratio,
        ))

    projections = np.column_stack(columns)
    return Embedding(
        projections=projections,
        eigenvalues=np.array(values),
        method=MethodType.SEQREG,
        redundancy_scores=diagnostics.redundancy_scores(projections, alpha, neighbor_cap),
        config={
            "kernel_spec": spec.to_dict(),
            "d": d,
            "alpha": alpha,
            "neighbor_cap": neighbor_cap,
            "seed": seed,
        },
        steps=steps,
    )


class SequentialRegressionEmbedding(EmbeddingMethod):
    """Re-embeds the part of the data not explained by earlier projections."""

    method_type = MethodType.SEQREG

    def embed(
        self,
        cloud: PointCloud,
        spec: KernelSpec,
        d: int,
        kernel: Optional[KernelMatrix] = None,
    ) -> Embedding:
        return sequential_regression_embed(
            cloud, spec, d,
            alpha=self.get_config("alpha"),
            neighbor_cap=self.get_config("neighbor_cap"),
            seed=self.get_config("seed", cloud.seed),
            kernel=kernel,
        )
