"""
Non-redundant spectral embedding.

Each new projection maximizes the kernel objective subject to being
unpredictable from the projections before it: the retained right singular
vectors of a kernel smoother over the previous projections are projected out
of the kernel, and the top eigenvector of what remains is taken.
"""
import logging
from typing import Optional

import numpy as np

from nrdr.config import get_settings
from nrdr.core.errors import ConvergenceError, ParameterError
from nrdr.services import diagnostics
from nrdr.services.datasets import PointCloud
from nrdr.services.eigensolve import deflated_operator, top_eigenpair
from nrdr.services.kernels import KernelMatrix, KernelSpec
from nrdr.services.smoother import bandwidth, build_nw_smoother, truncated_right_singular_basis

from .base import Embedding, EmbeddingMethod, MethodType, StepRecord
from .baseline import check_dimension, maximization_kernel

logger = logging.getLogger(__name__)


def nonredundant_embed(
    K: KernelMatrix,
    d: int,
    alpha: Optional[float] = None,
    sv_threshold: Optional[float] = None,
    neighbor_cap: Optional[int] = None,
    seed: int = 0,
    keep_operators: bool = False,
) -> Embedding:
    """Sequentially unpredictable embedding of kernel K into at most d columns.

    Stops early, with a notice, when the top deflated eigenvalue drops to
    exhaustion_ratio times the first one. With keep_operators each step
    record also holds its smoother and deflation basis.
    """
    settings = get_settings()
    alpha = settings.alpha if alpha is None else alpha
    sv_threshold = settings.sv_threshold if sv_threshold is None else sv_threshold
    neighbor_cap = settings.smoother_neighbor_cap if neighbor_cap is None else neighbor_cap
    if not 0 < alpha <= 1:
        raise ParameterError(f"alpha must be in (0, 1], got {alpha}")
    if not 0 < sv_threshold < 1:
        raise ParameterError(f"sv_threshold must be in (0, 1), got {sv_threshold}")
    check_dimension(K, d)

    Kmax = maximization_kernel(K)
    first = top_eigenpair(deflated_operator(Kmax, None, remove_constant=True), seed=seed)
    columns = [first.vector]
    values = [first.value]
    steps = []
    notices = []
    if first.near_degenerate:
        notices.append("step 1: near-degenerate top eigenvalue")

    for i in range(2, d + 1):
        prev = np.column_stack(columns)
        h = bandwidth(prev, alpha)
        smoother = build_nw_smoother(prev, h, neighbor_cap)
        basis = truncated_right_singular_basis(smoother, sv_threshold, seed=seed)

        op = deflated_operator(Kmax, basis, remove_constant=True)
        if op.free_dimension == 0:
            notices.append(f"manifold exhausted at step {i}: the smoother spans every direction")
            break
        try:
            pair = top_eigenpair(op, seed=seed)
        except ConvergenceError as e:
            raise e.at_step(i) from e

        if pair.value <= settings.exhaustion_ratio * abs(values[0]):
            notices.append(
                f"manifold exhausted at step {i}: top eigenvalue {pair.value:.3e} is negligible"
            )
            break

        f = pair.vector
        V = basis.vectors
        record = StepRecord(
            step=i,
            bandwidth=h,
            eigenvalue=pair.value,
            rank=basis.rank,
            singular_values=basis.singular_values,
            frobenius_capture=basis.frobenius_capture,
            truncated_residual=float(np.linalg.norm(smoother.apply(V @ (V.T @ f)))),
            smoother_residual=float(np.linalg.norm(smoother.apply(f))),
            near_degenerate=pair.near_degenerate,
        )
        if keep_operators:
            record.smoother = smoother
            record.basis = basis
        if pair.near_degenerate:
            notices.append(f"step {i}: near-degenerate top eigenvalue")

        logger.info(
            f"Step {i}/{d}: h={h:.4g}, rank={basis.rank}, "
            f"Frobenius capture={basis.frobenius_capture:.4%}, lambda={pair.value:.8g}, "
            f"||Pf||={record.smoother_residual:.3e}"
        )
        columns.append(f)
        values.append(pair.value)
        steps.append(record)

    projections = np.column_stack(columns)
    if projections.shape[1] < d:
        logger.warning(f"Non-redundant embedding stopped at {projections.shape[1]} of {d} columns")

    return Embedding(
        projections=projections,
        eigenvalues=np.array(values),
        method=MethodType.NONREDUNDANT,
        redundancy_scores=diagnostics.redundancy_scores(projections, alpha, neighbor_cap),
        config={
            "kernel": K.name,
            "d": d,
            "alpha": alpha,
            "sv_threshold": sv_threshold,
            "neighbor_cap": neighbor_cap,
            "seed": seed,
        },
        notices=notices,
        steps=steps,
    )


class NonRedundantEmbedding(EmbeddingMethod):
    """Eigenvectors of kernels deflated by smoothers over earlier projections."""

    method_type = MethodType.NONREDUNDANT

    def embed(
        self,
        cloud: PointCloud,
        spec: KernelSpec,
        d: int,
        kernel: Optional[KernelMatrix] = None,
    ) -> Embedding:
        K = self._kernel(cloud, spec, kernel)
        embedding = nonredundant_embed(
            K, d,
            alpha=self.get_config("alpha"),
            sv_threshold=self.get_config("sv_threshold"),
            neighbor_cap=self.get_config("neighbor_cap"),
            seed=self.get_config("seed", cloud.seed),
        )
        embedding.config["kernel_spec"] = spec.to_dict()
        return embedding
