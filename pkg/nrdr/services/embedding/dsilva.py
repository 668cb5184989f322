import logging
from typing import Optional

import numpy as np

from nrdr.config import get_settings
from nrdr.core.errors import ParameterError
from nrdr.services.datasets import PointCloud
from nrdr.services.diagnostics import redundancy_score
from nrdr.services.kernels import KernelMatrix, KernelSpec
from nrdr.services.smoother import bandwidth

from .base import Embedding, EmbeddingMethod, MethodType
from .baseline import spectral_embed

logger = logging.getLogger(__name__)


def dsilva_select(
    embedding: Embedding,
    target: int,
    score_threshold: Optional[float] = None,
    alpha: Optional[float] = None,
    neighbor_cap: Optional[int] = None,
) -> Embedding:
    """Keep, in eigenvalue order, the columns that the kept ones cannot predict.

    A candidate survives when its leave-one-out regression score against the
    columns kept so far exceeds score_threshold. The first column is always
    kept. Fewer than `target` survivors are returned with a notice.
    """
    settings = get_settings()
    score_threshold = settings.score_threshold if score_threshold is None else score_threshold
    if not 1 <= target <= embedding.d:
        raise ParameterError(f"target must be in [1, {embedding.d}], got {target}")

    F = embedding.projections
    kept = [0]
    scores = [1.0]
    for j in range(1, embedding.d):
        if len(kept) == target:
            break
        h = bandwidth(F[:, kept], alpha)
        candidate = np.column_stack([F[:, kept], F[:, j]])
        score = redundancy_score(candidate, len(kept) + 1, h, neighbor_cap)
        logger.debug(f"Candidate projection {j + 1}: score {score:.3f}")
        if score > score_threshold:
            kept.append(j)
            scores.append(score)

    notices = list(embedding.notices)
    if len(kept) < target:
        message = f"only {len(kept)} of {target} projections passed the score threshold {score_threshold}"
        notices.append(message)
        logger.warning(message.capitalize())

    selected = [j + 1 for j in kept]
    logger.info(f"Selected projections {selected} out of {embedding.d}")
    return Embedding(
        projections=F[:, kept],
        eigenvalues=np.asarray(embedding.eigenvalues)[kept],
        method=MethodType.DSILVA,
        redundancy_scores=np.array(scores),
        config={
            **embedding.config,
            "target": target,
            "score_threshold": score_threshold,
            "selected_columns": selected,
        },
        notices=notices,
    )


class DsilvaEmbedding(EmbeddingMethod):
    """Baseline embedding with more columns, pruned by regression score."""

    method_type = MethodType.DSILVA

    def embed(
        self,
        cloud: PointCloud,
        spec: KernelSpec,
        d: int,
        kernel: Optional[KernelMatrix] = None,
    ) -> Embedding:
        K = self._kernel(cloud, spec, kernel)
        d_large = min(self.get_config("d_large", 2 * d), K.n - 1)
        alpha = self.get_config("alpha")
        neighbor_cap = self.get_config("neighbor_cap")

        candidates = spectral_embed(
            K, max(d, d_large), seed=self.get_config("seed", cloud.seed),
            alpha=alpha, neighbor_cap=neighbor_cap,
        )
        embedding = dsilva_select(
            candidates, d,
            score_threshold=self.get_config("score_threshold"),
            alpha=alpha,
            neighbor_cap=neighbor_cap,
        )
        embedding.config["kernel_spec"] = spec.to_dict()
        return embedding
