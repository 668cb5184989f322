import logging
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from nrdr.services.datasets import PointCloud
from nrdr.services.diagnostics import intrinsic_correlation
from nrdr.services.kernels import KernelSpec

from .base import Embedding, EmbeddingMethod, MethodType
from .baseline import BaselineEmbedding
from .dsilva import DsilvaEmbedding
from .nonredundant import NonRedundantEmbedding
from .sequential import SequentialRegressionEmbedding

logger = logging.getLogger(__name__)


class EmbeddingEngine:
    """Runs several embedding methods on one cloud and compares them."""

    def __init__(self, config: Optional[Dict[str, Any]] = None):
        self.config = config or {}

        self.methods: Dict[MethodType, EmbeddingMethod] = {
            MethodType.BASELINE: BaselineEmbedding(self.config),
            MethodType.NONREDUNDANT: NonRedundantEmbedding(self.config),
            MethodType.SEQREG: SequentialRegressionEmbedding(self.config),
            MethodType.DSILVA: DsilvaEmbedding(self.config),
        }

    def get_method(self, method: str) -> EmbeddingMethod:
        return self.methods[MethodType(method)]

    def run(
        self,
        cloud: PointCloud,
        spec: KernelSpec,
        d: int,
        methods: Optional[Sequence[str]] = None,
    ) -> Dict[MethodType, Embedding]:
        """Embed with every requested method; a failing method is logged and skipped."""
        selected = [MethodType(m) for m in methods] if methods else list(self.methods)

        # one kernel shared by every method that embeds the original cloud
        kernel = spec.build(cloud)

        results: Dict[MethodType, Embedding] = {}
        for method_type in selected:
            try:
                embedding = self.methods[method_type].embed(cloud, spec, d, kernel=kernel)
                results[method_type] = embedding
                logger.info(f"{method_type.value} produced {embedding.d} projections")
            except Exception as e:
                logger.error(f"{method_type.value} embedding error: {e}")

        logger.info(f"Embedded with {len(results)} of {len(selected)} methods")
        return results

    def compare(
        self,
        cloud: PointCloud,
        spec: KernelSpec,
        d: int,
        methods: Optional[Sequence[str]] = None,
    ) -> List[Dict[str, Any]]:
        """One summary row per method: eigenvalues, redundancy scores, intrinsic correlations."""
        selected = [MethodType(m) for m in methods] if methods else list(self.methods)
        results = self.run(cloud, spec, d, [m.value for m in selected])

        rows = []
        for method_type in selected:
            embedding = results.get(method_type)
            if embedding is None:
                rows.append({"method": method_type.value, "error": "failed (see log)"})
                continue

            row: Dict[str, Any] = {
                "method": method_type.value,
                "d": embedding.d,
                "eigenvalues": [float(v) for v in embedding.eigenvalues],
                "redundancy_scores": [float(s) for s in embedding.redundancy_scores],
                "min_score_after_first": (
                    float(np.min(embedding.redundancy_scores[1:])) if embedding.d > 1 else None
                ),
                "notices": embedding.notices,
            }
            if cloud.intrinsic is not None:
                row["intrinsic_correlation"] = intrinsic_correlation(embedding, cloud).tolist()
            rows.append(row)
        return rows
