"""
Downstream classification with embeddings as features.

The embedding is learned on every point (unsupervised); labels are only
used by a 1-nearest-neighbour classifier trained on the train split. The
bandwidth factor alpha is picked per dimension on the tune split and the
test error is reported for that choice.
"""
import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from sklearn.neighbors import KNeighborsClassifier

from nrdr.config import get_settings
from nrdr.core.errors import ParameterError
from nrdr.services.datasets import PointCloud
from nrdr.services.embedding import EmbeddingEngine, MethodType
from nrdr.services.kernels import KernelSpec

logger = logging.getLogger(__name__)

DEFAULT_FRACTIONS: Tuple[float, float, float] = (2 / 3, 1 / 6, 1 / 6)

# Methods whose embedding does not depend on alpha
_ALPHA_FREE = {MethodType.BASELINE}


@dataclass
class DataSplit:
    train: np.ndarray
    tune: np.ndarray
    test: np.ndarray


@dataclass
class ClassificationResult:
    method: str
    d: int
    alpha: Optional[float]
    tune_error: float
    test_error: float
    seed: int

    def to_dict(self) -> Dict[str, Any]:
        return {
            "method": self.method,
            "d": self.d,
            "alpha": self.alpha,
            "tune_error": self.tune_error,
            "test_error": self.test_error,
            "seed": self.seed,
        }


def split_indices(
    n: int,
    seed: int = 0,
    fractions: Sequence[float] = DEFAULT_FRACTIONS,
) -> DataSplit:
    """Seeded shuffle cut into train / tune / test parts."""
    if len(fractions) != 3 or any(f <= 0 for f in fractions):
        raise ParameterError(f"fractions must be three positive numbers, got {fractions}")
    total = float(sum(fractions))
    n_train = int(round(n * fractions[0] / total))
    n_tune = int(round(n * fractions[1] / total))
    if n_train < 1 or n_tune < 1 or n - n_train - n_tune < 1:
        raise ParameterError(f"N={n} is too small for a three-way split")

    order = np.random.default_rng(seed).permutation(n)
    return DataSplit(
        train=order[:n_train],
        tune=order[n_train:n_train + n_tune],
        test=order[n_train + n_tune:],
    )


def nearest_neighbor_error(
    features: np.ndarray,
    labels: np.ndarray,
    train: np.ndarray,
    evaluate: np.ndarray,
) -> float:
    """Misclassification rate of a 1-NN classifier fit on `train`, scored on `evaluate`."""
    clf = KNeighborsClassifier(n_neighbors=1, n_jobs=get_settings().sklearn_n_jobs)
    clf.fit(features[train], labels[train])
    return float(np.mean(clf.predict(features[evaluate]) != labels[evaluate]))


def classify(
    cloud: PointCloud,
    spec: KernelSpec,
    methods: Sequence[str] = ("baseline", "nonredundant"),
    d_list: Sequence[int] = (1, 2, 3),
    alpha_grid: Optional[Sequence[float]] = None,
    seed: int = 0,
    fractions: Sequence[float] = DEFAULT_FRACTIONS,
    config: Optional[Dict[str, Any]] = None,
) -> List[ClassificationResult]:
    """Test error of every (method, d), alpha tuned on the tune split."""
    if cloud.labels is None:
        raise ParameterError("the point cloud has no class labels")
    if not d_list or min(d_list) < 1:
        raise ParameterError(f"d_list must hold positive dimensions, got {list(d_list)}")
    if alpha_grid is None or len(alpha_grid) == 0:
        alpha_grid = [get_settings().alpha]

    split = split_indices(cloud.n, seed, fractions)
    labels = cloud.labels
    d_max = max(d_list)
    kernel = spec.build(cloud)

    results = []
    for name in methods:
        method_type = MethodType(name)
        alphas = alpha_grid[:1] if method_type in _ALPHA_FREE else alpha_grid

        # (tune error, alpha, test error) per d
        best: Dict[int, Tuple[float, float, float]] = {}
        for alpha in alphas:
            engine = EmbeddingEngine({**(config or {}), "alpha": alpha, "seed": seed})
            embedding = engine.get_method(name).embed(cloud, spec, d_max, kernel=kernel)
            for d in d_list:
                if d > embedding.d:
                    logger.warning(f"{name} produced {embedding.d} < {d} projections; d={d} skipped")
                    continue
                features = embedding.projections[:, :d]
                tune_error = nearest_neighbor_error(features, labels, split.train, split.tune)
                if d not in best or tune_error < best[d][0]:
                    test_error = nearest_neighbor_error(features, labels, split.train, split.test)
                    best[d] = (tune_error, alpha, test_error)

        for d in sorted(best):
            tune_error, alpha, test_error = best[d]
            results.append(ClassificationResult(
                method=name,
                d=d,
                alpha=None if method_type in _ALPHA_FREE else float(alpha),
                tune_error=tune_error,
                test_error=test_error,
                seed=seed,
            ))
            logger.info(f"{name} d={d}: test error {test_error:.2%} (alpha={alpha})")
    return results
