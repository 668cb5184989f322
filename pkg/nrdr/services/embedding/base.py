from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional

import numpy as np

from nrdr.services.datasets import PointCloud
from nrdr.services.kernels import KernelMatrix, KernelSpec
from nrdr.services.smoother import DeflationBasis, Smoother


class MethodType(str, Enum):
    BASELINE = "baseline"
    NONREDUNDANT = "nonredundant"
    SEQREG = "seqreg"
    DSILVA = "dsilva"


@dataclass
class StepRecord:
    """What happened at one step i >= 2 of a sequential embedding."""
    step: int
    bandwidth: float
    eigenvalue: float

    # Truncated smoother (non-redundant steps)
    rank: int = 0
    singular_values: np.ndarray = field(default_factory=lambda: np.zeros(0))
    frobenius_capture: Optional[float] = None
    truncated_residual: Optional[float] = None  # ||P V V' f||
    smoother_residual: Optional[float] = None  # ||P f||, full smoother
    near_degenerate: bool = False

    # Sequential regression: ||P X_res||_F / ||X_res||_F
    predictable_ratio: Optional[float] = None

    # Kept for oracle checks; not serialized
    smoother: Optional[Smoother] = field(default=None, repr=False)
    basis: Optional[DeflationBasis] = field(default=None, repr=False)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "step": self.step,
            "bandwidth": self.bandwidth,
            "eigenvalue": self.eigenvalue,
            "rank": self.rank,
            "singular_values": [float(s) for s in self.singular_values],
            "frobenius_capture": self.frobenius_capture,
            "truncated_residual": self.truncated_residual,
            "smoother_residual": self.smoother_residual,
            "near_degenerate": self.near_degenerate,
            "predictable_ratio": self.predictable_ratio,
        }


@dataclass
class Embedding:
    """N x d projections (column i = f_i) with per-column eigenvalue and redundancy score."""
    projections: np.ndarray
    eigenvalues: np.ndarray
    method: MethodType
    redundancy_scores: Optional[np.ndarray] = None  # 1 = unpredictable; column 1 is always 1

    config: Dict[str, Any] = field(default_factory=dict)
    notices: List[str] = field(default_factory=list)
    steps: List[StepRecord] = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.projections.shape[0]

    @property
    def d(self) -> int:
        return self.projections.shape[1]

    def column(self, i: int) -> np.ndarray:
        """Projection f_i, 1-based."""
        return self.projections[:, i - 1]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "method": self.method.value,
            "n": self.n,
            "d": self.d,
            "eigenvalues": [float(v) for v in self.eigenvalues],
            "redundancy_scores": (
                [float(s) for s in self.redundancy_scores]
                if self.redundancy_scores is not None else None
            ),
            "config": self.config,
            "notices": self.notices,
            "steps": [s.to_dict() for s in self.steps],
        }


class EmbeddingMethod(ABC):
    """Base class for embedding strategies."""

    method_type: MethodType

    def __init__(self, config: Optional[Dict[str, Any]] = None):
        self.config = config or {}

    @abstractmethod
    def embed(
        self,
        cloud: PointCloud,
        spec: KernelSpec,
        d: int,
        kernel: Optional[KernelMatrix] = None,
    ) -> Embedding:
        """Embed a cloud into d dimensions; `kernel` is spec.build(cloud) when already built."""
        pass

    def get_config(self, key: str, default: Any = None) -> Any:
        return self.config.get(key, default)

    def describe(self) -> Dict[str, Any]:
        return {"method": self.method_type.value, **self.config}

    def _kernel(self, cloud: PointCloud, spec: KernelSpec, kernel: Optional[KernelMatrix]) -> KernelMatrix:
        return kernel if kernel is not None else spec.build(cloud)
