"""
Redundancy and ground-truth diagnostics for embeddings.

- redundancy_score: leave-one-out kernel regression of a projection on the
  projections before it (1 = unpredictable, 0 = a function of them)
- intrinsic_correlation: |rank correlation| with known manifold coordinates
- strip_oracle: match projections to the Neumann modes of a rectangle
"""
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Any, Dict, List, Optional, Tuple, Union

import numpy as np
from scipy.stats import pearsonr, spearmanr

from nrdr.config import get_settings
from nrdr.core.errors import DegenerateInputError, DiagnosticError, ParameterError
from nrdr.schemas.report import PlotDataReport
from nrdr.services.datasets import PointCloud, write_table
from nrdr.services.smoother import bandwidth, build_nw_smoother

if TYPE_CHECKING:
    from nrdr.services.embedding.base import Embedding

logger = logging.getLogger(__name__)

CORRELATION_METHODS = ("spearman", "pearson")


def _projections(embedding: Union["Embedding", np.ndarray]) -> np.ndarray:
    values = getattr(embedding, "projections", embedding)
    values = np.asarray(values, dtype=float)
    return values[:, None] if values.ndim == 1 else values


def loo_prediction(
    predictors: np.ndarray,
    target: np.ndarray,
    h: float,
    neighbor_cap: Optional[int] = None,
) -> np.ndarray:
    """Nadaraya-Watson prediction of target at every sample without its own value."""
    smoother = build_nw_smoother(predictors, h, neighbor_cap, leave_one_out=True)
    return smoother.apply(target)


def redundancy_score(
    projections: np.ndarray,
    target_col: int,
    h: float,
    neighbor_cap: Optional[int] = None,
) -> float:
    """||f - f_hat|| / ||f|| for column target_col (1-based) regressed on the columns before it.

    Clipped to [0, 1].
    """
    projections = _projections(projections)
    if not 2 <= target_col <= projections.shape[1]:
        raise ParameterError(
            f"target_col must be in [2, {projections.shape[1]}], got {target_col}"
        )
    if not h > 0:
        raise ParameterError(f"bandwidth must be > 0, got {h}")

    f = projections[:, target_col - 1]
    norm = np.linalg.norm(f)
    if norm == 0:
        raise DegenerateInputError(f"projection {target_col} is identically zero")

    predicted = loo_prediction(projections[:, :target_col - 1], f, h, neighbor_cap)
    return float(np.clip(np.linalg.norm(f - predicted) / norm, 0.0, 1.0))


def redundancy_scores(
    projections: np.ndarray,
    alpha: Optional[float] = None,
    neighbor_cap: Optional[int] = None,
) -> np.ndarray:
    """Score of every column against its predecessors; the first column scores 1."""
    projections = _projections(projections)
    scores = np.ones(projections.shape[1])
    for i in range(2, projections.shape[1] + 1):
        h = bandwidth(projections[:, :i - 1], alpha)
        scores[i - 1] = redundancy_score(projections, i, h, neighbor_cap)
    return scores


def _abs_correlation(a: np.ndarray, b: np.ndarray, method: str) -> float:
    if np.ptp(a) == 0 or np.ptp(b) == 0:
        return 0.0
    if method == "spearman":
        value = spearmanr(a, b)[0]
    else:
        value = pearsonr(a, b)[0]
    return 0.0 if np.isnan(value) else float(abs(value))


def intrinsic_correlation(
    embedding: Union["Embedding", np.ndarray],
    cloud: PointCloud,
    method: str = "spearman",
) -> np.ndarray:
    """d x m matrix of |correlation| between projections and intrinsic coordinates.

    Angular coordinates are compared through their cosine and sine and the
    larger of the two is kept.
    """
    if method not in CORRELATION_METHODS:
        raise ParameterError(f"method must be one of {CORRELATION_METHODS}, got {method!r}")
    if cloud.intrinsic is None:
        raise DiagnosticError("the point cloud has no intrinsic coordinates")

    F = _projections(embedding)
    if F.shape[0] != cloud.n:
        raise DiagnosticError(f"embedding has {F.shape[0]} rows but the cloud has {cloud.n} points")

    result = np.zeros((F.shape[1], cloud.intrinsic_dim))
    for j in range(cloud.intrinsic_dim):
        coord = cloud.intrinsic[:, j]
        targets = [np.cos(coord), np.sin(coord)] if cloud.angular[j] else [coord]
        for i in range(F.shape[1]):
            result[i, j] = max(_abs_correlation(F[:, i], t, method) for t in targets)
    return result


def strip_modes(L1: float, L2: float, count: int) -> List[Tuple[int, int, float]]:
    """The `count` lowest Neumann modes (k1, k2, lambda) of [0, L1] x [0, L2], constant excluded."""
    if L1 <= 0 or L2 <= 0:
        raise ParameterError(f"strip edge lengths must be positive, got L1={L1}, L2={L2}")
    if count < 1:
        raise ParameterError(f"count must be >= 1, got {count}")

    modes = [
        (k1, k2, (k1 * math.pi / L1) ** 2 + (k2 * math.pi / L2) ** 2)
        for k1 in range(count + 1)
        for k2 in range(count + 1)
        if (k1, k2) != (0, 0)
    ]
    modes.sort(key=lambda m: (m[2], m[1]))
    return modes[:count]


def strip_mode(x1: np.ndarray, x2: np.ndarray, L1: float, L2: float, k1: int, k2: int) -> np.ndarray:
    return np.cos(k1 * math.pi * x1 / L1) * np.cos(k2 * math.pi * x2 / L2)


@dataclass
class ModeMatch:
    projection: int  # 1-based
    k1: int
    k2: int
    correlation: float
    runner_up: float
    confident: bool

    def to_dict(self) -> Dict[str, Any]:
        return {
            "projection": self.projection,
            "k1": self.k1,
            "k2": self.k2,
            "correlation": self.correlation,
            "runner_up": self.runner_up,
            "confident": self.confident,
        }


@dataclass
class StripOracleReport:
    L1: float
    L2: float
    matches: List[ModeMatch] = field(default_factory=list)
    expected_leading: int = 0  # floor(L1 / L2)
    leading_x1_modes: bool = False
    quadratic_residual: Optional[float] = None
    notes: List[str] = field(default_factory=list)

    def match_for(self, projection: int) -> Optional[ModeMatch]:
        for m in self.matches:
            if m.projection == projection:
                return m
        return None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "L1": self.L1,
            "L2": self.L2,
            "matches": [m.to_dict() for m in self.matches],
            "expected_leading": self.expected_leading,
            "leading_x1_modes": self.leading_x1_modes,
            "quadratic_residual": self.quadratic_residual,
            "notes": self.notes,
        }


def quadratic_residual(f1: np.ndarray, f2: np.ndarray) -> float:
    """Normalized residual of the best fit f2 ~ a + b f1 + c f1^2."""
    design = np.column_stack([np.ones_like(f1), f1, f1 * f1])
    coef, *_ = np.linalg.lstsq(design, f2, rcond=None)
    centered = f2 - f2.mean()
    return float(np.linalg.norm(f2 - design @ coef) / np.linalg.norm(centered))


def strip_oracle(
    embedding: Union["Embedding", np.ndarray],
    cloud: PointCloud,
    L1: Optional[float] = None,
    L2: Optional[float] = None,
    max_k1: int = 4,
    max_k2: int = 2,
    margin: Optional[float] = None,
) -> StripOracleReport:
    """Match each projection to the rectangle mode it correlates with best.

    Without explicit edge lengths the strip is taken to be the bounding box
    of the intrinsic coordinates.
    """
    if margin is None:
        margin = get_settings().oracle_margin
    if cloud.intrinsic is None or cloud.intrinsic_dim < 2:
        raise DiagnosticError("strip oracle needs two intrinsic coordinates")

    x1, x2 = cloud.intrinsic[:, 0], cloud.intrinsic[:, 1]
    if L1 is None or L2 is None:
        x1, x2 = x1 - x1.min(), x2 - x2.min()
        L1, L2 = float(np.ptp(x1)), float(np.ptp(x2))
    if L1 <= 0 or L2 <= 0:
        raise DiagnosticError(f"degenerate strip with L1={L1}, L2={L2}")

    F = _projections(embedding)
    modes = [(k1, k2) for k1 in range(max_k1 + 1) for k2 in range(max_k2 + 1) if (k1, k2) != (0, 0)]
    basis = {m: strip_mode(x1, x2, L1, L2, *m) for m in modes}

    report = StripOracleReport(L1=float(L1), L2=float(L2), expected_leading=int(L1 // L2))
    for i in range(F.shape[1]):
        scored = sorted(
            ((_abs_correlation(F[:, i], basis[m], "pearson"), m) for m in modes), reverse=True
        )
        (best, (k1, k2)), (second, _) = scored[0], scored[1]
        report.matches.append(ModeMatch(
            projection=i + 1, k1=k1, k2=k2, correlation=best, runner_up=second,
            confident=best - second >= margin,
        ))
        if best - second < margin:
            report.notes.append(f"projection {i + 1}: no confident match")

    leading = report.matches[:report.expected_leading]
    report.leading_x1_modes = bool(leading) and all(m.confident and m.k2 == 0 for m in leading)

    by_mode = {(m.k1, m.k2): m.projection for m in report.matches if m.confident}
    if (1, 0) in by_mode and (2, 0) in by_mode:
        report.quadratic_residual = quadratic_residual(
            F[:, by_mode[(1, 0)] - 1], F[:, by_mode[(2, 0)] - 1]
        )

    logger.info(
        f"Strip oracle L1/L2={L1 / L2:.2f}: modes "
        f"{[(m.k1, m.k2) for m in report.matches]}, leading x1 modes: {report.leading_x1_modes}"
    )
    return report


def emit_plot_data(
    embedding: "Embedding",
    cloud: PointCloud,
    path: Union[str, Path],
) -> Tuple[Path, Path]:
    """Write <stem>.csv (points, intrinsic, projections) and <stem>.json (scores, correlations)."""
    path = Path(path)
    stem = path.with_suffix("") if path.suffix in (".csv", ".json") else path
    csv_path, json_path = stem.with_suffix(".csv"), stem.with_suffix(".json")

    header = [f"x{j}" for j in range(cloud.dim)]
    blocks = [cloud.points]
    if cloud.intrinsic is not None:
        header += [f"i{j}" for j in range(cloud.intrinsic_dim)]
        blocks.append(cloud.intrinsic)
    header += [f"f{j}" for j in range(embedding.d)]
    blocks.append(embedding.projections)
    write_table(csv_path, header, np.column_stack(blocks))

    payload = PlotDataReport(
        version=get_settings().report_version,
        method=embedding.method.value,
        eigenvalues=[float(v) for v in embedding.eigenvalues],
        redundancy_scores=(
            [float(s) for s in embedding.redundancy_scores]
            if embedding.redundancy_scores is not None else None
        ),
        intrinsic_correlation=(
            intrinsic_correlation(embedding, cloud).tolist() if cloud.intrinsic is not None else None
        ),
    )
    json_path.write_text(payload.model_dump_json(indent=2), encoding="utf-8")

    logger.info(f"Wrote plot data to {csv_path} and {json_path}")
    return csv_path, json_path
