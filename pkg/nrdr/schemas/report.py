from pydantic import BaseModel
from typing import Any, Dict, List, Optional


# Embed reports
class StepSchema(BaseModel):
    step: int
    bandwidth: float
    eigenvalue: float
    rank: int = 0
    singular_values: List[float] = []
    frobenius_capture: Optional[float] = None
    truncated_residual: Optional[float] = None  # ||P V V' f||
    smoother_residual: Optional[float] = None  # ||P f||
    near_degenerate: bool = False
    predictable_ratio: Optional[float] = None  # sequential regression only


class EmbedReport(BaseModel):
    version: str
    method: str
    n: int
    d: int
    eigenvalues: List[float]
    redundancy_scores: Optional[List[float]] = None
    config: Dict[str, Any] = {}
    notices: List[str] = []
    steps: List[StepSchema] = []


# Diagnose reports
class ModeMatchSchema(BaseModel):
    projection: int
    k1: int
    k2: int
    correlation: float
    runner_up: float
    confident: bool


class StripOracleSchema(BaseModel):
    L1: float
    L2: float
    matches: List[ModeMatchSchema]
    expected_leading: int
    leading_x1_modes: bool
    quadratic_residual: Optional[float] = None
    notes: List[str] = []


class DiagnoseReport(BaseModel):
    """Redundancy scores, intrinsic correlations and, for strips, the mode oracle."""
    version: str
    n: int
    d: int
    alpha: float
    redundancy_scores: List[float]

    # d x m matrices, present when the cloud has intrinsic coordinates
    spearman: Optional[List[List[float]]] = None
    pearson: Optional[List[List[float]]] = None

    strip_oracle: Optional[StripOracleSchema] = None


# Classification reports
class ClassificationRow(BaseModel):
    method: str
    d: int
    alpha: Optional[float] = None
    tune_error: float
    test_error: float
    seed: int


class ClassifyReport(BaseModel):
    version: str
    n: int
    rows: List[ClassificationRow]


# Comparison reports
class CompareRow(BaseModel):
    method: str
    error: Optional[str] = None  # set when the method failed; other fields stay empty
    d: Optional[int] = None
    eigenvalues: List[float] = []
    redundancy_scores: List[float] = []
    min_score_after_first: Optional[float] = None
    notices: List[str] = []
    intrinsic_correlation: Optional[List[List[float]]] = None


class CompareReport(BaseModel):
    version: str
    n: int
    rows: List[CompareRow]


# Plot data (companion of the plot CSV)
class PlotDataReport(BaseModel):
    version: str
    method: str
    eigenvalues: List[float]
    redundancy_scores: Optional[List[float]] = None
    intrinsic_correlation: Optional[List[List[float]]] = None
