"""
Synthetic manifolds with known intrinsic coordinates, image patches and
point-cloud CSV files.

Every generator is a pure function of its parameters and seed.
"""
import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from nrdr.core.errors import FormatError, ParameterError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

DEFAULT_SWISS_ROLL_TURNS: Tuple[float, float] = (1.5 * math.pi, 4.5 * math.pi)


@dataclass
class PointCloud:
    """N points in D dimensions, optionally with ground-truth manifold coordinates."""
    points: np.ndarray
    intrinsic: Optional[np.ndarray] = None
    seed: int = 0

    # Class labels (classification benchmark only)
    labels: Optional[np.ndarray] = None

    # One flag per intrinsic column: True for circular coordinates
    angular: Tuple[bool, ...] = field(default_factory=tuple)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        if self.points.ndim == 1:
            self.points = self.points[:, None]
        if self.points.ndim != 2:
            raise ParameterError("points must be an N x D matrix")
        n, dim = self.points.shape
        if n < 2 or dim < 1:
            raise ParameterError(f"a point cloud needs N >= 2 and D >= 1, got {n} x {dim}")
        if not np.all(np.isfinite(self.points)):
            raise ParameterError("points contain NaN or infinite entries")

        if self.intrinsic is not None:
            self.intrinsic = np.asarray(self.intrinsic, dtype=float)
            if self.intrinsic.ndim == 1:
                self.intrinsic = self.intrinsic[:, None]
            if self.intrinsic.shape[0] != n:
                raise ParameterError(
                    f"intrinsic has {self.intrinsic.shape[0]} rows, expected {n}"
                )
            if not np.all(np.isfinite(self.intrinsic)):
                raise ParameterError("intrinsic coordinates contain NaN or infinite entries")
            if not self.angular:
                self.angular = (False,) * self.intrinsic.shape[1]
            elif len(self.angular) != self.intrinsic.shape[1]:
                raise ParameterError("one angular flag is needed per intrinsic column")
            self.angular = tuple(bool(a) for a in self.angular)
        else:
            self.angular = ()

        if self.labels is not None:
            self.labels = np.asarray(self.labels)
            if self.labels.shape != (n,):
                raise ParameterError(f"labels must have shape ({n},)")

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def intrinsic_dim(self) -> int:
        return 0 if self.intrinsic is None else self.intrinsic.shape[1]


def _check_count(n: int) -> None:
    if n < 2:
        raise ParameterError(f"at least 2 points are required, got n={n}")


def gen_strip(n: int, L1: float, L2: float, seed: int = 0) -> PointCloud:
    """Uniform samples on the rectangle [0, L1] x [0, L2]; the strip is its own chart."""
    _check_count(n)
    if L1 <= 0 or L2 <= 0:
        raise ParameterError(f"strip edge lengths must be positive, got L1={L1}, L2={L2}")

    rng = np.random.default_rng(seed)
    points = rng.uniform(size=(n, 2)) * np.array([L1, L2])
    return PointCloud(points=points, intrinsic=points.copy(), seed=seed)


def swiss_roll_arc_length(t: np.ndarray, t0: float) -> np.ndarray:
    """Arc length of the spiral (t cos t, t sin t) from t0 to t."""
    def primitive(u):
        return 0.5 * (u * np.sqrt(1.0 + u * u) + np.arcsinh(u))

    return primitive(np.asarray(t, dtype=float)) - primitive(t0)


def gen_swiss_roll(
    n: int,
    turns: Tuple[float, float] = DEFAULT_SWISS_ROLL_TURNS,
    height: float = 10.0,
    seed: int = 0,
) -> PointCloud:
    """Swiss roll (t cos t, h, t sin t); intrinsic = (arc length along t, h)."""
    _check_count(n)
    t_min, t_max = turns
    if not 0 <= t_min < t_max:
        raise ParameterError(f"angle range must satisfy 0 <= t_min < t_max, got {turns}")
    if height <= 0:
        raise ParameterError(f"height must be positive, got {height}")

    rng = np.random.default_rng(seed)
    t = rng.uniform(t_min, t_max, size=n)
    h = rng.uniform(0.0, height, size=n)

    points = np.column_stack([t * np.cos(t), h, t * np.sin(t)])
    intrinsic = np.column_stack([swiss_roll_arc_length(t, t_min), h])
    return PointCloud(points=points, intrinsic=intrinsic, seed=seed)


def gen_ring(n: int, R: float = 5.0, r: float = 1.0, seed: int = 0) -> PointCloud:
    """Torus with outer radius R and tube radius r; intrinsic = (theta, psi)."""
    _check_count(n)
    if not R > r > 0:
        raise ParameterError(f"ring radii must satisfy R > r > 0, got R={R}, r={r}")

    rng = np.random.default_rng(seed)
    theta = rng.uniform(0.0, 2 * math.pi, size=n)
    psi = rng.uniform(0.0, 2 * math.pi, size=n)

    radial = R + r * np.cos(psi)
    points = np.column_stack([radial * np.cos(theta), radial * np.sin(theta), r * np.sin(psi)])
    intrinsic = np.column_stack([theta, psi])
    return PointCloud(points=points, intrinsic=intrinsic, seed=seed, angular=(True, True))


def _window_starts(length: int, patch: int, stride: int, cover_edges: bool) -> List[int]:
    starts = list(range(0, length - patch + 1, stride))
    if cover_edges and starts[-1] != length - patch:
        starts.append(length - patch)
    return starts


def patch_grid(
    image: np.ndarray,
    patch: int = 7,
    stride: int = 4,
    cover_edges: bool = False,
) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorized patch x patch windows of an image and their top-left corners.

    Windows start every `stride` pixels. With cover_edges the last window along
    each axis is aligned to the image border even when the stride does not
    land on it.
    """
    image = np.asarray(image, dtype=float)
    if image.ndim != 2:
        raise ParameterError("image must be a 2-D array")
    height, width = image.shape
    if patch < 1 or patch > min(height, width):
        raise ParameterError(f"patch size {patch} does not fit a {height}x{width} image")
    if stride < 1:
        raise ParameterError(f"stride must be >= 1, got {stride}")

    rows = _window_starts(height, patch, stride, cover_edges)
    cols = _window_starts(width, patch, stride, cover_edges)

    patches = np.empty((len(rows) * len(cols), patch * patch))
    corners = np.empty((len(rows) * len(cols), 2))
    idx = 0
    for r in rows:
        for c in cols:
            patches[idx] = image[r:r + patch, c:c + patch].ravel()
            corners[idx] = (r, c)
            idx += 1
    return patches, corners


def extract_patches(
    image: np.ndarray,
    patch: int = 7,
    stride: int = 4,
    cover_edges: bool = False,
) -> PointCloud:
    """Image patches as a point cloud; intrinsic = (row, col) of each window."""
    patches, corners = patch_grid(image, patch, stride, cover_edges)
    if patches.shape[0] < 2:
        raise ParameterError(
            f"the image yields {patches.shape[0]} patch; a point cloud needs at least 2 "
            "(use a smaller stride or cover_edges)"
        )
    logger.info(f"Extracted {patches.shape[0]} patches of size {patch}x{patch} (stride {stride})")
    return PointCloud(points=patches, intrinsic=corners)


def load_image_csv(path: PathLike) -> np.ndarray:
    """Read a headerless comma-separated numeric grid as an H x W image."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for line_no, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                raise FormatError("non-numeric pixel value", line=line_no)
            if len(rows[-1]) != len(rows[0]):
                raise FormatError(
                    f"expected {len(rows[0])} pixels, found {len(rows[-1])}", line=line_no
                )
    if not rows:
        raise FormatError("image file is empty")
    return np.array(rows)


def read_table(path: PathLike) -> Dict[str, np.ndarray]:
    """Read a headed numeric CSV into named columns, reporting the failing line."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise FormatError("file is empty", line=1)
        header = [h.strip() for h in header]

        values: List[List[float]] = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise FormatError(
                    f"expected {len(header)} columns, found {len(row)}", line=line_no
                )
            try:
                values.append([float(v) for v in row])
            except ValueError:
                raise FormatError("non-numeric value", line=line_no)

    if not values:
        raise FormatError("file has a header but no rows", line=2)
    data = np.array(values)
    return {name: data[:, j] for j, name in enumerate(header)}


def _indexed_columns(table: Dict[str, np.ndarray], prefix: str) -> List[str]:
    names = [name for name in table if name.startswith(prefix) and name[len(prefix):].isdigit()]
    return sorted(names, key=lambda name: int(name[len(prefix):]))


def load_csv(path: PathLike, angular: Sequence[int] = ()) -> PointCloud:
    """Load a point cloud written by save_csv.

    Columns x0.. hold the points, i0.. the intrinsic coordinates and an
    optional `label` column the class labels. Other columns are ignored.
    """
    table = read_table(path)
    x_cols = _indexed_columns(table, "x")
    if not x_cols:
        raise FormatError("header has no point columns (x0, x1, ...)", line=1)
    i_cols = _indexed_columns(table, "i")

    points = np.column_stack([table[c] for c in x_cols])
    intrinsic = np.column_stack([table[c] for c in i_cols]) if i_cols else None
    labels = table["label"].astype(int) if "label" in table else None

    flags: Tuple[bool, ...] = ()
    if intrinsic is not None:
        flags = tuple(j in set(angular) for j in range(intrinsic.shape[1]))

    logger.debug(f"Loaded {points.shape[0]} points from {path}")
    return PointCloud(points=points, intrinsic=intrinsic, seed=0, labels=labels, angular=flags)


def save_csv(cloud: PointCloud, path: PathLike) -> None:
    """Write a point cloud as CSV with 17 significant digits."""
    header = [f"x{j}" for j in range(cloud.dim)]
    blocks = [cloud.points]
    if cloud.intrinsic is not None:
        header += [f"i{j}" for j in range(cloud.intrinsic_dim)]
        blocks.append(cloud.intrinsic)
    if cloud.labels is not None:
        header.append("label")
        blocks.append(cloud.labels.reshape(-1, 1).astype(float))

    write_table(path, header, np.column_stack(blocks))


def write_table(path: PathLike, header: Sequence[str], data: np.ndarray) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in data:
            writer.writerow(["%.17g" % v for v in row])


def save_embedding_csv(projections: np.ndarray, path: PathLike) -> None:
    projections = np.asarray(projections, dtype=float)
    write_table(path, [f"f{j}" for j in range(projections.shape[1])], projections)


def load_embedding_csv(path: PathLike) -> np.ndarray:
    table = read_table(path)
    f_cols = _indexed_columns(table, "f")
    if not f_cols:
        raise FormatError("header has no projection columns (f0, f1, ...)", line=1)
    return np.column_stack([table[c] for c in f_cols])
