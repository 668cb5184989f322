import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal
from scipy.integrate import quad

from nrdr.core.errors import FormatError, ParameterError
from nrdr.services.datasets import (
    PointCloud,
    extract_patches,
    gen_ring,
    gen_strip,
    gen_swiss_roll,
    load_csv,
    load_embedding_csv,
    load_image_csv,
    patch_grid,
    save_csv,
    save_embedding_csv,
    swiss_roll_arc_length,
)


def test_strip_matches_requested_rectangle():
    cloud = gen_strip(1000, 2.5, 1.0, seed=7)
    assert cloud.points.shape == (1000, 2)
    assert cloud.points[:, 0].min() >= 0 and cloud.points[:, 0].max() <= 2.5
    assert cloud.points[:, 1].min() >= 0 and cloud.points[:, 1].max() <= 1.0
    assert_array_equal(cloud.points, cloud.intrinsic)
    assert cloud.seed == 7


def test_strip_minimal_and_invalid_counts():
    cloud = gen_strip(2, 1, 1, seed=0)
    assert cloud.n == 2
    assert_array_equal(cloud.points, cloud.intrinsic)
    with pytest.raises(ParameterError):
        gen_strip(1, 1, 1)
    with pytest.raises(ParameterError):
        gen_strip(10, 0, 1)


def test_strip_marginals_are_uniform():
    n = 4000
    cloud = gen_strip(n, 2.5, 1.0, seed=11)
    for j, length in enumerate((2.5, 1.0)):
        standard_error = length / math.sqrt(12 * n)
        assert abs(cloud.points[:, j].mean() - length / 2) < 5 * standard_error


@pytest.mark.parametrize("generator, args", [
    (gen_strip, (50, 2.0, 1.0)),
    (gen_swiss_roll, (50,)),
    (gen_ring, (50,)),
])
def test_generators_are_deterministic(generator, args):
    a = generator(*args, seed=5)
    b = generator(*args, seed=5)
    assert_array_equal(a.points, b.points)
    assert_array_equal(a.intrinsic, b.intrinsic)
    assert not np.array_equal(a.points, generator(*args, seed=6).points)


def test_swiss_roll_arc_length_matches_quadrature():
    cloud = gen_swiss_roll(1500, seed=1)
    t0 = 1.5 * math.pi
    t = np.hypot(cloud.points[:, 0], cloud.points[:, 2])
    for ti, si in list(zip(t, cloud.intrinsic[:, 0]))[:20]:
        expected, _ = quad(lambda u: math.sqrt(1 + u * u), t0, ti)
        assert si == pytest.approx(expected, rel=1e-9, abs=1e-9)


def test_swiss_roll_arc_length_strictly_increasing():
    t = np.linspace(1.5 * math.pi, 4.5 * math.pi, 200)
    assert np.all(np.diff(swiss_roll_arc_length(t, t[0])) > 0)
    cloud = gen_swiss_roll(300, seed=2)
    t_of_point = np.hypot(cloud.points[:, 0], cloud.points[:, 2])
    order = np.argsort(t_of_point)
    assert np.all(np.diff(cloud.intrinsic[order, 0]) >= 0)
    assert np.all((cloud.points[:, 1] >= 0) & (cloud.points[:, 1] <= 10))


def test_swiss_roll_minimal():
    assert gen_swiss_roll(2, seed=0).points.shape == (2, 3)


def test_ring_geometry():
    cloud = gen_ring(2000, 5.0, 1.0, seed=3)
    radial = np.hypot(cloud.points[:, 0], cloud.points[:, 1])
    assert radial.min() >= 4.0 - 1e-12 and radial.max() <= 6.0 + 1e-12
    psi = cloud.intrinsic[:, 1]
    assert np.max(np.abs(radial - 5.0 - np.cos(psi))) < 1e-12
    assert cloud.angular == (True, True)


def test_ring_rejects_fat_tube():
    with pytest.raises(ParameterError):
        gen_ring(2000, 1.0, 2.0)


def test_point_cloud_validation():
    with pytest.raises(ParameterError):
        PointCloud(points=np.array([[0.0, np.nan], [1.0, 1.0]]))
    with pytest.raises(ParameterError):
        PointCloud(points=np.zeros((3, 2)), intrinsic=np.zeros((2, 1)))
    with pytest.raises(ParameterError):
        PointCloud(points=np.zeros((1, 2)))
    with pytest.raises(ParameterError):
        PointCloud(points=np.zeros((3, 2)), labels=np.zeros(4))


def test_patches_with_edge_windows():
    image = np.arange(64, dtype=float).reshape(8, 8)
    cloud = extract_patches(image, patch=7, stride=4, cover_edges=True)
    assert cloud.points.shape == (4, 49)
    assert_array_equal(cloud.intrinsic, [[0, 0], [0, 1], [1, 0], [1, 1]])


def test_single_patch_is_the_flattened_image():
    image = np.random.default_rng(0).normal(size=(7, 7))
    patches, corners = patch_grid(image, patch=7, stride=1)
    assert patches.shape == (1, 49)
    assert_array_equal(patches[0], image.ravel())
    assert_array_equal(corners, [[0, 0]])
    with pytest.raises(ParameterError):
        extract_patches(image, patch=7, stride=1)


def test_patch_count_on_a_64_pixel_image():
    image = np.random.default_rng(1).normal(size=(64, 64))
    cloud = extract_patches(image, patch=7, stride=4)
    assert cloud.n == 225


def test_patch_larger_than_image():
    with pytest.raises(ParameterError):
        patch_grid(np.zeros((5, 8)), patch=6)


@settings(max_examples=50, deadline=None)
@given(
    height=st.integers(1, 20),
    width=st.integers(1, 20),
    patch=st.integers(1, 8),
    stride=st.integers(1, 6),
)
def test_patch_counts_and_blocks(height, width, patch, stride):
    if patch > min(height, width):
        return
    image = np.arange(height * width, dtype=float).reshape(height, width)
    patches, corners = patch_grid(image, patch, stride)
    expected = ((height - patch) // stride + 1) * ((width - patch) // stride + 1)
    assert patches.shape == (expected, patch * patch)
    for block, (r, c) in zip(patches, corners.astype(int)):
        assert_array_equal(block, image[r:r + patch, c:c + patch].ravel())


def test_csv_round_trip(tmp_path):
    cloud = gen_strip(100, 1, 1, seed=0)
    path = tmp_path / "strip.csv"
    save_csv(cloud, path)
    loaded = load_csv(path)
    assert np.max(np.abs(loaded.points - cloud.points)) < 1e-12
    assert np.max(np.abs(loaded.intrinsic - cloud.intrinsic)) < 1e-12
    assert loaded.seed == 0
    assert path.read_text().splitlines()[0] == "x0,x1,i0,i1"


def test_csv_labels_and_angular_columns(tmp_path):
    cloud = gen_ring(30, seed=1)
    cloud.labels = (cloud.intrinsic[:, 0] > math.pi).astype(int)
    path = tmp_path / "ring.csv"
    save_csv(cloud, path)
    loaded = load_csv(path, angular=[0, 1])
    assert_array_equal(loaded.labels, cloud.labels)
    assert loaded.angular == (True, True)
    assert load_csv(path).angular == (False, False)


def test_empty_csv(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("")
    with pytest.raises(FormatError):
        load_csv(path)


def test_csv_row_with_missing_column(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("x0,x1\n0.1,0.2\n0.3\n")
    with pytest.raises(FormatError, match="line 3") as info:
        load_csv(path)
    assert info.value.line == 3


def test_csv_non_numeric_value(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("x0,x1\n0.1,abc\n")
    with pytest.raises(FormatError, match="line 2"):
        load_csv(path)


def test_image_csv(tmp_path):
    path = tmp_path / "image.csv"
    path.write_text("1,2,3\n4,5,6\n")
    assert_array_equal(load_image_csv(path), [[1, 2, 3], [4, 5, 6]])
    path.write_text("1,2,3\n4,5\n")
    with pytest.raises(FormatError, match="line 2"):
        load_image_csv(path)


def test_embedding_csv_round_trip(tmp_path):
    projections = np.random.default_rng(3).normal(size=(20, 3))
    path = tmp_path / "proj.csv"
    save_embedding_csv(projections, path)
    assert path.read_text().splitlines()[0] == "f0,f1,f2"
    assert_allclose(load_embedding_csv(path), projections, rtol=0, atol=1e-15)
