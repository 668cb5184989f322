import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from numpy.testing import assert_allclose

from nrdr.core.errors import DegenerateInputError, ParameterError
from nrdr.services.smoother import (
    bandwidth,
    build_nw_smoother,
    truncated_right_singular_basis,
)


def unit(v):
    return v / np.linalg.norm(v)


def test_bandwidth_single_projection():
    f = unit(np.random.default_rng(0).normal(size=100))
    assert bandwidth(f, alpha=0.3) == pytest.approx(0.03)


def test_bandwidth_two_projections():
    rng = np.random.default_rng(1)
    prev = np.column_stack([unit(rng.normal(size=100)), unit(rng.normal(size=100))])
    assert bandwidth(prev, alpha=0.3) == pytest.approx(0.3 * math.sqrt(2 / 100))


def test_bandwidth_rejects_bad_input():
    with pytest.raises(ParameterError):
        bandwidth(np.ones(10), alpha=0.0)
    with pytest.raises(DegenerateInputError):
        bandwidth(np.zeros((10, 2)), alpha=0.3)


@settings(max_examples=50, deadline=None)
@given(
    prev=arrays(np.float64, (12, 2), elements=st.floats(-5, 5)),
    alpha=st.floats(0.01, 1.0),
)
def test_bandwidth_formula(prev, alpha):
    if not np.any(prev):
        return
    expected = alpha * math.sqrt(np.sum(prev ** 2) / 12)
    assert bandwidth(prev, alpha) == pytest.approx(expected, rel=1e-12)


def test_identical_projections_share_weights():
    prev = np.array([[0.0], [0.0], [1.0], [2.0]])
    P = build_nw_smoother(prev, h=0.5).matrix.toarray()
    assert_allclose(P[0], P[1])
    assert P[0, 0] == pytest.approx(P[0, 1])


def test_dense_smoother_matches_formula():
    rng = np.random.default_rng(2)
    prev = rng.normal(size=(20, 2))
    h = 0.7
    smoother = build_nw_smoother(prev, h, neighbor_cap=20)

    expected = np.empty((20, 20))
    for j in range(20):
        for k in range(20):
            expected[j, k] = math.exp(-np.sum((prev[j] - prev[k]) ** 2) / (2 * h * h))
        expected[j] /= expected[j].sum()
    assert_allclose(smoother.matrix.toarray(), expected, rtol=1e-12, atol=1e-15)
    assert smoother.neighbor_cap == 20


@settings(max_examples=30, deadline=None)
@given(
    prev=arrays(np.float64, (15, 1), elements=st.floats(-3, 3)),
    h=st.floats(0.05, 2.0),
    cap=st.integers(1, 20),
)
def test_smoother_rows_are_stochastic(prev, h, cap):
    smoother = build_nw_smoother(prev, h, neighbor_cap=cap)
    assert_allclose(smoother.row_sums(), 1.0, atol=1e-10)
    assert smoother.matrix.min() >= 0
    assert np.all(smoother.matrix.diagonal() > 0)


def test_sparse_smoother_caps_neighbours():
    prev = np.random.default_rng(3).normal(size=(200, 2))
    smoother = build_nw_smoother(prev, h=0.3, neighbor_cap=15)
    nnz_per_row = np.diff(smoother.matrix.indptr)
    assert nnz_per_row.max() <= 15
    assert np.all(smoother.matrix.diagonal() > 0)
    assert_allclose(smoother.row_sums(), 1.0, atol=1e-10)


def test_sparse_smoother_with_cap_n_equals_dense():
    prev = np.random.default_rng(4).normal(size=(40, 2))
    dense = build_nw_smoother(prev, 0.5, neighbor_cap=40).matrix.toarray()
    capped = build_nw_smoother(prev, 0.5, neighbor_cap=1000).matrix.toarray()
    assert_allclose(capped, dense)


def test_leave_one_out_drops_self_weight():
    prev = np.random.default_rng(5).normal(size=(30, 1))
    for cap in (30, 10):
        smoother = build_nw_smoother(prev, 0.5, neighbor_cap=cap, leave_one_out=True)
        assert_allclose(smoother.matrix.diagonal(), 0.0)
        assert_allclose(smoother.row_sums(), 1.0, atol=1e-10)


def test_smoother_rejects_bad_parameters():
    with pytest.raises(ParameterError):
        build_nw_smoother(np.ones((5, 1)), h=0.0)
    with pytest.raises(ParameterError):
        build_nw_smoother(np.ones((5, 1)), h=1.0, neighbor_cap=0)


def test_uniform_smoother_has_rank_one():
    n = 50
    smoother = build_nw_smoother(np.ones((n, 1)), h=1.0)
    assert_allclose(smoother.matrix.toarray(), 1.0 / n)
    basis = truncated_right_singular_basis(smoother, 0.03)
    assert basis.rank == 1
    assert_allclose(np.abs(basis.vectors[:, 0]), 1.0 / math.sqrt(n), atol=1e-10)


def test_identity_smoother_keeps_everything():
    n = 30
    smoother = build_nw_smoother(np.arange(n, dtype=float), h=0.1, neighbor_cap=1)
    assert_allclose(smoother.matrix.toarray(), np.eye(n))
    basis = truncated_right_singular_basis(smoother, 0.03)
    assert basis.rank == n
    assert_allclose(basis.singular_values, 1.0)


@pytest.fixture(scope="module")
def smoother_60():
    prev = np.sort(np.random.default_rng(6).normal(size=(60, 1)), axis=0)
    return build_nw_smoother(prev, h=0.15)


def test_iterative_basis_matches_dense_svd(smoother_60):
    dense = truncated_right_singular_basis(smoother_60, 0.03, method="dense")
    iterative = truncated_right_singular_basis(smoother_60, 0.03, method="iterative")
    assert iterative.rank == dense.rank
    assert 1 < dense.rank < 60
    angles = scipy.linalg.subspace_angles(dense.vectors, iterative.vectors)
    assert angles.max() <= 1e-6
    assert_allclose(iterative.vectors.T @ iterative.vectors, np.eye(iterative.rank), atol=1e-8)


def test_truncation_threshold_semantics(smoother_60):
    s_all = np.linalg.svd(smoother_60.matrix.toarray(), compute_uv=False)
    basis = truncated_right_singular_basis(smoother_60, 0.03)
    assert np.all(basis.singular_values >= 0.03 * s_all[0])
    assert np.all(s_all[basis.rank:] < 0.03 * s_all[0])
    assert 0 < basis.frobenius_capture <= 1.0


def test_raising_threshold_never_increases_rank(smoother_60):
    ranks = [truncated_right_singular_basis(smoother_60, t).rank for t in (0.01, 0.03, 0.1, 0.3, 0.9)]
    assert ranks == sorted(ranks, reverse=True)


def test_reconstruction_bound():
    prev = np.random.default_rng(7).normal(size=(80, 2))
    smoother = build_nw_smoother(prev, h=0.4)
    basis = truncated_right_singular_basis(smoother, 0.03)
    P = smoother.matrix.toarray()
    V = basis.vectors
    error = np.linalg.norm(P - P @ V @ V.T) / np.linalg.norm(P)
    assert error <= 0.03 * math.sqrt(80 - basis.rank)
    assert error ** 2 == pytest.approx(1.0 - basis.frobenius_capture, abs=1e-8)


def test_threshold_range():
    smoother = build_nw_smoother(np.ones((5, 1)), h=1.0)
    for threshold in (0.0, 1.0):
        with pytest.raises(ParameterError):
            truncated_right_singular_basis(smoother, threshold)
