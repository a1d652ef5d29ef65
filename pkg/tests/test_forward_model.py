import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_diagonal, tmd_matrix
from pnrdcal import (
    ClickHistogram,
    DimensionError,
    NormalizationError,
    as_probabilities,
    build_loss_matrix,
    predict_joint,
    predict_single,
)


def test_vacuum_single(tmd):
    p = predict_single(tmd, build_loss_matrix(0.7, 9), np.eye(9)[0])
    np.testing.assert_allclose(p, np.eye(9)[0])


def test_total_loss_single(tmd):
    rng = np.random.default_rng(0)
    p = predict_single(tmd, build_loss_matrix(0.0, 9), random_diagonal(rng, 9))
    np.testing.assert_allclose(p, np.eye(9)[0], atol=1e-15)


@pytest.mark.parametrize("bins", [1, 3, 8])
def test_single_photon_single(bins):
    C = tmd_matrix(9, bins)
    p = predict_single(C, build_loss_matrix(0.3, 9), np.eye(9)[1])
    expected = np.zeros(bins + 1)
    expected[:2] = [0.7, 0.3]
    np.testing.assert_allclose(p, expected, atol=1e-15)


def test_single_rejects_bad_input(tmd):
    L = build_loss_matrix(0.5, 9)
    with pytest.raises(DimensionError):
        predict_single(tmd, L, np.ones(8) / 8)
    with pytest.raises(NormalizationError):
        predict_single(tmd, L, np.ones(9))


def test_vacuum_joint(tmd):
    sigma = np.zeros((9, 9))
    sigma[0, 0] = 1
    P = predict_joint(tmd, 0.4, sigma, 0.9, tmd)
    assert P[0, 0] == pytest.approx(1.0)


def test_one_pair_perfect_detection(tmd):
    P = predict_joint(tmd, 1.0, np.diag(np.eye(9)[1]), 1.0, tmd)
    assert P[1, 1] == pytest.approx(1.0)


def enumerate_one_pair(eta1, eta2):
    """Each photon of the pair independently survives its detector's loss."""
    P = np.zeros((2, 2))
    for d1, d2 in itertools.product((0, 1), repeat=2):
        P[d1, d2] = (eta1 if d1 else 1 - eta1) * (eta2 if d2 else 1 - eta2)
    return P


def test_one_pair_lossy_enumeration(tmd):
    P = predict_joint(tmd, 0.6, np.diag(np.eye(9)[1]), 0.5, tmd)
    np.testing.assert_allclose(P[:2, :2], [[0.2, 0.2], [0.3, 0.3]], atol=1e-15)
    np.testing.assert_allclose(P[:2, :2], enumerate_one_pair(0.6, 0.5), atol=1e-15)
    assert P[2:, :].sum() + P[:, 2:].sum() == pytest.approx(0.0, abs=1e-15)


@settings(max_examples=100, deadline=None)
@given(
    st.integers(0, 2**32 - 1),
    st.floats(0, 1),
    st.floats(0, 1),
    st.integers(1, 8),
    st.integers(1, 8),
)
def test_normalization_and_marginals(seed, eta1, eta2, b1, b2):
    rng = np.random.default_rng(seed)
    N = 9
    sigma = rng.random((N, N))
    sigma /= sigma.sum()
    C1, C2 = tmd_matrix(N, b1), tmd_matrix(N, b2)
    P = predict_joint(C1, eta1, sigma, eta2, C2)
    assert P.shape == (b1 + 1, b2 + 1)
    assert P.sum() == pytest.approx(1.0, abs=1e-9)
    assert np.all(P >= -1e-15)
    np.testing.assert_allclose(P.sum(axis=1), predict_single(C1, build_loss_matrix(eta1, N), sigma.sum(axis=1)), atol=1e-12)
    np.testing.assert_allclose(P.sum(axis=0), predict_single(C2, build_loss_matrix(eta2, N), sigma.sum(axis=0)), atol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_no_click_probability_grows_with_loss(tmd, seed):
    sigma = np.diag(random_diagonal(np.random.default_rng(seed), 9))
    etas = np.linspace(0, 1, 11)
    P00 = np.array([[predict_joint(tmd, e1, sigma, e2, tmd)[0, 0] for e2 in etas] for e1 in etas])
    assert np.all(np.diff(P00, axis=0) <= 1e-15)
    assert np.all(np.diff(P00, axis=1) <= 1e-15)


def test_joint_dimension_mismatch(tmd):
    with pytest.raises(DimensionError):
        predict_joint(tmd, 0.5, np.eye(8) / 8, 0.5, tmd)


def test_histogram_validation():
    h = ClickHistogram(np.array([[3, 1], [0, 6]]), 10)
    np.testing.assert_allclose(as_probabilities(h), [[0.3, 0.1], [0.0, 0.6]])
    with pytest.raises(ValueError):
        ClickHistogram(np.array([[3, 1], [0, 6]]), 11)
    with pytest.raises(ValueError):
        ClickHistogram(np.array([[3, -1], [0, 8]]), 10)
    with pytest.raises(ValueError):
        ClickHistogram(np.array([[3.5, 1], [0, 5.5]]), 10)
    with pytest.raises(DimensionError):
        ClickHistogram(np.array([3, 1]), 4)


def test_as_probabilities_rejects_unnormalized():
    with pytest.raises(NormalizationError):
        as_probabilities(np.array([[0.5, 0.2], [0.1, 0.1]]))
