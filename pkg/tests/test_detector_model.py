import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pnrdcal import (
    DimensionError,
    MultiplexConfig,
    build_convolution_matrix,
    build_loss_matrix,
    compose_povm_diagonals,
    detector_response,
)


def occupied_bins_bruteforce(m, probs):
    """Exact click distribution by enumerating every routing of m photons."""
    probs = [Fraction(p) for p in probs]
    out = [Fraction(0)] * (len(probs) + 1)
    for routing in itertools.product(range(len(probs)), repeat=m):
        weight = Fraction(1)
        for b in routing:
            weight *= probs[b]
        out[len(set(routing))] += weight
    return out


# --- loss matrix -------------------------------------------------------------


def test_loss_identity_at_unit_efficiency():
    np.testing.assert_array_equal(build_loss_matrix(1.0, 4), np.eye(4))


def test_loss_total_maps_to_vacuum():
    L = build_loss_matrix(0.0, 3)
    expected = np.zeros((3, 3))
    expected[0] = 1.0
    np.testing.assert_array_equal(L, expected)


def test_loss_binomial_entry():
    assert build_loss_matrix(0.5, 3)[1, 2] == pytest.approx(0.5, abs=1e-15)


def test_loss_upper_triangular_and_readonly():
    L = build_loss_matrix(0.37, 6)
    assert np.all(np.tril(L, -1) == 0)
    with pytest.raises(ValueError):
        L[0, 0] = 2.0


@pytest.mark.parametrize("eta", [-0.1, 1.1, float("nan")])
def test_loss_rejects_bad_efficiency(eta):
    with pytest.raises(ValueError):
        build_loss_matrix(eta, 3)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.integers(1, 20))
def test_loss_composition(eta1, eta2, dim):
    lhs = build_loss_matrix(eta1, dim) @ build_loss_matrix(eta2, dim)
    np.testing.assert_allclose(lhs, build_loss_matrix(eta1 * eta2, dim), atol=1e-10, rtol=0)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 1), st.integers(1, 25))
def test_loss_column_stochastic(eta, dim):
    L = build_loss_matrix(eta, dim)
    assert np.all(L >= 0)
    np.testing.assert_allclose(L.sum(axis=0), 1.0, atol=1e-12)


# --- convolution matrix ------------------------------------------------------


def test_two_balanced_bins_two_photons():
    C = build_convolution_matrix(MultiplexConfig((0.5, 0.5), 2))
    assert C[1, 2] == pytest.approx(0.5, abs=1e-15)
    assert C[2, 2] == pytest.approx(0.5, abs=1e-15)


def test_eight_bins_two_photons(tmd):
    assert tmd[2, 2] == pytest.approx(7 / 8, abs=1e-15)


@pytest.mark.parametrize("probs", [(1.0,), (0.3, 0.7), (0.1, 0.2, 0.3, 0.4), (0.125,) * 8])
def test_single_photon_always_one_click(probs):
    C = build_convolution_matrix(MultiplexConfig(probs, 4))
    assert C[1, 1] == pytest.approx(1.0, abs=1e-15)
    assert C[0, 0] == 1.0


def test_shape_and_clicks_never_exceed_photons(tmd):
    assert tmd.shape == (9, 9)
    C = build_convolution_matrix(MultiplexConfig.uniform(3, 7))
    assert C.shape == (4, 8)
    for k in range(4):
        assert np.all(C[k, :k] == 0)


@pytest.mark.parametrize(
    "probs",
    [
        ("1/2", "1/2"),
        ("1/3", "1/6", "1/2"),
        ("1/8",) * 8,
        ("1/10", "2/10", "3/10", "4/10"),
        ("1/16", "3/16", "1/4", "1/8", "1/8", "1/4"),
        ("1",),
    ],
)
def test_matches_multinomial_enumeration(probs):
    exact = [Fraction(p) for p in probs]
    C = build_convolution_matrix(MultiplexConfig(tuple(float(p) for p in exact), 5))
    for m in range(6):
        oracle = occupied_bins_bruteforce(m, exact)
        np.testing.assert_allclose(C[:, m], [float(v) for v in oracle], atol=1e-12, rtol=0)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0.01, 1.0), min_size=1, max_size=8), st.integers(0, 5))
def test_random_bins_match_enumeration(weights, m):
    total = sum(weights)
    probs = tuple(w / total for w in weights)
    probs = probs[:-1] + (1.0 - sum(probs[:-1]),)
    C = build_convolution_matrix(MultiplexConfig(probs, 5))
    oracle = occupied_bins_bruteforce(m, probs)
    np.testing.assert_allclose(C[:, m], [float(v) for v in oracle], atol=1e-12, rtol=0)


@pytest.mark.parametrize("B", [1, 2, 5, 8, 16])
def test_uniform_saturation_diagonal(B):
    C = build_convolution_matrix(MultiplexConfig.uniform(B, B))
    for m in range(1, B + 1):
        assert C[m, m] == pytest.approx(np.prod([1 - i / B for i in range(1, m)]), abs=1e-12)


def test_many_bins_approach_identity():
    C = build_convolution_matrix(MultiplexConfig.uniform(10_000, 3))
    assert C[3, 3] > 0.999


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 12), st.integers(1, 14), st.floats(0, 1))
def test_response_column_stochastic(bins, dim, eta):
    C = build_convolution_matrix(MultiplexConfig.uniform(bins, dim - 1))
    np.testing.assert_allclose(C.sum(axis=0), 1.0, atol=1e-12)
    A = detector_response(C, eta)
    assert np.all(A >= -1e-15)
    np.testing.assert_allclose(A.sum(axis=0), 1.0, atol=1e-12)


def test_config_validation():
    with pytest.raises(ValueError):
        MultiplexConfig((0.5, 0.4))
    with pytest.raises(ValueError):
        MultiplexConfig(())
    with pytest.raises(ValueError):
        MultiplexConfig((1.2, -0.2))
    assert MultiplexConfig.time_multiplexed().bins == 8
    assert MultiplexConfig.uniform(4, 5).with_truncation(12).dim == 12


# --- POVM composition --------------------------------------------------------


def test_identity_response_gives_loss():
    L = build_loss_matrix(0.3, 5)
    np.testing.assert_allclose(compose_povm_diagonals(np.eye(5), L), L)


def test_unit_efficiency_gives_response(tmd):
    np.testing.assert_allclose(compose_povm_diagonals(tmd, build_loss_matrix(1.0, 9)), tmd)


def test_two_photons_half_efficiency_exact(tmd):
    A = compose_povm_diagonals(tmd, build_loss_matrix(0.5, 9))
    np.testing.assert_allclose(A[:3, 2], [0.25, 0.53125, 0.21875], atol=1e-15)


def test_two_photons_half_efficiency_monte_carlo(tmd):
    rng = np.random.default_rng(1234)
    n = 2_000_000
    survivors = rng.binomial(2, 0.5, n)
    routed = rng.multinomial(survivors, [1 / 8] * 8)
    clicks = np.count_nonzero(routed, axis=1)
    freq = np.bincount(clicks, minlength=3)[:3] / n
    A = compose_povm_diagonals(tmd, build_loss_matrix(0.5, 9))
    sigma = np.sqrt(A[:3, 2] * (1 - A[:3, 2]) / n)
    assert np.all(np.abs(freq - A[:3, 2]) < 4 * sigma)


def test_composition_dimension_mismatch(tmd):
    with pytest.raises(DimensionError):
        compose_povm_diagonals(tmd, build_loss_matrix(0.5, 8))
