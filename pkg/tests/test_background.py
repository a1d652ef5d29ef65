import numpy as np
import pytest
from scipy.stats import poisson

from conftest import tmd_matrix
from pnrdcal import (
    BackgroundModel,
    DetectorConfig,
    DimensionError,
    ExperimentConfig,
    SingularResponseError,
    SourceConfig,
    add_background,
    background_matrix,
    convolve_click_statistics,
    simulate_clicks_exact,
    simulate_clicks_mc,
    solve_loss_background_equivalence,
    subtract_background,
)
from pnrdcal.background import equivalence_residual, photon_level_statistics
from pnrdcal.detector_model import build_loss_matrix
from pnrdcal.estimation import off_diagonal_mass


def test_zero_background_is_identity():
    np.testing.assert_array_equal(background_matrix(BackgroundModel(0.0, 6)), np.eye(6))


def test_background_on_vacuum_is_poisson():
    D = background_matrix(BackgroundModel(0.7, 12))
    expected = poisson.pmf(np.arange(12), 0.7)
    np.testing.assert_allclose(D[:, 0], expected / expected.sum(), atol=1e-15)
    np.testing.assert_allclose(D.sum(axis=0), 1.0, atol=1e-12)


def test_background_levels_add():
    N = 30
    D = background_matrix(BackgroundModel(0.3, N)) @ background_matrix(BackgroundModel(0.45, N))
    ref = background_matrix(BackgroundModel(0.75, N))
    np.testing.assert_allclose(D[:10, :10], ref[:10, :10], atol=1e-10)


def test_background_validation():
    with pytest.raises(ValueError):
        BackgroundModel(-0.1)
    with pytest.raises(ValueError):
        BackgroundModel(0.1, 0)


def test_add_background_identity_and_pairing():
    sigma = np.diag([0.6, 0.3, 0.1, 0, 0])
    np.testing.assert_allclose(add_background(sigma, 0.0, 0.0), sigma)
    noisy = add_background(sigma, 0.2, 0.0)
    assert off_diagonal_mass(noisy) > 0
    assert noisy.sum() == pytest.approx(1.0)


def test_add_background_monte_carlo():
    N, n = 20, 1_000_000
    x = 0.3**2
    c = (1 - x) * x ** np.arange(N)
    rng = np.random.default_rng(99)
    pairs = rng.geometric(1 - x, n) - 1
    m = pairs + rng.poisson(0.25, n)
    k = pairs + rng.poisson(0.1, n)
    keep = (m < 8) & (k < 8)
    freq = np.zeros((8, 8))
    np.add.at(freq, (m[keep], k[keep]), 1)
    freq /= n
    p = add_background(np.diag(c / c.sum()), 0.25, 0.1)[:8, :8]
    sigma = np.sqrt(p * (1 - p) / n)
    mask = p > 1e-7
    assert np.all(np.abs(freq - p)[mask] < 4 * sigma[mask] + 1e-6)


# --- loss / background degeneracy --------------------------------------------


def test_no_background_needs_no_loss():
    (pt,) = solve_loss_background_equivalence(3, [0.0], loss_points=11)
    assert pt.solved
    assert pt.loss == 0.0
    assert pt.residual < 1e-8


@pytest.mark.parametrize("M", [1, 2, 5])
def test_equivalence_solutions_satisfy_the_equation(M):
    for pt in solve_loss_background_equivalence(M, [0.1, 0.5, 1.0], loss_points=21):
        assert pt.solved and pt.residual < 1e-8
        D = background_matrix(BackgroundModel(pt.alpha, M + 1))
        L = build_loss_matrix(1 - pt.loss, M + 1)
        lhs = D @ np.diag(pt.state_a)
        rhs = np.diag(pt.state_b) @ L.T
        assert np.linalg.norm(lhs - rhs) < 1e-8
        assert pt.state_a.sum() == pytest.approx(1.0) and pt.state_b.sum() == pytest.approx(1.0)
        assert np.all(pt.state_a >= 0) and np.all(pt.state_b >= 0)


def test_equivalence_exact_at_intermediate_loss():
    # away from zero loss, exact solutions still exist
    M, alpha, loss = 6, 0.4, 0.3
    r, a, b = equivalence_residual(alpha, loss, M)
    assert r < 1e-8


def test_unsolved_points_reported_not_raised():
    points = solve_loss_background_equivalence(2, [0.2, 0.4], loss_points=5, tol=-1.0)
    assert [p.solved for p in points] == [False, False]
    assert all(np.isfinite(p.residual) for p in points)


def test_equivalence_validation():
    with pytest.raises(ValueError):
        solve_loss_background_equivalence(0, [0.1])
    with pytest.raises(ValueError):
        solve_loss_background_equivalence(2, [1.5])


# --- subtraction -------------------------------------------------------------


def bright_experiment(alpha1, alpha2, N=25):
    return ExperimentConfig(
        source=SourceConfig("tmsv", 0.5, truncation=N),
        detector1=DetectorConfig(efficiency=0.6),
        detector2=DetectorConfig(efficiency=0.55),
        background1=BackgroundModel(alpha1, N),
        background2=BackgroundModel(alpha2, N),
    )


def background_only(cfg):
    return cfg.with_(source=SourceConfig("custom", diagonal=(1.0,), truncation=cfg.truncation))


def test_delta_background_changes_nothing(tmd):
    P = simulate_clicks_exact(bright_experiment(0, 0, N=9))
    R_B = np.zeros_like(P)
    R_B[0, 0] = 1.0
    res = subtract_background(P, R_B, tmd, tmd)
    np.testing.assert_allclose(res.probabilities, P, atol=1e-14)
    assert res.negative_mass < 1e-14


def test_subtraction_round_trip():
    cfg = bright_experiment(0.3, 0.2)
    c1, c2 = cfg.response_matrices()
    clean = simulate_clicks_exact(bright_experiment(0, 0))
    R_M = simulate_clicks_exact(cfg)
    R_B = simulate_clicks_exact(background_only(cfg))
    res = subtract_background(R_M, R_B, c1, c2)
    assert np.abs(res.probabilities - clean).max() < 1e-6


def test_click_level_convolution_is_wrong():
    cfg = bright_experiment(0.5, 0.5)
    clean = simulate_clicks_exact(bright_experiment(0, 0))
    R_M = simulate_clicks_exact(cfg)
    R_B = simulate_clicks_exact(background_only(cfg))
    assert np.abs(convolve_click_statistics(clean, R_B) - R_M).max() > 1e-3


def test_photon_level_statistics_inverts_response(tmd):
    rng = np.random.default_rng(4)
    X = rng.random((9, 9))
    X /= X.sum()
    np.testing.assert_allclose(photon_level_statistics(tmd @ X @ tmd.T, tmd, tmd), X, atol=1e-12)


def test_noisy_subtraction_reports_clipped_mass():
    cfg = bright_experiment(0.3, 0.3).with_(trials=20_000, rng_seed=8)
    c1, c2 = cfg.response_matrices()
    R_M = simulate_clicks_mc(cfg)
    R_B = simulate_clicks_mc(background_only(cfg).with_(rng_seed=9))
    res = subtract_background(R_M, R_B, c1, c2)
    assert res.negative_mass > 0
    assert np.all(res.probabilities >= 0)
    assert res.probabilities.sum() == pytest.approx(1.0)


def test_subtraction_errors(tmd):
    P = np.full((9, 9), 1 / 81)
    with pytest.raises(DimensionError):
        subtract_background(P, np.full((9, 8), 1 / 72), tmd, tmd)
    narrow = tmd_matrix(5, 8)
    with pytest.raises(SingularResponseError):
        subtract_background(P, P, narrow, narrow)
