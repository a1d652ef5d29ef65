"""Poissonian background light: photon-level model, loss equivalence, subtraction."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import solve_triangular
from scipy.signal import fftconvolve
from scipy.stats import poisson

from .detector_model import DEFAULT_TRUNCATION, build_loss_matrix, check_column_stochastic
from .errors import DimensionError, SingularResponseError
from .forward_model import JointOutcome, as_probabilities
from .nnls import nnls

log = logging.getLogger(__name__)

#: Fourier components of the background below this fraction of the peak are not divided.
FFT_FLOOR = 1e-10
EQUIVALENCE_TOL = 1e-8


@dataclass(frozen=True)
class BackgroundModel:
    """Uncorrelated Poisson background with ``mean_photons`` per pulse."""

    mean_photons: float = 0.0
    dim: int = DEFAULT_TRUNCATION

    def __post_init__(self):
        if not self.mean_photons >= 0:
            raise ValueError("mean background photon number must be >= 0")
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError("dimension must be a positive integer")

    def distribution(self) -> np.ndarray:
        d = poisson.pmf(np.arange(self.dim), self.mean_photons)
        return d / d.sum()


def background_matrix(model: BackgroundModel) -> np.ndarray:
    """Matrix ``D`` adding background photons: ``D[m, n] = d(m - n)`` for ``m >= n``.

    Each column is renormalized over the photon numbers that fit below the
    truncation, so ``D`` is column-stochastic.
    """
    N = int(model.dim)
    raw = poisson.pmf(np.arange(N), model.mean_photons)
    D = np.zeros((N, N))
    for n in range(N):
        col = raw[: N - n]
        D[n:, n] = col / col.sum()
    check_column_stochastic(D, "background matrix")
    D.setflags(write=False)
    return D


def add_background(sigma: np.ndarray, alpha1: float, alpha2: float) -> np.ndarray:
    """Joint statistics after independent Poisson background in each beam."""
    sigma = np.asarray(sigma, dtype=float)
    N = sigma.shape[0]
    if sigma.shape != (N, N):
        raise DimensionError("joint photon statistics must be square")
    D1 = background_matrix(BackgroundModel(alpha1, N))
    D2 = background_matrix(BackgroundModel(alpha2, N))
    out = D1 @ sigma @ D2.T
    return out / out.sum()


# --------------------------------------------------------------------------
# Loss / background degeneracy
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class EquivalencePoint:
    """Outcome of the loss-vs-background search at one background level.

    ``loss`` is the smallest loss reproducing the background statistics;
    ``loss_max`` the largest.  ``state_a`` carries the background, ``state_b``
    the loss.
    """

    alpha: float
    loss: float
    loss_max: float
    residual: float
    solved: bool
    state_a: np.ndarray
    state_b: np.ndarray


def _equivalence_system(alpha: float, loss: float, M: int):
    """Rows of ``D(alpha) diag(a) - diag(b) L(1 - loss)^T = 0`` on outcomes 0..M."""
    n = M + 1
    D = background_matrix(BackgroundModel(alpha, n))
    L = build_loss_matrix(1.0 - loss, n)
    rows = np.zeros((n * n, 2 * n))
    for k in range(n):
        for j in range(n):
            r = k * n + j
            rows[r, j] = D[k, j]
            rows[r, n + k] = -L[j, k]
    return rows, D, L


def equivalence_residual(alpha: float, loss: float, M: int):
    """Minimal residual of the degeneracy equation at fixed ``(alpha, loss)``.

    Solves for nonnegative number-correlated states ``a`` (with background
    in beam 1) and ``b`` (with loss in beam 2), each normalized, and returns
    ``(residual, a, b)`` where ``residual = ||D diag(a) - diag(b) L^T||_F``.
    """
    n = M + 1
    rows, D, L = _equivalence_system(alpha, loss, M)
    norm_rows = np.zeros((2, 2 * n))
    norm_rows[0, :n] = 1.0
    norm_rows[1, n:] = 1.0
    A = np.vstack([rows, norm_rows])
    rhs = np.concatenate([np.zeros(n * n), [1.0, 1.0]])
    x = nnls(A, rhs).x
    a, b = x[:n], x[n:]
    a = a / a.sum() if a.sum() > 0 else a
    b = b / b.sum() if b.sum() > 0 else b
    residual = float(np.linalg.norm(D @ np.diag(a) - np.diag(b) @ L.T))
    return residual, a, b


def _bisect_boundary(f, inside: float, outside: float, iterations: int) -> float:
    """Shrink ``[inside, outside]`` around the edge of ``{l : f(l)}``."""
    for _ in range(iterations):
        mid = 0.5 * (inside + outside)
        if f(mid):
            inside = mid
        else:
            outside = mid
    return inside


def solve_loss_background_equivalence(
    M: int,
    alpha_grid: Sequence[float],
    loss_points: int = 101,
    tol: float = EQUIVALENCE_TOL,
    bisections: int = 40,
) -> list[EquivalencePoint]:
    """Losses that make a lossy twin beam indistinguishable from background.

    For each ``alpha`` the minimal residual is scanned over ``loss_points``
    losses in [0, 1]; the edges of the region with residual below ``tol``
    are refined by bisection.  When no loss reaches ``tol`` the minimal
    residual solution is reported with ``solved=False``.
    """
    if M < 1:
        raise ValueError("photon-number range M must be >= 1")
    losses = np.linspace(0.0, 1.0, loss_points)
    out = []
    for alpha in alpha_grid:
        alpha = float(alpha)
        if not 0.0 <= alpha <= 1.0:
            raise ValueError("background levels must lie in [0, 1]")
        res = np.array([equivalence_residual(alpha, l, M)[0] for l in losses])
        feasible = np.flatnonzero(res < tol)
        if feasible.size == 0:
            best = float(losses[int(np.argmin(res))])
            r, a, b = equivalence_residual(alpha, best, M)
            log.info("alpha=%g: no exact solution, minimal residual %.3g", alpha, r)
            out.append(EquivalencePoint(alpha, best, best, r, False, a, b))
            continue

        def ok(l):
            return equivalence_residual(alpha, l, M)[0] < tol

        lo_i, hi_i = feasible[0], feasible[-1]
        lo = float(losses[lo_i])
        if lo_i > 0:
            lo = _bisect_boundary(ok, lo, float(losses[lo_i - 1]), bisections)
        hi = float(losses[hi_i])
        if hi_i < loss_points - 1:
            hi = _bisect_boundary(ok, hi, float(losses[hi_i + 1]), bisections)
        r, a, b = equivalence_residual(alpha, lo, M)
        out.append(EquivalencePoint(alpha, lo, hi, r, True, a, b))
    return out


# --------------------------------------------------------------------------
# Background subtraction by deconvolution
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SubtractionResult:
    probabilities: np.ndarray
    negative_mass: float
    regularized_frequencies: int


def _square_response(c: np.ndarray, outcomes: int) -> np.ndarray:
    c = np.asarray(c, dtype=float)
    if c.shape[0] != outcomes:
        raise DimensionError(f"response has {c.shape[0]} outcomes, data has {outcomes}")
    if c.shape[1] < outcomes:
        raise SingularResponseError("response matrix is narrower than its outcome count")
    square = c[:, :outcomes]
    if np.any(np.abs(np.diag(square)) < 1e-300) or np.any(np.tril(square, -1) != 0):
        raise SingularResponseError("square response truncation is not invertible")
    return square


def photon_level_statistics(P: np.ndarray, c1: np.ndarray, c2: np.ndarray) -> np.ndarray:
    """Undo the multiplexing: ``C1^-1 P (C2^T)^-1`` on the square truncation."""
    s1 = _square_response(c1, P.shape[0])
    s2 = _square_response(c2, P.shape[1])
    left = solve_triangular(s1, P)
    return solve_triangular(s2, left.T).T


def subtract_background(
    R_M: JointOutcome, R_B: JointOutcome, c1, c2, floor: float = FFT_FLOOR
) -> SubtractionResult:
    """Remove independently measured background from joint click statistics.

    Both matrices are first mapped to photon-level statistics with the
    inverse response matrices, where signal and background combine by plain
    2-D convolution.  The signal is recovered by division in Fourier space
    (zero padded, so the convolution is linear rather than circular) and
    mapped back through the responses.  Photon numbers above the number of
    bins are outside the validity range of this step.

    Components where ``|FFT(background)| < floor * max`` are left undivided
    and counted.  Negative entries are clipped and their total reported.
    """
    PM = as_probabilities(R_M)
    PB = as_probabilities(R_B)
    if PM.shape != PB.shape:
        raise DimensionError("measured and background statistics differ in shape")
    c1 = np.asarray(c1, dtype=float)
    c2 = np.asarray(c2, dtype=float)
    s1 = _square_response(c1, PM.shape[0])
    s2 = _square_response(c2, PM.shape[1])

    QM = photon_level_statistics(PM, c1, c2)
    QB = photon_level_statistics(PB, c1, c2)
    shape = (2 * PM.shape[0], 2 * PM.shape[1])
    FM = np.fft.fft2(QM, s=shape)
    FB = np.fft.fft2(QB, s=shape)
    weak = np.abs(FB) < floor * np.abs(FB).max()
    FB = np.where(weak, 1.0, FB)
    QS = np.fft.ifft2(FM / FB).real[: PM.shape[0], : PM.shape[1]]

    PS = s1 @ QS @ s2.T
    negative = float(-PS[PS < 0].sum())
    PS = np.clip(PS, 0.0, None)
    PS /= PS.sum()
    if weak.any():
        log.info("%d background Fourier components below floor", int(weak.sum()))
    return SubtractionResult(PS, negative, int(weak.sum()))


def convolve_click_statistics(P_S: np.ndarray, P_B: np.ndarray) -> np.ndarray:
    """Naive click-level combination ``P_S * P_B``, truncated to the outcome range.

    This ignores detector saturation and is wrong for multiplexed detectors;
    it is kept to demonstrate why the photon-level route is required.
    """
    full = fftconvolve(np.asarray(P_S, float), np.asarray(P_B, float))
    return full[: P_S.shape[0], : P_S.shape[1]]
