"""Efficiency estimation from joint click statistics.

The generalized Klyshko estimator fits a number-correlated state
``sigma[m, n] = c_m delta_mn`` together with the two detector efficiencies
by minimizing the Frobenius norm between measured and predicted click
matrices.  At fixed efficiencies the problem is linear in ``c`` and is
solved by nonnegative least squares; the efficiencies are found by a coarse
grid followed by Nelder-Mead refinement.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.optimize import minimize

from .detector_model import detector_response
from .errors import AmbiguousEstimateError, DimensionError, UndefinedEstimateError
from .forward_model import JointOutcome, as_probabilities, predict_joint
from .nnls import nnls

log = logging.getLogger(__name__)

#: Residual band treated as "equally optimal" when checking for flat valleys.
FLAT_ATOL = 1e-9
#: Cells whose residuals agree within this are merged into one plateau.
PLATEAU_ATOL = 1e-12


# --------------------------------------------------------------------------
# Classical Klyshko
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class KlyshkoRates:
    """Singles and coincidence rates for a pair of binary detectors.

    Detector 1 is the signal arm (``R_s``) and detector 2 the idler (``R_i``).
    """

    R_i: float
    R_s: float
    R_c: float

    def __post_init__(self):
        if min(self.R_i, self.R_s, self.R_c) < 0:
            raise ValueError("rates must be non-negative")
        if self.R_c > min(self.R_i, self.R_s) * (1 + 1e-12):
            raise ValueError("coincidence rate exceeds a singles rate")

    @classmethod
    def from_clicks(cls, R: JointOutcome) -> "KlyshkoRates":
        """Treat each PNRD as a binary detector: any click counts as a detection."""
        if hasattr(R, "counts"):
            M = np.asarray(R.counts, dtype=float)
        else:
            M = np.asarray(R, dtype=float)
        return cls(
            R_i=float(M[:, 1:].sum()),
            R_s=float(M[1:, :].sum()),
            R_c=float(M[1:, 1:].sum()),
        )


def klyshko_efficiency(rates: KlyshkoRates) -> tuple[float, float]:
    """Return ``(eta_s, eta_i) = (R_c / R_i, R_c / R_s)``."""
    if rates.R_i <= 0 or rates.R_s <= 0:
        raise UndefinedEstimateError("Klyshko estimate needs non-zero singles rates")
    return rates.R_c / rates.R_i, rates.R_c / rates.R_s


def biased_klyshko(sigma11: float, sigma22: float, eta_s: float, eta_i: float) -> float:
    """Klyshko estimate of ``eta_s`` when two-pair events contaminate the source.

    With binary detectors and a source emitting one pair with weight
    ``sigma11`` and two pairs with weight ``sigma22``::

        eta~_s = eta_s * (s11 + (2 - eta_s)(2 - eta_i) s22) / (s11 + (2 - eta_i) s22)
    """
    if sigma11 < 0 or sigma22 < 0:
        raise ValueError("pair weights must be non-negative")
    if sigma11 == 0 and sigma22 == 0:
        raise UndefinedEstimateError("no pair events: Klyshko estimate undefined")
    for eta in (eta_s, eta_i):
        if not 0.0 <= eta <= 1.0:
            raise ValueError("efficiencies must lie in [0, 1]")
    numerator = sigma11 + (eta_s * eta_i - 2 * eta_s - 2 * eta_i + 4) * sigma22
    denominator = sigma11 + (2 - eta_i) * sigma22
    return numerator / denominator * eta_s


# --------------------------------------------------------------------------
# Inner problem: nonnegative state at fixed efficiencies
# --------------------------------------------------------------------------


class DiagonalFit(NamedTuple):
    weights: np.ndarray
    residual: float
    converged: bool
    iterations: int


def _check_shapes(P: np.ndarray, c1: np.ndarray, c2: np.ndarray) -> None:
    if P.shape != (c1.shape[0], c2.shape[0]):
        raise DimensionError(
            f"click matrix {P.shape} does not match detector outcomes "
            f"({c1.shape[0]}, {c2.shape[0]})"
        )
    if c1.shape[1] != c2.shape[1]:
        raise DimensionError("both detectors must be built to the same truncation")


def _diagonal_design(a1: np.ndarray, a2: np.ndarray) -> np.ndarray:
    # column i is vec(a1[:, i] a2[:, i]^T), the click matrix of the pure pair state |i, i>
    return np.einsum("ki,li->kli", a1, a2).reshape(-1, a1.shape[1])


def _fit_at(P: np.ndarray, c1: np.ndarray, c2: np.ndarray, eta1: float, eta2: float) -> DiagonalFit:
    a1 = detector_response(c1, eta1)
    a2 = detector_response(c2, eta2)
    sol = nnls(_diagonal_design(a1, a2), P.ravel())
    model = (a1 * sol.x) @ a2.T
    residual = float(np.linalg.norm(P - model))
    return DiagonalFit(sol.x, residual, sol.converged, sol.iterations)


def fit_diagonal_state(R: JointOutcome, eta1: float, eta2: float, c1, c2) -> DiagonalFit:
    """Nonnegative pair-number weights ``c`` minimizing ``||R - P(c)||_F``.

    The weights are not renormalized, so that ``residual`` is exactly the
    objective at the returned point.  On well-fitting data they sum to one.
    """
    c1 = np.asarray(c1, dtype=float)
    c2 = np.asarray(c2, dtype=float)
    P = as_probabilities(R)
    _check_shapes(P, c1, c2)
    return _fit_at(P, c1, c2, eta1, eta2)


# --------------------------------------------------------------------------
# Residual landscape
# --------------------------------------------------------------------------


def _landscape_row(args) -> np.ndarray:
    P, c1, c2, eta1, grid2 = args
    return np.array([_fit_at(P, c1, c2, eta1, e2).residual for e2 in grid2])


def _as_grid(grid) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(grid, (int, np.integer)):
        g = np.linspace(0.0, 1.0, int(grid))
        return g, g
    if isinstance(grid, tuple) and len(grid) == 2:
        g1, g2 = (np.asarray(g, dtype=float) for g in grid)
    else:
        g1 = g2 = np.asarray(grid, dtype=float)
    for g in (g1, g2):
        if g.ndim != 1 or g.size < 1 or np.any(g < 0) or np.any(g > 1):
            raise ValueError("efficiency grid must be a 1-D array within [0, 1]")
    return g1, g2


def _landscape(P, c1, c2, g1, g2, workers: int) -> np.ndarray:
    tasks = [(P, c1, c2, float(e1), g2) for e1 in g1]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_landscape_row, tasks))
    else:
        rows = [_landscape_row(t) for t in tasks]
    return np.vstack(rows)


def scan_residual_landscape(R: JointOutcome, c1, c2, grid=50, workers: int = 1) -> np.ndarray:
    """Inner-optimal residual ``F`` on a grid of ``(eta1, eta2)``.

    Parameters
    ----------
    grid : int, array_like, or pair of array_like
        Number of equally spaced points on [0, 1], a shared 1-D grid, or
        separate grids for ``eta1`` and ``eta2``.
    workers : int
        Process count for evaluating rows in parallel.  The output does not
        depend on it.

    Returns
    -------
    ndarray, shape (len(grid1), len(grid2))
        ``out[i, j]`` is the residual at ``(grid1[i], grid2[j])``.
    """
    c1 = np.asarray(c1, dtype=float)
    c2 = np.asarray(c2, dtype=float)
    P = as_probabilities(R)
    _check_shapes(P, c1, c2)
    g1, g2 = _as_grid(grid)
    return _landscape(P, c1, c2, g1, g2, workers)


def find_basins(values: np.ndarray, atol: float = PLATEAU_ATOL) -> list[list[tuple[int, int]]]:
    """Local-minimum basins of a 2-D array under 8-neighbour comparison.

    Neighbouring cells whose values agree within ``atol`` are merged into a
    plateau.  A plateau is a basin when every cell bordering it is strictly
    larger (by more than ``atol``).  Returns the cell lists of all basins.
    """
    values = np.asarray(values, dtype=float)
    rows, cols = values.shape
    label = -np.ones(values.shape, dtype=int)
    offsets = [(di, dj) for di in (-1, 0, 1) for dj in (-1, 0, 1) if (di, dj) != (0, 0)]
    basins = []
    n_labels = 0
    for start in np.ndindex(rows, cols):
        if label[start] >= 0:
            continue
        label[start] = n_labels
        members = [start]
        stack = [start]
        is_minimum = True
        while stack:
            i, j = stack.pop()
            for di, dj in offsets:
                ni, nj = i + di, j + dj
                if not (0 <= ni < rows and 0 <= nj < cols):
                    continue
                diff = values[ni, nj] - values[i, j]
                if abs(diff) <= atol:
                    if label[ni, nj] < 0:
                        label[ni, nj] = n_labels
                        members.append((ni, nj))
                        stack.append((ni, nj))
                elif diff < 0:
                    is_minimum = False
        if is_minimum:
            basins.append(members)
        n_labels += 1
    return basins


# --------------------------------------------------------------------------
# Outer problem: efficiencies
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CalibrationResult:
    eta1: float
    eta2: float
    weights: np.ndarray
    residual: float
    converged: bool = True
    ambiguous: bool = False
    unidentifiable: tuple[str, ...] = ()
    evaluations: int = 0
    iterations: int = 0
    settings: dict = field(default_factory=dict, compare=False)

    @property
    def state(self) -> np.ndarray:
        """Fitted pair-number distribution ``{c_i}``, normalized."""
        total = self.weights.sum()
        return self.weights / total if total > 0 else self.weights.copy()

    def objective(self, R: JointOutcome, c1, c2) -> float:
        """Re-evaluate ``||R - P||_F`` at the stored parameters."""
        P = as_probabilities(R)
        model = predict_joint(
            np.asarray(c1, float), self.eta1, np.diag(self.weights), self.eta2,
            np.asarray(c2, float), check=False,
        )
        return float(np.linalg.norm(P - model))


def _initial_simplex(x0: np.ndarray, step: float) -> np.ndarray:
    simplex = [x0]
    for axis in range(2):
        v = x0.copy()
        v[axis] = v[axis] + step if v[axis] + step <= 1.0 else v[axis] - step
        simplex.append(v)
    return np.array(simplex)


def estimate_efficiencies(
    R: JointOutcome,
    c1,
    c2,
    grid: int = 21,
    xtol: float = 1e-6,
    maxfev: int = 2000,
    strict: bool = True,
    workers: int = 1,
) -> CalibrationResult:
    """Estimate both detector efficiencies from joint click statistics.

    A ``grid x grid`` scan of the inner-optimal residual over ``[0, 1]^2``
    selects a starting cell; Nelder-Mead then refines it until the simplex
    is smaller than ``xtol``.

    If residuals within ``1e-9`` of the optimum span more than one grid cell
    along an axis, that efficiency is reported as unidentifiable, the
    near-optimal grid point with the smallest ``eta1 + eta2`` is returned,
    and (when ``strict``) :class:`AmbiguousEstimateError` is raised with the
    result attached.
    """
    c1 = np.asarray(c1, dtype=float)
    c2 = np.asarray(c2, dtype=float)
    P = as_probabilities(R)
    _check_shapes(P, c1, c2)
    if grid < 2:
        raise ValueError("outer grid needs at least 2 points per axis")
    settings = {"grid": int(grid), "xtol": xtol, "maxfev": maxfev, "flat_atol": FLAT_ATOL}

    g = np.linspace(0.0, 1.0, grid)
    step = g[1] - g[0]
    F = _landscape(P, c1, c2, g, g, workers)
    evaluations = F.size

    near = np.argwhere(F <= F.min() + FLAT_ATOL)
    unidentifiable = tuple(
        name
        for axis, name in enumerate(("eta1", "eta2"))
        if near[:, axis].max() - near[:, axis].min() > 1
    )

    if unidentifiable:
        # smallest eta1 + eta2, then smallest eta1
        i, j = min(map(tuple, near), key=lambda ij: (ij[0] + ij[1], ij[0]))
        fit = _fit_at(P, c1, c2, g[i], g[j])
        result = CalibrationResult(
            float(g[i]), float(g[j]), fit.weights, fit.residual, fit.converged,
            True, unidentifiable, evaluations, 0, settings,
        )
        log.warning("flat residual along %s", ", ".join(unidentifiable))
        if strict:
            raise AmbiguousEstimateError(unidentifiable, result)
        return result

    i, j = np.unravel_index(np.argmin(F), F.shape)
    x0 = np.array([g[i], g[j]])

    def objective(x):
        return _fit_at(P, c1, c2, *np.clip(x, 0.0, 1.0)).residual

    opt = minimize(
        objective,
        x0,
        method="Nelder-Mead",
        bounds=[(0.0, 1.0), (0.0, 1.0)],
        options={
            "xatol": xtol,
            "fatol": 1e-15,
            "maxfev": maxfev,
            "initial_simplex": _initial_simplex(x0, step / 2),
        },
    )
    eta1, eta2 = (float(v) for v in np.clip(opt.x, 0.0, 1.0))
    fit = _fit_at(P, c1, c2, eta1, eta2)
    return CalibrationResult(
        eta1, eta2, fit.weights, fit.residual,
        bool(opt.success) and fit.converged, False, (),
        evaluations + int(opt.nfev) + 1, int(opt.nit), settings,
    )


# --------------------------------------------------------------------------
# Full joint-state reconstruction
# --------------------------------------------------------------------------


def unpaired_fraction(sigma: np.ndarray) -> float:
    """Fraction of photons that arrive without a partner in the other beam.

    A ``(m, n)`` event carries ``m + n`` photons of which ``|m - n|`` are
    unpaired; the fraction is ``sum sigma |m - n| / sum sigma (m + n)``.
    """
    sigma = np.asarray(sigma, dtype=float)
    m, n = np.indices(sigma.shape)
    photons = float((sigma * (m + n)).sum())
    if photons <= 0:
        return 0.0
    return float((sigma * np.abs(m - n)).sum()) / photons


def off_diagonal_mass(sigma: np.ndarray) -> float:
    sigma = np.asarray(sigma, dtype=float)
    return float(sigma.sum() - np.trace(sigma))


def mean_photon_number(sigma: np.ndarray) -> float:
    """Average of the two beams' mean photon numbers."""
    sigma = np.asarray(sigma, dtype=float)
    m, n = np.indices(sigma.shape)
    return float((sigma * (m + n)).sum() / 2.0)


@dataclass(frozen=True)
class JointReconstruction:
    sigma: np.ndarray
    residual: float
    converged: bool
    iterations: int

    @property
    def off_diagonal_mass(self) -> float:
        return off_diagonal_mass(self.sigma)

    @property
    def unpaired_fraction(self) -> float:
        return unpaired_fraction(self.sigma)

    @property
    def mean_photon_number(self) -> float:
        return mean_photon_number(self.sigma)


def reconstruct_joint_statistics(
    R: JointOutcome, eta1: float, eta2: float, c1, c2, maxiter: int | None = None
) -> JointReconstruction:
    """Nonnegative joint photon statistics at fixed efficiencies.

    Unlike :func:`fit_diagonal_state`, off-diagonal entries are free, so
    the result exposes uncorrelated (e.g. background) photons.
    """
    c1 = np.asarray(c1, dtype=float)
    c2 = np.asarray(c2, dtype=float)
    P = as_probabilities(R)
    _check_shapes(P, c1, c2)
    a1 = detector_response(c1, eta1)
    a2 = detector_response(c2, eta2)
    N = c1.shape[1]
    sol = nnls(np.kron(a1, a2), P.ravel(), maxiter=maxiter or 6 * N * N)
    sigma = sol.x.reshape(N, N)
    residual = float(np.linalg.norm(P - a1 @ sigma @ a2.T))
    if not sol.converged:
        log.warning("joint reconstruction stopped at the iteration cap")
    return JointReconstruction(sigma, residual, sol.converged, sol.iterations)


def linear_fit_r2(x: Sequence[float], y: Sequence[float]) -> tuple[float, float, float]:
    """Least-squares line through ``(x, y)``; returns ``(slope, intercept, R^2)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    slope, intercept = np.polyfit(x, y, 1)
    ss_res = float(np.sum((y - (slope * x + intercept)) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    return float(slope), float(intercept), 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
