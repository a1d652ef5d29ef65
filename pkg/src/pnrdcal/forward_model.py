"""Predicted click statistics for one detector and for a pair of detectors."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Union

import numpy as np

from .detector_model import build_loss_matrix
from .errors import DimensionError, NormalizationError

NORM_ATOL = 1e-9


@dataclass(frozen=True)
class ClickHistogram:
    """Measured joint click counts of two detectors.

    ``counts[k1, k2]`` is the number of trials in which detector 1 reported
    ``k1`` clicks and detector 2 reported ``k2``.
    """

    counts: np.ndarray
    trials: int
    metadata: dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim != 2:
            raise DimensionError("click histogram must be a 2-D matrix")
        if np.any(counts < 0):
            raise ValueError("click counts must be non-negative")
        if not np.all(np.equal(np.mod(counts, 1), 0)):
            raise ValueError("click counts must be integers")
        counts = counts.astype(np.int64)
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)
        if int(counts.sum()) != int(self.trials):
            raise ValueError(
                f"counts sum to {int(counts.sum())} but trials = {self.trials}"
            )
        if self.trials < 1:
            raise ValueError("a histogram needs at least one trial")

    @property
    def shape(self) -> tuple[int, int]:
        return self.counts.shape

    def probabilities(self) -> np.ndarray:
        return self.counts / float(self.trials)


JointOutcome = Union[np.ndarray, ClickHistogram]


def as_probabilities(R: JointOutcome, atol: float = NORM_ATOL) -> np.ndarray:
    """Joint outcome probabilities from either raw counts or a probability matrix."""
    if isinstance(R, ClickHistogram):
        return R.probabilities()
    P = np.asarray(R, dtype=float)
    if P.ndim != 2:
        raise DimensionError("joint outcome statistics must be a 2-D matrix")
    if np.any(P < -atol):
        raise ValueError("joint outcome probabilities must be non-negative")
    total = P.sum()
    if abs(total - 1.0) > atol:
        raise NormalizationError(f"joint outcome probabilities sum to {total!r}")
    return P


def _check_distribution(x: np.ndarray, name: str, atol: float) -> None:
    if np.any(x < -atol):
        raise ValueError(f"{name} has negative entries")
    total = x.sum()
    if abs(total - 1.0) > atol:
        raise NormalizationError(f"{name} sums to {total!r}, not 1")


def predict_single(c: np.ndarray, l: np.ndarray, sigma_vec, atol: float = NORM_ATOL) -> np.ndarray:
    """Click distribution ``C @ L @ sigma`` of a single detector."""
    sigma_vec = np.asarray(sigma_vec, dtype=float)
    if sigma_vec.ndim != 1 or c.shape[1] != l.shape[0] or l.shape[1] != sigma_vec.size:
        raise DimensionError(
            f"shapes C{c.shape}, L{l.shape}, sigma{sigma_vec.shape} do not chain"
        )
    _check_distribution(sigma_vec, "photon-number distribution", atol)
    return c @ (l @ sigma_vec)


def predict_joint(
    c1: np.ndarray,
    eta1: float,
    sigma: np.ndarray,
    eta2: float,
    c2: np.ndarray,
    check: bool = True,
) -> np.ndarray:
    """Joint click probabilities ``C1 L(eta1) sigma L(eta2)^T C2^T``.

    Parameters
    ----------
    c1, c2 : ndarray
        Convolution matrices of detectors 1 and 2, both ``N`` columns wide.
    eta1, eta2 : float
        Detector efficiencies.
    sigma : ndarray, shape (N, N)
        Joint photon statistics; ``sigma[m, n]`` is the probability of ``m``
        photons in beam 1 and ``n`` in beam 2.
    check : bool
        Validate that ``sigma`` is a normalized probability matrix.  Disable
        to evaluate the model at unnormalized fitted weights.
    """
    sigma = np.asarray(sigma, dtype=float)
    N = sigma.shape[0]
    if sigma.ndim != 2 or sigma.shape != (N, N) or c1.shape[1] != N or c2.shape[1] != N:
        raise DimensionError(
            f"joint statistics {sigma.shape} incompatible with responses "
            f"{c1.shape} and {c2.shape}"
        )
    if check:
        _check_distribution(sigma, "joint photon statistics", NORM_ATOL)
    a1 = c1 @ build_loss_matrix(eta1, N)
    a2 = c2 @ build_loss_matrix(eta2, N)
    return a1 @ sigma @ a2.T


def diagonal_state_matrix(c) -> np.ndarray:
    """Joint statistics of a number-correlated state: ``sigma[m, n] = c_m delta_mn``."""
    return np.diag(np.asarray(c, dtype=float))
