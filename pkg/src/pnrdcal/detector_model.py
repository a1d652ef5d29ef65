"""Loss and mode-multiplexing matrices of a photon-number-resolving detector.

A detector is modelled as binomial loss followed by a lossless
mode-multiplexer.  The loss matrix ``L(eta)`` thins a photon-number
distribution; the convolution matrix ``C`` maps the surviving photon number
``m`` to the number ``k`` of occupied bins (clicks).  Row ``i`` of ``C @ L``
holds the photon-number diagonal of the POVM element for ``i`` clicks.

All matrices are returned as read-only float arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb

import numpy as np

from .errors import DimensionError

#: Default photon-number truncation: eight resolvable photons plus vacuum.
DEFAULT_TRUNCATION = 9

STOCHASTIC_ATOL = 1e-12


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def _binomial_pmf(n: int, p: float) -> np.ndarray:
    """P(t successes out of n) for t = 0..n, with 0**0 == 1."""
    t = np.arange(n + 1)
    coeffs = np.array([comb(n, int(k)) for k in t], dtype=float)
    return coeffs * np.power(p, t) * np.power(1.0 - p, n - t)


def check_column_stochastic(matrix: np.ndarray, name: str, atol: float = STOCHASTIC_ATOL) -> None:
    """Raise ``ArithmeticError`` unless entries lie in [0, 1] and columns sum to one."""
    if np.any(matrix < -atol) or np.any(matrix > 1 + atol):
        raise ArithmeticError(f"{name} has entries outside [0, 1]")
    sums = matrix.sum(axis=0)
    worst = np.max(np.abs(sums - 1.0)) if sums.size else 0.0
    if worst > atol:
        raise ArithmeticError(f"{name} columns deviate from unit sum by {worst:.3g}")


def build_loss_matrix(eta: float, dim: int = DEFAULT_TRUNCATION) -> np.ndarray:
    """Binomial loss channel on photon numbers ``0..dim-1``.

    ``L[i, j] = binom(j, i) * eta**i * (1 - eta)**(j - i)`` for ``j >= i``.

    Parameters
    ----------
    eta : float
        Survival probability (detector efficiency), in [0, 1].
    dim : int
        Photon-number truncation ``N``.

    Returns
    -------
    numpy.ndarray, shape (dim, dim)
        Upper-triangular, column-stochastic matrix.
    """
    eta = float(eta)
    if not 0.0 <= eta <= 1.0 or np.isnan(eta):
        raise ValueError(f"efficiency must lie in [0, 1], got {eta}")
    if int(dim) != dim or dim < 1:
        raise ValueError(f"dimension must be a positive integer, got {dim}")
    dim = int(dim)
    L = np.zeros((dim, dim))
    for j in range(dim):
        L[: j + 1, j] = _binomial_pmf(j, eta)
    check_column_stochastic(L, "loss matrix")
    return _frozen(L)


@dataclass(frozen=True)
class MultiplexConfig:
    """Splitting ratios of a mode-multiplexed detector.

    ``bin_probabilities[b]`` is the probability that a single photon is
    routed to bin ``b``; photons are routed independently.
    ``max_photons`` is the largest photon number kept in the model (``N - 1``).
    """

    bin_probabilities: tuple[float, ...]
    max_photons: int = DEFAULT_TRUNCATION - 1
    label: str = field(default="", compare=False)

    def __post_init__(self):
        probs = tuple(float(p) for p in self.bin_probabilities)
        object.__setattr__(self, "bin_probabilities", probs)
        if len(probs) < 1:
            raise ValueError("a multiplexed detector needs at least one bin")
        if any(not 0.0 <= p <= 1.0 for p in probs):
            raise ValueError("bin probabilities must lie in [0, 1]")
        if abs(sum(probs) - 1.0) > STOCHASTIC_ATOL:
            raise ValueError(f"bin probabilities sum to {sum(probs)!r}, not 1")
        if int(self.max_photons) != self.max_photons or self.max_photons < 0:
            raise ValueError("max_photons must be a non-negative integer")
        object.__setattr__(self, "max_photons", int(self.max_photons))

    @classmethod
    def uniform(cls, bins: int, max_photons: int = DEFAULT_TRUNCATION - 1) -> "MultiplexConfig":
        return cls((1.0 / bins,) * bins, max_photons)

    @classmethod
    def time_multiplexed(cls, max_photons: int = DEFAULT_TRUNCATION - 1) -> "MultiplexConfig":
        """Balanced eight-bin time-multiplexed detector."""
        return cls.uniform(8, max_photons)

    @property
    def bins(self) -> int:
        return len(self.bin_probabilities)

    @property
    def dim(self) -> int:
        return self.max_photons + 1

    def with_truncation(self, dim: int) -> "MultiplexConfig":
        return MultiplexConfig(self.bin_probabilities, dim - 1, self.label)


def _occupied_bins_distribution(m: int, probs: tuple[float, ...]) -> np.ndarray:
    """Distribution of the number of occupied bins for ``m`` routed photons.

    Bins are processed left to right.  ``dist[j, k]`` is the probability that
    ``j`` photons were placed in the bins seen so far, ``k`` of them occupied.
    Each remaining photon lands in the current bin with probability
    ``p_b / (p_b + ... + p_B)``.
    """
    B = len(probs)
    tails = np.cumsum(np.asarray(probs)[::-1])[::-1]
    dist = np.zeros((m + 1, B + 1))
    dist[0, 0] = 1.0
    for b, p in enumerate(probs):
        q = min(1.0, p / tails[b]) if tails[b] > 0 else 0.0
        new = np.zeros_like(dist)
        for j in range(m + 1):
            row = dist[j]
            if not row.any():
                continue
            split = _binomial_pmf(m - j, q)
            new[j] += split[0] * row
            for t in range(1, m - j + 1):
                new[j + t, 1:] += split[t] * row[:-1]
        dist = new
    return dist[m]


def build_convolution_matrix(config: MultiplexConfig) -> np.ndarray:
    """Click-count response ``C`` of a mode-multiplexed detector.

    ``C[k, m]`` is the exact probability that ``m`` photons, each routed
    independently with ``config.bin_probabilities``, occupy exactly ``k``
    distinct bins.  Shape is ``(bins + 1, max_photons + 1)``.
    """
    B = config.bins
    C = np.zeros((B + 1, config.max_photons + 1))
    for m in range(config.max_photons + 1):
        C[:, m] = _occupied_bins_distribution(m, config.bin_probabilities)
    check_column_stochastic(C, "convolution matrix")
    return _frozen(C)


def compose_povm_diagonals(c: np.ndarray, l: np.ndarray) -> np.ndarray:
    """Return ``C @ L``; row ``i`` is the diagonal of the ``i``-click POVM element."""
    c = np.asarray(c, dtype=float)
    l = np.asarray(l, dtype=float)
    if c.ndim != 2 or l.ndim != 2 or c.shape[1] != l.shape[0]:
        raise DimensionError(
            f"cannot compose response {c.shape} with loss {l.shape}; "
            "build both matrices to the same truncation"
        )
    return _frozen(c @ l)


def detector_response(c: np.ndarray, eta: float) -> np.ndarray:
    """POVM diagonals ``C @ L(eta)`` with ``L`` built to the width of ``c``."""
    c = np.asarray(c, dtype=float)
    return compose_povm_diagonals(c, build_loss_matrix(eta, c.shape[1]))
