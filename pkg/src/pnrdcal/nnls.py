"""Active-set nonnegative least squares (Lawson and Hanson, 1974)."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np


class NNLSResult(NamedTuple):
    x: np.ndarray
    rnorm: float
    iterations: int
    converged: bool


def nnls(A, b, maxiter: int | None = None, tol: float | None = None) -> NNLSResult:
    """Solve ``min ||A x - b||_2`` subject to ``x >= 0``.

    Parameters
    ----------
    A : array_like, shape (m, n)
    b : array_like, shape (m,)
    maxiter : int, optional
        Cap on inner least-squares solves (default ``3 * n``).
    tol : float, optional
        Dual-feasibility tolerance on the gradient ``A^T (b - A x)``
        (default ``10 * eps * ||A||_1 * max(m, n)``).

    Returns
    -------
    NNLSResult
        ``converged`` is False when the iteration cap stopped the solver;
        ``x`` then holds the last feasible iterate.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    m, n = A.shape
    if b.shape != (m,):
        raise ValueError(f"right-hand side has shape {b.shape}, expected ({m},)")
    if maxiter is None:
        maxiter = 3 * n
    if tol is None:
        tol = 10 * np.finfo(float).eps * np.linalg.norm(A, 1) * max(m, n)

    x = np.zeros(n)
    passive = np.zeros(n, dtype=bool)
    w = A.T @ b
    iterations = 0

    while not passive.all() and np.any(w[~passive] > tol):
        j = int(np.argmax(np.where(passive, -np.inf, w)))
        passive[j] = True
        iterations += 1
        z = _passive_solve(A, b, passive)
        if z[j] <= 0:
            # column j is numerically dependent on the passive set
            passive[j] = False
            w[j] = 0.0
            continue
        while np.any(z[passive] <= 0):
            iterations += 1
            if iterations > maxiter:
                return NNLSResult(x, float(np.linalg.norm(A @ x - b)), iterations - 1, False)
            # step back towards z until the first passive variable hits zero
            blocking = passive & (z <= 0)
            alpha = np.min(x[blocking] / (x[blocking] - z[blocking]))
            x = x + alpha * (z - x)
            passive &= x > tol
            x[~passive] = 0.0
            z = _passive_solve(A, b, passive)
        x = z
        if iterations > maxiter:
            return NNLSResult(x, float(np.linalg.norm(A @ x - b)), iterations, False)
        w = A.T @ (b - A @ x)

    return NNLSResult(x, float(np.linalg.norm(A @ x - b)), iterations, True)


def _passive_solve(A: np.ndarray, b: np.ndarray, passive: np.ndarray) -> np.ndarray:
    z = np.zeros(A.shape[1])
    if passive.any():
        z[passive] = np.linalg.lstsq(A[:, passive], b, rcond=None)[0]
    return z
