"""Dense linear algebra helpers for small square matrices.

Everything works on float64 numpy arrays.  The module covers exactly what the
attention kernels and their tests need: Frobenius norms, a seeded
power-iteration spectral norm, and a partial-pivot inverse that serves as an
independent check on the recursive rank-1 inverse updates in the kernels.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "LinalgError",
    "SingularMatrixError",
    "IllConditionedError",
    "PowerIterationError",
    "frobenius_norm",
    "spectral_norm",
    "invert",
    "COND_LIMIT",
]

# Pivot-ratio condition estimates at or above this are treated as ill-conditioned.
COND_LIMIT = 1e12


class LinalgError(Exception):
    pass


class SingularMatrixError(LinalgError):
    pass


class IllConditionedError(LinalgError):
    pass


class PowerIterationError(LinalgError):
    """Power iteration failed to converge; carries the last estimate."""

    def __init__(self, message: str, last_estimate: float):
        super().__init__(message)
        self.last_estimate = last_estimate


def _as_square(m) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    return m


def frobenius_norm(m) -> float:
    m = np.asarray(m, dtype=float)
    return float(np.sqrt(np.sum(m * m)))


def spectral_norm(m, tol: float = 1e-10, max_iter: int = 1000, seed: int = 0) -> float:
    """Largest singular value via power iteration on m^T m.

    The start vector is drawn from a generator seeded per call, so repeated
    calls on the same matrix give identical results.  Convergence is declared
    when the Rayleigh quotient is stationary and the eigen-residual is small
    relative to the current estimate; otherwise PowerIterationError is raised
    with the last estimate attached.
    """
    m = _as_square(m)
    if tol <= 0:
        raise ValueError("tol must be positive")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    b = m.T @ m
    if not b.any():
        return 0.0
    rng = np.random.default_rng(seed)
    n = b.shape[0]
    x = rng.standard_normal(n)
    x /= np.linalg.norm(x)
    lam = 0.0
    for _ in range(max_iter):
        y = b @ x
        ny = np.linalg.norm(y)
        if ny == 0.0:
            # Landed in the nullspace of a PSD matrix; restart.
            x = rng.standard_normal(n)
            x /= np.linalg.norm(x)
            continue
        x = y / ny
        bx = b @ x
        lam_new = float(x @ bx)
        residual = np.linalg.norm(bx - lam_new * x)
        if abs(lam_new - lam) <= tol * max(lam_new, 1e-300) and residual <= np.sqrt(tol) * max(
            lam_new, 1e-300
        ):
            return float(np.sqrt(lam_new))
        lam = lam_new
    raise PowerIterationError(
        f"power iteration did not converge in {max_iter} iterations",
        last_estimate=float(np.sqrt(max(lam, 0.0))),
    )


def invert(m) -> np.ndarray:
    """Inverse by Gauss-Jordan elimination with partial pivoting.

    Raises SingularMatrixError on an exactly singular matrix and
    IllConditionedError when the max/min pivot-magnitude ratio reaches
    COND_LIMIT.
    """
    a = np.array(_as_square(m), dtype=float, copy=True)
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    n = a.shape[0]
    inv = np.eye(n)
    pivots = np.empty(n)
    for col in range(n):
        p = col + int(np.argmax(np.abs(a[col:, col])))
        if a[p, col] == 0.0:
            raise SingularMatrixError(f"zero pivot in column {col}")
        if p != col:
            a[[col, p]] = a[[p, col]]
            inv[[col, p]] = inv[[p, col]]
        piv = a[col, col]
        pivots[col] = abs(piv)
        a[col] /= piv
        inv[col] /= piv
        factors = a[:, col].copy()
        factors[col] = 0.0
        a -= np.outer(factors, a[col])
        inv -= np.outer(factors, inv[col])
    cond_est = float(pivots.max() / pivots.min())
    if cond_est >= COND_LIMIT:
        raise IllConditionedError(f"pivot-ratio condition estimate {cond_est:.3e}")
    return inv
