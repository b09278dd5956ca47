"""Small dense symmetric linear algebra and finite differences.

Symmetric matrices are plain ``(n, n)`` float arrays in memory. The packed
row-major upper-triangle layout (:func:`pack_upper` / :func:`unpack_upper`)
is only used for serialization.

Positive definite systems are factored after symmetric diagonal
equilibration, ``C = D^-1/2 A D^-1/2`` with ``D = diag(A)``. Covariances of
raw moments span many orders of magnitude (the 8th moment of a log-normal
against its variance), so conditioning and jitter are judged on ``C``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DimensionMismatch, NonFinite, NotPositiveDefinite

JITTER_EPS = 1e-12
COND_LIMIT = 1e12


def pack_upper(a: np.ndarray) -> np.ndarray:
    """Row-major upper triangle of a symmetric matrix, length n(n+1)/2."""
    a = np.asarray(a, dtype=float)
    return a[np.triu_indices(a.shape[0])].copy()


def unpack_upper(packed, order: int) -> np.ndarray:
    packed = np.asarray(packed, dtype=float)
    if packed.shape != (order * (order + 1) // 2,):
        raise DimensionMismatch(
            f"packed length {packed.size} does not match order {order}"
        )
    out = np.zeros((order, order))
    iu = np.triu_indices(order)
    out[iu] = packed
    out.T[iu] = packed
    return out


def as_symmetric(a, name: str = "matrix") -> np.ndarray:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise DimensionMismatch(f"{name} must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NonFinite(f"{name} has non-finite entries")
    return 0.5 * (a + a.T)


@dataclass(frozen=True)
class SPDFactor:
    """Cholesky factor of an equilibrated SPD matrix.

    ``jitter`` is the value added to the unit diagonal of the equilibrated
    matrix (0.0 when none was needed); in the original scaling this is
    ``jitter * diag(A)``.
    """

    chol: np.ndarray
    scale: np.ndarray
    jitter: float
    cond: float

    @property
    def order(self) -> int:
        return self.scale.size

    def solve(self, rhs) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        if rhs.shape[0] != self.order:
            raise DimensionMismatch(
                f"rhs has {rhs.shape[0]} rows, matrix order is {self.order}"
            )
        s = self.scale if rhs.ndim == 1 else self.scale[:, None]
        y = _cho_solve(self.chol, rhs / s)
        return y / s


def _cho_solve(chol: np.ndarray, b: np.ndarray) -> np.ndarray:
    from scipy.linalg import solve_triangular

    z = solve_triangular(chol, b, lower=True, check_finite=False)
    return solve_triangular(chol.T, z, lower=False, check_finite=False)


def factor_spd(a, *, eps: float = JITTER_EPS, cond_limit: float = COND_LIMIT) -> SPDFactor:
    """Cholesky with fail-then-jitter.

    If the factorization fails, or the equilibrated condition number exceeds
    ``cond_limit``, ``eps * trace(C) / order`` (= ``eps``) is added to the
    diagonal of the equilibrated matrix ``C`` and the factorization is
    retried once.
    """
    a = as_symmetric(a)
    d = np.diag(a)
    if np.any(d <= 0):
        raise NotPositiveDefinite("non-positive diagonal entry", op="factor_spd")
    scale = np.sqrt(d)
    c = a / np.outer(scale, scale)
    cond = _cond(c)
    jitter = 0.0
    chol = None
    if cond <= cond_limit:
        try:
            chol = np.linalg.cholesky(c)
        except np.linalg.LinAlgError:
            chol = None
    if chol is None:
        jitter = eps * np.trace(c) / c.shape[0]
        c = c + jitter * np.eye(c.shape[0])
        try:
            chol = np.linalg.cholesky(c)
        except np.linalg.LinAlgError:
            raise NotPositiveDefinite(
                "Cholesky failed after jitter", op="factor_spd"
            ) from None
        cond = _cond(c)
    return SPDFactor(chol=chol, scale=scale, jitter=float(jitter), cond=float(cond))


def _cond(c: np.ndarray) -> float:
    w = np.linalg.eigvalsh(c)
    if w[0] <= 0:
        return float("inf")
    return float(w[-1] / w[0])


def solve_spd(a, rhs) -> np.ndarray:
    """Solve ``a @ x = rhs`` for symmetric positive definite ``a``."""
    a = as_symmetric(a)
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape[0] != a.shape[0]:
        raise DimensionMismatch(f"rhs length {rhs.shape[0]} != order {a.shape[0]}")
    return factor_spd(a).solve(rhs)


def quad_form_inv(a, g) -> np.ndarray:
    """``G^T A^-1 G`` for SPD ``A`` (L x L) and ``G`` (L x M); returns M x M."""
    a = as_symmetric(a)
    g = np.asarray(g, dtype=float)
    if g.ndim == 1:
        g = g[:, None]
    if g.shape[0] != a.shape[0]:
        raise DimensionMismatch(f"g has {g.shape[0]} rows, a has order {a.shape[0]}")
    out = g.T @ factor_spd(a).solve(g)
    return 0.5 * (out + out.T)


def min_eigenvalue(a) -> float:
    return float(np.linalg.eigvalsh(as_symmetric(a))[0])


def dominates(a, b, tol: float = 0.0) -> bool:
    """True iff ``a - b`` is positive semidefinite up to ``-tol``."""
    a = as_symmetric(a, "a")
    b = as_symmetric(b, "b")
    if a.shape != b.shape:
        raise DimensionMismatch(f"orders differ: {a.shape[0]} vs {b.shape[0]}")
    return min_eigenvalue(a - b) >= -tol


def central_diff(f: Callable[[float], float], x: float, h: float) -> float:
    if not h > 0:
        raise ValueError("step h must be positive")
    hi, lo = f(x + h), f(x - h)
    if not (np.isfinite(hi) and np.isfinite(lo)):
        raise NonFinite(f"f is not finite at x±h (x={x}, h={h})", op="central_diff")
    return (hi - lo) / (2.0 * h)
