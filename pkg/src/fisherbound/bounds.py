"""Lower bounds on the Fisher information from moments of auxiliary statistics.

The strong bound ``dmu^T R^-1 dmu`` is the Fisher information of the
exponential-family replacement whose sufficient statistics are the chosen
auxiliary statistics. It never exceeds the true Fisher information and is
tight when the statistics contain the model's sufficient statistics.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import (
    DegenerateWeightWarning,
    DimensionMismatch,
    FisherBoundError,
    InfeasibleMoments,
    NonPositiveFisher,
    NotPositiveDefinite,
    RankDeficientWeights,
)
from .expfam import MomentSet
from .numkit import factor_spd
from .profile import MomentProfile, ProfilePoint

_DEGENERATE_REL = 1e-14


@dataclass(frozen=True)
class TwoMomentResult:
    s: float
    b_star: float
    fallback: bool = False  # True when b_star was undefined and b=0 was used


@dataclass
class BoundReport:
    """Bound at one theta.

    ``bound`` is a float for a scalar parameter and an ``(M, M)`` array
    otherwise. ``weights`` are the optimal weights b* and ``norm_weights``
    their normalized absolute values.
    """

    theta: float
    bound: float | np.ndarray
    weights: np.ndarray
    norm_weights: np.ndarray
    cond: float
    jitter_applied: float
    chi: float | None = None
    chi_db: float | None = None
    zero_gradient: bool = False


def two_moment_bound(m: MomentSet) -> TwoMomentResult:
    """Bound from the mean, variance and normalized 3rd/4th central moments.

    S(b) = (dmu1 + b dmu2 / sqrt(mu2))^2 / (mu2 (1 + 2 b mu3bar + b^2 (mu4bar - 1)))
    evaluated at its maximizer b*. When the closed form for b* is 0/0 or the
    denominator vanishes, b = 0 is used and ``fallback`` is set.
    """
    if m.mu4bar < 1 + m.mu3bar**2 - 1e-9:
        raise InfeasibleMoments(f"mu4bar={m.mu4bar} < 1 + mu3bar^2")
    sd = math.sqrt(m.mu2)
    num = m.dmu1 * sd * m.mu3bar - m.dmu2
    den = m.dmu2 * m.mu3bar - m.dmu1 * sd * (m.mu4bar - 1)
    scale = abs(m.dmu2 * m.mu3bar) + abs(m.dmu1 * sd * (m.mu4bar - 1))
    if scale == 0 or abs(den) <= _DEGENERATE_REL * scale:
        return TwoMomentResult(simple_bound(m), 0.0, fallback=True)
    b = num / den
    q = 1 + 2 * b * m.mu3bar + b * b * (m.mu4bar - 1)
    if not q > 0:
        return TwoMomentResult(simple_bound(m), 0.0, fallback=True)
    s = (m.dmu1 + b * m.dmu2 / sd) ** 2 / (m.mu2 * q)
    return TwoMomentResult(s, b)


def two_moment_value(m: MomentSet, b: float) -> float:
    """S(b) for an arbitrary weight b (nan where the denominator is not positive)."""
    sd = math.sqrt(m.mu2)
    q = 1 + 2 * b * m.mu3bar + b * b * (m.mu4bar - 1)
    if not q > 0:
        return float("nan")
    return (m.dmu1 + b * m.dmu2 / sd) ** 2 / (m.mu2 * q)


def simple_bound(m: MomentSet) -> float:
    """(dmu1)^2 / mu2."""
    return m.dmu1**2 / m.mu2


def _point(pp) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    mu, dmu, cov = pp[-3:] if len(pp) == 4 else pp
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    dmu = np.asarray(dmu, dtype=float)
    if dmu.ndim == 1:
        dmu = dmu[:, None]
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    L = mu.size
    if dmu.shape[0] != L or cov.shape != (L, L):
        raise DimensionMismatch(
            f"mu has {L} entries, dmu {dmu.shape}, cov {cov.shape}"
        )
    return mu, dmu, cov


def _scalarize(a: np.ndarray) -> float | np.ndarray:
    return float(a[0, 0]) if a.shape == (1, 1) else a


def weighted_bound(profile_point, b_matrix) -> float | np.ndarray:
    """dmu^T B (B^T R B)^-1 B^T dmu for an arbitrary L x K weight matrix B."""
    _, dmu, cov = _point(profile_point)
    B = np.asarray(b_matrix, dtype=float)
    if B.ndim == 1:
        B = B[:, None]
    if B.shape[0] != cov.shape[0]:
        raise DimensionMismatch(f"B has {B.shape[0]} rows, expected {cov.shape[0]}")
    if np.linalg.matrix_rank(B) < B.shape[1]:
        raise RankDeficientWeights(f"B ({B.shape}) is not of full column rank")
    inner = B.T @ cov @ B
    g = B.T @ dmu
    try:
        out = g.T @ factor_spd(inner).solve(g)
    except NotPositiveDefinite as e:
        raise NotPositiveDefinite("B^T R B is not positive definite", op="weighted_bound") from e
    return _scalarize(0.5 * (out + out.T))


def _inv_sqrt_psd(a: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(a)
    return (v / np.sqrt(w)) @ v.T


def normalize_weights(weights: np.ndarray) -> np.ndarray:
    """|b_l| / sum |b_l| (row 2-norms for a matrix of weights)."""
    w = np.asarray(weights, dtype=float)
    mag = np.abs(w) if w.ndim == 1 else np.linalg.norm(w, axis=1)
    total = mag.sum()
    if total == 0:
        return np.full(mag.shape, 1.0 / mag.size)
    return mag / total


def strong_bound(profile_point, fisher_exact: float | None = None) -> BoundReport:
    """Optimally weighted bound dmu^T R^-1 dmu with weights and diagnostics."""
    theta = float(profile_point[0]) if len(profile_point) == 4 else float("nan")
    _, dmu, cov = _point(profile_point)
    fac = factor_spd(cov)
    rinv_dmu = fac.solve(dmu)
    J = dmu.T @ rinv_dmu
    J = 0.5 * (J + J.T)
    M = J.shape[0]
    zero = not np.any(dmu)
    if zero:
        warnings.warn("zero gradient: bound is 0", DegenerateWeightWarning, stacklevel=2)
        weights = np.zeros_like(rinv_dmu)
    elif M == 1:
        weights = rinv_dmu / math.sqrt(J[0, 0])
    else:
        weights = rinv_dmu @ _inv_sqrt_psd(J)
    if M == 1:
        weights = weights[:, 0]
    report = BoundReport(
        theta=theta,
        bound=_scalarize(J),
        weights=weights,
        norm_weights=normalize_weights(weights),
        cond=fac.cond,
        jitter_applied=fac.jitter,
        zero_gradient=zero,
    )
    if fisher_exact is not None:
        if M != 1:
            raise DimensionMismatch("loss ratio is defined for scalar parameters only")
        report.chi, report.chi_db = loss_chi(report.bound, fisher_exact)
    return report


def loss_chi(bound: float, fisher_exact: float) -> tuple[float, float]:
    """(bound / F, 10 log10(bound / F))."""
    if not fisher_exact > 0:
        raise NonPositiveFisher(f"exact Fisher information must be positive, got {fisher_exact}")
    chi = bound / fisher_exact
    chi_db = 10.0 * math.log10(chi) if chi > 0 else -math.inf
    return chi, chi_db


def bound_curve(
    profile: MomentProfile,
    exact_fisher: Callable[[float], float] | None = None,
    workers: int = 1,
) -> list[BoundReport]:
    """One :class:`BoundReport` per grid point, in grid order."""

    def one(i: int) -> BoundReport:
        pt = profile.point(i)
        try:
            f = exact_fisher(pt.theta) if exact_fisher is not None else None
            return strong_bound(pt, f)
        except FisherBoundError as e:
            e.op = e.op or "strong_bound"
            e.theta = pt.theta
            e.args = (f"grid index {i}: {e.args[0]}",) + e.args[1:]
            raise

    idx = range(len(profile))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, idx))
    return [one(i) for i in idx]


def point_from(mu: Sequence[float], dmu: Sequence[float], cov, theta: float = float("nan")) -> ProfilePoint:
    return ProfilePoint(float(theta), np.asarray(mu, float), np.asarray(dmu, float), np.asarray(cov, float))
