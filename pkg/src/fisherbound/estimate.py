"""Conservative maximum-likelihood estimation from compressed observations.

Raw data are reduced once to the sample means of the auxiliary statistics
(:func:`compress`). The estimator then solves the replacement-model score
equation ``b(theta)^T (phi_bar - mu(theta)) = 0`` using only that summary;
:func:`cmle_solve` accepts nothing but a :class:`CompressedSample`.
"""

from __future__ import annotations

import csv
import functools
import io
import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .bounds import strong_bound
from .calibrate import BlackBoxSystem, stream
from .errors import (
    EmptyData,
    FisherBoundError,
    MultipleRootsWarning,
    NoRootInBracket,
    OutOfGrid,
    TrialFailure,
)
from .expfam import ExpFamilyModel
from .numkit import factor_spd
from .profile import MomentProfile, ProfilePoint, StatisticSpec, closed_form_point, evaluate_stats

log = logging.getLogger(__name__)

SCAN_POINTS = 256
XTOL_REL = 1e-10
MAX_FAILURE_FRACTION = 0.01


@dataclass(frozen=True)
class CompressedSample:
    stats: tuple[StatisticSpec, ...]
    phi_bar: np.ndarray
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise EmptyData("compressed sample must summarize at least one observation")
        if not np.all(np.isfinite(self.phi_bar)):
            raise FisherBoundError("phi_bar has non-finite entries", op="compress")


def compress(data, stats: Sequence[StatisticSpec]) -> CompressedSample:
    data = np.asarray(data, dtype=float).ravel()
    if data.size == 0:
        raise EmptyData("no data to compress")
    phi_bar = evaluate_stats(stats, data).mean(axis=0)
    return CompressedSample(tuple(stats), phi_bar, int(data.size))


# -- moment sources --------------------------------------------------------------


class MomentSource(Protocol):
    stats: tuple[StatisticSpec, ...]

    def point(self, theta: float) -> ProfilePoint: ...

    def mean(self, theta: float) -> np.ndarray: ...


@dataclass(frozen=True)
class ClosedFormSource:
    """Exact moments of a reference model."""

    model: ExpFamilyModel
    stats: tuple[StatisticSpec, ...]

    def point(self, theta: float) -> ProfilePoint:
        return closed_form_point(self.model, self.stats, theta)

    def mean(self, theta: float) -> np.ndarray:
        positive = self.model.support[0] >= 0
        return np.array(
            [self.model.expect_monomial(theta, *s.monomial(positive))[0] for s in self.stats]
        )

    def default_bracket(self, theta_hint: float) -> tuple[float, float]:
        lo, hi = self.model.parameter_space
        if lo >= 0 and theta_hint > 0:
            return max(lo, theta_hint / 10), min(hi, theta_hint * 10)
        width = 10.0 * max(1.0, abs(theta_hint))
        return max(lo, theta_hint - width), min(hi, theta_hint + width)


@dataclass(frozen=True)
class ProfileSource:
    """Moments linearly interpolated between the grid points of a profile.

    Interpolated covariances may lose definiteness mid-segment; the SPD
    factorization repairs that with jitter.
    """

    profile: MomentProfile

    @property
    def stats(self) -> tuple[StatisticSpec, ...]:
        return self.profile.stats

    def mean(self, theta: float) -> np.ndarray:
        return self.point(theta).mu

    def point(self, theta: float) -> ProfilePoint:
        grid = self.profile.theta_grid
        if not grid[0] <= theta <= grid[-1]:
            raise OutOfGrid(f"theta outside profile range [{grid[0]}, {grid[-1]}]", theta=theta)
        j = int(np.searchsorted(grid, theta, side="right")) - 1
        j = min(max(j, 0), len(grid) - 2) if len(grid) > 1 else 0
        if len(grid) == 1:
            return self.profile.point(0)
        t = (theta - grid[j]) / (grid[j + 1] - grid[j])
        p = self.profile

        def lerp(a):
            return (1 - t) * a[j] + t * a[j + 1]

        return ProfilePoint(float(theta), lerp(p.mu), lerp(p.dmu), lerp(p.cov))

    def default_bracket(self, theta_hint: float | None = None) -> tuple[float, float]:
        return float(self.profile.theta_grid[0]), float(self.profile.theta_grid[-1])


def optimal_weight_fn(source: MomentSource) -> Callable[[float], np.ndarray]:
    """theta -> b*(theta) = R^-1 dmu / sqrt(dmu^T R^-1 dmu); b*^T dmu > 0 by construction."""

    def b_star(theta: float) -> np.ndarray:
        pt = source.point(theta)
        rinv = factor_spd(pt.cov).solve(pt.dmu)
        j = float(pt.dmu @ rinv)
        return rinv / math.sqrt(j)

    return b_star


def ones_weight_fn(source: MomentSource) -> Callable[[float], np.ndarray]:
    L = len(source.stats)
    return lambda theta: np.ones(L)


def mu_fn_of(source: MomentSource) -> Callable[[float], np.ndarray]:
    return source.mean


# -- root solve and GMM form -------------------------------------------------------


@dataclass
class SolveInfo:
    iterations: int
    sign_changes: int
    flagged: bool = False
    bracket: tuple[float, float] = (math.nan, math.nan)


def _score(sample: CompressedSample, mu_fn, weight_fn, theta: float) -> float:
    return float(weight_fn(theta) @ (sample.phi_bar - mu_fn(theta)))


def gmm_objective(theta: float, sample: CompressedSample, mu_fn, d_matrix_fn) -> float:
    """(phi_bar - mu)^T D (phi_bar - mu) with moment condition phi(z) - mu(theta)."""
    r = sample.phi_bar - mu_fn(theta)
    return float(r @ np.asarray(d_matrix_fn(theta)) @ r)


def rank_one(weight_fn) -> Callable[[float], np.ndarray]:
    """D(theta) = b(theta) b(theta)^T; with b* this is the optimal GMM weighting."""

    def d(theta):
        b = weight_fn(theta)
        return np.outer(b, b)

    return d


def gmm_minimize(
    sample: CompressedSample,
    mu_fn,
    d_matrix_fn,
    theta_bracket: tuple[float, float],
    scan: int = SCAN_POINTS,
) -> float:
    """Global minimizer of the GMM objective: grid scan then bounded Brent polish."""
    lo, hi = theta_bracket
    grid = np.linspace(lo, hi, scan)
    vals = np.array([gmm_objective(t, sample, mu_fn, d_matrix_fn) for t in grid])
    i = int(np.argmin(vals))
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, scan - 1)]
    res = minimize_scalar(
        lambda t: gmm_objective(t, sample, mu_fn, d_matrix_fn),
        bounds=(a, b),
        method="bounded",
        options={"xatol": 1e-13 * max(1.0, abs(grid[i])), "maxiter": 500},
    )
    return float(res.x) if res.fun <= vals[i] else float(grid[i])


def cmle_solve(
    sample: CompressedSample,
    mu_fn: Callable[[float], np.ndarray],
    weight_fn: Callable[[float], np.ndarray],
    theta_bracket: tuple[float, float],
    full_output: bool = False,
    scan: int = SCAN_POINTS,
):
    """Root of g(theta) = b(theta)^T (phi_bar - mu(theta)) inside ``theta_bracket``.

    A ``scan``-point sweep locates sign changes; each bracketing cell is then
    refined with Brent's method (bisection safeguarded secant / inverse
    quadratic steps) to relative tolerance 1e-10. With several sign changes
    the root nearest the scan-grid minimizer of g^2 is returned and a
    :class:`MultipleRootsWarning` is issued.

    Returns ``theta_hat``, or ``(theta_hat, SolveInfo)`` if ``full_output``.
    """
    lo, hi = map(float, theta_bracket)
    if not hi > lo:
        raise ValueError(f"empty bracket {theta_bracket}")
    grid = np.linspace(lo, hi, scan)
    g = np.array([_score(sample, mu_fn, weight_fn, t) for t in grid])
    if not np.all(np.isfinite(g)):
        raise FisherBoundError("score is not finite on the bracket", op="cmle_solve")
    exact = np.flatnonzero(g == 0)
    cells = np.flatnonzero(np.sign(g[:-1]) * np.sign(g[1:]) < 0)
    changes = len(cells) + len(exact)
    info = SolveInfo(iterations=0, sign_changes=changes, bracket=(lo, hi))
    if changes == 0:
        tol = 1e-10 * (1.0 + np.max(np.abs(g)))
        k = int(np.argmin(np.abs(g)))
        if abs(g[k]) < tol:
            theta = float(grid[k])
            return (theta, info) if full_output else theta
        raise NoRootInBracket(
            "score does not change sign on the bracket", g_lo=float(g[0]), g_hi=float(g[-1]), op="cmle_solve"
        )

    def refine(c: int) -> tuple[float, int]:
        root, r = brentq(
            lambda t: _score(sample, mu_fn, weight_fn, t),
            grid[c],
            grid[c + 1],
            xtol=1e-300,
            rtol=XTOL_REL,
            maxiter=200,
            full_output=True,
        )
        return float(root), r.iterations

    if changes == 1:
        if len(exact):
            theta, its = float(grid[exact[0]]), 0
        else:
            theta, its = refine(int(cells[0]))
    else:
        info.flagged = True
        target = grid[int(np.argmin(g**2))]
        candidates = [(float(grid[e]), 0) for e in exact] + [refine(int(c)) for c in cells]
        theta, its = min(candidates, key=lambda r: abs(r[0] - target))
        warnings.warn(
            f"{changes} sign changes of the score on [{lo}, {hi}]; returning root nearest {target:.6g}",
            MultipleRootsWarning,
            stacklevel=2,
        )
    info.iterations = its
    return (theta, info) if full_output else theta


# -- asymptotic harness -------------------------------------------------------------


@dataclass
class EstimationReport:
    estimates: np.ndarray
    iterations: np.ndarray
    n_per_trial: int
    trials: int
    theta_true: float
    empirical_var: float
    predicted_var: float
    bias: float
    flagged: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))
    failures: dict = field(default_factory=dict)

    @property
    def ratio(self) -> float:
        """empirical_var / predicted_var."""
        return self.empirical_var / self.predicted_var

    def to_csv(self) -> str:
        """Per-trial table, a blank line, then the one-row summary table."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["trial", "theta_hat", "iterations"])
        for i, (t, it) in enumerate(zip(self.estimates, self.iterations)):
            w.writerow([i, _fmt(t), int(it)])
        buf.write("\n")
        w.writerow(["bias", "empirical_var", "predicted_var", "ratio"])
        w.writerow([_fmt(self.bias), _fmt(self.empirical_var), _fmt(self.predicted_var), _fmt(self.ratio)])
        return buf.getvalue()


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def predicted_variance(pt: ProfilePoint, n: int, weights: np.ndarray | None = None) -> float:
    """Asymptotic variance of the CMLE.

    Optimal weights: 1 / (N dmu^T R^-1 dmu). Arbitrary weights b:
    b^T R b / (N (dmu^T b)^2).
    """
    if weights is None:
        return 1.0 / (n * strong_bound(pt).bound)
    b = np.asarray(weights, dtype=float)
    return float(b @ pt.cov @ b) / (n * float(pt.dmu @ b) ** 2)


def asymptotic_check(
    source,
    theta_true: float,
    stats: Sequence[StatisticSpec],
    n_per_trial: int,
    trials: int,
    seed: int,
    weights: str | Callable[[MomentSource], Callable[[float], np.ndarray]] = "optimal",
    system: BlackBoxSystem | None = None,
    theta_bracket: tuple[float, float] | None = None,
    workers: int = 1,
) -> EstimationReport:
    """Repeat draw -> compress -> solve ``trials`` times and compare to theory.

    ``source`` is either an :class:`ExpFamilyModel` (exact moments, data drawn
    from the model) or a :class:`MomentProfile` together with the
    ``system`` that generates data. Trial ``i`` uses ``stream(seed, i)``.
    """
    stats = tuple(stats)
    if trials < 2:
        raise ValueError("need at least two trials for a variance")
    if isinstance(source, ExpFamilyModel):
        msrc = ClosedFormSource(source, stats)
        draw = lambda rng: source.transform(theta_true, source.base_draws(rng, n_per_trial))  # noqa: E731
        bracket = theta_bracket or msrc.default_bracket(theta_true)
    elif isinstance(source, MomentProfile):
        if system is None:
            raise ValueError("a calibrated profile needs the system that generates the data")
        if tuple(source.stats) != stats:
            raise ValueError("profile statistics differ from the requested statistics")
        msrc = ProfileSource(source)
        draw = lambda rng: system.sample(theta_true, n_per_trial, rng)  # noqa: E731
        bracket = theta_bracket or msrc.default_bracket()
    else:
        raise TypeError(f"unsupported moment source {type(source).__name__}")

    if weights == "optimal":
        weight_fn = optimal_weight_fn(msrc)
    elif weights == "ones":
        weight_fn = ones_weight_fn(msrc)
    elif callable(weights):
        weight_fn = weights(msrc)
    else:
        raise ValueError(f"unknown weights {weights!r}")
    mu_fn = mu_fn_of(msrc)
    # every trial scans the same grid, so moments and weights repeat
    solve_mu = functools.lru_cache(maxsize=8192)(mu_fn)
    solve_w = functools.lru_cache(maxsize=8192)(weight_fn)

    def one(i: int):
        rng = stream(seed, i)
        sample = compress(draw(rng), stats)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", MultipleRootsWarning)
            theta, info = cmle_solve(sample, solve_mu, solve_w, bracket, full_output=True)
        return theta, info.iterations, info.flagged or bool(caught)

    def safe(i: int):
        try:
            return one(i)
        except FisherBoundError as e:
            return e

    idx = range(trials)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(safe, idx))
    else:
        results = [safe(i) for i in idx]

    failures = {i: str(r) for i, r in enumerate(results) if isinstance(r, Exception)}
    if len(failures) > MAX_FAILURE_FRACTION * trials:
        raise TrialFailure(f"{len(failures)} of {trials} trials failed", failures)
    ok = [r for r in results if not isinstance(r, Exception)]
    est = np.array([r[0] for r in ok])
    pt = msrc.point(theta_true)
    pred = predicted_variance(pt, n_per_trial, None if weights == "optimal" else weight_fn(theta_true))
    return EstimationReport(
        estimates=est,
        iterations=np.array([r[1] for r in ok], dtype=int),
        n_per_trial=n_per_trial,
        trials=trials,
        theta_true=float(theta_true),
        empirical_var=float(np.var(est, ddof=1)),
        predicted_var=float(pred),
        bias=float(est.mean() - theta_true),
        flagged=np.array([r[2] for r in ok], dtype=bool),
        failures=failures,
    )
