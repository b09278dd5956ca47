"""Reference exponential-family models with closed-form moments.

Every model factorizes as ``log p(z; theta) = w(theta) . t(z) - lam(theta) + kappa(z)``.
Terms free of theta (including constants) are put in ``kappa``; terms free
of z go to ``lam``. The split is a convention, chosen so that the
reconstruction of the log density is well defined.

Besides the factorization each model exposes ``expect_monomial``, the
closed form of ``E[z**p * log(z)**a]`` and its theta-derivative. Every
auxiliary statistic used by the bound machinery is such a monomial, so
means and covariances of statistic vectors follow without integration.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import polygamma

from .errors import (
    InfeasibleMoments,
    MomentOverflow,
    NonPositiveVariance,
    OutOfSupport,
    UnsupportedStatistic,
)
from .numkit import central_diff

MAX_RAW_ORDER = 8
_FEASIBILITY_TOL = 1e-9


@dataclass(frozen=True)
class MomentSet:
    """Mean, variance, normalized 3rd/4th central moments and two derivatives."""

    mu1: float
    mu2: float
    mu3bar: float
    mu4bar: float
    dmu1: float
    dmu2: float

    def __post_init__(self):
        if not self.mu2 > 0:
            raise NonPositiveVariance(f"mu2 must be positive, got {self.mu2}")
        if self.mu4bar < 1.0 + self.mu3bar**2 - _FEASIBILITY_TOL:
            raise InfeasibleMoments(
                f"mu4bar={self.mu4bar} < 1 + mu3bar^2={1 + self.mu3bar**2}"
            )

    @classmethod
    def from_raw(cls, raw, draw) -> "MomentSet":
        """Build from raw moments E[z^l], l=1..4, and their theta-derivatives."""
        r1, r2, r3, r4 = raw[:4]
        mu2 = r2 - r1**2
        c3 = r3 - 3 * r1 * r2 + 2 * r1**3
        c4 = r4 - 4 * r1 * r3 + 6 * r1**2 * r2 - 3 * r1**4
        return cls(
            mu1=r1,
            mu2=mu2,
            mu3bar=c3 / mu2**1.5,
            mu4bar=c4 / mu2**2,
            dmu1=draw[0],
            dmu2=draw[1] - 2 * r1 * draw[0],
        )


def gaussian_raw_moment(mean: float, var: float, n: int) -> float:
    """E[X^n] for X ~ N(mean, var)."""
    if n < 0:
        raise ValueError("order must be non-negative")
    total = 0.0
    for j in range(0, n + 1, 2):
        # (j-1)!! for even j
        dfact = math.prod(range(j - 1, 0, -2)) if j > 0 else 1
        total += math.comb(n, j) * mean ** (n - j) * var ** (j // 2) * dfact
    return total


def _gamma_derivatives(x: float, order: int) -> list[float]:
    """[Gamma(x), Gamma'(x), ..., Gamma^(order)(x)] via Gamma' = Gamma * psi."""
    psi = [float(polygamma(j, x)) for j in range(order)]
    out = [math.gamma(x)]
    for m in range(order):
        out.append(sum(math.comb(m, j) * out[m - j] * psi[j] for j in range(m + 1)))
    return out


class ExpFamilyModel(ABC):
    """Univariate reference model ``p(z; theta)`` in exponential-family form."""

    name: str
    support: tuple[float, float]
    parameter_space: tuple[float, float]
    base_kind: str  # "normal" or "uniform": the driving noise used by ``transform``

    # -- factorization ---------------------------------------------------
    @abstractmethod
    def natural_params(self, theta: float) -> np.ndarray: ...

    @abstractmethod
    def dnatural_params(self, theta: float) -> np.ndarray: ...

    @abstractmethod
    def sufficient_stats(self, z) -> np.ndarray:
        """Shape ``(..., L)``."""

    @abstractmethod
    def log_normalizer(self, theta: float) -> float: ...

    @abstractmethod
    def carrier(self, z): ...

    @abstractmethod
    def mean_sufficient(self, theta: float) -> np.ndarray: ...

    @abstractmethod
    def dmean_sufficient(self, theta: float) -> np.ndarray: ...

    # -- density ---------------------------------------------------------
    def logpdf(self, z, theta: float):
        z = np.asarray(z, dtype=float)
        inside = self._in_support(z)
        zz = np.where(inside, z, self._interior_point())
        val = (
            self.sufficient_stats(zz) @ self.natural_params(theta)
            - self.log_normalizer(theta)
            + self.carrier(zz)
        )
        return np.where(inside, val, -np.inf)

    def pdf(self, z, theta: float):
        return np.exp(self.logpdf(z, theta))

    @abstractmethod
    def score(self, z, theta: float): ...

    @abstractmethod
    def fisher(self, theta: float) -> float: ...

    # -- moments ---------------------------------------------------------
    @abstractmethod
    def expect_monomial(self, theta: float, power: int, log_power: int = 0) -> tuple[float, float]:
        """``(E[z^power * ln(z)^log_power], d/dtheta of it)``."""

    def raw_moment(self, theta: float, l: int) -> float:
        return self.expect_monomial(theta, l)[0]

    def moment_set(self, theta: float) -> MomentSet:
        pairs = [self.expect_monomial(theta, l) for l in range(1, 5)]
        return MomentSet.from_raw([p[0] for p in pairs], [p[1] for p in pairs])

    # -- sampling --------------------------------------------------------
    def base_draws(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.base_kind == "normal":
            return rng.standard_normal(n)
        # open interval (0, 1): random() returns k / 2**53
        return (np.floor(rng.random(n) * 2.0**53) + 0.5) / 2.0**53

    @abstractmethod
    def transform(self, theta: float, base: np.ndarray) -> np.ndarray: ...

    def sample(self, theta: float, n: int, seed: int) -> np.ndarray:
        if n < 1:
            raise ValueError("n must be >= 1")
        rng = np.random.default_rng(seed)
        return self.transform(theta, self.base_draws(rng, n))

    # -- helpers ---------------------------------------------------------
    def _in_support(self, z):
        lo, hi = self.support
        return (z > lo) & (z < hi) if math.isfinite(lo) else (z < hi)

    def _interior_point(self) -> float:
        return 1.0

    def _check_support(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if not np.all(self._in_support(z)):
            raise OutOfSupport(f"{self.name}: z outside support {self.support}")
        return z


class LogNormal(ExpFamilyModel):
    """Log-normal with known scale ``sigma`` and location ``theta`` of ln z.

    t(z) = ln z, w = theta / sigma^2, lam = theta^2 / (2 sigma^2),
    kappa = -ln(z) - ln(z)^2 / (2 sigma^2) - ln(2 pi sigma^2) / 2.
    """

    support = (0.0, math.inf)
    parameter_space = (-math.inf, math.inf)
    base_kind = "normal"

    def __init__(self, sigma: float):
        if not sigma > 0:
            raise ValueError("sigma must be positive")
        self.sigma = float(sigma)
        self.name = "lognormal"

    def __repr__(self):
        return f"LogNormal(sigma={self.sigma!r})"

    def natural_params(self, theta):
        return np.array([theta / self.sigma**2])

    def dnatural_params(self, theta):
        return np.array([1.0 / self.sigma**2])

    def sufficient_stats(self, z):
        z = self._check_support(z)
        return np.log(z)[..., None]

    def log_normalizer(self, theta):
        return theta**2 / (2 * self.sigma**2)

    def carrier(self, z):
        lz = np.log(z)
        s2 = self.sigma**2
        return -lz - lz**2 / (2 * s2) - 0.5 * math.log(2 * math.pi * s2)

    def mean_sufficient(self, theta):
        return np.array([float(theta)])

    def dmean_sufficient(self, theta):
        return np.array([1.0])

    def score(self, z, theta):
        return (np.log(z) - theta) / self.sigma**2

    def fisher(self, theta=None):
        return lognormal_fisher(self.sigma)

    def expect_monomial(self, theta, power, log_power=0):
        s2 = self.sigma**2
        expo = power * theta + 0.5 * power**2 * s2
        scale = math.exp(expo) if expo < 709.0 else math.inf
        if not math.isfinite(scale):
            raise MomentOverflow(f"E[z^{power}] overflows", op="expect_monomial", theta=theta)
        m = theta + power * s2
        g = gaussian_raw_moment(m, s2, log_power)
        dg = log_power * gaussian_raw_moment(m, s2, log_power - 1) if log_power else 0.0
        return scale * g, scale * (power * g + dg)

    def moment_set(self, theta):
        e = math.exp(self.sigma**2)
        mu1 = math.exp(theta + 0.5 * self.sigma**2)
        mu2 = math.exp(2 * theta + self.sigma**2) * (e - 1)
        return MomentSet(
            mu1=mu1,
            mu2=mu2,
            mu3bar=math.sqrt(e - 1) * (e + 2),
            mu4bar=3 * e**2 + 2 * e**3 + e**4 - 3,
            dmu1=mu1,
            dmu2=2 * mu2,
        )

    def transform(self, theta, base):
        return np.exp(theta + self.sigma * np.asarray(base))


class Weibull(ExpFamilyModel):
    """Weibull with known shape ``k`` and scale ``theta``.

    t(z) = z^k, w = -theta^-k, lam = k ln theta, kappa = ln k + (k-1) ln z.
    """

    support = (0.0, math.inf)
    parameter_space = (0.0, math.inf)
    base_kind = "uniform"

    def __init__(self, k: float):
        if not k > 0:
            raise ValueError("shape k must be positive")
        self.k = float(k)
        self.name = "weibull"

    def __repr__(self):
        return f"Weibull(k={self.k!r})"

    def natural_params(self, theta):
        return np.array([-(theta ** -self.k)])

    def dnatural_params(self, theta):
        return np.array([self.k * theta ** (-self.k - 1)])

    def sufficient_stats(self, z):
        z = self._check_support(z)
        return (z**self.k)[..., None]

    def log_normalizer(self, theta):
        return self.k * math.log(theta)

    def carrier(self, z):
        return math.log(self.k) + (self.k - 1) * np.log(z)

    def mean_sufficient(self, theta):
        return np.array([theta**self.k])

    def dmean_sufficient(self, theta):
        return np.array([self.k * theta ** (self.k - 1)])

    def score(self, z, theta):
        return (self.k / theta) * ((np.asarray(z) / theta) ** self.k - 1.0)

    def fisher(self, theta):
        return weibull_fisher(self.k, theta)

    def expect_monomial(self, theta, power, log_power=0):
        if not theta > 0:
            raise OutOfSupport("Weibull scale must be positive", theta=theta)
        k = self.k
        try:
            gd = _gamma_derivatives(1.0 + power / k, log_power)
        except OverflowError:
            raise MomentOverflow(f"Gamma(1 + {power}/k) overflows", op="expect_monomial", theta=theta) from None
        lt = math.log(theta)
        tp = theta**power
        val = 0.0
        dval = 0.0
        for j in range(log_power + 1):
            c = math.comb(log_power, j) * k**-j * gd[j]
            p = log_power - j
            val += c * tp * lt**p
            dval += c * theta ** (power - 1) * (power * lt**p + (p * lt ** (p - 1) if p else 0.0))
        if not (math.isfinite(val) and math.isfinite(dval)):
            raise MomentOverflow(f"E[z^{power}] overflows", op="expect_monomial", theta=theta)
        return val, dval

    def transform(self, theta, base):
        return theta * (-np.log(np.asarray(base))) ** (1.0 / self.k)


@dataclass(frozen=True)
class ParametricGaussian(ExpFamilyModel):
    """N(mu(theta), var(theta)) with user-supplied mean/variance and derivatives.

    t(z) = (z, z^2), w = (mu/var, -1/(2 var)),
    lam = mu^2/(2 var) + ln(2 pi var)/2, kappa = 0.
    ``ln(2 pi var)`` stays in lam because var generally depends on theta.
    """

    mu_fn: Callable[[float], float]
    dmu_fn: Callable[[float], float]
    var_fn: Callable[[float], float]
    dvar_fn: Callable[[float], float]
    name: str = "gaussian"
    fixed_params: dict = field(default_factory=dict)

    support = (-math.inf, math.inf)
    parameter_space = (-math.inf, math.inf)
    base_kind = "normal"

    def _var(self, theta):
        v = self.var_fn(theta)
        if not v > 0:
            raise NonPositiveVariance(f"var(theta)={v}", theta=theta)
        return v

    def natural_params(self, theta):
        v = self._var(theta)
        return np.array([self.mu_fn(theta) / v, -0.5 / v])

    def dnatural_params(self, theta):
        v, dv = self._var(theta), self.dvar_fn(theta)
        mu, dmu = self.mu_fn(theta), self.dmu_fn(theta)
        return np.array([dmu / v - mu * dv / v**2, 0.5 * dv / v**2])

    def sufficient_stats(self, z):
        z = np.asarray(z, dtype=float)
        return np.stack([z, z**2], axis=-1)

    def log_normalizer(self, theta):
        v = self._var(theta)
        return self.mu_fn(theta) ** 2 / (2 * v) + 0.5 * math.log(2 * math.pi * v)

    def carrier(self, z):
        return np.zeros_like(np.asarray(z, dtype=float))

    def mean_sufficient(self, theta):
        mu = self.mu_fn(theta)
        return np.array([mu, self._var(theta) + mu**2])

    def dmean_sufficient(self, theta):
        mu, dmu = self.mu_fn(theta), self.dmu_fn(theta)
        return np.array([dmu, self.dvar_fn(theta) + 2 * mu * dmu])

    def score(self, z, theta):
        v, dv = self._var(theta), self.dvar_fn(theta)
        r = np.asarray(z, dtype=float) - self.mu_fn(theta)
        return -dv / (2 * v) + r * self.dmu_fn(theta) / v + r**2 * dv / (2 * v**2)

    def fisher(self, theta):
        return gaussian_identity_fisher(self.mu_fn, self.dmu_fn, self.var_fn, self.dvar_fn, theta)

    def expect_monomial(self, theta, power, log_power=0):
        if log_power:
            raise UnsupportedStatistic(
                "log statistics have no closed form under a Gaussian model", theta=theta
            )
        mu, v = self.mu_fn(theta), self._var(theta)
        val = gaussian_raw_moment(mu, v, power)
        # dE/dmu = n E_{n-1}, dE/dvar = n(n-1)/2 E_{n-2}
        dm = power * gaussian_raw_moment(mu, v, power - 1) if power >= 1 else 0.0
        dv = power * (power - 1) / 2 * gaussian_raw_moment(mu, v, power - 2) if power >= 2 else 0.0
        return val, dm * self.dmu_fn(theta) + dv * self.dvar_fn(theta)

    def moment_set(self, theta):
        return MomentSet(
            mu1=self.mu_fn(theta),
            mu2=self._var(theta),
            mu3bar=0.0,
            mu4bar=3.0,
            dmu1=self.dmu_fn(theta),
            dmu2=self.dvar_fn(theta),
        )

    def transform(self, theta, base):
        return self.mu_fn(theta) + math.sqrt(self._var(theta)) * np.asarray(base)

    def _in_support(self, z):
        return np.isfinite(z)


def gaussian_location(var: float = 1.0) -> ParametricGaussian:
    """N(theta, var): the classical location family, F = 1/var."""
    if not var > 0:
        raise NonPositiveVariance(f"var={var}")
    return ParametricGaussian(
        mu_fn=lambda t: t,
        dmu_fn=lambda t: 1.0,
        var_fn=lambda t: var,
        dvar_fn=lambda t: 0.0,
        name="gaussian",
        fixed_params={"var": float(var)},
    )


# -- closed forms ------------------------------------------------------------


def lognormal_raw_moment(sigma: float, theta: float, l: int) -> float:
    """E[z^l] = exp(l theta + l^2 sigma^2 / 2)."""
    _check_order(l)
    try:
        return math.exp(l * theta + 0.5 * l**2 * sigma**2)
    except OverflowError:
        raise MomentOverflow(f"lognormal raw moment of order {l} overflows", theta=theta) from None


def lognormal_fisher(sigma: float) -> float:
    return 1.0 / sigma**2


def weibull_raw_moment(k: float, theta: float, l: int) -> float:
    """E[z^l] = theta^l Gamma(1 + l/k)."""
    _check_order(l)
    try:
        val = theta**l * math.gamma(1.0 + l / k)
    except OverflowError:
        raise MomentOverflow(f"Weibull raw moment of order {l} overflows", theta=theta) from None
    if not math.isfinite(val):
        raise MomentOverflow(f"Weibull raw moment of order {l} overflows", theta=theta)
    return val


def weibull_fisher(k: float, theta: float) -> float:
    return (k / theta) ** 2


def gaussian_identity_fisher(mu_fn, dmu_fn, var_fn, dvar_fn, theta: float) -> float:
    """F = mu'^2 / var + var'^2 / (2 var^2) for N(mu(theta), var(theta))."""
    v = var_fn(theta)
    if not v > 0:
        raise NonPositiveVariance(f"var(theta)={v}", theta=theta)
    return dmu_fn(theta) ** 2 / v + dvar_fn(theta) ** 2 / (2 * v**2)


def _check_order(l: int) -> None:
    if not 1 <= l <= MAX_RAW_ORDER:
        raise ValueError(f"moment order must be in 1..{MAX_RAW_ORDER}, got {l}")


def natural_params(model: ExpFamilyModel, theta: float) -> np.ndarray:
    return model.natural_params(theta)


def sufficient_stats(model: ExpFamilyModel, z) -> np.ndarray:
    return model.sufficient_stats(z)


def fisher_identity(model: ExpFamilyModel, theta: float, h: float | None = None) -> float:
    """Fisher information as sum_l dE[t_l]/dtheta * dw_l/dtheta.

    With ``h=None`` the model's closed-form derivatives are used; otherwise
    both derivative vectors are taken by central differences with step ``h``.
    """
    if h is None:
        dmean = model.dmean_sufficient(theta)
        dw = model.dnatural_params(theta)
    else:
        L = model.mean_sufficient(theta).size
        dmean = np.array(
            [central_diff(lambda t, i=i: model.mean_sufficient(t)[i], theta, h) for i in range(L)]
        )
        dw = np.array(
            [central_diff(lambda t, i=i: model.natural_params(t)[i], theta, h) for i in range(L)]
        )
    return float(dmean @ dw)


def sample(model: ExpFamilyModel, theta: float, n: int, seed: int) -> np.ndarray:
    return model.sample(theta, n, seed)
