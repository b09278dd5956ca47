"""Auxiliary statistics and per-theta moment profiles."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import DimensionMismatch, FormatError, NonFinite, OutOfSupport, UnsupportedStatistic
from .expfam import ExpFamilyModel
from .numkit import factor_spd

log = logging.getLogger(__name__)

_TINY_LOG = float(np.log(np.finfo(float).tiny))

KINDS = ("power", "abs", "log_abs", "log", "log_squared")
_LABELS = {"abs": "abs", "log_abs": "logabs", "log": "log", "log_squared": "log2"}
_POW_RE = re.compile(r"^pow([1-8])$")


@dataclass(frozen=True)
class StatisticSpec:
    """One auxiliary statistic phi(z).

    ``power`` is only meaningful for ``kind="power"`` (exponent 1..8).
    ``log`` and ``log_squared`` require z > 0; ``log_abs`` clamps exact zeros
    to ln(smallest normal float).
    """

    kind: str
    power: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown statistic kind {self.kind!r}")
        if self.kind == "power" and not 1 <= self.power <= 8:
            raise ValueError(f"power exponent must be in 1..8, got {self.power}")
        if self.kind != "power" and self.power != 0:
            raise ValueError(f"{self.kind} takes no exponent")

    @property
    def label(self) -> str:
        return f"pow{self.power}" if self.kind == "power" else _LABELS[self.kind]

    @classmethod
    def parse(cls, label: str) -> "StatisticSpec":
        label = label.strip()
        m = _POW_RE.match(label)
        if m:
            return cls("power", int(m.group(1)))
        for kind, lab in _LABELS.items():
            if lab == label:
                return cls(kind)
        raise ValueError(f"unknown statistic label {label!r}")

    def __call__(self, z) -> np.ndarray:
        return self.evaluate(z)

    def evaluate(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if self.kind == "power":
            return z**self.power
        if self.kind == "abs":
            return np.abs(z)
        if self.kind == "log_abs":
            a = np.abs(z)
            zero = a == 0
            if np.any(zero):
                log.warning("logabs: %d exact zero(s) clamped", int(np.count_nonzero(zero)))
                return np.where(zero, _TINY_LOG, np.log(np.where(zero, 1.0, a)))
            return np.log(a)
        if np.any(z <= 0):
            raise OutOfSupport(f"{self.label} needs strictly positive data")
        lz = np.log(z)
        return lz if self.kind == "log" else lz**2

    def monomial(self, positive_support: bool) -> tuple[int, int]:
        """``(p, a)`` with phi(z) = z^p ln(z)^a on the model support."""
        if self.kind == "power":
            return self.power, 0
        if not positive_support:
            raise UnsupportedStatistic(
                f"{self.label} has no closed form on a support including z <= 0"
            )
        return {"abs": (1, 0), "log_abs": (0, 1), "log": (0, 1), "log_squared": (0, 2)}[self.kind]


def parse_stats(text: str | Iterable[str]) -> tuple[StatisticSpec, ...]:
    labels = text.split(",") if isinstance(text, str) else list(text)
    specs = tuple(StatisticSpec.parse(s) for s in labels if s.strip())
    if not specs:
        raise ValueError("empty statistic list")
    return specs


def powers(L: int) -> tuple[StatisticSpec, ...]:
    return tuple(StatisticSpec("power", l) for l in range(1, L + 1))


def evaluate_stats(stats: Sequence[StatisticSpec], z) -> np.ndarray:
    """Matrix of statistics, shape ``(len(z), L)``."""
    z = np.asarray(z, dtype=float)
    return np.stack([s.evaluate(z) for s in stats], axis=-1)


class ProfilePoint(NamedTuple):
    theta: float
    mu: np.ndarray
    dmu: np.ndarray
    cov: np.ndarray


@dataclass
class MomentProfile:
    """mu_phi, d mu_phi / d theta and R_phi on a theta grid.

    Arrays: ``mu`` and ``dmu`` are ``(G, L)``, ``cov`` is ``(G, L, L)``,
    ``jitter`` is ``(G,)``. ``provenance`` is ``{"kind": "closed_form"}`` or
    ``{"kind": "monte_carlo", "samples", "seed", "diff_step", "crn"}``.
    """

    theta_grid: np.ndarray
    stats: tuple[StatisticSpec, ...]
    mu: np.ndarray
    dmu: np.ndarray
    cov: np.ndarray
    provenance: dict = field(default_factory=lambda: {"kind": "closed_form"})
    jitter: np.ndarray | None = None

    def __post_init__(self):
        self.theta_grid = np.asarray(self.theta_grid, dtype=float)
        self.stats = tuple(self.stats)
        self.mu = np.asarray(self.mu, dtype=float)
        self.dmu = np.asarray(self.dmu, dtype=float)
        self.cov = np.asarray(self.cov, dtype=float)
        G, L = self.theta_grid.size, len(self.stats)
        if self.jitter is None:
            self.jitter = np.zeros(G)
        self.jitter = np.asarray(self.jitter, dtype=float)
        if self.mu.shape != (G, L) or self.dmu.shape != (G, L) or self.cov.shape != (G, L, L):
            raise DimensionMismatch(
                f"profile arrays do not match G={G}, L={L}: "
                f"mu{self.mu.shape} dmu{self.dmu.shape} cov{self.cov.shape}"
            )
        if self.jitter.shape != (G,):
            raise DimensionMismatch("jitter must have one entry per grid point")
        if G > 1 and np.any(np.diff(self.theta_grid) <= 0):
            i = int(np.argmax(np.diff(self.theta_grid) <= 0)) + 1
            raise FormatError(f"theta grid not strictly increasing at index {i}")
        for arr, name in ((self.mu, "mu"), (self.dmu, "dmu"), (self.cov, "cov")):
            if not np.all(np.isfinite(arr)):
                raise NonFinite(f"profile {name} has non-finite entries")

    def __len__(self) -> int:
        return self.theta_grid.size

    @property
    def labels(self) -> list[str]:
        return [s.label for s in self.stats]

    def point(self, i: int) -> ProfilePoint:
        return ProfilePoint(float(self.theta_grid[i]), self.mu[i], self.dmu[i], self.cov[i])

    def __iter__(self):
        return (self.point(i) for i in range(len(self)))

    def select(self, idx: Sequence[int]) -> "MomentProfile":
        """Sub-profile restricted to the statistics at positions ``idx``."""
        idx = list(idx)
        return MomentProfile(
            theta_grid=self.theta_grid.copy(),
            stats=tuple(self.stats[i] for i in idx),
            mu=self.mu[:, idx],
            dmu=self.dmu[:, idx],
            cov=self.cov[:, idx][:, :, idx],
            provenance=dict(self.provenance),
            jitter=np.array([factor_spd(c).jitter for c in self.cov[:, idx][:, :, idx]]),
        )


def closed_form_point(model: ExpFamilyModel, stats: Sequence[StatisticSpec], theta: float) -> ProfilePoint:
    """Exact mu_phi, its derivative and R_phi from the model's monomial moments."""
    positive = model.support[0] >= 0
    mono = [s.monomial(positive) for s in stats]
    L = len(mono)
    mu = np.empty(L)
    dmu = np.empty(L)
    for i, (p, a) in enumerate(mono):
        mu[i], dmu[i] = model.expect_monomial(theta, p, a)
    cov = np.empty((L, L))
    for i in range(L):
        for j in range(i, L):
            pi, ai = mono[i]
            pj, aj = mono[j]
            second, _ = model.expect_monomial(theta, pi + pj, ai + aj)
            cov[i, j] = cov[j, i] = second - mu[i] * mu[j]
    return ProfilePoint(float(theta), mu, dmu, cov)


def closed_form_profile(model: ExpFamilyModel, stats: Sequence[StatisticSpec], theta_grid) -> MomentProfile:
    grid = np.atleast_1d(np.asarray(theta_grid, dtype=float))
    pts = [closed_form_point(model, stats, t) for t in grid]
    jitter = np.array([factor_spd(p.cov).jitter for p in pts])
    return MomentProfile(
        theta_grid=grid,
        stats=tuple(stats),
        mu=np.array([p.mu for p in pts]),
        dmu=np.array([p.dmu for p in pts]),
        cov=np.array([p.cov for p in pts]),
        provenance={"kind": "closed_form"},
        jitter=jitter,
    )
