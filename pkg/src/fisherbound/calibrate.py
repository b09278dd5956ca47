"""Monte-Carlo calibration of moment profiles for black-box systems.

A :class:`BlackBoxSystem` maps (theta, driving noise) to outputs. Separating
the noise draw from the response lets the derivative of each expected
statistic be estimated with common random numbers: the same noise is pushed
through the system at theta - h and theta + h.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DegenerateStatistic, FormatError, NonFinite, VersionMismatch
from .expfam import ExpFamilyModel
from .numkit import factor_spd, pack_upper, unpack_upper
from .profile import MomentProfile, StatisticSpec, evaluate_stats, parse_stats

log = logging.getLogger(__name__)

PROFILE_MAGIC = "fisherbound-profile"
PROFILE_VERSION = "v1"
MIN_SAMPLES = 1000
DEGENERATE_VAR = 1e-14


def rapp_forward(x, rho: float):
    """Rapp saturation y = x / (1 + |x|^(2 rho))^(1 / (2 rho)).

    Evaluated as sign(x) / (|x|^(-2 rho) + 1)^(1 / (2 rho)) for |x| > 1 so
    large inputs saturate at +-1 instead of overflowing.
    """
    if not rho > 0:
        raise ValueError("rho must be positive")
    x = np.asarray(x, dtype=float)
    a = np.abs(x)
    p = 2.0 * rho
    big = a > 1.0
    with np.errstate(divide="ignore", over="ignore"):
        small_y = x / (1.0 + a**p) ** (1.0 / p)
        big_y = np.sign(x) / (np.where(big, a, 1.0) ** -p + 1.0) ** (1.0 / p)
    y = np.where(big, big_y, small_y)
    return float(y) if y.ndim == 0 else y


@dataclass(frozen=True)
class BlackBoxSystem:
    """Memoryless system: ``respond(theta, base)`` with ``base = draw(rng, n)``."""

    name: str
    params: dict
    draw: Callable[[np.random.Generator, int], np.ndarray]
    respond: Callable[[float, np.ndarray], np.ndarray]

    def sample(self, theta: float, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.respond(theta, self.draw(rng, n))


def _normal_draw(rng: np.random.Generator, n: int) -> np.ndarray:
    return rng.standard_normal(n)


def rapp_system(rho: float, input_var: float = 1.0) -> BlackBoxSystem:
    """Rapp amplifier driven by x = theta + eta, eta ~ N(0, input_var)."""
    sd = math.sqrt(input_var)
    return BlackBoxSystem(
        name="rapp",
        params={"rho": float(rho), "input_var": float(input_var)},
        draw=_normal_draw,
        respond=lambda theta, eta: rapp_forward(theta + sd * eta, rho),
    )


def identity_system(input_var: float = 1.0) -> BlackBoxSystem:
    sd = math.sqrt(input_var)
    return BlackBoxSystem(
        name="identity",
        params={"input_var": float(input_var)},
        draw=_normal_draw,
        respond=lambda theta, eta: theta + sd * eta,
    )


def model_system(model: ExpFamilyModel) -> BlackBoxSystem:
    """Treat a reference model as a black box (used to validate calibration)."""
    return BlackBoxSystem(
        name=model.name,
        params={},
        draw=model.base_draws,
        respond=model.transform,
    )


def reference_input_fisher(theta: float, input_var: float = 1.0) -> float:
    """Fisher information of the Gaussian input x = theta + eta about theta."""
    return 1.0 / input_var


def stream(seed: int, index: int) -> np.random.Generator:
    """Independent generator for (seed, index); does not depend on scheduling."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


@dataclass(frozen=True)
class LearnConfig:
    theta_grid: tuple[float, ...]
    stats: tuple[StatisticSpec, ...]
    samples_per_point: int = 1_000_000
    seed: int = 0
    diff_step: float = 1e-2
    crn: bool = True

    def __post_init__(self):
        grid = tuple(float(t) for t in self.theta_grid)
        object.__setattr__(self, "theta_grid", grid)
        object.__setattr__(self, "stats", tuple(self.stats))
        if not grid:
            raise ValueError("empty theta grid")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("theta grid must be strictly increasing")
        if not self.stats:
            raise ValueError("no statistics")
        if self.samples_per_point < MIN_SAMPLES:
            raise ValueError(f"samples_per_point must be >= {MIN_SAMPLES}")
        if not self.diff_step > 0:
            raise ValueError("diff_step must be positive")


def _learn_point(system: BlackBoxSystem, cfg: LearnConfig, i: int):
    theta = cfg.theta_grid[i]
    n = cfg.samples_per_point
    h = cfg.diff_step
    rng = stream(cfg.seed, i)
    base = system.draw(rng, n)
    phi = evaluate_stats(cfg.stats, system.respond(theta, base))
    if cfg.crn:
        plus = evaluate_stats(cfg.stats, system.respond(theta + h, base)).mean(axis=0)
        minus = evaluate_stats(cfg.stats, system.respond(theta - h, base)).mean(axis=0)
    else:
        plus = evaluate_stats(cfg.stats, system.sample(theta + h, n, rng)).mean(axis=0)
        minus = evaluate_stats(cfg.stats, system.sample(theta - h, n, rng)).mean(axis=0)
    if not np.all(np.isfinite(phi)):
        raise NonFinite("non-finite statistic values", op="learn_profile", theta=theta)
    mu = phi.mean(axis=0)
    cov = np.atleast_2d(np.cov(phi, rowvar=False, ddof=1))
    var = np.diag(cov)
    bad = [s.label for s, v in zip(cfg.stats, var) if v < DEGENERATE_VAR]
    if bad:
        raise DegenerateStatistic(
            f"statistic(s) {', '.join(bad)} have sample variance < {DEGENERATE_VAR}",
            op="learn_profile",
            theta=theta,
        )
    dmu = (plus - minus) / (2.0 * h)
    jitter = factor_spd(cov).jitter
    return mu, dmu, cov, jitter


def learn_profile(system: BlackBoxSystem, cfg: LearnConfig, workers: int = 1) -> MomentProfile:
    """Sample means, sample covariances and CRN central-difference derivatives.

    Grid point ``i`` draws from ``stream(cfg.seed, i)``, so the result is
    bit-identical for any ``workers``.
    """
    idx = range(len(cfg.theta_grid))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda i: _learn_point(system, cfg, i), idx))
    else:
        results = [_learn_point(system, cfg, i) for i in idx]
    return MomentProfile(
        theta_grid=np.array(cfg.theta_grid),
        stats=cfg.stats,
        mu=np.array([r[0] for r in results]),
        dmu=np.array([r[1] for r in results]),
        cov=np.array([r[2] for r in results]),
        provenance={
            "kind": "monte_carlo",
            "samples": cfg.samples_per_point,
            "seed": cfg.seed,
            "diff_step": cfg.diff_step,
            "crn": cfg.crn,
        },
        jitter=np.array([r[3] for r in results]),
    )


# -- profile file format -------------------------------------------------------


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def _fmt_list(values) -> str:
    return ",".join(_fmt(v) for v in np.ravel(values))


def format_profile(p: MomentProfile) -> str:
    lines = [f"{PROFILE_MAGIC} {PROFILE_VERSION}", "stats: " + ",".join(p.labels)]
    prov = p.provenance
    if prov.get("kind") == "monte_carlo":
        lines.append(
            "provenance: monte_carlo samples={} seed={} diff_step={} crn={}".format(
                int(prov["samples"]), int(prov["seed"]), _fmt(prov["diff_step"]), int(bool(prov["crn"]))
            )
        )
    else:
        lines.append("provenance: closed_form")
    for i in range(len(p)):
        lines.append(
            "theta={}; mu={}; dmu={}; cov_upper={}; jitter={}".format(
                _fmt(p.theta_grid[i]),
                _fmt_list(p.mu[i]),
                _fmt_list(p.dmu[i]),
                _fmt_list(pack_upper(p.cov[i])),
                _fmt(p.jitter[i]),
            )
        )
    return "\n".join(lines) + "\n"


def save_profile(p: MomentProfile, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_profile(p))


def _parse_floats(text: str, line: int, fieldname: str) -> list[float]:
    out = []
    for tok in text.split(","):
        tok = tok.strip()
        try:
            v = float(tok)
        except ValueError:
            raise FormatError(f"not a number: {tok!r}", line=line, field=fieldname) from None
        if not math.isfinite(v):
            raise FormatError(f"non-finite value {tok!r}", line=line, field=fieldname)
        out.append(v)
    return out


def _parse_provenance(text: str, line: int) -> dict:
    if not text.startswith("provenance:"):
        raise FormatError("expected 'provenance:'", line=line, field="provenance")
    body = text[len("provenance:"):].split()
    if body == ["closed_form"]:
        return {"kind": "closed_form"}
    if not body or body[0] != "monte_carlo":
        raise FormatError(f"unknown provenance {' '.join(body)!r}", line=line, field="provenance")
    kv = {}
    for item in body[1:]:
        if "=" not in item:
            raise FormatError(f"malformed provenance item {item!r}", line=line, field="provenance")
        k, v = item.split("=", 1)
        kv[k] = v
    try:
        return {
            "kind": "monte_carlo",
            "samples": int(kv["samples"]),
            "seed": int(kv["seed"]),
            "diff_step": _parse_floats(kv["diff_step"], line, "diff_step")[0],
            "crn": bool(int(kv["crn"])),
        }
    except (KeyError, ValueError) as e:
        raise FormatError(f"bad provenance: {e}", line=line, field="provenance") from None


def parse_profile(text: str) -> MomentProfile:
    lines = text.splitlines()
    if not lines:
        raise FormatError("empty profile", line=1)
    head = lines[0].split()
    if len(head) != 2 or head[0] != PROFILE_MAGIC:
        raise FormatError("missing profile header", line=1)
    if head[1] != PROFILE_VERSION:
        raise VersionMismatch(f"unsupported profile version {head[1]!r}", line=1)
    if len(lines) < 3 or not lines[1].startswith("stats:"):
        raise FormatError("expected 'stats:'", line=2, field="stats")
    try:
        stats = parse_stats(lines[1][len("stats:"):])
    except ValueError as e:
        raise FormatError(str(e), line=2, field="stats") from None
    prov = _parse_provenance(lines[2], 3)
    L = len(stats)
    thetas, mus, dmus, covs, jitters = [], [], [], [], []
    for lineno, raw in enumerate(lines[3:], start=4):
        if not raw.strip():
            continue
        fields = {}
        for part in raw.split(";"):
            if "=" not in part:
                raise FormatError(f"malformed record part {part.strip()!r}", line=lineno)
            k, v = part.split("=", 1)
            fields[k.strip()] = v
        for key, n in (("theta", 1), ("mu", L), ("dmu", L), ("cov_upper", L * (L + 1) // 2), ("jitter", 1)):
            if key not in fields:
                raise FormatError("missing field", line=lineno, field=key)
            vals = _parse_floats(fields[key], lineno, key)
            if len(vals) != n:
                raise FormatError(f"expected {n} values, got {len(vals)}", line=lineno, field=key)
            fields[key] = vals
        theta = fields["theta"][0]
        if thetas and theta <= thetas[-1]:
            raise FormatError(
                f"theta grid not strictly increasing (row {len(thetas) + 1}, theta={theta!r})",
                line=lineno,
                field="theta",
            )
        thetas.append(theta)
        mus.append(fields["mu"])
        dmus.append(fields["dmu"])
        covs.append(unpack_upper(fields["cov_upper"], L))
        jitters.append(fields["jitter"][0])
    if not thetas:
        raise FormatError("profile has no grid records", line=len(lines))
    return MomentProfile(
        theta_grid=np.array(thetas),
        stats=stats,
        mu=np.array(mus),
        dmu=np.array(dmus),
        cov=np.array(covs),
        provenance=prov,
        jitter=np.array(jitters),
    )


def load_profile(path: str | os.PathLike) -> MomentProfile:
    with open(path, encoding="utf-8") as fh:
        return parse_profile(fh.read())
