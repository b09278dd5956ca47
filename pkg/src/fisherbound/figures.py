"""Plot-ready tables for the loss and weight curves.

Every generator returns ``(header, rows)``; the CLI serializes them as CSV.
"""

from __future__ import annotations

import numpy as np

from .bounds import bound_curve, loss_chi, strong_bound, two_moment_bound
from .calibrate import LearnConfig, learn_profile, rapp_system, reference_input_fisher
from .expfam import LogNormal, Weibull
from .profile import closed_form_point, parse_stats, powers

RAPP_STATS = "pow1,pow2,pow3,pow4,abs,logabs"

Table = tuple[list[str], list[list[float]]]


def _grid(start_num: int, stop_num: int, denom: int) -> np.ndarray:
    # integer numerators keep points like k=2.0 exact
    return np.arange(start_num, stop_num + 1) / denom


def fig1(sigma_max: float = 2.0, theta: float = 0.0) -> Table:
    """Two-moment loss for the log-normal against sigma."""
    rows = []
    for s in _grid(20, int(round(sigma_max * 100)), 100):
        m = LogNormal(s)
        res = two_moment_bound(m.moment_set(theta))
        rows.append([s, loss_chi(res.s, m.fisher())[1]])
    return ["sigma", "chi_db"], rows


def fig2(k_max: float = 5.0, theta: float = 1.0) -> Table:
    """Two-moment loss for the Weibull against shape k."""
    rows = []
    for k in _grid(20, int(round(k_max * 20)), 20):
        m = Weibull(k)
        res = two_moment_bound(m.moment_set(theta))
        rows.append([k, loss_chi(res.s, m.fisher(theta))[1]])
    return ["k", "chi_db"], rows


def fig3(dist: str = "weibull", L_max: int = 4) -> Table:
    """Strong-bound loss with the first L raw moments, L = 1..L_max."""
    if dist == "weibull":
        xs, make, theta, xname = _grid(10, 100, 10), Weibull, 1.0, "k"
    elif dist == "lognormal":
        xs, make, theta, xname = _grid(20, 120, 100), LogNormal, 0.0, "sigma"
    else:
        raise ValueError(f"fig3 supports weibull or lognormal, not {dist!r}")
    rows = []
    for x in xs:
        m = make(x)
        pt = closed_form_point(m, powers(L_max), theta)
        row = [x]
        for L in range(1, L_max + 1):
            sub = (pt.theta, pt.mu[:L], pt.dmu[:L], pt.cov[:L, :L])
            row.append(strong_bound(sub, m.fisher(theta)).chi_db)
        rows.append(row)
    return [xname] + [f"chi_db_L{L}" for L in range(1, L_max + 1)], rows


def _weights(make, xs, theta, L) -> list[list[float]]:
    rows = []
    for x in xs:
        pt = closed_form_point(make(x), powers(L), theta)
        rows.append([x, *strong_bound(pt).norm_weights])
    return rows


def fig4(L: int = 4) -> Table:
    """Normalized optimal weights of z..z^L for the Weibull against k."""
    return ["k"] + [f"w{l}" for l in range(1, L + 1)], _weights(Weibull, _grid(10, 100, 10), 1.0, L)


def fig5(L: int = 4) -> Table:
    """Normalized optimal weights of z..z^L for the log-normal against sigma."""
    return ["sigma"] + [f"w{l}" for l in range(1, L + 1)], _weights(LogNormal, _grid(20, 120, 100), 0.0, L)


def rapp_profile(
    rho: float = 2.0,
    theta_min: float = 0.0,
    theta_max: float = 4.0,
    steps: int = 81,
    samples: int = 1_000_000,
    seed: int = 0,
    stats: str = RAPP_STATS,
    workers: int = 1,
):
    cfg = LearnConfig(
        theta_grid=tuple(np.linspace(theta_min, theta_max, steps)),
        stats=parse_stats(stats),
        samples_per_point=samples,
        seed=seed,
    )
    return learn_profile(rapp_system(rho), cfg, workers=workers)


def fig6(**kw) -> Table:
    """Learned strong-bound loss of the Rapp amplifier against the input mean."""
    reports = bound_curve(rapp_profile(**kw), reference_input_fisher)
    return ["theta", "chi_db"], [[r.theta, r.chi_db] for r in reports]


def fig7(**kw) -> Table:
    """Learned normalized weights of the Rapp statistics against the input mean."""
    prof = rapp_profile(**kw)
    reports = bound_curve(prof)
    header = ["theta"] + [f"w{l}" for l in range(1, len(prof.stats) + 1)]
    return header, [[r.theta, *r.norm_weights] for r in reports]


FIGURES = {"fig1": fig1, "fig2": fig2, "fig3": fig3, "fig4": fig4, "fig5": fig5, "fig6": fig6, "fig7": fig7}
