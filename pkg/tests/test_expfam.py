import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from fisherbound.errors import (
    InfeasibleMoments,
    MomentOverflow,
    NonPositiveVariance,
    OutOfSupport,
    UnsupportedStatistic,
)
from fisherbound.expfam import (
    LogNormal,
    MomentSet,
    ParametricGaussian,
    Weibull,
    fisher_identity,
    gaussian_location,
    gaussian_raw_moment,
    lognormal_fisher,
    lognormal_raw_moment,
    weibull_fisher,
    weibull_raw_moment,
)

MODELS = [
    (LogNormal(0.5), 0.3, lambda t: oracles.lognormal_dist(0.5, t)),
    (LogNormal(1.2), -0.7, lambda t: oracles.lognormal_dist(1.2, t)),
    (Weibull(1.0), 2.0, lambda t: oracles.weibull_dist(1.0, t)),
    (Weibull(2.5), 0.8, lambda t: oracles.weibull_dist(2.5, t)),
]


def test_closed_form_fisher_values():
    assert weibull_fisher(2, 1) == 4
    assert lognormal_fisher(1) == 1
    assert lognormal_fisher(0.5) == pytest.approx(4.0)
    assert weibull_fisher(3.0, 1.5) == pytest.approx(4.0)


@pytest.mark.parametrize("model,theta,make", MODELS)
def test_fisher_matches_quadrature(model, theta, make):
    assert model.fisher(theta) == pytest.approx(oracles.fisher(make, theta), rel=1e-7)


@pytest.mark.parametrize("model,theta,make", MODELS)
def test_raw_moments_match_quadrature(model, theta, make):
    mu, dmu, _ = oracles.moments(make, theta, oracles.power_funcs(4))
    for l in range(1, 5):
        v, dv = model.expect_monomial(theta, l)
        assert v == pytest.approx(mu[l - 1], rel=1e-10)
        assert dv == pytest.approx(dmu[l - 1], rel=1e-7)


@pytest.mark.parametrize("model,theta,make", MODELS)
def test_log_moments_match_quadrature(model, theta, make):
    funcs = [np.log, lambda z: np.log(z) ** 2, lambda z: z * np.log(z)]
    mu, dmu, _ = oracles.moments(make, theta, funcs)
    got = [model.expect_monomial(theta, p, a) for p, a in [(0, 1), (0, 2), (1, 1)]]
    np.testing.assert_allclose([g[0] for g in got], mu, rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose([g[1] for g in got], dmu, rtol=1e-6, atol=1e-9)


def test_raw_moment_closed_forms():
    assert lognormal_raw_moment(1.0, 0.0, 2) == pytest.approx(math.exp(2))
    assert weibull_raw_moment(2.0, 1.0, 2) == pytest.approx(1.0)
    assert weibull_raw_moment(1.0, 2.0, 3) == pytest.approx(6 * 8)
    with pytest.raises(ValueError):
        lognormal_raw_moment(1.0, 0.0, 9)


def test_gaussian_raw_moment():
    assert gaussian_raw_moment(0.0, 1.0, 4) == 3
    assert gaussian_raw_moment(2.0, 0.5, 2) == pytest.approx(4.5)
    assert gaussian_raw_moment(1.0, 1.0, 3) == pytest.approx(4.0)


def test_lognormal_moment_overflow():
    with pytest.raises(MomentOverflow):
        LogNormal(20.0).expect_monomial(0.0, 8)


@pytest.mark.parametrize("model,theta,make", MODELS)
def test_fisher_identity(model, theta, make):
    exact = model.fisher(theta)
    assert fisher_identity(model, theta) == pytest.approx(exact, rel=1e-12)
    assert fisher_identity(model, theta, h=1e-5) == pytest.approx(exact, rel=1e-6)


def test_gaussian_identity_worked_example():
    g = ParametricGaussian(
        mu_fn=lambda t: t**2,
        dmu_fn=lambda t: 2 * t,
        var_fn=lambda t: 1 + t**2,
        dvar_fn=lambda t: 2 * t,
    )
    t = 0.7
    expected = (2 * t) ** 2 / (1 + t**2) + (2 * t) ** 2 / (2 * (1 + t**2) ** 2)
    assert g.fisher(t) == expected
    assert fisher_identity(g, t) == pytest.approx(expected, rel=1e-12)
    # score variance by quadrature over the normal density
    d = oracles.stats.norm(t**2, math.sqrt(1 + t**2))
    q = oracles.integrate.quad(lambda z: g.score(z, t) ** 2 * d.pdf(z), -np.inf, np.inf)[0]
    assert q == pytest.approx(expected, rel=1e-8)


def test_gaussian_rejects_log_statistics_and_bad_variance():
    g = gaussian_location()
    with pytest.raises(UnsupportedStatistic):
        g.expect_monomial(0.0, 0, 1)
    with pytest.raises(NonPositiveVariance):
        gaussian_location(0.0)


@pytest.mark.parametrize("model,theta,make", MODELS)
def test_pdf_matches_scipy(model, theta, make):
    z = np.array([0.1, 0.5, 1.0, 2.0, 4.0])
    np.testing.assert_allclose(model.logpdf(z, theta), make(theta).logpdf(z), rtol=1e-12)


def test_logpdf_outside_support():
    assert LogNormal(1.0).logpdf(-1.0, 0.0) == -np.inf
    with pytest.raises(OutOfSupport):
        Weibull(2.0).sufficient_stats(np.array([-1.0]))


@pytest.mark.parametrize("model,theta,make", MODELS)
def test_exponential_family_decomposition(model, theta, make):
    z = np.array([0.3, 1.1, 2.7])
    t = model.sufficient_stats(z)
    w = model.natural_params(theta)
    lp = t @ w - model.log_normalizer(theta) + model.carrier(z)
    np.testing.assert_allclose(lp, make(theta).logpdf(z), rtol=1e-12)


@pytest.mark.parametrize("model,theta,make", MODELS)
def test_sampling_is_seeded_and_distributed(model, theta, make):
    a = model.sample(theta, 20000, seed=11)
    b = model.sample(theta, 20000, seed=11)
    np.testing.assert_array_equal(a, b)
    assert oracles.stats.kstest(a, make(theta).cdf).pvalue > 1e-4


def test_moment_set_matches_raw_moments():
    for model, theta in [(LogNormal(0.8), 0.2), (Weibull(2.0), 1.3)]:
        raw, draw = zip(*(model.expect_monomial(theta, l) for l in range(1, 5)))
        a = model.moment_set(theta)
        b = MomentSet.from_raw(raw, draw)
        for f in ("mu1", "mu2", "mu3bar", "mu4bar", "dmu1", "dmu2"):
            assert getattr(a, f) == pytest.approx(getattr(b, f), rel=1e-9)


def test_lognormal_normalized_moments_are_theta_free():
    m = LogNormal(1.0)
    e = math.e
    s = m.moment_set(-2.0)
    assert s.mu3bar == pytest.approx(math.sqrt(e - 1) * (e + 2))
    assert s.mu4bar == pytest.approx(e**4 + 2 * e**3 + 3 * e**2 - 3)


def test_moment_set_validation():
    with pytest.raises(NonPositiveVariance):
        MomentSet(0.0, 0.0, 0.0, 3.0, 1.0, 0.0)
    with pytest.raises(InfeasibleMoments):
        MomentSet(0.0, 1.0, 2.0, 4.0, 1.0, 0.0)


@settings(max_examples=30, deadline=None)
@given(k=st.floats(0.5, 8.0), theta=st.floats(0.2, 5.0))
def test_weibull_mean_derivative_scales(k, theta):
    # E[z^l] is homogeneous of degree l in theta
    m = Weibull(k)
    for l in (1, 2, 3):
        v, dv = m.expect_monomial(theta, l)
        assert dv == pytest.approx(l * v / theta, rel=1e-10)


def test_weibull_moment_overflow():
    with pytest.raises(MomentOverflow):
        Weibull(0.01).expect_monomial(1.0, 8)
