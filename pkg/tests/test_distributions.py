from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from moneyburn.distributions import (
    DistributionSpecError,
    Exponential,
    Frechet,
    Gumbel,
    OutOfSupportError,
    ReducedDistribution,
    ShiftedPareto,
    Uniform,
    Weibull,
    hazard_rate,
    hazard_rate_derivative,
    parse_distribution,
    reduced,
    virtual_valuation,
    virtual_valuation_derivative,
)
from moneyburn.numerics import integrate

FAMILIES = [Exponential(1.0), Weibull(0.9), Weibull(0.5), Weibull(2.0), ShiftedPareto(2.0),
            Frechet(3.0), Gumbel(), Uniform(1.0)]
DHR_FAMILIES = [Weibull(0.9), Weibull(0.5), ShiftedPareto(2.0), Exponential(1.0)]


def test_closed_form_examples():
    assert Weibull(1.0).cdf(1.0) == pytest.approx(1 - math.exp(-1), abs=1e-12)
    assert ShiftedPareto(2.0).cdf(1.0) == pytest.approx(0.75, abs=1e-15)
    assert Weibull(0.9).pdf(1.0) == pytest.approx(0.9 * math.exp(-1), abs=1e-12)


def test_out_of_support_side():
    with pytest.raises(OutOfSupportError) as err:
        Exponential(1.0).cdf(-1.0)
    assert err.value.side == "below"
    with pytest.raises(OutOfSupportError) as err:
        Uniform(1.0).pdf(np.array([0.5, 1.5]))
    assert err.value.side == "above"


def test_quantile_rejects_bad_probability():
    with pytest.raises(ValueError):
        Exponential(1.0).quantile(1.5)


def test_parameter_validation():
    for bad in (lambda: Exponential(0.0), lambda: Weibull(-1), lambda: Uniform(0),
                lambda: ReducedDistribution(Exponential(1.0), 0)):
        with pytest.raises(ValueError):
            bad()


def test_reduced_identity_and_quantile():
    v = np.linspace(0, 5, 11)
    base = Exponential(1.0)
    assert np.allclose(reduced(base, 1).cdf(v), base.cdf(v), atol=1e-15)
    assert reduced(base, 2).quantile(0.25) == pytest.approx(math.log(2), abs=1e-14)


@pytest.mark.parametrize("G", FAMILIES, ids=repr)
@pytest.mark.parametrize("k", [1, 2, 4, 8])
def test_quantile_inverts_cdf(G, k):
    red = reduced(G, k)
    q = np.linspace(0.005, 0.995, 100)
    v = red.quantile(q)
    assert np.allclose(red.quantile(red.cdf(v)), v, rtol=1e-7, atol=1e-7)
    assert np.allclose(red.cdf(v), q, atol=1e-12)


@pytest.mark.parametrize("G", FAMILIES, ids=repr)
@pytest.mark.parametrize("k", [1, 3])
def test_reduced_cdf_pdf_and_density_mass(G, k):
    red = reduced(G, k)
    v = red.quantile(np.linspace(0.05, 0.95, 7))
    assert np.allclose(red.cdf(v), G.cdf(v) ** k, rtol=1e-12)
    assert np.allclose(red.pdf(v), k * G.pdf(v) * G.cdf(v) ** (k - 1), rtol=1e-12)
    mass = integrate(red._pdf, red.support_lower, red.support_upper, 1e-10,
                     scale=red.typical_scale())
    assert mass == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("G", FAMILIES, ids=repr)
def test_pdf_derivative_matches_finite_difference(G):
    red = reduced(G, 3)
    v = red.quantile(np.linspace(0.1, 0.9, 9))
    h = 1e-6
    fd = (red.pdf(v + h) - red.pdf(v - h)) / (2 * h)
    assert np.allclose(red.pdf_derivative(v), fd, rtol=1e-5, atol=1e-8)


def test_hazard_examples():
    assert np.allclose(hazard_rate(Exponential(1.0), np.array([0.0, 1.0, 7.0])), 1.0)
    assert hazard_rate(Weibull(0.9), 1.0) == pytest.approx(0.9, abs=1e-12)
    v = np.array([0.01, 0.05, 0.1])
    assert np.all(hazard_rate(reduced(Weibull(0.9), 2), v) < hazard_rate(Weibull(0.9), v))
    with pytest.raises(ValueError):
        hazard_rate(Uniform(1.0), 1.0)


def test_hazard_derivative_examples():
    assert hazard_rate_derivative(reduced(Exponential(1.0), 1), 2.0) == pytest.approx(0.0, abs=1e-14)
    assert hazard_rate_derivative(reduced(Weibull(0.9), 1), 1.0) == pytest.approx(-0.09, abs=1e-12)
    with pytest.raises(ValueError):
        hazard_rate_derivative(reduced(Weibull(0.9), 2), 0.0)


def test_weibull_two_fold_hazard_rises_then_falls():
    red = reduced(Weibull(0.9), 2)
    v = np.linspace(0.01, 20, 400)
    s = np.sign(red.hazard_rate_derivative(v))
    changes = np.flatnonzero(np.diff(s) != 0)
    assert changes.size == 1
    assert s[0] > 0 and s[-1] < 0


def test_virtual_valuation_examples():
    assert virtual_valuation(Exponential(1.0), 3.0) == pytest.approx(1.0)
    assert virtual_valuation_derivative(Exponential(1.0), 3.0) == pytest.approx(0.0, abs=1e-14)
    v = np.array([0.5, 2.0, 10.0])
    assert np.allclose(virtual_valuation(Weibull(0.9), v), v ** 0.1 / 0.9, rtol=1e-12)
    assert np.allclose(virtual_valuation_derivative(Weibull(0.9), v), (0.1 / 0.9) * v ** -0.9, rtol=1e-10)
    assert virtual_valuation_derivative(ShiftedPareto(2.0), 1e6) == pytest.approx(0.5, abs=1e-9)
    with pytest.raises(ValueError):
        virtual_valuation(Frechet(2.0), 0.0)


@pytest.mark.parametrize("G", FAMILIES, ids=repr)
def test_hazard_derivative_matches_finite_difference(G):
    for k in (1, 2, 5):
        red = reduced(G, k)
        v = red.quantile(np.linspace(0.1, 0.9, 9))
        h = 1e-5
        fd = (red.hazard_rate(v + h) - red.hazard_rate(v - h)) / (2 * h)
        exact = red.hazard_rate_derivative(v)
        scale = np.maximum(np.abs(exact), 1e-3 * np.abs(red.hazard_rate(v)))
        assert np.all(np.abs(exact - fd) <= 1e-4 * scale)


def _grid(G, size=200):
    return G.quantile(np.linspace(0.002, 0.998, size))


@pytest.mark.parametrize("G", DHR_FAMILIES, ids=repr)
def test_hazard_increase_is_inherited_by_larger_k(G):
    v = _grid(G)
    for k in range(1, 11):
        now = reduced(G, k).hazard_rate_derivative(v)
        nxt = reduced(G, k + 1).hazard_rate_derivative(v)
        assert np.all(nxt[now >= 0] >= -1e-10)


@pytest.mark.parametrize("G", [Weibull(0.9), Weibull(0.5), ShiftedPareto(2.0)], ids=repr)
def test_hazard_eventually_increases(G):
    v = _grid(G, 50)
    for vi in v:
        ks = 2.0 ** np.arange(0, 14)
        margins = [reduced(G, int(k)).ihr_margin(vi) for k in ks]
        assert max(margins) > 0


@pytest.mark.parametrize("G", [Weibull(1.0), Weibull(1.5), Weibull(3.0), Uniform(1.0), Gumbel()], ids=repr)
def test_ihr_families(G):
    assert np.all(G.hazard_rate_derivative(_grid(G)) >= -1e-12)


@pytest.mark.parametrize("G", [Weibull(0.9), Weibull(0.5), ShiftedPareto(2.0), ShiftedPareto(0.7)], ids=repr)
def test_dhr_families(G):
    assert np.all(reduced(G, 1).hazard_rate_derivative(_grid(G)) <= 0)


@settings(max_examples=60, deadline=None)
@given(alpha=st.floats(0.3, 4.0), k=st.integers(1, 50), q=st.floats(0.01, 0.99))
def test_reduced_quantile_roundtrip_property(alpha, k, q):
    red = reduced(Weibull(alpha), k)
    assert red.cdf(red.quantile(q)) == pytest.approx(q, abs=1e-10)


def test_means():
    assert Exponential(2.0).mean() == pytest.approx(0.5, abs=1e-10)
    assert reduced(Exponential(1.0), 3).mean() == pytest.approx(1 + 1 / 2 + 1 / 3, abs=1e-10)
    assert Weibull(0.5).mean() == pytest.approx(2.0, abs=1e-9)
    assert ShiftedPareto(2.0).mean() == pytest.approx(1.0, abs=1e-9)
    with pytest.raises(ValueError):
        ShiftedPareto(1.0).mean()


def test_gumbel_truncation():
    G = Gumbel()
    assert G.cdf(0.0) == pytest.approx(0.0, abs=1e-15)
    assert G.cdf(3.0) == pytest.approx((math.exp(-math.exp(-3)) - math.exp(-1)) / (1 - math.exp(-1)))


@pytest.mark.parametrize("text,expected", [
    ("weibull:0.9", Weibull(0.9)), ("spareto:2", ShiftedPareto(2.0)), ("exp:1", Exponential(1.0)),
    ("exp", Exponential(1.0)), ("frechet:3", Frechet(3.0)), ("uniform:1", Uniform(1.0)),
    ("gumbel", Gumbel()), ("weibull:.5", Weibull(0.5)),
])
def test_parse(text, expected):
    assert parse_distribution(text) == expected


@pytest.mark.parametrize("text", ["Weibull:0.9", "weibull", "weibull:1e-3", "weibull:-1", "weibull:0",
                                  "exp:1,2", "normal:0", "gumbel:1", "weibull: 0.9", ""])
def test_parse_rejects(text):
    with pytest.raises(DistributionSpecError):
        parse_distribution(text)
