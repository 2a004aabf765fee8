from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from moneyburn.distributions import Exponential, Frechet, ShiftedPareto, Uniform, Weibull, reduced
from moneyburn.reduced_design import (
    MechanismSegment,
    NotIDHRError,
    ReducedMechanism,
    efficient_reduced_mechanism,
    frechet_cdf,
    frechet_mechanism,
    frechet_wdstar,
    frechet_wdstar_residual,
    frechet_wstar,
    full_screening,
    hazard_peak,
    hazard_shape,
    idhr_threshold,
    iron,
    ironing_gap,
    no_screening,
    residual_surplus,
    residual_surplus_both,
    survival_integral,
    two_tier,
)


def test_hazard_shapes():
    assert hazard_shape(Exponential(1.0)) == "ihr"  # flat counts as weakly increasing
    assert hazard_shape(Weibull(2.0)) == "ihr"
    assert hazard_shape(Uniform(1.0)) == "ihr"
    assert hazard_shape(Weibull(0.9)) == "dhr"
    assert hazard_shape(ShiftedPareto(2.0)) == "dhr"
    assert hazard_shape(reduced(Weibull(0.9), 2)) == "idhr"
    assert hazard_shape(Frechet(3.0)) == "idhr"


def test_frechet_peak_matches_closed_form():
    for alpha in (1.5, 2.0, 3.0):
        assert hazard_peak(Frechet(alpha)) == pytest.approx(frechet_wstar(alpha), rel=1e-8)


@pytest.mark.parametrize("alpha", [1.5, 2.0, 3.0, 5.0])
def test_frechet_threshold_matches_closed_form(alpha):
    assert idhr_threshold(Frechet(alpha)) == pytest.approx(frechet_wdstar(alpha), rel=1e-7)
    assert abs(frechet_wdstar_residual(alpha, frechet_wdstar(alpha))) < 1e-10
    assert ironing_gap(Frechet(alpha), frechet_wdstar(alpha)) == pytest.approx(0.0, abs=1e-9)


def test_frechet_thresholds_ordered():
    for alpha in (1.5, 2.0, 3.0, 5.0, 8.0):
        ws, wd = frechet_wstar(alpha), frechet_wdstar(alpha)
        assert ws < wd
        assert 0 < frechet_cdf(alpha, ws) < frechet_cdf(alpha, wd) < 1
    with pytest.raises(ValueError):
        frechet_wstar(1.0)


def test_idhr_threshold_rejects_other_shapes():
    with pytest.raises(NotIDHRError):
        idhr_threshold(Weibull(0.9))


def test_idhr_threshold_beyond_tail_is_infinite():
    assert idhr_threshold(reduced(Weibull(0.9), 256)) == math.inf


def test_iron_identity_when_virtual_value_monotone():
    # Weibull(0.9) has a nondecreasing virtual value, so ironing changes nothing
    iv = iron(Weibull(0.9), 1000)
    assert iv.flat_ranges == ()
    assert np.allclose(iv.values, iv.raw_values(), rtol=1e-12)
    assert np.all(np.diff(iv.raw_values()) >= 0)


@pytest.mark.parametrize("alpha", [2.0, 3.0])
def test_iron_frechet_single_flat_segment(alpha):
    iv = iron(Frechet(alpha), 10_000)
    assert len(iv.flat_ranges) == 1
    i, j = iv.flat_ranges[0]
    assert i == 0
    assert np.all(np.diff(iv.values) >= -1e-12)
    assert iv.H[-1] == pytest.approx(Frechet(alpha).mean(), rel=1e-9)


def test_iron_validation():
    with pytest.raises(ValueError):
        iron(Exponential(1.0), 10)
    with pytest.raises(ValueError):
        iron(ShiftedPareto(1.0), 1000)


@settings(max_examples=25, deadline=None)
@given(alpha=st.floats(1.5, 6.0), k=st.integers(1, 8))
def test_ironed_values_monotone_and_dominated(alpha, k):
    iv = iron(reduced(Frechet(alpha), k), 400)
    assert np.all(np.diff(iv.values) >= -1e-10)
    # the hull never rises above the cumulative curve
    cum = np.concatenate([[0.0], np.cumsum(iv.values) / iv.n])
    assert np.all(cum <= iv.H + 1e-10)


def test_mechanism_validation():
    seg = MechanismSegment(0.0, 1.0, 0.5, 1.0)
    with pytest.raises(ValueError):
        ReducedMechanism((), 0.5)
    with pytest.raises(ValueError):
        ReducedMechanism((MechanismSegment(0.0, 1.0, 1.2, 1.0),), 0.5)
    with pytest.raises(ValueError):
        ReducedMechanism((MechanismSegment(0.0, 1.0, 0.8, 0.5), MechanismSegment(1.0, 2.0, 0.2, 0.5)), 0.5)
    with pytest.raises(ValueError):
        ReducedMechanism((seg, MechanismSegment(1.5, 2.0, 0.7, 0.0)), 0.5)
    with pytest.raises(ValueError):
        no_screening(Exponential(1.0), 1.0)


def test_payments_are_jump_times_threshold():
    mech = two_tier(Frechet(3.0), 0.5, 2.0)
    x_low = mech.x[0]
    assert mech.payment(1.0) == 0.0
    assert mech.payment(5.0) == pytest.approx((1 - x_low) * 2.0)
    full = full_screening(Exponential(1.0), 0.25)
    assert full.payment(10.0) == pytest.approx(math.log(4))
    assert np.all(no_screening(Exponential(1.0), 0.3).payments == 0)


@pytest.mark.parametrize("dist", [Exponential(1.0), Weibull(0.9), reduced(Weibull(0.9), 2), Frechet(3.0),
                                  reduced(ShiftedPareto(2.0), 4), Uniform(1.0)], ids=repr)
@pytest.mark.parametrize("m_bar", [0.1, 0.5, 0.9])
def test_mechanism_invariants(dist, m_bar):
    mech = efficient_reduced_mechanism(dist, m_bar)
    assert mech.supply() == pytest.approx(m_bar, abs=1e-9)
    assert np.all(np.diff(mech.x) >= 0)
    assert mech.payments[0] == 0.0
    assert np.all(np.diff(mech.payments) >= 0)
    # truthful reporting beats every other segment's bundle
    mids = [0.5 * (s.v_lo + s.v_hi) if math.isfinite(s.v_hi) else s.v_lo + 1 for s in mech.segments]
    for v, x, p in zip(mids, mech.x, mech.payments):
        assert np.all(v * x - p >= v * mech.x - mech.payments - 1e-9)


@pytest.mark.parametrize("dist", [reduced(Weibull(0.9), 2), Frechet(3.0), reduced(ShiftedPareto(2.0), 3)], ids=repr)
@pytest.mark.parametrize("m_bar", [0.2, 0.6])
def test_auto_matches_hull(dist, m_bar):
    auto = residual_surplus(dist, efficient_reduced_mechanism(dist, m_bar))
    hull = residual_surplus(dist, efficient_reduced_mechanism(dist, m_bar, method="hull"))
    assert auto == pytest.approx(hull, rel=1e-5)
    assert auto >= hull - 1e-9


@pytest.mark.parametrize("dist", [Exponential(1.0), reduced(Weibull(0.9), 2), Frechet(2.0),
                                  reduced(ShiftedPareto(2.0), 6)], ids=repr)
def test_efficient_dominates_benchmarks(dist):
    for m_bar in (0.1, 0.4, 0.8):
        best = residual_surplus(dist, efficient_reduced_mechanism(dist, m_bar))
        for other in (no_screening(dist, m_bar), full_screening(dist, m_bar)):
            assert best >= residual_surplus(dist, other) - 1e-9


def test_dhr_gives_posted_price_ihr_gives_pooling():
    mech = efficient_reduced_mechanism(Weibull(0.9), 0.3)
    assert list(mech.x) == [0.0, 1.0]
    mech = efficient_reduced_mechanism(Weibull(2.0), 0.3)
    assert list(mech.x) == [0.3]


def test_frechet_three_pools_most_types():
    mech = frechet_mechanism(3.0, 0.5)
    assert mech.segments[0].mass > 0.98
    assert 0.485 <= mech.x[0] <= 0.5


def test_pooling_covers_everyone_deep_in_the_tail():
    mech = efficient_reduced_mechanism(reduced(Weibull(0.9), 256), 0.5)
    assert mech.largest_segment_mass() == pytest.approx(1.0, abs=1e-12)


def test_pareto_pooling_approaches_frechet_limit():
    mech = efficient_reduced_mechanism(reduced(ShiftedPareto(2.0), 256), 0.6)
    assert mech.largest_segment_mass() == pytest.approx(frechet_cdf(2.0, frechet_wdstar(2.0)), abs=0.02)


@pytest.mark.parametrize("dist", [Exponential(1.0), reduced(Weibull(0.9), 3), Frechet(2.5), Uniform(2.0)], ids=repr)
@pytest.mark.parametrize("m_bar", [0.15, 0.5, 0.85])
def test_direct_and_virtual_surplus_agree(dist, m_bar):
    for mech in (efficient_reduced_mechanism(dist, m_bar), no_screening(dist, m_bar), full_screening(dist, m_bar)):
        both = residual_surplus_both(dist, mech)
        assert both.direct == pytest.approx(both.virtual, abs=1e-8)


def test_known_surplus_values():
    # posted price for Exp(1): surplus is the mass above the price
    assert residual_surplus(Exponential(1.0), full_screening(Exponential(1.0), 0.25)) == pytest.approx(0.25)
    assert residual_surplus(Exponential(1.0), no_screening(Exponential(1.0), 0.25)) == pytest.approx(0.25)
    assert survival_integral(Uniform(1.0), 0.0, 1.0) == pytest.approx(0.5)
    assert survival_integral(Uniform(1.0), 1.0, 0.5) == 0.0


def test_to_dict_roundtrip_fields():
    d = two_tier(Frechet(3.0), 0.5, frechet_wdstar(3.0)).to_dict(rs=1.0)
    assert d["m_bar"] == 0.5 and d["rs"] == 1.0
    assert [s["x"] for s in d["segments"]][-1] == 1.0
