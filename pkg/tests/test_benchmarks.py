from __future__ import annotations

import math

import numpy as np
import pytest

from moneyburn.benchmarks import (
    rf_exponential,
    rf_market_clearing_check,
    rf_pct_grid,
    rf_pct_supremum,
    rs_sd,
    rs_vcg,
    sd_vcg_curve,
    vcg_price,
)
from moneyburn.distributions import Exponential, ShiftedPareto, Uniform, Weibull


@pytest.mark.parametrize("k", [1, 2, 5])
def test_rs_sd_exponential_harmonic(k):
    harmonic = sum(1 / j for j in range(1, k + 1))
    assert rs_sd(Exponential(1.0), k, 0.3) == pytest.approx(0.3 * harmonic, rel=1e-10)


@pytest.mark.parametrize("G,k", [(Weibull(0.5), 2), (ShiftedPareto(2.0), 3), (Uniform(1.0), 4)])
def test_rs_sd_monte_carlo(G, k):
    rng = np.random.default_rng(12345)
    maxima = G.quantile(rng.random((200_000, k))).max(axis=1)
    se = maxima.std() / math.sqrt(maxima.size)
    assert abs(rs_sd(G, k, 1.0 - 1e-12) - maxima.mean()) < 5 * se


def test_vcg_price_and_surplus():
    assert vcg_price(Exponential(1.0), 1, 0.25) == pytest.approx(math.log(4))
    assert rs_vcg(Exponential(1.0), 1, 0.25) == pytest.approx(0.25, rel=1e-10)
    assert rs_vcg(Uniform(1.0), 1, 0.5) == pytest.approx(0.125, rel=1e-10)


def test_validation():
    with pytest.raises(ValueError):
        rs_sd(Exponential(1.0), 0, 0.5)
    with pytest.raises(ValueError):
        rs_vcg(Exponential(1.0), 2, 1.0)
    with pytest.raises(ValueError):
        rs_sd(ShiftedPareto(1.0), 2, 0.5)
    with pytest.raises(ValueError):
        sd_vcg_curve(Exponential(1.0), 0.5, 201)
    with pytest.raises(ValueError):
        rf_exponential(0.1, 0.4)
    with pytest.raises(ValueError):
        rf_exponential(0.7, 0.5)


def test_curve_monotone_sd():
    rows = sd_vcg_curve(ShiftedPareto(2.0), 0.6, 12)
    assert [r.k for r in rows] == list(range(1, 13))
    assert all(a.rs_sd < b.rs_sd for a, b in zip(rows, rows[1:]))


def test_pareto_curves_cross_near_five():
    diff = [r.rs_sd - r.rs_vcg for r in sd_vcg_curve(ShiftedPareto(2.0), 0.6, 20)]
    assert abs(diff[4]) < 0.002  # K = 5, a near-tie
    assert all(d > 1e-6 for d in diff[5:])


@pytest.mark.parametrize("m1,m2", [(0.4, 0.1), (0.25, 0.25), (0.7, 0.3), (0.3, 0.05)])
def test_rf_market_clears(m1, m2):
    r1, r2 = rf_market_clearing_check(m1, m2)
    assert r1 < 1e-12 and r2 < 1e-12


def test_rf_symmetric_matches_sd():
    r = rf_exponential(0.25, 0.25)
    assert r.rs_rf == pytest.approx(r.rs_sd2) and r.pct_diff == 0.0


def test_rf_pct_grid():
    M1, M2, pct = rf_pct_grid(50)
    assert pct.shape == (50, 50)
    assert np.all(M1 >= M2) and np.all(M1 + M2 <= 1 + 1e-12)
    assert np.all(pct[:, 0] == 0)
    assert np.all(pct >= 0)
    assert pct.max() <= rf_pct_supremum() + 1e-15
    assert rf_pct_supremum() == pytest.approx(0.1547005, abs=1e-7)
