"""Residual surplus of the standard benchmark mechanisms in the continuum.

``rs_sd``: serial dictatorship, every agent gets their favorite with
probability ``m_bar`` and nobody pays. ``rs_vcg``: full screening, a posted
price at the ``1 - m_bar`` quantile of the reduced distribution. The
random-favorites formulas cover the two-object exponential market with
asymmetric capacities.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .distributions import Distribution, ReducedDistribution
from .reduced_design import survival_integral

QUAD_TOL = 1e-11


def _check(m_bar: float, k: int):
    if not 0 < m_bar < 1:
        raise ValueError("m_bar must lie in (0, 1)")
    if int(k) != k or k < 1:
        raise ValueError("k must be a positive integer")


def rs_sd(G: Distribution, k: int, m_bar: float) -> float:
    """``m_bar * E[max of k values]``."""
    _check(m_bar, k)
    red = ReducedDistribution(G, k)
    if not red.has_finite_mean:
        raise ValueError(f"{G!r} has no finite mean")
    return m_bar * red.mean(QUAD_TOL)


def vcg_price(G: Distribution, k: int, m_bar: float) -> float:
    _check(m_bar, k)
    return float(ReducedDistribution(G, k).isf(m_bar))


def rs_vcg(G: Distribution, k: int, m_bar: float) -> float:
    """``int_q^inf (v - q) dG_K = int_q^inf (1 - G_K)`` with ``1 - G_K(q) = m_bar``."""
    _check(m_bar, k)
    red = ReducedDistribution(G, k)
    if not red.has_finite_mean:
        raise ValueError(f"{G!r} has no finite mean")
    return survival_integral(red, float(red.isf(m_bar)), red.support_upper)


class CurveRow(NamedTuple):
    k: int
    rs_sd: float
    rs_vcg: float


def sd_vcg_curve(G: Distribution, m_bar: float, k_max: int) -> list[CurveRow]:
    if not 1 <= k_max <= 200:
        raise ValueError("k_max must lie in [1, 200]")
    return [CurveRow(k, rs_sd(G, k, m_bar), rs_vcg(G, k, m_bar)) for k in range(1, k_max + 1)]


class RandomFavorites(NamedTuple):
    a: float
    b: float
    rs_rf: float
    rs_sd2: float
    pct_diff: float


def _check_capacities(m1: float, m2: float):
    if not (m1 >= m2 > 0):
        raise ValueError("random favorites needs m1 >= m2 > 0")
    if m1 + m2 > 1 + 1e-12:
        raise ValueError("random favorites needs m1 + m2 <= 1")


def rf_exponential(m1: float, m2: float) -> RandomFavorites:
    """Random favorites with two exponential objects and capacities ``m1 >= m2``.

    ``a`` and ``b`` are the scales at which the two claim regions clear;
    ``rs_sd2`` is serial dictatorship's surplus on the same market.
    """
    _check_capacities(m1, m2)
    g = math.sqrt(m1 * m2)
    rs_rf = m1 + m2 + g
    return RandomFavorites(m1 + g, m2 + g, rs_rf, m1 + 2 * m2, (g - m2) / rs_rf)


def rf_market_clearing_check(m1: float, m2: float) -> tuple[float, float]:
    """Residuals between each object's demand and its capacity."""
    a, b, *_ = rf_exponential(m1, m2)
    return abs(a * a / (a + b) - m1), abs(b * b / (a + b) - m2)


def rf_pct_grid(n: int = 50) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``pct_diff`` over an ``n x n`` grid of feasible capacities.

    ``m2`` runs over ``(0, 1/2]`` and ``m1`` over ``[m2, 1 - m2]``, each in
    ``n`` equal steps, so the diagonal ``m1 = m2`` is always included.
    """
    m2 = np.linspace(0.5 / n, 0.5, n)
    frac = np.linspace(0.0, 1.0, n)
    M2 = np.repeat(m2[:, None], n, axis=1)
    M1 = M2 + frac[None, :] * (1.0 - 2.0 * M2)
    G = np.sqrt(M1 * M2)
    return M1, M2, (G - M2) / (M1 + M2 + G)


def rf_pct_supremum() -> float:
    """Exact supremum of ``pct_diff``, reached at ``sqrt(m2 / m1) = (sqrt 3 - 1) / 2``."""
    return (2.0 * math.sqrt(3.0) - 3.0) / 3.0
