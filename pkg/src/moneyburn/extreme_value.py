"""Extreme-value normalization of the largest order statistic.

Normalization constants for the Gumbel and Frechet domains, the normalized
distribution ``w -> G_K(a w + b)``, the three limit families and a tail
classifier based on the slope of the virtual valuation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .distributions import Distribution, Frechet, ReducedDistribution
from .numerics import IntegrationError, NumericalError, integrate


class ClassificationError(NumericalError):
    """The tail slope sequence did not settle; no classification."""


@dataclass(frozen=True)
class NormalizationConstants:
    a_k: float
    b_k: float

    def __post_init__(self):
        if not (self.a_k > 0 and math.isfinite(self.a_k)):
            raise ValueError(f"a_k must be positive and finite, got {self.a_k}")
        if not math.isfinite(self.b_k):
            raise ValueError(f"b_k must be finite, got {self.b_k}")


IDENTITY = NormalizationConstants(1.0, 0.0)


def mean_excess(G: Distribution, v: float, tol: float = 1e-12) -> float:
    """``s(v) = int_v^inf (1 - G) / (1 - G(v))``, the mean excess over ``v``."""
    if not G.has_finite_mean:
        raise IntegrationError("mean excess diverges for a heavy tail", math.inf, math.inf)
    s0 = float(G.sf(v))
    if s0 <= 0:
        raise ValueError("mean excess undefined where G(v) = 1")
    if math.isfinite(G.support_upper):
        return integrate(lambda t: G._sf(t) / s0, v, G.support_upper, tol)
    # the hazard at v sets the decay length of the integrand
    scale = float(G.virtual_valuation(v))
    return integrate(lambda t: G._sf(t) / s0, v, math.inf, tol, scale=scale)


def gumbel_constants(G: Distribution, k: int) -> NormalizationConstants:
    """``b = G^-1(1 - 1/k)`` and ``a = s(b)``."""
    if k < 2:
        raise ValueError("normalization constants need k >= 2")
    b = float(G.isf(1.0 / k))
    return NormalizationConstants(mean_excess(G, b), b)


def frechet_constants(G: Distribution, k: int) -> NormalizationConstants:
    """``a = G^-1(1 - 1/k)``, ``b = 0``."""
    if k < 2:
        raise ValueError("normalization constants need k >= 2")
    return NormalizationConstants(float(G.isf(1.0 / k)), 0.0)


@dataclass(frozen=True)
class NormalizedDistribution(Distribution):
    """``w -> G_K(a w + b)``; outside the support the cdf is 0 or 1 and the pdf 0."""

    reduced: Distribution
    constants: NormalizationConstants

    strict_support = False

    def __post_init__(self):
        a, b = self.constants.a_k, self.constants.b_k
        object.__setattr__(self, "support_lower", (self.reduced.support_lower - b) / a)
        object.__setattr__(self, "support_upper", (self.reduced.support_upper - b) / a)

    @property
    def spec(self) -> str:
        return f"normalized {self.reduced.spec}"

    @property
    def has_finite_mean(self) -> bool:
        return self.reduced.has_finite_mean

    def typical_scale(self) -> float:
        return self.reduced.typical_scale() / self.constants.a_k

    def _v(self, w):
        return self.constants.a_k * w + self.constants.b_k

    def _inside(self, v):
        return (v >= self.reduced.support_lower) & (v <= self.reduced.support_upper)

    def _eval(self, fn, w, below, above):
        v = self._v(np.asarray(w, dtype=float))
        inside = self._inside(v)
        vv = np.clip(v, self.reduced.support_lower, self.reduced.support_upper)
        out = fn(vv)
        out = np.where(inside, out, np.where(v < self.reduced.support_lower, below, above))
        return out

    def _cdf(self, w):
        return self._eval(self.reduced._cdf, w, 0.0, 1.0)

    def _sf(self, w):
        return self._eval(self.reduced._sf, w, 1.0, 0.0)

    def _pdf(self, w):
        return self.constants.a_k * self._eval(self.reduced._pdf, w, 0.0, 0.0)

    def _dpdf(self, w):
        return self.constants.a_k ** 2 * self._eval(self.reduced._dpdf, w, 0.0, 0.0)

    def _quantile(self, q):
        return (self.reduced._quantile(q) - self.constants.b_k) / self.constants.a_k

    def _isf(self, p):
        return (self.reduced._isf(p) - self.constants.b_k) / self.constants.a_k

    def hazard_rate_derivative(self, w):
        w = np.asarray(w, dtype=float)
        a = self.constants.a_k
        return a * a * np.asarray(self.reduced.hazard_rate_derivative(self._v(w)))[()]


def normalize(red: Distribution, c: NormalizationConstants) -> NormalizedDistribution:
    return NormalizedDistribution(red, c)


def normalized_cdf(red: Distribution, c: NormalizationConstants, w):
    return NormalizedDistribution(red, c).cdf(w)


def normalized_pdf(red: Distribution, c: NormalizationConstants, w):
    return NormalizedDistribution(red, c).pdf(w)


def normalized_pdf_derivative(red: Distribution, c: NormalizationConstants, w):
    return NormalizedDistribution(red, c).pdf_derivative(w)


# ---------------------------------------------------------------------------
# limit families
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LimitFamily:
    tag: str  # "gumbel", "frechet" or "reverse_weibull"
    alpha: float | None = None

    def __post_init__(self):
        if self.tag not in ("gumbel", "frechet", "reverse_weibull"):
            raise ValueError(f"unknown limit family {self.tag!r}")
        if self.tag == "gumbel":
            if self.alpha is not None:
                raise ValueError("the Gumbel family takes no shape parameter")
        elif self.alpha is None or not self.alpha > 0:
            raise ValueError(f"{self.tag} needs alpha > 0")

    def __str__(self) -> str:
        return self.tag if self.alpha is None else f"{self.tag}({self.alpha:.6g})"

    def cdf(self, w):
        w = np.asarray(w, dtype=float)
        if self.tag == "gumbel":
            out = np.exp(-np.exp(-w))
        elif self.tag == "frechet":
            pos = w > 0
            out = np.where(pos, np.exp(-np.where(pos, w, 1.0) ** -self.alpha), 0.0)
        else:
            neg = w < 0
            out = np.where(neg, np.exp(-(-np.where(neg, w, -1.0)) ** self.alpha), 1.0)
        return out[()]

    def sf(self, w):
        w = np.asarray(w, dtype=float)
        if self.tag == "gumbel":
            out = -np.expm1(-np.exp(-w))
        elif self.tag == "frechet":
            pos = w > 0
            out = np.where(pos, -np.expm1(-np.where(pos, w, 1.0) ** -self.alpha), 1.0)
        else:
            neg = w < 0
            out = np.where(neg, -np.expm1(-(-np.where(neg, w, -1.0)) ** self.alpha), 0.0)
        return out[()]

    def pdf(self, w):
        w = np.asarray(w, dtype=float)
        a = self.alpha
        if self.tag == "gumbel":
            out = np.exp(-w - np.exp(-w))
        elif self.tag == "frechet":
            pos = w > 0
            ww = np.where(pos, w, 1.0)
            out = np.where(pos, a * ww ** (-a - 1) * np.exp(-ww ** -a), 0.0)
        else:
            neg = w < 0
            u = -np.where(neg, w, -1.0)
            out = np.where(neg, a * u ** (a - 1) * np.exp(-u ** a), 0.0)
        return out[()]

    def hazard(self, w):
        w = np.asarray(w, dtype=float)
        if self.tag == "gumbel":
            # e^-w / (exp(e^-w) - 1), written to stay finite for large |w|
            out = np.exp(-w) / np.expm1(np.exp(-w))
            return out[()]
        s = np.asarray(self.sf(w))
        if np.any(s <= 0):
            raise ValueError("hazard undefined where the limit cdf equals 1")
        return (np.asarray(self.pdf(w)) / s)[()]

    def distribution(self) -> Distribution:
        """The Frechet limit as a marginal on ``[0, inf)``; other families are not exposed."""
        if self.tag == "frechet":
            return Frechet(self.alpha)
        raise NotImplementedError(f"no marginal representation for {self.tag}")


def limit_cdf(fam: LimitFamily, w):
    return fam.cdf(w)


def limit_pdf(fam: LimitFamily, w):
    return fam.pdf(w)


def limit_hazard(fam: LimitFamily, w):
    return fam.hazard(w)


def constants_for(G: Distribution, fam: LimitFamily, k: int) -> NormalizationConstants:
    """Normalization constants matching the domain ``fam``; identity at ``k = 1``."""
    if k == 1:
        return IDENTITY
    if fam.tag == "frechet":
        return frechet_constants(G, k)
    if fam.tag == "gumbel":
        return gumbel_constants(G, k)
    # bounded support: a_k = vbar - G^-1(1 - 1/k), b_k = vbar
    vbar = G.support_upper
    return NormalizationConstants(vbar - float(G.isf(1.0 / k)), vbar)


# ---------------------------------------------------------------------------
# domain classification
# ---------------------------------------------------------------------------

TAIL_EXPONENTS = tuple(range(3, 9))
CONVERGENCE_TOL = 1e-3
GUMBEL_TOL = 1e-2


def tail_slopes(G: Distribution, exponents=TAIL_EXPONENTS) -> np.ndarray:
    """Virtual-valuation slopes at the upper quantiles ``1 - 10**-j``."""
    v = np.array([float(G.isf(10.0 ** -j)) for j in exponents])
    return np.asarray(G.virtual_valuation_derivative(v), dtype=float)


def classify_domain(G: Distribution) -> LimitFamily:
    """Domain of attraction from the limit of the virtual-valuation slope.

    The slopes along ``j = 3..8`` are extrapolated pairwise assuming a
    ``1/j`` correction (exact for Weibull-type tails, harmless for tails
    that converge faster). The extrapolated values must settle to within
    ``CONVERGENCE_TOL`` before a family is returned.
    """
    js = np.asarray(TAIL_EXPONENTS, dtype=float)
    gam = tail_slopes(G)
    if not np.all(np.isfinite(gam)):
        raise ClassificationError("no classification: non-finite tail slopes")
    extrap = (js[1:] * gam[1:] - js[:-1] * gam[:-1]) / (js[1:] - js[:-1])
    if abs(extrap[-1] - extrap[-2]) >= CONVERGENCE_TOL:
        raise ClassificationError(f"no classification: tail slopes {gam.tolist()} do not settle")
    limit = float(extrap[-1])
    if math.isfinite(G.support_upper):
        if not limit < 0:
            raise ClassificationError("no classification: bounded support with non-negative tail slope")
        return LimitFamily("reverse_weibull", -1.0 / limit)
    if abs(limit) < GUMBEL_TOL:
        return LimitFamily("gumbel")
    if limit > 0:
        return LimitFamily("frechet", 1.0 / limit)
    raise ClassificationError(f"no classification: negative tail slope {limit} on unbounded support")


def normalized_reduced(G: Distribution, k: int, fam: LimitFamily | None = None) -> NormalizedDistribution:
    """``G_K`` normalized with the constants of ``G``'s domain (classified if not given)."""
    fam = classify_domain(G) if fam is None else fam
    return NormalizedDistribution(ReducedDistribution(G, k), constants_for(G, fam, k))
