"""Marginal value distributions and the largest-order-statistic reduction.

Every distribution exposes ``cdf``, ``sf``, ``pdf``, ``pdf_derivative``,
``quantile`` and ``isf`` as vectorized numpy functions, plus the hazard-rate
and virtual-valuation machinery built on top of them. The virtual valuation
here is the one for residual surplus, ``(1 - G) / g``, i.e. the reciprocal of
the hazard rate.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .numerics import integrate

PROB_ONE_TOL = 1e-14


class OutOfSupportError(ValueError):
    """Evaluation point outside the support; ``side`` is ``"below"`` or ``"above"``."""

    def __init__(self, side: str, value, lower: float, upper: float):
        super().__init__(f"value {value!r} is {side} the support [{lower}, {upper}]")
        self.side = side


def _scalar_or_array(x: np.ndarray):
    return x[()] if x.ndim == 0 else x


class Distribution:
    """Common interface and hazard machinery for a univariate distribution.

    Subclasses implement the private ``_cdf``/``_sf``/``_pdf``/``_dpdf``/
    ``_quantile``/``_isf`` on arrays already checked against the support.
    """

    support_lower: float = 0.0
    support_upper: float = math.inf
    # when False, points outside the support are clamped (cdf 0/1, pdf 0)
    strict_support: bool = True

    # -- support handling -------------------------------------------------
    def _check(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if not self.strict_support:
            return v
        if np.any(v < self.support_lower):
            raise OutOfSupportError("below", v[v < self.support_lower].min(),
                                    self.support_lower, self.support_upper)
        if np.any(v > self.support_upper):
            raise OutOfSupportError("above", v[v > self.support_upper].max(),
                                    self.support_lower, self.support_upper)
        return v

    @staticmethod
    def _check_prob(q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if np.any((q < 0) | (q > 1)):
            raise ValueError("probabilities must lie in [0, 1]")
        return q

    # -- public evaluation --------------------------------------------------
    def cdf(self, v):
        return _scalar_or_array(self._cdf(self._check(v)))

    def sf(self, v):
        return _scalar_or_array(self._sf(self._check(v)))

    def pdf(self, v):
        return _scalar_or_array(self._pdf(self._check(v)))

    def pdf_derivative(self, v):
        return _scalar_or_array(self._dpdf(self._check(v)))

    def quantile(self, q):
        return _scalar_or_array(self._quantile(self._check_prob(q)))

    def isf(self, p):
        """Inverse survival function, ``quantile(1 - p)`` without the cancellation."""
        return _scalar_or_array(self._isf(self._check_prob(p)))

    # default survival via the cdf; families override with accurate forms
    def _sf(self, v):
        return 1.0 - self._cdf(v)

    def _isf(self, p):
        return self._quantile(1.0 - p)

    # -- hazard / virtual valuation ----------------------------------------
    def _sf_checked(self, v: np.ndarray) -> np.ndarray:
        s = self._sf(v)
        if np.any(s <= PROB_ONE_TOL):
            raise ValueError("hazard quantities undefined where cdf(v) = 1")
        return s

    def hazard_rate(self, v):
        v = self._check(v)
        return _scalar_or_array(self._pdf(v) / self._sf_checked(v))

    def hazard_rate_derivative(self, v):
        v = self._check(v)
        s = self._sf_checked(v)
        g = self._pdf(v)
        return _scalar_or_array((self._dpdf(v) * s + g * g) / (s * s))

    def virtual_valuation(self, v):
        v = self._check(v)
        g = self._pdf(v)
        if np.any(g <= 0):
            raise ValueError("virtual valuation undefined where pdf(v) = 0")
        return _scalar_or_array(self._sf(v) / g)

    def virtual_valuation_derivative(self, v):
        v = self._check(v)
        g = self._pdf(v)
        if np.any(g <= 0):
            raise ValueError("virtual valuation undefined where pdf(v) = 0")
        return _scalar_or_array((-g * g - self._dpdf(v) * self._sf(v)) / (g * g))

    # -- moments -----------------------------------------------------------
    @property
    def has_finite_mean(self) -> bool:
        return True

    def typical_scale(self) -> float:
        """A length scale for quadrature substitutions (interquartile-ish)."""
        q1, q3 = self._quantile(np.array([0.25, 0.75]))
        return max(float(q3 - q1), 1e-3)

    def mean(self, tol: float = 1e-11) -> float:
        if not self.has_finite_mean:
            raise ValueError(f"{self!r} has no finite mean")
        lo = self.support_lower
        if lo != 0.0:
            raise NotImplementedError("mean() assumes support starting at 0")
        return integrate(self._sf, 0.0, self.support_upper, tol, scale=self.typical_scale())


# ---------------------------------------------------------------------------
# marginal families
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Exponential(Distribution):
    rate: float = 1.0

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError("Exponential rate must be positive")

    @property
    def spec(self) -> str:
        return f"exp:{self.rate:g}"

    def _cdf(self, v):
        return -np.expm1(-self.rate * v)

    def _sf(self, v):
        return np.exp(-self.rate * v)

    def _pdf(self, v):
        return self.rate * np.exp(-self.rate * v)

    def _dpdf(self, v):
        return -self.rate ** 2 * np.exp(-self.rate * v)

    def _quantile(self, q):
        return -np.log1p(-q) / self.rate

    def _isf(self, p):
        with np.errstate(divide="ignore"):
            return -np.log(p) / self.rate


@dataclass(frozen=True)
class Weibull(Distribution):
    """Unit-scale Weibull, ``G(v) = 1 - exp(-v**shape)``."""

    shape: float

    def __post_init__(self):
        if not self.shape > 0:
            raise ValueError("Weibull shape must be positive")

    @property
    def spec(self) -> str:
        return f"weibull:{self.shape:g}"

    def _cdf(self, v):
        return -np.expm1(-v ** self.shape)

    def _sf(self, v):
        return np.exp(-v ** self.shape)

    def _pdf(self, v):
        a = self.shape
        with np.errstate(divide="ignore", invalid="ignore"):
            return a * v ** (a - 1) * np.exp(-v ** a)

    def _dpdf(self, v):
        a = self.shape
        with np.errstate(divide="ignore", invalid="ignore"):
            return a * v ** (a - 2) * np.exp(-v ** a) * ((a - 1) - a * v ** a)

    def _quantile(self, q):
        return (-np.log1p(-q)) ** (1.0 / self.shape)

    def _isf(self, p):
        with np.errstate(divide="ignore"):
            return (-np.log(p)) ** (1.0 / self.shape)


@dataclass(frozen=True)
class ShiftedPareto(Distribution):
    """Pareto shifted to start at zero, ``G(v) = 1 - (1 + v)**-shape``."""

    shape: float

    def __post_init__(self):
        if not self.shape > 0:
            raise ValueError("ShiftedPareto shape must be positive")

    @property
    def spec(self) -> str:
        return f"spareto:{self.shape:g}"

    @property
    def has_finite_mean(self) -> bool:
        return self.shape > 1

    def _cdf(self, v):
        return -np.expm1(-self.shape * np.log1p(v))

    def _sf(self, v):
        return (1.0 + v) ** -self.shape

    def _pdf(self, v):
        return self.shape * (1.0 + v) ** (-self.shape - 1)

    def _dpdf(self, v):
        a = self.shape
        return -a * (a + 1) * (1.0 + v) ** (-a - 2)

    def _quantile(self, q):
        return np.expm1(-np.log1p(-q) / self.shape)

    def _isf(self, p):
        with np.errstate(divide="ignore"):
            return np.expm1(-np.log(p) / self.shape)


@dataclass(frozen=True)
class Frechet(Distribution):
    """Unit-scale Frechet, ``G(v) = exp(-v**-shape)`` on ``v >= 0``."""

    shape: float

    def __post_init__(self):
        if not self.shape > 0:
            raise ValueError("Frechet shape must be positive")

    @property
    def spec(self) -> str:
        return f"frechet:{self.shape:g}"

    @property
    def has_finite_mean(self) -> bool:
        return self.shape > 1

    def _y(self, v):
        with np.errstate(divide="ignore"):
            return v ** -self.shape

    def _cdf(self, v):
        return np.exp(-self._y(v))

    def _sf(self, v):
        return -np.expm1(-self._y(v))

    def _pdf(self, v):
        a = self.shape
        pos = v > 0
        vv = np.where(pos, v, 1.0)
        return np.where(pos, a * vv ** (-a - 1) * np.exp(-vv ** -a), 0.0)

    def _dpdf(self, v):
        a = self.shape
        pos = v > 0
        vv = np.where(pos, v, 1.0)
        y = vv ** -a
        return np.where(pos, a * vv ** (-a - 2) * np.exp(-y) * (a * y - (a + 1)), 0.0)

    def _quantile(self, q):
        with np.errstate(divide="ignore"):
            return (-np.log(q)) ** (-1.0 / self.shape)

    def _isf(self, p):
        with np.errstate(divide="ignore"):
            return (-np.log1p(-p)) ** (-1.0 / self.shape)


_GUMBEL_AT_ZERO = math.exp(-1.0)


@dataclass(frozen=True)
class Gumbel(Distribution):
    """Standard Gumbel ``exp(-exp(-v))`` truncated to ``[0, inf)`` and renormalized."""

    @property
    def spec(self) -> str:
        return "gumbel"

    def _cdf(self, v):
        return (np.exp(-np.exp(-v)) - _GUMBEL_AT_ZERO) / (1.0 - _GUMBEL_AT_ZERO)

    def _sf(self, v):
        return -np.expm1(-np.exp(-v)) / (1.0 - _GUMBEL_AT_ZERO)

    def _pdf(self, v):
        return np.exp(-v - np.exp(-v)) / (1.0 - _GUMBEL_AT_ZERO)

    def _dpdf(self, v):
        return np.exp(-v - np.exp(-v)) * (np.exp(-v) - 1.0) / (1.0 - _GUMBEL_AT_ZERO)

    def _quantile(self, q):
        y = _GUMBEL_AT_ZERO + q * (1.0 - _GUMBEL_AT_ZERO)
        with np.errstate(divide="ignore"):
            return -np.log(-np.log(y))

    def _isf(self, p):
        with np.errstate(divide="ignore"):
            return -np.log(-np.log1p(-p * (1.0 - _GUMBEL_AT_ZERO)))


@dataclass(frozen=True)
class Uniform(Distribution):
    upper: float = 1.0

    def __post_init__(self):
        if not self.upper > 0:
            raise ValueError("Uniform upper bound must be positive")
        object.__setattr__(self, "support_upper", float(self.upper))

    @property
    def spec(self) -> str:
        return f"uniform:{self.upper:g}"

    def typical_scale(self) -> float:
        return self.upper

    def _cdf(self, v):
        return v / self.upper

    def _sf(self, v):
        return 1.0 - v / self.upper

    def _pdf(self, v):
        return np.full_like(v, 1.0 / self.upper)

    def _dpdf(self, v):
        return np.zeros_like(v)

    def _quantile(self, q):
        return q * self.upper

    def _isf(self, p):
        return (1.0 - p) * self.upper


# ---------------------------------------------------------------------------
# largest order statistic
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ReducedDistribution(Distribution):
    """Distribution of ``max(v_1, ..., v_k)`` for ``k`` i.i.d. draws from ``base``."""

    base: Distribution
    k: int

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise ValueError("k must be a positive integer")
        object.__setattr__(self, "k", int(self.k))
        object.__setattr__(self, "support_lower", self.base.support_lower)
        object.__setattr__(self, "support_upper", self.base.support_upper)

    @property
    def spec(self) -> str:
        return f"{self.base.spec} (K={self.k})"

    @property
    def has_finite_mean(self) -> bool:
        return self.base.has_finite_mean

    def typical_scale(self) -> float:
        return self.base.typical_scale()

    def _log_base_cdf(self, v):
        s = self.base._sf(v)
        c = self.base._cdf(v)
        with np.errstate(divide="ignore"):
            return np.where(s < 0.5, np.log1p(-s), np.log(c))

    def _cdf(self, v):
        return np.exp(self.k * self._log_base_cdf(v))

    def _sf(self, v):
        return -np.expm1(self.k * self._log_base_cdf(v))

    def _pdf(self, v):
        k = self.k
        g = self.base._pdf(v)
        if k == 1:
            return g
        with np.errstate(invalid="ignore"):
            out = k * g * np.exp((k - 1) * self._log_base_cdf(v))
        # limit at the bottom of the support (G = 0) is taken as 0
        return np.where(np.isnan(out), 0.0, out)

    def _dpdf(self, v):
        k = self.k
        if k == 1:
            return self.base._dpdf(v)
        g = self.base._pdf(v)
        dg = self.base._dpdf(v)
        lg = self._log_base_cdf(v)
        with np.errstate(invalid="ignore", over="ignore"):
            out = k * (k - 1) * g * g * np.exp((k - 2) * lg) + k * dg * np.exp((k - 1) * lg)
        return np.where(np.isnan(out), 0.0, out)

    def _quantile(self, q):
        with np.errstate(divide="ignore"):
            root = np.exp(np.log(q) / self.k)
            upper = -np.expm1(np.log(q) / self.k)
        return np.where(root < 0.5, self.base._quantile(root), self.base._isf(upper))

    def _isf(self, p):
        with np.errstate(divide="ignore"):
            upper = -np.expm1(np.log1p(-p) / self.k)
        return self.base._isf(upper)

    def ihr_margin(self, v):
        """``K g^2 - (g^2 - g' G)(1 - G^K)``; same sign as the hazard derivative."""
        v = self._check(v)
        g = self.base._pdf(v)
        dg = self.base._dpdf(v)
        big_g = self.base._cdf(v)
        return _scalar_or_array(self.k * g * g - (g * g - dg * big_g) * self._sf(v))

    def hazard_rate_derivative(self, v):
        """Closed form ``K G^(K-2) / (1 - G^K)^2 * ihr_margin`` for ``v > 0``."""
        v = self._check(v)
        if np.any(v <= self.support_lower) or np.any(v >= self.support_upper):
            raise ValueError("hazard derivative of the reduced distribution needs interior v")
        s = self._sf_checked(v)
        lg = self._log_base_cdf(v)
        margin = np.asarray(self.ihr_margin(v))
        return _scalar_or_array(self.k * np.exp((self.k - 2) * lg) / (s * s) * margin)


def reduced(dist: Distribution, k: int) -> ReducedDistribution:
    return ReducedDistribution(dist, k)


# module-level aliases mirroring the method names
def hazard_rate(dist: Distribution, v):
    return dist.hazard_rate(v)


def hazard_rate_derivative(dist: Distribution, v):
    return dist.hazard_rate_derivative(v)


def virtual_valuation(dist: Distribution, v):
    return dist.virtual_valuation(v)


def virtual_valuation_derivative(dist: Distribution, v):
    return dist.virtual_valuation_derivative(v)


# ---------------------------------------------------------------------------
# spec strings: family:param[,param]
# ---------------------------------------------------------------------------

_SPEC_RE = re.compile(r"^([a-z]+)(?::((?:[0-9]+(?:\.[0-9]*)?|\.[0-9]+)(?:,(?:[0-9]+(?:\.[0-9]*)?|\.[0-9]+))*))?$")

_FAMILIES = {
    "exp": (Exponential, (0, 1)),
    "weibull": (Weibull, (1, 1)),
    "spareto": (ShiftedPareto, (1, 1)),
    "frechet": (Frechet, (1, 1)),
    "gumbel": (Gumbel, (0, 0)),
    "uniform": (Uniform, (0, 1)),
}


class DistributionSpecError(ValueError):
    pass


def parse_distribution(spec: str) -> Distribution:
    """Parse ``family:param[,param]``, e.g. ``weibull:0.9`` or ``spareto:2``."""
    m = _SPEC_RE.match(spec)
    if m is None:
        raise DistributionSpecError(f"malformed distribution spec {spec!r}")
    family, raw = m.group(1), m.group(2)
    if family not in _FAMILIES:
        raise DistributionSpecError(f"unknown family {family!r}; expected one of {sorted(_FAMILIES)}")
    cls, (min_args, max_args) = _FAMILIES[family]
    params = [float(p) for p in raw.split(",")] if raw else []
    if not min_args <= len(params) <= max_args:
        raise DistributionSpecError(f"{family} takes {min_args}..{max_args} parameters, got {len(params)}")
    try:
        return cls(*params)
    except ValueError as exc:
        raise DistributionSpecError(str(exc)) from exc
