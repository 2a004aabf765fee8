"""Efficient mechanisms for the single-dimensional reduced problem.

An agent is summarized by the largest of their values, drawn from ``G_K``.
Residual surplus equals ``E[theta(v) x(v)]`` with ``theta = (1 - G) / g``,
so the efficient rule allocates by the ironed virtual value: pool where the
cumulative curve is convexified, screen where it is not.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .distributions import Distribution, Frechet
from .numerics import (
    NumericalError,
    expand_bracket,
    find_root,
    gauss_legendre_panels,
    integrate,
    lower_hull_indices,
    upper_incomplete_gamma,
)

DEFAULT_N_GRID = 10_000
X_TOL = 1e-9
RS_MISMATCH_TOL = 1e-4
QUAD_TOL = 1e-11


class NotIDHRError(ValueError):
    """Raised when a shortcut that needs an increasing-then-decreasing hazard is misapplied."""


def _integral(fn, dist: Distribution, lo: float, hi: float) -> float:
    if math.isinf(hi):
        scale = max(abs(lo), dist.typical_scale())
        return integrate(fn, lo, hi, QUAD_TOL, scale=scale)
    return integrate(fn, lo, hi, QUAD_TOL)


def survival_integral(dist: Distribution, lo: float, hi: float) -> float:
    """``int_lo^hi (1 - G)``."""
    if hi <= lo:
        return 0.0
    return _integral(dist._sf, dist, lo, hi)


# ---------------------------------------------------------------------------
# ironing
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IronedVirtualValue:
    """Ironed virtual value on the uniform quantile grid ``q_i = i / n``.

    ``values[i]`` is the ironed value on the cell ``(q_i, q_{i+1})``;
    ``flat_ranges`` lists ``(i, j)`` cell-index ranges (end exclusive) where
    the hull lies strictly below the cumulative curve.
    """

    q: np.ndarray
    v: np.ndarray
    H: np.ndarray
    hull: np.ndarray
    values: np.ndarray
    flat_ranges: tuple[tuple[int, int], ...]

    @property
    def n(self) -> int:
        return self.q.size - 1

    def raw_values(self) -> np.ndarray:
        """Cell averages of the un-ironed virtual value."""
        return np.diff(self.H) * self.n

    def at(self, q) -> np.ndarray:
        """Right-continuous ironed value at quantile ``q``."""
        idx = np.clip(np.floor(np.asarray(q, dtype=float) * self.n).astype(int), 0, self.n - 1)
        return self.values[idx]

    def flat_segments_v(self) -> list[tuple[float, float]]:
        return [(float(self.v[i]), float(self.v[j])) for i, j in self.flat_ranges]


def cumulative_virtual_value(dist: Distribution, n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Grid ``q``, matching values ``v = Q(q)`` and ``H(q) = int_0^q theta(Q(r)) dr``.

    Uses ``H(G(v)) = int_lo^v (1 - G)``, which avoids evaluating the virtual
    value where it blows up at either end.
    """
    if not dist.has_finite_mean:
        raise ValueError("ironing needs a finite mean")
    q = np.arange(n + 1) / n
    v = np.empty(n + 1)
    v[0] = dist.support_lower
    v[n] = dist.support_upper
    v[1:n] = dist.quantile(q[1:n])
    cells = np.empty(n)
    cells[: n - 1] = gauss_legendre_panels(dist._sf, v[: n], order=10)
    cells[n - 1] = survival_integral(dist, v[n - 1], v[n])
    H = np.concatenate([[0.0], np.cumsum(cells)])
    return q, v, H


def iron(dist: Distribution, n_grid: int = DEFAULT_N_GRID) -> IronedVirtualValue:
    """Ironed virtual value as slopes of the lower convex hull of ``H``."""
    if n_grid < 100:
        raise ValueError("n_grid must be at least 100")
    q, v, H = cumulative_virtual_value(dist, n_grid)
    hull = lower_hull_indices(q, H)
    values = np.empty(n_grid)
    flat = []
    for i, j in zip(hull[:-1], hull[1:]):
        values[i:j] = (H[j] - H[i]) / (q[j] - q[i])
        if j - i > 1:
            flat.append((int(i), int(j)))
    return IronedVirtualValue(q, v, H, hull, values, tuple(flat))


# ---------------------------------------------------------------------------
# hazard shape and the IDHR threshold
# ---------------------------------------------------------------------------


def _shape_grid(dist: Distribution, size: int = 400) -> np.ndarray:
    # logit-spaced quantiles reach far into both tails
    z = np.linspace(-9.0, 18.0, size)
    p_upper = 1.0 / (1.0 + np.exp(z))
    v = np.asarray(dist.isf(p_upper), dtype=float)
    inside = (v > dist.support_lower) & (v < dist.support_upper) & np.isfinite(v)
    return np.unique(v[inside])


def hazard_shape(dist: Distribution, rel_tol: float = 1e-9) -> str:
    """``"ihr"``, ``"dhr"``, ``"idhr"`` (one up-then-down change) or ``"other"``."""
    v = _shape_grid(dist)
    with np.errstate(all="ignore"):
        d = np.asarray(dist.hazard_rate_derivative(v), dtype=float)
        r = np.asarray(dist.hazard_rate(v), dtype=float)
    ok = np.isfinite(d) & np.isfinite(r) & (r > 0)
    scaled = d[ok] / r[ok] ** 2
    signs = np.sign(np.where(np.abs(scaled) < rel_tol, 0.0, scaled))
    signs = signs[signs != 0]
    if signs.size == 0 or np.all(signs > 0):
        return "ihr"
    if np.all(signs < 0):
        return "dhr"
    changes = np.flatnonzero(np.diff(signs) != 0)
    if changes.size == 1 and signs[0] > 0:
        return "idhr"
    return "other"


def hazard_peak(dist: Distribution) -> float:
    """Location where an IDHR hazard stops increasing."""
    v = _shape_grid(dist)
    d = np.asarray(dist.hazard_rate_derivative(v), dtype=float)
    k = int(np.flatnonzero((d[:-1] > 0) & (d[1:] <= 0))[0])
    return find_root(lambda t: float(dist.hazard_rate_derivative(t)), (v[k], v[k + 1]))


def ironing_gap(dist: Distribution, w: float) -> float:
    """``int_lo^w (1 - G) - theta(w) G(w)``; zero at the end of the pooled region."""
    return survival_integral(dist, dist.support_lower, w) - float(
        dist.virtual_valuation(w) * dist.cdf(w))


TAIL_CAP = 1e-14


def idhr_threshold(dist: Distribution) -> float:
    """Right end ``w**`` of the pooled region for an IDHR distribution.

    Returns ``inf`` when the pooled region extends past the quantile
    ``1 - TAIL_CAP``, i.e. when screening would only touch a negligible tail.
    """
    shape = hazard_shape(dist)
    if shape != "idhr":
        raise NotIDHRError(f"hazard rate is {shape}, not increasing-then-decreasing; use iron()")
    w_star = hazard_peak(dist)
    f = lambda w: ironing_gap(dist, w)
    cap = float(dist.isf(TAIL_CAP))
    f_star = f(w_star)
    width = max(w_star - dist.support_lower, 1e-3)
    lo = w_star
    while True:
        hi = min(lo + width, cap)
        if np.sign(f(hi)) != np.sign(f_star):
            return find_root(f, (lo, hi))
        if hi >= cap:
            return math.inf
        lo, width = hi, 2.0 * width


def frechet_wstar(alpha: float) -> float:
    """Peak of the Frechet hazard: ``y / (1 - e^-y) = (alpha + 1) / alpha`` with ``y = w^-alpha``."""
    if not alpha > 1:
        raise ValueError("Frechet thresholds need alpha > 1")
    target = (alpha + 1.0) / alpha
    f = lambda y: y / -math.expm1(-y) - target
    y = find_root(f, expand_bracket(f, 1e-12, 1.0))
    return y ** (-1.0 / alpha)


def frechet_wdstar_residual(alpha: float, w: float) -> float:
    y = w ** -alpha
    tail = -math.expm1(-y)
    return tail * w + upper_incomplete_gamma((alpha - 1.0) / alpha, y) - tail * w ** (alpha + 1.0) / alpha


def frechet_wdstar(alpha: float) -> float:
    """End of the pooled region for the Frechet limit ``Phi_alpha``."""
    w_star = frechet_wstar(alpha)
    f = lambda w: frechet_wdstar_residual(alpha, w)
    return find_root(f, expand_bracket(f, w_star, 2.0 * w_star), tol=1e-13)


def frechet_cdf(alpha: float, w: float) -> float:
    return math.exp(-(w ** -alpha))


# ---------------------------------------------------------------------------
# mechanisms
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MechanismSegment:
    v_lo: float
    v_hi: float
    x: float
    mass: float


@dataclass(frozen=True)
class ReducedMechanism:
    """Piecewise-constant monotone allocation on consecutive value intervals."""

    segments: tuple[MechanismSegment, ...]
    m_bar: float
    payments: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.segments:
            raise ValueError("a mechanism needs at least one segment")
        xs = np.array([s.x for s in self.segments])
        if np.any(xs < -X_TOL) or np.any(xs > 1 + X_TOL):
            raise ValueError("allocations must lie in [0, 1]")
        if np.any(np.diff(xs) < -X_TOL):
            raise ValueError("allocation must be nondecreasing in value")
        for a, b in zip(self.segments[:-1], self.segments[1:]):
            if a.v_hi != b.v_lo:
                raise ValueError("segments must be contiguous")
        object.__setattr__(self, "payments", payments_from_allocation(self))

    @property
    def x(self) -> np.ndarray:
        return np.array([s.x for s in self.segments])

    @property
    def edges(self) -> np.ndarray:
        return np.array([self.segments[0].v_lo] + [s.v_hi for s in self.segments])

    def supply(self) -> float:
        return math.fsum(s.x * s.mass for s in self.segments)

    def _locate(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        return np.clip(np.searchsorted(self.edges[1:-1], v, side="right"), 0, len(self.segments) - 1)

    def allocation(self, v):
        return self.x[self._locate(v)][()]

    def payment(self, v):
        return self.payments[self._locate(v)][()]

    def largest_segment_mass(self) -> float:
        return max(s.mass for s in self.segments)

    def to_dict(self, rs: float | None = None) -> dict:
        return {
            "segments": [
                {"v_lo": s.v_lo, "v_hi": s.v_hi, "x": s.x, "p": float(p)}
                for s, p in zip(self.segments, self.payments)
            ],
            "m_bar": self.m_bar,
            "rs": rs,
        }


def payments_from_allocation(mech: ReducedMechanism) -> np.ndarray:
    """Per-segment payments ``p(v) = v x(v) - int_lo^v x - lo x(lo)``.

    For a step allocation this is the sum of allocation jumps weighted by
    the value at which they occur; the lowest type pays nothing.
    """
    xs = np.array([s.x for s in mech.segments])
    jumps = np.diff(xs, prepend=xs[0])
    lows = np.array([s.v_lo for s in mech.segments])
    return np.cumsum(jumps * np.where(jumps != 0, lows, 0.0))


def _segments_from_pieces(dist: Distribution, pieces) -> tuple[MechanismSegment, ...]:
    """Merge ``(v_lo, v_hi, x)`` pieces with equal ``x`` and attach masses."""
    merged: list[list[float]] = []
    for lo, hi, x in pieces:
        if hi <= lo:
            continue
        if merged and abs(merged[-1][2] - x) <= X_TOL:
            merged[-1][1] = hi
        else:
            merged.append([lo, hi, x])
    out = []
    for lo, hi, x in merged:
        mass = float(dist.cdf(hi) - dist.cdf(lo)) if math.isfinite(hi) else float(dist.sf(lo))
        out.append(MechanismSegment(float(lo), float(hi), float(x), mass))
    return tuple(out)


def _check_m_bar(m_bar: float):
    if not 0 < m_bar < 1:
        raise ValueError("m_bar must lie in (0, 1)")


def no_screening(dist: Distribution, m_bar: float) -> ReducedMechanism:
    """Everyone gets the good with probability ``m_bar``; no payments."""
    _check_m_bar(m_bar)
    return ReducedMechanism(
        _segments_from_pieces(dist, [(dist.support_lower, dist.support_upper, m_bar)]), m_bar)


def full_screening(dist: Distribution, m_bar: float) -> ReducedMechanism:
    """Posted price at the ``1 - m_bar`` quantile."""
    _check_m_bar(m_bar)
    q = float(dist.isf(m_bar))
    pieces = [(dist.support_lower, q, 0.0), (q, dist.support_upper, 1.0)]
    return ReducedMechanism(_segments_from_pieces(dist, pieces), m_bar)


def two_tier(dist: Distribution, m_bar: float, w2: float) -> ReducedMechanism:
    """Full allocation above ``w2``; the remaining supply pooled below it."""
    top = float(dist.sf(w2))
    if top >= m_bar:
        return full_screening(dist, m_bar)
    x_low = (m_bar - top) / float(dist.cdf(w2))
    pieces = [(dist.support_lower, w2, x_low), (w2, dist.support_upper, 1.0)]
    return ReducedMechanism(_segments_from_pieces(dist, pieces), m_bar)


def _hull_mechanism(dist: Distribution, m_bar: float, n_grid: int) -> ReducedMechanism:
    iv = iron(dist, n_grid)
    n = iv.n
    # hull segments from the top down; the ironed value is nondecreasing in q
    hull = iv.hull
    remaining = m_bar
    x_cells = np.zeros(n)
    split: tuple[int, float] | None = None
    for i, j in zip(hull[::-1][1:], hull[::-1][:-1]):
        mass = (j - i) / n
        if remaining >= mass - 1e-15:
            x_cells[i:j] = 1.0
            remaining -= mass
            continue
        if remaining > 0:
            if j - i == 1:
                # a single unpooled cell: screen at the exact quantile
                cut = min(max(float(dist.isf(m_bar)), iv.v[i]), iv.v[j])
                split = (i, cut)
                x_cells[i] = math.nan
            else:
                x_cells[i:j] = remaining / mass
        remaining = 0.0
        break
    pieces = []
    for c in range(n):
        lo, hi = iv.v[c], iv.v[c + 1]
        if split is not None and c == split[0]:
            pieces.append((lo, split[1], 0.0))
            pieces.append((split[1], hi, 1.0))
        else:
            pieces.append((lo, hi, x_cells[c]))
    return ReducedMechanism(_segments_from_pieces(dist, pieces), m_bar)


def efficient_reduced_mechanism(
    dist: Distribution,
    m_bar: float,
    method: str = "auto",
    n_grid: int = DEFAULT_N_GRID,
) -> ReducedMechanism:
    """Residual-surplus-maximizing allocation of supply ``m_bar``.

    ``method="auto"`` uses exact rules when the hazard is monotone (pooling
    for IHR, posted price for DHR) or increasing-then-decreasing (pool below
    ``w**``, allocate fully above it). Other shapes, or ``method="hull"``, go
    through the ironed virtual value on a quantile grid.
    """
    _check_m_bar(m_bar)
    if method not in ("auto", "hull"):
        raise ValueError(f"unknown method {method!r}")
    if method == "auto":
        shape = hazard_shape(dist)
        if shape == "ihr":
            return no_screening(dist, m_bar)
        if shape == "dhr":
            return full_screening(dist, m_bar)
        if shape == "idhr":
            return two_tier(dist, m_bar, idhr_threshold(dist))
    return _hull_mechanism(dist, m_bar, n_grid)


@dataclass(frozen=True)
class SurplusBreakdown:
    direct: float
    virtual: float

    @property
    def value(self) -> float:
        return self.virtual


def residual_surplus_both(dist: Distribution, mech: ReducedMechanism) -> SurplusBreakdown:
    """Residual surplus as ``E[v x - p]`` and as ``E[theta x]``, separately."""
    gross, burned, virtual = [], [], []
    for s, p in zip(mech.segments, mech.payments):
        if s.x != 0.0:
            gross.append(s.x * _integral(lambda v: v * dist._pdf(v), dist, s.v_lo, s.v_hi))
            virtual.append(s.x * survival_integral(dist, s.v_lo, s.v_hi))
        burned.append(p * s.mass)
    lo_term = dist.support_lower * mech.segments[0].x
    direct = math.fsum(gross) - math.fsum(burned)
    return SurplusBreakdown(direct, math.fsum(virtual) + lo_term)


def residual_surplus(dist: Distribution, mech: ReducedMechanism) -> float:
    """Residual surplus, cross-checked between the direct and virtual forms."""
    rs = residual_surplus_both(dist, mech)
    if abs(rs.direct - rs.virtual) > RS_MISMATCH_TOL:
        raise NumericalError(
            f"residual surplus mismatch: direct {rs.direct!r} vs virtual {rs.virtual!r}")
    return rs.value


def frechet_mechanism(alpha: float, m_bar: float) -> ReducedMechanism:
    """Efficient rule for the Frechet limit using the closed-form threshold."""
    return two_tier(Frechet(alpha), m_bar, frechet_wdstar(alpha))
