"""Numerical kernels shared by the rest of the package.

Adaptive Gauss-Kronrod quadrature, bracketed root finding, the upper
incomplete gamma function and a lower convex hull for planar point lists.
Everything here is a pure function of its inputs.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import optimize

DEFAULT_INTEGRATION_TOL = 1e-9
DEFAULT_ROOT_TOL = 1e-10


class NumericalError(RuntimeError):
    """Base class for numerical failures (non-convergence, bad brackets)."""


class IntegrationError(NumericalError):
    def __init__(self, message: str, estimate: float, error: float):
        super().__init__(f"{message} (estimate={estimate!r}, error={error!r})")
        self.estimate = estimate
        self.error = error


class RootFindingError(NumericalError):
    pass


# Gauss-Kronrod 7/15 abscissae and weights (QUADPACK qk15).
_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])
# Full 15-point node set on [-1, 1]; the Gauss nodes are the odd-indexed Kronrod ones.
_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
_KW = np.concatenate([_WGK[:-1], _WGK[::-1]])
_GW = np.zeros(15)
_GW[[1, 3, 5, 7, 9, 11, 13]] = np.concatenate([_WG[:-1], _WG[::-1]])


def _vectorize(f: Callable) -> Callable[[np.ndarray], np.ndarray]:
    def g(x: np.ndarray) -> np.ndarray:
        try:
            y = np.asarray(f(x), dtype=float)
        except TypeError:  # scalar-only callable
            y = None
        if y is None or y.shape != x.shape:
            y = np.array([float(f(xi)) for xi in x.ravel()]).reshape(x.shape)
        return y
    return g


def _gk15(f, a: float, b: float) -> tuple[float, float]:
    """Kronrod estimate and QUADPACK-style error estimate on [a, b]."""
    half = 0.5 * (b - a)
    center = 0.5 * (a + b)
    y = f(center + half * _NODES)
    if not np.all(np.isfinite(y)):
        raise IntegrationError(f"non-finite integrand on [{a}, {b}]", math.nan, math.inf)
    kron = half * float(_KW @ y)
    gauss = half * float(_GW @ y)
    mean = 0.5 * kron / half if half else 0.0
    resasc = abs(half) * float(_KW @ np.abs(y - mean))
    err = abs(kron - gauss)
    if resasc != 0.0 and err != 0.0:
        err = resasc * min(1.0, (200.0 * err / resasc) ** 1.5)
    resabs = abs(half) * float(_KW @ np.abs(y))
    if resabs > np.finfo(float).tiny / (50 * np.finfo(float).eps):
        err = max(50 * np.finfo(float).eps * resabs, err)
    return kron, err


def integrate(
    f: Callable,
    lo: float,
    hi: float,
    tol: float = DEFAULT_INTEGRATION_TOL,
    *,
    scale: float = 1.0,
    max_intervals: int = 5000,
) -> float:
    """Integrate ``f`` over ``[lo, hi]`` by adaptive Gauss-Kronrod bisection.

    ``f`` should accept a numpy array; scalar-only callables are evaluated
    point by point. An infinite ``hi`` is handled through the substitution
    ``v = lo + scale * t / (1 - t)`` on ``t in [0, 1)``; ``scale`` should be
    of the order of the integrand's decay length.

    Raises
    ------
    IntegrationError
        If the error estimate does not fall below ``tol`` within
        ``max_intervals`` subintervals. The partial estimate is attached.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if math.isinf(lo):
        raise ValueError("lower limit must be finite")
    if hi == lo:
        return 0.0
    if hi < lo:
        return -integrate(f, hi, lo, tol, scale=scale, max_intervals=max_intervals)

    fv = _vectorize(f)
    if math.isinf(hi):
        if scale <= 0:
            raise ValueError("scale must be positive")

        def g(t: np.ndarray) -> np.ndarray:
            one_minus = 1.0 - t
            out = np.zeros_like(t)
            inner = one_minus > 0  # t rounded to 1 maps to v = inf, where f has vanished
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                om = one_minus[inner]
                out[inner] = fv(lo + scale * t[inner] / om) * scale / (om * om)
            return out

        a, b = 0.0, 1.0
    else:
        g, a, b = fv, float(lo), float(hi)

    val, err = _gk15(g, a, b)
    heap = [(-err, a, b, val)]
    total, total_err = val, err
    while total_err > tol:
        if len(heap) >= max_intervals:
            raise IntegrationError("maximum subdivisions reached", total, total_err)
        neg_err, a0, b0, v0 = heapq.heappop(heap)
        mid = 0.5 * (a0 + b0)
        if not (a0 < mid < b0):
            # interval cannot be split further in double precision; accept it
            heapq.heappush(heap, (0.0, a0, b0, v0))
            total_err += neg_err
            if all(e == 0.0 for e, *_ in heap):
                break
            continue
        v1, e1 = _gk15(g, a0, mid)
        v2, e2 = _gk15(g, mid, b0)
        total += v1 + v2 - v0
        total_err += e1 + e2 + neg_err
        heapq.heappush(heap, (-e1, a0, mid, v1))
        heapq.heappush(heap, (-e2, mid, b0, v2))
    # re-sum to shed the drift accumulated by incremental updates
    return math.fsum(v for *_, v in heap)


@dataclass(frozen=True)
class Bracket:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"bracket requires lo < hi, got [{self.lo}, {self.hi}]")


def find_root(
    f: Callable[[float], float],
    bracket: Bracket | Sequence[float],
    tol: float = DEFAULT_ROOT_TOL,
    maxiter: int = 200,
) -> float:
    """Brent's method on a sign-changing bracket; the result lies inside it."""
    if not isinstance(bracket, Bracket):
        bracket = Bracket(*bracket)
    flo, fhi = f(bracket.lo), f(bracket.hi)
    if flo == 0.0:
        return bracket.lo
    if fhi == 0.0:
        return bracket.hi
    if not (np.isfinite(flo) and np.isfinite(fhi)) or np.sign(flo) == np.sign(fhi):
        raise RootFindingError(
            f"no sign change over [{bracket.lo}, {bracket.hi}]: f={flo!r}, {fhi!r}"
        )
    try:
        root, info = optimize.brentq(
            f, bracket.lo, bracket.hi, xtol=tol, rtol=4 * np.finfo(float).eps,
            maxiter=maxiter, full_output=True, disp=False,
        )
    except (ValueError, RuntimeError) as exc:
        raise RootFindingError(str(exc)) from exc
    if not info.converged:
        raise RootFindingError(f"brent did not converge in {maxiter} iterations: {info.flag}")
    return float(min(max(root, bracket.lo), bracket.hi))


def expand_bracket(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    factor: float = 2.0,
    max_steps: int = 200,
) -> Bracket:
    """Grow ``hi`` geometrically (relative to ``lo``) until ``f`` changes sign."""
    flo = f(lo)
    width = hi - lo
    for _ in range(max_steps):
        if np.sign(f(hi)) != np.sign(flo):
            return Bracket(lo, hi)
        width *= factor
        hi = lo + width
    raise RootFindingError(f"no sign change found above {lo} after {max_steps} expansions")


def upper_incomplete_gamma(s: float, x: float) -> float:
    """Upper incomplete gamma ``Gamma(s, x) = int_x^inf t^(s-1) e^-t dt``.

    Power series of the lower function below ``x = s + 1``, modified Lentz
    continued fraction above it.
    """
    if not s > 0:
        raise ValueError(f"upper_incomplete_gamma needs s > 0, got {s}")
    if not x >= 0:
        raise ValueError(f"upper_incomplete_gamma needs x >= 0, got {x}")
    if x == 0:
        return math.gamma(s)
    if math.isinf(x):
        return 0.0
    log_prefactor = s * math.log(x) - x
    if x < s + 1.0:
        term = 1.0 / s
        total = term
        ap = s
        for _ in range(10_000):
            ap += 1.0
            term *= x / ap
            total += term
            if abs(term) < abs(total) * 1e-17:
                break
        else:
            raise NumericalError(f"incomplete gamma series did not converge (s={s}, x={x})")
        lower = math.exp(log_prefactor) * total
        return math.gamma(s) - lower
    tiny = 1e-300
    b = x + 1.0 - s
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 10_000):
        an = -i * (i - s)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    else:
        raise NumericalError(f"incomplete gamma fraction did not converge (s={s}, x={x})")
    return math.exp(log_prefactor) * h


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def lower_hull_indices(q: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Indices of the points forming the lower convex hull (collinear points dropped)."""
    q = np.asarray(q, dtype=float)
    h = np.asarray(h, dtype=float)
    if q.ndim != 1 or q.shape != h.shape:
        raise ValueError("q and H must be 1-d arrays of equal length")
    if q.size < 2:
        raise ValueError("lower_convex_hull needs at least two points")
    if np.any(np.diff(q) <= 0):
        raise ValueError("q must be strictly increasing")
    hull: list[int] = []
    for i in range(q.size):
        p = (q[i], h[i])
        while len(hull) >= 2:
            o, a = hull[-2], hull[-1]
            if _cross((q[o], h[o]), (q[a], h[a]), p) <= 0.0:
                hull.pop()
            else:
                break
        hull.append(i)
    return np.asarray(hull, dtype=int)


def lower_convex_hull(points) -> np.ndarray:
    """Lower convex hull of ``(q, H)`` points with strictly increasing ``q``.

    Returns the retained points as an ``(m, 2)`` array, left to right.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must be a sequence of (q, H) pairs")
    idx = lower_hull_indices(pts[:, 0], pts[:, 1])
    return pts[idx]


def gauss_legendre_panels(f: Callable, edges: np.ndarray, order: int = 8) -> np.ndarray:
    """Integrals of a vectorized ``f`` over each panel ``[edges[i], edges[i+1]]``."""
    nodes, weights = np.polynomial.legendre.leggauss(order)
    a = edges[:-1, None]
    b = edges[1:, None]
    x = 0.5 * (a + b) + 0.5 * (b - a) * nodes[None, :]
    return 0.5 * (edges[1:] - edges[:-1]) * (f(x) @ weights)
