"""Discretized linear program for efficient multi-object mechanisms.

Each dimension of the value space is cut into ``n`` equal-probability cells;
a mechanism assigns every grid point an allocation vector and a payment.
Incentive compatibility is imposed for every ordered pair of grid points.
Solved with HiGHS through ``scipy.optimize.linprog``.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import optimize, sparse

from .distributions import Distribution
from .numerics import integrate

MAX_GRID_POINTS = 100_000
WEIGHT_TOL = 1e-12
CHECK_TOL = 1e-9

HIGHS_OPTIONS = {
    "primal_feasibility_tolerance": 1e-10,
    "dual_feasibility_tolerance": 1e-10,
    "presolve": True,
}


class GridTooLargeError(ValueError):
    pass


class LPSolveError(RuntimeError):
    def __init__(self, message: str, best_bound: float | None = None):
        super().__init__(message if best_bound is None else f"{message} (best bound {best_bound!r})")
        self.best_bound = best_bound


class MechanismNotApplicable(ValueError):
    pass


# ---------------------------------------------------------------------------
# environment
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class JointSpec:
    """Joint law over the value vector.

    ``kind="product"``: independent coordinates. ``kind="within"``: with
    probability ``mix`` all coordinates share one quantile level (perfect
    within-agent correlation), otherwise independent.
    """

    kind: str = "product"
    mix: float = 0.5

    def __post_init__(self):
        if self.kind not in ("product", "within"):
            raise ValueError(f"unknown joint kind {self.kind!r}")
        if not 0 <= self.mix <= 1:
            raise ValueError("mix must lie in [0, 1]")

    @classmethod
    def parse(cls, text: str) -> "JointSpec":
        """``product`` or ``within[:mix]``."""
        name, _, arg = text.partition(":")
        if name == "product" and not arg:
            return cls("product")
        if name == "within":
            return cls("within", float(arg) if arg else 0.5)
        raise ValueError(f"malformed joint spec {text!r}")


PRODUCT = JointSpec()


@dataclass(frozen=True)
class DiscretizedEnvironment:
    n: int
    points: np.ndarray  # (N, K) grid values
    weights: np.ndarray  # (N,)
    capacities: np.ndarray  # (K,)
    index: np.ndarray  # (N, K) per-dimension cell indices

    def __post_init__(self):
        if abs(math.fsum(self.weights) - 1.0) > WEIGHT_TOL:
            raise ValueError("grid weights must sum to one")
        if self.points.shape != self.index.shape or self.points.shape[0] != self.weights.size:
            raise ValueError("inconsistent grid arrays")
        if self.capacities.size != self.points.shape[1]:
            raise ValueError("one capacity per object is required")

    @property
    def K(self) -> int:
        return self.points.shape[1]

    @property
    def size(self) -> int:
        return self.points.shape[0]


def cell_values(G: Distribution, n: int, representative: str = "mean") -> np.ndarray:
    """One value per equal-probability cell.

    ``"lower"`` takes the cell's lower endpoint ``G^-1(j/n)``; ``"mean"`` the
    conditional mean of the cell, which keeps the discretized market's
    expected values equal to the continuous one.
    """
    edges = np.empty(n + 1)
    edges[0] = G.support_lower
    edges[n] = G.support_upper
    edges[1:n] = G.quantile(np.arange(1, n) / n)
    if representative == "lower":
        return edges[:n].copy()
    if representative == "median":
        return np.asarray(G.quantile((np.arange(n) + 0.5) / n), dtype=float)
    if representative != "mean":
        raise ValueError(f"unknown representative {representative!r}")
    out = np.empty(n)
    for j in range(n):
        a, b = edges[j], edges[j + 1]
        # int_a^b v dG = a(1-G(a)) - b(1-G(b)) + int_a^b (1-G)
        tail = 0.0 if math.isinf(b) else b * float(G.sf(b))
        scale = max(abs(a), G.typical_scale())
        area = integrate(G._sf, a, b, 1e-12, scale=scale)
        out[j] = n * (a * float(G.sf(a)) - tail + area)
    return out


def build_grid(
    marginals: Sequence[Distribution],
    n: int,
    joint: JointSpec = PRODUCT,
    capacities: Sequence[float] | None = None,
    representative: str = "mean",
) -> DiscretizedEnvironment:
    K = len(marginals)
    if n < 2:
        raise ValueError("n must be at least 2")
    if not 1 <= K <= 3:
        raise ValueError("between one and three objects are supported")
    size = n ** K
    if size > MAX_GRID_POINTS:
        raise GridTooLargeError(f"grid of {n}^{K} = {size} points exceeds {MAX_GRID_POINTS}")
    if capacities is None:
        capacities = [0.5 / K] * K
    caps = np.asarray(capacities, dtype=float)
    if caps.size != K or np.any(caps < 0) or caps.sum() > 1 + 1e-12:
        raise ValueError("capacities must be nonnegative, one per object, with total at most 1")
    axes = [cell_values(G, n, representative) for G in marginals]
    index = np.stack(np.meshgrid(*[np.arange(n)] * K, indexing="ij"), axis=-1).reshape(-1, K)
    points = np.stack([axes[k][index[:, k]] for k in range(K)], axis=1)
    weights = np.full(size, 1.0 / size)
    if joint.kind == "within" and K > 1:
        diagonal = np.all(index == index[:, :1], axis=1)
        weights = (1.0 - joint.mix) * weights + joint.mix * diagonal / n
    return DiscretizedEnvironment(n, points, weights, caps, index)


# ---------------------------------------------------------------------------
# linear program
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LinearProgram:
    """``min c @ z`` subject to ``A_ub @ z <= b_ub`` and box bounds.

    Variables: ``x[i, k]`` at ``i * K + k``, then ``p[i]`` at ``N * K + i``.
    """

    env: DiscretizedEnvironment
    c: np.ndarray
    A_ub: sparse.csr_matrix
    b_ub: np.ndarray
    bounds: np.ndarray
    row_counts: dict = field(default_factory=dict)

    @property
    def n_vars(self) -> int:
        return self.c.size

    def variable_names(self) -> list[str]:
        N, K = self.env.size, self.env.K
        return [f"x_{i}_{k}" for i in range(N) for k in range(K)] + [f"p_{i}" for i in range(N)]


def _base_rows(env: DiscretizedEnvironment):
    """Resource, unit-demand and IR rows as COO triples."""
    N, K = env.size, env.K
    V, w = env.points, env.weights
    xi = lambda i, k: i * K + k
    pi = lambda i: N * K + i
    rows, cols, vals, rhs = [], [], [], []
    r = 0
    ii = np.arange(N)
    for k in range(K):  # resource
        rows.append(np.full(N, r)); cols.append(xi(ii, k)); vals.append(w)
        rhs.append([env.capacities[k]]); r += 1
    for k in range(K):  # unit demand
        rows.append(r + ii); cols.append(xi(ii, k)); vals.append(np.ones(N))
    rhs.append(np.ones(N)); r += N
    for k in range(K):  # IR: p_i - v_i . x_i <= 0
        rows.append(r + ii); cols.append(xi(ii, k)); vals.append(-V[:, k])
    rows.append(r + ii); cols.append(pi(ii)); vals.append(np.ones(N))
    rhs.append(np.zeros(N)); r += N
    return rows, cols, vals, rhs, r


def _ic_rows(env: DiscretizedEnvironment, i: np.ndarray, j: np.ndarray, r0: int):
    """Rows ``v_i . x_j - p_j - (v_i . x_i - p_i) <= 0`` for pairs ``(i, j)``."""
    N, K = env.size, env.K
    V = env.points
    m = i.size
    r = r0 + np.arange(m)
    rows, cols, vals = [], [], []
    for k in range(K):
        rows += [r, r]
        cols += [i * K + k, j * K + k]
        vals += [-V[i, k], V[i, k]]
    rows += [r, r]
    cols += [N * K + i, N * K + j]
    vals += [np.ones(m), -np.ones(m)]
    return rows, cols, vals


def _objective_and_bounds(env: DiscretizedEnvironment):
    N, K = env.size, env.K
    c = np.concatenate([-(env.weights[:, None] * env.points).ravel(), env.weights])
    p_max = float(env.points.sum(axis=1).max())
    bounds = np.array([(0.0, 1.0)] * (N * K) + [(0.0, p_max)] * N)
    return c, bounds


def _assemble(env, rows, cols, vals, rhs, n_rows, counts) -> LinearProgram:
    N, K = env.size, env.K
    A = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_rows, N * (K + 1)),
    ).tocsr()
    c, bounds = _objective_and_bounds(env)
    return LinearProgram(env, c, A, np.concatenate([np.ravel(b) for b in rhs]), bounds, counts)


def all_pairs(N: int) -> tuple[np.ndarray, np.ndarray]:
    i, j = np.divmod(np.arange(N * N), N)
    keep = i != j
    return i[keep], j[keep]


def build_lp(env: DiscretizedEnvironment, pairs: tuple[np.ndarray, np.ndarray] | None = None) -> LinearProgram:
    """Full LP; ``pairs`` restricts the IC rows (default: every ordered pair)."""
    N, K = env.size, env.K
    rows, cols, vals, rhs, r = _base_rows(env)
    i, j = all_pairs(N) if pairs is None else pairs
    ic_r, ic_c, ic_v = _ic_rows(env, i, j, r)
    rows += ic_r; cols += ic_c; vals += ic_v
    rhs.append(np.zeros(i.size))
    counts = {"resource": K, "unit_demand": N, "ir": N, "ic": int(i.size)}
    return _assemble(env, rows, cols, vals, rhs, r + i.size, counts)


def write_lp_format(lp: LinearProgram, out: io.TextIOBase) -> None:
    """CPLEX LP text format, variables named ``x_<point>_<k>`` and ``p_<point>``."""
    names = lp.variable_names()

    def expr(idx, coef):
        terms = []
        for t, a in zip(idx, coef):
            if a == 0:
                continue
            sign = "-" if a < 0 else "+"
            terms.append(f"{sign} {abs(a):.17g} {names[t]}")
        return " ".join(terms) if terms else "0"

    out.write("\\ residual surplus maximization\nMaximize\n obj: ")
    nz = np.flatnonzero(lp.c)
    out.write(expr(nz, -lp.c[nz]) + "\nSubject To\n")
    A = lp.A_ub
    for r in range(A.shape[0]):
        lo, hi = A.indptr[r], A.indptr[r + 1]
        out.write(f" c{r}: {expr(A.indices[lo:hi], A.data[lo:hi])} <= {lp.b_ub[r]:.17g}\n")
    out.write("Bounds\n")
    for name, (lo, hi) in zip(names, lp.bounds):
        out.write(f" {lo:.17g} <= {name} <= {hi:.17g}\n")
    out.write("End\n")


# ---------------------------------------------------------------------------
# mechanisms on the grid
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridMechanism:
    env: DiscretizedEnvironment
    x: np.ndarray  # (N, K)
    p: np.ndarray  # (N,)
    name: str = "lp"

    @property
    def rs(self) -> float:
        w, V = self.env.weights, self.env.points
        return float(w @ (np.einsum("ik,ik->i", V, self.x) - self.p))

    @property
    def expected_payment(self) -> float:
        return float(self.env.weights @ self.p)

    def residuals(self) -> dict[str, float]:
        """Largest violation of each constraint family (non-positive means satisfied)."""
        V, w = self.env.points, self.env.weights
        U = V @ self.x.T - self.p[None, :]  # U[i, j]: type i reporting j
        own = np.diag(U).copy()
        np.fill_diagonal(U, -np.inf)
        return {
            "ic": float(np.max(U - own[:, None])) if self.env.size > 1 else -math.inf,
            "ir": float(np.max(-own)),
            "unit_demand": float(np.max(self.x.sum(axis=1) - 1.0)),
            "resource": float(np.max(w @ self.x - self.env.capacities)),
            "bounds": float(max(np.max(-self.x), np.max(self.x - 1.0), np.max(-self.p))),
        }

    def check_invariants(self, tol: float = CHECK_TOL) -> None:
        bad = {k: v for k, v in self.residuals().items() if v > tol}
        if bad:
            raise AssertionError(f"{self.name} mechanism violates constraints: {bad}")


def _mechanism_from_solution(lp: LinearProgram, z: np.ndarray, name: str) -> GridMechanism:
    N, K = lp.env.size, lp.env.K
    x = np.clip(z[: N * K].reshape(N, K), 0.0, 1.0)
    p = np.maximum(z[N * K:], 0.0)
    return GridMechanism(lp.env, x, p, name)


def _linprog(c, A, b, bounds, options=None):
    opts = dict(HIGHS_OPTIONS)
    opts.update(options or {})
    res = optimize.linprog(c, A_ub=A, b_ub=b, bounds=bounds, method="highs", options=opts)
    if res.status != 0:
        bound = getattr(res, "mip_dual_bound", None)
        raise LPSolveError(f"LP solve failed: {res.message}", bound)
    return res


def solve_lp(lp: LinearProgram, options: dict | None = None) -> GridMechanism:
    res = _linprog(lp.c, lp.A_ub, lp.b_ub, lp.bounds, options)
    return _mechanism_from_solution(lp, res.x, "lp")


def neighbor_pairs(env: DiscretizedEnvironment) -> tuple[np.ndarray, np.ndarray]:
    """Ordered pairs of grid points that differ by one cell in one coordinate."""
    n, K = env.n, env.K
    strides = n ** np.arange(K - 1, -1, -1)
    src, dst = [], []
    for k in range(K):
        i = np.flatnonzero(env.index[:, k] < n - 1)
        j = i + strides[k]
        src += [i, j]
        dst += [j, i]
    return np.concatenate(src), np.concatenate(dst)


def solve_lp_cutting_plane(
    env: DiscretizedEnvironment,
    tol: float = 1e-9,
    max_rounds: int = 100,
    per_type: int = 20,
    options: dict | None = None,
) -> tuple[GridMechanism, int]:
    """Solve with lazily added IC rows; returns the mechanism and rounds used.

    Starts from IC rows between neighboring cells and, each round, adds for
    every type its ``per_type`` most violated deviations.
    """
    N = env.size
    pairs = set(zip(*(a.tolist() for a in neighbor_pairs(env))))
    for rnd in range(1, max_rounds + 1):
        i, j = (np.array(a, dtype=int) for a in zip(*sorted(pairs)))
        mech = solve_lp(build_lp(env, (i, j)), options)
        U = env.points @ mech.x.T - mech.p[None, :]
        gain = U - np.diag(U)[:, None]
        np.fill_diagonal(gain, -np.inf)
        if gain.max() <= tol:
            return mech, rnd
        top = np.argsort(-gain, axis=1)[:, :per_type]
        rows = np.repeat(np.arange(N), top.shape[1])
        cols = top.ravel()
        hit = gain[rows, cols] > tol
        pairs.update(zip(rows[hit].tolist(), cols[hit].tolist()))
    raise LPSolveError(f"cutting planes did not converge in {max_rounds} rounds", -mech.rs)


# ---------------------------------------------------------------------------
# encodings of the named mechanisms
# ---------------------------------------------------------------------------


def _favorite(V: np.ndarray, available: np.ndarray) -> np.ndarray:
    masked = np.where(available[None, :], V, -np.inf)
    return np.argmax(masked, axis=1)  # first maximum: lowest object index


def serial_dictatorship(env: DiscretizedEnvironment) -> GridMechanism:
    """Random-priority SD in the continuum: arrivals at uniform times in [0, 1].

    Each grid type receives, for every object, the share of arrival times at
    which that object is their favorite among those still available.
    """
    N, K = env.size, env.K
    V, w = env.points, env.weights
    remaining = env.capacities.astype(float).copy()
    available = remaining > 0
    x = np.zeros((N, K))
    t = 0.0
    while t < 1.0 and available.any():
        fav = _favorite(V, available)
        demand = np.bincount(fav, weights=w, minlength=K)
        with np.errstate(divide="ignore", invalid="ignore"):
            runout = np.where(demand > 0, remaining / demand, np.inf)
        dt = min(1.0 - t, float(runout.min()))
        x[np.arange(N), fav] += dt
        remaining -= demand * dt
        t += dt
        exhausted = np.isclose(runout, runout.min(), rtol=1e-13, atol=0.0) & (t < 1.0)
        available &= ~exhausted
        remaining[exhausted] = 0.0
    return GridMechanism(env, x, np.zeros(N), "sd")


def competitive_prices(env: DiscretizedEnvironment) -> tuple[np.ndarray, np.ndarray]:
    """Efficient allocation and the minimal market-clearing prices.

    Solves the welfare LP, then among optimal dual solutions picks the one
    with the smallest total price. Each type's payment is the price of
    what they receive.
    """
    N, K = env.size, env.K
    V, w = env.points, env.weights
    # primal: max sum w_i v_i.x_i, resource and unit demand rows only
    rows, cols, vals, rhs, r = _base_rows(env)
    A = sparse.coo_matrix(
        (np.concatenate(vals[: 2 * K]), (np.concatenate(rows[: 2 * K]), np.concatenate(cols[: 2 * K]))),
        shape=(K + N, N * K),
    ).tocsr()
    b = np.concatenate([env.capacities, np.ones(N)])
    res = _linprog(-(w[:, None] * V).ravel(), A, b, [(0.0, 1.0)] * (N * K))
    x = res.x.reshape(N, K)
    welfare = -res.fun
    # dual variables (prices pi_k, scaled utilities u_i):
    #   u_i + pi_k >= v_ik,  m.pi + w.u <= welfare
    ii = np.repeat(np.arange(N), K)
    kk = np.tile(np.arange(K), N)
    m = N * K
    A_d = sparse.vstack([
        sparse.coo_matrix(
            (np.concatenate([-np.ones(m), -np.ones(m)]),
             (np.concatenate([np.arange(m), np.arange(m)]), np.concatenate([kk, K + ii]))),
            shape=(m, K + N)),
        sparse.csr_matrix(np.concatenate([env.capacities, w])[None, :]),
    ]).tocsr()
    b_d = np.concatenate([-V.ravel(), [welfare + 1e-12 * max(1.0, abs(welfare))]])
    c_d = np.concatenate([np.ones(K), np.zeros(N)])
    dual = _linprog(c_d, A_d, b_d, [(0.0, None)] * (K + N))
    prices = dual.x[:K]
    # re-derive the allocation so that every type buys a utility-maximizing bundle
    surplus = V - prices[None, :]
    best = np.maximum(surplus.max(axis=1), 0.0)
    wasted = (x * (best[:, None] - surplus)).sum(axis=1)
    if np.any(wasted > 1e-7):
        raise LPSolveError("efficient allocation inconsistent with the market-clearing prices")
    return np.clip(x, 0.0, 1.0), prices


def vcg(env: DiscretizedEnvironment) -> GridMechanism:
    x, prices = competitive_prices(env)
    x = _clean_allocation(env, x, prices)
    return GridMechanism(env, x, x @ prices, "vcg")


def _clean_allocation(env: DiscretizedEnvironment, x: np.ndarray, prices: np.ndarray) -> np.ndarray:
    """Drop allocation on objects that are not utility-maximizing at ``prices``.

    Solver tolerances can leave ~1e-10 mass on a dominated object; removing
    it keeps IC residuals at rounding level and never breaks feasibility.
    """
    surplus = env.points - prices[None, :]
    best = np.maximum(surplus.max(axis=1, keepdims=True), 0.0)
    keep = surplus >= best - 1e-9 * np.maximum(1.0, np.abs(env.points).max())
    x = np.where(keep, x, 0.0)
    total = x.sum(axis=1, keepdims=True)
    return np.where(total > 1.0, x / np.maximum(total, 1.0), x)


def random_favorites(env: DiscretizedEnvironment) -> GridMechanism:
    """Claim-one-object mechanism for two objects with clearing claim odds.

    Types sorted by ``v2 / v1``; those above the cut claim object 2. With a
    share ``s`` claiming object 2, claims succeed with probabilities
    ``a = min(1, m1 / (1 - s))`` and ``b = min(1, m2 / s)``. The cut is
    where the marginal type is indifferent, ``a v1 = b v2``; a tied block of
    types is split between the two claims.
    """
    if env.K != 2:
        raise MechanismNotApplicable("random favorites is defined for two objects")
    V, w = env.points, env.weights
    m1, m2 = env.capacities
    N = env.size
    angle = np.arctan2(V[:, 1], V[:, 0])
    order = np.argsort(-angle, kind="stable")
    # blocks of equal angle, from the most object-2-leaning down
    ang_sorted = angle[order]
    starts = np.flatnonzero(np.r_[True, np.diff(ang_sorted) != 0])
    block_of = np.cumsum(np.r_[True, np.diff(ang_sorted) != 0]) - 1
    block_w = np.bincount(block_of, weights=w[order])
    block_hi = np.cumsum(block_w)
    block_lo = block_hi - block_w
    block_tan = np.tan(ang_sorted[starts])

    def odds(s):
        a = 1.0 if s >= 1.0 else min(1.0, m1 / (1.0 - s))
        b = 1.0 if s <= 0.0 else min(1.0, m2 / s)
        return a, b

    def gap(s):
        # positive when the type at position s prefers claiming object 1
        blk = min(int(np.searchsorted(block_hi, s, side="right")), block_w.size - 1)
        a, b = odds(s)
        return a - b * block_tan[blk]

    lo, hi = 0.0, 1.0
    if gap(0.0) >= 0:
        hi = 0.0
    elif gap(1.0 - 1e-15) < 0:
        lo = 1.0
    else:
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if gap(mid) < 0:
                lo = mid
            else:
                hi = mid
    s = hi
    a, b = odds(s)
    share2 = np.clip((s - block_lo) / np.where(block_w > 0, block_w, 1.0), 0.0, 1.0)
    x = np.zeros((N, 2))
    f2 = share2[block_of]
    x[order, 0] = (1.0 - f2) * a
    x[order, 1] = f2 * b
    return GridMechanism(env, x, np.zeros(N), "rf")


def feasible_point_from(name: str, env: DiscretizedEnvironment) -> GridMechanism:
    builders = {"sd": serial_dictatorship, "vcg": vcg, "rf": random_favorites}
    key = name.lower()
    if key not in builders:
        raise MechanismNotApplicable(f"unknown mechanism {name!r}; expected one of {sorted(builders)}")
    return builders[key](env)


def mechanism_heatmap(gm: GridMechanism) -> list[tuple[float, float, float, float, float]]:
    """Rows ``(v1, v2, x1, x2, p)`` for a two-object mechanism."""
    if gm.env.K != 2:
        raise ValueError("heatmaps need exactly two objects")
    V = gm.env.points
    return [
        (float(V[i, 0]), float(V[i, 1]), float(gm.x[i, 0]), float(gm.x[i, 1]), float(gm.p[i]))
        for i in range(gm.env.size)
    ]
