"""Finite markets: exact SD and VCG outcomes and Monte Carlo comparisons.

``run_sd`` and ``run_vcg`` work on a single market of any shape. The Monte
Carlo driver ``mc_ratio`` handles two-object markets in vectorized blocks:
SD is simulated directly, and VCG uses the fact that in unit-demand
assignment markets VCG payments coincide with the minimum market-clearing
prices, ``price_k = W(m + e_k) - W(m)``, where ``W`` is the optimal welfare
for capacity vector ``m``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .benchmarks import rs_sd, rs_vcg
from .distributions import Distribution

DEFAULT_BLOCK = 1000
N_BATCHES = 100
CORRELATIONS = ("iid", "within", "between")


@dataclass(frozen=True)
class FiniteMarket:
    values: np.ndarray  # (I, K)
    capacities: tuple[int, ...]

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise ValueError("values must be an I x K matrix with I, K >= 1")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ValueError("values must be finite and nonnegative")
        caps = tuple(int(c) for c in self.capacities)
        if len(caps) != v.shape[1] or any(c < 0 for c in caps):
            raise ValueError("one nonnegative integer capacity per object is required")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "capacities", caps)

    @property
    def n_agents(self) -> int:
        return self.values.shape[0]

    @property
    def n_objects(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class MarketConfig:
    agents: int
    capacities: tuple[int, ...]
    marginal: Distribution
    correlation: str = "iid"
    mix: float = 0.5
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "capacities", tuple(int(c) for c in self.capacities))
        if self.agents < 1 or not self.capacities:
            raise ValueError("need at least one agent and one object")
        if any(c < 0 for c in self.capacities):
            raise ValueError("capacities must be nonnegative")
        if self.correlation not in CORRELATIONS:
            raise ValueError(f"correlation must be one of {CORRELATIONS}")
        if self.correlation == "within" and self.objects != 2:
            raise ValueError("within-agent correlation is defined for two objects")
        if self.correlation == "between" and self.agents != 2:
            raise ValueError("between-agent correlation is defined for two agents")
        if not 0 <= self.mix <= 1:
            raise ValueError("mix must lie in [0, 1]")

    @property
    def objects(self) -> int:
        return len(self.capacities)


def sample_values(cfg: MarketConfig, rng: np.random.Generator, trials: int) -> np.ndarray:
    """Value tensors of shape ``(trials, I, K)``."""
    I, K = cfg.agents, cfg.objects
    q = cfg.marginal.quantile
    v = np.asarray(q(rng.random((trials, I, K))), dtype=float).reshape(trials, I, K)
    if cfg.correlation == "within":
        common = np.asarray(q(rng.random((trials, I))), dtype=float).reshape(trials, I)
        use = rng.random((trials, I)) < cfg.mix
        v = np.where(use[..., None], common[..., None], v)
    elif cfg.correlation == "between":
        common = np.asarray(q(rng.random((trials, K))), dtype=float).reshape(trials, K)
        use = rng.random(trials) < cfg.mix
        v = np.where(use[:, None, None], common[:, None, :], v)
    return v


def sample_market(cfg: MarketConfig, rng: np.random.Generator) -> FiniteMarket:
    return FiniteMarket(sample_values(cfg, rng, 1)[0], cfg.capacities)


# ---------------------------------------------------------------------------
# single markets
# ---------------------------------------------------------------------------


class SDOutcome(NamedTuple):
    allocation: np.ndarray  # object index per agent, -1 if unassigned
    rs: float


class VCGOutcome(NamedTuple):
    allocation: np.ndarray
    payments: np.ndarray
    rs: float
    gross: float


def run_sd(market: FiniteMarket, priority: Sequence[int]) -> SDOutcome:
    """Agents pick, in priority order, their favorite object with capacity left."""
    order = np.asarray(priority, dtype=int)
    if sorted(order.tolist()) != list(range(market.n_agents)):
        raise ValueError("priority must be a permutation of the agents")
    left = np.array(market.capacities)
    alloc = np.full(market.n_agents, -1)
    for i in order:
        open_ = left > 0
        if not open_.any():
            break
        k = int(np.argmax(np.where(open_, market.values[i], -np.inf)))
        alloc[i] = k
        left[k] -= 1
    got = alloc >= 0
    return SDOutcome(alloc, float(market.values[got, alloc[got]].sum()))


def _slot_matrix(values: np.ndarray, capacities: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    owner = np.repeat(np.arange(len(capacities)), capacities)
    return values[:, owner], owner


def optimal_assignment(values: np.ndarray, capacities: Sequence[int]) -> tuple[np.ndarray, float]:
    """Welfare-maximizing assignment; unassigned agents get -1."""
    I = values.shape[0]
    if I == 0:
        return np.zeros(0, dtype=int), 0.0
    W, owner = _slot_matrix(values, capacities)
    # a zero-valued dummy column per agent lets anyone stay out
    W = np.hstack([W, np.zeros((I, I))])
    rows, cols = linear_sum_assignment(W, maximize=True)
    alloc = np.full(I, -1)
    real = cols < owner.size
    alloc[rows[real]] = owner[cols[real]]
    return alloc, float(W[rows, cols].sum())


def run_vcg(market: FiniteMarket) -> VCGOutcome:
    """Efficient assignment with externality payments."""
    V = market.values
    alloc, welfare = optimal_assignment(V, market.capacities)
    own = np.where(alloc >= 0, V[np.arange(market.n_agents), np.maximum(alloc, 0)], 0.0)
    pay = np.empty(market.n_agents)
    for i in range(market.n_agents):
        _, without = optimal_assignment(np.delete(V, i, axis=0), market.capacities)
        pay[i] = max(without - (welfare - own[i]), 0.0)
    return VCGOutcome(alloc, pay, welfare - float(pay.sum()), welfare)


# ---------------------------------------------------------------------------
# vectorized two-object kernels
# ---------------------------------------------------------------------------


def sd_gross_batch(values: np.ndarray, capacities: Sequence[int], priorities: np.ndarray) -> np.ndarray:
    """SD gross surplus per trial for ``values`` of shape ``(T, I, K)``."""
    T, I, K = values.shape
    left = np.tile(np.asarray(capacities, dtype=int), (T, 1))
    total = np.zeros(T)
    rows = np.arange(T)
    for s in range(I):
        v = values[rows, priorities[:, s]]  # (T, K)
        open_ = left > 0
        k = np.argmax(np.where(open_, v, -np.inf), axis=1)
        took = open_[rows, k]
        total += np.where(took, v[rows, k], 0.0)
        left[rows, k] -= took
    return total


def _top_sums(mat: np.ndarray, counts: Sequence[int]) -> dict[int, np.ndarray]:
    """For each count ``m``, the sum of the ``m`` largest entries along the last axis."""
    srt = -np.sort(-mat, axis=-1)
    csum = np.concatenate([np.zeros(mat.shape[:-1] + (1,)), np.cumsum(srt, axis=-1)], axis=-1)
    n = mat.shape[-1]
    return {m: csum[..., min(m, n)] for m in counts}


def welfare_two_objects(values: np.ndarray, capacity_sets: Sequence[tuple[int, int]]) -> list[np.ndarray]:
    """Optimal welfare for each capacity pair, for ``values`` of shape ``(T, I, 2)``.

    Sorting agents by ``v1 - v2`` there is an optimal assignment in which
    everyone given object 1 precedes everyone given object 2; so welfare is
    the best split of the top-``m1`` first values in a prefix and the
    top-``m2`` second values in the complementary suffix.
    """
    T, I, _ = values.shape
    order = np.argsort(values[..., 1] - values[..., 0], axis=1, kind="stable")
    v = np.take_along_axis(values, order[..., None], axis=1)
    tri = np.tril(np.ones((I + 1, I), dtype=bool), k=-1)  # tri[t, j]: j < t
    prefix = np.where(tri[None], v[:, None, :, 0], 0.0)  # (T, I+1, I)
    suffix = np.where(~tri[None], v[:, None, :, 1], 0.0)
    m1s = sorted({c[0] for c in capacity_sets})
    m2s = sorted({c[1] for c in capacity_sets})
    top1 = _top_sums(prefix, m1s)
    top2 = _top_sums(suffix, m2s)
    return [np.max(top1[m1] + top2[m2], axis=1) for m1, m2 in capacity_sets]


def vcg_batch(values: np.ndarray, capacities: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
    """Gross welfare and residual surplus of VCG per trial (two objects)."""
    m1, m2 = capacities
    W, W1, W2 = welfare_two_objects(values, [(m1, m2), (m1 + 1, m2), (m1, m2 + 1)])
    payments = m1 * (W1 - W) + m2 * (W2 - W)
    return W, W - payments


# ---------------------------------------------------------------------------
# Monte Carlo
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SimResult:
    trials: int
    mean_sd: float
    mean_vcg: float
    ratio: float
    stderr: float


def _block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, block]))


def simulate_block(cfg: MarketConfig, block: int, size: int) -> tuple[np.ndarray, np.ndarray]:
    """SD and VCG residual surplus for one block of trials with its own RNG stream."""
    if cfg.objects != 2:
        raise ValueError("the Monte Carlo driver handles two-object markets")
    rng = _block_rng(cfg.seed, block)
    values = sample_values(cfg, rng, size)
    priorities = np.argsort(rng.random((size, cfg.agents)), axis=1)
    sd = sd_gross_batch(values, cfg.capacities, priorities)
    _, vcg = vcg_batch(values, cfg.capacities)
    return sd, vcg


def mc_ratio(cfg: MarketConfig, trials: int, block: int = DEFAULT_BLOCK) -> SimResult:
    """Ratio of mean SD to mean VCG residual surplus over ``trials`` markets.

    Trials are split into fixed-size blocks, each with an RNG stream keyed
    by ``(seed, block index)``, so results do not depend on evaluation
    order. The standard error uses 100 batch means and the delta method.
    """
    if trials < 1000:
        raise ValueError("use at least 1000 trials")
    sd = np.empty(trials)
    vc = np.empty(trials)
    for b, start in enumerate(range(0, trials, block)):
        size = min(block, trials - start)
        sd[start:start + size], vc[start:start + size] = simulate_block(cfg, b, size)
    mean_sd = math.fsum(sd) / trials
    mean_vcg = math.fsum(vc) / trials
    if not mean_vcg > 0:
        raise ValueError("mean VCG residual surplus is not positive; ratio undefined")
    ratio = mean_sd / mean_vcg
    batches = np.array_split(np.arange(trials), N_BATCHES)
    bs = np.array([sd[ix].mean() for ix in batches])
    bv = np.array([vc[ix].mean() for ix in batches])
    resid = (bs - ratio * bv) / mean_vcg
    stderr = float(resid.std(ddof=1) / math.sqrt(N_BATCHES))
    return SimResult(trials, mean_sd, mean_vcg, ratio, stderr)


def continuum_ratio(G: Distribution, k: int, m_bar: float) -> float:
    return rs_sd(G, k, m_bar) / rs_vcg(G, k, m_bar)


def crossing_point(xs: Sequence[float], ratios: Sequence[float], level: float = 1.0) -> float:
    """First ``x`` where the piecewise-linear ratio curve reaches ``level`` from below."""
    xs = np.asarray(xs, dtype=float)
    r = np.asarray(ratios, dtype=float) - level
    for a in range(len(xs) - 1):
        if r[a] < 0 <= r[a + 1]:
            return float(xs[a] - r[a] * (xs[a + 1] - xs[a]) / (r[a + 1] - r[a]))
    return math.nan


def market_config(alpha_or_dist, m: int, **kw) -> MarketConfig:
    """The comparison market: ``4m`` agents, two objects with ``m`` units each."""
    from .distributions import Weibull

    G = alpha_or_dist if isinstance(alpha_or_dist, Distribution) else Weibull(float(alpha_or_dist))
    return MarketConfig(4 * m, (m, m), G, **kw)
