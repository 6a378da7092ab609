"""Sampled clustering-cost estimation and least-cost selection over a list.

The cost of a center set is estimated from ``m`` uniformly drawn points::

    alpha_m = (N / m) * sum_j est_min_dist(v_{i_j}, C)^2

with ``m = ceil(eta^2 ln(10 L) / eps^2)`` from the Hoeffding bound, where
``eta`` is the inflated aspect ratio ``(1 + eps_rel) * eta``.

For deterministic channels each point's squared estimate is fixed, so the
``m`` draws only matter through how often each index is hit; those counts
are drawn as one multinomial, which has the same law as ``m`` separate
uniform draws and costs O(N) regardless of ``m``. The stochastic channel
re-estimates on every draw and is simulated draw by draw.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from qkmeans.core import Dataset, as_points, exact_cost, sq_distances
from qkmeans.oracle import DistanceOracle

EXHAUSTIVE = 0
_CHUNK = 1 << 16


@dataclass(frozen=True)
class CostEstimate:
    alpha_m: float
    m: int
    eta_used: float
    list_size_L: int = 1


@dataclass(frozen=True)
class Selection:
    index: int
    estimate: CostEstimate
    alphas: np.ndarray
    m: int


def sample_count_m(eta: float, L: int, eps: float) -> int:
    if eta < 1:
        raise ValueError(f"eta must be >= 1, got {eta}")
    if L < 1:
        raise ValueError(f"L must be a positive integer, got {L}")
    if not 0 < eps <= 1:
        raise ValueError(f"eps must lie in (0, 1], got {eps}")
    return max(1, math.ceil(eta**2 * math.log(10 * L) / eps**2))


def union_bound_delta(n: int, k: int, m: int, L: int, const: float = 1.0) -> float:
    """Per-estimate failure parameter that keeps all N k m L estimates clean w.h.p."""
    return const / (n * k * m * L)


def hoeffding_tail(theta: float, m: int, width: float) -> float:
    """Two-sided Hoeffding bound on Pr[|S_m - E S_m| >= theta] for X_i in an interval of ``width``."""
    if width <= 0:
        return 0.0
    return min(1.0, 2.0 * math.exp(-2.0 * theta**2 / (m * width**2)))


def inflated_eta(data: Dataset, oracle: DistanceOracle) -> float:
    """Aspect ratio as seen through the channel: (1 + eps_rel) times the dataset's eta."""
    return (1.0 + oracle.config.eps_rel) * max(data.eta, oracle.eta)


def estimate_cost(data: Dataset, centers, m: int, oracle: DistanceOracle, rng, L: int = 1) -> CostEstimate:
    """Estimate the k-means cost of ``centers`` from ``m`` uniform point draws.

    ``m == 0`` returns the exact cost instead of sampling.
    """
    centers = as_points(centers, "centers")
    if m < 0:
        raise ValueError(f"m must be nonnegative, got {m}")
    if m == EXHAUSTIVE:
        return CostEstimate(exact_cost(data, centers), 0, inflated_eta(data, oracle), L)
    n = data.n
    if oracle.config.deterministic:
        values, _ = oracle.min_estimates(data.points, centers)
        counts = rng.multinomial(m, np.full(n, 1.0 / n))
        total = math.fsum(counts * values**2)
    else:
        parts = []
        remaining = m
        while remaining:
            b = min(remaining, _CHUNK)
            idx = rng.integers(n, size=b)
            est, _ = oracle.min_estimates(data.points[idx], centers, rng)
            parts.append(math.fsum(est**2))
            remaining -= b
        total = math.fsum(parts)
    return CostEstimate(total * n / m, m, inflated_eta(data, oracle), L)


def _as_pool(candidates) -> tuple[np.ndarray, np.ndarray | None, list]:
    """Return (pool, members) when every candidate has the same size, else (None, None, sets)."""
    if hasattr(candidates, "pool") and hasattr(candidates, "members"):
        return candidates.pool, candidates.members, []
    sets = [as_points(c, "centers") for c in candidates]
    if not sets:
        return None, None, sets
    sizes = {len(c) for c in sets}
    if len(sizes) == 1:
        k = sizes.pop()
        pool = np.concatenate(sets, axis=0)
        return pool, np.arange(len(pool)).reshape(-1, k), sets
    return None, None, sets


def estimate_costs(data: Dataset, candidates, m: int, oracle: DistanceOracle, rng) -> np.ndarray:
    """alpha_m for every candidate, with independent draws per candidate."""
    pool, members, sets = _as_pool(candidates)
    L = len(members) if members is not None else len(sets)
    if L == 0:
        raise ValueError("candidate list is empty")
    if members is None or not oracle.config.deterministic:
        if members is not None:
            sets = [pool[row] for row in members]
        streams = rng.spawn(L)
        return np.array([estimate_cost(data, c, m, oracle, g, L).alpha_m for c, g in zip(sets, streams)])

    n = data.n
    if m == EXHAUSTIVE:
        table = sq_distances(data.points, pool)
    else:
        est, _ = oracle.estimate_matrix(data.points, pool)
        table = est**2
    out = np.empty(L)
    for lo in range(0, L, _CHUNK):
        rows = members[lo : lo + _CHUNK]
        per_point = table[:, rows].min(axis=2).T  # (chunk, N)
        if m == EXHAUSTIVE:
            out[lo : lo + len(rows)] = [math.fsum(r) for r in per_point]
        else:
            counts = rng.multinomial(m, np.full(n, 1.0 / n), size=len(rows))
            out[lo : lo + len(rows)] = np.einsum("ln,ln->l", counts, per_point) * (n / m)
    return out


def select_min_cost(
    data: Dataset,
    candidates,
    eps: float,
    oracle: DistanceOracle,
    rng,
    m: int | None = None,
) -> Selection:
    """Estimate every candidate's cost and return the argmin (lowest index on ties).

    ``m`` defaults to :func:`sample_count_m` at the dataset's inflated aspect
    ratio and the list length.
    """
    L = len(candidates)
    if L == 0:
        raise ValueError("candidate list is empty")
    eta = inflated_eta(data, oracle)
    if m is None:
        m = sample_count_m(eta, L, eps)
    alphas = estimate_costs(data, candidates, m, oracle, rng)
    best = int(np.argmin(alphas))
    return Selection(best, CostEstimate(float(alphas[best]), m, eta, L), alphas, m)
