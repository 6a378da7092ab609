"""Candidate-list generation, the end-to-end solver and a brute-force optimum."""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field
from itertools import combinations

import numpy as np

from qkmeans.core import Dataset, as_points, exact_cost
from qkmeans.errors import BruteForceInfeasible, ConfigError, ListSizeCapExceeded, QKMeansError
from qkmeans.estimator import select_min_cost, union_bound_delta
from qkmeans.oracle import DistanceOracle, OracleConfig
from qkmeans.sampler import d2_sample_rejection, pseudo_approx_seed, rejection_normalizer, round_cost_estimate, seeding_sample_count

DEFAULT_LIST_CAP = 10**7
MAX_REPETITIONS = 32


def default_repetitions(k: int) -> int:
    return min(2**k, MAX_REPETITIONS)


def delta_factor(delta: float) -> int:
    """Multiplier on the sample size for a delta-close distance channel."""
    return math.ceil(1.0 / (1.0 - delta)) if delta > 0 else 1


@dataclass(frozen=True)
class SchemeParams:
    """Knobs of the candidate-list construction.

    ``paper`` keeps the asymptotic shape (tau = ceil(2/eps'), rho =
    ceil(k/eps'^4)); ``desk`` uses tau = 2 and rho = 2k so the list stays
    enumerable for N around 20. Only the former carries the worst-case
    guarantee. ``eps_budget_split`` is the working error eps' = eps/4.
    """

    k: int
    eps: float
    rho: int
    tau: int
    repetitions: int
    eps_budget_split: float
    preset: str = "custom"
    list_cap: int = DEFAULT_LIST_CAP

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError(f"k must be positive, got {self.k}")
        if not 0 < self.eps <= 0.5:
            raise ConfigError(f"eps must lie in (0, 1/2], got {self.eps}")
        if self.rho < 1 or self.tau < 1 or self.repetitions < 1:
            raise ConfigError("rho, tau and repetitions must all be >= 1")
        if not 0 < self.eps_budget_split <= self.eps:
            raise ConfigError("eps_budget_split must lie in (0, eps]")

    @classmethod
    def paper(cls, k, eps, delta=0.0, **kw) -> SchemeParams:
        e = eps / 4
        return cls(
            k=k,
            eps=eps,
            rho=math.ceil(k / e**4) * delta_factor(delta),
            tau=math.ceil(2 / e),
            repetitions=kw.pop("repetitions", default_repetitions(k)),
            eps_budget_split=e,
            preset="paper",
            **kw,
        )

    @classmethod
    def desk(cls, k, eps, delta=0.0, **kw) -> SchemeParams:
        return cls(
            k=k,
            eps=eps,
            rho=2 * k * delta_factor(delta),
            tau=2,
            repetitions=kw.pop("repetitions", default_repetitions(k)),
            eps_budget_split=eps / 4,
            preset="desk",
            **kw,
        )

    @classmethod
    def preset_for(cls, name, k, eps, delta=0.0, **kw) -> SchemeParams:
        if name == "paper":
            return cls.paper(k, eps, delta, **kw)
        if name == "desk":
            return cls.desk(k, eps, delta, **kw)
        raise ConfigError(f"unknown preset {name!r}; expected 'paper' or 'desk'")

    def multiset_size(self, n_centers: int) -> int:
        return self.rho * self.k + self.tau * self.k * n_centers

    def list_size(self, n_centers: int) -> int:
        return self.repetitions * tuple_count(self.multiset_size(n_centers), self.k, self.tau)

    def to_dict(self) -> dict:
        return asdict(self)


def tuple_count(size: int, k: int, tau: int) -> int:
    """Number of ordered k-tuples of pairwise-disjoint tau-subsets of ``size`` items."""
    if k * tau > size:
        return 0
    return math.prod(math.comb(size - i * tau, tau) for i in range(k))


def enumerate_disjoint_tuples(items, k: int, tau: int):
    """Yield ordered k-tuples of index-disjoint tau-subsets, lexicographically.

    ``items`` is a multiset (any sized sequence) or its size; copies are
    distinct instances, so the yielded subsets are tuples of positions.
    """
    size = items if isinstance(items, int) else len(items)
    if k < 1 or tau < 1:
        raise ValueError("k and tau must be positive")
    if k * tau > size:
        return

    def rec(avail, depth):
        for subset in combinations(avail, tau):
            if depth == 1:
                yield (subset,)
                continue
            taken = set(subset)
            rest = tuple(x for x in avail if x not in taken)
            for tail in rec(rest, depth - 1):
                yield (subset,) + tail

    yield from rec(tuple(range(size)), k)


@dataclass
class CandidateList:
    """Candidate k-center sets stored as rows of indices into a centroid pool.

    ``pool`` holds the centroid of every tau-subset of each repetition's
    multiset; candidate ``l`` is ``pool[members[l]]``. ``subsets[l]`` gives
    the positions in ``multisets[repetition[l]]`` behind each centroid, and
    ``sources`` maps multiset positions to a dataset row (>= 0) or to a copy
    of center ``j`` (encoded ``-(j + 1)``).
    """

    pool: np.ndarray
    members: np.ndarray
    repetition: np.ndarray
    subsets: np.ndarray
    multisets: list = field(default_factory=list)
    sources: list = field(default_factory=list)

    def __len__(self):
        return len(self.members)

    def __getitem__(self, l) -> np.ndarray:
        return self.pool[self.members[l]]

    def __iter__(self):
        for l in range(len(self)):
            yield self[l]

    @property
    def k(self) -> int:
        return self.members.shape[1]

    def provenance(self, l) -> dict:
        rep = int(self.repetition[l])
        src = self.sources[rep]
        return {
            "repetition": rep,
            "subsets": [[int(i) for i in s] for s in self.subsets[l]],
            "sources": [[int(src[i]) for i in s] for s in self.subsets[l]],
        }

    def distinct_count(self) -> int:
        """Number of distinct center sets, ignoring order and multiplicity of origin."""
        _, canon = np.unique(self.pool, axis=0, return_inverse=True)
        keyed = np.sort(canon.reshape(-1)[self.members], axis=1)
        return len(np.unique(keyed, axis=0))


def build_candidate_list(
    data: Dataset,
    params: SchemeParams,
    centers,
    oracle: DistanceOracle,
    rng,
    seed_m: int | None = None,
) -> CandidateList:
    """Repeat: D^2-sample rho*k points w.r.t. ``centers``, add tau*k copies of
    each center, and emit the centroid tuple of every disjoint tau-subset tuple."""
    centers = as_points(centers, "centers")
    if len(centers) == 0:
        raise ValueError("build_candidate_list needs a nonempty center set")
    k, tau = params.k, params.tau
    size = params.multiset_size(len(centers))
    total = params.list_size(len(centers))
    if total > params.list_cap:
        raise ListSizeCapExceeded(
            f"candidate list would hold {total} center sets (|M| = {size}, k = {k}, tau = {tau}, "
            f"R = {params.repetitions}); cap is {params.list_cap}",
            size=total,
            cap=params.list_cap,
        )
    if total == 0:
        raise ConfigError(f"no disjoint tuples: k * tau = {k * tau} exceeds |M| = {size}")

    if seed_m is None:
        seed_m = seeding_sample_count(oracle, k)
    est = round_cost_estimate(data, centers, oracle, rng, seed_m)
    norm = rejection_normalizer(data, centers, oracle, est)

    combos = np.array(list(combinations(range(size), tau)), dtype=np.int64)
    combo_index = {tuple(c): i for i, c in enumerate(combos.tolist())}
    tuples = np.array(
        [[combo_index[s] for s in tup] for tup in enumerate_disjoint_tuples(size, k, tau)],
        dtype=np.int64,
    )
    per_rep = len(tuples)
    copies = np.repeat(np.arange(len(centers)), tau * k)

    pools, members, multisets, sources = [], [], [], []
    for rep in range(params.repetitions):
        if norm > 0:
            picks = [d2_sample_rejection(data, centers, oracle, norm, rng)[0] for _ in range(params.rho * k)]
        else:
            picks = list(rng.integers(data.n, size=params.rho * k))
        M = np.concatenate([data.points[picks], centers[copies]], axis=0)
        multisets.append(M)
        sources.append(np.concatenate([np.asarray(picks, dtype=np.int64), -(copies + 1)]))
        pools.append(M[combos].mean(axis=1))
        members.append(tuples + rep * len(combos))

    return CandidateList(
        pool=np.concatenate(pools, axis=0),
        members=np.concatenate(members, axis=0),
        repetition=np.repeat(np.arange(params.repetitions), per_rep),
        subsets=np.tile(combos[tuples], (params.repetitions, 1, 1)),
        multisets=multisets,
        sources=sources,
    )


@dataclass(frozen=True)
class BruteForceResult:
    cost: float
    centers: np.ndarray
    assignment: np.ndarray


MAX_BRUTE_N = 22
MAX_BRUTE_K = 4
MAX_BRUTE_WORK = 2 * 10**7


def brute_force_work(n: int, k: int) -> int:
    """Subset-table operations of :func:`brute_force_opt`."""
    if k >= n:
        return 0
    if k <= 2:
        return 2**n
    return (k - 2) * 3**n + 2**n


def _subset_costs(points: np.ndarray) -> np.ndarray:
    """Within-block sum of squared deviations for every subset bitmask."""
    pts = points - points.mean(axis=0)
    cnt = np.zeros(1)
    sums = np.zeros((1, pts.shape[1]))
    sq = np.zeros(1)
    for p in pts:
        cnt = np.concatenate([cnt, cnt + 1])
        sums = np.concatenate([sums, sums + p])
        sq = np.concatenate([sq, sq + p @ p])
    with np.errstate(invalid="ignore", divide="ignore"):
        cost = sq - np.einsum("md,md->m", sums, sums) / cnt
    cost[0] = 0.0
    return np.maximum(cost, 0.0)


def _submasks_with_low(mask: int) -> np.ndarray:
    """All submasks of ``mask`` that contain its lowest set bit."""
    low = mask & -mask
    subs = np.zeros(1, dtype=np.int64)
    rest = mask ^ low
    while rest:
        b = rest & -rest
        subs = np.concatenate([subs, subs | b])
        rest ^= b
    return subs | low


def brute_force_opt(
    data,
    k: int,
    max_n: int = MAX_BRUTE_N,
    max_k: int = MAX_BRUTE_K,
    max_work: int = MAX_BRUTE_WORK,
) -> BruteForceResult:
    """Exact optimal k-means cost by exhaustive search over k-partitions.

    An optimal solution gives each cluster its centroid, so OPT is the
    minimum over partitions into k nonempty blocks of the summed within-block
    squared deviations. The search runs as a dynamic program over subset
    bitmasks (each block anchored at its lowest element), then the winning
    partition's cost is recomputed directly.
    """
    points = data.points if isinstance(data, Dataset) else as_points(data)
    n = len(points)
    if k < 1:
        raise ValueError(f"k must be positive, got {k}")
    if k >= n:
        centers = points[np.arange(k) % n]
        return BruteForceResult(0.0, centers.copy(), np.arange(n))
    work = brute_force_work(n, k)
    if n > max_n or k > max_k or work > max_work:
        raise BruteForceInfeasible(
            f"brute force infeasible: N={n}, k={k} (limits N <= {max_n}, k <= {max_k}, work <= {max_work}, needs {work})"
        )

    if k == 1:
        centers = points.mean(axis=0, keepdims=True)
        return BruteForceResult(exact_cost(points, centers), centers, np.zeros(n, dtype=np.int64))

    cost = _subset_costs(points)
    full = (1 << n) - 1
    popcount = np.array([bin(m).count("1") for m in range(1 << n)]) if k > 2 else None

    # best[j][mask]: optimal cost of splitting `mask` into j nonempty blocks
    best = {1: cost}
    choice = {}
    for j in range(2, k):
        table = np.full(1 << n, np.inf)
        pick = np.zeros(1 << n, dtype=np.int64)
        prev = best[j - 1]
        for mask in range(1, 1 << n):
            if popcount[mask] < j:
                continue
            blocks = _submasks_with_low(mask)
            blocks = blocks[blocks != mask]
            vals = cost[blocks] + prev[mask ^ blocks]
            a = int(np.argmin(vals))
            table[mask] = vals[a]
            pick[mask] = blocks[a]
        best[j] = table
        choice[j] = pick

    blocks = _submasks_with_low(full)
    blocks = blocks[blocks != full]
    vals = cost[blocks] + best[k - 1][full ^ blocks]
    first = int(blocks[int(np.argmin(vals))])

    parts = [first]
    mask = full ^ first
    for j in range(k - 1, 1, -1):
        b = int(choice[j][mask])
        parts.append(b)
        mask ^= b
    parts.append(mask)

    assignment = np.empty(n, dtype=np.int64)
    for label, b in enumerate(parts):
        for i in range(n):
            if b >> i & 1:
                assignment[i] = label
    centers = np.array([points[assignment == c].mean(axis=0) for c in range(k)])
    return BruteForceResult(exact_cost(points, centers), centers, assignment)


def _timed(stage, report, fn, oracle):
    t0 = time.perf_counter()
    q0 = oracle.queries
    try:
        out = fn()
    except QKMeansError as err:
        err.stage = err.stage or stage
        raise
    report["timings"][stage] = time.perf_counter() - t0
    report["oracle_queries"][stage] = oracle.queries - q0
    return out


def solve(
    data: Dataset,
    k: int,
    eps: float,
    config: OracleConfig | None = None,
    seed: int = 0,
    params: SchemeParams | None = None,
):
    """Seed 2k centers, build the candidate list at eps/4, return the cheapest candidate.

    Returns ``(centers, report)``; the report is a JSON-ready dict.
    """
    config = config or OracleConfig()
    delta = config.eps_rel if config.mode == "deterministic-delta" else 0.0
    if params is None:
        params = SchemeParams.desk(k, eps, delta)
    if params.k != k or params.eps != eps:
        raise ConfigError("params were built for a different (k, eps)")
    oracle = DistanceOracle(config, data.eta)
    seed_stream, list_stream, select_stream = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3))

    report = {
        "dataset": {"digest": data.digest(), "n": data.n, "d": data.dim, "eta": data.eta, "scale": data.scale},
        "k": k,
        "eps": eps,
        "seed": seed,
        "params": params.to_dict(),
        "oracle": config.to_dict(),
        "timings": {},
        "oracle_queries": {},
    }

    seeding = _timed("seeding", report, lambda: pseudo_approx_seed(data, k, oracle, seed_stream), oracle)
    report["seeding"] = {
        "indices": [int(i) for i in seeding.indices],
        "proposals": [int(p) for p in seeding.proposals],
        "cost": exact_cost(data, seeding.centers),
    }

    candidates = _timed(
        "candidates",
        report,
        lambda: build_candidate_list(data, params, seeding.centers, oracle, list_stream),
        oracle,
    )
    expected = params.list_size(len(seeding.centers))
    if len(candidates) != expected:
        raise QKMeansError(f"candidate count {len(candidates)} != closed form {expected}", stage="candidates")
    report["candidates"] = {
        "size": len(candidates),
        "closed_form": expected,
        "distinct": candidates.distinct_count(),
        "multiset_size": params.multiset_size(len(seeding.centers)),
    }

    selection = _timed(
        "selection",
        report,
        lambda: select_min_cost(data, candidates, params.eps_budget_split, oracle, select_stream),
        oracle,
    )
    centers = candidates[selection.index]
    order = np.argsort(selection.alphas, kind="stable")[:10]
    report["selection"] = {
        "index": selection.index,
        "alpha_m": selection.estimate.alpha_m,
        "m": selection.m,
        "list_size_L": selection.estimate.list_size_L,
        "eta_used": selection.estimate.eta_used,
        "union_bound_delta": union_bound_delta(data.n, k, selection.m, len(candidates)),
        "state_copies": selection.m * len(candidates),
        "provenance": candidates.provenance(selection.index),
        "lowest": [{"index": int(i), "alpha_m": float(selection.alphas[i])} for i in order],
    }
    report["cost"] = exact_cost(data, centers)
    report["cost_raw_units"] = report["cost"] * data.scale**2
    report["centers"] = centers.tolist()
    report["oracle_queries"]["total"] = oracle.queries
    return centers, report
