"""Weighted sampling, D^2 distributions and the pseudo-approximation seeder."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from qkmeans.core import Dataset, as_points, exact_cost
from qkmeans.errors import DegenerateDatasetError, SamplerStarvation
from qkmeans.estimator import estimate_cost, sample_count_m
from qkmeans.oracle import DistanceOracle, min_distance_profile

MAX_PROPOSALS = 10**7


class WeightTree:
    """Sum tree over nonnegative leaf weights.

    Leaves live at ``nodes[capacity:capacity + n]`` with ``capacity`` the
    next power of two; node ``i`` stores the sum of nodes ``2i`` and
    ``2i + 1``. Updates recompute ancestors from their children rather than
    adding deltas, so stored sums never drift from the leaves.
    """

    def __init__(self, weights):
        w = np.asarray(weights, dtype=float).ravel()
        if w.size == 0:
            raise ValueError("weight tree needs at least one leaf")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        self.n = w.size
        self.capacity = 1 << (self.n - 1).bit_length()
        self.nodes = np.zeros(2 * self.capacity)
        self.nodes[self.capacity : self.capacity + self.n] = w
        lo = self.capacity // 2
        while lo >= 1:
            hi = 2 * lo
            self.nodes[lo:hi] = self.nodes[2 * lo : 2 * hi : 2] + self.nodes[2 * lo + 1 : 2 * hi : 2]
            lo //= 2

    @property
    def total(self) -> float:
        return float(self.nodes[1])

    @property
    def weights(self) -> np.ndarray:
        return self.nodes[self.capacity : self.capacity + self.n].copy()

    def __len__(self):
        return self.n

    def update(self, i: int, w: float) -> WeightTree:
        if not 0 <= i < self.n:
            raise IndexError(f"leaf index {i} out of range [0, {self.n})")
        if not (math.isfinite(w) and w >= 0):
            raise ValueError(f"weight must be finite and nonnegative, got {w}")
        j = i + self.capacity
        self.nodes[j] = w
        j //= 2
        while j >= 1:
            self.nodes[j] = self.nodes[2 * j] + self.nodes[2 * j + 1]
            j //= 2
        return self

    def sample(self, rng) -> int:
        """Descend from the root on a single uniform draw."""
        total = self.nodes[1]
        if not total > 0:
            raise ValueError("empty distribution")
        u = rng.random() * total
        j = 1
        nodes = self.nodes
        while j < self.capacity:
            left, right = nodes[2 * j], nodes[2 * j + 1]
            # rounding in stored sums can push u past a zero-weight subtree
            if (u < left and left > 0) or right <= 0:
                j = 2 * j
            else:
                u -= left
                j = 2 * j + 1
        return j - self.capacity

    def probability(self, i: int) -> float:
        """Leaf probability as the product of branch ratios along its path."""
        if not 0 <= i < self.n:
            raise IndexError(f"leaf index {i} out of range [0, {self.n})")
        p = 1.0
        j = i + self.capacity
        while j > 1:
            parent = self.nodes[j // 2]
            if parent == 0:
                return 0.0
            p *= self.nodes[j] / parent
            j //= 2
        return p


@dataclass(frozen=True)
class D2Distribution:
    probs: np.ndarray
    source: str

    def __len__(self):
        return len(self.probs)


def d2_distribution(data: Dataset, centers, oracle: DistanceOracle, rng=None) -> D2Distribution:
    n = data.n
    if centers is None or len(centers) == 0:
        return D2Distribution(np.full(n, 1.0 / n), source="uniform")
    profile = min_distance_profile(data, centers, oracle, rng)
    w = profile.values**2
    total = math.fsum(w)
    if total <= 0:
        raise DegenerateDatasetError("degenerate: all points coincide with centers")
    return D2Distribution(w / total, source=oracle.config.mode)


def d2_tree(data: Dataset, centers, oracle: DistanceOracle, rng=None) -> WeightTree:
    """Materialized D^2 distribution; the direct sampler tests compare against."""
    return WeightTree(d2_distribution(data, centers, oracle, rng).probs)


def rejection_normalizer(data: Dataset, centers, oracle: DistanceOracle, cost_estimate: float) -> float:
    """Smallest admissible normalizer that is at least ``cost_estimate``.

    The acceptance probability est^2 / (2 * normalizer) must stay below 1/2,
    so the estimate is raised to the largest squared estimate the channel
    can emit. Any normalizer at least that large leaves the accepted
    distribution unchanged.
    """
    if oracle.config.deterministic:
        values, _ = oracle.min_estimates(data.points, centers)
        bound = float(values.max()) ** 2
    else:
        bound = oracle.eta_tilde**2
    return max(float(cost_estimate), bound)


def d2_sample_rejection(
    data: Dataset,
    centers,
    oracle: DistanceOracle,
    cost_estimate: float,
    rng,
    max_proposals: int = MAX_PROPOSALS,
) -> tuple[int, int]:
    """Draw one index from the estimated D^2 distribution by rejection.

    Proposals are uniform over the data; index ``i`` is accepted with
    probability ``est_i^2 / (2 * cost_estimate)``. Deterministic channels are
    evaluated once for all points; the stochastic channel re-estimates on
    every proposal. Returns ``(index, proposals_used)``.
    """
    centers = as_points(centers, "centers")
    if len(centers) == 0:
        raise ValueError("rejection sampling needs a nonempty center set")
    if not cost_estimate > 0:
        raise ValueError(f"cost_estimate must be positive, got {cost_estimate}")
    n = data.n
    scale = 1.0 / (2.0 * cost_estimate)
    cached = None
    batch = 256
    if oracle.config.deterministic:
        values, _ = oracle.min_estimates(data.points, centers)
        cached = values**2
        if cached.max() > cost_estimate:
            raise ValueError("invalid amplitude: beta_i^2 > 1/2 analog (cost_estimate too small)")
        mass = math.fsum(cached)
        if mass > 0:
            expected = 2.0 * cost_estimate * n / mass
            batch = int(min(max(64, 2 * expected), 1 << 16))
    used = 0
    while used < max_proposals:
        b = min(batch, max_proposals - used)
        idx = rng.integers(n, size=b)
        if cached is not None:
            sq = cached[idx]
        else:
            est, _ = oracle.min_estimates(data.points[idx], centers, rng)
            sq = est**2
        accept = rng.random(b) < sq * scale
        hit = bool(accept.any())
        first = int(np.argmax(accept)) if hit else b - 1
        if cached is None and sq[: first + 1].max() > cost_estimate:
            raise ValueError("invalid amplitude: beta_i^2 > 1/2 analog (cost_estimate too small)")
        if hit:
            return int(idx[first]), used + first + 1
        used += b
        batch = min(batch * 2, 1 << 16)
    raise SamplerStarvation(f"sampler starvation: no acceptance in {max_proposals} proposals")


@dataclass
class Seeding:
    """Output of :func:`pseudo_approx_seed`."""

    centers: np.ndarray
    indices: list[int]
    proposals: list[int] = field(default_factory=list)
    cost_estimates: list[float] = field(default_factory=list)


def seeding_sample_count(oracle: DistanceOracle, k: int) -> int:
    return sample_count_m(oracle.eta_tilde, 2 * k, 0.5)


def round_cost_estimate(data: Dataset, centers, oracle: DistanceOracle, rng, m: int) -> float:
    """Cost used to normalize the acceptance probability in one sampling round."""
    if oracle.config.mode == "exact":
        return exact_cost(data, centers)
    return estimate_cost(data, centers, m, oracle, rng).alpha_m


def pseudo_approx_seed(data: Dataset, k: int, oracle: DistanceOracle, rng, m: int | None = None) -> Seeding:
    """Pick 2k data points by repeated estimated-D^2 sampling.

    The first pick is uniform. When every point already coincides with a
    center (estimated cost 0) the remaining picks are uniform too, since any
    choice leaves the cost at 0.

    ``m`` is the sample count of the per-round cost estimate (ignored by the
    exact channel, which uses the exact cost).
    """
    if k < 1:
        raise ValueError(f"k must be positive, got {k}")
    if m is None:
        m = seeding_sample_count(oracle, k)
    picks: list[int] = []
    seeding = Seeding(centers=np.empty((0, data.dim)), indices=picks)
    for _ in range(2 * k):
        if not picks:
            i, used, est = int(rng.integers(data.n)), 1, float("nan")
        else:
            centers = data.points[picks]
            est = round_cost_estimate(data, centers, oracle, rng, m)
            norm = rejection_normalizer(data, centers, oracle, est)
            covered = norm <= 0 if oracle.config.deterministic else est <= 0
            if covered:
                i, used = int(rng.integers(data.n)), 1
            else:
                i, used = d2_sample_rejection(data, centers, oracle, norm, rng)
        picks.append(i)
        seeding.proposals.append(used)
        seeding.cost_estimates.append(est)
    seeding.centers = data.points[picks].copy()
    return seeding
