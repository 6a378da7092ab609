import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from conftest import binomial_sigma
from qkmeans.core import Dataset, exact_cost, normalize_dataset
from qkmeans.errors import DegenerateDatasetError, SamplerStarvation
from qkmeans.oracle import DistanceOracle, OracleConfig
from qkmeans.sampler import (
    WeightTree,
    d2_distribution,
    d2_sample_rejection,
    d2_tree,
    pseudo_approx_seed,
    rejection_normalizer,
)
from qkmeans.scheme import brute_force_opt

EXACT = DistanceOracle(OracleConfig())


def raw_dataset(points):
    pts = np.asarray(points, dtype=float)
    return Dataset(points=pts, eta=1.0, scale=1.0)


def exact_path_probability(tree, i):
    p = Fraction(1)
    j = i + tree.capacity
    while j > 1:
        if tree.nodes[j // 2] == 0:
            return Fraction(0)
        p *= Fraction(tree.nodes[j]) / Fraction(tree.nodes[j // 2])
        j //= 2
    return p


# weight tree


def test_tree_build_probabilities():
    tree = WeightTree([1, 2, 3, 4])
    assert tree.total == 10
    assert [tree.probability(i) for i in range(4)] == pytest.approx([0.1, 0.2, 0.3, 0.4], rel=1e-15)
    assert [exact_path_probability(tree, i) for i in range(4)] == [Fraction(w, 10) for w in (1, 2, 3, 4)]


@pytest.mark.parametrize("weights, only", [([0, 0, 5], 2), ([1], 0)])
def test_tree_degenerate_support(weights, only, rng):
    tree = WeightTree(weights)
    assert {tree.sample(rng) for _ in range(1000)} == {only}


def test_tree_rejects_bad_weights():
    with pytest.raises(ValueError):
        WeightTree([1, -1])
    with pytest.raises(ValueError):
        WeightTree([])
    with pytest.raises(ValueError):
        WeightTree([1, float("nan")])
    tree = WeightTree([1, 2])
    with pytest.raises(IndexError):
        tree.update(2, 1.0)
    with pytest.raises(ValueError):
        tree.update(0, -0.5)


def test_tree_empty_distribution(rng):
    with pytest.raises(ValueError, match="empty distribution"):
        WeightTree([0, 0]).sample(rng)


def test_tree_update():
    tree = WeightTree([1, 2, 3, 4]).update(0, 5)
    assert tree.total == 14
    assert [tree.probability(i) for i in range(4)] == pytest.approx([5 / 14, 2 / 14, 3 / 14, 4 / 14], rel=1e-15)


def test_tree_identity_update():
    tree = WeightTree([0.3, 1.7, 2.2])
    before = tree.nodes.copy()
    tree.update(1, tree.weights[1])
    np.testing.assert_array_equal(tree.nodes, before)


def test_tree_zeroed_leaf_never_drawn(rng):
    tree = WeightTree([1, 2, 3, 4]).update(2, 0.0)
    draws = [tree.sample(rng) for _ in range(10_000)]
    assert 2 not in draws


@pytest.mark.parametrize("weights, index, p", [([1, 1], 0, 0.5), ([1, 3], 1, 0.75)])
def test_tree_sampling_frequency(weights, index, p, rng):
    tree = WeightTree(weights)
    n = 100_000
    hits = sum(tree.sample(rng) == index for _ in range(n))
    assert abs(hits / n - p) <= 3 * binomial_sigma(p, n)


def test_tree_sparse_support(rng):
    tree = WeightTree([2, 0, 0, 6])
    n = 40_000
    draws = np.array([tree.sample(rng) for _ in range(n)])
    assert set(np.unique(draws)) == {0, 3}
    p3 = 0.75
    assert abs((draws == 3).mean() - p3) <= 3 * binomial_sigma(p3, n)


weights_st = st.lists(st.floats(0, 1e6, allow_nan=False), min_size=1, max_size=40)


@given(weights_st)
def test_tree_path_product_is_exact(weights):
    tree = WeightTree(weights)
    root = Fraction(tree.nodes[1])
    if root == 0:
        return
    for i, w in enumerate(weights):
        assert exact_path_probability(tree, i) == Fraction(w) / root
        assert tree.probability(i) == pytest.approx(float(Fraction(w) / root), rel=1e-12, abs=1e-300)


@given(weights_st, st.lists(st.tuples(st.integers(0, 10**6), st.floats(0, 1e6, allow_nan=False)), max_size=30))
def test_tree_sums_consistent_after_updates(weights, updates):
    tree = WeightTree(weights)
    for i, w in updates:
        tree.update(i % tree.n, w)
    internal = np.arange(1, tree.capacity)
    np.testing.assert_array_equal(tree.nodes[internal], tree.nodes[2 * internal] + tree.nodes[2 * internal + 1])
    leaves = tree.weights
    assert tree.total == pytest.approx(math.fsum(leaves), rel=1e-12, abs=0)


# D^2 distribution


def test_d2_uniform_when_no_centers():
    data = normalize_dataset(np.arange(5.0))
    np.testing.assert_array_equal(d2_distribution(data, None, EXACT).probs, [0.2] * 5)
    np.testing.assert_array_equal(d2_distribution(data, np.empty((0, 1)), EXACT).probs, [0.2] * 5)


def test_d2_exact_probabilities():
    data = raw_dataset([(1.0, 0.0), (0.0, math.sqrt(3))])
    probs = d2_distribution(data, [(0.0, 0.0)], EXACT).probs
    np.testing.assert_allclose(probs, [0.25, 0.75], rtol=1e-12)


def test_d2_common_factor_cancels(rng):
    data = normalize_dataset(rng.normal(size=(12, 2)))
    centers = data.points[[0, 5]]
    scaled = DistanceOracle(OracleConfig.delta_close(0.1, fixed_multiplier=1.1), data.eta)
    np.testing.assert_allclose(
        d2_distribution(data, centers, scaled).probs,
        d2_distribution(data, centers, EXACT).probs,
        rtol=1e-12,
    )


def test_d2_degenerate():
    data = normalize_dataset([0.0, 1.0])
    with pytest.raises(DegenerateDatasetError):
        d2_distribution(data, data.points, EXACT)


@pytest.mark.parametrize("delta", [0.1, 0.25, 0.5, 0.75])
def test_d2_closeness_exact_sweep(delta, rng):
    data = normalize_dataset(rng.normal(size=(25, 3)))
    centers = data.points[:4]
    close = d2_distribution(data, centers, DistanceOracle(OracleConfig.delta_close(delta, seed=9), data.eta)).probs
    exact = d2_distribution(data, centers, EXACT).probs
    lo, hi = ((1 - delta) / (1 + delta)) ** 2, ((1 + delta) / (1 - delta)) ** 2
    nz = exact > 0
    assert np.all(close[~nz] == 0)
    ratio = close[nz] / exact[nz]
    assert np.all(ratio >= lo * (1 - 1e-12)) and np.all(ratio <= hi * (1 + 1e-12))


# rejection sampling


def test_rejection_never_samples_center(rng):
    data = normalize_dataset([0.0, 1.0, 3.0, 4.0])
    centers = data.points[[1]]
    cost = exact_cost(data, centers)
    draws = {d2_sample_rejection(data, centers, EXACT, cost, rng)[0] for _ in range(2000)}
    assert 1 not in draws and draws == {0, 2, 3}


def test_rejection_two_point_instance(rng):
    data = raw_dataset([(1.0, 0.0), (0.0, math.sqrt(3))])
    center = [(0.0, 0.0)]
    n = 100_000
    draws = [d2_sample_rejection(data, center, EXACT, 4.0, rng) for _ in range(n)]
    idx = np.array([d[0] for d in draws])
    proposals = np.array([d[1] for d in draws])
    assert abs((idx == 1).mean() - 0.75) <= 3 * binomial_sigma(0.75, n)
    # geometric trials with success 1/4: mean 2 * 4 * 2 / 4 = 4
    assert abs(proposals.mean() - 4.0) <= 0.05 * 4.0


def test_rejection_matches_distribution_chi_square(rng):
    data = normalize_dataset(np.random.default_rng(1).normal(size=(8, 2)))
    centers = data.points[[0]]
    target = d2_distribution(data, centers, EXACT).probs
    n = 100_000
    cost = exact_cost(data, centers)
    counts = np.bincount([d2_sample_rejection(data, centers, EXACT, cost, rng)[0] for _ in range(n)], minlength=data.n)
    nz = target > 0
    assert counts[~nz].sum() == 0
    assert stats.chisquare(counts[nz], n * target[nz]).pvalue > 1e-3


def test_rejection_agrees_with_tree_sampler(rng):
    data = normalize_dataset(np.random.default_rng(2).normal(size=(6, 2)))
    centers = data.points[[3]]
    tree = d2_tree(data, centers, EXACT)
    n = 20_000
    a = np.bincount([tree.sample(rng) for _ in range(n)], minlength=data.n)
    cost = exact_cost(data, centers)
    b = np.bincount([d2_sample_rejection(data, centers, EXACT, cost, rng)[0] for _ in range(n)], minlength=data.n)
    keep = (a + b) > 0
    assert stats.chi2_contingency(np.vstack([a[keep], b[keep]])).pvalue > 1e-3


def test_rejection_cost_too_small(rng):
    data = normalize_dataset([0.0, 1.0, 5.0])
    with pytest.raises(ValueError, match="invalid amplitude"):
        d2_sample_rejection(data, data.points[[0]], EXACT, 10.0, rng)


def test_rejection_starvation(rng):
    data = normalize_dataset([0.0, 1.0])
    with pytest.raises(SamplerStarvation):
        d2_sample_rejection(data, data.points, EXACT, 1.0, rng, max_proposals=5000)


def test_rejection_stochastic_channel(rng):
    data = normalize_dataset([0.0, 1.0, 2.0, 10.0])
    oracle = DistanceOracle(OracleConfig.stochastic(0.1, delta_fail=0.01), data.eta)
    centers = data.points[[0]]
    norm = rejection_normalizer(data, centers, oracle, 1.0)
    assert norm == pytest.approx((1.1 * data.eta) ** 2)
    draws = [d2_sample_rejection(data, centers, oracle, norm, rng)[0] for _ in range(3000)]
    # squared distances 0, 1, 4, 100: the far point dominates
    assert np.mean(np.array(draws) == 3) > 0.9


def test_normalizer_deterministic():
    data = normalize_dataset([0.0, 1.0, 3.0])
    centers = data.points[[0]]
    assert rejection_normalizer(data, centers, EXACT, 2.0) == 9.0
    assert rejection_normalizer(data, centers, EXACT, 20.0) == 20.0


# seeding


@pytest.mark.parametrize("k", [1, 2, 5])
def test_seed_size(k, rng):
    data = normalize_dataset(rng.normal(size=(7, 2)))
    seeding = pseudo_approx_seed(data, k, EXACT, rng)
    assert seeding.centers.shape == (2 * k, 2)
    assert len(seeding.indices) == 2 * k


def test_seed_first_pick_uniform():
    data = normalize_dataset(np.arange(6.0))
    firsts = [pseudo_approx_seed(data, 1, EXACT, np.random.default_rng(s)).indices[0] for s in range(6000)]
    counts = np.bincount(firsts, minlength=6)
    assert stats.chisquare(counts).pvalue > 1e-3


def test_seed_covers_distinct_points_first():
    # with the exact channel a covered point has weight 0, so the first N picks are distinct
    data = normalize_dataset(np.arange(4.0))
    for s in range(20):
        seeding = pseudo_approx_seed(data, 3, EXACT, np.random.default_rng(s))
        assert len(set(seeding.indices[:4])) == 4


@pytest.mark.parametrize("cfg", [OracleConfig.delta_close(0.3, seed=2), OracleConfig.stochastic(0.1, delta_fail=0.001)])
def test_seed_with_noisy_channels(cfg, rng):
    data = normalize_dataset(rng.normal(size=(15, 2)) * [1, 3])
    oracle = DistanceOracle(cfg, data.eta)
    seeding = pseudo_approx_seed(data, 2, oracle, rng)
    assert seeding.centers.shape == (4, 2)
    assert all(p >= 1 for p in seeding.proposals)


def test_seed_constant_factor_on_planted(planted):
    opt = brute_force_opt(planted, 2).cost
    good = 0
    for s in range(100):
        seeding = pseudo_approx_seed(planted, 2, EXACT, np.random.default_rng(s))
        good += exact_cost(planted, seeding.centers) <= 20 * opt
    assert good >= 95


# expected cost after one tilde-D^2 pick inside an optimal cluster


class SkewedOracle(DistanceOracle):
    """Shrinks estimates of the points nearest the center set, inflates the rest."""

    def __init__(self, config, eta, favoured):
        super().__init__(config, eta)
        self.favoured = favoured

    def multipliers(self, points, centers):
        delta = self.config.eps_rel
        out = np.full((len(points), len(centers)), 1 - delta)
        for i, p in enumerate(points):
            if any(np.array_equal(p, f) for f in self.favoured):
                out[i] = 1 + delta
        return out


def _expected_cost_after_pick(A, C, probs):
    base = ((A[:, None, :] - C[None, :, :]) ** 2).sum(-1).min(axis=1)
    costs = []
    for a0 in A:
        costs.append(np.minimum(base, ((A - a0) ** 2).sum(-1)).sum())
    return float(np.dot(probs, costs))


@pytest.mark.parametrize("delta", [0.0, 0.25, 0.5])
def test_single_pick_bound_exact_expectation(delta):
    g = np.random.default_rng(2)
    A = g.normal(size=(8, 2))
    C = np.array([[30.0, 0.0]])
    opt_a = ((A - A.mean(0)) ** 2).sum()
    cluster = raw_dataset(A)
    bound = 8 * ((1 + delta) / (1 - delta)) ** 2 * opt_a
    far = A[np.argsort(-((A - C) ** 2).sum(-1))[:2]]
    oracles = [DistanceOracle(OracleConfig()) if delta == 0 else DistanceOracle(OracleConfig.delta_close(delta, seed=s)) for s in range(3)]
    if delta:
        oracles.append(SkewedOracle(OracleConfig.delta_close(delta), 1.0, far))
    for oracle in oracles:
        probs = d2_distribution(cluster, C, oracle).probs
        assert _expected_cost_after_pick(A, C, probs) <= bound
