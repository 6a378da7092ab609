"""Distance-estimation channels.

A channel stands in for the coherent distance-estimation subroutine: it is
never simulated at circuit level, only through its error contract. Three
modes are supported:

``exact``
    returns the Euclidean distance.
``deterministic-delta``
    returns the distance times a multiplier in ``[1 - eps_rel, 1 + eps_rel]``
    that is a fixed function of the two points' coordinates and
    ``oracle_seed``. Repeated queries agree, so this is a delta-close distance
    function in the strict sense.
``stochastic``
    each query fails independently with probability ``2 * delta_fail``
    (emitting uniform garbage on ``[1, (1 + eps_rel) * eta]``); otherwise it
    returns the distance times a fresh uniform multiplier on
    ``[1 - eps_rel, 1 + eps_rel]``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from qkmeans.core import as_points, sq_distances
from qkmeans.errors import ConfigError

MODES = ("exact", "deterministic-delta", "stochastic")

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def _splitmix(x: np.ndarray) -> np.ndarray:
    z = x + _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def point_fingerprints(points: np.ndarray) -> np.ndarray:
    """64-bit hash of each row's exact coordinates."""
    pts = np.ascontiguousarray(np.asarray(points, dtype=np.float64) + 0.0)  # folds -0.0 into 0.0
    bits = pts.view(np.uint64).reshape(pts.shape)
    h = np.full(len(pts), np.uint64(pts.shape[1]), dtype=np.uint64)
    for col in range(bits.shape[1]):
        h = _splitmix(h ^ bits[:, col])
    return h


def pair_uniforms(fp_a: np.ndarray, fp_b: np.ndarray, seed: int) -> np.ndarray:
    """Symmetric pseudo-random map from fingerprint pairs to [0, 1)."""
    lo = np.minimum(fp_a, fp_b)
    hi = np.maximum(fp_a, fp_b)
    s = _splitmix(np.array([seed & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64))[0]
    z = _splitmix(_splitmix(lo ^ s) ^ hi)
    return (z >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))


@dataclass(frozen=True)
class OracleConfig:
    mode: str = "exact"
    eps_rel: float = 0.0
    delta_fail: float = 0.0
    oracle_seed: int = 0
    # Forces one multiplier on every pair in deterministic-delta mode.
    fixed_multiplier: float | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown oracle mode {self.mode!r}; expected one of {MODES}")
        if not 0.0 <= self.eps_rel < 1.0:
            raise ConfigError(f"eps_rel must lie in [0, 1), got {self.eps_rel}")
        if not 0.0 <= self.delta_fail < 0.5:
            raise ConfigError(f"delta_fail must lie in [0, 1/2), got {self.delta_fail}")
        if self.mode == "exact" and (self.eps_rel or self.delta_fail):
            raise ConfigError("exact mode requires eps_rel = 0 and delta_fail = 0")
        if self.mode == "deterministic-delta" and self.delta_fail:
            raise ConfigError("deterministic-delta mode has no failure event; set delta_fail = 0")
        if self.fixed_multiplier is not None:
            if self.mode != "deterministic-delta":
                raise ConfigError("fixed_multiplier only applies to deterministic-delta mode")
            if abs(self.fixed_multiplier - 1.0) > self.eps_rel + 1e-15:
                raise ConfigError("fixed_multiplier must lie in [1 - eps_rel, 1 + eps_rel]")

    @classmethod
    def exact(cls) -> OracleConfig:
        return cls()

    @classmethod
    def delta_close(cls, delta: float, seed: int = 0, fixed_multiplier=None) -> OracleConfig:
        return cls("deterministic-delta", eps_rel=delta, oracle_seed=seed, fixed_multiplier=fixed_multiplier)

    @classmethod
    def stochastic(cls, eps_rel: float, delta_fail: float = 0.0) -> OracleConfig:
        return cls("stochastic", eps_rel=eps_rel, delta_fail=delta_fail)

    @property
    def deterministic(self) -> bool:
        return self.mode != "stochastic"

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class DistanceEstimate:
    value: float
    failed: bool = False


@dataclass(frozen=True)
class MinDistanceProfile:
    """Per-point estimated distance to the nearest center."""

    values: np.ndarray
    failed: np.ndarray
    # Probability that no estimate in the profile failed, (1 - 2*delta)^(N t).
    success_probability: float

    @property
    def all_succeeded(self) -> bool:
        return not bool(self.failed.any())

    def __len__(self):
        return len(self.values)

    def __getitem__(self, i) -> DistanceEstimate:
        return DistanceEstimate(float(self.values[i]), bool(self.failed[i]))


class DistanceOracle:
    """A distance channel bound to a dataset's aspect ratio.

    ``eta`` sets the garbage range of failed estimates. ``queries`` counts
    pair estimates produced, which stands in for wall-clock cost.
    """

    def __init__(self, config: OracleConfig, eta: float = 1.0):
        if eta < 1.0:
            raise ValueError(f"aspect ratio must be >= 1, got {eta}")
        self.config = config
        self.eta = float(eta)
        self.queries = 0

    @property
    def eta_tilde(self) -> float:
        return (1.0 + self.config.eps_rel) * self.eta

    def multipliers(self, points: np.ndarray, centers: np.ndarray) -> np.ndarray:
        """Fixed (n, t) multiplier field of the deterministic-delta channel."""
        cfg = self.config
        if cfg.fixed_multiplier is not None:
            return np.full((len(points), len(centers)), float(cfg.fixed_multiplier))
        u = pair_uniforms(
            point_fingerprints(points)[:, None],
            point_fingerprints(centers)[None, :],
            cfg.oracle_seed,
        )
        return 1.0 - cfg.eps_rel + 2.0 * cfg.eps_rel * u

    def estimate_matrix(self, points, centers, rng=None) -> tuple[np.ndarray, np.ndarray]:
        """Estimated distances for every (point, center) pair plus failure flags."""
        points = as_points(points)
        centers = as_points(centers, "centers")
        true = np.sqrt(sq_distances(points, centers))
        self.queries += true.size
        failed = np.zeros(true.shape, dtype=bool)
        cfg = self.config
        if cfg.mode == "exact":
            return true, failed
        if cfg.mode == "deterministic-delta":
            return true * self.multipliers(points, centers), failed
        rng = _require_rng(rng)
        values = true * rng.uniform(1.0 - cfg.eps_rel, 1.0 + cfg.eps_rel, size=true.shape)
        if cfg.delta_fail > 0:
            failed = rng.random(true.shape) < 2.0 * cfg.delta_fail
            n_failed = int(failed.sum())
            if n_failed:
                values[failed] = rng.uniform(1.0, self.eta_tilde, size=n_failed)
        return values, failed

    def min_estimates(self, points, centers, rng=None) -> tuple[np.ndarray, np.ndarray]:
        centers = as_points(centers, "centers")
        if len(centers) == 0:
            raise ValueError("center set must be nonempty")
        values, failed = self.estimate_matrix(points, centers, rng)
        return values.min(axis=1), failed.any(axis=1)


def _require_rng(rng):
    if rng is None:
        raise ValueError("stochastic oracle needs a random generator")
    return rng


def estimate_distance(p, q, oracle: DistanceOracle, rng=None) -> DistanceEstimate:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError(f"dimension mismatch: {p.shape} vs {q.shape}")
    values, failed = oracle.estimate_matrix(p.reshape(1, -1), q.reshape(1, -1), rng)
    return DistanceEstimate(float(values[0, 0]), bool(failed[0, 0]))


def estimate_min_distance(p, centers, oracle: DistanceOracle, rng=None) -> DistanceEstimate:
    """One estimate per center, minimum over the estimated values.

    Fails if any per-center estimate failed.
    """
    p = np.asarray(p, dtype=float).reshape(1, -1)
    values, failed = oracle.min_estimates(p, centers, rng)
    return DistanceEstimate(float(values[0]), bool(failed[0]))


def min_distance_profile(data, centers, oracle: DistanceOracle, rng=None) -> MinDistanceProfile:
    points = data.points if hasattr(data, "points") else as_points(data)
    centers = as_points(centers, "centers")
    values, failed = oracle.min_estimates(points, centers, rng)
    p_ok = (1.0 - 2.0 * oracle.config.delta_fail) ** (len(points) * len(centers))
    return MinDistanceProfile(values=values, failed=failed, success_probability=p_ok)
