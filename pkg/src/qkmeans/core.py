"""Exact geometry, k-means cost and dataset normalization."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial.distance import pdist

from qkmeans.errors import DegenerateDatasetError


@dataclass(frozen=True)
class Dataset:
    """Normalized point cloud.

    ``points`` is an (N, d) float array scaled so that the smallest distance
    between two distinct points is 1; ``scale`` is the divisor that was
    applied to the raw coordinates and ``eta`` the largest pairwise distance
    after scaling (the aspect ratio).
    """

    points: np.ndarray
    eta: float
    scale: float

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def digest(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.points).tobytes()).hexdigest()


def as_points(points, name="points") -> np.ndarray:
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[1] < 1:
        raise ValueError(f"{name} must be a 2-D array of shape (n, d), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite coordinates")
    return arr


def euclidean_distance(p, q) -> float:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError(f"dimension mismatch: {p.shape} vs {q.shape}")
    return math.sqrt(math.fsum((p - q) ** 2))


def centroid(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.size == 0 or len(pts) == 0:
        raise ValueError("centroid of an empty multiset is undefined")
    if pts.ndim == 1:
        pts = pts[:, None]
    return pts.mean(axis=0)


def sq_distances(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """(n, t) matrix of squared distances, computed by explicit differences.

    The expanded ``|x|^2 - 2 x.c + |c|^2`` form cancels badly when points sit
    on top of centers, which is the common case here.
    """
    points = np.asarray(points, dtype=float)
    centers = np.asarray(centers, dtype=float)
    if points.shape[-1] != centers.shape[-1]:
        raise ValueError(
            f"dimension mismatch: points have d={points.shape[-1]}, centers d={centers.shape[-1]}"
        )
    diff = points[:, None, :] - centers[None, :, :]
    return np.einsum("ntd,ntd->nt", diff, diff)


def nearest_center(points, centers) -> tuple[np.ndarray, np.ndarray]:
    """Index of the nearest center (lowest index on ties) and the squared distance."""
    d2 = sq_distances(as_points(points), as_points(centers, "centers"))
    idx = np.argmin(d2, axis=1)
    return idx, d2[np.arange(len(idx)), idx]


def exact_cost(data, centers) -> float:
    points = data.points if isinstance(data, Dataset) else as_points(data)
    centers = as_points(centers, "centers")
    if len(centers) == 0:
        raise ValueError("center set must be nonempty")
    _, d2 = nearest_center(points, centers)
    return math.fsum(d2)


def normalize_dataset(raw) -> Dataset:
    pts = as_points(raw)
    if len(pts) < 2:
        raise DegenerateDatasetError("degenerate dataset: need at least 2 points")
    dists = pdist(pts)
    distinct = dists[dists > 0]
    if distinct.size == 0:
        raise DegenerateDatasetError("degenerate dataset: aspect ratio undefined")
    scale = float(distinct.min())
    scaled = pts / scale
    eta = float(dists.max() / scale)
    return Dataset(points=scaled, eta=max(eta, 1.0), scale=scale)


def aspect_ratio(data: Dataset) -> float:
    return data.eta


def load_csv(path) -> Dataset:
    """Read one point per row; ``#`` starts a comment line."""
    raw = np.loadtxt(Path(path), delimiter=",", comments="#", ndmin=2, dtype=float)
    return normalize_dataset(raw)


def write_csv(path, points, header=None) -> None:
    pts = as_points(points)
    lines = []
    if header:
        lines.extend(f"# {line}" for line in header.splitlines())
    lines.extend(",".join(repr(float(x)) for x in row) for row in pts)
    Path(path).write_text("\n".join(lines) + "\n")
