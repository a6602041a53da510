"""Interval quality metrics: coverage, average size, worst-slab coverage."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .conformal import PredictionInterval
from .errors import ShapeMismatch, TooFewSamples

__all__ = ["empirical_coverage", "average_size", "wsc", "SplitMetrics", "EvalReport"]


def _centers_radii(intervals) -> tuple[np.ndarray, np.ndarray]:
    """Accept a list of PredictionInterval or a (centers, radii) pair."""
    if isinstance(intervals, tuple) and len(intervals) == 2:
        c, r = intervals
        return np.asarray(c, dtype=float).ravel(), np.asarray(r, dtype=float).ravel()
    centers = np.asarray([iv.center for iv in intervals], dtype=float)
    radii = np.asarray([iv.radius for iv in intervals], dtype=float)
    return centers, radii


def covered_mask(intervals, labels) -> np.ndarray:
    """Boolean coverage per sample; boundary points count as covered."""
    centers, radii = _centers_radii(intervals)
    y = np.asarray(labels, dtype=float).ravel()
    if centers.size != y.size:
        raise ShapeMismatch(f"{centers.size} intervals vs {y.size} labels")
    return np.abs(y - centers) <= radii


def empirical_coverage(intervals, labels) -> float:
    """Fraction of labels falling inside their interval."""
    return float(np.mean(covered_mask(intervals, labels)))


def average_size(intervals) -> float:
    """Mean interval size (twice the radius)."""
    _, radii = _centers_radii(intervals)
    if radii.size == 0:
        raise ShapeMismatch("no intervals")
    return float(np.mean(2.0 * radii))


def wsc(features, covered, delta: float = 0.1, n_directions: int = 1000,
        seed: int = 0) -> float:
    """Worst-slab coverage: the minimum coverage over massive slabs.

    For each of ``n_directions`` random unit vectors v, samples are sorted
    by v.x and every contiguous window holding at least ceil(delta * n)
    samples is a candidate slab; the result is the minimum window coverage
    over all windows and directions.

    Any window of length >= 2m (m the minimum slab size) splits into two
    admissible halves whose coverages bracket its own from below, so the
    scan is restricted to window lengths in [m, 2m) without changing the
    minimum. Deterministic given the seed, and the direction sequence for a
    smaller ``n_directions`` is a prefix of that for a larger one.
    """
    X = np.atleast_2d(np.asarray(features, dtype=float))
    cov = np.asarray(covered, dtype=float).ravel()
    n = cov.size
    if X.shape[0] != n:
        raise ShapeMismatch(f"{X.shape[0]} feature rows vs {n} coverage flags")
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if n_directions < 1:
        raise ValueError(f"n_directions must be >= 1, got {n_directions}")
    m = math.ceil(delta * n)
    if m < 2:
        raise TooFewSamples(f"delta * n = {delta * n:.3f} < 2; need more samples")

    rng = np.random.Generator(np.random.PCG64(seed))
    dirs = rng.standard_normal((n_directions, X.shape[1]))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)

    proj = X @ dirs.T                       # (n, n_directions)
    order = np.argsort(proj, axis=0, kind="stable")
    sorted_cov = np.take_along_axis(cov[:, None].repeat(n_directions, axis=1),
                                    order, axis=0)
    csum = np.vstack([np.zeros((1, n_directions)), np.cumsum(sorted_cov, axis=0)])

    worst = 1.0
    for length in range(m, min(2 * m, n + 1)):
        means = (csum[length:] - csum[:-length]) / length
        worst = min(worst, float(means.min()))
    return worst


@dataclass
class SplitMetrics:
    """Metrics of one calibration/test split."""

    coverage: float
    avg_size: float
    wsc: float
    n_test: int


@dataclass
class EvalReport:
    """Per-split metrics with their mean and sample standard deviation."""

    splits: list[SplitMetrics]

    def _values(self, attr: str) -> np.ndarray:
        return np.asarray([getattr(s, attr) for s in self.splits], dtype=float)

    def mean(self, attr: str) -> float:
        return float(self._values(attr).mean())

    def std(self, attr: str) -> float:
        vals = self._values(attr)
        return float(vals.std(ddof=1)) if vals.size > 1 else 0.0

    @property
    def coverage(self) -> float:
        return self.mean("coverage")

    @property
    def avg_size(self) -> float:
        return self.mean("avg_size")

    @property
    def wsc(self) -> float:
        return self.mean("wsc")

    @property
    def n_test(self) -> int:
        return int(sum(s.n_test for s in self.splits))

    def to_csv_rows(self) -> list[list]:
        rows = [[i, s.coverage, s.avg_size, s.wsc, s.n_test]
                for i, s in enumerate(self.splits)]
        return rows

    def to_dict(self) -> dict:
        return {
            "n_splits": len(self.splits),
            "n_test_total": self.n_test,
            "coverage": {"mean": self.coverage, "std": self.std("coverage")},
            "avg_size": {"mean": self.avg_size, "std": self.std("avg_size")},
            "wsc": {"mean": self.wsc, "std": self.std("wsc")},
            "per_split": [
                {"coverage": s.coverage, "avg_size": s.avg_size,
                 "wsc": s.wsc, "n_test": s.n_test}
                for s in self.splits
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)
