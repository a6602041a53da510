"""Split conformal calibration: sample quantiles, thresholds, and intervals.

The calibrate/predict pipeline works with any conformity transform object
exposing ``eval(scores, features)`` and ``invert(value, features)`` where
``eval`` is strictly increasing in the score for every feature vector.
"""

from __future__ import annotations

import math
import numbers
from dataclasses import dataclass
from decimal import Decimal
from fractions import Fraction

import numpy as np

from .errors import NonFiniteRadius, NonFiniteScore, QuantileOutOfRange, ShapeMismatch

__all__ = [
    "PredictionInterval",
    "CalibratedPredictor",
    "quantile_rank",
    "sample_quantile",
    "finite_sample_level",
    "calibrate",
    "predict_interval",
    "predict_radii",
]


def _as_fraction(alpha) -> Fraction:
    """Exact rational value of a miscoverage level.

    Floats are read at their shortest round-tripping decimal representation
    (0.35 becomes 7/20, not the binary expansion of the nearest double), so
    the ceiling arithmetic below is deterministic and matches the decimal
    the caller wrote.
    """
    if isinstance(alpha, Fraction):
        frac = alpha
    elif isinstance(alpha, numbers.Integral):
        frac = Fraction(int(alpha))
    else:
        frac = Fraction(Decimal(repr(float(alpha))))
    if not 0 < frac < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    return frac


def quantile_rank(n: int, alpha) -> int:
    """Rank of the calibration order statistic used as threshold.

    Returns ceil((n + 1) * (1 - alpha)) computed in exact rational
    arithmetic. The result lies in [1, n + 1]; a value of n + 1 means the
    sample is too small for the requested level.
    """
    if n < 1:
        raise ValueError(f"need at least one sample, got n={n}")
    frac = _as_fraction(alpha)
    return math.ceil((n + 1) * (1 - frac))


def sample_quantile(scores, alpha) -> float:
    """The (1-alpha) sample quantile: the rank-th smallest score.

    Ties are counted with multiplicity, i.e. the result is
    ``sorted(scores)[rank - 1]`` with rank = ceil((n+1)(1-alpha)). Selection
    is done with ``np.partition`` (expected O(n)) instead of a full sort;
    the output is identical.

    Raises
    ------
    QuantileOutOfRange
        If rank > n (too few scores for the requested level).
    NonFiniteScore
        If any score is NaN or infinite.
    """
    arr = np.asarray(scores, dtype=float).ravel()
    if arr.size == 0:
        raise QuantileOutOfRange("empty score collection")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteScore("scores contain NaN or infinite values")
    rank = quantile_rank(arr.size, alpha)
    if rank > arr.size:
        raise QuantileOutOfRange(
            f"rank {rank} exceeds sample size {arr.size}: "
            f"alpha={alpha} needs at least {rank} calibration scores"
        )
    return float(np.partition(arr, rank - 1)[rank - 1])


def finite_sample_level(n: int, alpha) -> Fraction:
    """Exact coverage probability attained with n calibration scores.

    Returns ceil((n+1)(1-alpha)) / (n+1) as an exact rational.

    Raises
    ------
    QuantileOutOfRange
        If the rank exceeds n, mirroring :func:`sample_quantile`.
    """
    rank = quantile_rank(n, alpha)
    if rank > n:
        raise QuantileOutOfRange(
            f"rank {rank} exceeds sample size {n} at alpha={alpha}"
        )
    return Fraction(rank, n + 1)


@dataclass(frozen=True)
class PredictionInterval:
    """Symmetric interval [center - radius, center + radius] in label units."""

    center: float
    radius: float

    def __post_init__(self):
        if not (self.radius >= 0.0):
            raise ValueError(f"radius must be >= 0, got {self.radius}")

    @property
    def lower(self) -> float:
        return self.center - self.radius

    @property
    def upper(self) -> float:
        return self.center + self.radius

    @property
    def size(self) -> float:
        return 2.0 * self.radius

    def contains(self, y: float) -> bool:
        """Boundary points count as covered."""
        return abs(y - self.center) <= self.radius


@dataclass(frozen=True)
class CalibratedPredictor:
    """A conformity transform plus its calibrated threshold.

    Immutable after construction; safe to share across threads for
    concurrent interval prediction.
    """

    transform: object
    threshold_qb: float
    alpha: float
    n_calib: int

    @property
    def level(self) -> Fraction:
        """Exact finite-sample coverage of the calibrated intervals."""
        return finite_sample_level(self.n_calib, self.alpha)


def calibrate(transform, f_predictions, labels, features, alpha) -> CalibratedPredictor:
    """Compute the transformed-score threshold on a calibration set.

    Scores are absolute residuals ``|labels - f_predictions|``, mapped
    through ``transform.eval`` and reduced to their (1-alpha) sample
    quantile. The output is invariant under any permutation of the
    calibration samples.

    Parameters
    ----------
    transform : object
        Conformity transform with ``eval(scores, features)``.
    f_predictions, labels : array-like, shape (n,)
        Point predictions and true labels of the calibration samples.
    features : array-like, shape (n, d)
        Calibration inputs, consumed by input-dependent transforms.
    alpha : float
        Target miscoverage level in (0, 1).
    """
    preds = np.asarray(f_predictions, dtype=float).ravel()
    ys = np.asarray(labels, dtype=float).ravel()
    X = np.atleast_2d(np.asarray(features, dtype=float))
    if preds.shape != ys.shape or X.shape[0] != preds.size:
        raise ShapeMismatch(
            f"calibrate: predictions {preds.shape}, labels {ys.shape}, "
            f"features {X.shape} do not align"
        )
    residuals = np.abs(ys - preds)
    transformed = np.asarray(transform.eval(residuals, X), dtype=float)
    if not np.all(np.isfinite(transformed)):
        bad = int(np.flatnonzero(~np.isfinite(transformed))[0])
        raise NonFiniteScore(f"transformed score at index {bad} is not finite")
    qb = sample_quantile(transformed, alpha)
    return CalibratedPredictor(
        transform=transform, threshold_qb=qb, alpha=float(alpha), n_calib=preds.size
    )


def predict_interval(cp: CalibratedPredictor, f_x: float, x) -> PredictionInterval:
    """Prediction interval at a single test point.

    The radius is the transform inverse of the calibrated threshold at x,
    so the interval is exactly the set of labels whose transformed score
    stays below the threshold.
    """
    radius = predict_radii(cp, np.atleast_2d(x))[0]
    return PredictionInterval(center=float(f_x), radius=float(radius))


def predict_radii(cp: CalibratedPredictor, features) -> np.ndarray:
    """Vectorized interval radii for a batch of test points.

    Equivalent to mapping :func:`predict_interval` over rows; returns the
    radii only (centers are the point predictions themselves).
    """
    X = np.atleast_2d(np.asarray(features, dtype=float))
    n = X.shape[0]
    qb = np.full(n, cp.threshold_qb, dtype=float)
    radii = np.asarray(cp.transform.invert(qb, X), dtype=float)
    if not np.all(np.isfinite(radii)):
        raise NonFiniteRadius("interval radius overflowed during inversion")
    return radii
