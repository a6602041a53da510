"""Synthetic generators, CSV ingestion, PCA, label scaling, and splitting.

All randomness flows through numpy's PCG64 generator seeded explicitly, so
every dataset and partition is reproducible within this implementation.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateLabels,
    EmptyDataset,
    EmptyPart,
    ParseError,
    RankDeficientWarning,
)

__all__ = [
    "Dataset",
    "DatasetMeta",
    "SynthSpec",
    "SYNTH_KINDS",
    "gen_synth",
    "load_csv",
    "save_csv",
    "save_meta",
    "load_meta",
    "PcaProjection",
    "pca_reduce",
    "LabelScale",
    "normalize_labels",
    "split",
]

SYNTH_KINDS = ("toy", "cos", "squared", "inverse", "linear")


@dataclass
class DatasetMeta:
    """Provenance of a synthetic dataset; w is the true regression vector."""

    kind: str = "unknown"
    seed: int | None = None
    w: np.ndarray | None = None
    xi: float | None = None


@dataclass
class Dataset:
    """Feature matrix with real labels; the universal sample container."""

    features: np.ndarray
    labels: np.ndarray
    meta: DatasetMeta | None = None

    def __post_init__(self):
        self.features = np.atleast_2d(np.asarray(self.features, dtype=float))
        self.labels = np.asarray(self.labels, dtype=float).ravel()
        if self.features.shape[0] != self.labels.size:
            raise ValueError(
                f"{self.features.shape[0]} feature rows vs {self.labels.size} labels"
            )
        if not (np.all(np.isfinite(self.features)) and np.all(np.isfinite(self.labels))):
            raise ValueError("dataset contains non-finite values")

    @property
    def n(self) -> int:
        return self.labels.size

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=int)
        return Dataset(self.features[idx], self.labels[idx], meta=self.meta)


@dataclass
class SynthSpec:
    """Recipe for one synthetic dataset.

    For the polynomial kinds the true coefficient vector w is drawn once
    from a seeded standard normal unless supplied; the toy kind ignores w
    and uses xi as the high-noise standard-deviation factor.
    """

    kind: str
    n: int
    seed: int = 0
    w: np.ndarray | None = None
    xi: float = 5.0

    def __post_init__(self):
        if self.kind not in SYNTH_KINDS:
            raise ValueError(f"kind must be one of {SYNTH_KINDS}, got {self.kind!r}")
        if self.n <= 0:
            raise ValueError(f"n must be positive, got {self.n}")
        if self.w is not None:
            self.w = np.asarray(self.w, dtype=float).reshape(3)


def _noise_scale(kind: str, x1: np.ndarray) -> np.ndarray:
    if kind == "cos":
        return 2.0 * np.cos(0.5 * np.pi * x1) * (x1 < 0.5)
    if kind == "squared":
        return 2.0 * x1**2 * (x1 > 0.5)
    if kind == "inverse":
        return 2.0 / (0.1 + np.abs(x1)) * (x1 < 0.5)
    if kind == "linear":
        return 2.0 * np.abs(x1) * (x1 > 0.5)
    raise ValueError(f"no noise profile for kind {kind!r}")


def gen_synth(spec: SynthSpec) -> Dataset:
    """Draw a synthetic dataset.

    Polynomial kinds: X1 ~ Uniform([-1, 1]), feature row [1, X1, X1^2],
    Y = X.w + 0.1 + sigma_kind(X1) * E with E standard normal. Toy kind:
    X ~ Uniform([0, 1]) (single feature), Y | X centered normal with
    standard deviation 1 below X = 0.5 and xi above it.
    """
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    if spec.kind == "toy":
        x = rng.uniform(0.0, 1.0, size=spec.n)
        sd = np.where(x > 0.5, spec.xi, 1.0)
        y = sd * rng.standard_normal(spec.n)
        meta = DatasetMeta(kind="toy", seed=spec.seed, xi=spec.xi)
        return Dataset(x[:, None], y, meta=meta)

    w = spec.w if spec.w is not None else rng.standard_normal(3)
    x1 = rng.uniform(-1.0, 1.0, size=spec.n)
    X = np.stack([np.ones(spec.n), x1, x1**2], axis=1)
    noise = _noise_scale(spec.kind, x1) * rng.standard_normal(spec.n)
    y = X @ w + 0.1 + noise
    meta = DatasetMeta(kind=spec.kind, seed=spec.seed, w=np.asarray(w, dtype=float))
    return Dataset(X, y, meta=meta)


# -- CSV format: UTF-8, comma-separated, header row, label in last column ---

def load_csv(path) -> Dataset:
    """Read a dataset; every cell must parse to a finite float.

    Raises
    ------
    ParseError
        Naming the offending row and column on any malformed cell.
    EmptyDataset
        When the file holds a header but no data rows.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyDataset(f"{path}: no header row") from None
        if len(header) < 2:
            raise ParseError(f"{path}: need at least one feature column and a label")
        rows = []
        for r, row in enumerate(reader, start=2):  # 1-based file lines, header is 1
            if len(row) != len(header):
                raise ParseError(
                    f"{path}: row {r} has {len(row)} cells, expected {len(header)}"
                )
            vals = []
            for c, cell in enumerate(row):
                try:
                    v = float(cell)
                except ValueError:
                    v = float("nan")
                if not np.isfinite(v):
                    raise ParseError(
                        f"{path}: row {r}, column '{header[c]}': "
                        f"cannot parse {cell!r} as a finite number"
                    )
                vals.append(v)
            rows.append(vals)
    if not rows:
        raise EmptyDataset(f"{path}: no data rows")
    arr = np.asarray(rows, dtype=float)
    return Dataset(arr[:, :-1], arr[:, -1])


def save_csv(ds: Dataset, path):
    """Write a dataset with shortest round-tripping decimal formatting."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{j}" for j in range(ds.dim)] + ["y"])
        for row, y in zip(ds.features, ds.labels):
            writer.writerow([repr(float(v)) for v in row] + [repr(float(y))])


def save_meta(meta: DatasetMeta, path):
    """Key-value sidecar describing a generated dataset."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"kind = {meta.kind}\n")
        if meta.seed is not None:
            fh.write(f"seed = {meta.seed}\n")
        if meta.xi is not None:
            fh.write(f"xi = {repr(float(meta.xi))}\n")
        if meta.w is not None:
            fh.write(f"w = {','.join(repr(float(v)) for v in meta.w)}\n")


def load_meta(path) -> DatasetMeta:
    meta = DatasetMeta()
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#") or "=" not in line:
                continue
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key == "kind":
                meta.kind = value
            elif key == "seed":
                meta.seed = int(value)
            elif key == "xi":
                meta.xi = float(value)
            elif key == "w":
                meta.w = np.asarray([float(v) for v in value.split(",")])
    return meta


@dataclass
class PcaProjection:
    """Centering vector and orthonormal component rows (k x d)."""

    mean: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray

    def apply(self, features: np.ndarray) -> np.ndarray:
        return (np.atleast_2d(features) - self.mean) @ self.components.T

    def reconstruct(self, projected: np.ndarray) -> np.ndarray:
        return projected @ self.components + self.mean


def pca_reduce(ds: Dataset, k: int) -> tuple[Dataset, PcaProjection]:
    """Project features onto the top-k covariance eigenvectors.

    Components are ordered by decreasing eigenvalue with a deterministic
    sign convention (largest-magnitude entry positive). If fewer than k
    eigenvalues are positive a RankDeficientWarning is emitted and the
    remaining components are zero rows.
    """
    if not 1 <= k <= ds.dim:
        raise ValueError(f"k must be in [1, {ds.dim}], got {k}")
    mean = ds.features.mean(axis=0)
    centered = ds.features - mean
    cov = centered.T @ centered / max(ds.n - 1, 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals, eigvecs = eigvals[order], eigvecs[:, order]
    tol = max(eigvals[0], 0.0) * 1e-12
    positive = int(np.sum(eigvals > tol))
    components = eigvecs[:, :k].T.copy()
    if positive < k:
        warnings.warn(
            f"only {positive} positive eigenvalues for k={k}; padding with zeros",
            RankDeficientWarning,
        )
        components[positive:] = 0.0
    for row in components:
        j = int(np.argmax(np.abs(row)))
        if row[j] < 0:
            row *= -1.0
    proj = PcaProjection(
        mean=mean,
        components=components,
        explained_variance=np.maximum(eigvals[:k], 0.0),
    )
    return Dataset(proj.apply(ds.features), ds.labels, meta=ds.meta), proj


@dataclass
class LabelScale:
    """Affine label map y' = (y - offset) / scale and its inverse."""

    method: str
    offset: float
    scale: float

    def apply(self, labels) -> np.ndarray:
        return (np.asarray(labels, dtype=float) - self.offset) / self.scale

    def invert(self, labels) -> np.ndarray:
        return np.asarray(labels, dtype=float) * self.scale + self.offset

    def inverse_size(self, size: float) -> float:
        """Interval sizes transform by the scale factor alone."""
        return size * self.scale


def normalize_labels(ds: Dataset, method: str = "minmax") -> tuple[Dataset, LabelScale]:
    """Rescale labels to [0, 1] (minmax, default) or to z-scores."""
    if ds.n < 2:
        raise ValueError("need at least two labels to normalize")
    if method == "minmax":
        lo, hi = float(ds.labels.min()), float(ds.labels.max())
        if hi == lo:
            raise DegenerateLabels(f"all labels equal {lo}; cannot normalize")
        rec = LabelScale("minmax", offset=lo, scale=hi - lo)
    elif method == "zscore":
        sd = float(ds.labels.std())
        if sd == 0.0:
            raise DegenerateLabels("zero label standard deviation")
        rec = LabelScale("zscore", offset=float(ds.labels.mean()), scale=sd)
    else:
        raise ValueError(f"unknown normalization method {method!r}")
    return Dataset(ds.features, rec.apply(ds.labels), meta=ds.meta), rec


def split(ds: Dataset, fractions, seed: int) -> list[Dataset]:
    """Seeded random partition into parts of the given fractions.

    Part sizes are assigned by largest remainder, so they always sum to n
    and reproduce exactly for a fixed seed.
    """
    fr = np.asarray(fractions, dtype=float)
    if fr.ndim != 1 or fr.size == 0 or np.any(fr < 0):
        raise ValueError(f"fractions must be nonnegative, got {fractions}")
    if abs(fr.sum() - 1.0) > 1e-9:
        raise ValueError(f"fractions must sum to 1, got sum {fr.sum()}")
    raw = fr * ds.n
    sizes = np.floor(raw).astype(int)
    remainder = ds.n - sizes.sum()
    if remainder:
        order = np.argsort(-(raw - sizes), kind="stable")
        for j in order[:remainder]:
            sizes[j] += 1
    if np.any(sizes == 0):
        j = int(np.flatnonzero(sizes == 0)[0])
        raise EmptyPart(f"part {j} (fraction {fr[j]}) would receive zero rows")
    perm = np.random.Generator(np.random.PCG64(seed)).permutation(ds.n)
    parts, start = [], 0
    for size in sizes:
        parts.append(ds.subset(perm[start:start + size]))
        start += size
    return parts
