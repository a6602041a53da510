"""Input-dependent conformity transforms: baseline, ER, Gauss, Uniform.

Each family maps a nonnegative score a and a feature vector x to a
transformed score that is strictly increasing in a for every x, with an
input-dependent scale s(x) = gamma + |g(x)|^exponent produced by a trainable
localizer g. The families and their closed-form inverses and score
derivatives:

    baseline   b = a                      codomain (0, inf)
    er         b = a / s                  codomain (0, inf)
    gauss      b = log(a / s)             codomain all reals
    uniform    b = sigmoid(a / s)         codomain (1/2, 1)

All evaluation methods are vectorized over rows and pure; trained
transforms are immutable by convention and safe for concurrent use.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import mlp
from .errors import OutOfCodomain, ShapeMismatch

__all__ = [
    "Family",
    "ConformityTransform",
    "GlobalMonotoneTransform",
    "ConstantLocalizer",
    "CubicLocalizer",
    "MlpLocalizer",
    "save_transform",
    "load_transform",
    "SCORE_FLOOR",
]

# Gauss evaluates log(a/s); exact-fit residuals (a = 0) are floored here so
# calibration and training stay finite. Tests avoid relying on clamped values.
SCORE_FLOOR = 1e-12


class Family(str, Enum):
    BASELINE = "baseline"
    ER = "er"
    GAUSS = "gauss"
    UNIFORM = "uniform"


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class ConstantLocalizer:
    """g(x) = value for every x; useful for controls and smoke tests."""

    kind = "constant"

    def __init__(self, value: float = 0.0):
        self.value = float(value)

    def values(self, X: np.ndarray) -> np.ndarray:
        return np.full(X.shape[0], self.value)

    def param_arrays(self) -> list[np.ndarray]:
        return []

    def grad_arrays(self, X: np.ndarray, upstream: np.ndarray) -> list[np.ndarray]:
        return []

    def copy(self) -> "ConstantLocalizer":
        return ConstantLocalizer(self.value)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "value": self.value}


class CubicLocalizer:
    """g(x) = t1*x + t2*x^2 + t3*x^3 on the first feature column.

    Three parameters, no bias; intended for one-dimensional inputs.
    """

    kind = "cubic"

    def __init__(self, theta):
        self.theta = np.asarray(theta, dtype=float).reshape(3)

    def values(self, X: np.ndarray) -> np.ndarray:
        x = X[:, 0]
        return self.theta[0] * x + self.theta[1] * x**2 + self.theta[2] * x**3

    def param_arrays(self) -> list[np.ndarray]:
        return [self.theta]

    def grad_arrays(self, X: np.ndarray, upstream: np.ndarray) -> list[np.ndarray]:
        x = X[:, 0]
        u = np.asarray(upstream, dtype=float)
        basis = np.stack([x, x**2, x**3], axis=1)
        return [basis.T @ u]

    def copy(self) -> "CubicLocalizer":
        return CubicLocalizer(self.theta.copy())

    def to_dict(self) -> dict:
        return {"kind": self.kind, "theta": self.theta.tolist()}


class MlpLocalizer:
    """ReLU network localizer; see :mod:`flowcp.mlp` for the arithmetic."""

    kind = "mlp"

    def __init__(self, params: mlp.MlpParams):
        self.params = params

    def values(self, X: np.ndarray) -> np.ndarray:
        return mlp.forward_batch(self.params, X)

    def param_arrays(self) -> list[np.ndarray]:
        return self.params.arrays()

    def grad_arrays(self, X: np.ndarray, upstream: np.ndarray) -> list[np.ndarray]:
        return mlp.backward_batch(self.params, X, upstream)

    def copy(self) -> "MlpLocalizer":
        return MlpLocalizer(self.params.copy())

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "layer_dims": self.params.layer_dims,
            "weights": [w.tolist() for w in self.params.weights],
            "biases": [b.tolist() for b in self.params.biases],
        }


def _localizer_from_dict(d: dict):
    kind = d["kind"]
    if kind == "constant":
        return ConstantLocalizer(d["value"])
    if kind == "cubic":
        return CubicLocalizer(d["theta"])
    if kind == "mlp":
        params = mlp.MlpParams(
            weights=[np.asarray(w, dtype=float) for w in d["weights"]],
            biases=[np.asarray(b, dtype=float) for b in d["biases"]],
        )
        return MlpLocalizer(params)
    raise ValueError(f"unknown localizer kind {kind!r}")


@dataclass
class ConformityTransform:
    """A tagged transform family with its scale parameters.

    gamma > 0 keeps the denominator gamma + |g(x)|^exponent away from zero;
    exponent selects |g| (default) or |g|^2 in the scale.
    """

    family: Family
    gamma: float = 0.001
    localizer: object | None = None
    exponent: int = 1

    def __post_init__(self):
        self.family = Family(self.family)
        if self.family is not Family.BASELINE:
            if self.gamma <= 0:
                raise ValueError(f"gamma must be > 0, got {self.gamma}")
            if self.exponent not in (1, 2):
                raise ValueError(f"exponent must be 1 or 2, got {self.exponent}")
            if self.localizer is None:
                self.localizer = ConstantLocalizer(0.0)

    @classmethod
    def baseline(cls) -> "ConformityTransform":
        return cls(family=Family.BASELINE)

    # -- internals ---------------------------------------------------------

    def _prep(self, values, X):
        a = np.asarray(values, dtype=float).ravel()
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[0] == 1 and a.size > 1:
            X = np.broadcast_to(X, (a.size, X.shape[1]))
        if X.shape[0] != a.size:
            raise ShapeMismatch(
                f"{a.size} scores vs {X.shape[0]} feature rows"
            )
        return a, X

    def scale(self, X) -> np.ndarray:
        """s(x) = gamma + |g(x)|^exponent, one value per row of X."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.family is Family.BASELINE:
            return np.ones(X.shape[0])
        g = np.asarray(self.localizer.values(X), dtype=float)
        return self.gamma + np.abs(g) ** self.exponent

    # -- the transform, its inverse, and its score derivative ---------------

    def eval(self, a, X):
        """Transformed scores; strictly increasing in a for every x."""
        a_arr, X = self._prep(a, X)
        if np.any(a_arr < 0):
            raise ValueError("scores must be >= 0 (absolute residuals)")
        if self.family is Family.BASELINE:
            out = a_arr.copy()
        else:
            s = self.scale(X)
            if self.family is Family.ER:
                out = a_arr / s
            elif self.family is Family.GAUSS:
                out = np.log(np.maximum(a_arr, SCORE_FLOOR) / s)
            else:
                out = _sigmoid(a_arr / s)
        return out if np.ndim(a) else float(out[0])

    def invert(self, value, X):
        """Score a with eval(a, x) = value, per row.

        Raises
        ------
        OutOfCodomain
            If a value lies outside the family codomain (negative for
            baseline/ER, outside (1/2, 1) for uniform).
        """
        v_arr, X = self._prep(value, X)
        if self.family is Family.BASELINE:
            if np.any(v_arr < 0):
                raise OutOfCodomain("baseline codomain is nonnegative")
            out = v_arr.copy()
        else:
            s = self.scale(X)
            if self.family is Family.ER:
                if np.any(v_arr < 0):
                    raise OutOfCodomain("er codomain is nonnegative")
                out = s * v_arr
            elif self.family is Family.GAUSS:
                out = s * np.exp(v_arr)
            else:
                if np.any(v_arr <= 0.5) or np.any(v_arr >= 1.0):
                    raise OutOfCodomain(
                        "uniform codomain is the open interval (1/2, 1)"
                    )
                out = s * np.log(v_arr / (1.0 - v_arr))
        return out if np.ndim(value) else float(out[0])

    def jacobian(self, a, X):
        """d eval / d a, strictly positive wherever defined.

        For the log family the score is floored at SCORE_FLOOR, matching
        :meth:`eval`, so the derivative stays finite at a = 0.
        """
        a_arr, X = self._prep(a, X)
        if np.any(a_arr < 0):
            raise ValueError("scores must be >= 0")
        if self.family is Family.BASELINE:
            out = np.ones_like(a_arr)
        else:
            s = self.scale(X)
            if self.family is Family.ER:
                out = 1.0 / s
            elif self.family is Family.GAUSS:
                out = 1.0 / np.maximum(a_arr, SCORE_FLOOR)
            else:
                sig = _sigmoid(a_arr / s)
                out = sig * (1.0 - sig) / s
        return out if np.ndim(a) else float(out[0])

    def to_dict(self) -> dict:
        d = {
            "format_version": 1,
            "family": self.family.value,
            "gamma": self.gamma,
            "exponent": self.exponent,
        }
        if self.family is not Family.BASELINE:
            d["localizer"] = self.localizer.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ConformityTransform":
        if d.get("format_version") != 1:
            raise ValueError(f"unsupported format_version {d.get('format_version')!r}")
        family = Family(d["family"])
        localizer = None
        if "localizer" in d:
            localizer = _localizer_from_dict(d["localizer"])
        return cls(
            family=family,
            gamma=d.get("gamma", 0.001),
            localizer=localizer,
            exponent=d.get("exponent", 1),
        )


class GlobalMonotoneTransform:
    """An input-independent strictly increasing score transform.

    Wraps a forward/inverse pair such as (log, exp) or (a -> -1/a,
    b -> -1/b). Intervals calibrated through any such transform coincide
    with the plain-residual intervals.
    """

    def __init__(self, fwd, inv, name: str = "monotone"):
        self._fwd = fwd
        self._inv = inv
        self.name = name

    def eval(self, a, X):
        a_arr = np.asarray(a, dtype=float)
        out = self._fwd(a_arr)
        return out if np.ndim(a) else float(out)

    def invert(self, value, X):
        v_arr = np.asarray(value, dtype=float)
        out = self._inv(v_arr)
        return out if np.ndim(value) else float(out)

    @classmethod
    def log(cls) -> "GlobalMonotoneTransform":
        return cls(np.log, np.exp, name="log")

    @classmethod
    def negative_reciprocal(cls) -> "GlobalMonotoneTransform":
        return cls(lambda a: -1.0 / a, lambda b: -1.0 / b, name="neg-reciprocal")


def save_transform(t: ConformityTransform, path):
    """Write a transform to the documented JSON parameter format."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(t.to_dict(), fh, indent=1)


def load_transform(path) -> ConformityTransform:
    with open(path, "r", encoding="utf-8") as fh:
        return ConformityTransform.from_dict(json.load(fh))
