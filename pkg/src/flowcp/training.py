"""Training losses and the loop that fits a conformity transform.

The ER family fits the localizer to the residual magnitudes directly; the
Gauss and Uniform families maximize the likelihood of the transformed
scores under their target density (standard normal resp. uniform on [0,1]),
including the change-of-variables term. Additive terms that do not depend
on the localizer parameters are dropped from the reported objective.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import mlp
from .data import Dataset
from .errors import NonFiniteLoss, ShapeMismatch
from .transforms import (
    ConformityTransform,
    CubicLocalizer,
    Family,
    MlpLocalizer,
    SCORE_FLOOR,
    _sigmoid,
)

__all__ = [
    "TrainConfig",
    "TrainResult",
    "DEFAULT_LEARNING_RATES",
    "er_loss",
    "nf_negloglik",
    "transform_loss",
    "transform_loss_grads",
    "train_transform",
    "fit_transform",
]

# Per-family Adam step sizes used when TrainConfig.learning_rate is None.
DEFAULT_LEARNING_RATES = {
    Family.ER: 1e-2,
    Family.GAUSS: 1e-4,
    Family.UNIFORM: 1e-5,
}


@dataclass
class TrainConfig:
    """Hyperparameters for fitting one transform."""

    family: Family
    gamma: float = 0.001
    learning_rate: float | None = None  # None: family default
    iterations: int = 2000
    batch_size: int | None = None  # None: full batch
    seed: int = 0
    exponent: int = 1
    localizer: str = "mlp"  # "mlp" or "cubic"
    hidden_dims: tuple[int, ...] = (100, 100, 100, 100, 100)
    holdout_fraction: float = 0.2
    patience: int = 200

    def __post_init__(self):
        self.family = Family(self.family)
        if self.gamma <= 0:
            raise ValueError(f"gamma must be > 0, got {self.gamma}")
        if self.iterations <= 0:
            raise ValueError(f"iterations must be > 0, got {self.iterations}")
        if self.learning_rate is not None and self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.localizer not in ("mlp", "cubic"):
            raise ValueError(f"localizer must be 'mlp' or 'cubic', got {self.localizer}")

    @property
    def effective_learning_rate(self) -> float:
        if self.learning_rate is not None:
            return self.learning_rate
        return DEFAULT_LEARNING_RATES[self.family]


@dataclass
class TrainResult:
    """Fitted transform plus the loss trajectory that produced it."""

    transform: ConformityTransform
    train_losses: list[float] = field(default_factory=list)
    val_losses: list[float] = field(default_factory=list)
    best_iteration: int = 0


def er_loss(g_out, residuals) -> float:
    """Mean squared error of |g(x)| against the residual magnitudes."""
    g = np.asarray(g_out, dtype=float).ravel()
    r = np.asarray(residuals, dtype=float).ravel()
    if g.size != r.size or g.size == 0:
        raise ShapeMismatch(f"lengths differ or empty: {g.size} vs {r.size}")
    return float(np.mean((np.abs(g) - r) ** 2))


def nf_negloglik(transform: ConformityTransform, residuals, features) -> float:
    """Negative log-likelihood of the transformed scores, up to constants.

    Gauss target: mean(b^2 / 2) with b the transformed score (the score
    derivative 1/a does not depend on the localizer and is dropped).
    Uniform target: the density is constant, so the objective is minus the
    mean log score-derivative of the sigmoid map.
    """
    a = np.asarray(residuals, dtype=float).ravel()
    X = np.atleast_2d(np.asarray(features, dtype=float))
    if transform.family is Family.GAUSS:
        b = transform.eval(a, X)
        loss = 0.5 * float(np.mean(b**2))
    elif transform.family is Family.UNIFORM:
        s = transform.scale(X)
        z = a / s
        # -log sig(z) - log(1 - sig(z)) + log s, written with softplus
        loss = float(np.mean(np.logaddexp(0.0, z) + np.logaddexp(0.0, -z) + np.log(s)))
    else:
        raise ValueError(f"nf_negloglik applies to gauss/uniform, got {transform.family}")
    if not np.isfinite(loss):
        raise NonFiniteLoss(f"{transform.family.value} loss is not finite")
    return loss


def _scale_grad_factor(g: np.ndarray, exponent: int) -> np.ndarray:
    """d s / d g for s = gamma + |g|^exponent; |g|'s subgradient at 0 is 0."""
    if exponent == 1:
        return np.sign(g)
    return 2.0 * g


def transform_loss(transform: ConformityTransform, residuals, features) -> float:
    """The training objective of the transform's family."""
    a = np.asarray(residuals, dtype=float).ravel()
    X = np.atleast_2d(np.asarray(features, dtype=float))
    if transform.family is Family.ER:
        g = transform.localizer.values(X)
        return er_loss(g, a)
    return nf_negloglik(transform, a, X)


def transform_loss_grads(transform: ConformityTransform, residuals, features):
    """Objective value and its exact gradients w.r.t. localizer parameters.

    The per-sample derivative with respect to the localizer output is
    computed in closed form and pushed through the localizer's backward
    pass.
    """
    a = np.asarray(residuals, dtype=float).ravel()
    X = np.atleast_2d(np.asarray(features, dtype=float))
    n = a.size
    loc = transform.localizer
    g = np.asarray(loc.values(X), dtype=float)
    if transform.family is Family.ER:
        loss = er_loss(g, a)
        upstream = 2.0 * (np.abs(g) - a) * np.sign(g) / n
    elif transform.family is Family.GAUSS:
        s = transform.gamma + np.abs(g) ** transform.exponent
        b = np.log(np.maximum(a, SCORE_FLOOR) / s)
        loss = 0.5 * float(np.mean(b**2))
        dloss_ds = -b / s / n
        upstream = dloss_ds * _scale_grad_factor(g, transform.exponent)
    elif transform.family is Family.UNIFORM:
        s = transform.gamma + np.abs(g) ** transform.exponent
        z = a / s
        loss = float(np.mean(np.logaddexp(0.0, z) + np.logaddexp(0.0, -z) + np.log(s)))
        dloss_ds = (1.0 - z * (2.0 * _sigmoid(z) - 1.0)) / s / n
        upstream = dloss_ds * _scale_grad_factor(g, transform.exponent)
    else:
        raise ValueError("baseline has no trainable objective")
    if not np.isfinite(loss):
        raise NonFiniteLoss(f"{transform.family.value} loss is not finite")
    return loss, loc.grad_arrays(X, upstream)


def _build_localizer(cfg: TrainConfig, n_features: int):
    if cfg.localizer == "cubic":
        rng = np.random.Generator(np.random.PCG64(cfg.seed))
        # exact zeros are a stationary point of |g|; start slightly off
        return CubicLocalizer(rng.normal(0.0, 0.1, size=3))
    dims = [n_features, *cfg.hidden_dims, 1]
    return MlpLocalizer(mlp.init_mlp(dims, seed=cfg.seed))


def fit_transform(cfg: TrainConfig, train_set: Dataset, f_predictions) -> TrainResult:
    """Fit a transform on training residuals, tracking the loss history.

    A seeded fifth of the training set is held out; the parameters with the
    best held-out loss are returned, and training stops early once that
    loss has not improved for ``cfg.patience`` iterations.
    """
    if cfg.family is Family.BASELINE:
        return TrainResult(transform=ConformityTransform.baseline())

    preds = np.asarray(f_predictions, dtype=float).ravel()
    if preds.size != train_set.n:
        raise ShapeMismatch(
            f"{preds.size} predictions for {train_set.n} training samples"
        )
    residuals = np.abs(train_set.labels - preds)
    X = train_set.features

    loc = _build_localizer(cfg, X.shape[1])
    transform = ConformityTransform(
        family=cfg.family, gamma=cfg.gamma, localizer=loc, exponent=cfg.exponent
    )

    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([cfg.seed, 1])))
    n = train_set.n
    n_val = int(round(cfg.holdout_fraction * n))
    perm = rng.permutation(n)
    val_idx, fit_idx = perm[:n_val], perm[n_val:]
    if fit_idx.size == 0:
        raise ValueError("holdout_fraction leaves no training samples")
    a_fit, x_fit = residuals[fit_idx], X[fit_idx]
    a_val, x_val = residuals[val_idx], X[val_idx]

    params = loc.param_arrays()
    state = mlp.init_adam(params, learning_rate=cfg.effective_learning_rate)

    best_loss = np.inf
    best_params = loc.copy()
    best_iter = 0
    since_best = 0
    train_losses: list[float] = []
    val_losses: list[float] = []

    batch = cfg.batch_size
    if batch is not None and (batch <= 0 or batch >= fit_idx.size):
        batch = None
    offset = 0

    for it in range(cfg.iterations):
        if batch is None:
            a_b, x_b = a_fit, x_fit
        else:
            if offset + batch > a_fit.size:
                order = rng.permutation(a_fit.size)
                a_fit, x_fit = a_fit[order], x_fit[order]
                offset = 0
            a_b, x_b = a_fit[offset:offset + batch], x_fit[offset:offset + batch]
            offset += batch
        try:
            loss, grads = transform_loss_grads(transform, a_b, x_b)
        except NonFiniteLoss as exc:
            raise NonFiniteLoss(str(exc), iteration=it) from None
        mlp.adam_step(params, grads, state)
        train_losses.append(loss)

        if a_val.size:
            monitor = transform_loss(transform, a_val, x_val)
        else:
            monitor = transform_loss(transform, a_fit, x_fit)
        val_losses.append(monitor)
        if monitor < best_loss:
            best_loss = monitor
            best_params = loc.copy()
            best_iter = it
            since_best = 0
        else:
            since_best += 1
            if since_best > cfg.patience:
                break

    fitted = ConformityTransform(
        family=cfg.family, gamma=cfg.gamma, localizer=best_params,
        exponent=cfg.exponent,
    )
    return TrainResult(
        transform=fitted,
        train_losses=train_losses,
        val_losses=val_losses,
        best_iteration=best_iter,
    )


def train_transform(cfg: TrainConfig, train_set: Dataset, f_predictions) -> ConformityTransform:
    """Fit and return the transform with the best held-out loss."""
    return fit_transform(cfg, train_set, f_predictions).transform
