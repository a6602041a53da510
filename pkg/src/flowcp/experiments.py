"""End-to-end experiment pipeline behind the command-line interface.

One experiment: draw or load a dataset, optionally project features and
rescale labels, then for each random split train the point predictor,
fit the requested conformity transforms on held-out residuals, calibrate,
and score coverage/size/WSC on the test part. Results are aggregated over
splits and written as CSV.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field, fields

import numpy as np

from . import data as data_mod
from .conformal import calibrate, finite_sample_level, predict_radii
from .data import Dataset, SynthSpec, gen_synth, load_csv, normalize_labels, pca_reduce, split
from .errors import ConfigError
from .evaluation import EvalReport, SplitMetrics, average_size, covered_mask, empirical_coverage, wsc
from .forest import fit_forest, mae, oracle_for
from .training import TrainConfig, train_transform
from .transforms import ConformityTransform, Family

__all__ = ["ExperimentConfig", "ExperimentResult", "run_experiment",
           "figure_data", "generate_dataset"]

_SYNTH_ALIASES = {
    "toy": "toy",
    "cos": "cos", "synth-cos": "cos",
    "squared": "squared", "synth-squared": "squared",
    "inverse": "inverse", "synth-inverse": "inverse",
    "linear": "linear", "synth-linear": "linear",
}


@dataclass
class ExperimentConfig:
    """Flat experiment settings; see the config-file grammar in the README."""

    dataset: str = "synth-cos"
    n_samples: int = 1000
    xi: float = 5.0
    regressor: str = "forest"            # forest | oracle
    families: tuple[str, ...] = ("baseline", "er", "gauss", "uniform")
    alphas: tuple[float, ...] = (0.05, 0.1, 0.35)
    n_splits: int = 5
    seed: int = 0
    regressor_fraction: float = 0.5
    fractions: tuple[float, ...] = (0.5, 0.25, 0.25)
    out_dir: str = "results"
    gamma: float = 0.001
    exponent: int = 1
    localizer: str = "mlp"
    hidden_dims: tuple[int, ...] = (100, 100, 100, 100, 100)
    iterations: int = 2000
    learning_rate: float | None = None
    batch_size: int | None = None
    patience: int = 200
    holdout_fraction: float = 0.2
    wsc_delta: float = 0.1
    wsc_directions: int = 1000
    pca_k: int = 10
    normalize: str = "minmax"            # minmax | zscore | none

    def validate(self):
        if self.dataset not in _SYNTH_ALIASES and not self.dataset.endswith(".csv"):
            raise ConfigError(
                f"dataset: expected a synthetic kind {sorted(set(_SYNTH_ALIASES))} "
                f"or a .csv path, got {self.dataset!r}"
            )
        if self.regressor not in ("forest", "oracle"):
            raise ConfigError(f"regressor: expected forest|oracle, got {self.regressor!r}")
        for fam in self.families:
            try:
                Family(fam)
            except ValueError:
                raise ConfigError(f"families: unknown family {fam!r}") from None
        for a in self.alphas:
            if not 0.0 < a < 1.0:
                raise ConfigError(f"alphas: {a} not in (0, 1)")
        if self.n_splits < 1:
            raise ConfigError(f"n_splits: must be >= 1, got {self.n_splits}")
        if len(self.fractions) != 3:
            raise ConfigError(
                f"fractions: expected train,calibration,test, got {self.fractions}"
            )
        if abs(sum(self.fractions) - 1.0) > 1e-9:
            raise ConfigError(f"fractions: must sum to 1, got {self.fractions}")
        if not 0.0 <= self.regressor_fraction < 1.0:
            raise ConfigError(
                f"regressor_fraction: must lie in [0, 1), got {self.regressor_fraction}"
            )
        if self.normalize not in ("minmax", "zscore", "none"):
            raise ConfigError(f"normalize: expected minmax|zscore|none, got {self.normalize!r}")
        if self.localizer not in ("mlp", "cubic"):
            raise ConfigError(f"localizer: expected mlp|cubic, got {self.localizer!r}")
        if self.exponent not in (1, 2):
            raise ConfigError(f"exponent: expected 1 or 2, got {self.exponent}")
        if self.dataset.endswith(".csv") and self.regressor == "oracle":
            raise ConfigError("regressor: oracle needs a synthetic dataset")


def generate_dataset(cfg: ExperimentConfig) -> Dataset:
    """Materialize the configured dataset (synthetic draw or CSV load)."""
    if cfg.dataset in _SYNTH_ALIASES:
        spec = SynthSpec(kind=_SYNTH_ALIASES[cfg.dataset], n=cfg.n_samples,
                         seed=cfg.seed, xi=cfg.xi)
        return gen_synth(spec)
    return load_csv(cfg.dataset)


@dataclass
class ExperimentResult:
    """Per-split rows plus per-(family, alpha) aggregates."""

    rows: list[dict] = field(default_factory=list)
    reports: dict[tuple[str, float], EvalReport] = field(default_factory=dict)
    regressor_mae: list[float] = field(default_factory=list)

    def write_csv(self, out_dir: str):
        os.makedirs(out_dir, exist_ok=True)
        columns = ["dataset", "family", "alpha", "split", "n_calib", "n_test",
                   "finite_sample_level", "coverage", "avg_size", "wsc",
                   "regressor_mae"]
        with open(os.path.join(out_dir, "results.csv"), "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=columns)
            writer.writeheader()
            writer.writerows(self.rows)
        with open(os.path.join(out_dir, "summary.csv"), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["family", "alpha", "coverage_mean", "coverage_std",
                             "size_mean", "size_std", "wsc_mean", "wsc_std"])
            for (family, alpha), report in sorted(self.reports.items()):
                writer.writerow([
                    family, alpha,
                    report.coverage, report.std("coverage"),
                    report.avg_size, report.std("avg_size"),
                    report.wsc, report.std("wsc"),
                ])


def _train_config(cfg: ExperimentConfig, family: Family, seed: int) -> TrainConfig:
    return TrainConfig(
        family=family,
        gamma=cfg.gamma,
        learning_rate=cfg.learning_rate,
        iterations=cfg.iterations,
        batch_size=cfg.batch_size,
        seed=seed,
        exponent=cfg.exponent,
        localizer=cfg.localizer,
        hidden_dims=cfg.hidden_dims,
        holdout_fraction=cfg.holdout_fraction,
        patience=cfg.patience,
    )


def run_experiment(cfg: ExperimentConfig, write: bool = True) -> ExperimentResult:
    """Run the full pipeline and (optionally) write result CSVs."""
    cfg.validate()
    full = generate_dataset(cfg)

    label_scale = None
    if cfg.normalize != "none":
        full, label_scale = normalize_labels(full, method=cfg.normalize)
    if full.dim > cfg.pca_k:
        if cfg.regressor == "oracle":
            raise ConfigError("regressor: oracle cannot be combined with PCA reduction")
        full, _ = pca_reduce(full, cfg.pca_k)

    result = ExperimentResult()
    per_split: dict[tuple[str, float], list[SplitMetrics]] = {}

    for split_idx in range(cfg.n_splits):
        split_seed = cfg.seed + split_idx
        if cfg.regressor == "forest":
            rf = cfg.regressor_fraction
            if rf <= 0.0:
                raise ConfigError("regressor_fraction: forest needs a training part")
            parts = split(
                full,
                [rf] + [(1.0 - rf) * f for f in cfg.fractions],
                seed=split_seed,
            )
            reg_set, tf_set, cal_set, test_set = parts
            model = fit_forest(reg_set, seed=split_seed)
        else:
            tf_set, cal_set, test_set = split(full, list(cfg.fractions), seed=split_seed)
            oracle = oracle_for(full.meta)

            class _ScaledOracle:
                def predict(self, X, _oracle=oracle, _scale=label_scale):
                    raw = _oracle.predict(X)
                    return _scale.apply(raw) if _scale is not None else raw

            model = _ScaledOracle()

        test_preds = model.predict(test_set.features)
        split_mae = mae(test_preds, test_set.labels)
        result.regressor_mae.append(split_mae)

        for family_name in cfg.families:
            family = Family(family_name)
            if family is Family.BASELINE:
                transform = ConformityTransform.baseline()
            else:
                tcfg = _train_config(cfg, family, seed=split_seed)
                transform = train_transform(
                    tcfg, tf_set, model.predict(tf_set.features))
            cal_preds = model.predict(cal_set.features)
            for alpha in cfg.alphas:
                cp = calibrate(transform, cal_preds, cal_set.labels,
                               cal_set.features, alpha)
                radii = predict_radii(cp, test_set.features)
                covered = covered_mask((test_preds, radii), test_set.labels)
                metrics = SplitMetrics(
                    coverage=float(covered.mean()),
                    avg_size=float(np.mean(2.0 * radii)),
                    wsc=wsc(test_set.features, covered, delta=cfg.wsc_delta,
                            n_directions=cfg.wsc_directions, seed=split_seed),
                    n_test=test_set.n,
                )
                per_split.setdefault((family_name, alpha), []).append(metrics)
                result.rows.append({
                    "dataset": cfg.dataset,
                    "family": family_name,
                    "alpha": alpha,
                    "split": split_idx,
                    "n_calib": cal_set.n,
                    "n_test": test_set.n,
                    "finite_sample_level": float(finite_sample_level(cal_set.n, alpha)),
                    "coverage": metrics.coverage,
                    "avg_size": metrics.avg_size,
                    "wsc": metrics.wsc,
                    "regressor_mae": split_mae,
                })

    result.reports = {key: EvalReport(splits=vals) for key, vals in per_split.items()}
    if write:
        result.write_csv(cfg.out_dir)
    return result


def figure_data(out_path: str, seed: int = 0, alpha: float = 0.1,
                n_train: int = 500, n_calib: int = 100, n_test: int = 200,
                gamma: float = 0.01, exponent: int = 1,
                iterations: int = 4000, learning_rate: float = 0.01,
                xi: float = 5.0) -> dict:
    """Reproduce the two-regime example with the cubic localizer.

    Writes one CSV row per test point: input, residual score, and the
    interval upper bounds of the plain, reweighted, and flow-calibrated
    predictors, plus the transformed calibration view of each test score.
    Returns the three calibrated thresholds.
    """
    full = gen_synth(SynthSpec(kind="toy", n=n_train + n_calib + n_test, seed=seed, xi=xi))
    total = full.n
    tf_set, cal_set, test_set = split(
        full, [n_train / total, n_calib / total, n_test / total], seed=seed)

    def zero_preds(ds):
        return np.zeros(ds.n)

    base_cfg = dict(gamma=gamma, exponent=exponent, localizer="cubic",
                    iterations=iterations, learning_rate=learning_rate, seed=seed)
    er_t = train_transform(TrainConfig(family=Family.ER, **base_cfg),
                           tf_set, zero_preds(tf_set))
    flow_t = train_transform(TrainConfig(family=Family.GAUSS, **base_cfg),
                             tf_set, zero_preds(tf_set))
    base_t = ConformityTransform.baseline()

    cps = {
        "baseline": calibrate(base_t, zero_preds(cal_set), cal_set.labels,
                              cal_set.features, alpha),
        "er": calibrate(er_t, zero_preds(cal_set), cal_set.labels,
                        cal_set.features, alpha),
        "flow": calibrate(flow_t, zero_preds(cal_set), cal_set.labels,
                          cal_set.features, alpha),
    }
    scores = np.abs(test_set.labels)
    bounds = {name: predict_radii(cp, test_set.features) for name, cp in cps.items()}
    transformed = {
        "er": er_t.eval(scores, test_set.features),
        "flow": flow_t.eval(scores, test_set.features),
    }

    os.makedirs(os.path.dirname(os.path.abspath(out_path)), exist_ok=True)
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "score", "baseline_bound", "er_bound", "flow_bound",
                         "er_score_transformed", "flow_score_transformed"])
        for i in range(test_set.n):
            writer.writerow([
                repr(float(test_set.features[i, 0])), repr(float(scores[i])),
                repr(float(bounds["baseline"][i])), repr(float(bounds["er"][i])),
                repr(float(bounds["flow"][i])),
                repr(float(transformed["er"][i])), repr(float(transformed["flow"][i])),
            ])
    return {name: cp.threshold_qb for name, cp in cps.items()}


def config_defaults_text() -> str:
    """The default configuration in the flat key=value grammar."""
    cfg = ExperimentConfig()
    lines = []
    for f in fields(cfg):
        value = getattr(cfg, f.name)
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        elif value is None:
            value = ""
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"
