"""Split conformal regression with trainable conformity transforms.

The package builds prediction intervals whose width adapts to the input:
absolute residuals are mapped through a strictly increasing, input-dependent
transform before calibration, and the calibrated threshold is mapped back
through the transform inverse at each test point. Transforms are either fit
to the residual magnitudes (error reweighting) or trained by maximum
likelihood so the transformed scores follow a fixed target distribution.
"""

from .conformal import (
    CalibratedPredictor,
    PredictionInterval,
    calibrate,
    finite_sample_level,
    predict_interval,
    predict_radii,
    sample_quantile,
)
from .data import Dataset, SynthSpec, gen_synth, load_csv, normalize_labels, pca_reduce, split
from .evaluation import EvalReport, average_size, empirical_coverage, wsc
from .forest import ForestModel, OraclePredictor, fit_forest, mae, oracle_for
from .training import TrainConfig, er_loss, nf_negloglik, train_transform
from .transforms import (
    ConformityTransform,
    Family,
    GlobalMonotoneTransform,
    load_transform,
    save_transform,
)

__version__ = "0.1.0"

__all__ = [
    "CalibratedPredictor",
    "PredictionInterval",
    "calibrate",
    "finite_sample_level",
    "predict_interval",
    "predict_radii",
    "sample_quantile",
    "Dataset",
    "SynthSpec",
    "gen_synth",
    "load_csv",
    "normalize_labels",
    "pca_reduce",
    "split",
    "EvalReport",
    "average_size",
    "empirical_coverage",
    "wsc",
    "ForestModel",
    "OraclePredictor",
    "fit_forest",
    "mae",
    "oracle_for",
    "TrainConfig",
    "er_loss",
    "nf_negloglik",
    "train_transform",
    "ConformityTransform",
    "Family",
    "GlobalMonotoneTransform",
    "load_transform",
    "save_transform",
    "__version__",
]
