"""Executable verification of the coverage guarantees on controlled setups.

Four checks, each with an independent oracle:

* rank enumeration for the exact finite-sample coverage identity;
* bin-wise conditional coverage under factorized (homoscedastic) scores,
  and under the analytically exact flow for the two-regime toy model;
* an explicit construction where an input-dependent transform reorders the
  calibration scores and changes the interval size;
* a Monte-Carlo harness comparing the coverage gap of a Huber-perturbed
  flow against its explicit Lipschitz bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.special import erf, erfinv

from .conformal import (
    calibrate,
    finite_sample_level,
    predict_interval,
    quantile_rank,
)
from .errors import MonotonicityViolated, NonFiniteRadius, ShapeMismatch
from .transforms import ConformityTransform, ConstantLocalizer, CubicLocalizer, Family

__all__ = [
    "enumerate_coverage",
    "AnalyticToyFlow",
    "ExponentialScaleFlow",
    "SmoothPerturbation",
    "PerturbedFlow",
    "BinnedCoverageResult",
    "check_factorization_equivalence",
    "check_exact_flow_conditional",
    "RankingChangeWitness",
    "construct_ranking_change",
    "Theorem2Result",
    "perturbation_gap_vs_bound",
    "TheoryReport",
    "run_theory_checks",
]


def enumerate_coverage(n: int, alpha) -> Fraction:
    """Exact coverage by enumerating the rank of the test score.

    Among n calibration scores and one exchangeable test score, the test
    score is equally likely to occupy any of the n + 1 rank positions.
    Counting the positions at or below the threshold rank gives the exact
    coverage probability as a rational. A threshold rank of n + 1 (sample
    too small for the level) covers every position.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rank = quantile_rank(n, alpha)
    hits = sum(1 for position in range(1, n + 2) if position <= rank)
    return Fraction(hits, n + 1)


def _elementwise_x(a, x) -> np.ndarray:
    """Coerce features to the elementwise shape of the score array."""
    x_arr = np.asarray(x, dtype=float)
    if x_arr.ndim == 2:
        if x_arr.shape[1] != 1:
            raise ShapeMismatch("analytic flows take one-dimensional inputs")
        x_arr = x_arr[:, 0]
    return np.broadcast_to(x_arr, np.shape(np.asarray(a)))


class AnalyticToyFlow:
    """Exact flow for the two-regime toy model onto Uniform([0, 1]).

    Scores are |Y| with Y centered normal of standard deviation 1 below
    x = 0.5 and xi above; the half-normal CDF of the standardized score is
    then uniform for every x.
    """

    def __init__(self, xi: float = 5.0):
        self.xi = float(xi)

    def sd(self, x) -> np.ndarray:
        x_arr = np.asarray(x, dtype=float)
        return np.where(x_arr > 0.5, self.xi, 1.0)

    def eval(self, a, x):
        xs = _elementwise_x(a, x)
        out = erf(np.asarray(a, dtype=float) / (self.sd(xs) * math.sqrt(2.0)))
        return out if np.ndim(a) else float(out)

    def invert(self, value, x):
        xs = _elementwise_x(value, x)
        out = self.sd(xs) * math.sqrt(2.0) * erfinv(np.asarray(value, dtype=float))
        return out if np.ndim(value) else float(out)

    def draw_scores(self, rng: np.random.Generator, x) -> np.ndarray:
        x_arr = np.asarray(x, dtype=float)
        return np.abs(rng.standard_normal(x_arr.shape)) * self.sd(x_arr)


class ExponentialScaleFlow:
    """Exact flow for exponential scores with a two-level scale.

    A | X is exponential with scale 1 below x = 0.5 and ``scale_high``
    above; b(a, x) = 1 - exp(-a / scale(x)) maps the score to Uniform([0,1])
    for every x, and the inverse has the closed-form slope
    scale(x) / (1 - v), giving an exact Lipschitz constant on [0, v_hi].
    """

    def __init__(self, scale_high: float = 2.0):
        self.scale_high = float(scale_high)

    def sd(self, x) -> np.ndarray:
        x_arr = np.asarray(x, dtype=float)
        return np.where(x_arr > 0.5, self.scale_high, 1.0)

    def eval(self, a, x):
        xs = _elementwise_x(a, x)
        out = -np.expm1(-np.asarray(a, dtype=float) / self.sd(xs))
        return out if np.ndim(a) else float(out)

    def invert(self, value, x):
        xs = _elementwise_x(value, x)
        out = -self.sd(xs) * np.log1p(-np.asarray(value, dtype=float))
        return out if np.ndim(value) else float(out)

    def invert_slope_sup(self, v_hi: float) -> float:
        """sup over x and v in [0, v_hi] of d invert / d v: closed form."""
        return max(self.scale_high, 1.0) / (1.0 - v_hi)

    def draw_scores(self, rng: np.random.Generator, x) -> np.ndarray:
        x_arr = np.asarray(x, dtype=float)
        return rng.exponential(1.0, size=x_arr.shape) * self.sd(x_arr)


class SmoothPerturbation:
    """Bounded smooth error term with known score-slope supremum.

    value(a, x) = 2 * (sigmoid(slope * a * (1 + 0.5 cos(pi x))) - 1/2),
    rising from 0 to 1 in the score for every x, so mixing it into an
    exact flow onto [0, 1] keeps the codomain input-independent. The
    maximal score derivative is slope * 3/4, attained at a = 0, x = 0.
    """

    def __init__(self, slope: float = 0.3):
        self.slope = float(slope)

    def _gain(self, x) -> np.ndarray:
        return 1.0 + 0.5 * np.cos(np.pi * np.asarray(x, dtype=float))

    def value(self, a, x) -> np.ndarray:
        z = self.slope * np.asarray(a, dtype=float) * self._gain(x)
        return np.tanh(z / 2.0)  # == 2*(sigmoid(z) - 1/2)

    def score_slope_sup(self) -> float:
        return self.slope * 0.75


class PerturbedFlow:
    """Huber mixture (1 - eps) * base + eps * delta of an exact flow.

    Strict monotonicity in the score is verified numerically on a grid at
    construction; the inverse is computed by bisection.
    """

    def __init__(self, base, epsilon: float, delta=None,
                 grid_a_max: float = 50.0, grid_points: int = 2001):
        if epsilon < 0:
            raise ValueError(f"epsilon must be >= 0, got {epsilon}")
        self.base = base
        self.epsilon = float(epsilon)
        self.delta = delta if delta is not None else SmoothPerturbation()
        self.grid_a_max = float(grid_a_max)
        self._check_monotone(grid_a_max, grid_points)

    def _check_monotone(self, a_max: float, points: int):
        a = np.linspace(0.0, a_max, points)
        for xv in np.linspace(0.0, 1.0, 21):
            vals = self.eval(a, np.full_like(a, xv))
            if np.any(np.diff(vals) <= 0.0):
                raise MonotonicityViolated(
                    f"perturbed transform not strictly increasing at x={xv:.2f} "
                    f"with epsilon={self.epsilon}"
                )

    def eval(self, a, x):
        a_arr = np.asarray(a, dtype=float)
        xs = _elementwise_x(a_arr, x)
        out = (1.0 - self.epsilon) * np.asarray(self.base.eval(a_arr, xs)) \
            + self.epsilon * self.delta.value(a_arr, xs)
        return out if np.ndim(a) else float(out)

    def invert(self, value, x, tol: float = 1e-12, max_iter: int = 200):
        v = np.asarray(value, dtype=float)
        xs = _elementwise_x(v, x)
        lo = np.zeros_like(v)
        hi = np.full_like(v, 1.0)
        for _ in range(max_iter):
            ok = np.asarray(self.eval(hi, xs)) >= v
            if ok.all():
                break
            hi = np.where(ok, hi, hi * 2.0)
        else:
            raise NonFiniteRadius("could not bracket the perturbed inverse")
        for _ in range(100):
            mid = 0.5 * (lo + hi)
            below = np.asarray(self.eval(mid, xs)) < v
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
            if float(np.max(hi - lo)) < tol:
                break
        out = 0.5 * (lo + hi)
        return out if np.ndim(value) else float(out)


@dataclass
class BinnedCoverageResult:
    """Coverage per input bin against the exact finite-sample level."""

    alpha: float
    n_calib: int
    n_trials: int
    level: Fraction
    bin_edges: np.ndarray
    bin_coverage: np.ndarray
    std_error: float

    @property
    def within_3se(self) -> np.ndarray:
        return np.abs(self.bin_coverage - float(self.level)) <= 3.0 * self.std_error

    @property
    def all_within(self) -> bool:
        return bool(self.within_3se.all())


def _binwise_coverage_mc(flow, sd_fn, n_trials: int, n_calib: int, alpha,
                         n_bins: int, seed: int) -> BinnedCoverageResult:
    """Stratified conditional-coverage Monte Carlo over decile-style bins.

    Each trial draws a fresh calibration set and one test point per bin
    (uniform within the bin), so every bin accumulates n_trials
    independent coverage indicators and the binomial standard error
    applies.
    """
    rank = quantile_rank(n_calib, alpha)
    if rank > n_calib:
        raise ValueError("calibration size too small for alpha")
    level = finite_sample_level(n_calib, alpha)
    rng = np.random.Generator(np.random.PCG64(seed))

    x_cal = rng.uniform(0.0, 1.0, size=(n_trials, n_calib))
    a_cal = np.abs(rng.standard_normal((n_trials, n_calib))) * sd_fn(x_cal)
    b_cal = np.asarray(flow.eval(a_cal, x_cal))
    q = np.partition(b_cal, rank - 1, axis=1)[:, rank - 1]

    edges = np.linspace(0.0, 1.0, n_bins + 1)
    lo, hi = edges[:-1], edges[1:]
    x_test = rng.uniform(lo, hi, size=(n_trials, n_bins))
    a_test = np.abs(rng.standard_normal((n_trials, n_bins))) * sd_fn(x_test)
    radii = np.asarray(flow.invert(np.broadcast_to(q[:, None], x_test.shape), x_test))
    covered = a_test <= radii

    p = float(level)
    return BinnedCoverageResult(
        alpha=float(alpha),
        n_calib=n_calib,
        n_trials=n_trials,
        level=level,
        bin_edges=edges,
        bin_coverage=covered.mean(axis=0),
        std_error=math.sqrt(p * (1.0 - p) / n_trials),
    )


class _IdentityFlow:
    """Plain residual scores; the input plays no role."""

    def eval(self, a, x):
        return np.asarray(a, dtype=float)

    def invert(self, value, x):
        return np.asarray(value, dtype=float)


def check_factorization_equivalence(n_trials: int = 2000, seed: int = 0,
                                    n_calib: int = 200, alpha: float = 0.1,
                                    n_bins: int = 10,
                                    heteroscedastic: bool = False,
                                    xi: float = 5.0) -> BinnedCoverageResult:
    """Bin-wise coverage of plain-residual intervals.

    With homoscedastic scores (constant conditional scale) every bin's
    coverage matches the finite-sample level; the heteroscedastic variant
    serves as a control where interior bins deviate.
    """
    if heteroscedastic:
        sd_fn = AnalyticToyFlow(xi).sd
    else:
        def sd_fn(x):
            return np.ones_like(np.asarray(x, dtype=float))
    return _binwise_coverage_mc(_IdentityFlow(), sd_fn, n_trials, n_calib,
                                alpha, n_bins, seed)


def check_exact_flow_conditional(n_trials: int = 2000, seed: int = 0,
                                 n_calib: int = 200, alpha: float = 0.1,
                                 n_bins: int = 10,
                                 xi: float = 5.0) -> BinnedCoverageResult:
    """Bin-wise coverage under the analytically exact toy flow.

    The flow maps the heteroscedastic scores onto a common uniform
    distribution, so conditional coverage matches the level in every bin
    despite the two noise regimes.
    """
    flow = AnalyticToyFlow(xi)
    return _binwise_coverage_mc(flow, flow.sd, n_trials, n_calib, alpha,
                                n_bins, seed)


@dataclass
class RankingChangeWitness:
    """Explicit dataset where the transform reorders calibration scores."""

    calib_features: np.ndarray
    calib_scores: np.ndarray
    test_feature: np.ndarray
    score_order: np.ndarray
    transformed_order: np.ndarray
    size_plain: float
    size_transformed: float
    size_control: float

    @property
    def orders_differ(self) -> bool:
        return not np.array_equal(self.score_order, self.transformed_order)

    @property
    def sizes_differ(self) -> bool:
        return abs(self.size_transformed - self.size_plain) > 1e-9 * self.size_plain


def construct_ranking_change(alpha: float = 0.5) -> RankingChangeWitness:
    """Three-point construction with a non-constant localizer.

    The reweighting localizer grows fast enough in x that the transformed
    scores sort in the opposite order of the raw scores, and the resulting
    interval differs in size from the plain-residual interval. A constant
    localizer on the same data reproduces the plain size exactly (global
    monotone control).
    """
    X = np.asarray([[1.0], [2.0], [3.0]])
    scores = np.asarray([1.0, 2.0, 3.0])
    preds = np.zeros(3)
    labels = scores.copy()  # residuals equal the scores
    x_test = np.asarray([0.5])

    # g(1) = 1, g(2) = 10: -3x + 4x^2
    reweight = ConformityTransform(
        family=Family.ER, gamma=0.001,
        localizer=CubicLocalizer([-3.0, 4.0, 0.0]),
    )
    plain = ConformityTransform.baseline()
    control = ConformityTransform(
        family=Family.ER, gamma=0.001, localizer=ConstantLocalizer(2.0)
    )

    b_vals = reweight.eval(scores, X)
    witness = RankingChangeWitness(
        calib_features=X,
        calib_scores=scores,
        test_feature=x_test,
        score_order=np.argsort(scores, kind="stable"),
        transformed_order=np.argsort(b_vals, kind="stable"),
        size_plain=predict_interval(
            calibrate(plain, preds, labels, X, alpha), 0.0, x_test).size,
        size_transformed=predict_interval(
            calibrate(reweight, preds, labels, X, alpha), 0.0, x_test).size,
        size_control=predict_interval(
            calibrate(control, preds, labels, X, alpha), 0.0, x_test).size,
    )
    if not witness.orders_differ:
        raise AssertionError("construction failed to reorder the scores")
    if not witness.sizes_differ:
        raise AssertionError("construction failed to change the interval size")
    if abs(witness.size_control - witness.size_plain) > 1e-9 * witness.size_plain:
        raise AssertionError("constant-localizer control changed the size")
    return witness


@dataclass
class Theorem2Result:
    """Coverage gap of a perturbed flow against its explicit bound."""

    epsilon: float
    level: Fraction
    coverage: float
    gap: float
    bound: float
    mc_std_error: float
    lipschitz_delta: float
    lipschitz_inverse: float
    density_sup: float
    region_hi: float

    @property
    def gap_within_bound(self) -> bool:
        return self.gap <= self.bound + 3.0 * self.mc_std_error


def perturbation_gap_vs_bound(pf: PerturbedFlow, n_trials: int = 4000,
                              n_calib: int = 100, alpha: float = 0.35,
                              seed: int = 0,
                              region_hi: float = 0.9) -> Theorem2Result:
    """Monte-Carlo coverage gap of intervals calibrated with a perturbed flow.

    The construction: inputs uniform on [0, 1] (density supremum 1), scores
    exponential with the base flow's two-level scale, target uniform on
    [0, 1]. The bound is 2 * eps * sup p_X * L_delta * L_binv with the
    perturbation's score-slope supremum taken in closed form and the
    base-inverse slope supremum evaluated on the fixed region [0, region_hi];
    the run asserts that every calibrated threshold stays inside that
    region. Keeping the region fixed makes the bound exactly linear in eps.
    """
    base = pf.base
    rank = quantile_rank(n_calib, alpha)
    if rank > n_calib:
        raise ValueError("calibration size too small for alpha")
    level = finite_sample_level(n_calib, alpha)

    if hasattr(pf.delta, "score_slope_sup"):
        l_delta = float(pf.delta.score_slope_sup())
    else:
        a = np.linspace(0.0, pf.grid_a_max, 4001)
        l_delta = 0.0
        for xv in np.linspace(0.0, 1.0, 41):
            vals = pf.delta.value(a, np.full_like(a, xv))
            l_delta = max(l_delta, float(np.max(np.abs(np.diff(vals)) / np.diff(a))))
    l_binv = float(base.invert_slope_sup(region_hi))
    density_sup = 1.0
    bound = 2.0 * pf.epsilon * density_sup * l_delta * l_binv

    rng = np.random.Generator(np.random.PCG64(seed))
    x_cal = rng.uniform(0.0, 1.0, size=(n_trials, n_calib))
    a_cal = base.draw_scores(rng, x_cal)
    b_cal = np.asarray(pf.eval(a_cal, x_cal))
    q = np.partition(b_cal, rank - 1, axis=1)[:, rank - 1]
    if float(q.max()) > region_hi:
        raise ValueError(
            f"calibrated threshold {q.max():.4f} left the documented region "
            f"[0, {region_hi}]; enlarge region_hi or lower the level"
        )

    x_test = rng.uniform(0.0, 1.0, size=n_trials)
    a_test = base.draw_scores(rng, x_test)
    radii = np.asarray(pf.invert(q, x_test))
    coverage = float(np.mean(a_test <= radii))

    p = float(level)
    return Theorem2Result(
        epsilon=pf.epsilon,
        level=level,
        coverage=coverage,
        gap=p - coverage,
        bound=bound,
        mc_std_error=math.sqrt(p * (1.0 - p) / n_trials),
        lipschitz_delta=l_delta,
        lipschitz_inverse=l_binv,
        density_sup=density_sup,
        region_hi=region_hi,
    )


@dataclass
class TheoryReport:
    """Aggregated pass/fail outcome of all verification checks."""

    enumeration_cases: list[tuple[int, float, Fraction, Fraction]] = field(default_factory=list)
    factorized: BinnedCoverageResult | None = None
    heteroscedastic_control: BinnedCoverageResult | None = None
    exact_flow: BinnedCoverageResult | None = None
    ranking_witness: RankingChangeWitness | None = None
    perturbation: list[Theorem2Result] = field(default_factory=list)

    @property
    def enumeration_ok(self) -> bool:
        return all(got == want for _, _, got, want in self.enumeration_cases)

    @property
    def passed(self) -> bool:
        return (
            self.enumeration_ok
            and self.factorized.all_within
            and not self.heteroscedastic_control.all_within
            and self.exact_flow.all_within
            and self.ranking_witness.orders_differ
            and self.ranking_witness.sizes_differ
            and all(r.gap_within_bound for r in self.perturbation)
        )

    def lines(self) -> list[str]:
        out = []
        status = "PASS" if self.enumeration_ok else "FAIL"
        out.append(f"[{status}] rank enumeration matches the exact level on "
                   f"{len(self.enumeration_cases)} (n, alpha) pairs")
        for name, res, want in (
            ("factorized scores: every bin at the level", self.factorized, True),
            ("heteroscedastic control: some bin off the level",
             self.heteroscedastic_control, False),
            ("exact flow: every bin at the level", self.exact_flow, True),
        ):
            ok = res.all_within is want
            out.append(
                f"[{'PASS' if ok else 'FAIL'}] {name} "
                f"(level {float(res.level):.4f}, bins "
                f"{np.array2string(res.bin_coverage, precision=3)})"
            )
        w = self.ranking_witness
        ok = w.orders_differ and w.sizes_differ
        out.append(
            f"[{'PASS' if ok else 'FAIL'}] reordering witness: sizes "
            f"{w.size_transformed:.4f} vs {w.size_plain:.4f}, control "
            f"{w.size_control:.4f}"
        )
        for r in self.perturbation:
            ok = r.gap_within_bound
            out.append(
                f"[{'PASS' if ok else 'FAIL'}] perturbation eps={r.epsilon}: "
                f"gap {r.gap:+.4f} <= bound {r.bound:.4f} "
                f"+ 3se {3 * r.mc_std_error:.4f}"
            )
        out.append(f"overall: {'PASS' if self.passed else 'FAIL'}")
        return out


def run_theory_checks(n_trials: int = 2000, perturbation_trials: int = 4000,
                      seed: int = 0,
                      epsilons=(0.0, 0.005, 0.01, 0.02)) -> TheoryReport:
    """Run every check at its default construction and collect the outcomes."""
    report = TheoryReport()
    for n in range(1, 9):
        for alpha in (0.05, 0.1, 0.35, 0.5):
            got = enumerate_coverage(n, alpha)
            want = Fraction(min(quantile_rank(n, alpha), n + 1), n + 1)
            report.enumeration_cases.append((n, alpha, got, want))
    report.factorized = check_factorization_equivalence(
        n_trials=n_trials, seed=seed)
    report.heteroscedastic_control = check_factorization_equivalence(
        n_trials=n_trials, seed=seed + 1, heteroscedastic=True)
    report.exact_flow = check_exact_flow_conditional(
        n_trials=n_trials, seed=seed + 2)
    report.ranking_witness = construct_ranking_change()
    base = ExponentialScaleFlow(scale_high=2.0)
    for i, eps in enumerate(epsilons):
        pf = PerturbedFlow(base, epsilon=eps)
        report.perturbation.append(
            perturbation_gap_vs_bound(pf, n_trials=perturbation_trials,
                                      seed=seed + 10 + i)
        )
    return report
