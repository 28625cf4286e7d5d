"""Bias-aware averaging, error metrics and probability bounds.

The collector's average subtracts the public bias after the division,
``avg* = (1/n) sum(x*_i) - abar``, and the probabilistic guarantees on its
error come from a Bernstein bound built on the per-sample variance and the
hard output range. Neither bound depends on the bias, so their values are
bit-identical across bias choices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyDataset, OutOfDomain, ZeroSum, ZeroTrueAverage
from .mechanism import (
    MechanismParams,
    PrivatizedDataset,
    perturb_array,
    uniform_stream,
    variance_array,
)


_SCALE_BITS = 1074  # every finite double is an integer multiple of 2**-1074
_SCALE = 1 << _SCALE_BITS


def exact_mean(values) -> float:
    """Correctly rounded mean of doubles: exact rational sum, one rounding.

    Accumulating in doubles at bias scale (n * abar can exceed 2**53 ULPs)
    would re-introduce exactly the distortion the estimator is supposed to
    measure; integer accumulation keeps the sum exact and the final integer
    division rounds once.
    """
    total = 0
    count = 0
    for v in values:
        num, den = float(v).as_integer_ratio()
        total += num * (_SCALE // den)
        count += 1
    if count == 0:
        raise EmptyDataset("mean of an empty dataset")
    return total / (count << _SCALE_BITS)


@dataclass(frozen=True)
class ErrorReport:
    """Aggregation result with optional error diagnostics.

    ``delta_avg`` and the relative metrics need the original data;
    ``rel_delta_avg`` is absent (None) when the true average is zero, and
    per-sample relative errors are NaN where the original reading is zero.
    """

    avg_star: float
    n: int
    avg_true: float | None = None
    delta_avg: float | None = None
    rel_delta_avg: float | None = None
    s_ds: float | None = None
    per_sample_rel_err: np.ndarray | None = field(default=None, repr=False)


@dataclass(frozen=True)
class BoundCheckRow:
    """One line of the empirical-versus-analytic bound table."""

    lam: float
    empirical_p: float
    bound_abs: float
    bound_rel: float | None

    def as_csv_dict(self) -> dict:
        return {
            "lambda": repr(self.lam),
            "empirical_p": repr(self.empirical_p),
            "bound_abs": repr(self.bound_abs),
            "bound_rel": "" if self.bound_rel is None else repr(self.bound_rel),
        }


def avg_star(privatized: PrivatizedDataset) -> float:
    """Bias-corrected mean of the privatized samples.

    The sample mean is computed exactly (see :func:`exact_mean`) and the
    bias is subtracted after the division, which is the order the estimator
    is defined in; the samples themselves are the distorted quantity of
    interest.
    """
    if privatized.n == 0:
        raise EmptyDataset("avg_star of an empty dataset")
    return exact_mean(privatized.samples.tolist()) - privatized.params.bias


def error_metrics(privatized: PrivatizedDataset, original) -> ErrorReport:
    """Average error diagnostics of one privatization run.

    Relative metrics use the signed true average as denominator; a zero true
    average leaves them absent rather than raising.
    """
    data = np.ascontiguousarray(original, dtype=np.float64).reshape(-1)
    if data.size != privatized.n:
        raise ValueError(
            f"length mismatch: {privatized.n} samples vs {data.size} originals")
    star = avg_star(privatized)
    s_ds = math.fsum(data.tolist())
    true_avg = exact_mean(data.tolist())
    delta = star - true_avg
    rel = None if true_avg == 0.0 else delta / true_avg
    with np.errstate(divide="ignore", invalid="ignore"):
        per_sample = np.where(
            data != 0.0,
            (privatized.samples - privatized.params.bias - data) / data,
            np.nan)
    return ErrorReport(
        avg_star=star,
        n=int(data.size),
        avg_true=true_avg,
        delta_avg=delta,
        rel_delta_avg=rel,
        s_ds=s_ds,
        per_sample_rel_err=per_sample,
    )


def relative_expectation_error(params: MechanismParams, x: float,
                               samples: int = 10 ** 5, seed: int = 0) -> float:
    """Monte-Carlo estimate of the relative bias-corrected expectation error.

    Averages ``samples`` perturbations of the single reading ``x`` and
    reports (mean - abar - x) / x. With infinitely precise arithmetic this
    is zero in expectation; destructive bias values push it toward -100%.
    """
    if x == 0.0:
        raise ZeroTrueAverage("relative expectation error undefined at x = 0")
    u = uniform_stream(seed).random(samples)
    draws = perturb_array(params, np.full(samples, float(x)), u)
    return (exact_mean(draws.tolist()) - params.bias - x) / x


def sum_variances(params: MechanismParams, data) -> float:
    """Sum of per-sample analytic variances over a dataset."""
    arr = np.ascontiguousarray(data, dtype=np.float64).reshape(-1)
    bad = np.flatnonzero((arr < params.domain_min) | (arr > params.domain_max))
    if bad.size:
        i = int(bad[0])
        raise OutOfDomain(f"sample {i} = {arr[i]!r} outside the feasible interval")
    return float(np.sum(variance_array(params, arr)))


def _bernstein(total_deviation: float, var_sum: float, spread: float) -> float:
    """exp(-(t^2/2) / (var_sum + spread*t/3)) for deviation t of the sample sum."""
    if total_deviation == 0.0:
        return 1.0
    exponent = -0.5 * total_deviation * total_deviation / (
        var_sum + spread * total_deviation / 3.0)
    return math.exp(exponent)


def bernstein_bound_abs(params: MechanismParams, data, lam: float,
                        raw: bool = False) -> float:
    """Upper bound on P(|avg error| >= lam) from the Bernstein inequality.

    Each centered sample deviation lies in [-(C+h), C+h] with variance given
    by the closed form, hence

        P >= lam  <=  exp(-(n lam)^2/2 / (sum VAR + (C+h) n lam / 3)).

    The value is capped at 1.0 for interpretability unless ``raw``.
    """
    if not (isinstance(lam, (int, float)) and lam >= 0.0):
        raise ValueError(f"lambda must be nonnegative, got {lam!r}")
    arr = np.ascontiguousarray(data, dtype=np.float64).reshape(-1)
    var_sum = sum_variances(params, arr)
    spread = params.half_span + params.half_range
    value = _bernstein(arr.size * float(lam), var_sum, spread)
    return value if raw else min(value, 1.0)


def bernstein_bound_rel(params: MechanismParams, data, lam: float,
                        raw: bool = False) -> float:
    """Upper bound on P(|relative avg error| >= lam).

    A relative deviation lam corresponds to an absolute one of lam*|avg|, so
    the absolute bound is evaluated with n*lam replaced by |sum(x_i)|*lam.
    Undefined when the dataset sums to zero.
    """
    if not (isinstance(lam, (int, float)) and lam >= 0.0):
        raise ValueError(f"lambda must be nonnegative, got {lam!r}")
    arr = np.ascontiguousarray(data, dtype=np.float64).reshape(-1)
    s_ds = math.fsum(arr.tolist())
    if s_ds == 0.0:
        raise ZeroSum("relative bound undefined for zero-sum data")
    var_sum = sum_variances(params, arr)
    spread = params.half_span + params.half_range
    value = _bernstein(abs(s_ds) * float(lam), var_sum, spread)
    return value if raw else min(value, 1.0)


def default_lambda_grid(params: MechanismParams, points: int = 30) -> np.ndarray:
    """Log-spaced thresholds spanning [1e-3 * (C+h), C+h]."""
    top = params.half_span + params.half_range
    return np.logspace(math.log10(top * 1e-3), math.log10(top), points)


def empirical_bound_check(params: MechanismParams, data, lambdas=None,
                          trials: int = 10, seed: int = 0) -> list[BoundCheckRow]:
    """Empirical exceedance frequencies of |avg error| next to the bounds.

    Runs ``trials`` independent perturbations (trial t draws from
    ``uniform_stream(seed, stream=t)``) and tabulates, for every threshold,
    the fraction of trials whose absolute average error reached it.
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    arr = np.ascontiguousarray(data, dtype=np.float64).reshape(-1)
    if arr.size == 0:
        raise EmptyDataset("empirical_bound_check of an empty dataset")
    grid = default_lambda_grid(params) if lambdas is None else np.asarray(lambdas, float)
    true_avg = exact_mean(arr.tolist())
    s_ds = math.fsum(arr.tolist())

    deviations = np.empty(trials)
    for t in range(trials):
        u = uniform_stream(seed, stream=t).random(arr.size)
        star = perturb_array(params, arr, u)
        deviations[t] = abs(
            exact_mean(star.tolist()) - params.bias - true_avg)

    rows = []
    for lam in grid:
        lam = float(lam)
        empirical = float(np.count_nonzero(deviations >= lam)) / trials
        b_abs = bernstein_bound_abs(params, arr, lam)
        b_rel = None
        if s_ds != 0.0 and true_avg != 0.0:
            b_rel = bernstein_bound_rel(params, arr, lam / abs(true_avg))
        rows.append(BoundCheckRow(lam, empirical, b_abs, b_rel))
    return rows
