"""Bounded two-level perturbation of doubles with a constant output bias.

A reading x in [center - h, center + h] is randomized into a sample
x* in [center - C + abar, center + C + abar], where

    C = h * (e**(eps/2) + 1) / (e**(eps/2) - 1).

The output density has exactly two nonzero levels: a plateau of height p on
[L(x), R(x)] and flanks of height p / e**eps, with

    p = (e**eps - e**(eps/2)) / (2 * h * (e**(eps/2) + 1)),
    L(x) = (C + h)/2 * (x - center)/h - (C - h)/2 + center + abar,
    R(x) = L(x) + C - h.

Sampling inverts the piecewise-linear CDF. All geometry is evaluated in
unbiased coordinates and the bias is added as the *last* arithmetic step, so
a nonzero bias distorts samples exactly like a post-hoc addition transform;
the planner's finite-precision estimate models that same rounding.

The sample mean is x + abar and the variance is

    VAR(x*) = h**2 * (((x - center)/h)**2 / (e**(eps/2) - 1)
                      + (e**(eps/2) + 3) / (3 * (e**(eps/2) - 1)**2)).

Randomness: ``uniform_stream`` wraps the Philox counter-based generator, so
the i-th variate of a stream is a pure function of (seed, stream, i) on any
platform. The plateau level is stored as ``flank * e**eps`` (at most 1 ulp
from the closed form) so the two-level density ratio holds exactly in double
arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    InvalidEpsilon,
    InvalidProbability,
    InvalidRange,
    NonFiniteInput,
    OutOfDomain,
    OverflowingBias,
)

_MASK64 = (1 << 64) - 1


def uniform_stream(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based uniform source; variate i depends only on (seed, stream, i).

    Philox with a 128-bit key assembled from ``seed`` (low word) and
    ``stream`` (high word). ``Generator.random`` applies the standard 53-bit
    double-from-integer construction, yielding values in [0, 1).
    """
    key = (seed & _MASK64) | ((stream & _MASK64) << 64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class MechanismParams:
    """Validated perturbation parameters plus the derived constants.

    Derived values are computed once in :func:`derive_params` and reused by
    every operation for bit-reproducibility.
    """

    epsilon: float
    center: float
    half_range: float
    bias: float
    exp_eps: float
    exp_half_eps: float
    p: float
    p_flank: float
    half_span: float
    domain_min: float
    domain_max: float
    lo_unbiased: float
    hi_unbiased: float
    out_min: float
    out_max: float
    # breakpoint geometry and variance coefficients
    mid_slope: float = field(repr=False, default=0.0)   # (C + h) / 2
    mid_offset: float = field(repr=False, default=0.0)  # (C - h) / 2
    plateau_width: float = field(repr=False, default=0.0)  # C - h
    var_quad: float = field(repr=False, default=0.0)
    var_const: float = field(repr=False, default=0.0)


@dataclass(frozen=True)
class Breakpoints:
    """Edges of the plateau segment of the output density for one input."""

    l: float
    r: float


@dataclass(frozen=True)
class PrivatizedDataset:
    """Samples produced from one dataset together with the producing params."""

    samples: np.ndarray
    params: MechanismParams

    def __post_init__(self):
        arr = np.array(self.samples, dtype=np.float64, copy=True).reshape(-1)
        arr.flags.writeable = False
        object.__setattr__(self, "samples", arr)

    @property
    def n(self) -> int:
        return int(self.samples.size)


def derive_params(epsilon: float, center: float, half_range: float,
                  bias: float = 0.0) -> MechanismParams:
    """Validate inputs and evaluate every derived constant once."""
    try:
        epsilon = float(epsilon)
    except (TypeError, ValueError) as exc:
        raise InvalidEpsilon(f"epsilon must be a number, got {epsilon!r}") from exc
    try:
        half_range = float(half_range)
    except (TypeError, ValueError) as exc:
        raise InvalidRange(f"half_range must be a number, got {half_range!r}") from exc
    if not (math.isfinite(epsilon) and epsilon > 0):
        raise InvalidEpsilon(f"epsilon must be finite and positive, got {epsilon!r}")
    if not (math.isfinite(half_range) and half_range > 0):
        raise InvalidRange(f"half_range must be finite and positive, got {half_range!r}")
    center = float(center)
    bias = float(bias)

    exp_half = math.exp(epsilon / 2.0)
    exp_eps = math.exp(epsilon)
    half_span = half_range * (exp_half + 1.0) / (exp_half - 1.0)
    p_closed = (exp_eps - exp_half) / (2.0 * half_range * (exp_half + 1.0))
    p_flank = p_closed / exp_eps
    p = p_flank * exp_eps  # exact two-level ratio: p == fl(exp_eps * p_flank)

    lo_unbiased = center - half_span
    hi_unbiased = center + half_span
    out_min = lo_unbiased + bias
    out_max = hi_unbiased + bias
    if not (math.isfinite(out_min) and math.isfinite(out_max)):
        raise OverflowingBias(
            f"output bounds are not finite doubles: ({out_min!r}, {out_max!r})")

    return MechanismParams(
        epsilon=epsilon,
        center=center,
        half_range=half_range,
        bias=bias,
        exp_eps=exp_eps,
        exp_half_eps=exp_half,
        p=p,
        p_flank=p_flank,
        half_span=half_span,
        domain_min=center - half_range,
        domain_max=center + half_range,
        lo_unbiased=lo_unbiased,
        hi_unbiased=hi_unbiased,
        out_min=out_min,
        out_max=out_max,
        mid_slope=(half_span + half_range) / 2.0,
        mid_offset=(half_span - half_range) / 2.0,
        plateau_width=half_span - half_range,
        var_quad=1.0 / (exp_half - 1.0),
        var_const=(exp_half + 3.0) / (3.0 * (exp_half - 1.0) ** 2),
    )


def _require_domain(params: MechanismParams, x: float) -> None:
    if not (params.domain_min <= x <= params.domain_max):
        raise OutOfDomain(
            f"{x!r} outside [{params.domain_min!r}, {params.domain_max!r}]")


def _unbiased_geometry(params: MechanismParams, x):
    """Plateau edges and segment masses in unbiased coordinates.

    Works elementwise for scalars and numpy arrays; the operation order is
    identical in both cases so results are bit-identical.
    """
    z = (x - params.center) / params.half_range
    l0 = params.mid_slope * z - params.mid_offset + params.center
    r0 = l0 + params.plateau_width
    q_flank = params.p_flank * (l0 - params.lo_unbiased)
    q_mid = q_flank + params.p * (r0 - l0)
    return l0, r0, q_flank, q_mid


def segment_masses(params: MechanismParams, x: float) -> tuple[float, float]:
    """Cumulative probability at the plateau edges: (cdf(L), cdf(R))."""
    _require_domain(params, x)
    _, _, q_flank, q_mid = _unbiased_geometry(params, x)
    return float(q_flank), float(q_mid)


def breakpoints(params: MechanismParams, x: float) -> Breakpoints:
    """Plateau edges L(x), R(x) of the output density (biased coordinates)."""
    _require_domain(params, x)
    l0, r0, _, _ = _unbiased_geometry(params, x)
    return Breakpoints(l=l0 + params.bias, r=r0 + params.bias)


def pdf(params: MechanismParams, x: float, x_star: float) -> float:
    """Output density at ``x_star``: plateau level, flank level, or zero."""
    _require_domain(params, x)
    if math.isnan(x_star):
        raise NonFiniteInput("pdf at NaN")
    if x_star < params.out_min or x_star > params.out_max:
        return 0.0
    bp = breakpoints(params, x)
    if x_star < bp.l or x_star > bp.r:
        return params.p_flank
    return params.p


def cdf(params: MechanismParams, x: float, x_star: float) -> float:
    """Cumulative probability of the output at ``x_star``, in [0, 1]."""
    _require_domain(params, x)
    if math.isnan(x_star):
        raise NonFiniteInput("cdf at NaN")
    if x_star <= params.out_min:
        return 0.0
    if x_star >= params.out_max:
        return 1.0
    x0 = x_star - params.bias
    l0, r0, q_flank, q_mid = _unbiased_geometry(params, x)
    if x0 < l0:
        q = params.p_flank * (x0 - params.lo_unbiased)
    elif x0 <= r0:
        q = q_flank + params.p * (x0 - l0)
    else:
        q = q_mid + params.p_flank * (x0 - r0)
    return min(max(q, 0.0), 1.0)


# Compensated (double-double) primitives, elementwise for floats and arrays.
# The sampler below must behave like a *single* rounding of the exact affine
# map: reachability of every representable output is a per-ULP density
# argument on that map, and ordinary intermediate roundings (quotient at
# plateau-width scale, then the unbiased sum, then the bias) can eat the
# whole margin and silently skip outputs.

_SPLITTER = 134217729.0  # 2**27 + 1, Dekker splitting constant


def _two_sum(a, b):
    s = a + b
    t = s - a
    return s, (a - (s - t)) + (b - t)


def _split(a):
    c = _SPLITTER * a
    hi = c - (c - a)
    return hi, a - hi


def _two_prod(a, b):
    p = a * b
    a_hi, a_lo = _split(a)
    b_hi, b_lo = _split(b)
    return p, ((a_hi * b_hi - p) + a_hi * b_lo + a_lo * b_hi) + a_lo * b_lo


def _inverse_pieces(anchor, offset, den, bias, q):
    """(anchor + (q - offset)/den) + bias with one effective rounding."""
    dq, e_dq = _two_sum(q, -offset)
    quot = dq / den
    prod, e_prod = _two_prod(quot, den)
    e_quot = (((dq - prod) - e_prod) + e_dq) / den
    s, e_s = _two_sum(anchor, bias)
    return s + (quot + (e_s + e_quot))


def _inverse_biased(params: MechanismParams, x, q):
    """Vectorised inverse CDF; returns biased samples, clamped to bounds."""
    l0, r0, q_flank, q_mid = _unbiased_geometry(params, x)
    in_left = q < q_flank
    in_mid = ~in_left & (q <= q_mid)
    anchor = np.where(in_left, params.lo_unbiased, np.where(in_mid, l0, r0))
    offset = np.where(in_left, 0.0, np.where(in_mid, q_flank, q_mid))
    den = np.where(in_mid, params.p, params.p_flank)
    draw = _inverse_pieces(anchor, offset, den, params.bias, q)
    return np.minimum(np.maximum(draw, params.out_min), params.out_max)


def inverse_cdf(params: MechanismParams, x: float, p_c: float) -> float:
    """Map a cumulative probability in [0, 1) to a sample.

    The three affine pieces have slopes 1/p_flank, 1/p, 1/p_flank. The value
    is the exact piece evaluation plus the bias, rounded once onto the
    output grid, so the bias distorts samples exactly like a single rounded
    addition and the per-ULP reachability analysis applies to this
    implementation as written.
    """
    _require_domain(params, x)
    if not (0.0 <= p_c < 1.0):
        raise InvalidProbability(f"cumulative probability {p_c!r} outside [0, 1)")
    l0, r0, q_flank, q_mid = _unbiased_geometry(params, x)
    if p_c < q_flank:
        anchor, offset, den = params.lo_unbiased, 0.0, params.p_flank
    elif p_c <= q_mid:  # ties at both edges belong to the plateau
        anchor, offset, den = l0, q_flank, params.p
    else:
        anchor, offset, den = r0, q_mid, params.p_flank
    draw = _inverse_pieces(anchor, offset, den, params.bias, p_c)
    if draw < params.out_min:
        return params.out_min
    if draw > params.out_max:
        return params.out_max
    return draw


def perturb(params: MechanismParams, x: float, u: float, clamp: bool = False) -> float:
    """Privatize one reading using the injected uniform draw ``u`` in [0, 1).

    Out-of-domain readings are rejected unless ``clamp`` pulls them to the
    nearest feasible value first.
    """
    if clamp:
        x = min(max(x, params.domain_min), params.domain_max)
    return inverse_cdf(params, x, u)


def analytic_mean(params: MechanismParams, x: float) -> float:
    """Expected value of the sample: the reading shifted by the bias."""
    _require_domain(params, x)
    return x + params.bias


def analytic_variance(params: MechanismParams, x: float) -> float:
    """Closed-form sample variance; grows quadratically away from the center."""
    _require_domain(params, x)
    z = (x - params.center) / params.half_range
    return params.half_range ** 2 * (z * z * params.var_quad + params.var_const)


def variance_array(params: MechanismParams, x: np.ndarray) -> np.ndarray:
    """Vectorised :func:`analytic_variance` (inputs assumed in-domain)."""
    z = (np.asarray(x, dtype=np.float64) - params.center) / params.half_range
    return params.half_range ** 2 * (z * z * params.var_quad + params.var_const)


def perturb_array(params: MechanismParams, x: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Vectorised perturbation; bit-identical to the scalar path."""
    x = np.asarray(x, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    return _inverse_biased(params, x, u)


def perturb_dataset(params: MechanismParams, data, seed: int,
                    clamp: bool = False, stream: int = 0) -> PrivatizedDataset:
    """Privatize a whole dataset deterministically from ``(seed, stream)``.

    Sample i consumes the i-th variate of ``uniform_stream(seed, stream)``,
    so the result is reproducible and order-preserving; samples may be
    produced concurrently as long as that indexing is kept. Independent
    trials should bump ``stream``, not ``seed``.
    """
    arr = np.ascontiguousarray(data, dtype=np.float64).reshape(-1)
    if clamp:
        arr = np.minimum(np.maximum(arr, params.domain_min), params.domain_max)
    else:
        bad = np.flatnonzero((arr < params.domain_min) | (arr > params.domain_max))
        if bad.size:
            i = int(bad[0])
            raise OutOfDomain(
                f"sample {i} = {arr[i]!r} outside "
                f"[{params.domain_min!r}, {params.domain_max!r}]")
    if arr.size == 0:
        return PrivatizedDataset(samples=arr, params=params)
    u = uniform_stream(seed, stream).random(arr.size)
    return PrivatizedDataset(samples=perturb_array(params, arr, u), params=params)
