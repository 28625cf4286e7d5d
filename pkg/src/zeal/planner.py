"""Selection and validation of the output bias.

The bias relocates the whole output interval [center-C, center+C] into a
single binade [2**e, 2**(e+1)), chosen so that

  * e >= enclosing_exponent = ceil(log2(2C)): the interval fits at all;
  * e >= vulnerability_exponent: every representable sample is reachable
    through inverse-CDF sampling, closing the reachability side channel;
  * the finite-precision estimate of the bias-induced distortion stays
    below a configurable budget.

With the bias fixed, every sample shares its sign bit, all 11 exponent bits
and a computable number of leading mantissa bits, which is what the codec's
truncated transmission and the compression gains are built on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from . import fpbits
from .errors import (
    ExponentTooSmall,
    ExponentTooSmallForIEEE,
    InvalidPlan,
    NoFeasibleExponent,
    NonPositiveInput,
    OverflowingBias,
    SubnormalInput,
    ZeroDenominator,
)
from .mechanism import MechanismParams, derive_params

DEFAULT_MAX_F = 1e-6
_MAX_EXPONENT = 1022  # largest e with 2**(e+1) finite

SIGN_AND_EXPONENT_BITS = 1 + fpbits.EXPONENT_BITS


def ceil_log2(value: float) -> int:
    """Exact ceil(log2(value)) for a positive finite double.

    Exponent extraction plus a mantissa test; floating ``log2`` could be off
    by one at exact powers of two.
    """
    if not (isinstance(value, (int, float)) and math.isfinite(value)):
        raise NonPositiveInput(f"ceil_log2 of {value!r}")
    value = float(value)
    if value <= 0.0:
        raise NonPositiveInput(f"ceil_log2 of {value!r}")
    m, e = math.frexp(value)  # value = m * 2**e with m in [0.5, 1)
    return e - 1 if m == 0.5 else e


def enclosing_exponent(params: MechanismParams) -> int:
    """Smallest e such that a 2C-wide interval fits in [2**e, 2**(e+1))."""
    return ceil_log2(2.0 * params.half_span)


def vulnerability_exponent(params: MechanismParams) -> int:
    """Smallest safe exponent: every output ULP must absorb one probability ULP.

    The steepest inverse-CDF piece has slope e**eps / p, and cumulative
    probabilities just below 1.0 carry the largest ULP (2**-53); the binade
    must be coarse enough that this worst step cannot skip a representable
    sample. Never smaller than the enclosing exponent.
    """
    ratio = params.exp_eps / params.p
    return max(ceil_log2(ratio) - 1, enclosing_exponent(params))


def abar_for(params: MechanismParams, chosen_exponent: int) -> float:
    """Bias aligning the output interval against the top of binade ``chosen_exponent``.

    The maximum output lands at 2**(e+1) minus two ULPs, so no rounding after
    the bias addition can spill a sample into the next binade.
    """
    chosen_exponent = int(chosen_exponent)
    if chosen_exponent <= -fpbits.EXPONENT_BIAS + 1:
        raise ExponentTooSmallForIEEE(
            f"exponent {chosen_exponent} at or below the normal range")
    if chosen_exponent < enclosing_exponent(params):
        raise ExponentTooSmall(
            f"exponent {chosen_exponent} below enclosing exponent "
            f"{enclosing_exponent(params)}")
    scale = _data_scale_exponent(params)
    if scale is not None and scale > chosen_exponent:
        raise ExponentTooSmall(
            f"binade {chosen_exponent} is finer than the unbiased output scale "
            f"(2**{scale}); bias rounding could not keep the interval inside it")
    try:
        top = math.ldexp(1.0, chosen_exponent + 1)
        two_ulp = math.ldexp(1.0, chosen_exponent - fpbits.MANTISSA_BITS + 1)
    except OverflowError as exc:
        raise OverflowingBias(f"2**{chosen_exponent + 1} overflows") from exc
    if not math.isfinite(top):
        raise OverflowingBias(f"2**{chosen_exponent + 1} overflows")
    return top - two_ulp - params.center - params.half_span


def _data_scale_exponent(params: MechanismParams) -> int | None:
    """Binade of the largest unbiased output magnitude, None if subnormal.

    A target binade below this would make every bias-arithmetic rounding
    coarser than the binade's own ULP, so the two-ULP safety margin of the
    bias formula could not absorb them.
    """
    magnitude = max(abs(params.lo_unbiased), abs(params.hi_unbiased))
    try:
        return fpbits.exponent_region(magnitude)
    except SubnormalInput:
        return None


def gamma_min(params: MechanismParams, chosen_exponent: int) -> int:
    """Guaranteed number of shared leading bits per sample under the plan.

    Sign and exponent are always shared; of the 52 mantissa bits, only the
    trailing ceil(log2(2C + 3 ULP)) - e + 52 can differ across the interval.
    """
    chosen_exponent = int(chosen_exponent)
    if chosen_exponent < enclosing_exponent(params):
        raise ExponentTooSmall(
            f"exponent {chosen_exponent} below enclosing exponent "
            f"{enclosing_exponent(params)}")
    region_ulp = math.ldexp(1.0, chosen_exponent - fpbits.MANTISSA_BITS)
    changing = ceil_log2(2.0 * params.half_span + 3.0 * region_ulp)
    return SIGN_AND_EXPONENT_BITS + chosen_exponent - changing


def transmission_ratio(gamma: int) -> float:
    """Fraction of bits still transmitted when gamma leading bits are implied."""
    return 1.0 - gamma / 64.0


def minimal_vulnerability_free_exponent(params: MechanismParams) -> int:
    """Smallest exponent that is both reachability-safe and plannable.

    Usually the vulnerability exponent itself; larger when the data scale
    forces a coarser binade.
    """
    e = vulnerability_exponent(params)
    scale = _data_scale_exponent(params)
    if scale is not None:
        e = max(e, scale)
    return e


def finite_precision_estimate(params: MechanismParams) -> float:
    """Relative distortion the bias rounding inflicts on the output endpoints.

    Each unbiased endpoint is pushed through the same add-bias /
    subtract-bias arithmetic the sampler uses; the estimate is the mean of
    the two relative round-trip errors. Endpoints sitting exactly at zero
    are skipped (their relative error is undefined); if both are zero the
    estimate does not exist.
    """
    ratios = []
    for edge, stored in ((params.lo_unbiased, params.out_min),
                         (params.hi_unbiased, params.out_max)):
        recovered = stored - params.bias
        if edge != 0.0:
            ratios.append((edge - recovered) / edge)
    if not ratios:
        raise ZeroDenominator("both unbiased output endpoints are zero")
    return math.fsum(ratios) / len(ratios)


@dataclass(frozen=True)
class AbarPlan:
    """A chosen exponent region with its bias and all derived guarantees."""

    epsilon: float
    center: float
    half_range: float
    chosen_exponent: int
    abar: float
    enclosing_exponent: int
    vulnerability_exponent: int
    gamma_min: int
    tr: float
    f_estimate: float
    vulnerability_free: bool

    def params(self) -> MechanismParams:
        """Mechanism parameters carrying this plan's bias."""
        return derive_params(self.epsilon, self.center, self.half_range, self.abar)

    def to_text(self) -> str:
        """Serialize as the flat key-value block shared with the CLI."""
        lines = [
            f"epsilon = {self.epsilon!r}",
            f"center = {self.center!r}",
            f"half_range = {self.half_range!r}",
            f"exponent = {self.chosen_exponent}",
            f"abar_hex = 0x{fpbits.float_to_bits(self.abar):016x}",
            f"gamma_min = {self.gamma_min}",
            f"# abar = {self.abar!r}",
            f"# tr = {self.tr!r}",
            f"# f_estimate = {self.f_estimate!r}",
            f"# enclosing_exponent = {self.enclosing_exponent}",
            f"# vulnerability_exponent = {self.vulnerability_exponent}",
            f"# vulnerability_free = {str(self.vulnerability_free).lower()}",
        ]
        return "\n".join(lines) + "\n"


def rebuild_plan(epsilon: float, center: float, half_range: float,
                 chosen_exponent: int, abar: float,
                 expected_gamma: int | None = None) -> AbarPlan:
    """Reassemble a plan from stored fields, recomputing the derived ones.

    ``abar`` is taken verbatim (it travels as a bit pattern precisely so
    that sensor and collector agree bit-for-bit); ``expected_gamma``, when
    given, must match the recomputed guarantee.
    """
    base = derive_params(epsilon, center, half_range, 0.0)
    gamma = gamma_min(base, chosen_exponent)
    if expected_gamma is not None and gamma != expected_gamma:
        raise InvalidPlan(
            f"stored gamma_min {expected_gamma} != recomputed {gamma}")
    biased = derive_params(epsilon, center, half_range, abar)
    e_vul = vulnerability_exponent(base)
    return AbarPlan(
        epsilon=base.epsilon,
        center=base.center,
        half_range=base.half_range,
        chosen_exponent=int(chosen_exponent),
        abar=float(abar),
        enclosing_exponent=enclosing_exponent(base),
        vulnerability_exponent=e_vul,
        gamma_min=gamma,
        tr=transmission_ratio(gamma),
        f_estimate=finite_precision_estimate(biased),
        vulnerability_free=int(chosen_exponent) >= e_vul,
    )


def plan_from_text(text: str) -> AbarPlan:
    """Parse the key-value block produced by :meth:`AbarPlan.to_text`."""
    fields: dict[str, str] = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidPlan(f"not a key = value line: {raw!r}")
        key, _, value = line.partition("=")
        fields[key.strip()] = value.strip()
    try:
        epsilon = float(fields["epsilon"])
        center = float(fields["center"])
        half_range = float(fields["half_range"])
        exponent = int(fields["exponent"])
        abar = fpbits.bits_to_float(int(fields["abar_hex"], 16))
        gamma = int(fields["gamma_min"]) if "gamma_min" in fields else None
    except KeyError as exc:
        raise InvalidPlan(f"missing plan field: {exc}") from exc
    except ValueError as exc:
        raise InvalidPlan(f"malformed plan field: {exc}") from exc
    return rebuild_plan(epsilon, center, half_range, exponent, abar,
                        expected_gamma=gamma)


def plan(params: MechanismParams, target_exponent: int | None = None,
         max_f: float = DEFAULT_MAX_F) -> AbarPlan:
    """Produce a bias plan.

    With ``target_exponent`` the caller pins the binade (it must at least
    enclose the output interval). Otherwise the planner picks the *largest*
    exponent at or above the vulnerability threshold whose finite-precision
    estimate stays within ``max_f`` -- larger binades share more mantissa
    bits, so bigger is better until rounding starts to bite.
    """
    e_enc = enclosing_exponent(params)
    e_vul = vulnerability_exponent(params)

    if target_exponent is not None:
        chosen = int(target_exponent)
        abar = abar_for(params, chosen)  # validates against e_enc
    else:
        chosen = None
        for e in range(e_vul, _MAX_EXPONENT + 1):
            try:
                candidate = abar_for(params, e)
                biased = derive_params(params.epsilon, params.center,
                                       params.half_range, candidate)
                estimate = finite_precision_estimate(biased)
            except ExponentTooSmall:
                continue  # binade finer than the data scale; try coarser ones
            except (OverflowingBias, ZeroDenominator):
                break
            if abs(estimate) <= max_f:
                chosen = e
        if chosen is None:
            raise NoFeasibleExponent(
                f"no exponent >= {e_vul} keeps |f_estimate| <= {max_f!r}")
        abar = abar_for(params, chosen)

    plan_ = rebuild_plan(params.epsilon, params.center, params.half_range,
                         chosen, abar)
    _check_containment(plan_)
    return plan_


def _check_containment(plan_: AbarPlan) -> None:
    """Both output endpoints must really live in the chosen binade."""
    biased = plan_.params()
    for edge in (biased.out_min, biased.out_max):
        if fpbits.exponent_region(edge) != plan_.chosen_exponent:
            raise InvalidPlan(
                f"output endpoint {edge!r} escapes binade {plan_.chosen_exponent}")
