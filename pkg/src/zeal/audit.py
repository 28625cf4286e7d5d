"""Reachability audit of inverse-CDF sampling.

Inverse-CDF sampling maps the finite grid of representable cumulative
probabilities through three affine pieces. Where a piece's slope times the
probability ULP exceeds the output ULP, consecutive probabilities skip over
representable outputs: those outputs are *holes*, unreachable by sampling.
Because the piece edges move with the input reading, hole patterns can
differ between readings, and a sample landing in another reading's hole
identifies its source -- a privacy break no density argument sees.

Scanning all 2^62 probabilities is out of reach, so the auditor is
window-based, with windows placed adversarially: around the segment edges,
over the output region with the smallest ULP, and at probabilities just
below 1.0 where the probability ULP is largest. The scans drive the *real*
sampler, so whatever rounding it does is exactly what gets audited. Within
one segment the sampler is monotone, which makes absence of a value
certifiable by bit-level binary search.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import fpbits
from .errors import InvalidProbability, WindowTooLarge
from .mechanism import (
    MechanismParams,
    breakpoints,
    cdf,
    inverse_cdf,
    perturb_array,
    segment_masses,
)

MAX_WINDOW = 1 << 20
DEFAULT_WINDOW = 1 << 16
_HOLE_SAMPLE_CAP = 4096

LEFT_FLANK = "left-flank"
MIDDLE = "middle"
RIGHT_FLANK = "right-flank"

_ONE_BITS = fpbits.float_to_bits(1.0)


@dataclass(frozen=True)
class ReachabilityWindow:
    """Image of one contiguous run of representable cumulative probabilities.

    ``hole_count`` counts every representable double between the image's
    extremes that no scanned probability reached; ``holes`` materializes at
    most a capped sample of them (``holes_truncated`` says whether the cap
    hit). Image and holes together cover the whole span exactly.
    """

    segment: str
    pc_first: float
    pc_last: float
    count: int
    image: np.ndarray
    hole_count: int
    holes: tuple[float, ...]
    holes_truncated: bool


@dataclass(frozen=True)
class Witness:
    """A sample value reachable from exactly one of two readings."""

    x_i: float
    x_j: float
    x_star: float
    reachable_from: str  # "x_i" or "x_j"


@dataclass(frozen=True)
class AuditVerdict:
    vulnerable: bool
    witness: Witness | None
    windows_scanned: int


def _classify(params: MechanismParams, x: float, p_c: float) -> str:
    q_flank, q_mid = segment_masses(params, x)
    if p_c < q_flank:
        return LEFT_FLANK
    if p_c <= q_mid:
        return MIDDLE
    return RIGHT_FLANK


def scan_window(params: MechanismParams, x: float, pc_start: float,
                count: int = DEFAULT_WINDOW,
                hole_cap: int = _HOLE_SAMPLE_CAP) -> ReachabilityWindow:
    """Apply the sampler to ``count`` consecutive probabilities from ``pc_start``.

    The window is truncated at the last representable probability below 1.0.
    Hole accounting is exact (bit-pattern arithmetic); only the materialized
    sample of holes is capped.
    """
    if not (0.0 <= pc_start < 1.0):
        raise InvalidProbability(f"pc_start {pc_start!r} outside [0, 1)")
    if count < 1 or count > MAX_WINDOW:
        raise WindowTooLarge(f"count {count} outside [1, {MAX_WINDOW}]")
    start_bits = fpbits.float_to_bits(pc_start)
    count = min(count, _ONE_BITS - start_bits)
    qs = (np.uint64(start_bits) + np.arange(count, dtype=np.uint64)).view(np.float64)
    stars = perturb_array(params, np.full(count, float(x)), qs)

    image = np.unique(stars)
    total_span = fpbits.doubles_between(float(image[0]), float(image[-1]))
    hole_count = total_span - int(image.size)

    holes: list[float] = []
    truncated = False
    if hole_count > 0:
        keys = fpbits.order_keys(image)
        gaps = np.diff(keys) - 1  # misses between consecutive image values
        for idx in np.flatnonzero(gaps > 0):
            v = float(image[idx])
            hi = float(image[idx + 1])
            v = math.nextafter(v, math.inf)
            while v < hi:
                if len(holes) >= hole_cap:
                    truncated = True
                    break
                holes.append(v)
                v = math.nextafter(v, math.inf)
            if truncated:
                break

    return ReachabilityWindow(
        segment=_classify(params, x, pc_start),
        pc_first=float(qs[0]),
        pc_last=float(qs[-1]),
        count=int(count),
        image=image,
        hole_count=hole_count,
        holes=tuple(holes),
        holes_truncated=truncated,
    )


def slope_condition(params: MechanismParams, x: float, segment: str) -> bool:
    """Worst-case per-ULP density check for one segment.

    True iff the steepest probability step of the segment (slope times the
    maximal probability ULP, 2**-53) cannot exceed the smallest output ULP
    over the segment's output span -- i.e. the segment cannot skip any
    representable output.
    """
    bp = breakpoints(params, x)
    if segment == LEFT_FLANK:
        span = (params.out_min, bp.l)
        slope = params.exp_eps / params.p
    elif segment == MIDDLE:
        span = (bp.l, bp.r)
        slope = 1.0 / params.p
    elif segment == RIGHT_FLANK:
        span = (bp.r, params.out_max)
        slope = params.exp_eps / params.p
    else:
        raise ValueError(f"unknown segment {segment!r}")
    lo, hi = min(span), max(span)
    if lo <= 0.0 <= hi:
        min_ulp = math.ulp(0.0)
    else:
        min_ulp = math.ulp(min(abs(lo), abs(hi)))
    return 2.0 ** -53 * slope <= min_ulp


def _segment_q_ranges(params: MechanismParams, x: float) -> list[tuple[int, int]]:
    """Bit-pattern ranges of [0,1) covered by each monotone sampler piece."""
    q_flank, q_mid = segment_masses(params, x)
    b_flank = min(fpbits.float_to_bits(q_flank), _ONE_BITS - 1)
    b_mid = min(fpbits.float_to_bits(q_mid), _ONE_BITS - 1)
    ranges = []
    if b_flank > 0:
        ranges.append((0, b_flank - 1))          # left flank: q < q_flank
    ranges.append((b_flank, b_mid))              # plateau: q_flank <= q <= q_mid
    if b_mid + 1 <= _ONE_BITS - 1:
        ranges.append((b_mid + 1, _ONE_BITS - 1))  # right flank
    return ranges


_SWEEP_GUARD = 64  # probabilities checked around a failed search's frontier


def reachable(params: MechanismParams, x: float, target: float,
              pc_lo: float = 0.0, pc_hi: float | None = None) -> float | None:
    """Probability mapping to ``target``, or None if none exists.

    Searches each affine piece by binary search over the raw bit patterns of
    the probability axis (the sampler is monotone within a piece up to a
    sub-ULP compensation wiggle), then sweeps a small guard band around the
    failed search's frontier so that a None answer certifies unreachability
    over the whole searched range.
    """
    lo_bits = fpbits.float_to_bits(pc_lo)
    hi_bits = _ONE_BITS - 1 if pc_hi is None else fpbits.float_to_bits(pc_hi)
    for seg_lo, seg_hi in _segment_q_ranges(params, x):
        lo = max(seg_lo, lo_bits)
        hi = min(seg_hi, hi_bits)
        first, last = lo, hi
        if lo > hi:
            continue
        while lo <= hi:
            mid = (lo + hi) // 2
            value = inverse_cdf(params, x, fpbits.bits_to_float(mid))
            if value < target:
                lo = mid + 1
            elif value > target:
                hi = mid - 1
            else:
                return fpbits.bits_to_float(mid)
        for bits in range(max(first, lo - _SWEEP_GUARD),
                          min(last, lo + _SWEEP_GUARD) + 1):
            q = fpbits.bits_to_float(bits)
            if inverse_cdf(params, x, q) == target:
                return q
    return None


def standard_windows(params: MechanismParams, x: float,
                     count: int = DEFAULT_WINDOW) -> list[float]:
    """Adversarial window starts for one reading (deduplicated, ordered).

    Covers: the output region of smallest ULP (worst output granularity),
    probabilities just below 1.0 (worst probability granularity), both
    segment edges, and the start of the axis.
    """
    starts: list[int] = []

    def add(center_bits: int, centered: bool = True):
        start = center_bits - (count // 2 if centered else 0)
        start = max(0, min(start, _ONE_BITS - count))
        starts.append(start)

    # smallest-ULP output region: the in-range value closest to zero
    if params.out_min <= 0.0 <= params.out_max:
        v_small = 0.0
    elif abs(params.out_min) < abs(params.out_max):
        v_small = params.out_min
    else:
        v_small = params.out_max
    add(fpbits.float_to_bits(cdf(params, x, v_small)))

    add(_ONE_BITS - count, centered=False)  # just below 1.0
    q_flank, q_mid = segment_masses(params, x)
    add(fpbits.float_to_bits(q_flank))
    add(fpbits.float_to_bits(q_mid))
    add(0, centered=False)                  # start of the axis

    unique: list[int] = []
    for s in starts:
        if s not in unique:
            unique.append(s)
    return [fpbits.bits_to_float(s) for s in unique]


def collect_windows(params: MechanismParams, x: float,
                    count: int = DEFAULT_WINDOW) -> list[ReachabilityWindow]:
    """Scan every standard adversarial window for one reading."""
    return [scan_window(params, x, start, count)
            for start in standard_windows(params, x, count)]


def find_witness(params: MechanismParams, x_i: float, x_j: float,
                 count: int = DEFAULT_WINDOW,
                 candidates_per_window: int = 256) -> AuditVerdict:
    """Hunt for a sample value reachable from exactly one of two readings.

    Scans the standard windows of each reading and, for a spread of image
    values, certifies reachability from the other reading by global binary
    search. Both readings share the same output bounds and a everywhere-
    positive density, so any unreachable image value is a witness.
    """
    if x_i == x_j:
        return AuditVerdict(False, None, 0)
    windows_scanned = 0
    for mine, other, label in ((x_i, x_j, "x_i"), (x_j, x_i, "x_j")):
        for start in standard_windows(params, mine, count):
            window = scan_window(params, mine, start, count)
            windows_scanned += 1
            image = window.image
            step = max(1, image.size // candidates_per_window)
            for v in image[::step]:
                v = float(v)
                if reachable(params, other, v) is None:
                    return AuditVerdict(
                        True, Witness(x_i, x_j, v, label), windows_scanned)
    return AuditVerdict(False, None, windows_scanned)


def render_report(params: MechanismParams, x_i: float, x_j: float,
                  verdict: AuditVerdict,
                  windows: dict[str, list[ReachabilityWindow]]) -> str:
    """Plain-text audit report (parameters, per-window holes, witness)."""
    lines = [
        "reachability audit",
        f"epsilon = {params.epsilon!r}",
        f"center = {params.center!r}",
        f"half_range = {params.half_range!r}",
        f"abar = 0x{fpbits.float_to_bits(params.bias):016x} ({params.bias!r})",
        f"x_i = {x_i!r}",
        f"x_j = {x_j!r}",
    ]
    for label, wins in windows.items():
        lines.append(f"windows[{label}]:")
        for w in wins:
            marker = "+" if w.holes_truncated else ""
            lines.append(
                f"  {w.segment:<11s} pc=[0x{fpbits.float_to_bits(w.pc_first):016x},"
                f" 0x{fpbits.float_to_bits(w.pc_last):016x}] count={w.count}"
                f" holes={w.hole_count}{marker}")
    lines.append(f"windows_scanned = {verdict.windows_scanned}")
    lines.append(f"vulnerable = {str(verdict.vulnerable).lower()}")
    if verdict.witness is not None:
        w = verdict.witness
        lines.append(
            f"witness: x_star = 0x{fpbits.float_to_bits(w.x_star):016x}"
            f" ({w.x_star!r}) reachable from {w.reachable_from} only")
    return "\n".join(lines) + "\n"
