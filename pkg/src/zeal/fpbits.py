"""Bit-exact anatomy of IEEE-754 double precision values.

A double is one sign bit, 11 biased exponent bits and 52 mantissa bits;
a finite normal value decodes as ``(-1)**sign * 2**(E-1023) * (1 + M/2**52)``.
Everything in this module works on that representation directly so that
results are exact, never rounded through ``log2``/``frexp`` float paths
where an off-by-one at a power of two could creep in.

Negative zero decomposes as (sign=1, E=0, M=0). Shared-bit profiles are the
literal bitwise intersection of the patterns; datasets mixing signs simply
share fewer positions, no interpretation is applied.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .errors import EmptyDataset, NonFiniteInput, NonPositiveInput, SubnormalInput

MANTISSA_BITS = 52
EXPONENT_BITS = 11
EXPONENT_BIAS = 1023
MIN_NORMAL_EXPONENT = -1022

_U64_MASK = (1 << 64) - 1
_SIGN_MASK = 1 << 63
_MANTISSA_MASK = (1 << MANTISSA_BITS) - 1
_EXPONENT_FIELD_MAX = (1 << EXPONENT_BITS) - 1  # all-ones: inf/NaN

# Round-to-nearest-even probe: 2**-53 is exactly half an ULP of 1.0 and must
# round down to the even neighbour. Everything downstream assumes this mode.
if 1.0 + 2.0 ** -53 != 1.0 or 1.0 + 2.0 ** -52 == 1.0:
    raise RuntimeError("float rounding is not round-to-nearest-even")


def float_to_bits(x: float) -> int:
    """Raw 64-bit pattern of ``x`` as an unsigned int."""
    return struct.unpack("<Q", struct.pack("<d", x))[0]


def bits_to_float(pattern: int) -> float:
    """Inverse of :func:`float_to_bits`."""
    return struct.unpack("<d", struct.pack("<Q", pattern & _U64_MASK))[0]


@dataclass(frozen=True)
class FloatAnatomy:
    """Sign/exponent/mantissa split of one double.

    ``unbiased_exponent`` is ``biased_exponent - 1023`` for normal values and
    pinned to -1022 for subnormals (which carry ``subnormal=True`` and an
    implicit leading 0 instead of 1).
    """

    sign: int
    biased_exponent: int
    mantissa: int
    unbiased_exponent: int
    subnormal: bool = False

    @property
    def bits(self) -> int:
        return (self.sign << 63) | (self.biased_exponent << MANTISSA_BITS) | self.mantissa


def decompose(x: float) -> FloatAnatomy:
    """Split a finite double into sign, exponent and mantissa fields.

    Raises ``NonFiniteInput`` for NaN and infinities. Subnormals (and zeros)
    are decomposed but flagged, with the unbiased exponent reported as -1022.
    """
    if not math.isfinite(x):
        raise NonFiniteInput(f"cannot decompose {x!r}")
    pattern = float_to_bits(x)
    sign = pattern >> 63
    biased = (pattern >> MANTISSA_BITS) & _EXPONENT_FIELD_MAX
    mantissa = pattern & _MANTISSA_MASK
    if biased == 0:
        return FloatAnatomy(sign, biased, mantissa, MIN_NORMAL_EXPONENT, subnormal=True)
    return FloatAnatomy(sign, biased, mantissa, biased - EXPONENT_BIAS)


def recompose(anatomy: FloatAnatomy) -> float:
    """Rebuild the double from its fields; exact inverse of :func:`decompose`."""
    if anatomy.subnormal:
        magnitude = math.ldexp(anatomy.mantissa, MIN_NORMAL_EXPONENT - MANTISSA_BITS)
    else:
        magnitude = math.ldexp(1.0 + anatomy.mantissa * 2.0 ** -MANTISSA_BITS,
                               anatomy.unbiased_exponent)
    return -magnitude if anatomy.sign else magnitude


def ulp(x: float) -> float:
    """Gap to the next representable double of the region ``|x|`` opens.

    For a normal ``x`` with unbiased exponent e this is ``2**(e-52)``; exact
    powers of two get the ULP of the half-open region [2**e, 2**(e+1)) they
    open, i.e. ``ulp(2.0**k) == 2.0**(k-52)``.
    """
    if not math.isfinite(x):
        raise NonFiniteInput(f"ulp of {x!r}")
    anatomy = decompose(x)
    if anatomy.subnormal:
        raise SubnormalInput(f"ulp of subnormal/zero {x!r}")
    return math.ldexp(1.0, anatomy.unbiased_exponent - MANTISSA_BITS)


def exponent_region(x: float) -> int:
    """The integer e with ``2**e <= x < 2**(e+1)`` for positive normal x."""
    if isinstance(x, float) and math.isnan(x):
        raise NonFiniteInput(f"exponent region of {x!r}")
    if x <= 0.0:
        raise NonPositiveInput(f"exponent region of {x!r}")
    if not math.isfinite(x):
        raise NonFiniteInput(f"exponent region of {x!r}")
    anatomy = decompose(x)
    if anatomy.subnormal:
        raise SubnormalInput(f"exponent region of subnormal {x!r}")
    return anatomy.unbiased_exponent


@dataclass(frozen=True)
class SharedBitProfile:
    """Which of the 64 bit positions agree across a whole dataset.

    ``shared_mask`` has bit j set iff position j (bit 63 = sign) is identical
    in every sample; ``shared_prefix_len`` is the length of the contiguous
    run of shared positions starting at the sign bit.
    """

    shared_mask: int
    shared_count: int
    shared_prefix_len: int


def shared_bits(data) -> SharedBitProfile:
    """Bitwise-intersection profile of a non-empty float dataset."""
    arr = np.ascontiguousarray(data, dtype="<f8")
    if arr.size == 0:
        raise EmptyDataset("shared_bits of an empty dataset")
    patterns = arr.view(np.uint64).reshape(-1)
    conj = int(np.bitwise_and.reduce(patterns))
    disj = int(np.bitwise_or.reduce(patterns))
    mask = ~(conj ^ disj) & _U64_MASK
    count = mask.bit_count()
    prefix = 0
    probe = 1 << 63
    while probe and (mask & probe):
        prefix += 1
        probe >>= 1
    return SharedBitProfile(mask, count, prefix)


def order_key(x: float) -> int:
    """Monotone integer key over finite doubles.

    Consecutive representable doubles map to consecutive integers, so
    ``order_key(b) - order_key(a)`` counts the steps between two values.
    +0.0 and -0.0 share key 0.
    """
    u = float_to_bits(x)
    if u & _SIGN_MASK:
        return _SIGN_MASK - u
    return u


def order_keys(values: np.ndarray) -> np.ndarray:
    """Vectorised :func:`order_key` (int64; magnitudes stay in range)."""
    u = np.ascontiguousarray(values, dtype="<f8").view(np.uint64)
    negative = (u >> np.uint64(63)).astype(bool)
    magnitude = np.where(negative, u - np.uint64(_SIGN_MASK), u).astype(np.int64)
    return np.where(negative, -magnitude, magnitude)


def doubles_between(lo: float, hi: float) -> int:
    """Count of representable doubles in the closed interval [lo, hi]."""
    if hi < lo:
        return 0
    return order_key(hi) - order_key(lo) + 1
