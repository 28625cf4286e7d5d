"""Truncated wire encoding of privatized samples.

Under a bias plan every sample shares its top ``gamma_min`` bits, whose
value is known a priori from the plan alone. Sensors therefore transmit
only the trailing ``64 - gamma_min`` bits per sample, MSB-first, samples
concatenated, zero-padded to a byte boundary; the collector reattaches the
prefix and recovers the exact doubles.

The frame layout (magic, version, fixed big-endian header fields carrying
the plan, then the payload) is documented in docs/wire-format.md. The bias
travels as its raw 64-bit pattern so sensor and collector agree bit-for-bit.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import fpbits
from .errors import CorruptFrame, InvalidPlan, SampleOutsidePlan
from .mechanism import PrivatizedDataset
from .planner import AbarPlan, rebuild_plan

MAGIC = b"ZEAL"
VERSION = 1
_HEADER = struct.Struct(">QQQQqQQ")  # epsilon, center, half_range, abar, exponent, gamma, n


@dataclass(frozen=True)
class WireFrame:
    """A plan header plus the packed payload for ``n`` samples."""

    plan: AbarPlan
    n: int
    payload: bytes

    @property
    def payload_bits(self) -> int:
        return self.n * (64 - self.plan.gamma_min)


def shared_prefix(plan: AbarPlan) -> tuple[int, int]:
    """The a-priori known top bits: (prefix value, prefix length).

    Computed from the plan's output bounds; both bounds must agree on all
    ``gamma_min`` leading bits or the plan is inconsistent.
    """
    gamma = plan.gamma_min
    if not 0 <= gamma <= 64:
        raise InvalidPlan(f"gamma_min {gamma} outside [0, 64]")
    params = plan.params()
    hi_bits = fpbits.float_to_bits(params.out_max)
    lo_bits = fpbits.float_to_bits(params.out_min)
    if gamma == 0:
        return 0, 0
    shift = 64 - gamma
    prefix = hi_bits >> shift
    if lo_bits >> shift != prefix:
        raise InvalidPlan(
            f"output bounds disagree in the top {gamma} bits "
            f"(0x{lo_bits:016x} vs 0x{hi_bits:016x})")
    return prefix, gamma


def _bit_matrix(samples: np.ndarray) -> np.ndarray:
    """n x 64 matrix of sample bits, MSB first."""
    raw = np.frombuffer(samples.astype(">f8").tobytes(), dtype=np.uint8)
    return np.unpackbits(raw).reshape(-1, 64)


def encode(plan: AbarPlan, privatized: PrivatizedDataset) -> WireFrame:
    """Pack a privatized dataset into a frame, verifying the shared prefix.

    A sample whose top bits differ from the plan's prefix signals a planning
    or perturbation bug and is a hard error; silently clamping would corrupt
    the decode.
    """
    prefix, gamma = shared_prefix(plan)
    samples = np.ascontiguousarray(privatized.samples, dtype=np.float64)
    n = int(samples.size)
    if n == 0:
        return WireFrame(plan=plan, n=0, payload=b"")
    if gamma > 0:
        tops = samples.view(np.uint64) >> np.uint64(64 - gamma)
        bad = np.flatnonzero(tops != np.uint64(prefix))
        if bad.size:
            raise SampleOutsidePlan(int(bad[0]))
    bits = _bit_matrix(samples)[:, gamma:]
    payload = np.packbits(bits.reshape(-1)).tobytes()
    return WireFrame(plan=plan, n=n, payload=payload)


def decode(frame: WireFrame) -> PrivatizedDataset:
    """Exact inverse of :func:`encode`."""
    prefix, gamma = shared_prefix(frame.plan)
    width = 64 - gamma
    n = frame.n
    params = frame.plan.params()
    if n == 0:
        return PrivatizedDataset(samples=np.empty(0, dtype=np.float64), params=params)
    expected_bytes = (n * width + 7) // 8
    if len(frame.payload) != expected_bytes:
        raise CorruptFrame(
            f"payload is {len(frame.payload)} bytes, expected {expected_bytes}")
    full = np.empty((n, 64), dtype=np.uint8)
    if gamma > 0:
        prefix_bits = np.unpackbits(
            np.frombuffer(prefix.to_bytes(8, "big"), dtype=np.uint8))[-gamma:]
        full[:, :gamma] = prefix_bits
    if width > 0:
        stream = np.unpackbits(np.frombuffer(frame.payload, dtype=np.uint8),
                               count=n * width)
        full[:, gamma:] = stream.reshape(n, width)
    raw = np.packbits(full.reshape(-1)).tobytes()
    samples = np.frombuffer(raw, dtype=">f8").astype(np.float64)
    return PrivatizedDataset(samples=samples, params=params)


def to_bytes(frame: WireFrame) -> bytes:
    """Serialize a frame: magic, version byte, fixed header, payload."""
    plan = frame.plan
    header = _HEADER.pack(
        fpbits.float_to_bits(plan.epsilon),
        fpbits.float_to_bits(plan.center),
        fpbits.float_to_bits(plan.half_range),
        fpbits.float_to_bits(plan.abar),
        plan.chosen_exponent,
        plan.gamma_min,
        frame.n,
    )
    return MAGIC + bytes([VERSION]) + header + frame.payload


def from_bytes(blob: bytes) -> WireFrame:
    """Parse and validate a serialized frame.

    The header's gamma must match the value recomputed from the header's own
    parameters; a mismatch means the frame (or the encoder) is broken.
    """
    if len(blob) < len(MAGIC) + 1 + _HEADER.size:
        raise CorruptFrame(f"frame too short ({len(blob)} bytes)")
    if blob[:4] != MAGIC:
        raise CorruptFrame(f"bad magic {blob[:4]!r}")
    if blob[4] != VERSION:
        raise CorruptFrame(f"unsupported version {blob[4]}")
    eps_b, center_b, half_b, abar_b, exponent, gamma, n = _HEADER.unpack(
        blob[5:5 + _HEADER.size])
    try:
        plan = rebuild_plan(
            fpbits.bits_to_float(eps_b),
            fpbits.bits_to_float(center_b),
            fpbits.bits_to_float(half_b),
            exponent,
            fpbits.bits_to_float(abar_b),
            expected_gamma=gamma,
        )
    except InvalidPlan as exc:
        raise CorruptFrame(f"inconsistent header: {exc}") from exc
    payload = blob[5 + _HEADER.size:]
    expected_bytes = (n * (64 - gamma) + 7) // 8
    if len(payload) != expected_bytes:
        raise CorruptFrame(
            f"payload is {len(payload)} bytes, expected {expected_bytes}")
    return WireFrame(plan=plan, n=n, payload=payload)
