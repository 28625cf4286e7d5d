import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from zeal import codec, fpbits, planner
from zeal.codec import MAGIC, VERSION, WireFrame, decode, encode, from_bytes, shared_prefix, to_bytes
from zeal.errors import CorruptFrame, SampleOutsidePlan
from zeal.mechanism import PrivatizedDataset, derive_params, perturb_dataset, uniform_stream


@pytest.fixture
def plan():
    base = derive_params(1.0, 10.0, 5.0)
    return planner.plan(base, target_exponent=6)


@pytest.fixture
def privatized(plan):
    params = plan.params()
    rng = uniform_stream(8)
    data = rng.uniform(params.domain_min, params.domain_max, 1000)
    return perturb_dataset(params, data, seed=88)


def test_shared_prefix_value(plan):
    prefix, gamma = shared_prefix(plan)
    assert gamma == 12
    # sign 0 followed by the 11-bit exponent field 6 + 1023 = 1029
    assert prefix == 0b0_10000000101
    assert prefix == 1029


def test_prefix_matches_every_sample(plan, privatized):
    prefix, gamma = shared_prefix(plan)
    for v in privatized.samples[:200].tolist():
        assert fpbits.float_to_bits(v) >> (64 - gamma) == prefix


def test_roundtrip_is_bit_exact(plan, privatized):
    back = decode(encode(plan, privatized))
    assert np.array_equal(privatized.samples.view(np.uint64),
                          back.samples.view(np.uint64))


def test_roundtrip_large(plan):
    params = plan.params()
    rng = uniform_stream(9)
    data = rng.uniform(params.domain_min, params.domain_max, 100_000)
    priv = perturb_dataset(params, data, seed=99)
    frame = encode(plan, priv)
    assert len(frame.payload) == (100_000 * 52 + 7) // 8
    back = decode(frame)
    assert np.array_equal(priv.samples.view(np.uint64),
                          back.samples.view(np.uint64))


def test_size_law_matches_transmission_ratio(plan, privatized):
    frame = encode(plan, privatized)
    assert frame.payload_bits / (64 * frame.n) == plan.tr == 0.8125
    assert len(frame.payload) == (frame.n * (64 - plan.gamma_min) + 7) // 8


def test_empty_dataset_gives_header_only_frame(plan):
    priv = PrivatizedDataset(samples=np.empty(0), params=plan.params())
    frame = encode(plan, priv)
    assert frame.payload == b""
    blob = to_bytes(frame)
    assert from_bytes(blob).n == 0
    assert decode(from_bytes(blob)).n == 0


def test_out_of_plan_sample_is_a_hard_error(plan, privatized):
    samples = privatized.samples.copy()
    samples[3] = 1.0  # wrong binade entirely
    bad = PrivatizedDataset(samples=samples, params=privatized.params)
    with pytest.raises(SampleOutsidePlan) as info:
        encode(plan, bad)
    assert info.value.index == 3


def test_wire_layout(plan, privatized):
    frame = encode(plan, privatized)
    blob = to_bytes(frame)
    assert blob[:4] == MAGIC == b"ZEAL"
    assert blob[4] == VERSION == 1
    header = blob[5:61]
    assert header[:8] == fpbits.float_to_bits(1.0).to_bytes(8, "big")
    assert header[8:16] == fpbits.float_to_bits(10.0).to_bytes(8, "big")
    assert header[16:24] == fpbits.float_to_bits(5.0).to_bytes(8, "big")
    assert header[24:32] == fpbits.float_to_bits(plan.abar).to_bytes(8, "big")
    assert int.from_bytes(header[32:40], "big", signed=True) == 6
    assert int.from_bytes(header[40:48], "big") == 12
    assert int.from_bytes(header[48:56], "big") == frame.n
    assert blob[61:] == frame.payload


def test_serialized_roundtrip(plan, privatized):
    frame = encode(plan, privatized)
    again = from_bytes(to_bytes(frame))
    assert again.plan == frame.plan
    assert again.payload == frame.payload
    assert np.array_equal(decode(again).samples, privatized.samples)


def test_bad_magic_version_and_length(plan, privatized):
    blob = bytearray(to_bytes(encode(plan, privatized)))
    with pytest.raises(CorruptFrame):
        from_bytes(bytes(blob[:40]))
    wrong_magic = b"NOPE" + bytes(blob[4:])
    with pytest.raises(CorruptFrame):
        from_bytes(wrong_magic)
    wrong_version = bytes(blob[:4]) + b"\x02" + bytes(blob[5:])
    with pytest.raises(CorruptFrame):
        from_bytes(wrong_version)
    with pytest.raises(CorruptFrame):
        from_bytes(bytes(blob[:-1]))  # payload short by one byte


def test_tampered_gamma_is_rejected(plan, privatized):
    blob = bytearray(to_bytes(encode(plan, privatized)))
    blob[47] ^= 0x01  # low byte of the gamma field
    with pytest.raises(CorruptFrame):
        from_bytes(bytes(blob))


def test_tampered_payload_bit_stays_in_the_binade(plan, privatized):
    frame = encode(plan, privatized)
    payload = bytearray(frame.payload)
    payload[10] ^= 0x40
    tampered = WireFrame(plan=frame.plan, n=frame.n, payload=bytes(payload))
    decoded = decode(tampered)
    diff = np.flatnonzero(decoded.samples != privatized.samples)
    assert diff.size == 1
    v = float(decoded.samples[diff[0]])
    assert fpbits.exponent_region(v) == plan.chosen_exponent


@given(st.lists(st.integers(0, (1 << 52) - 1), min_size=1, max_size=40))
@settings(max_examples=100)
def test_lossless_on_arbitrary_in_plan_patterns(low_bits):
    base = derive_params(1.0, 10.0, 5.0)
    plan = planner.plan(base, target_exponent=6)
    prefix, gamma = shared_prefix(plan)
    patterns = [(prefix << (64 - gamma)) | bits for bits in low_bits]
    samples = np.array([fpbits.bits_to_float(p) for p in patterns])
    priv = PrivatizedDataset(samples=samples, params=plan.params())
    back = decode(encode(plan, priv))
    assert [fpbits.float_to_bits(v) for v in back.samples.tolist()] == patterns
