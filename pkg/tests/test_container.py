from __future__ import annotations

import base64
import hashlib
import random
import struct
from dataclasses import replace

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from bb84hybrid import container
from bb84hybrid.container import (
    BASE64_FACTOR,
    ContainerFile,
    ContainerHeader,
    armored_size,
    binary_size,
    from_binary,
    parse,
    predicted_size,
    serialize,
    to_binary,
)
from bb84hybrid.errors import (
    BadMagic,
    BodyDigestMismatch,
    ContainerError,
    InvalidArmor,
    MalformedHeader,
    TruncatedHeader,
    UnsupportedVersion,
)
from bb84hybrid.kdf import KdfParams
from bb84hybrid.signing import SignatureBlock

from . import oracles


def make(body_len: int = 32, *, signed: bool = False, name: str = "f.txt", rng=None) -> ContainerFile:
    rng = rng or random.Random(0)
    body = rng.randbytes(body_len)
    sig = SignatureBlock("dilithium2", rng.randbytes(1312), rng.randbytes(2420)) if signed else SignatureBlock()
    header = ContainerHeader(
        kdf=KdfParams(rng.randbytes(16), rng.randint(1, 200_000)),
        iv=rng.randbytes(16),
        plaintext_length=body_len - rng.randint(1, 16),
        plaintext_sha256=rng.randbytes(32),
        ciphertext_sha256=hashlib.sha256(body).digest(),
        hmac=rng.randbytes(32),
        signature=sig,
        filename_hint=name,
    )
    return ContainerFile(header, body)


def _rewrap(payload: bytes) -> bytes:
    return container.armor(payload)


containers = st.builds(
    lambda blocks, signed, name, seed: make(16 * blocks, signed=signed, name=name, rng=random.Random(seed)),
    st.integers(1, 40),
    st.booleans(),
    st.text(max_size=40).filter(lambda s: len(s.encode("utf-8")) <= 255),
    st.integers(0, 2**32),
)


@settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(containers)
def test_round_trip(c):
    data = serialize(c)
    assert parse(data) == c
    assert serialize(parse(data)) == data


def test_armor_layout():
    data = serialize(make(64))
    lines = data.split(b"\n")
    assert lines[0] == b"-----BEGIN BB84 CONTAINER-----"
    assert lines[-2] == b"-----END BB84 CONTAINER-----" and lines[-1] == b""
    assert all(len(line) <= 76 for line in lines[1:-2])


def test_payload_starts_with_magic_and_version():
    payload = to_binary(make())
    assert payload[:5] == b"BB84\x01"


@pytest.mark.parametrize("offset_frac", [0.0, 0.25, 0.5, 0.99])
def test_bang_in_base64_region(offset_frac):
    data = bytearray(serialize(make(64)))
    start = data.index(b"\n") + 1
    end = data.rindex(b"-----END")
    data[start + int(offset_frac * (end - start - 1))] = ord("!")
    with pytest.raises(InvalidArmor):
        parse(bytes(data))


@pytest.mark.parametrize(
    "mutate",
    [
        lambda d: d.replace(b"-----BEGIN BB84 CONTAINER-----", b"-----BEGIN BB85 CONTAINER-----"),
        lambda d: d.replace(b"-----END BB84 CONTAINER-----", b""),
        lambda d: b"",
        lambda d: b"-----BEGIN BB84 CONTAINER-----\n-----END BB84 CONTAINER-----\n",
        lambda d: d[:40] + d[41:],  # base64 length no longer a multiple of 4
    ],
)
def test_armor_errors(mutate):
    with pytest.raises(InvalidArmor):
        parse(mutate(serialize(make())))


def test_bad_magic():
    payload = b"XX84" + to_binary(make())[4:]
    with pytest.raises(BadMagic):
        parse(_rewrap(payload))


def test_unsupported_version():
    payload = bytearray(to_binary(make()))
    payload[4] = 2
    with pytest.raises(UnsupportedVersion):
        parse(_rewrap(bytes(payload)))


def test_last_ciphertext_byte_flipped():
    payload = bytearray(to_binary(make()))
    payload[-1] ^= 1
    with pytest.raises(BodyDigestMismatch):
        parse(_rewrap(bytes(payload)))


def test_digest_check_can_be_skipped():
    payload = bytearray(to_binary(make()))
    payload[-1] ^= 1
    assert from_binary(bytes(payload), check_digest=False).body[-1] == payload[-1]


@pytest.mark.parametrize("cut", [1, 5, 30, 100, 150])
def test_truncated(cut):
    payload = to_binary(make())
    with pytest.raises(TruncatedHeader):
        from_binary(payload[:cut])


def test_trailing_bytes():
    with pytest.raises(MalformedHeader):
        from_binary(to_binary(make()) + b"\x00")


def test_zero_iterations():
    payload = bytearray(to_binary(make()))
    payload[5:9] = struct.pack(">I", 0)
    with pytest.raises(MalformedHeader):
        from_binary(bytes(payload))


def test_huge_declared_length_does_not_allocate():
    c = make()
    payload = container.encode_header(c.header) + struct.pack(">Q", 2**63) + c.body
    with pytest.raises(TruncatedHeader):
        from_binary(payload)


def test_body_length_must_match_plaintext_length():
    c = make(32)
    bad = ContainerFile(replace(c.header, plaintext_length=100), c.body)
    with pytest.raises(MalformedHeader):
        from_binary(to_binary(bad))


def test_metadata_blanks_tag_and_signature():
    c = make(signed=True)
    meta = container.metadata_bytes(c.header)
    assert c.header.hmac not in meta
    assert c.header.signature.signature not in meta
    assert c.header.ciphertext_sha256 in meta
    assert meta == container.metadata_bytes(replace(c.header, hmac=bytes(32), signature=SignatureBlock()))


@settings(max_examples=200, deadline=None)
@given(st.binary(max_size=4096))
def test_fuzz_binary(data):
    try:
        from_binary(data)
    except ContainerError:
        pass


@settings(max_examples=200, deadline=None)
@given(st.binary(max_size=4096))
def test_fuzz_armored(data):
    try:
        parse(b"-----BEGIN BB84 CONTAINER-----\n" + base64.encodebytes(data) + b"-----END BB84 CONTAINER-----\n")
    except ContainerError:
        pass


class TestSizeModel:
    @pytest.mark.parametrize("n", [0, 1, 15, 16, 17, 1000, 65_537])
    def test_binary_size_exact(self, n):
        c = ContainerFile(replace(make().header, plaintext_length=n, filename_hint="a.bin"), bytes(container.padded_length(n)))
        assert len(to_binary(c)) == binary_size(n, filename_hint="a.bin")

    @pytest.mark.parametrize("n", [0, 1, 2, 3, 56, 57, 58, 1000, 12345])
    def test_armored_size_matches_slow_count(self, n):
        assert armored_size(n) == oracles.armored_length(n)

    def test_signed_size(self):
        c = make(48, signed=True)
        c = ContainerFile(replace(c.header, plaintext_length=40), c.body)
        expected = predicted_size(40, scheme_name="dilithium2", public_key_size=1312, signature_size=2420, filename_hint="f.txt")
        assert len(serialize(c)) == expected

    @pytest.mark.parametrize("n,f,signed", [(0, "", False), (1234, "report.pdf", False), (77, "ü.txt", True)])
    def test_documented_formula(self, n, f, signed):
        # Transcribed from docs/format.md.
        s, pk, sig = ("dilithium2", 1312, 2420) if signed else ("none", 0, 0)
        body = 16 * (n // 16 + 1)
        binary = 168 + len(s) + pk + sig + len(f.encode("utf-8")) + body
        b64 = 4 * -(-binary // 3)
        armored = 31 + b64 + -(-b64 // 76) + 29
        assert armored == predicted_size(n, scheme_name=s, public_key_size=pk, signature_size=sig, filename_hint=f)

    def test_factor(self):
        assert BASE64_FACTOR == pytest.approx(4 / 3 * 77 / 76)

    def test_overhead_monotone(self):
        sizes = [predicted_size(n) for n in range(0, 5000, 7)]
        assert sizes == sorted(sizes)
        ratios = [predicted_size(n) / n for n in (10, 100, 1000, 10**5, 10**7)]
        assert ratios == sorted(ratios, reverse=True)
