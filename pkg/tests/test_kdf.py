from __future__ import annotations

import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bb84hybrid.errors import KeyMaterialError
from bb84hybrid.kdf import KdfParams, bits_to_key_material, derive_key, pbkdf2_sha256
from bb84hybrid.qkd import BitString, generate_random_bits

from . import oracles

# RFC 7914 section 11 PBKDF2-HMAC-SHA256 vectors.
RFC7914 = [
    (b"passwd", b"salt", 1, 64,
     "55ac046e56e3089fec1691c22544b605f94185216dde0465e68b9d57c20dacbc"
     "49ca9cccf179b645991664b39d77ef317c71b845b1e30bd509112041d3a19783"),
    (b"Password", b"NaCl", 80000, 64,
     "4ddcd8f60b98be21830cee5ef22701f9641a4418d04c0414aeff08876b34ab56"
     "a1d425a1225833549adb841b51c9b3176a272bdebba1d078478f62b397f33c8d"),
]

# Computed once with the reference loop in tests/oracles.py, then frozen.
FROZEN_BITS = BitString.from_bytes(bytes.fromhex("c0ffee00" * 4))
FROZEN_SALT = bytes(range(16))
FROZEN_KEY = "9cacc435c1954b40731bdf429fbf5ce0e3d7e60faf12570d6528a89cd22a4c60"


@pytest.mark.parametrize("pw,salt,c,dk_len,expected", RFC7914)
def test_rfc7914_vectors(pw, salt, c, dk_len, expected):
    assert pbkdf2_sha256(pw, salt, c, dk_len).hex() == expected


def test_frozen_known_answer():
    derived = derive_key(FROZEN_BITS, KdfParams(FROZEN_SALT, 1000))
    assert derived.key_bytes.hex() == FROZEN_KEY


@settings(max_examples=25, deadline=None)
@given(st.binary(min_size=16, max_size=40), st.binary(min_size=16, max_size=16), st.integers(1, 50))
def test_matches_reference_loop(pw, salt, c):
    assert pbkdf2_sha256(pw, salt, c) == oracles.pbkdf2_hmac_sha256(pw, salt, c, 32)


class TestPacking:
    def test_single_byte(self):
        assert bits_to_key_material(BitString("01000001")) == b"\x41"

    def test_trailing_bits_dropped(self):
        assert bits_to_key_material(BitString("010000011111")) == b"\x41"

    def test_seven_bits_rejected(self):
        with pytest.raises(KeyMaterialError):
            bits_to_key_material(BitString("0100000"))

    @given(st.text("01", min_size=8, max_size=300))
    def test_matches_string_oracle(self, bits):
        assert bits_to_key_material(BitString(bits)) == oracles.pack_msb_first(bits)


class TestParams:
    def test_generate_fresh_salt(self):
        a, b = KdfParams.generate(), KdfParams.generate()
        assert len(a.salt) == 16 and a.salt != b.salt
        assert a.iterations == 100_000 and a.output_length == 32

    @pytest.mark.parametrize("kw", [{"salt": b"short"}, {"salt": bytes(16), "iterations": 0}, {"salt": bytes(16), "output_length": 16}])
    def test_validation(self, kw):
        with pytest.raises(ValueError):
            KdfParams(**kw)


def test_minimum_key_length():
    params = KdfParams(bytes(16), 1)
    with pytest.raises(KeyMaterialError):
        derive_key(BitString("1" * 127), params)
    assert len(derive_key(BitString("1" * 128), params).key_bytes) == 32


def test_pure_function():
    bits = generate_random_bits(256, random.Random(2))
    params = KdfParams(bytes(16), 10)
    assert derive_key(bits, params) == derive_key(bits, params)


def test_derived_key_repr_hides_bytes():
    d = derive_key(FROZEN_BITS, KdfParams(FROZEN_SALT, 1000))
    assert FROZEN_KEY not in repr(d)


def test_avalanche():
    rng = random.Random(11)
    params = KdfParams(bytes(range(16)), 10)
    flips = []
    for _ in range(100):
        bits = generate_random_bits(256, rng)
        arr = bits.array.copy()
        arr[rng.randrange(256)] ^= 1
        a = np.unpackbits(np.frombuffer(derive_key(bits, params).key_bytes, np.uint8))
        b = np.unpackbits(np.frombuffer(derive_key(BitString(arr), params).key_bytes, np.uint8))
        flips.append(int(np.count_nonzero(a != b)))
    assert sum(flips) / len(flips) >= 100
