from __future__ import annotations

import os

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bb84hybrid.cipher import (
    PaddingError,
    decrypt,
    decrypt_blocks,
    encrypt,
    encrypt_blocks,
    pad_pkcs7,
    random_iv,
    unpad_pkcs7,
)
from bb84hybrid.errors import InternalPaddingError

# NIST SP 800-38A, F.2.5 CBC-AES256.Encrypt
SP800_38A_KEY = bytes.fromhex("603deb1015ca71be2b73aef0857d77811f352c073b6108d72d9810a30914dff4")
SP800_38A_IV = bytes.fromhex("000102030405060708090a0b0c0d0e0f")
SP800_38A_PT = bytes.fromhex(
    "6bc1bee22e409f96e93d7e117393172a"
    "ae2d8a571e03ac9c9eb76fac45af8e51"
    "30c81c46a35ce411e5fbc1191a0a52ef"
    "f69f2445df4f9b17ad2b417be66c3710"
)
SP800_38A_CT = bytes.fromhex(
    "f58c4c04d6e5f1ba779eabfb5f7bfbd6"
    "9cfc4e967edb808d679f777bc6702c7d"
    "39f23369a9d9bacfa530e26304231461"
    "b2eb05e2c39be9fcda6c19078c6a9d1b"
)

KEY = bytes(range(32))
IV = bytes(16)


def test_nist_cbc_vector():
    assert encrypt_blocks(SP800_38A_KEY, SP800_38A_IV, SP800_38A_PT) == SP800_38A_CT
    assert decrypt_blocks(SP800_38A_KEY, SP800_38A_IV, SP800_38A_CT) == SP800_38A_PT


def test_nist_vector_through_padded_api():
    # A full extra pad block follows the four vector blocks.
    ct = encrypt(SP800_38A_PT, SP800_38A_KEY, SP800_38A_IV)
    assert ct[:64] == SP800_38A_CT and len(ct) == 80


class TestPadding:
    def test_empty(self):
        assert pad_pkcs7(b"") == b"\x10" * 16

    def test_fifteen_bytes(self):
        assert pad_pkcs7(b"a" * 15) == b"a" * 15 + b"\x01"

    @pytest.mark.parametrize("block", [b"a" * 13 + b"\x03\x03\x02", b"a" * 15 + b"\x00", b"a" * 15 + b"\x11"])
    def test_bad_padding(self, block):
        with pytest.raises(PaddingError):
            unpad_pkcs7(block)

    def test_bad_length(self):
        with pytest.raises(PaddingError):
            unpad_pkcs7(b"a" * 15)

    @given(st.binary(max_size=1024))
    def test_round_trip(self, data):
        padded = pad_pkcs7(data)
        assert len(padded) % 16 == 0 and 1 <= len(padded) - len(data) <= 16
        assert unpad_pkcs7(padded) == data


@settings(max_examples=60, deadline=None)
@given(st.binary(max_size=4096))
def test_round_trip_and_length(data):
    ct = encrypt(data, KEY, IV)
    assert len(ct) == (len(data) // 16 + 1) * 16
    assert decrypt(ct, KEY, IV) == data


def test_different_iv_different_ciphertext():
    assert encrypt(b"same", KEY, random_iv()) != encrypt(b"same", KEY, random_iv())


def test_random_iv_size():
    assert len(random_iv()) == 16


@pytest.mark.parametrize("key,iv", [(bytes(16), IV), (KEY, bytes(8))])
def test_bad_sizes(key, iv):
    with pytest.raises(ValueError):
        encrypt(b"x", key, iv)


def test_bad_ciphertext_length():
    with pytest.raises(ValueError):
        decrypt(b"x" * 17, KEY, IV)
    with pytest.raises(ValueError):
        decrypt(b"", KEY, IV)


def test_padding_failure_is_internal_error():
    ct = encrypt_blocks(KEY, IV, b"a" * 15 + b"\x00")
    with pytest.raises(InternalPaddingError):
        decrypt(ct, KEY, IV)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 7 * 128 - 1))
def test_cbc_bit_flip_damages_two_blocks(bit):
    plaintext = os.urandom(8 * 16)
    ct = bytearray(encrypt_blocks(KEY, IV, plaintext))
    ct[bit // 8] ^= 0x80 >> (bit % 8)
    out = decrypt_blocks(KEY, IV, bytes(ct))
    block = bit // 128
    damaged = {i for i in range(8) if out[16 * i : 16 * i + 16] != plaintext[16 * i : 16 * i + 16]}
    assert damaged == {block, block + 1}
    # Block i+1 differs in exactly the flipped bit position.
    diff = bytes(a ^ b for a, b in zip(out[16 * (block + 1) : 16 * (block + 2)], plaintext[16 * (block + 1) : 16 * (block + 2)]))
    assert sum(bin(x).count("1") for x in diff) == 1
