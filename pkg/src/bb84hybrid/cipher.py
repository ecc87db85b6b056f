"""AES-256-CBC with PKCS#7 padding.

The block cipher itself comes from ``cryptography`` (OpenSSL); only the
padding and the mode plumbing live here.
"""

from __future__ import annotations

import os

from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from .errors import InternalPaddingError
from .kdf import KEY_SIZE, DerivedKey

BLOCK_SIZE = 16
IV_SIZE = 16


class PaddingError(ValueError):
    pass


def pad_pkcs7(data: bytes, block: int = BLOCK_SIZE) -> bytes:
    k = block - len(data) % block
    return bytes(data) + bytes([k]) * k


def unpad_pkcs7(data: bytes, block: int = BLOCK_SIZE) -> bytes:
    if not data or len(data) % block:
        raise PaddingError(f"padded length {len(data)} is not a positive multiple of {block}")
    k = data[-1]
    if not 1 <= k <= block:
        raise PaddingError(f"invalid pad length byte {k:#04x}")
    if data[-k:] != bytes([k]) * k:
        raise PaddingError("inconsistent pad bytes")
    return bytes(data[:-k])


def random_iv() -> bytes:
    return os.urandom(IV_SIZE)


def _key_bytes(key: DerivedKey | bytes) -> bytes:
    raw = key.key_bytes if isinstance(key, DerivedKey) else bytes(key)
    if len(raw) != KEY_SIZE:
        raise ValueError(f"AES-256 needs a {KEY_SIZE}-byte key, got {len(raw)}")
    return raw


def _check_iv(iv: bytes) -> None:
    if len(iv) != IV_SIZE:
        raise ValueError(f"IV must be {IV_SIZE} bytes, got {len(iv)}")


def encrypt_blocks(key: DerivedKey | bytes, iv: bytes, data: bytes) -> bytes:
    """Raw CBC over block-aligned data, no padding."""
    _check_iv(iv)
    if len(data) % BLOCK_SIZE:
        raise ValueError("CBC input must be block aligned")
    enc = Cipher(algorithms.AES(_key_bytes(key)), modes.CBC(iv)).encryptor()
    return enc.update(data) + enc.finalize()


def decrypt_blocks(key: DerivedKey | bytes, iv: bytes, data: bytes) -> bytes:
    _check_iv(iv)
    if len(data) % BLOCK_SIZE:
        raise ValueError("CBC input must be block aligned")
    dec = Cipher(algorithms.AES(_key_bytes(key)), modes.CBC(iv)).decryptor()
    return dec.update(data) + dec.finalize()


def encrypt(plaintext: bytes, key: DerivedKey | bytes, iv: bytes) -> bytes:
    return encrypt_blocks(key, iv, pad_pkcs7(plaintext))


def decrypt(ciphertext: bytes, key: DerivedKey | bytes, iv: bytes) -> bytes:
    """Decrypt and strip padding.

    Only call this after the integrity gate has passed.  A padding failure
    at that point is raised as :class:`InternalPaddingError`.
    """
    if not ciphertext or len(ciphertext) % BLOCK_SIZE:
        raise ValueError(f"ciphertext length {len(ciphertext)} is not a positive multiple of {BLOCK_SIZE}")
    try:
        return unpad_pkcs7(decrypt_blocks(key, iv, ciphertext))
    except PaddingError as exc:
        raise InternalPaddingError(f"padding invalid after integrity gate passed: {exc}") from exc
